//! Datalog translation of a saturated pattern set, fact-base saturation, and
//! CQ evaluation over the saturated base.
//!
//! Each pattern definition P over a transitive predicate p compiles to the
//! rules a_i -> p__tc(#1,#2) plus the transitivity rule for p__tc. The
//! program is non-recursive except for those transitivity rules, so
//! saturation is one breadth-first pass of the definition rules followed by a
//! per-predicate transitive closure.

use crate::canon::CanonicalForm;
use crate::model::{Atom, Cq, ExistentialRule, FactBase, Term};
use crate::patterns::{PatternSet, Pcq};
use crate::rewriter::{rewrite, RewriteError, RewriterConfig};
use std::collections::{BTreeMap, BTreeSet};

/// Suffix of the closure predicate for a transitive predicate p. The input
/// grammar rejects identifiers containing a double underscore, so p__tc can
/// never collide with a user predicate.
pub const TC_SUFFIX: &str = "__tc";

pub fn tc_pred(p: &str) -> String {
    format!("{p}{TC_SUFFIX}")
}

/// A Datalog rule: no existential variables, single-atom head.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct DatalogRule {
    pub body: Vec<Atom>,
    pub head: Atom,
}

impl std::fmt::Display for DatalogRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // Variables renamed by first occurrence, head first, so that rules
        // print identically regardless of internal numbering.
        let mut names: BTreeMap<Term, String> = BTreeMap::new();
        let mut atoms: Vec<&Atom> = vec![&self.head];
        atoms.extend(self.body.iter());
        for a in &atoms {
            for t in &a.args {
                if t.is_var() && !names.contains_key(t) {
                    let n = names.len();
                    names.insert(t.clone(), format!("V{n}"));
                }
            }
        }
        let show = |a: &Atom| -> String {
            let args: Vec<String> = a
                .args
                .iter()
                .map(|t| match t {
                    Term::Var(_) => names[t].clone(),
                    other => other.to_string(),
                })
                .collect();
            format!("{}({})", a.pred, args.join(","))
        };
        write!(f, "{} :- ", show(&self.head))?;
        let body: Vec<String> = self.body.iter().map(|a| show(a)).collect();
        write!(f, "{}.", body.join(", "))
    }
}

#[derive(Clone, Debug, Default)]
pub struct DatalogProgram {
    pub rules: Vec<DatalogRule>,
    /// Closure predicates, one per transitive predicate.
    pub tc_preds: BTreeSet<String>,
}

impl DatalogProgram {
    /// One rule per line, canonically sorted.
    pub fn emit(&self) -> String {
        let mut lines: Vec<String> = self.rules.iter().map(|r| r.to_string()).collect();
        lines.sort();
        lines.join("\n")
    }
}

/// Step 6 for the pattern set: definition rules plus transitivity rules.
pub fn translate_pattern_set(ps: &PatternSet) -> DatalogProgram {
    let mut prog = DatalogProgram::default();
    for (p, def) in &ps.defs {
        let tc = tc_pred(p);
        prog.tc_preds.insert(tc.clone());
        let (x, y, z) = (Term::Var(0), Term::Var(1), Term::Var(2));
        prog.rules.push(DatalogRule {
            body: vec![
                Atom::new(tc.clone(), vec![x.clone(), y.clone()]),
                Atom::new(tc.clone(), vec![y.clone(), z.clone()]),
            ],
            head: Atom::new(tc.clone(), vec![x.clone(), z.clone()]),
        });
        for a in &def.atoms {
            // Markers become the head variables; definition variables are
            // renumbered above them.
            let mut map: BTreeMap<Term, Term> = BTreeMap::new();
            map.insert(Term::Marker(1), Term::Var(0));
            map.insert(Term::Marker(2), Term::Var(1));
            let mut next = 2u32;
            let mut args = Vec::with_capacity(a.args.len());
            for t in &a.args {
                let mapped = match t {
                    Term::Const(_) => t.clone(),
                    other => map
                        .entry(other.clone())
                        .or_insert_with(|| {
                            let v = Term::Var(next);
                            next += 1;
                            v
                        })
                        .clone(),
                };
                args.push(mapped);
            }
            prog.rules.push(DatalogRule {
                body: vec![Atom::new(a.pred.clone(), args)],
                head: Atom::new(tc.clone(), vec![Term::Var(0), Term::Var(1)]),
            });
        }
    }
    prog
}

/// Step 6 for the query set: repeatable patterns become p__tc atoms;
/// deduplicated by isomorphism.
pub fn translate_queries(pcqs: &[Pcq]) -> Vec<Cq> {
    let mut seen: BTreeSet<CanonicalForm> = BTreeSet::new();
    let mut out = Vec::new();
    for pcq in pcqs {
        let mut cq: Cq = pcq.atoms.clone();
        for r in &pcq.reps {
            cq.insert(Atom::new(tc_pred(&r.pred), vec![r.t1.clone(), r.t2.clone()]));
        }
        let key = crate::canon::canonicalize(&cq.iter().cloned().collect::<Vec<_>>());
        if seen.insert(key) {
            out.push(cq);
        }
    }
    out
}

/// Least fixpoint of `prog` over `f`: one pass of the definition rules, then
/// worklist transitive closure per closure predicate.
pub fn saturate(f: &FactBase, prog: &DatalogProgram) -> FactBase {
    let mut out = f.clone();
    for rule in &prog.rules {
        if rule.body.len() != 1 {
            continue;
        }
        for sub in homomorphisms(&rule.body, &out) {
            out.insert(rule.head.apply(&sub));
        }
    }
    for tc in &prog.tc_preds {
        // Right-linear recursion tc(x,z) <- tc(x,y), step(y,z) over the
        // single-step edges: same closure, quadratic on chains.
        let mut step: BTreeMap<Term, BTreeSet<Term>> = BTreeMap::new();
        let mut worklist: Vec<(Term, Term)> = Vec::new();
        for a in out.facts.iter().filter(|a| a.pred == *tc) {
            let (x, y) = (a.args[0].clone(), a.args[1].clone());
            step.entry(x.clone()).or_default().insert(y.clone());
            worklist.push((x, y));
        }
        let mut known: BTreeSet<(Term, Term)> = worklist.iter().cloned().collect();
        while let Some((x, y)) = worklist.pop() {
            if let Some(zs) = step.get(&y) {
                for z in zs {
                    let pair = (x.clone(), z.clone());
                    if known.insert(pair.clone()) {
                        worklist.push(pair);
                    }
                }
            }
        }
        for (x, y) in known {
            out.insert(Atom::new(tc.clone(), vec![x, y]));
        }
    }
    out
}

fn match_atom(
    atom: &Atom,
    fact: &Atom,
    sub: &BTreeMap<Term, Term>,
) -> Option<BTreeMap<Term, Term>> {
    if atom.pred != fact.pred || atom.args.len() != fact.args.len() {
        return None;
    }
    let mut ext = sub.clone();
    for (t, v) in atom.args.iter().zip(fact.args.iter()) {
        match t {
            Term::Var(_) => match ext.get(t) {
                Some(bound) if bound != v => return None,
                Some(_) => {}
                None => {
                    ext.insert(t.clone(), v.clone());
                }
            },
            other if other == v => {}
            _ => return None,
        }
    }
    Some(ext)
}

fn by_pred(f: &FactBase) -> BTreeMap<&str, Vec<&Atom>> {
    let mut idx: BTreeMap<&str, Vec<&Atom>> = BTreeMap::new();
    for a in &f.facts {
        idx.entry(a.pred.as_str()).or_default().push(a);
    }
    idx
}

/// Number of facts matching `atom` under `sub`; drives the atom ordering.
fn candidate_count(
    atom: &Atom,
    idx: &BTreeMap<&str, Vec<&Atom>>,
    sub: &BTreeMap<Term, Term>,
) -> usize {
    idx.get(atom.pred.as_str())
        .map_or(0, |fs| fs.iter().filter(|f| match_atom(atom, f, sub).is_some()).count())
}

/// True iff a homomorphism (constants and nulls fixed) maps `q` into `f`.
pub fn evaluate_cq(q: &Cq, f: &FactBase) -> bool {
    let idx = by_pred(f);
    let atoms: Vec<Atom> = q.iter().cloned().collect();
    fn solve(
        remaining: &[usize],
        atoms: &[Atom],
        idx: &BTreeMap<&str, Vec<&Atom>>,
        sub: &BTreeMap<Term, Term>,
    ) -> bool {
        if remaining.is_empty() {
            return true;
        }
        // Most constrained atom first.
        let (pos, &ai) = remaining
            .iter()
            .enumerate()
            .min_by_key(|(_, &ai)| candidate_count(&atoms[ai], idx, sub))
            .unwrap();
        let rest: Vec<usize> = remaining
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != pos)
            .map(|(_, &a)| a)
            .collect();
        if let Some(fs) = idx.get(atoms[ai].pred.as_str()) {
            for fact in fs {
                if let Some(ext) = match_atom(&atoms[ai], fact, sub) {
                    if solve(&rest, atoms, idx, &ext) {
                        return true;
                    }
                }
            }
        }
        false
    }
    let all: Vec<usize> = (0..atoms.len()).collect();
    solve(&all, &atoms, &idx, &BTreeMap::new())
}

/// All homomorphisms of `body` into `f`, in lexicographic order of the
/// substitutions. Used by the chase and by naive-evaluation oracles.
pub fn homomorphisms(body: &[Atom], f: &FactBase) -> Vec<BTreeMap<Term, Term>> {
    let idx = by_pred(f);
    let mut out = Vec::new();
    fn walk(
        pos: usize,
        body: &[Atom],
        idx: &BTreeMap<&str, Vec<&Atom>>,
        sub: &BTreeMap<Term, Term>,
        out: &mut Vec<BTreeMap<Term, Term>>,
    ) {
        if pos == body.len() {
            out.push(sub.clone());
            return;
        }
        if let Some(fs) = idx.get(body[pos].pred.as_str()) {
            for fact in fs {
                if let Some(ext) = match_atom(&body[pos], fact, sub) {
                    walk(pos + 1, body, idx, &ext, out);
                }
            }
        }
    }
    walk(0, body, &idx, &BTreeMap::new(), &mut out);
    out.sort();
    out.dedup();
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Yes,
    No,
    Unknown,
}

impl std::fmt::Display for Answer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Answer::Yes => write!(f, "yes"),
            Answer::No => write!(f, "no"),
            Answer::Unknown => write!(f, "unknown"),
        }
    }
}

/// Full pipeline: rewrite, translate, saturate, evaluate each UCQ member.
pub fn entails(
    f: &FactBase,
    rules: &[ExistentialRule],
    q: &Cq,
    config: &RewriterConfig,
) -> Result<Answer, RewriteError> {
    let out = rewrite(q, rules, config)?;
    let prog = translate_pattern_set(&out.pattern_set);
    let ucq = translate_queries(&out.pcqs);
    let sat = saturate(f, &prog);
    if ucq.iter().any(|cq| evaluate_cq(cq, &sat)) {
        return Ok(Answer::Yes);
    }
    if out.complete {
        Ok(Answer::No)
    } else {
        Ok(Answer::Unknown)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Fresh;
    use crate::patterns::init_pattern_set;

    fn v(n: u32) -> Term {
        Term::Var(n)
    }
    fn c(s: &str) -> Term {
        Term::Const(s.into())
    }
    fn m(k: u8) -> Term {
        Term::Marker(k)
    }

    fn facts(atoms: &[Atom]) -> FactBase {
        let mut f = FactBase::new();
        for a in atoms {
            f.insert(a.clone());
        }
        f
    }

    #[test]
    fn initial_pattern_translation() {
        let ps = init_pattern_set(["p".to_string()].iter());
        let prog = translate_pattern_set(&ps);
        let emitted = prog.emit();
        assert!(emitted.contains("p__tc(V0,V1) :- p(V0,V1)."));
        assert!(emitted.contains("p__tc(V0,V1) :- p__tc(V0,V2), p__tc(V2,V1)."));
        assert_eq!(prog.rules.len(), 2);
    }

    #[test]
    fn marker_orientation_in_translation() {
        // r(#2,w,#1) in P_p's definition reads as r(y,w,x) -> p__tc(x,y).
        let mut ps = init_pattern_set(["p".to_string()].iter());
        ps.defs
            .get_mut("p")
            .unwrap()
            .add(Atom::new("r", vec![m(2), v(0), m(1)]))
            .unwrap();
        let prog = translate_pattern_set(&ps);
        assert!(prog.emit().contains("p__tc(V0,V1) :- r(V1,V2,V0)."));
    }

    #[test]
    fn translate_queries_replaces_patterns() {
        use crate::patterns::Repeatable;
        let pcq = Pcq {
            atoms: [Atom::new("s1", vec![c("a"), v(0)])].into_iter().collect(),
            reps: [Repeatable { pred: "p2".into(), t1: c("a"), t2: c("b") }]
                .into_iter()
                .collect(),
        };
        let out = translate_queries(&[pcq]);
        assert_eq!(out.len(), 1);
        assert!(out[0].contains(&Atom::new("p2__tc", vec![c("a"), c("b")])));
    }

    #[test]
    fn translate_queries_dedups_isomorphic() {
        let a = Pcq {
            atoms: [Atom::new("s", vec![v(0), v(1)])].into_iter().collect(),
            reps: BTreeSet::new(),
        };
        let b = Pcq {
            atoms: [Atom::new("s", vec![v(7), v(3)])].into_iter().collect(),
            reps: BTreeSet::new(),
        };
        assert_eq!(translate_queries(&[a, b]).len(), 1);
    }

    #[test]
    fn saturate_computes_closure() {
        let ps = init_pattern_set(["p".to_string()].iter());
        let prog = translate_pattern_set(&ps);
        let f = facts(&[
            Atom::new("p", vec![c("a"), c("b")]),
            Atom::new("p", vec![c("b"), c("c")]),
        ]);
        let sat = saturate(&f, &prog);
        for (x, y) in [("a", "b"), ("b", "c"), ("a", "c")] {
            assert!(sat.facts.contains(&Atom::new("p__tc", vec![c(x), c(y)])));
        }
        assert_eq!(sat.len(), 5);
    }

    #[test]
    fn saturate_empty_is_empty() {
        let ps = init_pattern_set(["p".to_string()].iter());
        let prog = translate_pattern_set(&ps);
        assert!(saturate(&FactBase::new(), &prog).is_empty());
    }

    #[test]
    fn saturate_mixed_definition_atoms() {
        // P_p := p(#1,#2) | s(#1,#2); F = {s(a,b), p(b,c)} closes to
        // p__tc(a,c).
        let mut ps = init_pattern_set(["p".to_string()].iter());
        ps.defs
            .get_mut("p")
            .unwrap()
            .add(Atom::new("s", vec![m(1), m(2)]))
            .unwrap();
        let prog = translate_pattern_set(&ps);
        let f = facts(&[
            Atom::new("s", vec![c("a"), c("b")]),
            Atom::new("p", vec![c("b"), c("c")]),
        ]);
        let sat = saturate(&f, &prog);
        assert!(sat.facts.contains(&Atom::new("p__tc", vec![c("a"), c("c")])));
    }

    #[test]
    fn saturate_equals_naive_fixpoint() {
        let mut ps = init_pattern_set(["p".to_string(), "q".to_string()].iter());
        ps.defs
            .get_mut("p")
            .unwrap()
            .add(Atom::new("r", vec![m(2), v(0), m(1)]))
            .unwrap();
        let prog = translate_pattern_set(&ps);
        let f = facts(&[
            Atom::new("r", vec![c("a"), c("x"), c("b")]),
            Atom::new("p", vec![c("a"), c("c")]),
            Atom::new("q", vec![c("c"), c("a")]),
            Atom::new("q", vec![c("a"), c("d")]),
        ]);
        let sat = saturate(&f, &prog);
        // Naive bottom-up evaluation of the same program.
        let mut naive = f.clone();
        loop {
            let mut added = false;
            for rule in &prog.rules {
                for sub in homomorphisms(&rule.body, &naive) {
                    added |= naive.insert(rule.head.apply(&sub));
                }
            }
            if !added {
                break;
            }
        }
        assert_eq!(sat.facts, naive.facts);
    }

    #[test]
    fn saturate_adds_only_tc_atoms() {
        let ps = init_pattern_set(["p".to_string()].iter());
        let prog = translate_pattern_set(&ps);
        let f = facts(&[Atom::new("p", vec![c("a"), c("b")])]);
        let sat = saturate(&f, &prog);
        for a in &sat.facts {
            assert!(f.facts.contains(a) || a.pred.ends_with(TC_SUFFIX));
        }
    }

    #[test]
    fn evaluate_two_cycle() {
        let f = facts(&[
            Atom::new("p", vec![c("a"), c("b")]),
            Atom::new("p", vec![c("b"), c("a")]),
        ]);
        let q: Cq = [
            Atom::new("p", vec![v(0), v(1)]),
            Atom::new("p", vec![v(1), v(0)]),
        ]
        .into_iter()
        .collect();
        assert!(evaluate_cq(&q, &f));
    }

    #[test]
    fn evaluate_respects_constants() {
        let f = facts(&[Atom::new("p", vec![c("b"), c("a")])]);
        let q: Cq = [Atom::new("p", vec![c("a"), c("b")])].into_iter().collect();
        assert!(!evaluate_cq(&q, &f));
    }

    #[test]
    fn evaluate_example1_rewriting() {
        let f = facts(&[
            Atom::new("h", vec![c("a")]),
            Atom::new("q", vec![c("a")]),
            Atom::new("r", vec![c("a")]),
        ]);
        let q: Cq = [
            Atom::new("h", vec![v(0)]),
            Atom::new("q", vec![v(0)]),
            Atom::new("r", vec![v(0)]),
        ]
        .into_iter()
        .collect();
        assert!(evaluate_cq(&q, &f));
    }

    #[test]
    fn entails_transitive_reachability() {
        let mut fr = Fresh::new();
        fr.reserve(10);
        let rules = vec![crate::analysis::transitivity_rule("p", &mut fr)];
        let f = facts(&[
            Atom::new("p", vec![c("a"), c("b")]),
            Atom::new("p", vec![c("b"), c("c")]),
        ]);
        let q: Cq = [Atom::new("p", vec![c("a"), c("c")])].into_iter().collect();
        assert_eq!(entails(&f, &rules, &q, &RewriterConfig::default()).unwrap(), Answer::Yes);
        let q2: Cq = [Atom::new("p", vec![c("c"), c("a")])].into_iter().collect();
        assert_eq!(entails(&f, &rules, &q2, &RewriterConfig::default()).unwrap(), Answer::No);
    }

    #[test]
    fn entails_example1() {
        let rules = vec![ExistentialRule::new(
            vec![Atom::new("h", vec![v(10)])],
            vec![Atom::new("p", vec![v(10), v(11)])],
        )];
        let f = facts(&[
            Atom::new("h", vec![c("a")]),
            Atom::new("q", vec![c("a")]),
            Atom::new("r", vec![c("a")]),
        ]);
        let q: Cq = [
            Atom::new("q", vec![v(0)]),
            Atom::new("p", vec![v(0), v(1)]),
            Atom::new("p", vec![v(2), v(1)]),
            Atom::new("r", vec![v(2)]),
        ]
        .into_iter()
        .collect();
        assert_eq!(entails(&f, &rules, &q, &RewriterConfig::default()).unwrap(), Answer::Yes);
    }
}
