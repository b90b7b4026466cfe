//! Rule-set classification and structural analysis: linear/transitivity
//! split, the specialization relation, the safety condition, the graph of
//! rule dependencies, and the aGRD+trans encoding.

use crate::model::{Atom, ExistentialRule, Fresh, Term};
use crate::unification::enumerate_piece_unifiers;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("input uses reserved predicate name {0}")]
    ReservedPredicate(String),
}

/// Result of splitting a rule set into linear and transitivity rules.
#[derive(Clone, Debug, Default)]
pub struct RuleSplit {
    pub linear: Vec<ExistentialRule>,
    pub transitivity: Vec<ExistentialRule>,
    /// Transitive predicates (those appearing in a transitivity rule).
    pub transitive: BTreeSet<String>,
    /// Rules fitting neither class, with reasons.
    pub rejects: Vec<(ExistentialRule, String)>,
}

pub fn is_transitivity_rule(r: &ExistentialRule) -> Option<String> {
    if r.body.len() != 2 || r.head.len() != 1 {
        return None;
    }
    let h = &r.head[0];
    let (b1, b2) = (&r.body[0], &r.body[1]);
    if h.args.len() != 2 || b1.args.len() != 2 || b2.args.len() != 2 {
        return None;
    }
    if h.pred != b1.pred || h.pred != b2.pred {
        return None;
    }
    if !h.args.iter().chain(b1.args.iter()).chain(b2.args.iter()).all(|t| t.is_var()) {
        return None;
    }
    // Match p(x,y),p(y,z) -> p(x,z) in either body order.
    let matches = |first: &Atom, second: &Atom| {
        let (x, y) = (&first.args[0], &first.args[1]);
        let (y2, z) = (&second.args[0], &second.args[1]);
        y == y2
            && h.args[0] == *x
            && h.args[1] == *z
            && x != y
            && y != z
            && x != z
    };
    if matches(b1, b2) || matches(b2, b1) {
        Some(h.pred.clone())
    } else {
        None
    }
}

pub fn split_rules(rules: &[ExistentialRule]) -> RuleSplit {
    let mut split = RuleSplit::default();
    for r in rules {
        if let Some(p) = is_transitivity_rule(r) {
            split.transitive.insert(p);
            split.transitivity.push(r.clone());
            continue;
        }
        if r.body.len() != 1 {
            split
                .rejects
                .push((r.clone(), "body is not a single atom and rule is not a transitivity rule".into()));
            continue;
        }
        let has_const = r
            .body
            .iter()
            .chain(r.head.iter())
            .any(|a| a.args.iter().any(|t| t.is_const()));
        if has_const {
            split.rejects.push((r.clone(), "linear rules must not contain constants".into()));
            continue;
        }
        split.linear.push(r.clone());
    }
    split
}

/// q is a specialization of `target` on the disjoint position pair {i_set, j_set}
/// (1-based positions into q's argument list).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Specialization {
    pub pred: String,
    pub target: String,
    pub i_set: BTreeSet<usize>,
    pub j_set: BTreeSet<usize>,
}

/// Least fixpoint of the direct and propagated specialization clauses,
/// computed w.r.t. all binary target predicates.
pub fn compute_specializations(split: &RuleSplit) -> BTreeSet<Specialization> {
    let mut specs: BTreeSet<Specialization> = BTreeSet::new();
    // Direct: q(u) -> p(x,y) with x, y distinct frontier variables.
    for r in &split.linear {
        if r.head.len() != 1 || r.head[0].args.len() != 2 {
            continue;
        }
        let h = &r.head[0];
        let b = &r.body[0];
        let (x, y) = (&h.args[0], &h.args[1]);
        if x == y {
            // Repeated head variable: I and J would coincide, so no entry.
            continue;
        }
        let pos_of = |t: &Term| -> BTreeSet<usize> {
            b.args
                .iter()
                .enumerate()
                .filter(|(_, u)| *u == t)
                .map(|(i, _)| i + 1)
                .collect()
        };
        let i_set = pos_of(x);
        let j_set = pos_of(y);
        if i_set.is_empty() || j_set.is_empty() {
            continue;
        }
        specs.insert(Specialization {
            pred: b.pred.clone(),
            target: h.pred.clone(),
            i_set,
            j_set,
        });
    }
    // Propagation through q(u) -> r(v).
    loop {
        let mut added = false;
        for r in &split.linear {
            if r.head.len() != 1 {
                continue;
            }
            let h = &r.head[0];
            let b = &r.body[0];
            let existing: Vec<Specialization> =
                specs.iter().filter(|s| s.pred == h.pred).cloned().collect();
            for s in existing {
                if s.i_set.iter().chain(s.j_set.iter()).any(|&p| p > h.args.len()) {
                    continue;
                }
                let project = |set: &BTreeSet<usize>| -> BTreeSet<usize> {
                    let mut out = BTreeSet::new();
                    for &p in set {
                        let t = &h.args[p - 1];
                        for (bi, u) in b.args.iter().enumerate() {
                            if u == t {
                                out.insert(bi + 1);
                            }
                        }
                    }
                    out
                };
                let i_set = project(&s.i_set);
                let j_set = project(&s.j_set);
                if i_set.is_empty() || j_set.is_empty() || !i_set.is_disjoint(&j_set) {
                    continue;
                }
                let cand = Specialization {
                    pred: b.pred.clone(),
                    target: s.target.clone(),
                    i_set,
                    j_set,
                };
                if specs.insert(cand) {
                    added = true;
                }
            }
        }
        if !added {
            return specs;
        }
    }
}

/// Safety verdict: for each pseudo-transitive predicate, a crosswise position
/// pair covering all of its specializations onto transitive predicates.
#[derive(Clone, Debug, Serialize)]
pub struct SafetyVerdict {
    pub safe: bool,
    /// predicate -> chosen (i, j) witness; present for every pseudo-transitive
    /// predicate when safe.
    pub witness: BTreeMap<String, (usize, usize)>,
    pub pseudo_transitive: BTreeSet<String>,
}

pub fn is_safe(split: &RuleSplit) -> SafetyVerdict {
    let specs = compute_specializations(split);
    let relevant: Vec<&Specialization> = specs
        .iter()
        .filter(|s| split.transitive.contains(&s.target))
        .collect();
    let pseudo: BTreeSet<String> = relevant.iter().map(|s| s.pred.clone()).collect();
    let mut witness = BTreeMap::new();
    let mut safe = true;
    for q in &pseudo {
        let q_specs: Vec<&&Specialization> =
            relevant.iter().filter(|s| s.pred == *q).collect();
        let max_pos = q_specs
            .iter()
            .flat_map(|s| s.i_set.iter().chain(s.j_set.iter()))
            .max()
            .cloned()
            .unwrap_or(0);
        let mut found = None;
        'pairs: for i in 1..=max_pos {
            for j in 1..=max_pos {
                if i == j {
                    continue;
                }
                let covers = q_specs.iter().all(|s| {
                    (s.i_set.contains(&i) && s.j_set.contains(&j))
                        || (s.j_set.contains(&i) && s.i_set.contains(&j))
                });
                if covers {
                    found = Some((i, j));
                    break 'pairs;
                }
            }
        }
        match found {
            Some(pair) => {
                witness.insert(q.clone(), pair);
            }
            None => safe = false,
        }
    }
    SafetyVerdict { safe, witness, pseudo_transitive: pseudo }
}

/// Graph of rule dependencies: edge i -> j when rule j's body piece-unifies
/// with rule i's head.
#[derive(Clone, Debug, Serialize)]
pub struct DependencyGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

impl DependencyGraph {
    pub fn is_acyclic(&self) -> bool {
        // Kahn's algorithm.
        let mut indeg = vec![0usize; self.n];
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            indeg[b] += 1;
            adj[a].push(b);
        }
        let mut queue: Vec<usize> =
            (0..self.n).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop() {
            seen += 1;
            for &w in &adj[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    queue.push(w);
                }
            }
        }
        seen == self.n
    }

    pub fn longest_path(&self) -> usize {
        // Only meaningful for acyclic graphs; walks memoized depth.
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
        }
        let mut memo = vec![None; self.n];
        fn depth(v: usize, adj: &[Vec<usize>], memo: &mut Vec<Option<usize>>) -> usize {
            if let Some(d) = memo[v] {
                return d;
            }
            let d = adj[v].iter().map(|&w| 1 + depth(w, adj, memo)).max().unwrap_or(0);
            memo[v] = Some(d);
            d
        }
        (0..self.n).map(|v| depth(v, &adj, &mut memo)).max().unwrap_or(0)
    }
}

pub fn build_grd(rules: &[ExistentialRule]) -> DependencyGraph {
    let mut fresh = Fresh::new();
    for r in rules {
        if let Some(m) = r.max_var() {
            fresh.reserve(m);
        }
    }
    let mut edges = Vec::new();
    for (i, r1) in rules.iter().enumerate() {
        for (j, r2) in rules.iter().enumerate() {
            let r1f = r1.freshened(&mut fresh);
            let body: Vec<Atom> = r2.body.clone();
            if !enumerate_piece_unifiers(&body, &r1f).is_empty() {
                edges.push((i, j));
            }
        }
    }
    DependencyGraph { n: rules.len(), edges }
}

pub fn is_agrd(rules: &[ExistentialRule]) -> bool {
    build_grd(rules).is_acyclic()
}

/// The aGRD+trans encoding: each rule B -> H becomes
/// B -> a_i(x,z1) & p(z1,z2) & p(z2,z3) & b_i(z3) and
/// a_i(x,z1) & p(z1,z2) & b_i(z2) -> H, where x lists the body variables and
/// the z's are existential in the first rule; p is the transitive predicate.
pub struct TransEncoding {
    pub rules: Vec<ExistentialRule>,
    pub transitive_pred: String,
    /// Indices of the R1 (resp. R2) rules in `rules`.
    pub r1_indices: Vec<usize>,
    pub r2_indices: Vec<usize>,
}

pub fn agrd_trans_encode(rules: &[ExistentialRule]) -> Result<TransEncoding, AnalysisError> {
    let mut reserved: BTreeSet<String> = BTreeSet::new();
    reserved.insert("p".into());
    for i in 1..=rules.len() {
        reserved.insert(format!("a{i}"));
        reserved.insert(format!("b{i}"));
    }
    for r in rules {
        for a in r.body.iter().chain(r.head.iter()) {
            if reserved.contains(&a.pred) {
                return Err(AnalysisError::ReservedPredicate(a.pred.clone()));
            }
        }
    }
    let mut fresh = Fresh::new();
    for r in rules {
        if let Some(m) = r.max_var() {
            fresh.reserve(m);
        }
    }
    let mut out = Vec::new();
    let mut r1_indices = Vec::new();
    let mut r2_indices = Vec::new();
    for (i, r) in rules.iter().enumerate() {
        let n = i + 1;
        // Body variables in order of first occurrence.
        let mut xs: Vec<Term> = Vec::new();
        for a in &r.body {
            for v in a.vars() {
                if !xs.contains(&Term::Var(v)) {
                    xs.push(Term::Var(v));
                }
            }
        }
        let z1 = fresh.var();
        let z2 = fresh.var();
        let z3 = fresh.var();
        let mut a_args = xs.clone();
        a_args.push(z1.clone());
        let r1 = ExistentialRule::new(
            r.body.clone(),
            vec![
                Atom::new(format!("a{n}"), a_args.clone()),
                Atom::new("p", vec![z1.clone(), z2.clone()]),
                Atom::new("p", vec![z2.clone(), z3.clone()]),
                Atom::new(format!("b{n}"), vec![z3.clone()]),
            ],
        );
        let r2 = ExistentialRule::new(
            vec![
                Atom::new(format!("a{n}"), a_args),
                Atom::new("p", vec![z1.clone(), z2.clone()]),
                Atom::new(format!("b{n}"), vec![z2.clone()]),
            ],
            r.head.clone(),
        );
        r1_indices.push(out.len());
        out.push(r1);
        r2_indices.push(out.len());
        out.push(r2);
    }
    Ok(TransEncoding {
        rules: out,
        transitive_pred: "p".into(),
        r1_indices,
        r2_indices,
    })
}

/// The transitivity rule for `p`, with fresh variables.
pub fn transitivity_rule(p: &str, fresh: &mut Fresh) -> ExistentialRule {
    let x = fresh.var();
    let y = fresh.var();
    let z = fresh.var();
    ExistentialRule::new(
        vec![
            Atom::new(p, vec![x.clone(), y.clone()]),
            Atom::new(p, vec![y.clone(), z.clone()]),
        ],
        vec![Atom::new(p, vec![x, z])],
    )
}
