//! Pattern definitions, PCQs, instance expansion and instances of interest.
//!
//! A pattern definition P := a1 | ... | ak collects the known ways of
//! realizing one step of a transitive predicate p; every atom contains the
//! markers #1 and #2. A repeatable pattern P+[t1,t2] stands for any finite
//! chain of such steps from t1 to t2. A PCQ mixes ordinary atoms with
//! repeatable patterns and finitely represents the infinite family of its
//! full instances.

use crate::canon::{canonicalize, CanonicalForm};
use crate::model::{Atom, Cq, Fresh, Term};
use crate::unification::PSEUDO_INFIX;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("definition atom for pattern over {0} lacks a marker: {1}")]
    MissingMarker(String, Atom),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatternDef {
    /// The transitive predicate this pattern compiles to `pred__tc`.
    pub pred: String,
    /// Disjuncts; each contains #1 and #2, no two isomorphic.
    pub atoms: Vec<Atom>,
}

impl PatternDef {
    /// Adds an atom unless an isomorphic one (markers fixed) is present.
    /// Returns true when the definition grew.
    pub fn add(&mut self, atom: Atom) -> Result<bool, PatternError> {
        let has = |m: u8| atom.args.contains(&Term::Marker(m));
        if !has(1) || !has(2) {
            return Err(PatternError::MissingMarker(self.pred.clone(), atom));
        }
        let key = canonicalize(std::slice::from_ref(&atom));
        for a in &self.atoms {
            if canonicalize(std::slice::from_ref(a)) == key {
                return Ok(false);
            }
        }
        self.atoms.push(atom);
        Ok(true)
    }
}

/// The map from transitive predicates to their pattern definitions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PatternSet {
    pub defs: BTreeMap<String, PatternDef>,
}

/// One definition P := p(#1,#2) per transitive predicate.
pub fn init_pattern_set<'a>(transitive: impl Iterator<Item = &'a String>) -> PatternSet {
    let mut defs = BTreeMap::new();
    for p in transitive {
        defs.insert(
            p.clone(),
            PatternDef {
                pred: p.clone(),
                atoms: vec![Atom::new(p.clone(), vec![Term::Marker(1), Term::Marker(2)])],
            },
        );
    }
    PatternSet { defs }
}

/// A repeatable pattern P+[t1,t2], identified by its transitive predicate.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Repeatable {
    pub pred: String,
    pub t1: Term,
    pub t2: Term,
}

impl Repeatable {
    /// Stand-in atom used for canonicalization and occurrence checks.
    pub fn pseudo_atom(&self) -> Atom {
        Atom::new(
            format!("{}{}", self.pred, PSEUDO_INFIX),
            vec![self.t1.clone(), self.t2.clone()],
        )
    }

    pub fn apply(&self, sub: &BTreeMap<Term, Term>) -> Repeatable {
        Repeatable {
            pred: self.pred.clone(),
            t1: crate::model::apply_term(sub, &self.t1),
            t2: crate::model::apply_term(sub, &self.t2),
        }
    }
}

/// A conjunction-of-patterns query.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Pcq {
    pub atoms: BTreeSet<Atom>,
    pub reps: BTreeSet<Repeatable>,
}

impl Pcq {
    pub fn from_cq(q: &Cq) -> Pcq {
        Pcq { atoms: q.clone(), reps: BTreeSet::new() }
    }

    /// Number of atoms plus repeatable patterns; the quantity bounded by the
    /// modified algorithm.
    pub fn size(&self) -> usize {
        self.atoms.len() + self.reps.len()
    }

    pub fn canonical(&self) -> CanonicalForm {
        let mut all: Vec<Atom> = self.atoms.iter().cloned().collect();
        all.extend(self.reps.iter().map(|r| r.pseudo_atom()));
        canonicalize(&all)
    }

    pub fn terms(&self) -> BTreeSet<Term> {
        let mut ts: BTreeSet<Term> =
            self.atoms.iter().flat_map(|a| a.args.iter().cloned()).collect();
        for r in &self.reps {
            ts.insert(r.t1.clone());
            ts.insert(r.t2.clone());
        }
        ts
    }
}

impl std::fmt::Display for Pcq {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut first = true;
        for a in &self.atoms {
            if !first {
                write!(f, " & ")?;
            }
            write!(f, "{a}")?;
            first = false;
        }
        for r in &self.reps {
            if !first {
                write!(f, " & ")?;
            }
            write!(f, "{}+[{},{}]", r.pred, r.t1, r.t2)?;
            first = false;
        }
        Ok(())
    }
}

/// Replaces every atom over a transitive predicate by a repeatable pattern.
pub fn patternize(q: &Cq, transitive: &BTreeSet<String>) -> Pcq {
    let mut pcq = Pcq::default();
    for a in q {
        if transitive.contains(&a.pred) && a.args.len() == 2 {
            pcq.reps.insert(Repeatable {
                pred: a.pred.clone(),
                t1: a.args[0].clone(),
                t2: a.args[1].clone(),
            });
        } else {
            pcq.atoms.insert(a.clone());
        }
    }
    pcq
}

/// A chain atom produced by expanding one link of a repeatable pattern.
/// Marker positions record which argument slots came from #1 and #2, so the
/// link endpoints can be renamed precisely even when terms coincide.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkAtom {
    pub atom: Atom,
    pub rep_idx: usize,
    pub link_idx: usize,
    pub left: Term,
    pub right: Term,
    pub m1_positions: Vec<usize>,
    pub m2_positions: Vec<usize>,
}

/// A (possibly partial) instance of a PCQ: original atoms, expanded chain
/// atoms, and the repeatable patterns left unexpanded.
#[derive(Clone, Debug)]
pub struct Instance {
    pub base_atoms: Vec<Atom>,
    pub links: Vec<LinkAtom>,
    /// All repeatable patterns of the source PCQ, indexable by rep_idx.
    pub reps: Vec<Repeatable>,
    /// Indices into `reps` of the unexpanded patterns.
    pub unexpanded: Vec<usize>,
    /// (rep index, chain length) for each expanded pattern.
    pub expanded: Vec<(usize, usize)>,
}

impl Instance {
    /// Unification view: base atoms, then link atoms, then pseudo-atoms for
    /// the unexpanded patterns.
    pub fn unification_atoms(&self) -> Vec<Atom> {
        let mut v = self.base_atoms.clone();
        v.extend(self.links.iter().map(|l| l.atom.clone()));
        v.extend(self.unexpanded.iter().map(|i| self.reps[*i].pseudo_atom()));
        v
    }

    pub fn n_real_atoms(&self) -> usize {
        self.base_atoms.len() + self.links.len()
    }
}

/// Expands one repeatable pattern into a chain of definition atoms.
/// `choices[j]` is the definition atom for link j.
fn expand_chain(
    rep: &Repeatable,
    rep_idx: usize,
    choices: &[&Atom],
    fresh: &mut Fresh,
) -> Vec<LinkAtom> {
    let k = choices.len();
    let mut endpoints = Vec::with_capacity(k + 1);
    endpoints.push(rep.t1.clone());
    for _ in 1..k {
        endpoints.push(fresh.var());
    }
    endpoints.push(rep.t2.clone());
    let mut links = Vec::with_capacity(k);
    for (j, def_atom) in choices.iter().enumerate() {
        let left = endpoints[j].clone();
        let right = endpoints[j + 1].clone();
        let mut var_map: BTreeMap<Term, Term> = BTreeMap::new();
        let mut args = Vec::with_capacity(def_atom.args.len());
        let mut m1 = Vec::new();
        let mut m2 = Vec::new();
        for (pos, t) in def_atom.args.iter().enumerate() {
            match t {
                Term::Marker(1) => {
                    m1.push(pos);
                    args.push(left.clone());
                }
                Term::Marker(2) => {
                    m2.push(pos);
                    args.push(right.clone());
                }
                Term::Var(_) => {
                    let nt = var_map.entry(t.clone()).or_insert_with(|| fresh.var());
                    args.push(nt.clone());
                }
                other => args.push(other.clone()),
            }
        }
        links.push(LinkAtom {
            atom: Atom::new(def_atom.pred.clone(), args),
            rep_idx,
            link_idx: j,
            left,
            right,
            m1_positions: m1,
            m2_positions: m2,
        });
    }
    links
}

/// Instances of interest of a PCQ w.r.t. a rule whose head predicates are
/// `head_preds`. Each repeatable pattern whose definition offers atoms over a
/// head predicate is expanded into chains of those atoms, with chain length
/// bounded by min(arity, available atoms) + 2; every pattern may also stay
/// unexpanded.
pub fn instances_of_interest(
    pcq: &Pcq,
    ps: &PatternSet,
    head_preds: &BTreeSet<String>,
    fresh: &mut Fresh,
) -> Vec<Instance> {
    let reps: Vec<Repeatable> = pcq.reps.iter().cloned().collect();
    let base_atoms: Vec<Atom> = pcq.atoms.iter().cloned().collect();

    // Per repeatable pattern: the candidate definition atoms.
    let mut options: Vec<Vec<Vec<usize>>> = Vec::new(); // per rep: list of chains (def atom indices)
    let mut candidates: Vec<Vec<Atom>> = Vec::new();
    for rep in &reps {
        let def = match ps.defs.get(&rep.pred) {
            Some(d) => d,
            None => {
                options.push(vec![]);
                candidates.push(vec![]);
                continue;
            }
        };
        let cands: Vec<Atom> = def
            .atoms
            .iter()
            .filter(|a| head_preds.contains(&a.pred))
            .cloned()
            .collect();
        let n = cands.len();
        let mut chains: Vec<Vec<usize>> = Vec::new();
        if n > 0 {
            let max_arity = cands.iter().map(|a| a.args.len()).max().unwrap();
            let k_max = max_arity.min(n) + 2;
            for k in 1..=k_max {
                // All functions [0..k) -> [0..n).
                let mut choice = vec![0usize; k];
                loop {
                    chains.push(choice.clone());
                    let mut pos = k;
                    loop {
                        if pos == 0 {
                            break;
                        }
                        pos -= 1;
                        choice[pos] += 1;
                        if choice[pos] < n {
                            break;
                        }
                        choice[pos] = 0;
                    }
                    if choice.iter().all(|&c| c == 0) {
                        break;
                    }
                }
            }
        }
        options.push(chains);
        candidates.push(cands);
    }

    // Cartesian product over patterns; option index 0 means "unexpanded".
    let mut out = Vec::new();
    let mut pick = vec![0usize; reps.len()];
    loop {
        let mut inst = Instance {
            base_atoms: base_atoms.clone(),
            links: Vec::new(),
            reps: reps.clone(),
            unexpanded: Vec::new(),
            expanded: Vec::new(),
        };
        for (ri, &p) in pick.iter().enumerate() {
            if p == 0 {
                inst.unexpanded.push(ri);
            } else {
                let chain = &options[ri][p - 1];
                let choices: Vec<&Atom> =
                    chain.iter().map(|&ci| &candidates[ri][ci]).collect();
                inst.expanded.push((ri, chain.len()));
                inst.links.extend(expand_chain(&reps[ri], ri, &choices, fresh));
            }
        }
        out.push(inst);

        // Advance the product.
        let mut pos = reps.len();
        let mut done = pos == 0;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            pick[pos] += 1;
            if pick[pos] <= options[pos].len() {
                break;
            }
            pick[pos] = 0;
            if pos == 0 {
                done = true;
            }
        }
        if done || reps.is_empty() {
            break;
        }
    }
    out
}

/// All full instances where every repeatable pattern expands into at most
/// `k_max` links, each link into any definition atom; deduplicated by
/// isomorphism. Test/oracle path only.
pub fn expand_full_instances(pcq: &Pcq, ps: &PatternSet, k_max: usize, fresh: &mut Fresh) -> Vec<Cq> {
    assert!(k_max >= 1);
    let reps: Vec<Repeatable> = pcq.reps.iter().cloned().collect();
    let mut results: Vec<Cq> = Vec::new();
    let mut seen: BTreeSet<CanonicalForm> = BTreeSet::new();

    // Per-rep enumeration of chains up to k_max, then Cartesian product.
    fn chains_for(
        rep: &Repeatable,
        def: &PatternDef,
        k_max: usize,
        fresh: &mut Fresh,
    ) -> Vec<Vec<LinkAtom>> {
        let n = def.atoms.len();
        let mut out = Vec::new();
        for k in 1..=k_max {
            let mut choice = vec![0usize; k];
            loop {
                let picked: Vec<&Atom> = choice.iter().map(|&c| &def.atoms[c]).collect();
                out.push(expand_chain(rep, 0, &picked, fresh));
                let mut pos = k;
                loop {
                    if pos == 0 {
                        break;
                    }
                    pos -= 1;
                    choice[pos] += 1;
                    if choice[pos] < n {
                        break;
                    }
                    choice[pos] = 0;
                }
                if choice.iter().all(|&c| c == 0) {
                    break;
                }
            }
        }
        out
    }

    let per_rep: Vec<Vec<Vec<LinkAtom>>> = reps
        .iter()
        .map(|r| match ps.defs.get(&r.pred) {
            Some(def) => chains_for(r, def, k_max, fresh),
            None => vec![],
        })
        .collect();
    if per_rep.iter().any(|c| c.is_empty()) && !reps.is_empty() {
        return results;
    }

    let mut pick = vec![0usize; reps.len()];
    loop {
        let mut cq: Cq = pcq.atoms.clone();
        for (ri, &p) in pick.iter().enumerate() {
            for l in &per_rep[ri][p] {
                cq.insert(l.atom.clone());
            }
        }
        let key = canonicalize(&cq.iter().cloned().collect::<Vec<_>>());
        if seen.insert(key) {
            results.push(cq);
        }
        let mut pos = reps.len();
        let mut done = pos == 0;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            pick[pos] += 1;
            if pick[pos] < per_rep[pos].len() {
                break;
            }
            pick[pos] = 0;
            if pos == 0 {
                done = true;
            }
        }
        if done || reps.is_empty() {
            break;
        }
    }
    results
}
