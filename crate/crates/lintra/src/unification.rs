//! Admissible term partitions, single-piece unifier enumeration, and the
//! classical direct rewriting step.
//!
//! A piece-unifier of a query Q with a rule B -> H is a triple
//! (Q', H', partition) such that the partition unifies Q' with H' atom-wise
//! and every class containing an existential variable of the rule otherwise
//! contains only variables of Q' that do not occur in Q \ Q'. Enumeration
//! seeds a candidate from each unifiable (query atom, head atom) pair and
//! closes it under the forced-extension rule, which yields exactly the
//! single-piece unifiers.

use crate::canon::canonicalize;
use crate::model::{freshen_atoms, Atom, Cq, ExistentialRule, Fresh, Term};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum UnifyError {
    #[error("partition merges two distinct constants: {0} and {1}")]
    TwoConstants(Term, Term),
}

/// Disjoint classes of terms. Classes are materialized because the
/// condition-2 checks inspect whole classes, not just equivalence queries.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Partition {
    classes: Vec<BTreeSet<Term>>,
}

impl Partition {
    pub fn new() -> Self {
        Partition::default()
    }

    pub fn classes(&self) -> &[BTreeSet<Term>] {
        &self.classes
    }

    fn find(&self, t: &Term) -> Option<usize> {
        self.classes.iter().position(|c| c.contains(t))
    }

    /// Merges the classes of `a` and `b`, creating singletons as needed.
    pub fn merge(&mut self, a: &Term, b: &Term) {
        match (self.find(a), self.find(b)) {
            (None, None) => {
                let mut c = BTreeSet::new();
                c.insert(a.clone());
                c.insert(b.clone());
                self.classes.push(c);
            }
            (Some(i), None) => {
                self.classes[i].insert(b.clone());
            }
            (None, Some(j)) => {
                self.classes[j].insert(a.clone());
            }
            (Some(i), Some(j)) if i != j => {
                let c = self.classes.remove(j.max(i));
                let keep = j.min(i);
                self.classes[keep].extend(c);
            }
            _ => {}
        }
    }

    pub fn same(&self, a: &Term, b: &Term) -> bool {
        a == b || matches!((self.find(a), self.find(b)), (Some(i), Some(j)) if i == j)
    }

    pub fn class_of(&self, t: &Term) -> Option<&BTreeSet<Term>> {
        self.find(t).map(|i| &self.classes[i])
    }

    /// No class may contain two distinct constants.
    pub fn admissible(&self) -> bool {
        self.classes.iter().all(|c| c.iter().filter(|t| t.is_const()).count() <= 1)
    }

    /// Class representative: least term, so constants take priority, then
    /// markers, then the lowest-numbered variable.
    pub fn substitution(&self) -> Result<BTreeMap<Term, Term>, UnifyError> {
        let mut sub = BTreeMap::new();
        for class in &self.classes {
            let consts: Vec<&Term> = class.iter().filter(|t| t.is_const()).collect();
            if consts.len() > 1 {
                return Err(UnifyError::TwoConstants(consts[0].clone(), consts[1].clone()));
            }
            let rep = class.iter().next().expect("nonempty class").clone();
            for t in class {
                if *t != rep {
                    sub.insert(t.clone(), rep.clone());
                }
            }
        }
        Ok(sub)
    }

    /// Set-of-sets view, for extensional deduplication.
    pub fn as_set(&self) -> BTreeSet<BTreeSet<Term>> {
        self.classes.iter().cloned().collect()
    }
}

/// A single-piece unifier. `pairs` maps indices of query atoms to indices of
/// head atoms; the rule itself is owned by the caller.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PieceUnifier {
    pub pairs: Vec<(usize, usize)>,
    pub partition: Partition,
}

impl PieceUnifier {
    pub fn q_indices(&self) -> BTreeSet<usize> {
        self.pairs.iter().map(|(q, _)| *q).collect()
    }
    pub fn h_indices(&self) -> BTreeSet<usize> {
        self.pairs.iter().map(|(_, h)| *h).collect()
    }
}

/// Predicates carrying this infix are stand-ins for unexpanded repeatable
/// patterns; they never unify but their terms count as occurring in the query.
pub const PSEUDO_INFIX: &str = "__plus";

fn is_pseudo(pred: &str) -> bool {
    pred.ends_with(PSEUDO_INFIX)
}

fn mergeable(q: &Atom, h: &Atom) -> bool {
    q.pred == h.pred && q.args.len() == h.args.len() && !is_pseudo(&q.pred)
}

/// Checks the existential-class conditions over a candidate and reports the
/// first query variable that forces an extension, if any.
enum ClassCheck {
    Ok,
    Dead,
    /// A query variable in an existential class occurs in this atom outside
    /// the current piece.
    Extend(usize),
}

fn check_candidate(
    query: &[Atom],
    existentials: &BTreeSet<Term>,
    pairs: &[(usize, usize)],
    partition: &Partition,
) -> ClassCheck {
    if !partition.admissible() {
        return ClassCheck::Dead;
    }
    let piece: BTreeSet<usize> = pairs.iter().map(|(q, _)| *q).collect();
    for class in partition.classes() {
        let n_exist = class.iter().filter(|t| existentials.contains(t)).count();
        if n_exist == 0 {
            continue;
        }
        if n_exist > 1 {
            return ClassCheck::Dead;
        }
        for t in class {
            if existentials.contains(t) {
                continue;
            }
            // Only variables of the query may share a class with an
            // existential variable; constants and other rule variables kill
            // the candidate.
            let occurs_in_query =
                query.iter().any(|a| a.args.contains(t));
            if !t.is_var() || !occurs_in_query {
                return ClassCheck::Dead;
            }
            for (i, a) in query.iter().enumerate() {
                if !piece.contains(&i) && a.args.contains(t) {
                    if is_pseudo(&a.pred) {
                        return ClassCheck::Dead;
                    }
                    return ClassCheck::Extend(i);
                }
            }
        }
    }
    ClassCheck::Ok
}

/// True when (pairs, partition) is a complete piece over `query`: admissible,
/// existential classes well-formed, and no forced extension pending. Used to
/// re-validate remapped unifiers on minimally-unifiable instances.
pub fn candidate_is_closed_piece(
    query: &[Atom],
    existentials: &BTreeSet<Term>,
    pairs: &[(usize, usize)],
    partition: &Partition,
) -> bool {
    matches!(
        check_candidate(query, existentials, pairs, partition),
        ClassCheck::Ok
    )
}

/// Enumerates the single-piece unifiers of `query` with the head of `rule`.
/// Query and rule variables must be disjoint (freshen the rule first).
/// Pseudo-atoms in `query` participate in occurrence checks but never unify.
pub fn enumerate_piece_unifiers(
    query: &[Atom],
    rule: &ExistentialRule,
) -> Vec<PieceUnifier> {
    let existentials: BTreeSet<Term> =
        rule.existentials().into_iter().map(Term::Var).collect();
    let head = &rule.head;
    let mut out: Vec<PieceUnifier> = Vec::new();
    let mut seen: BTreeSet<(Vec<(usize, usize)>, BTreeSet<BTreeSet<Term>>)> = BTreeSet::new();

    let mut stack: Vec<Vec<(usize, usize)>> = Vec::new();
    for (qi, qa) in query.iter().enumerate() {
        for (hi, ha) in head.iter().enumerate() {
            if mergeable(qa, ha) {
                stack.push(vec![(qi, hi)]);
            }
        }
    }

    while let Some(pairs) = stack.pop() {
        let mut partition = Partition::new();
        let mut ok = true;
        for (qi, hi) in &pairs {
            let (qa, ha) = (&query[*qi], &head[*hi]);
            for (x, y) in qa.args.iter().zip(ha.args.iter()) {
                partition.merge(x, y);
            }
            if qa.pred != ha.pred {
                ok = false;
            }
        }
        if !ok {
            continue;
        }
        match check_candidate(query, &existentials, &pairs, &partition) {
            ClassCheck::Dead => {}
            ClassCheck::Extend(ai) => {
                for (hi, ha) in head.iter().enumerate() {
                    if mergeable(&query[ai], ha) {
                        let mut next = pairs.clone();
                        next.push((ai, hi));
                        next.sort();
                        next.dedup();
                        stack.push(next);
                    }
                }
            }
            ClassCheck::Ok => {
                let mut key_pairs = pairs.clone();
                key_pairs.sort();
                let key = (key_pairs.clone(), partition.as_set());
                if seen.insert(key) {
                    out.push(PieceUnifier { pairs: key_pairs, partition });
                }
            }
        }
    }
    out
}

/// Classical direct rewriting: sigma(Q \ Q') union sigma(B), freshened.
pub fn classical_direct_rewriting(
    query: &[Atom],
    rule: &ExistentialRule,
    mu: &PieceUnifier,
    fresh: &mut Fresh,
) -> Result<Cq, UnifyError> {
    let sub = mu.partition.substitution()?;
    let piece = mu.q_indices();
    let mut atoms: Vec<Atom> = Vec::new();
    for (i, a) in query.iter().enumerate() {
        if !piece.contains(&i) {
            atoms.push(a.apply(&sub));
        }
    }
    for b in &rule.body {
        atoms.push(b.apply(&sub));
    }
    Ok(freshen_atoms(&atoms, fresh).into_iter().collect())
}

/// All rewritings reachable within `max_depth` direct-rewriting steps,
/// deduplicated by isomorphism. A fus-style oracle for tests; the main
/// pipeline does not use it.
pub fn classical_rewriting_closure(
    q: &Cq,
    rules: &[ExistentialRule],
    max_depth: usize,
) -> Vec<Cq> {
    let mut fresh = Fresh::new();
    for a in q.iter() {
        fresh.reserve_atoms([a.clone()].iter());
    }
    for r in rules {
        if let Some(m) = r.max_var() {
            fresh.reserve(m);
        }
    }
    let mut seen: BTreeSet<Vec<Atom>> = BTreeSet::new();
    let mut out: Vec<Cq> = Vec::new();
    let mut frontier = vec![q.clone()];
    let key = |cq: &Cq| canonicalize(&cq.iter().cloned().collect::<Vec<_>>());
    seen.insert(key(q));
    out.push(q.clone());
    for _ in 0..max_depth {
        let mut next = Vec::new();
        for cq in &frontier {
            let atoms: Vec<Atom> = cq.iter().cloned().collect();
            for r in rules {
                let r = r.freshened(&mut fresh);
                for mu in enumerate_piece_unifiers(&atoms, &r) {
                    if let Ok(rw) = classical_direct_rewriting(&atoms, &r, &mu, &mut fresh) {
                        if seen.insert(key(&rw)) {
                            out.push(rw.clone());
                            next.push(rw);
                        }
                    }
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    out
}
