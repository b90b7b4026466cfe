//! Reference ground truth: a breadth-first restricted chase with labelled
//! nulls and bounded entailment checking. Deliberately simple and slow; the
//! pipeline is validated against it on small instances.

use crate::datalog::{evaluate_cq, homomorphisms};
use crate::model::{Atom, Cq, ExistentialRule, FactBase, Term};
use std::collections::BTreeSet;

/// Labelled nulls are constants outside the input grammar (which rejects
/// identifiers containing a double underscore).
pub fn null_term(k: usize) -> Term {
    Term::Const(format!("n__{k}"))
}

#[derive(Clone, Debug)]
pub struct ChaseState {
    pub facts: FactBase,
    /// Atoms added by the latest round; empty means fixpoint.
    pub frontier: BTreeSet<Atom>,
    pub depth: usize,
    pub next_null: usize,
}

impl ChaseState {
    pub fn new(f: &FactBase) -> ChaseState {
        ChaseState {
            facts: f.clone(),
            frontier: f.facts.clone(),
            depth: 0,
            next_null: 0,
        }
    }

    pub fn at_fixpoint(&self) -> bool {
        self.depth > 0 && self.frontier.is_empty()
    }
}

/// One breadth-first round: every rule on every homomorphism of its body
/// into the round's snapshot. A trigger is skipped when its head is already
/// satisfied by some extension of the body mapping (restricted chase);
/// otherwise existential variables get fresh nulls.
pub fn chase_step(s: &ChaseState, rules: &[ExistentialRule]) -> ChaseState {
    let snapshot = s.facts.clone();
    let mut facts = s.facts.clone();
    let mut frontier = BTreeSet::new();
    let mut next_null = s.next_null;
    for rule in rules {
        let existentials = rule.existentials();
        for sub in homomorphisms(&rule.body, &snapshot) {
            let head_q: Cq = rule.head.iter().map(|a| a.apply(&sub)).collect();
            if evaluate_cq(&head_q, &facts) {
                continue;
            }
            let mut ext = sub.clone();
            for e in &existentials {
                ext.insert(Term::Var(*e), null_term(next_null));
                next_null += 1;
            }
            for a in &rule.head {
                let g = a.apply(&ext);
                if facts.insert(g.clone()) {
                    frontier.insert(g);
                }
            }
        }
    }
    ChaseState { facts, frontier, depth: s.depth + 1, next_null }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleAnswer {
    Yes,
    Unknown,
    NoTerminated,
}

/// Bounded semi-decision: yes within `max_depth` rounds, no when the chase
/// reached a fixpoint without entailing q, unknown otherwise.
pub fn oracle_entails(
    f: &FactBase,
    rules: &[ExistentialRule],
    q: &Cq,
    max_depth: usize,
) -> OracleAnswer {
    let mut s = ChaseState::new(f);
    if evaluate_cq(q, &s.facts) {
        return OracleAnswer::Yes;
    }
    for _ in 0..max_depth {
        s = chase_step(&s, rules);
        if evaluate_cq(q, &s.facts) {
            return OracleAnswer::Yes;
        }
        if s.at_fixpoint() {
            return OracleAnswer::NoTerminated;
        }
    }
    if s.at_fixpoint() {
        OracleAnswer::NoTerminated
    } else {
        OracleAnswer::Unknown
    }
}

/// Runs the chase to fixpoint or `max_depth` rounds; used by the CLI.
pub fn chase_rounds(
    f: &FactBase,
    rules: &[ExistentialRule],
    max_depth: usize,
) -> Vec<ChaseState> {
    let mut states = vec![ChaseState::new(f)];
    for _ in 0..max_depth {
        let next = chase_step(states.last().unwrap(), rules);
        let stop = next.at_fixpoint();
        states.push(next);
        if stop {
            break;
        }
    }
    states
}
