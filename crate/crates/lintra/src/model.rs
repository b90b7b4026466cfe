//! Terms, atoms, conjunctive queries, existential rules and fact bases.
//!
//! Variables are plain numbers drawn from a monotone counter that is threaded
//! through a pipeline run, so every operation is reproducible. Constants carry
//! their name; chase nulls are constants whose names (`n__0`, ...) cannot be
//! written in the input grammar, which keeps the two universes disjoint.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// A term. The derived order (constants < markers < variables) doubles as the
/// representative priority when a partition class is collapsed.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Const(String),
    /// Pattern marker #1 or #2; occurs only inside pattern definitions.
    Marker(u8),
    Var(u32),
}

impl Term {
    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }
    pub fn is_const(&self) -> bool {
        matches!(self, Term::Const(_))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => write!(f, "{c}"),
            Term::Marker(m) => write!(f, "#{m}"),
            Term::Var(v) => write!(f, "V{v}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub pred: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(pred: impl Into<String>, args: Vec<Term>) -> Self {
        Atom { pred: pred.into(), args }
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|t| !t.is_var())
    }

    pub fn vars(&self) -> impl Iterator<Item = u32> + '_ {
        self.args.iter().filter_map(|t| match t {
            Term::Var(v) => Some(*v),
            _ => None,
        })
    }

    /// Applies a substitution; unmapped terms stay as they are.
    pub fn apply(&self, sub: &BTreeMap<Term, Term>) -> Atom {
        Atom {
            pred: self.pred.clone(),
            args: self.args.iter().map(|t| apply_term(sub, t)).collect(),
        }
    }
}

pub fn apply_term(sub: &BTreeMap<Term, Term>, t: &Term) -> Term {
    sub.get(t).cloned().unwrap_or_else(|| t.clone())
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.pred)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// A Boolean conjunctive query, kept as a set: duplicate atoms collapse.
pub type Cq = BTreeSet<Atom>;

pub fn cq_vars(q: &Cq) -> BTreeSet<u32> {
    q.iter().flat_map(|a| a.vars().collect::<Vec<_>>()).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExistentialRule {
    pub body: Vec<Atom>,
    pub head: Vec<Atom>,
}

impl ExistentialRule {
    pub fn new(body: Vec<Atom>, head: Vec<Atom>) -> Self {
        ExistentialRule { body, head }
    }

    pub fn body_vars(&self) -> BTreeSet<u32> {
        self.body.iter().flat_map(|a| a.vars().collect::<Vec<_>>()).collect()
    }

    pub fn head_vars(&self) -> BTreeSet<u32> {
        self.head.iter().flat_map(|a| a.vars().collect::<Vec<_>>()).collect()
    }

    /// Variables shared between body and head.
    pub fn frontier(&self) -> BTreeSet<u32> {
        self.body_vars().intersection(&self.head_vars()).cloned().collect()
    }

    /// Head-only variables.
    pub fn existentials(&self) -> BTreeSet<u32> {
        self.head_vars().difference(&self.body_vars()).cloned().collect()
    }

    pub fn max_var(&self) -> Option<u32> {
        self.body_vars().union(&self.head_vars()).max().cloned()
    }

    /// Copy with every variable renamed through the counter.
    pub fn freshened(&self, fresh: &mut Fresh) -> ExistentialRule {
        let mut map: BTreeMap<Term, Term> = BTreeMap::new();
        for a in self.body.iter().chain(self.head.iter()) {
            for v in a.vars() {
                map.entry(Term::Var(v)).or_insert_with(|| fresh.var());
            }
        }
        ExistentialRule {
            body: self.body.iter().map(|a| a.apply(&map)).collect(),
            head: self.head.iter().map(|a| a.apply(&map)).collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FactBase {
    pub facts: BTreeSet<Atom>,
}

impl FactBase {
    pub fn new() -> Self {
        FactBase::default()
    }

    /// Idempotent by set semantics.
    pub fn insert(&mut self, a: Atom) -> bool {
        debug_assert!(a.is_ground());
        self.facts.insert(a)
    }

    pub fn terms(&self) -> BTreeSet<Term> {
        self.facts.iter().flat_map(|a| a.args.iter().cloned()).collect()
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }
}

/// Monotone fresh-variable counter; one per pipeline run.
#[derive(Clone, Debug, Default)]
pub struct Fresh {
    next: u32,
}

impl Fresh {
    pub fn new() -> Self {
        Fresh { next: 0 }
    }

    pub fn starting_past<'a>(vars: impl Iterator<Item = &'a Term>) -> Self {
        let mut f = Fresh::new();
        for t in vars {
            if let Term::Var(v) = t {
                f.reserve(*v);
            }
        }
        f
    }

    pub fn var(&mut self) -> Term {
        let t = Term::Var(self.next);
        self.next += 1;
        t
    }

    /// Ensures future variables are numbered past `v`.
    pub fn reserve(&mut self, v: u32) {
        if v >= self.next {
            self.next = v + 1;
        }
    }

    pub fn reserve_atoms<'a>(&mut self, atoms: impl Iterator<Item = &'a Atom>) {
        for a in atoms {
            for v in a.vars() {
                self.reserve(v);
            }
        }
    }
}

/// Isomorphic copy whose variables all come fresh from the counter.
pub fn freshen_atoms(atoms: &[Atom], fresh: &mut Fresh) -> Vec<Atom> {
    let mut map: BTreeMap<Term, Term> = BTreeMap::new();
    let mut out = Vec::with_capacity(atoms.len());
    for a in atoms {
        for v in a.vars() {
            map.entry(Term::Var(v)).or_insert_with(|| fresh.var());
        }
        out.push(a.apply(&map));
    }
    out
}
