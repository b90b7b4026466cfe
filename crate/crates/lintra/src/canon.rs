//! Canonical forms for conjunctive queries under variable renaming.
//!
//! Constants and the markers #1/#2 are fixed points; variables may be renamed
//! bijectively. The canonical form is the lexicographically least sorted atom
//! list over all such renamings, found by iterated colour refinement with an
//! individualization step for symmetric inputs. Queries here stay small (the
//! rewriter never retains anything larger than the input query), so exactness
//! is cheap.

use crate::model::{Atom, Term};
use std::collections::{BTreeMap, BTreeSet};

/// Canonical representative: variables renamed to 0..n, atoms sorted.
pub type CanonicalForm = Vec<Atom>;

pub fn canonicalize(atoms: &[Atom]) -> CanonicalForm {
    // Set semantics first.
    let atoms: Vec<Atom> = atoms.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let vars: Vec<u32> = {
        let mut vs = BTreeSet::new();
        for a in &atoms {
            vs.extend(a.vars());
        }
        vs.into_iter().collect()
    };
    if vars.is_empty() {
        return atoms;
    }
    let idx: BTreeMap<u32, usize> = vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let colors = vec![0usize; vars.len()];
    let colors = refine(&atoms, &vars, &idx, colors);
    let mut best: Option<CanonicalForm> = None;
    search(&atoms, &vars, &idx, colors, &mut best);
    best.unwrap()
}

pub fn is_isomorphic(a: &[Atom], b: &[Atom]) -> bool {
    canonicalize(a) == canonicalize(b)
}

/// One rendering of a term under a colouring; used inside signatures.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
enum ColTerm {
    Const(String),
    Marker(u8),
    Var(usize),
}

fn col_term(t: &Term, idx: &BTreeMap<u32, usize>, colors: &[usize]) -> ColTerm {
    match t {
        Term::Const(c) => ColTerm::Const(c.clone()),
        Term::Marker(m) => ColTerm::Marker(*m),
        Term::Var(v) => ColTerm::Var(colors[idx[v]]),
    }
}

/// Refines until stable: a variable's signature is the multiset of
/// (predicate, position, coloured argument list) over its occurrences.
fn refine(
    atoms: &[Atom],
    vars: &[u32],
    idx: &BTreeMap<u32, usize>,
    mut colors: Vec<usize>,
) -> Vec<usize> {
    loop {
        let mut sigs: Vec<(usize, Vec<(String, usize, Vec<ColTerm>)>)> =
            Vec::with_capacity(vars.len());
        for (i, v) in vars.iter().enumerate() {
            let mut sig = Vec::new();
            for a in atoms {
                let rendered: Vec<ColTerm> =
                    a.args.iter().map(|t| col_term(t, idx, &colors)).collect();
                for (pos, t) in a.args.iter().enumerate() {
                    if *t == Term::Var(*v) {
                        sig.push((a.pred.clone(), pos, rendered.clone()));
                    }
                }
            }
            sig.sort();
            sigs.push((colors[i], sig));
        }
        // Dense re-ranking.
        let mut distinct: Vec<&(usize, Vec<(String, usize, Vec<ColTerm>)>)> = sigs.iter().collect();
        distinct.sort();
        distinct.dedup();
        let rank: BTreeMap<_, usize> = distinct.iter().enumerate().map(|(r, s)| ((*s).clone(), r)).collect();
        let new_colors: Vec<usize> = sigs.iter().map(|s| rank[s]).collect();
        if new_colors == colors {
            return colors;
        }
        colors = new_colors;
    }
}

fn search(
    atoms: &[Atom],
    vars: &[u32],
    idx: &BTreeMap<u32, usize>,
    colors: Vec<usize>,
    best: &mut Option<CanonicalForm>,
) {
    // Find the first colour class with more than one member.
    let mut by_color: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, c) in colors.iter().enumerate() {
        by_color.entry(*c).or_default().push(i);
    }
    if let Some((_, class)) = by_color.iter().find(|(_, m)| m.len() > 1) {
        for &i in class {
            // Individualize member i: give it a colour just below its class,
            // then re-refine.
            let mut next = colors.clone();
            for c in next.iter_mut() {
                *c = *c * 2 + 2;
            }
            next[i] -= 1;
            let next = refine(atoms, vars, idx, next);
            search(atoms, vars, idx, next, best);
        }
        return;
    }
    // Discrete colouring: rename variables by colour order and sort.
    let mut order: Vec<(usize, usize)> = colors.iter().cloned().zip(0..vars.len()).collect();
    order.sort();
    let mut rename: BTreeMap<Term, Term> = BTreeMap::new();
    for (newv, (_, i)) in order.into_iter().enumerate() {
        rename.insert(Term::Var(vars[i]), Term::Var(newv as u32));
    }
    let mut out: Vec<Atom> = atoms.iter().map(|a| a.apply(&rename)).collect();
    out.sort();
    out.dedup();
    if best.as_ref().map_or(true, |b| out < *b) {
        *best = Some(out);
    }
}
