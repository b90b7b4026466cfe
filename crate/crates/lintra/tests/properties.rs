//! Property-based tests: canonicalization against brute-force isomorphism,
//! piece-unifier admissibility, Datalog saturation against a naive fixpoint,
//! and KB round-trip stability.

use lintra::canon::{canonicalize, is_isomorphic};
use lintra::check::gen_case;
use lintra::datalog::{homomorphisms, saturate, translate_pattern_set, DatalogProgram};
use lintra::kb::{parse_kb, print_kb};
use lintra::model::{Atom, Cq, ExistentialRule, FactBase, Term};
use lintra::patterns::init_pattern_set;
use lintra::unification::enumerate_piece_unifiers;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

fn term_strategy() -> impl Strategy<Value = Term> {
    prop_oneof![
        (0u32..6).prop_map(Term::Var),
        prop_oneof![Just("a"), Just("b")].prop_map(|s| Term::Const(s.into())),
    ]
}

fn atom_strategy() -> impl Strategy<Value = Atom> {
    (
        prop_oneof![Just(("p", 2usize)), Just(("q", 2usize)), Just(("r", 1usize))],
        proptest::collection::vec(term_strategy(), 2),
    )
        .prop_map(|((pred, arity), args)| Atom::new(pred, args[..arity].to_vec()))
}

fn atoms_strategy(max: usize) -> impl Strategy<Value = Vec<Atom>> {
    proptest::collection::vec(atom_strategy(), 1..=max)
}

/// Brute force: try every injective variable mapping between the (at most 6)
/// variables of each side.
fn brute_isomorphic(a: &[Atom], b: &[Atom]) -> bool {
    let set_a: BTreeSet<&Atom> = a.iter().collect();
    let set_b: BTreeSet<&Atom> = b.iter().collect();
    if set_a.len() != set_b.len() {
        return false;
    }
    let vars = |atoms: &[Atom]| -> Vec<u32> {
        let mut vs: BTreeSet<u32> = BTreeSet::new();
        for at in atoms {
            vs.extend(at.vars());
        }
        vs.into_iter().collect()
    };
    let va = vars(a);
    let vb = vars(b);
    if va.len() != vb.len() {
        return false;
    }
    fn perms(items: &[u32]) -> Vec<Vec<u32>> {
        if items.is_empty() {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for (i, &x) in items.iter().enumerate() {
            let mut rest = items.to_vec();
            rest.remove(i);
            for mut p in perms(&rest) {
                p.insert(0, x);
                out.push(p);
            }
        }
        out
    }
    for perm in perms(&vb) {
        let sub: BTreeMap<Term, Term> = va
            .iter()
            .zip(perm.iter())
            .map(|(&x, &y)| (Term::Var(x), Term::Var(y)))
            .collect();
        let mapped: BTreeSet<Atom> = a.iter().map(|at| at.apply(&sub)).collect();
        if mapped == set_b.iter().map(|at| (*at).clone()).collect() {
            return true;
        }
    }
    false
}

/// Naive bottom-up fixpoint: apply every rule everywhere until stable.
fn naive_fixpoint(f: &FactBase, prog: &DatalogProgram) -> FactBase {
    let mut out = f.clone();
    loop {
        let mut added = false;
        for rule in &prog.rules {
            for sub in homomorphisms(&rule.body, &out) {
                added |= out.insert(rule.head.apply(&sub));
            }
        }
        if !added {
            return out;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonicalization_matches_brute_force(a in atoms_strategy(4), b in atoms_strategy(4)) {
        prop_assert_eq!(is_isomorphic(&a, &b), brute_isomorphic(&a, &b));
    }

    #[test]
    fn canonical_form_is_renaming_invariant(a in atoms_strategy(5), offset in 1u32..50) {
        let sub: BTreeMap<Term, Term> = (0..6)
            .map(|v| (Term::Var(v), Term::Var(v + offset)))
            .collect();
        let renamed: Vec<Atom> = a.iter().map(|at| at.apply(&sub)).collect();
        prop_assert_eq!(canonicalize(&a), canonicalize(&renamed));
    }

    #[test]
    fn piece_unifiers_are_admissible_and_nonempty(
        q_atoms in atoms_strategy(3),
        head in atom_strategy(),
    ) {
        let q: Cq = q_atoms.into_iter().collect();
        // Shift head vars out of the query's range and make the last
        // argument existential when it is a variable.
        let sub: BTreeMap<Term, Term> =
            (0..6).map(|v| (Term::Var(v), Term::Var(v + 100))).collect();
        let head = head.apply(&sub);
        let rule = ExistentialRule::new(
            vec![Atom::new("body0", vec![head.args[0].clone()])],
            vec![head],
        );
        let q_vec: Vec<Atom> = q.iter().cloned().collect();
        for mu in enumerate_piece_unifiers(&q_vec, &rule) {
            prop_assert!(mu.partition.admissible());
            prop_assert!(!mu.q_indices().is_empty());
            prop_assert!(mu.partition.substitution().is_ok());
        }
    }
}

#[test]
fn saturate_matches_naive_fixpoint_on_random_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..40 {
        let doc = gen_case(&mut rng, 5);
        let transitive: BTreeSet<String> = doc.transitive_decls.clone();
        let ps = init_pattern_set(transitive.iter());
        let prog = translate_pattern_set(&ps);
        let fast = saturate(&doc.facts, &prog);
        let slow = naive_fixpoint(&doc.facts, &prog);
        assert_eq!(fast.facts, slow.facts);
    }
}

#[test]
fn kb_round_trip_is_stable_on_random_docs() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..40 {
        let doc = gen_case(&mut rng, 5);
        let text = print_kb(&doc);
        let once = parse_kb(&text).expect("printed KB parses");
        let twice = parse_kb(&print_kb(&once)).expect("re-printed KB parses");
        assert_eq!(once, twice);
    }
}
