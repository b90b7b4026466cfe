//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use lintra::analysis::{
    agrd_trans_encode, build_grd, is_agrd, is_safe, split_rules, transitivity_rule,
};
use lintra::check::{gen_case, run_check, CheckConfig};
use lintra::datalog::{evaluate_cq, saturate, translate_pattern_set, translate_queries};
use lintra::model::{Atom, Cq, ExistentialRule, FactBase, Fresh, Term};
use lintra::oracle::{oracle_entails, OracleAnswer};
use lintra::patterns::{expand_full_instances, init_pattern_set, patternize, Pcq, Repeatable};
use lintra::rewriter::{
    patternize_rules, rewrite, saturate_patterns, Mode, RewriterConfig, Termination,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::time::Instant;

fn v(n: u32) -> Term {
    Term::Var(n)
}
fn c(s: &str) -> Term {
    Term::Const(s.into())
}
fn m(k: u8) -> Term {
    Term::Marker(k)
}

fn report(n: usize, name: &str, ok: bool) {
    println!("criterion {n} ({name}): {}", if ok { "pass" } else { "FAIL" });
    assert!(ok, "criterion {n} ({name}) failed");
}

fn pcq_iso(a: &Pcq, b: &Pcq) -> bool {
    a.canonical() == b.canonical()
}

#[test]
fn criterion_1_classical_rewriting() {
    let q: Cq = [
        Atom::new("q", vec![v(0)]),
        Atom::new("p", vec![v(0), v(1)]),
        Atom::new("p", vec![v(2), v(1)]),
        Atom::new("r", vec![v(2)]),
    ]
    .into_iter()
    .collect();
    let rule = ExistentialRule::new(
        vec![Atom::new("h", vec![v(10)])],
        vec![Atom::new("p", vec![v(10), v(11)])],
    );
    let out = rewrite(&q, &[rule], &RewriterConfig::default()).unwrap();
    let expected = Pcq {
        atoms: [
            Atom::new("h", vec![v(0)]),
            Atom::new("q", vec![v(0)]),
            Atom::new("r", vec![v(0)]),
        ]
        .into_iter()
        .collect(),
        reps: BTreeSet::new(),
    };
    let ok = out.pcqs.iter().any(|p| pcq_iso(p, &expected))
        && out.termination == Termination::Completed;
    report(1, "classical rewriting", ok);
}

#[test]
fn criterion_2_internal_rewriting_and_datalog() {
    // P's definition starts from three r-atoms; s(x,y) -> r(z1,x,z2,y)
    // must add s(#1,#2), which in turn yields the Datalog rule
    // p__tc(V0,V1) :- s(V0,V1).
    let mut f = Fresh::new();
    f.reserve(20);
    let rule = ExistentialRule::new(
        vec![Atom::new("s", vec![v(0), v(1)])],
        vec![Atom::new("r", vec![v(2), v(0), v(3), v(1)])],
    );
    let transitive: BTreeSet<String> = ["p".to_string()].into_iter().collect();
    let prules = patternize_rules(&[rule], &transitive).unwrap();
    let mut ps = init_pattern_set(transitive.iter());
    {
        let def = ps.defs.get_mut("p").unwrap();
        def.atoms.clear();
        def.add(Atom::new("r", vec![m(2), m(1), v(10), v(11)])).unwrap();
        def.add(Atom::new("r", vec![m(1), v(12), m(2), v(13)])).unwrap();
        def.add(Atom::new("r", vec![v(14), v(15), m(1), m(2)])).unwrap();
    }
    saturate_patterns(&mut ps, &prules, &mut f);
    let added = ps.defs["p"].atoms.contains(&Atom::new("s", vec![m(1), m(2)]));
    let emitted = translate_pattern_set(&ps).emit();
    let ok = added && emitted.contains("p__tc(V0,V1) :- s(V0,V1).");
    report(2, "internal rewriting adds s(#1,#2)", ok);
}

/// The running-example KB: transitive p1, p2; s2(x,y,z) -> p1(x,z);
/// s2(x,y,z) -> p2(z,x); s1(x,y) -> p2(x,y); s1(x,y) -> s2(x,y,z).
/// Query p1(a,z) & p2(z,b) & s1(a,b).
fn running_example() -> (Cq, Vec<ExistentialRule>) {
    let mut f = Fresh::new();
    f.reserve(30);
    let rules = vec![
        ExistentialRule::new(
            vec![Atom::new("s2", vec![v(0), v(1), v(2)])],
            vec![Atom::new("p1", vec![v(0), v(2)])],
        ),
        ExistentialRule::new(
            vec![Atom::new("s2", vec![v(0), v(1), v(2)])],
            vec![Atom::new("p2", vec![v(2), v(0)])],
        ),
        ExistentialRule::new(
            vec![Atom::new("s1", vec![v(0), v(1)])],
            vec![Atom::new("p2", vec![v(0), v(1)])],
        ),
        ExistentialRule::new(
            vec![Atom::new("s1", vec![v(0), v(1)])],
            vec![Atom::new("s2", vec![v(0), v(1), v(2)])],
        ),
        transitivity_rule("p1", &mut f),
        transitivity_rule("p2", &mut f),
    ];
    let q: Cq = [
        Atom::new("p1", vec![c("a"), v(20)]),
        Atom::new("p2", vec![v(20), c("b")]),
        Atom::new("s1", vec![c("a"), c("b")]),
    ]
    .into_iter()
    .collect();
    (q, rules)
}

#[test]
fn criterion_3_external_rewriting_and_exclusion() {
    let (q, rules) = running_example();
    // Q'1 = P1+[a,x'] & s1(x',y') & P2+[x',b] & s1(a,b), produced only in
    // unmodified mode; Q'2 = s1(a,y') & P2+[a,b] & s1(a,b), produced in both.
    let q1 = Pcq {
        atoms: [
            Atom::new("s1", vec![v(0), v(1)]),
            Atom::new("s1", vec![c("a"), c("b")]),
        ]
        .into_iter()
        .collect(),
        reps: [
            Repeatable { pred: "p1".into(), t1: c("a"), t2: v(0) },
            Repeatable { pred: "p2".into(), t1: v(0), t2: c("b") },
        ]
        .into_iter()
        .collect(),
    };
    let q2 = Pcq {
        atoms: [
            Atom::new("s1", vec![c("a"), v(0)]),
            Atom::new("s1", vec![c("a"), c("b")]),
        ]
        .into_iter()
        .collect(),
        reps: [Repeatable { pred: "p2".into(), t1: c("a"), t2: c("b") }]
            .into_iter()
            .collect(),
    };
    let modified = rewrite(&q, &rules, &RewriterConfig::default()).unwrap();
    let unmodified = rewrite(
        &q,
        &rules,
        &RewriterConfig { mode: Mode::Unmodified, max_steps: Some(200), max_pcqs: Some(2000) },
    )
    .unwrap();
    let ok = unmodified.pcqs.iter().any(|p| pcq_iso(p, &q1))
        && unmodified.pcqs.iter().any(|p| pcq_iso(p, &q2))
        && modified.pcqs.iter().any(|p| pcq_iso(p, &q2))
        && !modified.pcqs.iter().any(|p| pcq_iso(p, &q1))
        && modified.termination == Termination::Completed;
    report(3, "external rewriting and exclusion", ok);
}

#[test]
fn criterion_4_safety_classification() {
    let mut f = Fresh::new();
    f.reserve(30);
    let r1 = ExistentialRule::new(
        vec![Atom::new("s1", vec![v(0), v(0), v(1)])],
        vec![Atom::new("p1", vec![v(0), v(1)])],
    );
    let r2 = ExistentialRule::new(
        vec![Atom::new("s2", vec![v(0), v(1), v(2)])],
        vec![Atom::new("p2", vec![v(0), v(1)])],
    );
    let r3 = ExistentialRule::new(
        vec![Atom::new("s1", vec![v(0), v(1), v(2)])],
        vec![Atom::new("s2", vec![v(2), v(0), v(1)])],
    );
    let r4 = ExistentialRule::new(
        vec![Atom::new("s1", vec![v(0), v(1), v(2)])],
        vec![Atom::new("s2", vec![v(0), v(1), v(2)])],
    );
    let trans = vec![transitivity_rule("p1", &mut f), transitivity_rule("p2", &mut f)];

    let mut safe_set = vec![r1.clone(), r2.clone(), r3];
    safe_set.extend(trans.iter().cloned());
    let verdict_safe = is_safe(&split_rules(&safe_set));

    let mut unsafe_set = vec![r1, r2, r4];
    unsafe_set.extend(trans.iter().cloned());
    let verdict_unsafe = is_safe(&split_rules(&unsafe_set));

    let ok = verdict_safe.safe
        && verdict_safe.witness.contains_key("s1")
        && verdict_safe.witness.contains_key("s2")
        && !verdict_unsafe.safe;
    report(4, "safety classification", ok);
}

#[test]
fn criterion_5_agrd_trans_encoding() {
    // Five rule sets plus fact bases; atomic queries over the original
    // vocabulary must receive the same chase verdict before and after the
    // encoding (encoded set extended with trans(p)).
    let sets: Vec<(Vec<ExistentialRule>, Vec<Atom>, Vec<Atom>)> = vec![
        (
            vec![ExistentialRule::new(
                vec![Atom::new("h", vec![v(0)])],
                vec![Atom::new("q", vec![v(0), v(1)])],
            )],
            vec![Atom::new("h", vec![c("c0")])],
            vec![Atom::new("q", vec![c("c0"), v(9)]), Atom::new("q", vec![c("c1"), v(9)])],
        ),
        (
            vec![ExistentialRule::new(
                vec![Atom::new("q", vec![v(0), v(1)])],
                vec![Atom::new("r", vec![v(1)])],
            )],
            vec![Atom::new("q", vec![c("c0"), c("c1")])],
            vec![Atom::new("r", vec![c("c1")]), Atom::new("r", vec![c("c0")])],
        ),
        (
            vec![
                ExistentialRule::new(
                    vec![Atom::new("h", vec![v(0)])],
                    vec![Atom::new("q", vec![v(0), v(1)])],
                ),
                ExistentialRule::new(
                    vec![Atom::new("q", vec![v(0), v(1)])],
                    vec![Atom::new("r", vec![v(0)])],
                ),
            ],
            vec![Atom::new("h", vec![c("c0")])],
            vec![Atom::new("r", vec![c("c0")]), Atom::new("q", vec![v(8), v(9)])],
        ),
        (
            vec![
                ExistentialRule::new(
                    vec![Atom::new("t", vec![v(0), v(1)])],
                    vec![Atom::new("t2", vec![v(1), v(0)])],
                ),
                ExistentialRule::new(
                    vec![Atom::new("t2", vec![v(0), v(1)])],
                    vec![Atom::new("u", vec![v(0)])],
                ),
            ],
            vec![Atom::new("t", vec![c("c0"), c("c1")])],
            vec![Atom::new("u", vec![c("c1")]), Atom::new("u", vec![c("c0")])],
        ),
        (
            vec![ExistentialRule::new(
                vec![Atom::new("h", vec![v(0)])],
                vec![Atom::new("q", vec![v(0), v(0)])],
            )],
            vec![Atom::new("h", vec![c("c0")])],
            vec![Atom::new("q", vec![c("c0"), c("c0")])],
        ),
    ];

    let mut ok = true;
    for (rules, facts, queries) in &sets {
        let enc = agrd_trans_encode(rules).expect("vocabulary avoids reserved predicates");
        ok &= is_agrd(&enc.rules);
        ok &= build_grd(&enc.rules).longest_path() <= 1;

        let mut f = FactBase::new();
        for a in facts {
            f.insert(a.clone());
        }
        let mut fresh = Fresh::new();
        for r in &enc.rules {
            if let Some(mv) = r.max_var() {
                fresh.reserve(mv);
            }
        }
        let mut enc_rules = enc.rules.clone();
        enc_rules.push(transitivity_rule(&enc.transitive_pred, &mut fresh));

        for qa in queries {
            let q: Cq = [qa.clone()].into_iter().collect();
            let original = oracle_entails(&f, rules, &q, 6);
            let encoded = oracle_entails(&f, &enc_rules, &q, 6);
            let agree = match (original, encoded) {
                (OracleAnswer::Yes, OracleAnswer::Yes) => true,
                (OracleAnswer::NoTerminated, e) | (OracleAnswer::Unknown, e) => {
                    e != OracleAnswer::Yes
                }
                _ => false,
            };
            ok &= agree;
        }
    }
    report(5, "aGRD+trans encoding", ok);
}

#[test]
fn criterion_6_datalog_translation_equivalence() {
    // Saturate-and-evaluate must agree with bounded full-instance
    // enumeration (chain bound |terms(F)|) on random (PCQ, FactBase) pairs.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut compared = 0usize;
    let mut ok = true;
    while compared < 100 {
        let doc = gen_case(&mut rng, 4);
        let split = split_rules(&doc.rules);
        let prules = patternize_rules(&split.linear, &split.transitive).unwrap();
        let mut fresh = Fresh::new();
        for r in &doc.rules {
            if let Some(mv) = r.max_var() {
                fresh.reserve(mv);
            }
        }
        let mut ps = init_pattern_set(split.transitive.iter());
        saturate_patterns(&mut ps, &prules, &mut fresh);
        let prog = translate_pattern_set(&ps);
        let sat = saturate(&doc.facts, &prog);
        let bound = doc.facts.terms().len().max(1);

        for q in &doc.queries {
            let pcq = patternize(q, &split.transitive);
            // Skip blowups: per-rep chain count is sum of |def|^k for k<=bound.
            let work: f64 = pcq
                .reps
                .iter()
                .map(|r| {
                    let n = ps.defs[&r.pred].atoms.len() as f64;
                    (1..=bound).map(|k| n.powi(k as i32)).sum::<f64>()
                })
                .product();
            if work > 50_000.0 {
                continue;
            }
            for a in q {
                fresh.reserve_atoms(std::iter::once(a));
            }
            let via_datalog = evaluate_cq(&translate_queries(&[pcq.clone()])[0], &sat);
            let via_expansion = expand_full_instances(&pcq, &ps, bound, &mut fresh)
                .iter()
                .any(|i| evaluate_cq(i, &doc.facts));
            if via_datalog != via_expansion {
                eprintln!("mismatch: datalog {via_datalog} expansion {via_expansion}\n{pcq}");
                ok = false;
            }
            compared += 1;
        }
    }
    report(6, "Datalog translation equivalence", ok && compared >= 100);
}

#[test]
fn criterion_7_oracle_cross_validation() {
    let started = Instant::now();
    let cfg = CheckConfig { seed: 1, cases: 500, ..CheckConfig::default() };
    let rep = run_check(&cfg);
    for d in &rep.disagreements {
        eprintln!(
            "case {} query {}: pipeline {:?} oracle {:?}\n{}",
            d.case_idx, d.query_idx, d.pipeline, d.oracle, d.kb_text
        );
    }
    let elapsed = started.elapsed();
    let ok = rep.disagreements.is_empty()
        && rep.queries_compared > 0
        && elapsed.as_secs() < 300;
    println!(
        "  (500 cases, {} queries compared, {} oracle-unknown, {:.1?})",
        rep.queries_compared, rep.oracle_unknown, elapsed
    );
    report(7, "oracle cross-validation", ok);
}

#[test]
fn criterion_8_termination_and_size_bound() {
    // Same corpus as criterion 7: modified mode must complete on every case
    // and never retain a PCQ larger than the patternized input query.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = RewriterConfig::default();
    let mut ok = true;
    for _ in 0..500 {
        let doc = gen_case(&mut rng, 6);
        let split = split_rules(&doc.rules);
        for q in &doc.queries {
            let out = rewrite(q, &doc.rules, &cfg).unwrap();
            let q_plus = patternize(q, &split.transitive);
            ok &= out.termination == Termination::Completed;
            ok &= out.stats.size_violations == 0;
            ok &= out.pcqs.iter().all(|p| p.size() <= q_plus.size());
        }
    }
    report(8, "termination and size bound", ok);
}

#[test]
fn criterion_9_saturation_scaling() {
    // Chain fact bases over one transitive predicate: closure is quadratic,
    // so doubling |F| should cost at most ~4-5x; assert a loose 8x.
    fn chain_facts(n: usize) -> FactBase {
        let mut f = FactBase::new();
        for i in 0..n {
            f.insert(Atom::new("p", vec![c(&format!("c{i}")), c(&format!("c{}", i + 1))]));
        }
        f
    }
    let transitive: BTreeSet<String> = ["p".to_string()].into_iter().collect();
    let ps = init_pattern_set(transitive.iter());
    let prog = translate_pattern_set(&ps);
    let time_n = |n: usize| {
        let f = chain_facts(n);
        (0..3)
            .map(|_| {
                let t = Instant::now();
                let sat = saturate(&f, &prog);
                assert!(sat.len() >= n * (n + 1) / 2);
                t.elapsed()
            })
            .min()
            .unwrap()
    };
    let small = time_n(300);
    let large = time_n(600);
    let ratio = large.as_secs_f64() / small.as_secs_f64().max(1e-6);
    println!("  (300 links: {small:.1?}, 600 links: {large:.1?}, ratio {ratio:.2})");
    report(9, "saturation scaling", ratio <= 8.0);
}

#[test]
fn criterion_10_pattern_saturation_fixpoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ok = true;
    for _ in 0..50 {
        let doc = gen_case(&mut rng, 5);
        let split = split_rules(&doc.rules);
        let prules = patternize_rules(&split.linear, &split.transitive).unwrap();
        let mut fresh = Fresh::new();
        for r in &doc.rules {
            if let Some(mv) = r.max_var() {
                fresh.reserve(mv);
            }
        }
        let mut ps = init_pattern_set(split.transitive.iter());
        saturate_patterns(&mut ps, &prules, &mut fresh);
        let sizes: Vec<usize> = ps.defs.values().map(|d| d.atoms.len()).collect();
        saturate_patterns(&mut ps, &prules, &mut fresh);
        let sizes2: Vec<usize> = ps.defs.values().map(|d| d.atoms.len()).collect();
        ok &= sizes == sizes2;
    }
    report(10, "pattern saturation fixpoint", ok);
}
