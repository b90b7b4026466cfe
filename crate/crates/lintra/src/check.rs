//! Randomized cross-validation: generate small safe rule sets, fact bases
//! and queries, then compare pipeline entailment against the bounded chase.
//! Generated sets stay within the completeness guarantee (safe, linear plus
//! transitivity), so every disagreement is a bug.

use crate::analysis::{is_safe, split_rules};
use crate::datalog::{entails, Answer};
use crate::kb::{print_kb, KbDocument};
use crate::model::{Atom, Cq, ExistentialRule, FactBase, Term};
use crate::oracle::{oracle_entails, OracleAnswer};
use crate::rewriter::RewriterConfig;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

#[derive(Clone, Debug)]
pub struct CheckConfig {
    pub seed: u64,
    pub cases: usize,
    pub max_terms: usize,
    pub depth: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig { seed: 0, cases: 100, max_terms: 6, depth: 6 }
    }
}

#[derive(Clone, Debug)]
pub struct Disagreement {
    pub case_idx: usize,
    pub query_idx: usize,
    pub pipeline: Answer,
    pub oracle: OracleAnswer,
    pub kb_text: String,
}

#[derive(Clone, Debug, Default)]
pub struct CheckReport {
    pub cases_run: usize,
    pub queries_compared: usize,
    pub oracle_unknown: usize,
    pub disagreements: Vec<Disagreement>,
}

struct Vocab {
    preds: Vec<(String, usize)>,
    transitive: Vec<String>,
}

fn gen_vocab(rng: &mut ChaCha8Rng) -> Vocab {
    let n_preds = rng.gen_range(2..=4usize);
    let n_trans = rng.gen_range(1..=2usize.min(n_preds));
    let mut preds = Vec::new();
    let mut transitive = Vec::new();
    for i in 0..n_preds {
        let name = format!("r{i}");
        if i < n_trans {
            preds.push((name.clone(), 2));
            transitive.push(name);
        } else {
            preds.push((name, rng.gen_range(1..=3usize)));
        }
    }
    Vocab { preds, transitive }
}

fn gen_linear_rule(rng: &mut ChaCha8Rng, vocab: &Vocab) -> ExistentialRule {
    let (bp, ba) = vocab.preds[rng.gen_range(0..vocab.preds.len())].clone();
    let body_args: Vec<Term> = (0..ba as u32).map(Term::Var).collect();
    let (hp, ha) = vocab.preds[rng.gen_range(0..vocab.preds.len())].clone();
    let mut next_exist = ba as u32;
    let head_args: Vec<Term> = (0..ha)
        .map(|_| {
            if ba > 0 && rng.gen_bool(0.7) {
                Term::Var(rng.gen_range(0..ba as u32))
            } else {
                let v = Term::Var(next_exist);
                next_exist += 1;
                v
            }
        })
        .collect();
    ExistentialRule::new(
        vec![Atom::new(bp, body_args)],
        vec![Atom::new(hp, head_args)],
    )
}

fn gen_rules(rng: &mut ChaCha8Rng, vocab: &Vocab) -> Vec<ExistentialRule> {
    let mut rules = Vec::new();
    let n_linear = rng.gen_range(1..=5usize);
    for _ in 0..n_linear {
        rules.push(gen_linear_rule(rng, vocab));
    }
    let mut fresh = crate::model::Fresh::new();
    for p in &vocab.transitive {
        rules.push(crate::analysis::transitivity_rule(p, &mut fresh));
    }
    rules
}

fn gen_facts(rng: &mut ChaCha8Rng, vocab: &Vocab, max_terms: usize) -> FactBase {
    let consts: Vec<Term> = (0..max_terms.max(2))
        .map(|i| Term::Const(format!("c{i}")))
        .collect();
    let mut f = FactBase::new();
    for _ in 0..rng.gen_range(1..=8usize) {
        let (p, a) = vocab.preds[rng.gen_range(0..vocab.preds.len())].clone();
        let args: Vec<Term> =
            (0..a).map(|_| consts[rng.gen_range(0..consts.len())].clone()).collect();
        f.insert(Atom::new(p, args));
    }
    f
}

fn gen_query(rng: &mut ChaCha8Rng, vocab: &Vocab, f: &FactBase) -> Cq {
    let consts: Vec<Term> = f.terms().into_iter().collect();
    let n_atoms = rng.gen_range(1..=3usize);
    let n_vars = rng.gen_range(1..=3u32);
    let mut q = Cq::new();
    for _ in 0..n_atoms {
        let (p, a) = vocab.preds[rng.gen_range(0..vocab.preds.len())].clone();
        let args: Vec<Term> = (0..a)
            .map(|_| {
                if !consts.is_empty() && rng.gen_bool(0.3) {
                    consts[rng.gen_range(0..consts.len())].clone()
                } else {
                    Term::Var(rng.gen_range(0..n_vars))
                }
            })
            .collect();
        q.insert(Atom::new(p, args));
    }
    q
}

/// One generated case: a safe rule set, a fact base, and 1-3 queries.
pub fn gen_case(rng: &mut ChaCha8Rng, max_terms: usize) -> KbDocument {
    loop {
        let vocab = gen_vocab(rng);
        let rules = gen_rules(rng, &vocab);
        let split = split_rules(&rules);
        if !split.rejects.is_empty() || !is_safe(&split).safe {
            continue;
        }
        let facts = gen_facts(rng, &vocab, max_terms);
        let queries: Vec<Cq> =
            (0..rng.gen_range(1..=3usize)).map(|_| gen_query(rng, &vocab, &facts)).collect();
        let transitive_decls: BTreeSet<String> = vocab.transitive.iter().cloned().collect();
        return KbDocument { facts, rules, queries, transitive_decls };
    }
}

pub fn run_check(cfg: &CheckConfig) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = CheckReport::default();
    let config = RewriterConfig::default();
    for case_idx in 0..cfg.cases {
        let doc = gen_case(&mut rng, cfg.max_terms);
        report.cases_run += 1;
        for (query_idx, q) in doc.queries.iter().enumerate() {
            let pipeline = entails(&doc.facts, &doc.rules, q, &config)
                .expect("generated rules split cleanly");
            let oracle = oracle_entails(&doc.facts, &doc.rules, q, cfg.depth);
            if oracle == OracleAnswer::Unknown {
                report.oracle_unknown += 1;
                continue;
            }
            report.queries_compared += 1;
            let agree = matches!(
                (pipeline, oracle),
                (Answer::Yes, OracleAnswer::Yes) | (Answer::No, OracleAnswer::NoTerminated)
            );
            if !agree {
                report.disagreements.push(Disagreement {
                    case_idx,
                    query_idx,
                    pipeline,
                    oracle,
                    kb_text: print_kb(&doc),
                });
            }
        }
    }
    report
}
