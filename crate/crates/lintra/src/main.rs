use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use lintra::analysis::{build_grd, compute_specializations, is_safe, split_rules};
use lintra::check::{run_check, CheckConfig};
use lintra::datalog::{entails, saturate, translate_pattern_set, translate_queries, Answer};
use lintra::kb::{parse_kb, KbDocument};
use lintra::model::Atom;
use lintra::oracle::chase_rounds;
use lintra::rewriter::{rewrite, Mode, RewriterConfig, Termination};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

const EX_USAGE: u8 = 64;
const EX_DATAERR: u8 = 65;
const EX_IOERR: u8 = 74;

#[derive(Parser)]
#[command(name = "lintra", version, about = "Query rewriting and rule-set analysis for linear + transitivity rule KBs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Modified,
    Unmodified,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EmitArg {
    Datalog,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Classify the rule set and report specializations, safety and the GRD.
    Analyze { kb: PathBuf },
    /// Run the rewriting pipeline and print the Datalog program and UCQ.
    Rewrite {
        kb: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Modified)]
        mode: ModeArg,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        max_pcqs: Option<usize>,
        #[arg(long, value_enum, default_value_t = EmitArg::Datalog)]
        emit: EmitArg,
    },
    /// Answer each query in the KB: yes, no or unknown.
    Entail { kb: PathBuf },
    /// Print the saturated fact base, closure facts included.
    Saturate { kb: PathBuf },
    /// Run the chase and print the facts added per round.
    Chase {
        kb: PathBuf,
        #[arg(long, default_value_t = 6)]
        depth: usize,
    },
    /// Cross-validate the pipeline against the chase on random safe KBs.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 6)]
        max_terms: usize,
        #[arg(long, default_value_t = 6)]
        depth: usize,
    },
}

/// Top-level JSON report; key order is fixed by declaration order.
#[derive(Serialize, Default)]
struct Report {
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<SplitReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    specializations: Option<Vec<lintra::analysis::Specialization>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    safety: Option<lintra::analysis::SafetyVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grd: Option<GrdReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rewrite_stats: Option<RewriteReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    answers: Option<Vec<Answer>>,
}

#[derive(Serialize)]
struct SplitReport {
    linear: usize,
    transitivity: usize,
    transitive: Vec<String>,
    rejects: Vec<String>,
}

#[derive(Serialize)]
struct GrdReport {
    acyclic: bool,
    longest_path: Option<usize>,
    edges: Vec<(usize, usize)>,
}

#[derive(Serialize)]
struct RewriteReport {
    #[serde(flatten)]
    stats: lintra::rewriter::RewriteStats,
    termination: Termination,
    complete: bool,
    pcqs: usize,
}

fn load_kb(path: &PathBuf) -> Result<KbDocument, u8> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return Err(EX_IOERR);
        }
    };
    match parse_kb(&text) {
        Ok(doc) => Ok(doc),
        Err(e) => {
            eprintln!("error: {e}");
            Err(EX_DATAERR)
        }
    }
}

fn print_query(cq: &std::collections::BTreeSet<Atom>) -> String {
    let mut names: BTreeMap<lintra::model::Term, String> = BTreeMap::new();
    let parts: Vec<String> = cq
        .iter()
        .map(|a| {
            let args: Vec<String> = a
                .args
                .iter()
                .map(|t| {
                    if t.is_var() {
                        let n = names.len();
                        names.entry(t.clone()).or_insert_with(|| format!("V{n}")).clone()
                    } else {
                        t.to_string()
                    }
                })
                .collect();
            format!("{}({})", a.pred, args.join(","))
        })
        .collect();
    parts.join(", ")
}

fn cmd_analyze(kb: &PathBuf) -> u8 {
    let doc = match load_kb(kb) {
        Ok(d) => d,
        Err(c) => return c,
    };
    let split = split_rules(&doc.rules);
    let specs = compute_specializations(&split);
    let safety = is_safe(&split);
    let grd = build_grd(&doc.rules);
    let acyclic = grd.is_acyclic();
    let report = Report {
        split: Some(SplitReport {
            linear: split.linear.len(),
            transitivity: split.transitivity.len(),
            transitive: split.transitive.iter().cloned().collect(),
            rejects: split.rejects.iter().map(|(_, why)| why.clone()).collect(),
        }),
        specializations: Some(specs.into_iter().collect()),
        safety: Some(safety),
        grd: Some(GrdReport {
            acyclic,
            longest_path: acyclic.then(|| grd.longest_path()),
            edges: grd.edges.clone(),
        }),
        ..Report::default()
    };
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    0
}

fn rewriter_config(mode: ModeArg, max_steps: Option<usize>, max_pcqs: Option<usize>) -> RewriterConfig {
    RewriterConfig {
        mode: match mode {
            ModeArg::Modified => Mode::Modified,
            ModeArg::Unmodified => Mode::Unmodified,
        },
        max_steps,
        max_pcqs,
    }
}

fn cmd_rewrite(
    kb: &PathBuf,
    mode: ModeArg,
    max_steps: Option<usize>,
    max_pcqs: Option<usize>,
    emit: EmitArg,
) -> u8 {
    let doc = match load_kb(kb) {
        Ok(d) => d,
        Err(c) => return c,
    };
    if doc.queries.is_empty() {
        eprintln!("error: the KB declares no query");
        return EX_DATAERR;
    }
    let config = rewriter_config(mode, max_steps, max_pcqs);
    let mut limit_hit = false;
    for q in &doc.queries {
        let out = match rewrite(q, &doc.rules, &config) {
            Ok(o) => o,
            Err(e) => {
                eprintln!("error: {e}");
                return EX_DATAERR;
            }
        };
        limit_hit |= out.termination == Termination::LimitHit;
        let prog = translate_pattern_set(&out.pattern_set);
        let ucq = translate_queries(&out.pcqs);
        match emit {
            EmitArg::Datalog => {
                println!("% query: {}", print_query(q));
                println!("{}", prog.emit());
                for cq in &ucq {
                    println!("? :- {}.", print_query(cq));
                }
            }
            EmitArg::Json => {
                let report = Report {
                    rewrite_stats: Some(RewriteReport {
                        stats: out.stats.clone(),
                        termination: out.termination,
                        complete: out.complete,
                        pcqs: out.pcqs.len(),
                    }),
                    ..Report::default()
                };
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            }
        }
    }
    if limit_hit {
        3
    } else {
        0
    }
}

fn cmd_entail(kb: &PathBuf) -> u8 {
    let doc = match load_kb(kb) {
        Ok(d) => d,
        Err(c) => return c,
    };
    if doc.queries.is_empty() {
        eprintln!("error: the KB declares no query");
        return EX_DATAERR;
    }
    let config = RewriterConfig::default();
    let mut answers = Vec::new();
    for q in &doc.queries {
        match entails(&doc.facts, &doc.rules, q, &config) {
            Ok(a) => {
                println!("{a}");
                answers.push(a);
            }
            Err(e) => {
                eprintln!("error: {e}");
                return EX_DATAERR;
            }
        }
    }
    if answers.iter().any(|a| *a == Answer::No) {
        1
    } else if answers.iter().any(|a| *a == Answer::Unknown) {
        2
    } else {
        0
    }
}

fn cmd_saturate(kb: &PathBuf) -> u8 {
    let doc = match load_kb(kb) {
        Ok(d) => d,
        Err(c) => return c,
    };
    let split = split_rules(&doc.rules);
    if let Some((_, why)) = split.rejects.first() {
        eprintln!("error: {why}");
        return EX_DATAERR;
    }
    let prules = match lintra::rewriter::patternize_rules(&split.linear, &split.transitive) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EX_DATAERR;
        }
    };
    let mut fresh = lintra::model::Fresh::new();
    for r in &doc.rules {
        if let Some(m) = r.max_var() {
            fresh.reserve(m);
        }
    }
    let mut ps = lintra::patterns::init_pattern_set(split.transitive.iter());
    lintra::rewriter::saturate_patterns(&mut ps, &prules, &mut fresh);
    let sat = saturate(&doc.facts, &translate_pattern_set(&ps));
    for a in &sat.facts {
        println!("{a}.");
    }
    0
}

fn cmd_chase(kb: &PathBuf, depth: usize) -> u8 {
    let doc = match load_kb(kb) {
        Ok(d) => d,
        Err(c) => return c,
    };
    for state in chase_rounds(&doc.facts, &doc.rules, depth) {
        println!("round {}:", state.depth);
        for a in &state.frontier {
            println!("  {a}.");
        }
    }
    0
}

fn cmd_check(seed: u64, cases: usize, max_terms: usize, depth: usize) -> u8 {
    let report = run_check(&CheckConfig { seed, cases, max_terms, depth });
    println!(
        "cases: {}  queries compared: {}  oracle unknown: {}  disagreements: {}",
        report.cases_run,
        report.queries_compared,
        report.oracle_unknown,
        report.disagreements.len()
    );
    for d in &report.disagreements {
        println!(
            "disagreement in case {} query {}: pipeline {} vs oracle {:?}",
            d.case_idx, d.query_idx, d.pipeline, d.oracle
        );
        println!("{}", d.kb_text);
    }
    if report.disagreements.is_empty() {
        0
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EX_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.cmd {
        Cmd::Analyze { kb } => cmd_analyze(&kb),
        Cmd::Rewrite { kb, mode, max_steps, max_pcqs, emit } => {
            cmd_rewrite(&kb, mode, max_steps, max_pcqs, emit)
        }
        Cmd::Entail { kb } => cmd_entail(&kb),
        Cmd::Saturate { kb } => cmd_saturate(&kb),
        Cmd::Chase { kb, depth } => cmd_chase(&kb, depth),
        Cmd::Check { seed, cases, max_terms, depth } => cmd_check(seed, cases, max_terms, depth),
    };
    ExitCode::from(code)
}
