//! Query rewriting and entailment for knowledge bases combining linear
//! existential rules with transitivity rules.
//!
//! The pipeline compiles a rule set into a Datalog program over `p__tc`
//! predicates plus a union of conjunctive queries, such that entailment over
//! a fact base reduces to saturating the facts and evaluating the UCQ.
//! A brute-force chase oracle provides independent ground truth for
//! cross-validation.

pub mod analysis;
pub mod canon;
pub mod check;
pub mod datalog;
pub mod kb;
pub mod model;
pub mod oracle;
pub mod patterns;
pub mod rewriter;
pub mod unification;
