//! Knowledge-base text format: parser and printer.
//!
//! Grammar: facts `p(a,b).`, rules `head_atoms :- body_atoms.`, queries
//! `? :- atoms.`, directives `@transitive p.`, comments `% ...`. Variables
//! match [A-Z][A-Za-z0-9_]*, constants and predicates [a-z][a-z0-9_]*;
//! identifiers containing a double underscore are rejected, which reserves
//! the p__tc output family and the n__k chase nulls. Head variables absent
//! from a rule body are existential. A transitive directive without an
//! explicit transitivity rule implies one.

use crate::model::{Atom, Cq, ExistentialRule, FactBase, Term};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KbError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("arity mismatch at {line}:{col}: {pred} used with {found} arguments, previously {expected}")]
    Arity { pred: String, expected: usize, found: usize, line: usize, col: usize },
    #[error("fact at {line}:{col} is not ground")]
    NonGroundFact { line: usize, col: usize },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KbDocument {
    pub facts: FactBase,
    pub rules: Vec<ExistentialRule>,
    pub queries: Vec<Cq>,
    pub transitive_decls: BTreeSet<String>,
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser { src: text.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn err(&self, msg: impl Into<String>) -> KbError {
        KbError::Syntax { line: self.line, col: self.col, msg: msg.into() }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'%') => {
                    while let Some(c) = self.bump() {
                        if c == b'\n' {
                            break;
                        }
                    }
                }
                _ => return,
            }
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), KbError> {
        self.skip_trivia();
        if self.peek() == Some(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!("expected '{}'", c as char)))
        }
    }

    /// Reads an identifier; the leading character decides its kind.
    fn ident(&mut self) -> Result<String, KbError> {
        self.skip_trivia();
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() => {
                self.bump();
            }
            _ => return Err(self.err("expected identifier")),
        }
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' {
                self.bump();
            } else {
                break;
            }
        }
        let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
        if s.contains("__") {
            return Err(self.err(format!("identifier {s} contains a double underscore")));
        }
        Ok(s)
    }

    fn lower_ident(&mut self) -> Result<String, KbError> {
        let s = self.ident()?;
        if !s.as_bytes()[0].is_ascii_lowercase() {
            return Err(self.err(format!("expected a lowercase identifier, found {s}")));
        }
        if s.bytes().any(|c| c.is_ascii_uppercase()) {
            return Err(self.err(format!("constants and predicates are lowercase: {s}")));
        }
        Ok(s)
    }
}

/// Variable numbering per statement, in first-occurrence order.
#[derive(Default)]
struct VarScope {
    map: BTreeMap<String, u32>,
}

impl VarScope {
    fn get(&mut self, name: &str) -> Term {
        let next = self.map.len() as u32;
        Term::Var(*self.map.entry(name.to_string()).or_insert(next))
    }
}

fn parse_atom(
    p: &mut Parser,
    scope: &mut VarScope,
    arities: &mut BTreeMap<String, usize>,
) -> Result<Atom, KbError> {
    let (line, col) = (p.line, p.col);
    let pred = p.lower_ident()?;
    p.expect(b'(')?;
    let mut args = Vec::new();
    loop {
        let t = p.ident()?;
        if t.as_bytes()[0].is_ascii_uppercase() {
            args.push(scope.get(&t));
        } else {
            args.push(Term::Const(t));
        }
        p.skip_trivia();
        match p.peek() {
            Some(b',') => {
                p.bump();
            }
            Some(b')') => {
                p.bump();
                break;
            }
            _ => return Err(p.err("expected ',' or ')'")),
        }
    }
    match arities.get(&pred) {
        Some(&n) if n != args.len() => {
            return Err(KbError::Arity { pred, expected: n, found: args.len(), line, col })
        }
        Some(_) => {}
        None => {
            arities.insert(pred.clone(), args.len());
        }
    }
    Ok(Atom::new(pred, args))
}

fn parse_atom_list(
    p: &mut Parser,
    scope: &mut VarScope,
    arities: &mut BTreeMap<String, usize>,
) -> Result<Vec<Atom>, KbError> {
    let mut atoms = vec![parse_atom(p, scope, arities)?];
    loop {
        p.skip_trivia();
        if p.peek() == Some(b',') {
            p.bump();
            atoms.push(parse_atom(p, scope, arities)?);
        } else {
            return Ok(atoms);
        }
    }
}

fn expect_rule_arrow(p: &mut Parser) -> Result<(), KbError> {
    p.expect(b':')?;
    if p.peek() == Some(b'-') {
        p.bump();
        Ok(())
    } else {
        Err(p.err("expected ':-'"))
    }
}

/// Renumbers a query's variables by first occurrence over the set order, so
/// that printing and reparsing reproduce the same document. Iterated because
/// renumbering can reorder atoms over the same predicate.
fn normalize_query(mut atoms: Vec<Atom>) -> Cq {
    for _ in 0..atoms.len() + 2 {
        atoms.sort();
        atoms.dedup();
        let mut map: BTreeMap<Term, Term> = BTreeMap::new();
        for a in &atoms {
            for t in &a.args {
                if t.is_var() && !map.contains_key(t) {
                    // Offset keeps renaming collision-free; reduced below.
                    let n = map.len() as u32;
                    map.insert(t.clone(), Term::Var(1_000_000 + n));
                }
            }
        }
        let reduced: BTreeMap<Term, Term> = map
            .into_iter()
            .map(|(k, v)| match v {
                Term::Var(n) => (k, Term::Var(n - 1_000_000)),
                other => (k, other),
            })
            .collect();
        let renamed: Vec<Atom> = atoms.iter().map(|a| a.apply(&reduced)).collect();
        if renamed == atoms {
            break;
        }
        atoms = renamed;
    }
    atoms.into_iter().collect()
}

pub fn parse_kb(text: &str) -> Result<KbDocument, KbError> {
    let mut p = Parser::new(text);
    let mut doc = KbDocument::default();
    let mut arities: BTreeMap<String, usize> = BTreeMap::new();
    loop {
        p.skip_trivia();
        match p.peek() {
            None => break,
            Some(b'@') => {
                p.bump();
                let word = p.ident()?;
                if word != "transitive" {
                    return Err(p.err(format!("unknown directive @{word}")));
                }
                let (line, col) = (p.line, p.col);
                let pred = p.lower_ident()?;
                match arities.get(&pred) {
                    Some(&n) if n != 2 => {
                        return Err(KbError::Arity { pred, expected: n, found: 2, line, col })
                    }
                    _ => {
                        arities.insert(pred.clone(), 2);
                    }
                }
                p.expect(b'.')?;
                doc.transitive_decls.insert(pred);
            }
            Some(b'?') => {
                p.bump();
                expect_rule_arrow(&mut p)?;
                let mut scope = VarScope::default();
                let atoms = parse_atom_list(&mut p, &mut scope, &mut arities)?;
                p.expect(b'.')?;
                doc.queries.push(normalize_query(atoms));
            }
            Some(_) => {
                let (line, col) = (p.line, p.col);
                let mut scope = VarScope::default();
                let head = parse_atom_list(&mut p, &mut scope, &mut arities)?;
                p.skip_trivia();
                match p.peek() {
                    Some(b'.') => {
                        p.bump();
                        if head.len() != 1 {
                            return Err(KbError::Syntax {
                                line,
                                col,
                                msg: "a fact statement holds a single atom".into(),
                            });
                        }
                        if !head[0].is_ground() {
                            return Err(KbError::NonGroundFact { line, col });
                        }
                        doc.facts.insert(head.into_iter().next().unwrap());
                    }
                    Some(b':') => {
                        expect_rule_arrow(&mut p)?;
                        let body = parse_atom_list(&mut p, &mut scope, &mut arities)?;
                        p.expect(b'.')?;
                        doc.rules.push(ExistentialRule::new(body, head));
                    }
                    _ => return Err(p.err("expected '.' or ':-'")),
                }
            }
        }
    }
    // Implied transitivity rules for declared predicates.
    for pred in doc.transitive_decls.clone() {
        let present = doc
            .rules
            .iter()
            .any(|r| crate::analysis::is_transitivity_rule(r).as_deref() == Some(&pred));
        if !present {
            // Numbered head-first so the rule survives print/reparse.
            doc.rules.push(ExistentialRule::new(
                vec![
                    Atom::new(pred.clone(), vec![Term::Var(0), Term::Var(2)]),
                    Atom::new(pred.clone(), vec![Term::Var(2), Term::Var(1)]),
                ],
                vec![Atom::new(pred.clone(), vec![Term::Var(0), Term::Var(1)])],
            ));
        }
    }
    Ok(doc)
}

fn print_atom(a: &Atom, names: &mut BTreeMap<Term, String>) -> String {
    let args: Vec<String> = a
        .args
        .iter()
        .map(|t| match t {
            Term::Var(_) => {
                let n = names.len();
                names.entry(t.clone()).or_insert_with(|| format!("V{n}")).clone()
            }
            other => other.to_string(),
        })
        .collect();
    format!("{}({})", a.pred, args.join(","))
}

fn print_atoms(atoms: &[Atom], names: &mut BTreeMap<Term, String>) -> String {
    atoms.iter().map(|a| print_atom(a, names)).collect::<Vec<_>>().join(", ")
}

pub fn print_kb(doc: &KbDocument) -> String {
    let mut out = String::new();
    for p in &doc.transitive_decls {
        out.push_str(&format!("@transitive {p}.\n"));
    }
    for f in &doc.facts.facts {
        out.push_str(&format!("{f}.\n"));
    }
    for r in &doc.rules {
        let mut names = BTreeMap::new();
        let head = print_atoms(&r.head, &mut names);
        let body = print_atoms(&r.body, &mut names);
        out.push_str(&format!("{head} :- {body}.\n"));
    }
    for q in &doc.queries {
        let atoms: Vec<Atom> = q.iter().cloned().collect();
        let mut names = BTreeMap::new();
        out.push_str(&format!("? :- {}.\n", print_atoms(&atoms, &mut names)));
    }
    out
}
