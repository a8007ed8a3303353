//! Boolean gene-regulatory networks with asynchronous update semantics.
//!
//! States are packed into a `u32` where gene `i` (the i-th rule in the file)
//! lives at bit `i`. Bit strings render gene 0 leftmost.

use std::collections::HashMap;

use rand::Rng as _;

use crate::error::{CoreError, Result};
use crate::seed::Rng;

pub const MAX_GENES: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Const(bool),
    Var(usize),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, state: u32) -> bool {
        match self {
            Expr::Const(b) => *b,
            Expr::Var(i) => state >> i & 1 == 1,
            Expr::Not(e) => !e.eval(state),
            Expr::And(a, b) => a.eval(state) && b.eval(state),
            Expr::Or(a, b) => a.eval(state) || b.eval(state),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BooleanNetwork {
    names: Vec<String>,
    rules: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    And,
    Or,
    Not,
    LParen,
    RParen,
}

fn tokenize(src: &str, line: usize) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '(' {
            chars.next();
            out.push(Tok::LParen);
        } else if c == ')' {
            chars.next();
            out.push(Tok::RParen);
        } else if c.is_ascii_alphanumeric() || c == '_' {
            let mut word = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    word.push(c);
                    chars.next();
                } else {
                    break;
                }
            }
            out.push(match word.as_str() {
                "AND" => Tok::And,
                "OR" => Tok::Or,
                "NOT" => Tok::Not,
                _ => Tok::Ident(word),
            });
        } else {
            return Err(CoreError::Rules { line, msg: format!("unexpected character {c:?}") });
        }
    }
    Ok(out)
}

/// Recursive descent with precedence NOT > AND > OR.
struct Parser<'a> {
    toks: &'a [Tok],
    pos: usize,
    line: usize,
    index: &'a HashMap<String, usize>,
}

impl Parser<'_> {
    fn err(&self, msg: impl Into<String>) -> CoreError {
        CoreError::Rules { line: self.line, msg: msg.into() }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn or(&mut self) -> Result<Expr> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            lhs = Expr::Or(Box::new(lhs), Box::new(self.and()?));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            lhs = Expr::And(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.toks.get(self.pos).cloned() {
            Some(Tok::Not) => {
                self.pos += 1;
                Ok(Expr::Not(Box::new(self.unary()?)))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.or()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.err("missing closing parenthesis"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                match name.as_str() {
                    "TRUE" | "true" => Ok(Expr::Const(true)),
                    "FALSE" | "false" => Ok(Expr::Const(false)),
                    _ => self
                        .index
                        .get(&name)
                        .map(|&i| Expr::Var(i))
                        .ok_or_else(|| self.err(format!("unknown gene {name:?}"))),
                }
            }
            Some(t) => Err(self.err(format!("unexpected token {t:?}"))),
            None => Err(self.err("unexpected end of expression")),
        }
    }
}

impl BooleanNetwork {
    /// Parses `name := expr` lines. `#` starts a comment; blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut defs: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (name, expr) = body
                .split_once(":=")
                .ok_or(CoreError::Rules { line, msg: "expected `gene := expression`".into() })?;
            let name = name.trim();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(CoreError::Rules { line, msg: format!("invalid gene name {name:?}") });
            }
            defs.push((line, name.to_string(), expr.trim().to_string()));
        }
        if defs.is_empty() {
            return Err(CoreError::Rules { line: 0, msg: "no rules found".into() });
        }
        if defs.len() > MAX_GENES {
            return Err(CoreError::Rules { line: 0, msg: format!("at most {MAX_GENES} genes are supported") });
        }
        let mut index = HashMap::new();
        for (i, (line, name, _)) in defs.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(CoreError::Rules { line: *line, msg: format!("gene {name:?} defined twice") });
            }
        }
        let mut rules = Vec::with_capacity(defs.len());
        for (line, _, src) in &defs {
            let toks = tokenize(src, *line)?;
            let mut p = Parser { toks: &toks, pos: 0, line: *line, index: &index };
            let e = p.or()?;
            if p.pos != toks.len() {
                return Err(p.err("trailing tokens after expression"));
            }
            rules.push(e);
        }
        Ok(BooleanNetwork { names: defs.into_iter().map(|d| d.1).collect(), rules })
    }

    pub fn n_genes(&self) -> usize {
        self.rules.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rule(&self, gene: usize) -> &Expr {
        &self.rules[gene]
    }

    pub fn eval_rule(&self, gene: usize, state: u32) -> bool {
        self.rules[gene].eval(state)
    }

    /// Every gene's rule agrees with its current value.
    pub fn is_attractor(&self, state: u32) -> bool {
        (0..self.n_genes()).all(|g| self.eval_rule(g, state) == (state >> g & 1 == 1))
    }

    /// Sets `gene` to the value its rule dictates on `state`.
    pub fn update_gene(&self, state: u32, gene: usize) -> u32 {
        if self.eval_rule(gene, state) {
            state | 1 << gene
        } else {
            state & !(1 << gene)
        }
    }

    /// One asynchronous update: a uniformly chosen gene is set to its rule value.
    pub fn async_update(&self, state: u32, rng: &mut Rng) -> u32 {
        let g = rng.random_range(0..self.n_genes());
        self.update_gene(state, g)
    }

    /// All fixed points, by exhaustive scan of the state space.
    pub fn attractors(&self) -> Vec<u32> {
        (0..1u32 << self.n_genes()).filter(|&s| self.is_attractor(s)).collect()
    }

    pub fn to_bitstring(&self, state: u32) -> String {
        (0..self.n_genes()).map(|g| if state >> g & 1 == 1 { '1' } else { '0' }).collect()
    }

    pub fn parse_bitstring(&self, s: &str) -> Result<u32> {
        if s.len() != self.n_genes() {
            return Err(CoreError::arg(format!(
                "state string has length {}, expected {}",
                s.len(),
                self.n_genes()
            )));
        }
        s.chars().enumerate().try_fold(0u32, |acc, (i, c)| match c {
            '0' => Ok(acc),
            '1' => Ok(acc | 1 << i),
            other => Err(CoreError::arg(format!("invalid bit {other:?} in state string"))),
        })
    }

    pub fn to_vec(&self, state: u32) -> Vec<f64> {
        (0..self.n_genes()).map(|g| f64::from(state >> g & 1)).collect()
    }

    /// Packs a 0/1 vector; entries are thresholded at 0.5.
    pub fn from_slice(&self, v: &[f64]) -> Result<u32> {
        crate::error::check_dim(self.n_genes(), v.len())?;
        Ok(v.iter().enumerate().fold(0u32, |acc, (i, &x)| if x >= 0.5 { acc | 1 << i } else { acc }))
    }
}
