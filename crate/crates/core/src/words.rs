//! Group-word expressions: the AST, a recursive-descent parser and a
//! canonical printer.
//!
//! Concrete syntax (whitespace-insensitive):
//!
//! ```text
//! expr   := factor+
//! factor := atom ("^" signed-int)*
//! atom   := "x" int                         generator
//!         | "e"                             identity
//!         | "(" expr ")"                    grouped product
//!         | "inv(" expr ")"                 inverse
//!         | "[" expr ("," expr)+ "]"        left-normalized bracket
//!         | "[" expr ",_" int expr "]"      Engel bracket
//! ```
//!
//! A parenthesised group always denotes a [`Expr::Product`], even with a
//! single factor, so that printing and re-parsing reproduces the tree
//! exactly. Nothing here knows about relations; semantics live in
//! [`crate::collect`].

use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use thiserror::Error;

/// One-based index of a generator `x_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GenIndex(u32);

impl GenIndex {
    /// Panics on zero; generator indices are one-based.
    pub fn new(value: u32) -> GenIndex {
        assert!(value >= 1, "generator indices start at 1");
        GenIndex(value)
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Display for GenIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Gen(GenIndex),
    /// The empty product is the identity.
    Product(Vec<Expr>),
    Inverse(Box<Expr>),
    Power(Box<Expr>, BigInt),
    /// `[a,b] = a^-1 b^-1 a b`.
    Bracket(Box<Expr>, Box<Expr>),
    /// `[a,_k b]`, with `k >= 1`.
    Engel(Box<Expr>, Box<Expr>, u32),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WordError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("generator x{index} out of range 1..={n} (at byte {pos})")]
    GeneratorOutOfRange { index: u64, n: u32, pos: usize },
    #[error("Engel depth must be at least 1")]
    EngelDepth,
}

impl Expr {
    pub fn identity() -> Expr {
        Expr::Product(Vec::new())
    }

    pub fn gen(i: u32) -> Expr {
        Expr::Gen(GenIndex::new(i))
    }

    /// The product `x_lo x_{lo+1} ... x_hi` (identity when `lo > hi`).
    pub fn gen_product(lo: u32, hi: u32) -> Expr {
        Expr::Product((lo..=hi).map(Expr::gen).collect())
    }

    pub fn product(factors: Vec<Expr>) -> Expr {
        Expr::Product(factors)
    }

    pub fn inverse(self) -> Expr {
        Expr::Inverse(Box::new(self))
    }

    pub fn pow(self, k: impl Into<BigInt>) -> Expr {
        Expr::Power(Box::new(self), k.into())
    }

    pub fn bracket(a: Expr, b: Expr) -> Expr {
        Expr::Bracket(Box::new(a), Box::new(b))
    }

    /// Left-normalized bracket `[g1, g2, ..., gk]`; a single entry is returned as is.
    pub fn left_normed(entries: Vec<Expr>) -> Expr {
        let mut it = entries.into_iter();
        let first = it.next().expect("left-normed bracket needs at least one entry");
        it.fold(first, Expr::bracket)
    }

    /// Left-normalized bracket of generators.
    pub fn gen_bracket(indices: &[u32]) -> Expr {
        Expr::left_normed(indices.iter().map(|&i| Expr::gen(i)).collect())
    }

    /// Largest generator index mentioned, 0 for generator-free expressions.
    pub fn max_generator(&self) -> u32 {
        match self {
            Expr::Gen(g) => g.get(),
            Expr::Product(v) => v.iter().map(Expr::max_generator).max().unwrap_or(0),
            Expr::Inverse(a) | Expr::Power(a, _) => a.max_generator(),
            Expr::Bracket(a, b) | Expr::Engel(a, b, _) => a.max_generator().max(b.max_generator()),
        }
    }
}

/// `[x,_depth y]` unfolded into nested [`Expr::Bracket`] nodes.
pub fn engel(x: Expr, y: Expr, depth: u32) -> Result<Expr, WordError> {
    if depth < 1 {
        return Err(WordError::EngelDepth);
    }
    let mut acc = Expr::bracket(x, y.clone());
    for _ in 1..depth {
        acc = Expr::bracket(acc, y.clone());
    }
    Ok(acc)
}

pub fn parse(text: &str, n: u32) -> Result<Expr, WordError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0, n };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    n: u32,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> WordError {
        WordError::Syntax { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), WordError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn starts_factor(&mut self) -> bool {
        match self.peek() {
            Some(b'x' | b'e' | b'(' | b'[') => true,
            Some(b'i') => self.src[self.pos..].starts_with(b"inv("),
            _ => false,
        }
    }

    fn expr(&mut self) -> Result<Expr, WordError> {
        let mut factors = Vec::new();
        while self.starts_factor() {
            factors.push(self.factor()?);
        }
        match factors.len() {
            0 => Err(self.err("expected an expression")),
            1 => Ok(factors.pop().unwrap()),
            _ => Ok(Expr::Product(factors)),
        }
    }

    fn factor(&mut self) -> Result<Expr, WordError> {
        let mut e = self.atom()?;
        while self.peek() == Some(b'^') {
            self.pos += 1;
            let k = self.signed_int()?;
            e = Expr::Power(Box::new(e), k);
        }
        Ok(e)
    }

    fn digits(&mut self) -> Result<&'a [u8], WordError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected digits"));
        }
        Ok(&self.src[start..self.pos])
    }

    fn signed_int(&mut self) -> Result<BigInt, WordError> {
        let negative = match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                true
            }
            Some(b'+') => {
                self.pos += 1;
                false
            }
            _ => false,
        };
        let d = self.digits()?;
        let v = BigInt::parse_bytes(d, 10).expect("ascii digits");
        Ok(if negative { -v } else { v })
    }

    fn small_int(&mut self) -> Result<u64, WordError> {
        let at = self.pos;
        let d = self.digits()?;
        std::str::from_utf8(d)
            .unwrap()
            .parse::<u64>()
            .map_err(|_| WordError::Syntax { pos: at, msg: "integer too large".into() })
    }

    fn atom(&mut self) -> Result<Expr, WordError> {
        match self.peek() {
            Some(b'x') => {
                self.pos += 1;
                let at = self.pos;
                let i = self.small_int()?;
                if i < 1 || i > u64::from(self.n) {
                    return Err(WordError::GeneratorOutOfRange { index: i, n: self.n, pos: at });
                }
                Ok(Expr::Gen(GenIndex(i as u32)))
            }
            Some(b'e') => {
                self.pos += 1;
                Ok(Expr::identity())
            }
            Some(b'i') => {
                // starts_factor guarantees "inv("
                self.pos += 3;
                self.expect(b'(')?;
                let inner = self.expr()?;
                self.expect(b')')?;
                Ok(Expr::Inverse(Box::new(inner)))
            }
            Some(b'(') => {
                self.pos += 1;
                let mut factors = Vec::new();
                while self.starts_factor() {
                    factors.push(self.factor()?);
                }
                if factors.is_empty() {
                    return Err(self.err("empty parentheses"));
                }
                self.expect(b')')?;
                Ok(Expr::Product(factors))
            }
            Some(b'[') => {
                self.pos += 1;
                let first = self.expr()?;
                self.expect(b',')?;
                if self.peek() == Some(b'_') {
                    self.pos += 1;
                    let at = self.pos;
                    let k = self.small_int()?;
                    if k < 1 || k > u64::from(u32::MAX) {
                        return Err(WordError::Syntax { pos: at, msg: "Engel depth must be >= 1".into() });
                    }
                    let second = self.expr()?;
                    self.expect(b']')?;
                    return Ok(Expr::Engel(Box::new(first), Box::new(second), k as u32));
                }
                let mut acc = Expr::bracket(first, self.expr()?);
                while self.peek() == Some(b',') {
                    self.pos += 1;
                    acc = Expr::bracket(acc, self.expr()?);
                }
                self.expect(b']')?;
                Ok(acc)
            }
            _ => Err(self.err("expected 'x', 'e', 'inv(', '(' or '['")),
        }
    }
}

/// Canonical concrete syntax; `parse(&print(e), n) == e` for every tree.
pub fn print(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(e, &mut out);
    out
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print(self))
    }
}

fn write_expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Product(v) if v.len() >= 2 => {
            for (i, f) in v.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write_factor(f, out);
            }
        }
        _ => write_factor(e, out),
    }
}

fn write_factor(e: &Expr, out: &mut String) {
    match e {
        Expr::Gen(g) => out.push_str(&g.to_string()),
        Expr::Product(v) if v.is_empty() => out.push('e'),
        Expr::Product(v) => {
            out.push('(');
            for (i, f) in v.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write_factor(f, out);
            }
            out.push(')');
        }
        Expr::Inverse(a) => {
            out.push_str("inv(");
            write_expr(a, out);
            out.push(')');
        }
        Expr::Power(a, k) => {
            write_factor(a, out);
            out.push('^');
            out.push_str(&k.to_string());
        }
        Expr::Bracket(..) => {
            // flatten the left spine: [[a,b],c] prints as [a,b,c]
            let mut spine = Vec::new();
            let mut cur = e;
            while let Expr::Bracket(l, r) = cur {
                spine.push(r.as_ref());
                cur = l;
            }
            out.push('[');
            write_expr(cur, out);
            for r in spine.iter().rev() {
                out.push(',');
                write_expr(r, out);
            }
            out.push(']');
        }
        Expr::Engel(a, b, k) => {
            out.push('[');
            write_expr(a, out);
            out.push_str(&format!(",_{} ", k));
            write_expr(b, out);
            out.push(']');
        }
    }
}

/// A random expression over `x1..=xn` of nesting depth at most `depth`.
pub fn random_expr<R: rand::Rng + ?Sized>(rng: &mut R, n: u32, depth: u32) -> Expr {
    if depth == 0 || rng.gen_bool(0.3) {
        return Expr::gen(rng.gen_range(1..=n));
    }
    let d = depth - 1;
    match rng.gen_range(0..6) {
        0 | 1 => {
            let len = rng.gen_range(2..=3);
            Expr::Product((0..len).map(|_| random_expr(rng, n, d)).collect())
        }
        2 => random_expr(rng, n, d).inverse(),
        3 => {
            let k = rng.gen_range(-3i64..=3);
            random_expr(rng, n, d).pow(k)
        }
        4 => Expr::bracket(random_expr(rng, n, d), random_expr(rng, n, d)),
        _ => {
            let k = rng.gen_range(1..=3);
            Expr::Engel(Box::new(random_expr(rng, n, d)), Box::new(random_expr(rng, n, d)), k)
        }
    }
}

/// Binomial coefficient as an exact big integer.
pub fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}
