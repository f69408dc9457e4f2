//! Normal forms by commutator collection.
//!
//! Elements are ordered products `prod_b b^{a_b}` over the canonical basis
//! of left-normalized distinct-entry commutators (see [`basis`]). The
//! presentation is the one of the reduced free group on `n` generators,
//! optionally with every basis element of order `p^r`.
//!
//! Every relator with a repeated generator is killed, so the commutator
//! of two basis elements is trivial when their supports meet, and
//! otherwise is a product of basis elements supported on exactly the
//! union of the supports. These all commute with each other and with both
//! factors, which keeps the collector below simple.

pub mod basis;
pub mod cache;
pub mod consistency;

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::words::Expr;
pub use basis::{enumerate_basis, expected_basis_size, BasisCommutator};

pub type Exponent = i128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CoeffMode {
    Integers,
    ModPrimePower { p: u32, r: u32 },
}

impl CoeffMode {
    pub fn modulus(self) -> Option<Exponent> {
        match self {
            CoeffMode::Integers => None,
            CoeffMode::ModPrimePower { p, r } => Some(Exponent::from(p).pow(r)),
        }
    }

    pub fn prime(self) -> Option<u32> {
        match self {
            CoeffMode::Integers => None,
            CoeffMode::ModPrimePower { p, .. } => Some(p),
        }
    }

    /// Checks that `p` is an odd prime, `r >= 1` and `p^r < 2^60`.
    pub fn validate(self) -> Result<(), CollectError> {
        if let CoeffMode::ModPrimePower { p, r } = self {
            let prime = p > 2 && (2..p).take_while(|d| d * d <= p).all(|d| p % d != 0);
            let fits = u64::from(p).checked_pow(r).is_some_and(|q| q < (1 << 60));
            if !prime || r < 1 || !fits {
                return Err(CollectError::InvalidMode(self));
            }
        }
        Ok(())
    }
}

impl fmt::Display for CoeffMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoeffMode::Integers => f.write_str("Z"),
            CoeffMode::ModPrimePower { p, r } => write!(f, "Z/{}^{}", p, r),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ModeRepr {
    Tag(String),
    Prime { p: u32, r: u32 },
}

impl Serialize for CoeffMode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            CoeffMode::Integers => ModeRepr::Tag("Z".into()),
            CoeffMode::ModPrimePower { p, r } => ModeRepr::Prime { p, r },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CoeffMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match ModeRepr::deserialize(d)? {
            ModeRepr::Tag(t) if t == "Z" => Ok(CoeffMode::Integers),
            ModeRepr::Tag(t) => Err(serde::de::Error::custom(format!("unknown mode {:?}", t))),
            ModeRepr::Prime { p, r } => Ok(CoeffMode::ModPrimePower { p, r }),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CollectError {
    #[error("generator x{index} out of range for n={n}")]
    IndexOutOfRange { index: u32, n: u32 },
    #[error("normal form belongs to a different context")]
    ContextMismatch,
    #[error("exponent overflow in integral mode")]
    Overflow,
    #[error("invalid coefficient mode {0}: need an odd prime p, r >= 1 and p^r < 2^60")]
    InvalidMode(CoeffMode),
    #[error("invalid context: {0}")]
    InvalidContext(String),
    #[error("basis index {0} out of range")]
    BasisIndex(usize),
}

/// Parameters identifying a context; two normal forms are comparable iff
/// their keys agree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContextKey {
    pub n: u32,
    pub mode: CoeffMode,
    pub class_bound: u32,
}

/// Exponent vector over the ordered basis of one context.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NormalForm {
    key: ContextKey,
    exps: Vec<Exponent>,
}

impl NormalForm {
    pub fn key(&self) -> ContextKey {
        self.key
    }

    pub fn is_identity(&self) -> bool {
        self.exps.iter().all(|&e| e == 0)
    }

    pub fn exponent(&self, index: usize) -> Exponent {
        self.exps[index]
    }

    pub fn exponents(&self) -> &[Exponent] {
        &self.exps
    }

    /// Nonzero `(basis index, exponent)` pairs in basis order.
    pub fn terms(&self) -> impl Iterator<Item = (usize, Exponent)> + '_ {
        self.exps.iter().enumerate().filter(|(_, &e)| e != 0).map(|(i, &e)| (i, e))
    }

    pub fn to_sparse(&self) -> Vec<(usize, Exponent)> {
        self.terms().collect()
    }

    /// Index of the first nonzero coordinate.
    pub fn depth(&self) -> Option<usize> {
        self.exps.iter().position(|&e| e != 0)
    }
}

type Terms = Arc<[(usize, Exponent)]>;

pub struct GroupContext {
    key: ContextKey,
    modulus: Option<Exponent>,
    basis: Vec<BasisCommutator>,
    lookup: HashMap<Vec<u32>, usize>,
    /// `[b_i, b_j]` at `i * len + j`; filled on demand.
    sc: Vec<OnceLock<Terms>>,
}

impl fmt::Debug for GroupContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupContext").field("key", &self.key).field("basis_len", &self.basis.len()).finish()
    }
}

fn add(a: Exponent, b: Exponent) -> Result<Exponent, CollectError> {
    a.checked_add(b).ok_or(CollectError::Overflow)
}

fn mul(a: Exponent, b: Exponent) -> Result<Exponent, CollectError> {
    a.checked_mul(b).ok_or(CollectError::Overflow)
}

impl GroupContext {
    pub fn new(n: u32, mode: CoeffMode) -> Result<GroupContext, CollectError> {
        GroupContext::with_class_bound(n, mode, n)
    }

    /// The quotient by the `(class_bound + 1)`-st term of the lower central series.
    pub fn with_class_bound(n: u32, mode: CoeffMode, class_bound: u32) -> Result<GroupContext, CollectError> {
        mode.validate()?;
        if !(1..=8).contains(&n) {
            return Err(CollectError::InvalidContext(format!("n={} outside 1..=8", n)));
        }
        if class_bound < 1 || class_bound > n {
            return Err(CollectError::InvalidContext(format!("class bound {} outside 1..={}", class_bound, n)));
        }
        let basis = enumerate_basis(n, class_bound);
        let lookup = basis.iter().enumerate().map(|(i, b)| (b.entries().to_vec(), i)).collect();
        let sc = (0..basis.len() * basis.len()).map(|_| OnceLock::new()).collect();
        Ok(GroupContext { key: ContextKey { n, mode, class_bound }, modulus: mode.modulus(), basis, lookup, sc })
    }

    pub fn n(&self) -> u32 {
        self.key.n
    }

    pub fn mode(&self) -> CoeffMode {
        self.key.mode
    }

    pub fn key(&self) -> ContextKey {
        self.key
    }

    pub fn class_bound(&self) -> u32 {
        self.key.class_bound
    }

    pub fn modulus(&self) -> Option<Exponent> {
        self.modulus
    }

    pub fn basis(&self) -> &[BasisCommutator] {
        &self.basis
    }

    pub fn basis_len(&self) -> usize {
        self.basis.len()
    }

    pub fn basis_index(&self, entries: &[u32]) -> Option<usize> {
        self.lookup.get(entries).copied()
    }

    pub fn identity(&self) -> NormalForm {
        NormalForm { key: self.key, exps: vec![0; self.basis.len()] }
    }

    /// `b_index^exponent`.
    pub fn basis_power(&self, index: usize, exponent: Exponent) -> Result<NormalForm, CollectError> {
        if index >= self.basis.len() {
            return Err(CollectError::BasisIndex(index));
        }
        let mut nf = self.identity();
        nf.exps[index] = self.reduce(exponent);
        Ok(nf)
    }

    pub fn basis_element(&self, index: usize) -> Result<NormalForm, CollectError> {
        self.basis_power(index, 1)
    }

    pub fn generator(&self, i: u32) -> Result<NormalForm, CollectError> {
        if i < 1 || i > self.n() {
            return Err(CollectError::IndexOutOfRange { index: i, n: self.n() });
        }
        self.basis_element(i as usize - 1)
    }

    /// Builds a normal form from sparse terms, canonicalizing exponents.
    pub fn from_sparse(&self, terms: &[(usize, Exponent)]) -> Result<NormalForm, CollectError> {
        let mut nf = self.identity();
        for &(i, e) in terms {
            if i >= self.basis.len() {
                return Err(CollectError::BasisIndex(i));
            }
            nf.exps[i] = self.reduce(add(nf.exps[i], e)?);
        }
        Ok(nf)
    }

    fn check(&self, nf: &NormalForm) -> Result<(), CollectError> {
        if nf.key != self.key || nf.exps.len() != self.basis.len() {
            return Err(CollectError::ContextMismatch);
        }
        Ok(())
    }

    pub(crate) fn reduce(&self, e: Exponent) -> Exponent {
        match self.modulus {
            Some(q) => e.rem_euclid(q),
            None => e,
        }
    }

    fn reduce_big(&self, e: &BigInt) -> Result<Exponent, CollectError> {
        match self.modulus {
            Some(q) => Ok(e.mod_floor(&BigInt::from(q)).to_i128().expect("residue fits")),
            None => e.to_i128().ok_or(CollectError::Overflow),
        }
    }

    /// Normal form of `[b_i, b_j]` as sparse terms, memoized.
    pub(crate) fn sc_terms(&self, i: usize, j: usize) -> Terms {
        let len = self.basis.len();
        self.sc[i * len + j].get_or_init(|| self.compute_sc(i, j)).clone()
    }

    /// `[b_i, b_j]`, computed by recursion on the weight of `b_j` through
    /// the identities `[u,v] = [v,u]^-1` and
    /// `[u,[v,x]] = [[u,v],x] [[u,x],v]^-1`, which hold exactly here
    /// because both sides are supported on one fixed set of generators.
    fn compute_sc(&self, i: usize, j: usize) -> Terms {
        let (bi, bj) = (&self.basis[i], &self.basis[j]);
        if bi.overlaps(bj) || (bi.weight() + bj.weight()) as u32 > self.key.class_bound {
            return Arc::from(Vec::new());
        }
        if bi.first() > bj.first() {
            let swapped = self.sc_terms(j, i);
            return self.finish(swapped.iter().map(|&(m, e)| (m, -e)));
        }
        if bj.weight() == 1 {
            let mut entries = bi.entries().to_vec();
            entries.push(bj.first());
            let m = self.lookup[&entries];
            return Arc::from(vec![(m, 1)]);
        }
        let prefix = self.lookup[&bj.entries()[..bj.weight() - 1]];
        let x = bj.last() as usize - 1;
        let mut acc: Vec<(usize, Exponent)> = Vec::new();
        for &(c, f) in self.sc_terms(i, prefix).iter() {
            for &(m, g) in self.sc_terms(c, x).iter() {
                acc.push((m, f * g));
            }
        }
        for &(d, f) in self.sc_terms(i, x).iter() {
            for &(m, g) in self.sc_terms(d, prefix).iter() {
                acc.push((m, -(f * g)));
            }
        }
        self.finish(acc.into_iter())
    }

    fn finish(&self, terms: impl Iterator<Item = (usize, Exponent)>) -> Terms {
        let mut dense: std::collections::BTreeMap<usize, Exponent> = Default::default();
        for (m, e) in terms {
            *dense.entry(m).or_default() += e;
        }
        let v: Vec<(usize, Exponent)> =
            dense.into_iter().map(|(m, e)| (m, self.reduce(e))).filter(|&(_, e)| e != 0).collect();
        Arc::from(v)
    }

    /// Normal form of `[b_i, b_j]` for basis indices `i`, `j`.
    pub fn structure_constant(&self, i: usize, j: usize) -> Result<NormalForm, CollectError> {
        let len = self.basis.len();
        if i >= len {
            return Err(CollectError::BasisIndex(i));
        }
        if j >= len {
            return Err(CollectError::BasisIndex(j));
        }
        self.from_sparse(&self.sc_terms(i, j))
    }

    /// Replaces a structure constant before it is first used. Only meant
    /// for fault-injection tests of [`consistency::consistency_check`].
    #[doc(hidden)]
    pub fn inject_structure_constant(&self, i: usize, j: usize, value: &NormalForm) -> Result<(), CollectError> {
        self.check(value)?;
        let len = self.basis.len();
        self.sc[i * len + j]
            .set(Arc::from(value.to_sparse()))
            .map_err(|_| CollectError::InvalidContext("structure constant already computed".into()))
    }

    pub(crate) fn sc_cell(&self, i: usize, j: usize) -> &OnceLock<Terms> {
        &self.sc[i * self.basis.len() + j]
    }

    /// Computes every structure constant.
    pub fn warm(&self) {
        let len = self.basis.len();
        for i in 0..len {
            for j in 0..len {
                self.sc_terms(i, j);
            }
        }
    }

    /// Right-multiplies `v` by `b_j^e`, collecting from the left.
    ///
    /// With `v = head * b_j^{v_j} * tail`, the product is
    /// `head * b_j^{v_j + e} * tail^{b_j^e}` and each tail syllable
    /// conjugates to `b_k^{a} [b_k,b_j]^{e a}`.
    fn mul_syllable(&self, v: &mut [Exponent], j: usize, e: Exponent) -> Result<(), CollectError> {
        let e = self.reduce(e);
        if e == 0 {
            return Ok(());
        }
        let mut tail = Vec::new();
        for (k, slot) in v.iter_mut().enumerate().skip(j + 1) {
            if *slot != 0 {
                tail.push((k, *slot));
                *slot = 0;
            }
        }
        v[j] = self.reduce(add(v[j], e)?);
        for (k, a) in tail {
            self.mul_syllable(v, k, a)?;
            let c = self.sc_terms(k, j);
            if c.is_empty() {
                continue;
            }
            let ea = mul(e, a)?;
            for &(m, f) in c.iter() {
                self.mul_syllable(v, m, mul(f, ea)?)?;
            }
        }
        Ok(())
    }

    pub fn multiply(&self, a: &NormalForm, b: &NormalForm) -> Result<NormalForm, CollectError> {
        self.check(a)?;
        self.check(b)?;
        let mut out = a.clone();
        for (j, e) in b.terms() {
            self.mul_syllable(&mut out.exps, j, e)?;
        }
        Ok(out)
    }

    pub fn inverse(&self, a: &NormalForm) -> Result<NormalForm, CollectError> {
        self.check(a)?;
        let mut out = self.identity();
        for j in (0..a.exps.len()).rev() {
            if a.exps[j] != 0 {
                let neg = a.exps[j].checked_neg().ok_or(CollectError::Overflow)?;
                self.mul_syllable(&mut out.exps, j, neg)?;
            }
        }
        Ok(out)
    }

    pub fn power(&self, a: &NormalForm, k: i64) -> Result<NormalForm, CollectError> {
        self.power_big(a, &BigInt::from(k))
    }

    /// `a^k` by square-and-multiply.
    pub fn power_big(&self, a: &NormalForm, k: &BigInt) -> Result<NormalForm, CollectError> {
        self.check(a)?;
        let base = if k.is_negative() { self.inverse(a)? } else { a.clone() };
        let mut exp = k.abs();
        let mut result = self.identity();
        let mut square = base;
        let two = BigInt::from(2);
        while !exp.is_zero() {
            if exp.is_odd() {
                result = self.multiply(&result, &square)?;
            }
            exp /= &two;
            if !exp.is_zero() {
                square = self.multiply(&square, &square)?;
            }
        }
        Ok(result)
    }

    /// `[a,b] = a^-1 b^-1 a b`.
    pub fn commutator(&self, a: &NormalForm, b: &NormalForm) -> Result<NormalForm, CollectError> {
        let ia = self.inverse(a)?;
        let ib = self.inverse(b)?;
        let t = self.multiply(&ia, &ib)?;
        let t = self.multiply(&t, a)?;
        self.multiply(&t, b)
    }

    /// `b^-1 a b`.
    pub fn conjugate(&self, a: &NormalForm, b: &NormalForm) -> Result<NormalForm, CollectError> {
        let ib = self.inverse(b)?;
        let t = self.multiply(&ib, a)?;
        self.multiply(&t, b)
    }

    /// The unique normal form of the element denoted by `e`.
    pub fn collect(&self, e: &Expr) -> Result<NormalForm, CollectError> {
        match e {
            Expr::Gen(g) => self.generator(g.get()),
            Expr::Product(factors) => {
                let mut acc = self.identity();
                for f in factors {
                    let nf = self.collect(f)?;
                    acc = self.multiply(&acc, &nf)?;
                }
                Ok(acc)
            }
            Expr::Inverse(a) => self.inverse(&self.collect(a)?),
            Expr::Power(a, k) => {
                let base = self.collect(a)?;
                // a single syllable needs no collection
                if base.terms().count() == 1 {
                    let (d, e) = base.terms().next().unwrap();
                    let total = self.reduce_big(&(BigInt::from(e) * k))?;
                    return self.basis_power(d, total);
                }
                self.power_big(&base, k)
            }
            Expr::Bracket(a, b) => self.commutator(&self.collect(a)?, &self.collect(b)?),
            Expr::Engel(a, b, depth) => {
                let y = self.collect(b)?;
                let mut acc = self.collect(a)?;
                for _ in 0..*depth {
                    if acc.is_identity() {
                        break;
                    }
                    acc = self.commutator(&acc, &y)?;
                }
                Ok(acc)
            }
        }
    }

    /// The ordered product `prod b^{a_b}` as an expression.
    pub fn to_expr(&self, nf: &NormalForm) -> Expr {
        Expr::Product(
            nf.terms()
                .map(|(i, e)| {
                    let b = self.basis[i].to_expr();
                    if e == 1 {
                        b
                    } else {
                        b.pow(BigInt::from(e))
                    }
                })
                .collect(),
        )
    }

    /// Ordered product string such as `x1 x2 [x1,x2]^-1`, or `e`.
    pub fn display(&self, nf: &NormalForm) -> String {
        if nf.is_identity() {
            return "e".into();
        }
        nf.terms()
            .map(|(i, e)| if e == 1 { self.basis[i].to_string() } else { format!("{}^{}", self.basis[i], e) })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::words::parse;
    use proptest::prelude::*;

    const Z: CoeffMode = CoeffMode::Integers;
    const Z9: CoeffMode = CoeffMode::ModPrimePower { p: 3, r: 2 };

    fn ctx(n: u32, mode: CoeffMode) -> GroupContext {
        GroupContext::new(n, mode).unwrap()
    }

    fn nf(c: &GroupContext, text: &str) -> NormalForm {
        c.collect(&parse(text, c.n()).unwrap()).unwrap()
    }

    #[test]
    fn basis_sizes() {
        assert_eq!(ctx(2, Z).basis_len(), 3);
        assert_eq!(ctx(3, Z).basis_len(), 8);
        assert_eq!(ctx(4, Z9).basis_len(), 24);
    }

    #[test]
    fn invalid_modes_rejected() {
        assert!(GroupContext::new(2, CoeffMode::ModPrimePower { p: 2, r: 1 }).is_err());
        assert!(GroupContext::new(2, CoeffMode::ModPrimePower { p: 9, r: 1 }).is_err());
        assert!(GroupContext::new(2, CoeffMode::ModPrimePower { p: 3, r: 0 }).is_err());
        assert!(GroupContext::new(0, Z).is_err());
        assert!(GroupContext::with_class_bound(3, Z, 4).is_err());
    }

    #[test]
    fn swapped_generators() {
        let c = ctx(2, Z);
        let v = nf(&c, "x2 x1");
        assert_eq!(v.to_sparse(), vec![(0, 1), (1, 1), (2, -1)]);
        assert_eq!(c.display(&v), "x1 x2 [x1,x2]^-1");
    }

    #[test]
    fn relators_vanish() {
        let c = ctx(3, Z9);
        assert!(nf(&c, "x1^9").is_identity());
        assert!(nf(&c, "[x1,x2,x1]").is_identity());
        assert!(nf(&c, "[x2,x1,x2]").is_identity());
        assert!(nf(&c, "[x1,x2,x3,x2]").is_identity());
        assert!(!nf(&c, "x1^3").is_identity());
    }

    #[test]
    fn out_of_range_generator() {
        let c = ctx(2, Z);
        assert_eq!(c.collect(&Expr::gen(3)), Err(CollectError::IndexOutOfRange { index: 3, n: 2 }));
    }

    #[test]
    fn context_mismatch() {
        let a = ctx(2, Z);
        let b = ctx(2, Z9);
        assert_eq!(a.multiply(&a.identity(), &b.identity()), Err(CollectError::ContextMismatch));
    }

    #[test]
    fn inverse_and_power_basics() {
        let c = ctx(3, Z9);
        let a = nf(&c, "x1 x3^2 [x2,x3] x2^-1");
        assert!(c.inverse(&c.identity()).unwrap().is_identity());
        assert_eq!(c.inverse(&nf(&c, "[x1,x2]")).unwrap(), nf(&c, "[x2,x1]"));
        assert!(c.multiply(&a, &c.inverse(&a).unwrap()).unwrap().is_identity());
        assert!(c.power(&a, 0).unwrap().is_identity());
        assert_eq!(c.power(&a, -1).unwrap(), c.inverse(&a).unwrap());
        assert_eq!(c.multiply(&a, &c.identity()).unwrap(), a);
    }

    #[test]
    fn product_power_vanishes_in_rank_two() {
        for (p, r) in [(3, 1), (3, 2), (5, 1), (5, 2), (7, 1)] {
            let c = ctx(2, CoeffMode::ModPrimePower { p, r });
            let q = i64::from(p).pow(r);
            let x = nf(&c, "x1 x2");
            assert!(c.power(&x, q).unwrap().is_identity());
        }
    }

    #[test]
    fn commutator_examples() {
        let c = ctx(3, Z);
        let a = nf(&c, "x1 x2^2");
        assert!(c.commutator(&a, &c.identity()).unwrap().is_identity());
        let g1 = c.generator(1).unwrap();
        assert!(c.commutator(&g1, &g1).unwrap().is_identity());
        let g2 = c.generator(2).unwrap();
        assert_eq!(c.commutator(&g2, &g1).unwrap(), nf(&c, "[x2,x1]"));
    }

    #[test]
    fn structure_constant_examples() {
        let c = ctx(3, Z);
        for i in 0..c.basis_len() {
            assert!(c.structure_constant(i, i).unwrap().is_identity());
            for j in 0..c.basis_len() {
                let a = c.structure_constant(i, j).unwrap();
                let b = c.structure_constant(j, i).unwrap();
                assert_eq!(a, c.inverse(&b).unwrap());
            }
        }
        let x12 = c.basis_index(&[1, 2]).unwrap();
        let x123 = c.basis_index(&[1, 2, 3]).unwrap();
        assert_eq!(c.structure_constant(x12, 2).unwrap().to_sparse(), vec![(x123, 1)]);
        // [[x2,x3],x1] = -[x1,[x2,x3]] = -[x1,x2,x3] + [x1,x3,x2]
        let x23 = c.basis_index(&[2, 3]).unwrap();
        let x132 = c.basis_index(&[1, 3, 2]).unwrap();
        assert_eq!(c.structure_constant(x23, 0).unwrap().to_sparse(), vec![(x123, -1), (x132, 1)]);
    }

    #[test]
    fn nilpotent_of_class_n() {
        for n in 1..=4u32 {
            let c = ctx(n, Z);
            for seq in itertools::Itertools::multi_cartesian_product((0..=n as usize).map(|_| 1..=n)) {
                let e = Expr::gen_bracket(&seq);
                assert!(c.collect(&e).unwrap().is_identity(), "{}", e);
            }
        }
    }

    #[test]
    fn repeated_entries_vanish() {
        for n in 2..=4u32 {
            let c = ctx(n, Z9);
            for w in 2..=4usize {
                for seq in itertools::Itertools::multi_cartesian_product((0..w).map(|_| 1..=n)) {
                    if itertools::Itertools::all_unique(&mut seq.iter()) {
                        continue;
                    }
                    assert!(c.collect(&Expr::gen_bracket(&seq)).unwrap().is_identity(), "{:?}", seq);
                }
            }
        }
    }

    #[test]
    fn basis_torsion() {
        for (n, p, r) in [(3, 3, 2), (4, 5, 1), (4, 3, 2)] {
            let c = ctx(n, CoeffMode::ModPrimePower { p, r });
            let q = i64::from(p).pow(r);
            for i in 0..c.basis_len() {
                let b = c.basis_element(i).unwrap();
                assert!(c.power(&b, q).unwrap().is_identity());
                assert!(!c.power(&b, q / i64::from(p)).unwrap().is_identity());
            }
        }
    }

    #[test]
    fn class_bound_truncates() {
        let c = GroupContext::with_class_bound(3, Z, 2).unwrap();
        assert_eq!(c.basis_len(), 6);
        assert!(nf(&c, "[x1,x2,x3]").is_identity());
        assert_eq!(c.display(&nf(&c, "x2 x1")), "x1 x2 [x1,x2]^-1");
    }

    /// 3x3 unitriangular integer matrices: x1, x2 generate the Heisenberg group.
    fn heis(e: &Expr) -> [[i128; 3]; 3] {
        fn mul(a: [[i128; 3]; 3], b: [[i128; 3]; 3]) -> [[i128; 3]; 3] {
            let mut c = [[0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        c[i][j] += a[i][k] * b[k][j];
                    }
                }
            }
            c
        }
        fn inv(a: [[i128; 3]; 3]) -> [[i128; 3]; 3] {
            let (x, y, z) = (a[0][1], a[1][2], a[0][2]);
            [[1, -x, x * y - z], [0, 1, -y], [0, 0, 1]]
        }
        const ID: [[i128; 3]; 3] = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];
        match e {
            Expr::Gen(g) if g.get() == 1 => [[1, 1, 0], [0, 1, 0], [0, 0, 1]],
            Expr::Gen(_) => [[1, 0, 0], [0, 1, 1], [0, 0, 1]],
            Expr::Product(v) => v.iter().fold(ID, |acc, f| mul(acc, heis(f))),
            Expr::Inverse(a) => inv(heis(a)),
            Expr::Power(a, k) => {
                let k = i64::try_from(k).unwrap();
                let m = if k < 0 { inv(heis(a)) } else { heis(a) };
                (0..k.abs()).fold(ID, |acc, _| mul(acc, m))
            }
            Expr::Bracket(a, b) => {
                let (a, b) = (heis(a), heis(b));
                mul(mul(mul(inv(a), inv(b)), a), b)
            }
            Expr::Engel(a, b, k) => {
                let y = heis(b);
                (0..*k).fold(heis(a), |acc, _| mul(mul(mul(inv(acc), inv(y)), acc), y))
            }
        }
    }

    fn nf_to_heis(c: &GroupContext, v: &NormalForm) -> [[i128; 3]; 3] {
        heis(&c.to_expr(v))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn heisenberg_oracle(e in crate::words::tests::arb_expr(2)) {
            let c = ctx(2, Z);
            let v = c.collect(&e).unwrap();
            prop_assert_eq!(nf_to_heis(&c, &v), heis(&e));
        }

        #[test]
        fn homomorphism(u in crate::words::tests::arb_expr(4), w in crate::words::tests::arb_expr(4)) {
            for mode in [Z, Z9] {
                let c = ctx(4, mode);
                let cu = c.collect(&u).unwrap();
                let cw = c.collect(&w).unwrap();
                let uw = c.collect(&Expr::Product(vec![u.clone(), w.clone()])).unwrap();
                prop_assert_eq!(c.multiply(&cu, &cw).unwrap(), uw);
                prop_assert_eq!(c.collect(&u.clone().inverse()).unwrap(), c.inverse(&cu).unwrap());
                prop_assert_eq!(c.inverse(&c.inverse(&cu).unwrap()).unwrap(), cu);
            }
        }
    }
}
