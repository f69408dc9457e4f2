//! Right-hand sides of the product formulas as expressions, and a checker
//! that decides `lhs = rhs` by comparing normal forms.
//!
//! Every product formula here multiplies elements of the family
//! `[x_{n+1}, K]`, which is abelian in a reduced free group. Factor order is
//! therefore immaterial; the builders fix an index-ascending order so the
//! output is reproducible.

use std::collections::BTreeMap;
use std::time::Instant;

use itertools::Itertools;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::collect::{CoeffMode, CollectError, Exponent, GroupContext, NormalForm};
use crate::perm::{compositions, division_counts, shuffles_on};
use crate::words::{binomial, random_expr, Expr, GenIndex};

pub type Params = BTreeMap<String, Value>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdentityError {
    #[error("need 1 <= l <= n, got l={l}, n={n}")]
    BlockRange { l: u32, n: u32 },
    #[error("k must be at least 1")]
    ZeroPower,
    #[error("{0}")]
    Context(String),
    #[error(transparent)]
    Collect(#[from] CollectError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Verified,
    Falsified,
    Skipped,
}

/// A normal form as recorded in reports: sparse coordinates plus the
/// printed ordered product.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NfRecord {
    pub terms: Vec<(usize, Exponent)>,
    pub display: String,
}

impl NfRecord {
    pub fn new(ctx: &GroupContext, nf: &NormalForm) -> NfRecord {
        NfRecord { terms: nf.to_sparse(), display: ctx.display(nf) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub claim_id: String,
    pub parameters: Params,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lhs_nf: Option<NfRecord>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rhs_nf: Option<NfRecord>,
    #[serde(skip_serializing_if = "String::is_empty", default)]
    pub note: String,
    /// Wall-clock time; drivers that need reproducible output drop it.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub elapsed_ms: Option<u64>,
}

impl IdentityReport {
    /// A report for a check that is not an equality of words.
    pub fn plain(claim_id: &str, parameters: Params, ok: bool, note: String) -> IdentityReport {
        IdentityReport {
            claim_id: claim_id.into(),
            parameters,
            status: if ok { Status::Verified } else { Status::Falsified },
            lhs_nf: None,
            rhs_nf: None,
            note,
            elapsed_ms: None,
        }
    }

    pub fn skipped(claim_id: &str, parameters: Params, note: String) -> IdentityReport {
        IdentityReport { status: Status::Skipped, ..IdentityReport::plain(claim_id, parameters, true, note) }
    }
}

/// Builds a parameter map from `(name, value)` pairs.
pub fn params<const N: usize>(pairs: [(&str, Value); N]) -> Params {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn engel_term(x: &Expr, g: &Expr, depth: u32, exponent: BigInt) -> Option<Expr> {
    if exponent.is_zero() {
        return None;
    }
    let bracket = if depth == 1 {
        Expr::bracket(x.clone(), g.clone())
    } else {
        Expr::Engel(Box::new(x.clone()), Box::new(g.clone()), depth)
    };
    Some(if exponent.is_one() { bracket } else { bracket.pow(exponent) })
}

/// Eq. (q1): `prod_{i=1..k} [x,_i g]^{C(k,i)}`.
pub fn rhs_q1(x: GenIndex, g: &Expr, k: u32) -> Result<Expr, IdentityError> {
    rhs_q1_for(&Expr::Gen(x), g, k)
}

/// The (q1) right-hand side for an arbitrary first argument. The identity
/// only holds for generators; this form exists for negative controls.
pub fn rhs_q1_for(x: &Expr, g: &Expr, k: u32) -> Result<Expr, IdentityError> {
    if k == 0 {
        return Err(IdentityError::ZeroPower);
    }
    let factors = (1..=k).filter_map(|i| engel_term(x, g, i, binomial(k as u64, i as u64))).collect_vec();
    Ok(single_or_product(factors))
}

/// Left side of (q1): `[x, g^k]`.
pub fn lhs_q1(x: &Expr, g: &Expr, k: u32) -> Expr {
    Expr::bracket(x.clone(), g.clone().pow(k))
}

/// Eq. (q2): `g^k x^k prod_{i=1..k-1} [x,_i g]^{C(k,i+1)}`.
pub fn rhs_q2(g: &Expr, x: GenIndex, k: u32) -> Result<Expr, IdentityError> {
    if k == 0 {
        return Err(IdentityError::ZeroPower);
    }
    let x = Expr::Gen(x);
    let mut factors = vec![power_or_self(g.clone(), k), power_or_self(x.clone(), k)];
    factors.extend((1..k).filter_map(|i| engel_term(&x, g, i, binomial(k as u64, i as u64 + 1))));
    Ok(Expr::Product(factors))
}

/// Left side of (q2): `(g x)^k`.
pub fn lhs_q2(g: &Expr, x: GenIndex, k: u32) -> Expr {
    Expr::Product(vec![g.clone(), Expr::Gen(x)]).pow(k)
}

fn power_or_self(e: Expr, k: u32) -> Expr {
    if k == 1 {
        e
    } else {
        e.pow(k)
    }
}

fn single_or_product(mut factors: Vec<Expr>) -> Expr {
    if factors.len() == 1 {
        factors.pop().unwrap()
    } else {
        Expr::Product(factors)
    }
}

fn check_block_range(n: u32, l: u32) -> Result<(), IdentityError> {
    if l < 1 || l > n {
        return Err(IdentityError::BlockRange { l, n });
    }
    Ok(())
}

/// Left side of Eq. (3): `[x_{n+1},_l x_1...x_n]`.
pub fn lhs_engel(n: u32, l: u32) -> Expr {
    Expr::Engel(Box::new(Expr::gen(n + 1)), Box::new(gen_word(n)), l)
}

/// `x_1 ... x_n`, or the bare generator when `n = 1`.
pub fn gen_word(n: u32) -> Expr {
    if n == 1 {
        Expr::gen(1)
    } else {
        Expr::gen_product(1, n)
    }
}

/// Eq. (3): the product over `i = l..n`, `i`-subsets of `{1..n}` and their
/// arrangements `sigma` of `[x_{n+1}, x_sigma(1), ..., x_sigma(i)]^{d_l(sigma)}`.
pub fn rhs_engel_decomposition(n: u32, l: u32) -> Result<Expr, IdentityError> {
    check_block_range(n, l)?;
    let mut factors = Vec::new();
    for i in l..=n {
        for subset in (1..=n).combinations(i as usize) {
            for sigma in subset.iter().copied().permutations(subset.len()) {
                let d = division_counts(&sigma)[l as usize];
                if d == 0 {
                    continue;
                }
                let entries = std::iter::once(n + 1).chain(sigma).collect_vec();
                factors.push(power_or_self(Expr::gen_bracket(&entries), d as u32));
            }
        }
    }
    Ok(Expr::Product(factors))
}

/// Eq. (3) indexed by shuffles: for every subset and every composition
/// `i_1 + ... + i_l = i`, one factor per `[i_1,...,i_l]`-shuffle.
pub fn rhs_shuffle_form(n: u32, l: u32) -> Result<Expr, IdentityError> {
    check_block_range(n, l)?;
    let mut factors = Vec::new();
    for i in l..=n {
        for subset in (1..=n).combinations(i as usize) {
            for sizes in compositions(i as usize, l as usize) {
                let shuffled = shuffles_on(&sizes, &subset).expect("composition sizes match the subset");
                for sigma in shuffled {
                    let entries = std::iter::once(n + 1).chain(sigma.as_slice().iter().copied()).collect_vec();
                    factors.push(Expr::gen_bracket(&entries));
                }
            }
        }
    }
    Ok(Expr::Product(factors))
}

/// Left side of Eq. (pr): `(x_1...x_{n+1})^{p^r}`.
pub fn lhs_pr(n: u32, q: Exponent) -> Expr {
    gen_word(n + 1).pow(q)
}

/// Eq. (pr): `(x_1...x_n)^{p^r} prod_{p | i} [x_{n+1},_{i-1} (x_1...x_n)]^{C(p^r,i)}`
/// with `2 <= i <= p^r` and exponents reduced mod `p^r`. Needs a modular
/// context with at least `n + 1` generators.
pub fn power_recursion_pr(n: u32, ctx: &GroupContext) -> Result<Expr, IdentityError> {
    let CoeffMode::ModPrimePower { p, .. } = ctx.mode() else {
        return Err(IdentityError::Context("Eq. (pr) needs a modular context".into()));
    };
    if n < 1 || ctx.n() < n + 1 {
        return Err(IdentityError::Context(format!("Eq. (pr) with n={} needs at least {} generators", n, n + 1)));
    }
    let q = ctx.modulus().unwrap() as u64;
    let x = Expr::gen(n + 1);
    let g = gen_word(n);
    let mut factors = vec![g.clone().pow(q)];
    for i in (p as u64..=q).step_by(p as usize) {
        let c = binomial(q, i).mod_floor(&BigInt::from(q));
        if let Some(t) = engel_term(&x, &g, (i - 1) as u32, c) {
            factors.push(t);
        }
    }
    Ok(Expr::Product(factors))
}

/// `v_p(m)` for `m >= 1`.
pub fn valuation(p: u64, m: &BigInt) -> u32 {
    let p = BigInt::from(p);
    let mut m = m.clone();
    let mut v = 0;
    while !m.is_zero() && m.is_multiple_of(&p) {
        m /= &p;
        v += 1;
    }
    v
}

/// Checks `v_p(C(p^r, i)) = r - v_p(i)` for every `1 <= i <= p^r`; returns
/// the first `i` where it fails.
pub fn binomial_valuation_check(p: u64, r: u32) -> Result<(), u64> {
    let q = p.pow(r);
    for i in 1..=q {
        if valuation(p, &binomial(q, i)) + valuation(p, &BigInt::from(i)) != r {
            return Err(i);
        }
    }
    Ok(())
}

/// Collects both sides and compares them coordinate by coordinate.
pub fn verify_identity(
    claim_id: &str,
    parameters: Params,
    lhs: &Expr,
    rhs: &Expr,
    ctx: &GroupContext,
) -> Result<IdentityReport, CollectError> {
    let start = Instant::now();
    let l = ctx.collect(lhs)?;
    let r = ctx.collect(rhs)?;
    let equal = l == r;
    Ok(IdentityReport {
        claim_id: claim_id.into(),
        parameters,
        status: if equal { Status::Verified } else { Status::Falsified },
        lhs_nf: (!equal).then(|| NfRecord::new(ctx, &l)),
        rhs_nf: (!equal).then(|| NfRecord::new(ctx, &r)),
        note: String::new(),
        elapsed_ms: Some(start.elapsed().as_millis() as u64),
    })
}

/// Raises the exponent of the first factor of a product by one (or squares
/// a non-product). Used for fault-injection controls.
pub fn perturb_first_exponent(e: &Expr) -> Expr {
    match e {
        Expr::Product(factors) if !factors.is_empty() => {
            let mut factors = factors.clone();
            factors[0] = perturb_first_exponent(&factors[0]);
            Expr::Product(factors)
        }
        Expr::Power(a, k) => Expr::Power(a.clone(), k + 1),
        other => other.clone().pow(2),
    }
}

/// A concrete failure of (q1) when `x` is not a generator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counterexample {
    pub x: Expr,
    pub g: Expr,
    pub k: u32,
}

/// Searches non-generator `x`, random `g` and `k <= kmax` for a violation
/// of (q1). Returns the first one found.
///
/// For `n <= 4` there is none: the Engel terms `[x,_i g]` pairwise commute
/// because their commutators have weight at least 5. A witness needs a
/// context with five or more generators.
pub fn q1_counterexample_search<R: Rng>(
    ctx: &GroupContext,
    rng: &mut R,
    tries: usize,
    kmax: u32,
) -> Result<Option<Counterexample>, CollectError> {
    let n = ctx.n();
    // deterministic candidates first: x = x1 x2 against the generators
    let mut candidates = Vec::new();
    if n >= 3 {
        candidates.push((Expr::gen_product(1, 2), Expr::gen_product(3, n)));
    }
    for _ in 0..tries {
        let x = Expr::Product(vec![random_expr(rng, n, 2), random_expr(rng, n, 2)]);
        candidates.push((x, random_expr(rng, n, 2)));
    }
    for (x, g) in candidates {
        if ctx.collect(&x)?.depth().is_none_or(|d| d >= n as usize) {
            continue;
        }
        for k in 2..=kmax {
            let rhs = rhs_q1_for(&x, &g, k).expect("k >= 2");
            if ctx.collect(&lhs_q1(&x, &g, k))? != ctx.collect(&rhs)? {
                return Ok(Some(Counterexample { x, g, k }));
            }
        }
    }
    Ok(None)
}
