//! Self-test of the presentation behind [`GroupContext`].
//!
//! The collector trusts its structure constants; this module checks that
//! they define a group with the intended relations. A failing check
//! returns the first counterexample.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CollectError, ContextKey, Exponent, GroupContext, NormalForm};
use crate::words::{random_expr, Expr};

/// Exhaustive triple checks are skipped above this basis size and sampled instead.
const EXHAUSTIVE_TRIPLES_MAX_BASIS: usize = 40;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckCount {
    pub name: String,
    pub cases: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub context: ContextKey,
    pub trials: usize,
    pub passed: bool,
    pub checks: Vec<CheckCount>,
    pub witness: Option<String>,
}

struct Failure(String);

impl From<CollectError> for Failure {
    fn from(e: CollectError) -> Self {
        Failure(format!("collection error: {}", e))
    }
}

struct Checker<'a> {
    ctx: &'a GroupContext,
    checks: Vec<CheckCount>,
}

impl<'a> Checker<'a> {
    fn eq(&self, what: &str, lhs: &NormalForm, rhs: &NormalForm) -> Result<(), Failure> {
        if lhs == rhs {
            Ok(())
        } else {
            Err(Failure(format!("{}: lhs = {}, rhs = {}", what, self.ctx.display(lhs), self.ctx.display(rhs))))
        }
    }

    fn done(&mut self, name: &str, cases: usize) {
        self.checks.push(CheckCount { name: name.to_string(), cases });
    }

    fn mul3(&self, a: &NormalForm, b: &NormalForm, c: &NormalForm) -> Result<(NormalForm, NormalForm), Failure> {
        let ctx = self.ctx;
        let left = ctx.multiply(&ctx.multiply(a, b)?, c)?;
        let right = ctx.multiply(a, &ctx.multiply(b, c)?)?;
        Ok((left, right))
    }

    /// Each basis element equals the collected bracket that defines it.
    fn definitions(&mut self) -> Result<(), Failure> {
        let ctx = self.ctx;
        for (i, b) in ctx.basis().iter().enumerate() {
            let unit = ctx.basis_element(i)?;
            let collected = ctx.collect(&b.to_expr())?;
            self.eq(&format!("definition of {}", b), &collected, &unit)?;
        }
        self.done("definitions", ctx.basis_len());
        Ok(())
    }

    fn antisymmetry(&mut self) -> Result<(), Failure> {
        let ctx = self.ctx;
        let len = ctx.basis_len();
        for i in 0..len {
            for j in 0..len {
                let a = ctx.structure_constant(i, j)?;
                let b = ctx.structure_constant(j, i)?;
                let prod = ctx.multiply(&a, &b)?;
                self.eq(
                    &format!("[{},{}][{},{}]", ctx.basis()[i], ctx.basis()[j], ctx.basis()[j], ctx.basis()[i]),
                    &prod,
                    &ctx.identity(),
                )?;
            }
        }
        self.done("antisymmetry", len * len);
        Ok(())
    }

    /// `(b_k b_j) b_i = b_k (b_j b_i)` for `k > j > i`.
    fn triples(&mut self, rng: &mut ChaCha8Rng, trials: usize) -> Result<(), Failure> {
        let ctx = self.ctx;
        let len = ctx.basis_len();
        let mut cases = Vec::new();
        if len <= EXHAUSTIVE_TRIPLES_MAX_BASIS {
            for k in 0..len {
                for j in 0..k {
                    for i in 0..j {
                        cases.push((k, j, i));
                    }
                }
            }
        } else if len >= 3 {
            for _ in 0..trials {
                let mut t = [rng.gen_range(0..len), rng.gen_range(0..len), rng.gen_range(0..len)];
                t.sort_unstable_by(|a, b| b.cmp(a));
                cases.push((t[0], t[1], t[2]));
            }
        }
        for &(k, j, i) in &cases {
            let (bk, bj, bi) = (ctx.basis_element(k)?, ctx.basis_element(j)?, ctx.basis_element(i)?);
            let (l, r) = self.mul3(&bk, &bj, &bi)?;
            self.eq(&format!("triple ({},{},{})", ctx.basis()[k], ctx.basis()[j], ctx.basis()[i]), &l, &r)?;
        }
        self.done("basis triples", cases.len());
        Ok(())
    }

    /// Relative orders: `b^q = 1` and the power/conjugate overlaps.
    fn torsion(&mut self) -> Result<(), Failure> {
        let ctx = self.ctx;
        let Some(q) = ctx.modulus() else {
            return Ok(());
        };
        let len = ctx.basis_len();
        for i in 0..len {
            let b = ctx.basis_element(i)?;
            let q64 = i64::try_from(q).map_err(|_| CollectError::Overflow)?;
            let bq = ctx.power(&b, q64)?;
            self.eq(&format!("{}^{}", ctx.basis()[i], q), &bq, &ctx.identity())?;
            if q > 1 {
                let below = ctx.power(&b, q64 / i64::from(ctx.mode().prime().unwrap()))?;
                if below.is_identity() {
                    return Err(Failure(format!("{} has order below {}", ctx.basis()[i], q)));
                }
            }
        }
        let mut cases = len;
        for j in 0..len {
            let bj = ctx.basis_element(j)?;
            let bj_top = ctx.basis_power(j, q - 1)?;
            for i in 0..j {
                let bi = ctx.basis_element(i)?;
                let bi_top = ctx.basis_power(i, q - 1)?;
                let (l, r) = self.mul3(&bj_top, &bj, &bi)?;
                self.eq(&format!("{}^{} overlap with {}", ctx.basis()[j], q, ctx.basis()[i]), &l, &r)?;
                let (l, r) = self.mul3(&bj, &bi_top, &bi)?;
                self.eq(&format!("{} overlap with {}^{}", ctx.basis()[j], ctx.basis()[i], q), &l, &r)?;
                cases += 2;
            }
        }
        self.done("torsion", cases);
        Ok(())
    }

    fn random_nf(&self, rng: &mut ChaCha8Rng) -> Result<NormalForm, Failure> {
        let ctx = self.ctx;
        let mut terms: Vec<(usize, Exponent)> = Vec::new();
        for i in 0..ctx.basis_len() {
            if rng.gen_bool(0.5) {
                terms.push((i, rng.gen_range(-6..=6)));
            }
        }
        Ok(ctx.from_sparse(&terms)?)
    }

    fn associativity(&mut self, rng: &mut ChaCha8Rng, trials: usize) -> Result<(), Failure> {
        for t in 0..trials {
            let a = self.random_nf(rng)?;
            let b = self.random_nf(rng)?;
            let c = self.random_nf(rng)?;
            let (l, r) = self.mul3(&a, &b, &c)?;
            self.eq(
                &format!(
                    "associativity trial {} with a = {}, b = {}, c = {}",
                    t,
                    self.ctx.display(&a),
                    self.ctx.display(&b),
                    self.ctx.display(&c)
                ),
                &l,
                &r,
            )?;
        }
        self.done("associativity", trials);
        Ok(())
    }

    fn random_relator(&self, rng: &mut ChaCha8Rng) -> Expr {
        let n = self.ctx.n();
        if let Some(q) = self.ctx.modulus() {
            if rng.gen_bool(0.3) {
                return Expr::gen(rng.gen_range(1..=n)).pow(q);
            }
        }
        if n == 1 {
            return Expr::gen_bracket(&[1, 1]);
        }
        let weight = rng.gen_range(2..=n as usize + 1);
        let mut entries: Vec<u32> = (0..weight).map(|_| rng.gen_range(1..=n)).collect();
        // force a repeated entry
        let s = rng.gen_range(0..weight);
        let mut t = rng.gen_range(0..weight);
        while t == s {
            t = rng.gen_range(0..weight);
        }
        entries[t] = entries[s];
        Expr::gen_bracket(&entries)
    }

    fn relators(&mut self, rng: &mut ChaCha8Rng, trials: usize) -> Result<(), Failure> {
        let ctx = self.ctx;
        let n = ctx.n();
        for _ in 0..trials {
            let e = random_expr(rng, n, 3);
            let rel = self.random_relator(rng);
            let g = random_expr(rng, n, 2);
            let conj = Expr::Product(vec![g.clone().inverse(), rel.clone(), g]);
            let lhs = ctx.collect(&Expr::Product(vec![e.clone(), conj]))?;
            let rhs = ctx.collect(&e)?;
            self.eq(&format!("relator {} after {}", rel, e), &lhs, &rhs)?;
        }
        self.done("relators", trials);
        Ok(())
    }

    /// Rank one: the cyclic group itself.
    fn cyclic(&mut self) -> Result<(), Failure> {
        let ctx = self.ctx;
        if ctx.n() != 1 {
            return Ok(());
        }
        let Some(q) = ctx.modulus() else {
            return Ok(());
        };
        let x = ctx.generator(1)?;
        let mut acc = ctx.identity();
        for k in 0..q {
            if k > 0 && acc.is_identity() {
                return Err(Failure(format!("x1^{} is trivial", k)));
            }
            self.eq(&format!("x1^{}", k), &acc, &ctx.basis_power(0, k)?)?;
            acc = ctx.multiply(&acc, &x)?;
        }
        self.eq("x1^q", &acc, &ctx.identity())?;
        self.done("cyclic", q as usize);
        Ok(())
    }
}

/// Runs every check with `trials` random cases where sampling applies.
pub fn consistency_check(ctx: &GroupContext, trials: usize, seed: u64) -> ConsistencyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checker = Checker { ctx, checks: Vec::new() };
    let outcome = (|| {
        checker.definitions()?;
        checker.antisymmetry()?;
        checker.triples(&mut rng, trials)?;
        checker.torsion()?;
        checker.cyclic()?;
        checker.associativity(&mut rng, trials)?;
        checker.relators(&mut rng, trials)
    })();
    ConsistencyReport {
        context: ctx.key(),
        trials,
        passed: outcome.is_ok(),
        checks: checker.checks,
        witness: outcome.err().map(|Failure(s)| s),
    }
}
