//! Subgroups of a modular context as induced polycyclic sequences, and
//! membership by sifting.
//!
//! In modular mode the basis order gives a central series
//! `G = G_0 > G_1 > ...`, `G_i = <b_i, b_{i+1}, ...>`, whose factors are
//! cyclic of order `q = p^r`. A subgroup `H` is stored as at most one
//! element per leading index `i`, with leading exponent `p^a` (`a < r`).
//! The products `prod s_i^{c_i}`, `0 <= c_i < p^{r-a_i}`, form a subgroup
//! once every power `s_i^{p^{r-a_i}}` and every commutator `[s_i, s_j]`
//! sifts to the identity; construction iterates to that fixed point.

use std::collections::VecDeque;
use std::fmt;

use itertools::Itertools;
use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::One;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collect::{CoeffMode, CollectError, Exponent, GroupContext, NormalForm};
use crate::identities::{gen_word, lhs_engel, NfRecord, Params};
use crate::words::{print, Expr};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SubgroupError {
    #[error("subgroup membership needs a modular context, got {0}")]
    IntegralMode(CoeffMode),
    #[error("subgroups belong to different contexts")]
    ContextMismatch,
    #[error("B_n was requested for p={requested} in a context over p={context}")]
    PrimeMismatch { requested: u32, context: u32 },
    #[error("unsupported parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Collect(#[from] CollectError),
}

/// How a computed subgroup relates to the subgroup it stands for.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Exact,
    /// Contained in the intended subgroup: membership is conclusive.
    UnderApprox(String),
    /// Contains the intended set: non-membership is conclusive.
    OverApprox(String),
    /// Approximations in both directions were combined; nothing is conclusive.
    Mixed(String),
}

impl Provenance {
    fn combine(&self, other: &Provenance) -> Provenance {
        use Provenance::*;
        match (self, other) {
            (Exact, p) | (p, Exact) => p.clone(),
            (UnderApprox(a), UnderApprox(b)) => UnderApprox(join_reasons(a, b)),
            (OverApprox(a), OverApprox(b)) => OverApprox(join_reasons(a, b)),
            (a, b) => Mixed(join_reasons(&a.reason(), &b.reason())),
        }
    }

    fn reason(&self) -> String {
        match self {
            Provenance::Exact => String::new(),
            Provenance::UnderApprox(r) | Provenance::OverApprox(r) | Provenance::Mixed(r) => r.clone(),
        }
    }
}

fn join_reasons(a: &str, b: &str) -> String {
    if a == b || b.is_empty() {
        a.to_string()
    } else if a.is_empty() {
        b.to_string()
    } else {
        format!("{}; {}", a, b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Membership {
    Member,
    NonMember,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementRecord {
    /// The word the element was built from, when there is one.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub expr: Option<String>,
    pub nf: NfRecord,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgroupRecord {
    pub description: String,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipVerdict {
    pub claim: String,
    pub params: Params,
    pub element: ElementRecord,
    pub subgroup: SubgroupRecord,
    pub status: Membership,
    pub note: String,
}

#[derive(Clone, Debug)]
struct Slot {
    elem: NormalForm,
    /// Leading exponent is `p^level`.
    level: u32,
}

#[derive(Clone)]
pub struct SubgroupHandle<'a> {
    ctx: &'a GroupContext,
    p: Exponent,
    r: u32,
    slots: Vec<Option<Slot>>,
    description: String,
    provenance: Provenance,
    normal: bool,
}

impl fmt::Debug for SubgroupHandle<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SubgroupHandle")
            .field("description", &self.description)
            .field("provenance", &self.provenance)
            .field("length", &self.len())
            .finish()
    }
}

fn p_valuation(p: Exponent, mut e: Exponent) -> u32 {
    let mut v = 0;
    while e != 0 && e % p == 0 {
        e /= p;
        v += 1;
    }
    v
}

fn mod_inverse(u: Exponent, q: Exponent) -> Exponent {
    let g = u.extended_gcd(&q);
    debug_assert_eq!(g.gcd, 1);
    g.x.rem_euclid(q)
}

impl<'a> SubgroupHandle<'a> {
    fn empty(ctx: &'a GroupContext, description: String) -> Result<Self, SubgroupError> {
        let CoeffMode::ModPrimePower { p, r } = ctx.mode() else {
            return Err(SubgroupError::IntegralMode(ctx.mode()));
        };
        Ok(SubgroupHandle {
            ctx,
            p: p as Exponent,
            r,
            slots: vec![None; ctx.basis_len()],
            description,
            provenance: Provenance::Exact,
            normal: true,
        })
    }

    pub fn context(&self) -> &'a GroupContext {
        self.ctx
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Whether the subgroup is normal in the whole group (decided by
    /// conjugating the sequence by the generators).
    pub fn is_normal(&self) -> bool {
        self.normal
    }

    /// The induced sequence, leading index strictly increasing.
    pub fn sequence(&self) -> impl Iterator<Item = &NormalForm> + '_ {
        self.slots.iter().flatten().map(|s| &s.elem)
    }

    pub fn len(&self) -> usize {
        self.slots.iter().flatten().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_trivial(&self) -> bool {
        self.is_empty()
    }

    /// `|H| = prod p^{r - a_i}`.
    pub fn order(&self) -> BigUint {
        let p = BigUint::from(self.p as u64);
        self.slots.iter().flatten().fold(BigUint::one(), |acc, s| acc * p.pow(self.r - s.level))
    }

    fn q(&self) -> Exponent {
        self.p.pow(self.r)
    }

    /// Divides `g` by sequence elements while the leading coordinate allows;
    /// the identity comes back exactly when `g` lies in the subgroup.
    pub fn sift(&self, g: &NormalForm) -> Result<NormalForm, SubgroupError> {
        if g.key() != self.ctx.key() {
            return Err(SubgroupError::ContextMismatch);
        }
        let mut g = g.clone();
        while let Some(d) = g.depth() {
            let Some(slot) = &self.slots[d] else { break };
            let e = g.exponent(d);
            let unit = self.p.pow(slot.level);
            if e % unit != 0 {
                break;
            }
            let step = self.ctx.power(&slot.elem, -((e / unit) as i64))?;
            g = self.ctx.multiply(&g, &step)?;
        }
        Ok(g)
    }

    pub fn contains(&self, g: &NormalForm) -> Result<bool, SubgroupError> {
        Ok(self.sift(g)?.is_identity())
    }

    /// Inserts the residue of `g`; returns the new element when the
    /// sequence changed, after queueing the displaced one.
    fn insert(
        &mut self,
        g: &NormalForm,
        queue: &mut VecDeque<NormalForm>,
    ) -> Result<Option<NormalForm>, SubgroupError> {
        let h = self.sift(g)?;
        let Some(d) = h.depth() else { return Ok(None) };
        let e = h.exponent(d);
        let level = p_valuation(self.p, e);
        let unit = e / self.p.pow(level);
        let h = self.ctx.power(&h, mod_inverse(unit, self.q()) as i64)?;
        debug_assert_eq!(h.exponent(d), self.p.pow(level));
        if let Some(old) = self.slots[d].replace(Slot { elem: h.clone(), level }) {
            queue.push_back(old.elem);
        }
        Ok(Some(h))
    }

    /// Smallest subgroup containing `gens` and closed under conjugation by
    /// `conjugators`.
    fn close(&mut self, gens: Vec<NormalForm>, conjugators: &[NormalForm]) -> Result<(), SubgroupError> {
        let mut queue: VecDeque<NormalForm> = gens.into();
        loop {
            while let Some(g) = queue.pop_front() {
                if let Some(h) = self.insert(&g, &mut queue)? {
                    self.queue_relations(&h, conjugators, &mut queue)?;
                }
            }
            // fixed-point check against the final sequence
            let seq: Vec<NormalForm> = self.sequence().cloned().collect();
            for h in &seq {
                self.queue_relations(h, conjugators, &mut queue)?;
            }
            queue.retain(|g| !self.contains(g).unwrap_or(false));
            if queue.is_empty() {
                return Ok(());
            }
        }
    }

    fn queue_relations(
        &self,
        h: &NormalForm,
        conjugators: &[NormalForm],
        queue: &mut VecDeque<NormalForm>,
    ) -> Result<(), SubgroupError> {
        let d = h.depth().expect("sequence elements are nontrivial");
        let level = p_valuation(self.p, h.exponent(d));
        queue.push_back(self.ctx.power(h, self.p.pow(self.r - level) as i64)?);
        for s in self.sequence() {
            if s != h {
                queue.push_back(self.ctx.commutator(h, s)?);
            }
        }
        for c in conjugators {
            queue.push_back(self.ctx.commutator(h, c)?);
        }
        Ok(())
    }

    fn finish(mut self, provenance: Provenance) -> Result<Self, SubgroupError> {
        self.provenance = provenance;
        self.normal = self.check_normal()?;
        Ok(self)
    }

    fn check_normal(&self) -> Result<bool, SubgroupError> {
        for s in self.sequence() {
            for i in 1..=self.ctx.n() {
                let x = self.ctx.generator(i)?;
                if !self.contains(&self.ctx.commutator(s, &x)?)? {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    fn same_context(&self, other: &SubgroupHandle<'_>) -> Result<(), SubgroupError> {
        if self.ctx.key() != other.ctx.key() {
            return Err(SubgroupError::ContextMismatch);
        }
        Ok(())
    }

    /// Whether every sequence element commutes with every other.
    pub fn is_abelian(&self) -> Result<bool, SubgroupError> {
        let seq: Vec<&NormalForm> = self.sequence().collect();
        for (a, b) in seq.iter().tuple_combinations() {
            if !self.ctx.commutator(a, b)?.is_identity() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// All elements, as products `prod s_i^{c_i}` in sequence order.
    pub fn elements(&self) -> Result<Vec<NormalForm>, SubgroupError> {
        let mut out = vec![self.ctx.identity()];
        for slot in self.slots.iter().flatten().rev() {
            let steps = self.p.pow(self.r - slot.level);
            let mut next = Vec::with_capacity(out.len() * steps as usize);
            let mut power = self.ctx.identity();
            for _ in 0..steps {
                for t in &out {
                    next.push(self.ctx.multiply(&power, t)?);
                }
                power = self.ctx.multiply(&power, &slot.elem)?;
            }
            out = next;
        }
        Ok(out)
    }

    /// Sifting verdict, qualified by provenance.
    pub fn membership(&self, g: &NormalForm) -> Result<MembershipVerdict, SubgroupError> {
        let member = self.contains(g)?;
        let (status, note) = match (&self.provenance, member) {
            (Provenance::Exact, true) | (Provenance::UnderApprox(_), true) => (Membership::Member, String::new()),
            (Provenance::Exact, false) | (Provenance::OverApprox(_), false) => (Membership::NonMember, String::new()),
            (Provenance::OverApprox(_), true) => {
                (Membership::Inconclusive, "member of the generated subgroup only".to_string())
            }
            (Provenance::UnderApprox(_), false) => {
                (Membership::Inconclusive, "not in the under-approximation".to_string())
            }
            (Provenance::Mixed(_), m) => (Membership::Inconclusive, format!("sifts to identity: {}", m)),
        };
        Ok(self.verdict(g, status, note))
    }

    fn verdict(&self, g: &NormalForm, status: Membership, note: String) -> MembershipVerdict {
        MembershipVerdict {
            claim: String::new(),
            params: Params::new(),
            element: ElementRecord { expr: None, nf: NfRecord::new(self.ctx, g) },
            subgroup: SubgroupRecord { description: self.description.clone(), provenance: self.provenance.clone() },
            status,
            note,
        }
    }
}

fn build<'a>(
    ctx: &'a GroupContext,
    description: String,
    gens: Vec<NormalForm>,
    conjugators: &[NormalForm],
    provenance: Provenance,
) -> Result<SubgroupHandle<'a>, SubgroupError> {
    for g in gens.iter().chain(conjugators) {
        if g.key() != ctx.key() {
            return Err(SubgroupError::ContextMismatch);
        }
    }
    let mut h = SubgroupHandle::empty(ctx, description)?;
    h.close(gens, conjugators)?;
    h.finish(provenance)
}

fn generators(ctx: &GroupContext) -> Result<Vec<NormalForm>, SubgroupError> {
    Ok((1..=ctx.n()).map(|i| ctx.generator(i)).collect::<Result<_, _>>()?)
}

/// The subgroup generated by `gens`.
pub fn span<'a>(gens: &[NormalForm], ctx: &'a GroupContext) -> Result<SubgroupHandle<'a>, SubgroupError> {
    build(ctx, "span".into(), gens.to_vec(), &[], Provenance::Exact)
}

/// The normal subgroup generated by `gens`.
pub fn normal_closure<'a>(gens: &[NormalForm], ctx: &'a GroupContext) -> Result<SubgroupHandle<'a>, SubgroupError> {
    build(ctx, "normal closure".into(), gens.to_vec(), &generators(ctx)?, Provenance::Exact)
}

/// The lower central series term `gamma_k`, with `gamma_1` the whole group.
pub fn gamma(k: u32, ctx: &GroupContext) -> Result<SubgroupHandle<'_>, SubgroupError> {
    if k < 1 {
        return Err(SubgroupError::Params("gamma_k needs k >= 1".into()));
    }
    let gens = generators(ctx)?;
    let mut current = build(ctx, "gamma1".into(), gens.clone(), &gens, Provenance::Exact)?;
    for j in 2..=k {
        let mut next = Vec::new();
        for s in current.sequence() {
            for x in &gens {
                next.push(ctx.commutator(s, x)?);
            }
        }
        current = build(ctx, format!("gamma{}", j), next, &gens, Provenance::Exact)?;
    }
    Ok(current)
}

/// `[A, B]`: the closure of the sequence commutators under conjugation by
/// both sequences, which is exact for arbitrary subgroups `A` and `B`.
pub fn derived_pair<'a>(a: &SubgroupHandle<'a>, b: &SubgroupHandle<'a>) -> Result<SubgroupHandle<'a>, SubgroupError> {
    a.same_context(b)?;
    let ctx = a.ctx;
    let mut gens = Vec::new();
    for x in a.sequence() {
        for y in b.sequence() {
            gens.push(ctx.commutator(x, y)?);
        }
    }
    let conjugators: Vec<NormalForm> = a.sequence().chain(b.sequence()).cloned().collect();
    let description = format!("[{}, {}]", a.description, b.description);
    build(ctx, description, gens, &conjugators, a.provenance.combine(&b.provenance))
}

/// `A^m`, the subgroup generated by all `m`-th powers of elements of `A`.
///
/// Exact when `m` is prime to `p` (then `A^m = A`) or when `A` is abelian;
/// otherwise the closure of powers of sequence elements and of their
/// pairwise products, which is contained in `A^m`.
pub fn power_subgroup<'a>(a: &SubgroupHandle<'a>, m: u64) -> Result<SubgroupHandle<'a>, SubgroupError> {
    if m == 0 {
        return Err(SubgroupError::Params("power subgroup needs m >= 1".into()));
    }
    let description = format!("({})^{}", a.description, m);
    let pk = a.p.pow(p_valuation(a.p, m as Exponent));
    if pk == 1 {
        let mut same = a.clone();
        same.description = description;
        return Ok(same);
    }
    let ctx = a.ctx;
    let seq: Vec<NormalForm> = a.sequence().cloned().collect();
    let mut gens = seq.iter().map(|s| ctx.power(s, pk as i64)).collect::<Result<Vec<_>, _>>()?;
    if a.is_abelian()? {
        return build(ctx, description, gens, &[], a.provenance.clone());
    }
    for (x, y) in seq.iter().tuple_combinations() {
        gens.push(ctx.power(&ctx.multiply(x, y)?, pk as i64)?);
    }
    // A^m is characteristic in A, so conjugating by whatever normalizes A stays inside
    let conjugators = if a.normal { generators(ctx)? } else { seq };
    let provenance = a.provenance.combine(&Provenance::UnderApprox(
        "power subgroup of a nonabelian subgroup generated by powers of sequence elements and their pairwise products"
            .into(),
    ));
    build(ctx, description, gens, &conjugators, provenance)
}

/// `B_n`: generated by all distinct-entry left-normalized generator
/// brackets whose length `k >= 2` is not a power of `p`.
pub fn bn_subgroup(ctx: &GroupContext, p: u32) -> Result<SubgroupHandle<'_>, SubgroupError> {
    let CoeffMode::ModPrimePower { p: cp, .. } = ctx.mode() else {
        return Err(SubgroupError::IntegralMode(ctx.mode()));
    };
    if cp != p {
        return Err(SubgroupError::PrimeMismatch { requested: p, context: cp });
    }
    let n = ctx.n();
    let mut gens = Vec::new();
    for k in 2..=n as usize {
        if is_power_of(k as u64, p as u64) {
            continue;
        }
        for entries in (1..=n).permutations(k) {
            gens.push(ctx.collect(&Expr::gen_bracket(&entries))?);
        }
    }
    build(ctx, format!("B{}", n), gens, &[], Provenance::Exact)
}

fn is_power_of(mut k: u64, p: u64) -> bool {
    while k.is_multiple_of(p) {
        k /= p;
    }
    k == 1
}

/// `<A_1, ..., A_k>`. When at most one factor fails to be normal in the
/// result, the product set `A_1 ... A_k` is this subgroup; otherwise the
/// subgroup only over-approximates the product set.
pub fn product_span<'a>(subs: &[&SubgroupHandle<'a>]) -> Result<SubgroupHandle<'a>, SubgroupError> {
    let Some(first) = subs.first() else {
        return Err(SubgroupError::Params("product of no subgroups".into()));
    };
    let ctx = first.ctx;
    for s in subs {
        first.same_context(s)?;
    }
    let gens: Vec<NormalForm> = subs.iter().flat_map(|s| s.sequence().cloned()).collect();
    let description = subs.iter().map(|s| s.description.as_str()).join(" * ");
    let inner = subs.iter().fold(Provenance::Exact, |acc, s| acc.combine(&s.provenance));
    let h = build(ctx, description, gens, &[], inner.clone())?;
    let mut non_normal = 0;
    for s in subs {
        if !normalized_by(s, &h)? {
            non_normal += 1;
        }
    }
    if non_normal <= 1 {
        return Ok(h);
    }
    let over = Provenance::OverApprox("product set of non-normal factors replaced by the generated subgroup".into());
    Ok(SubgroupHandle { provenance: inner.combine(&over), ..h })
}

/// Whether `h` normalizes `s`.
fn normalized_by(s: &SubgroupHandle<'_>, h: &SubgroupHandle<'_>) -> Result<bool, SubgroupError> {
    for x in s.sequence() {
        for y in h.sequence() {
            if !s.contains(&s.ctx.conjugate(x, y)?)? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Largest subgroup order for which the product-set witness search
/// enumerates the second factor.
pub const WITNESS_SEARCH_LIMIT: u64 = 1 << 16;

/// Decides `g in A_1 A_2 ... A_k` as a product set. Uses the generated
/// subgroup when it is exact; otherwise, if `A_2 ... A_k` is itself a
/// subgroup of modest order, enumerates it and tests `g c^-1 in A_1`.
pub fn product_set_membership(
    g: &NormalForm,
    factors: &[&SubgroupHandle<'_>],
) -> Result<MembershipVerdict, SubgroupError> {
    let whole = product_span(factors)?;
    let mut verdict = whole.membership(g)?;
    if verdict.status != Membership::Inconclusive || !matches!(whole.provenance, Provenance::OverApprox(_)) {
        return Ok(verdict);
    }
    let rest = product_span(&factors[1..])?;
    let head = factors[0];
    let rest_exact = matches!(rest.provenance, Provenance::Exact);
    if !rest_exact || rest.order() > BigUint::from(WITNESS_SEARCH_LIMIT) {
        verdict.note = "no witness search: trailing factors too large or not a subgroup".into();
        return Ok(verdict);
    }
    let ctx = head.ctx;
    for c in rest.elements()? {
        let a = ctx.multiply(g, &ctx.inverse(&c)?)?;
        if head.contains(&a)? {
            verdict.status = Membership::Member;
            verdict.note =
                format!("witness factorization b * c with b = {} and c = {}", ctx.display(&a), ctx.display(&c));
            return Ok(verdict);
        }
    }
    verdict.status = match head.provenance {
        Provenance::Exact => Membership::NonMember,
        _ => Membership::Inconclusive,
    };
    verdict.note = "exhaustive witness search found no factorization".into();
    Ok(verdict)
}

/// Parameters of a membership claim, in the paper's numbering.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClaimParams {
    pub n: u32,
    pub p: u32,
    pub r: u32,
    pub l: u32,
}

pub const MEMBERSHIP_CLAIMS: [&str; 6] = ["lemma25", "lemma26", "prop27_np2", "prop27_np1", "cor28", "remark_r1"];

/// Number of generators of the group the claim lives in: `n + 1` for
/// the claims stated in `K = K_{n+1}`, `n` otherwise.
pub fn ambient_rank(claim: &str, n: u32) -> Result<u32, SubgroupError> {
    match claim {
        "lemma25" | "prop27_np2" | "prop27_np1" => Ok(n + 1),
        "lemma26" | "cor28" | "remark_r1" => Ok(n),
        other => Err(SubgroupError::Params(format!("unknown membership claim {}", other))),
    }
}

/// Rejects parameters outside the supported range; returns the rank of
/// the ambient group.
pub fn validate_claim(claim: &str, cp: &ClaimParams) -> Result<u32, SubgroupError> {
    let bad = |m: String| Err(SubgroupError::Params(m));
    let rank = ambient_rank(claim, cp.n)?;
    if cp.n < 1 || rank > 5 {
        return bad(format!("{} needs 1 <= n and at most 5 generators", claim));
    }
    CoeffMode::ModPrimePower { p: cp.p, r: cp.r }.validate().map_err(|e| SubgroupError::Params(e.to_string()))?;
    let q = (cp.p as u64).pow(cp.r);
    if q > 25 {
        return bad("p^r must be at most 25".into());
    }
    match claim {
        "lemma25" if cp.l < 2 => bad("lemma25 needs l >= 2".into()),
        "lemma26" | "prop27_np2" | "prop27_np1" | "cor28" if cp.r < 2 => bad(format!("{} needs r > 1", claim)),
        "prop27_np2" | "prop27_np1" | "cor28" if q * cp.p as u64 > 125 => bad("p^(r+1) must be at most 125".into()),
        "remark_r1" if cp.r != 1 || (cp.p as u64).pow(3) > 125 => bad("remark_r1 needs r = 1 and p^3 <= 125".into()),
        _ => Ok(rank),
    }
}

/// Checks one of the paper's membership claims. `ctx` must be the ambient
/// group, of rank [`ambient_rank`].
pub fn verify_claims(
    claim: &str,
    cp: ClaimParams,
    ctx: &GroupContext,
) -> Result<Vec<MembershipVerdict>, SubgroupError> {
    let rank = validate_claim(claim, &cp)?;
    if ctx.n() != rank || ctx.mode() != (CoeffMode::ModPrimePower { p: cp.p, r: cp.r }) {
        return Err(SubgroupError::Params(format!(
            "{} with n={} needs the context K_{}^(Z/{}^{})",
            claim, cp.n, rank, cp.p, cp.r
        )));
    }
    let ClaimParams { n, p, r, l } = cp;
    let p64 = p as u64;
    let q = p64.pow(r);
    let g2 = gamma(2, ctx)?;
    let g2g2 = derived_pair(&g2, &g2)?;
    let (element_expr, element, verdict) = match claim {
        "lemma25" => {
            let e = lhs_engel(n, l);
            let g = ctx.collect(&e)?;
            let fact = (1..l as u64).product::<u64>();
            let target = product_span(&[&power_subgroup(&g2, fact)?, &g2g2])?;
            (print(&e), g.clone(), target.membership(&g)?)
        }
        "lemma26" => {
            let e = gen_word(n).pow(q);
            let g = ctx.collect(&e)?;
            let target = product_span(&[&power_subgroup(&g2, q / p64)?, &g2g2])?;
            (print(&e), g.clone(), target.membership(&g)?)
        }
        "cor28" => {
            let e = gen_word(n).pow(q * p64);
            let g = ctx.collect(&e)?;
            let target = np2_target(&g2, &g2g2, p64)?;
            (print(&e), g.clone(), target.membership(&g)?)
        }
        "prop27_np2" | "prop27_np1" => {
            let e = Expr::Product(vec![gen_word(n).pow(q * p64).inverse(), gen_word(n + 1).pow(q * p64)]);
            let g = ctx.collect(&e)?;
            let verdict = if claim == "prop27_np2" {
                np2_target(&g2, &g2g2, p64)?.membership(&g)?
            } else {
                let b = bn_subgroup(ctx, p)?;
                let c1 = derived_pair(&b, &power_subgroup(&g2, p64)?)?;
                let c2 = derived_pair(&b, &g2g2)?;
                product_set_membership(&g, &[&b, &c1, &c2])?
            };
            (print(&e), g, verdict)
        }
        "remark_r1" => {
            let e = gen_word(n).pow(p64.pow(3));
            let g = ctx.collect(&e)?;
            let g2g2g2 = derived_pair(&g2g2, &g2g2)?;
            (print(&e), g.clone(), g2g2g2.membership(&g)?)
        }
        other => return Err(SubgroupError::Params(format!("unknown membership claim {}", other))),
    };
    let mut verdict = verdict;
    verdict.claim = claim.into();
    verdict.params = [("n", n), ("p", p), ("r", r)]
        .into_iter()
        .chain((claim == "lemma25").then_some(("l", l)))
        .map(|(k, v)| (k.to_string(), v.into()))
        .collect();
    verdict.element.expr = Some(element_expr);
    if element.is_identity() {
        verdict.note = join_reasons(&verdict.note, "element collects to the identity");
    }
    Ok(vec![verdict])
}

/// `gamma2gamma2gamma2(K) [gamma2(K)^p, gamma2gamma2(K)] (gamma2gamma2(K))^p`.
fn np2_target<'a>(
    g2: &SubgroupHandle<'a>,
    g2g2: &SubgroupHandle<'a>,
    p: u64,
) -> Result<SubgroupHandle<'a>, SubgroupError> {
    let g2g2g2 = derived_pair(g2g2, g2g2)?;
    let mixed = derived_pair(&power_subgroup(g2, p)?, g2g2)?;
    let powered = power_subgroup(g2g2, p)?;
    product_span(&[&g2g2g2, &mixed, &powered])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::words::{parse, random_expr};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    const Z3: CoeffMode = CoeffMode::ModPrimePower { p: 3, r: 1 };
    const Z9: CoeffMode = CoeffMode::ModPrimePower { p: 3, r: 2 };
    const Z25: CoeffMode = CoeffMode::ModPrimePower { p: 5, r: 2 };

    fn ctx(n: u32, mode: CoeffMode) -> GroupContext {
        GroupContext::new(n, mode).unwrap()
    }

    fn nf(c: &GroupContext, text: &str) -> NormalForm {
        c.collect(&parse(text, c.n()).unwrap()).unwrap()
    }

    /// Brute-force closure of `gens` under multiplication.
    fn bfs(c: &GroupContext, gens: &[NormalForm]) -> HashSet<Vec<Exponent>> {
        let mut seen = HashSet::new();
        let mut frontier = vec![c.identity()];
        seen.insert(c.identity().exponents().to_vec());
        while let Some(x) = frontier.pop() {
            for g in gens {
                let y = c.multiply(&x, g).unwrap();
                if seen.insert(y.exponents().to_vec()) {
                    frontier.push(y);
                }
            }
        }
        seen
    }

    fn all_elements(c: &GroupContext) -> Vec<NormalForm> {
        let q = c.modulus().unwrap();
        (0..c.basis_len())
            .map(|_| 0..q)
            .multi_cartesian_product()
            .map(|v| c.from_sparse(&v.into_iter().enumerate().collect_vec()).unwrap())
            .collect()
    }

    #[test]
    fn spec_examples() {
        let c = ctx(3, Z9);
        let trivial = span(&[c.identity()], &c).unwrap();
        assert!(trivial.is_trivial());
        assert!(trivial.contains(&c.identity()).unwrap());
        assert!(!trivial.contains(&nf(&c, "x1")).unwrap());

        let c1 = ctx(1, Z9);
        let whole = span(&[nf(&c1, "x1")], &c1).unwrap();
        assert_eq!(whole.membership(&nf(&c1, "x1^5")).unwrap().status, Membership::Member);

        let s = span(&[nf(&c, "[x1,x2]"), nf(&c, "[x1,x3]")], &c).unwrap();
        assert!(s.contains(&nf(&c, "[x1,x2] [x1,x3]")).unwrap());
        assert_eq!(s.membership(&nf(&c, "x1")).unwrap().status, Membership::NonMember);

        let c2 = ctx(2, Z9);
        let nc = normal_closure(&[nf(&c2, "x1")], &c2).unwrap();
        assert!(nc.contains(&nf(&c2, "x1")).unwrap() && nc.contains(&nf(&c2, "[x1,x2]")).unwrap());
        assert!(!nc.contains(&nf(&c2, "x2")).unwrap());
        assert!(normal_closure(&[], &c2).unwrap().is_trivial());
    }

    #[test]
    fn integral_mode_rejected() {
        let c = ctx(2, CoeffMode::Integers);
        assert!(matches!(span(&[], &c), Err(SubgroupError::IntegralMode(_))));
    }

    #[test]
    fn sequence_is_echelon() {
        let c = ctx(4, Z9);
        let g = gamma(2, &c).unwrap();
        let depths: Vec<usize> = g.sequence().map(|s| s.depth().unwrap()).collect();
        assert!(depths.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(g.len(), 20);
    }

    #[test]
    fn matches_brute_force_closure() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (c, rounds) in [(ctx(2, Z3), 20), (ctx(2, Z9), 10), (ctx(3, Z3), 6)] {
            let everything = all_elements(&c);
            for _ in 0..rounds {
                let k = rng.gen_range(1..=3);
                let gens: Vec<NormalForm> =
                    (0..k).map(|_| c.collect(&random_expr(&mut rng, c.n(), 3)).unwrap()).collect();
                let h = span(&gens, &c).unwrap();
                let oracle = bfs(&c, &gens);
                assert_eq!(h.order(), BigUint::from(oracle.len()));
                for x in &everything {
                    assert_eq!(h.contains(x).unwrap(), oracle.contains(x.exponents()), "{}", c.display(x));
                }
                let listed: HashSet<Vec<Exponent>> =
                    h.elements().unwrap().iter().map(|x| x.exponents().to_vec()).collect();
                assert_eq!(listed, oracle);
            }
        }
    }

    #[test]
    fn shuffled_generators_span_the_same_subgroup() {
        let c = ctx(4, Z9);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut gens: Vec<NormalForm> = (0..4).map(|_| c.collect(&random_expr(&mut rng, 4, 3)).unwrap()).collect();
        let a = span(&gens, &c).unwrap();
        gens.reverse();
        let b = span(&gens, &c).unwrap();
        assert!(a.sequence().all(|s| b.contains(s).unwrap()));
        assert!(b.sequence().all(|s| a.contains(s).unwrap()));
    }

    #[test]
    fn sifting_soundness_for_random_words() {
        let c = ctx(3, Z9);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gens: Vec<NormalForm> = ["x1 x2", "[x2,x3]", "x3^3"].iter().map(|t| nf(&c, t)).collect();
        let h = span(&gens, &c).unwrap();
        for _ in 0..200 {
            let mut w = c.identity();
            for _ in 0..rng.gen_range(1..8) {
                let g = &gens[rng.gen_range(0..gens.len())];
                let g = if rng.gen_bool(0.5) { c.inverse(g).unwrap() } else { g.clone() };
                w = c.multiply(&w, &g).unwrap();
            }
            assert!(h.contains(&w).unwrap());
        }
    }

    #[test]
    fn lower_central_series() {
        for n in 2..=4 {
            let c = ctx(n, Z9);
            let series: Vec<SubgroupHandle> = (1..=n + 1).map(|k| gamma(k, &c).unwrap()).collect();
            assert_eq!(series[0].len(), c.basis_len());
            assert!(series[n as usize].is_trivial());
            for w in series.windows(2) {
                assert!(w[1].sequence().all(|s| w[0].contains(s).unwrap()));
                assert!(w[0].is_normal());
            }
            for (j, k) in [(1usize, 1usize), (1, 2), (2, 2)] {
                if j + k <= n as usize {
                    let d = derived_pair(&series[j - 1], &series[k - 1]).unwrap();
                    assert!(d.sequence().all(|s| series[j + k - 1].contains(s).unwrap()));
                }
            }
            // every weight >= 2 bracket lies in gamma2
            for b in c.basis().iter().filter(|b| b.weight() >= 2) {
                assert!(series[1].contains(&c.collect(&b.to_expr()).unwrap()).unwrap());
            }
        }
        let c2 = ctx(2, Z9);
        let g2 = gamma(2, &c2).unwrap();
        let direct = span(&[nf(&c2, "[x1,x2]")], &c2).unwrap();
        assert_eq!(g2.order(), direct.order());
    }

    #[test]
    fn gamma2_is_weight_two_and_up() {
        let c = ctx(3, Z9);
        let gens: Vec<NormalForm> =
            (1..=3u32).tuple_combinations().map(|(i, j)| c.collect(&Expr::gen_bracket(&[i, j])).unwrap()).collect();
        let nc = normal_closure(&gens, &c).unwrap();
        let heavy: Vec<NormalForm> =
            (0..c.basis_len()).filter(|&i| c.basis()[i].weight() >= 2).map(|i| c.basis_element(i).unwrap()).collect();
        assert_eq!(nc.order(), span(&heavy, &c).unwrap().order());
    }

    #[test]
    fn derived_pairs() {
        let c3 = ctx(3, Z9);
        let g2 = gamma(2, &c3).unwrap();
        assert!(derived_pair(&g2, &g2).unwrap().is_trivial());
        let c4 = ctx(4, Z9);
        let g2 = gamma(2, &c4).unwrap();
        let d = derived_pair(&g2, &g2).unwrap();
        assert!(!d.is_trivial());
        assert!(d.contains(&nf(&c4, "[[x1,x2],[x3,x4]]")).unwrap());
        let g4 = gamma(4, &c4).unwrap();
        assert!(d.sequence().all(|s| g4.contains(s).unwrap()));
        let trivial = span(&[], &c4).unwrap();
        assert!(derived_pair(&trivial, &g2).unwrap().is_trivial());
    }

    #[test]
    fn power_subgroups() {
        let c = ctx(4, Z9);
        let g2 = gamma(2, &c).unwrap();
        assert_eq!(power_subgroup(&g2, 1).unwrap().order(), g2.order());
        assert_eq!(power_subgroup(&g2, 2).unwrap().order(), g2.order());
        assert!(power_subgroup(&g2, 9).unwrap().is_trivial());
        assert!(matches!(power_subgroup(&g2, 3).unwrap().provenance(), Provenance::UnderApprox(_)));

        let c = ctx(4, Z25);
        let g4 = gamma(4, &c).unwrap();
        let p5 = power_subgroup(&g4, 5).unwrap();
        assert_eq!(p5.provenance(), &Provenance::Exact);
        let fifths: Vec<NormalForm> =
            (0..c.basis_len()).filter(|&i| c.basis()[i].weight() == 4).map(|i| c.basis_power(i, 5).unwrap()).collect();
        assert_eq!(p5.order(), span(&fifths, &c).unwrap().order());
        assert_eq!(p5.order(), BigUint::from(5u32).pow(6));
    }

    #[test]
    fn bn_subgroups() {
        let c = ctx(4, Z25);
        let b = bn_subgroup(&c, 5).unwrap();
        for e in (1..=4u32).permutations(3) {
            assert!(b.contains(&c.collect(&Expr::gen_bracket(&e)).unwrap()).unwrap());
        }
        assert!(!b.contains(&nf(&c, "x1")).unwrap());
        assert!(matches!(bn_subgroup(&c, 3), Err(SubgroupError::PrimeMismatch { .. })));

        let c = ctx(4, Z9);
        let b = bn_subgroup(&c, 3).unwrap();
        assert!(b.contains(&nf(&c, "[x1,x2]")).unwrap());
        assert!(b.contains(&nf(&c, "[x1,x2,x3,x4]")).unwrap());
        assert!(!b.contains(&nf(&c, "[x1,x2,x3]")).unwrap());
        assert!(!b.is_normal());

        let c = ctx(2, Z9);
        let b = bn_subgroup(&c, 3).unwrap();
        assert_eq!(b.order(), span(&[nf(&c, "[x1,x2]")], &c).unwrap().order());
    }

    #[test]
    fn products() {
        let c = ctx(4, Z9);
        let t = span(&[], &c).unwrap();
        assert!(product_span(&[&t, &t]).unwrap().is_trivial());
        let g2 = gamma(2, &c).unwrap();
        let g2g2 = derived_pair(&g2, &g2).unwrap();
        let p = product_span(&[&power_subgroup(&g2, 3).unwrap(), &g2g2]).unwrap();
        assert!(p.is_normal());
        let b = bn_subgroup(&c, 3).unwrap();
        let c1 = derived_pair(&b, &power_subgroup(&g2, 3).unwrap()).unwrap();
        let both = product_span(&[&b, &c1, &g2g2]).unwrap();
        assert!(both.sequence().all(|s| g2.contains(s).unwrap()));
    }

    #[test]
    fn product_set_witness() {
        let c = ctx(3, Z9);
        let a = span(&[nf(&c, "x1")], &c).unwrap();
        let b = span(&[nf(&c, "x2")], &c).unwrap();
        // <x1><x2> is a set of 81 elements inside a subgroup of order 9^3
        let g = nf(&c, "x1^2 x2^5");
        let v = product_set_membership(&g, &[&a, &b]).unwrap();
        assert_eq!(v.status, Membership::Member, "{}", v.note);
        let v = product_set_membership(&nf(&c, "x2 x1"), &[&a, &b]).unwrap();
        assert_eq!(v.status, Membership::NonMember, "{}", v.note);
    }

    #[test]
    fn negative_control() {
        let c = ctx(3, Z9);
        let v = gamma(2, &c).unwrap().membership(&nf(&c, "x1")).unwrap();
        assert_eq!(v.status, Membership::NonMember);
        assert_eq!(gamma(2, &c).unwrap().membership(&c.identity()).unwrap().status, Membership::Member);
    }

    fn claim(name: &str, n: u32, p: u32, r: u32, l: u32) -> Vec<MembershipVerdict> {
        let c = ctx(ambient_rank(name, n).unwrap(), CoeffMode::ModPrimePower { p, r });
        verify_claims(name, ClaimParams { n, p, r, l }, &c).unwrap()
    }

    #[test]
    fn small_claims() {
        for (name, n, p, r, l) in [
            ("lemma25", 2, 3, 2, 2),
            ("lemma26", 2, 3, 2, 0),
            ("lemma26", 2, 5, 2, 0),
            ("cor28", 3, 5, 2, 0),
            ("prop27_np2", 2, 3, 2, 0),
            ("prop27_np1", 2, 3, 2, 0),
            ("remark_r1", 3, 3, 1, 0),
        ] {
            let v = claim(name, n, p, r, l);
            assert_eq!(v[0].status, Membership::Member, "{} {:?}", name, v[0]);
        }
        let v = claim("lemma26", 2, 3, 2, 0);
        assert!(v[0].note.contains("identity"));
        let json = serde_json::to_value(&v[0]).unwrap();
        assert_eq!(json["status"], "Member");
        assert_eq!(json["element"]["expr"], "(x1 x2)^9");
        assert_eq!(json["params"]["p"], 3);
    }

    #[test]
    fn claim_parameter_checks() {
        let c = ctx(3, Z9);
        let bad = |name: &str, n, p, r, l| verify_claims(name, ClaimParams { n, p, r, l }, &c).is_err();
        assert!(bad("lemma26", 3, 3, 1, 0));
        assert!(bad("lemma26", 2, 3, 2, 0));
        assert!(bad("lemma25", 2, 3, 2, 1));
        assert!(bad("nonsense", 3, 3, 2, 0));
    }
}
