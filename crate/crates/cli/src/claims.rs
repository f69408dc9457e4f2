//! Expansion of a `--claim` into independent cases.
//!
//! Each case names the context it needs (if any) and produces report
//! entries. Cases never share mutable state, so the runner may execute
//! them in any order; entries are reassembled in case order.

use cohen_core::collect::consistency::consistency_check;
use cohen_core::identities::{
    binomial_valuation_check, lhs_engel, lhs_pr, lhs_q1, lhs_q2, params, power_recursion_pr, q1_counterexample_search,
    rhs_engel_decomposition, rhs_q1, rhs_q1_for, rhs_q2, rhs_shuffle_form, verify_identity, IdentityReport, NfRecord,
    Params,
};
use cohen_core::perm::{all_with_counts, factorial, stirling2};
use cohen_core::subgroups::{validate_claim, verify_claims, ClaimParams};
use cohen_core::words::random_expr;
use cohen_core::{CoeffMode, CollectError, Expr, GenIndex, GroupContext};
use num_bigint::BigUint;
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::args::{ClaimArg, ModeArg};
use crate::manifest::Entry;

/// Largest context rank the identity claims will build.
const MAX_RANK: u32 = 8;
/// Random words `g` per generator in (q1) and (q2).
const RANDOM_WORDS: usize = 20;

#[derive(Clone, Debug)]
pub struct Options {
    pub n: Option<u32>,
    pub p: Option<u32>,
    pub r: Option<u32>,
    pub mode: Option<ModeArg>,
    pub kmax: u32,
    pub l: Option<u32>,
    pub trials: usize,
}

pub type ContextSpec = (u32, CoeffMode);

type Runner = Box<dyn Fn(Option<&GroupContext>) -> Vec<Entry> + Send + Sync>;

pub struct Case {
    pub context: Option<ContextSpec>,
    pub run: Runner,
}

impl Case {
    fn with_context(
        n: u32,
        mode: CoeffMode,
        run: impl Fn(&GroupContext) -> Vec<Entry> + Send + Sync + 'static,
    ) -> Case {
        Case { context: Some((n, mode)), run: Box::new(move |c| run(c.expect("runner supplies the context"))) }
    }

    fn plain(run: impl Fn() -> Vec<Entry> + Send + Sync + 'static) -> Case {
        Case { context: None, run: Box::new(move |_| run()) }
    }
}

/// A parameter problem, reported with exit code 2.
#[derive(Debug)]
pub struct BadParams(pub String);

type Built = Result<Vec<Case>, BadParams>;

fn bad<T>(msg: impl Into<String>) -> Result<T, BadParams> {
    Err(BadParams(msg.into()))
}

fn modular(p: u32, r: u32) -> Result<CoeffMode, BadParams> {
    let mode = CoeffMode::ModPrimePower { p, r };
    mode.validate().map_err(|e| BadParams(e.to_string()))?;
    Ok(mode)
}

impl Options {
    /// `--n` if given (checked against `max`), else the default list.
    fn ns(&self, default: &[u32], max: u32) -> Result<Vec<u32>, BadParams> {
        match self.n {
            Some(n) if n < 1 || n > max => bad(format!("--n must lie in 1..={} for this claim", max)),
            Some(n) => Ok(vec![n]),
            None => Ok(default.to_vec()),
        }
    }

    /// `(p, r)` from the flags, else the default profiles.
    fn profiles(&self, default: &[(u32, u32)]) -> Result<Vec<(u32, u32)>, BadParams> {
        if self.p.is_none() && self.r.is_none() {
            return Ok(default.to_vec());
        }
        let (d_p, d_r) = default[0];
        let pr = (self.p.unwrap_or(d_p), self.r.unwrap_or(d_r));
        modular(pr.0, pr.1)?;
        Ok(vec![pr])
    }

    /// Coefficient modes for identity claims.
    fn modes(&self, default: &[CoeffMode]) -> Result<Vec<CoeffMode>, BadParams> {
        match self.mode {
            Some(ModeArg::Z) if self.p.is_some() || self.r.is_some() => bad("--p and --r need --mode mod"),
            Some(ModeArg::Z) => Ok(vec![CoeffMode::Integers]),
            Some(ModeArg::Mod) => {
                let (p, r) = (self.p.unwrap_or(3), self.r.unwrap_or(2));
                Ok(vec![modular(p, r)?])
            }
            None if self.p.is_some() || self.r.is_some() => {
                let (p, r) = (self.p.unwrap_or(3), self.r.unwrap_or(2));
                Ok(vec![modular(p, r)?])
            }
            None => Ok(default.to_vec()),
        }
    }

    fn no_integral(&self, claim: &str) -> Result<(), BadParams> {
        if self.mode == Some(ModeArg::Z) {
            return bad(format!("{} is a statement about K_n^(Z/p^r); --mode z is not supported", claim));
        }
        Ok(())
    }
}

const Z9: CoeffMode = CoeffMode::ModPrimePower { p: 3, r: 2 };
const Z25: CoeffMode = CoeffMode::ModPrimePower { p: 5, r: 2 };

/// All cases for one claim (or every claim for `all`).
pub fn build(claim: ClaimArg, o: &Options) -> Built {
    match claim {
        ClaimArg::All => {
            let mut out = Vec::new();
            for c in ClaimArg::EACH {
                out.extend(build(c, o)?);
            }
            Ok(out)
        }
        ClaimArg::Q1 | ClaimArg::Q2 => lemma21(claim, o),
        ClaimArg::Engel | ClaimArg::Shuffle => engel(claim, o),
        ClaimArg::Pr => pr(o),
        ClaimArg::Lemma22 => lemma22(o),
        ClaimArg::Lemma23 => lemma23(o),
        ClaimArg::Consistency => consistency(o),
        ClaimArg::Lemma25
        | ClaimArg::Lemma26
        | ClaimArg::Prop27Np2
        | ClaimArg::Prop27Np1
        | ClaimArg::Cor28
        | ClaimArg::RemarkR1 => membership(claim, o),
    }
}

fn mode_value(mode: CoeffMode) -> serde_json::Value {
    serde_json::to_value(mode).expect("modes serialize")
}

fn error_entry(claim: &str, parameters: Params, e: impl ToString) -> Entry {
    Entry::Error { claim: claim.into(), parameters, message: e.to_string() }
}

fn lemma21(claim: ClaimArg, o: &Options) -> Built {
    let name = claim.name();
    if o.kmax < 1 {
        return bad("--kmax must be at least 1");
    }
    let mut cases = Vec::new();
    for mode in o.modes(&[CoeffMode::Integers, Z9])? {
        for n in o.ns(&[1, 2, 3, 4], MAX_RANK)? {
            for x in 1..=n {
                let kmax = o.kmax;
                cases.push(Case::with_context(n, mode, move |ctx| vec![lemma21_case(name, ctx, x, kmax)]));
            }
        }
    }
    if claim == ClaimArg::Q1 && o.n.is_none() && o.mode.is_none() && o.p.is_none() && o.r.is_none() {
        cases.push(Case::with_context(5, Z9, |ctx| vec![q1_control(ctx)]));
    }
    Ok(cases)
}

/// The words `g` tried against generator `x`: the product of the other
/// generators, then seeded random words.
pub fn lemma21_words(n: u32, x: u32) -> Vec<Expr> {
    let mut words = vec![Expr::Product((1..=n).filter(|&i| i != x).map(Expr::gen).collect())];
    let mut rng = ChaCha8Rng::seed_from_u64(1000 * n as u64 + x as u64);
    words.extend((0..RANDOM_WORDS).map(|_| random_expr(&mut rng, n, 3)));
    words
}

fn lemma21_case(name: &'static str, ctx: &GroupContext, x: u32, kmax: u32) -> Entry {
    let parameters =
        params([("n", ctx.n().into()), ("mode", mode_value(ctx.mode())), ("x", x.into()), ("kmax", kmax.into())]);
    let xi = GenIndex::new(x);
    let words = lemma21_words(ctx.n(), x);
    let count = words.len();
    for g in words {
        for k in 1..=kmax {
            let (lhs, rhs) = if name == "q1" {
                (lhs_q1(&Expr::Gen(xi), &g, k), rhs_q1(xi, &g, k).expect("k >= 1"))
            } else {
                (lhs_q2(&g, xi, k), rhs_q2(&g, xi, k).expect("k >= 1"))
            };
            match verify_identity(name, parameters.clone(), &lhs, &rhs, ctx) {
                Ok(report) if report.status == cohen_core::identities::Status::Verified => {}
                Ok(mut report) => {
                    report.note = format!("fails at g = {}, k = {}", g, k);
                    return Entry::Identity(report);
                }
                Err(e) => return error_entry(name, parameters, e),
            }
        }
    }
    Entry::Identity(IdentityReport::plain(name, parameters, true, format!("{} words g, k = 1..{}", count, kmax)))
}

/// (q1) with a non-generator first argument, which must fail somewhere.
fn q1_control(ctx: &GroupContext) -> Entry {
    let name = "q1-nongenerator-control";
    let parameters = params([("n", ctx.n().into()), ("mode", mode_value(ctx.mode()))]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    match q1_counterexample_search(ctx, &mut rng, 20, 6) {
        Ok(Some(cx)) => {
            let lhs = ctx.collect(&lhs_q1(&cx.x, &cx.g, cx.k));
            let rhs = ctx.collect(&rhs_q1_for(&cx.x, &cx.g, cx.k).expect("k >= 2"));
            match (lhs, rhs) {
                (Ok(l), Ok(r)) => Entry::Identity(IdentityReport {
                    lhs_nf: Some(NfRecord::new(ctx, &l)),
                    rhs_nf: Some(NfRecord::new(ctx, &r)),
                    ..IdentityReport::plain(
                        name,
                        parameters,
                        true,
                        format!(
                            "expected failure found: x = {}, g = {}, k = {} (the lemma needs x to be a generator)",
                            cx.x, cx.g, cx.k
                        ),
                    )
                }),
                (Err(e), _) | (_, Err(e)) => error_entry(name, parameters, e),
            }
        }
        Ok(None) => Entry::Identity(IdentityReport::plain(name, parameters, false, "no counterexample found".into())),
        Err(e) => error_entry(name, parameters, e),
    }
}

fn engel(claim: ClaimArg, o: &Options) -> Built {
    let name = claim.name();
    let mut cases = Vec::new();
    for mode in o.modes(&[Z9])? {
        for n in o.ns(&[1, 2, 3, 4], MAX_RANK - 1)? {
            let ls: Vec<u32> = match o.l {
                Some(l) if l < 1 || l > n + 1 => return bad(format!("--l must lie in 1..={} for n = {}", n + 1, n)),
                Some(l) => vec![l],
                None => (1..=n + 1).collect(),
            };
            for l in ls {
                if l == n + 1 && claim == ClaimArg::Shuffle {
                    continue;
                }
                cases.push(Case::with_context(n + 1, mode, move |ctx| vec![engel_case(name, ctx, n, l)]));
            }
        }
    }
    Ok(cases)
}

fn engel_case(name: &'static str, ctx: &GroupContext, n: u32, l: u32) -> Entry {
    let parameters = params([("n", n.into()), ("l", l.into()), ("mode", mode_value(ctx.mode()))]);
    let (claim_id, rhs) = if l > n {
        ("engel-vanishing", Ok(Expr::identity()))
    } else if name == "engel" {
        (name, rhs_engel_decomposition(n, l))
    } else {
        (name, rhs_shuffle_form(n, l))
    };
    let result = rhs.map_err(|e| e.to_string()).and_then(|rhs| {
        verify_identity(claim_id, parameters.clone(), &lhs_engel(n, l), &rhs, ctx).map_err(|e| e.to_string())
    });
    match result {
        Ok(r) => Entry::Identity(r),
        Err(e) => error_entry(claim_id, parameters, e),
    }
}

fn pr(o: &Options) -> Built {
    o.no_integral("pr")?;
    let profiles = o.profiles(&[(3, 2), (5, 2)])?;
    let mut cases = Vec::new();
    for &(p, r) in &profiles {
        let mode = modular(p, r)?;
        for n in o.ns(&[1, 2, 3], MAX_RANK - 1)? {
            cases.push(Case::with_context(n + 1, mode, move |ctx| {
                let parameters = params([("n", n.into()), ("p", p.into()), ("r", r.into())]);
                let q = ctx.modulus().expect("modular context");
                let result = power_recursion_pr(n, ctx).map_err(|e| e.to_string()).and_then(|rhs| {
                    verify_identity("pr", parameters.clone(), &lhs_pr(n, q), &rhs, ctx).map_err(|e| e.to_string())
                });
                vec![match result {
                    Ok(r) => Entry::Identity(r),
                    Err(e) => error_entry("pr", parameters, e),
                }]
            }));
        }
    }
    // the binomial side condition, for every odd prime power up to 125 unless one was requested
    let valuation_profiles: Vec<(u32, u32)> = if o.p.is_some() || o.r.is_some() {
        profiles
    } else {
        (3..=125u32)
            .filter(|&p| CoeffMode::ModPrimePower { p, r: 1 }.validate().is_ok())
            .flat_map(|p| (1..).take_while(move |&r| (p as u64).pow(r) <= 125).map(move |r| (p, r)))
            .collect()
    };
    for (p, r) in valuation_profiles {
        cases.push(Case::plain(move || {
            let parameters = params([("p", p.into()), ("r", r.into())]);
            let q = (p as u64).pow(r);
            vec![Entry::Identity(match binomial_valuation_check(p as u64, r) {
                Ok(()) => IdentityReport::plain(
                    "pr-valuation",
                    parameters,
                    true,
                    format!("v_p(C({},i)) = r - v_p(i) for i = 1..{}", q, q),
                ),
                Err(i) => IdentityReport::plain("pr-valuation", parameters, false, format!("fails at i = {}", i)),
            })]
        }));
    }
    Ok(cases)
}

fn block_counts(o: &Options, n: u32) -> Result<Vec<u32>, BadParams> {
    match o.l {
        Some(l) if l < 1 || l > n => bad(format!("--l must lie in 1..={}", n)),
        Some(l) => Ok(vec![l]),
        None => Ok((1..=n).collect()),
    }
}

fn lemma22(o: &Options) -> Built {
    let mut cases = Vec::new();
    for n in o.ns(&[1, 2, 3, 4, 5, 6, 7, 8], 10)? {
        let ls = block_counts(o, n)?;
        cases.push(Case::plain(move || {
            let mut ok = true;
            let mut parts = Vec::new();
            for &l in &ls {
                let total: u64 = all_with_counts(n as usize, l as usize).map(|s| s.d).sum();
                let expected = factorial(l as usize) * stirling2(n as usize, l as usize);
                ok &= BigUint::from(total) == expected;
                parts.push(format!("l={}: {} vs {}", l, total, expected));
            }
            let parameters = params([("n", n.into())]);
            vec![Entry::Identity(IdentityReport::plain(
                "lemma22",
                parameters,
                ok,
                format!("sum d_l vs l!S(n,l): {}", parts.join(", ")),
            ))]
        }));
    }
    Ok(cases)
}

fn lemma23(o: &Options) -> Built {
    let mut cases = Vec::new();
    for n in o.ns(&[1, 2, 3, 4, 5, 6, 7, 8], 10)? {
        let ls = block_counts(o, n)?;
        cases.push(Case::plain(move || {
            let n_us = n as usize;
            let mut ok = true;
            let (mut literal_holds, mut cases_seen) = (0, 0);
            for &l in &ls {
                let l_us = l as usize;
                let mut tau = vec![0u64; n_us + 1];
                for s in all_with_counts(n_us, l_us) {
                    tau[s.perm.first() as usize] += s.d;
                }
                let unit = factorial(l_us - 1);
                for &t in &tau[1..] {
                    let t = BigUint::from(t);
                    ok &= (&t % &unit).is_zero();
                    literal_holds += usize::from(!t.is_zero() && (&unit % &t).is_zero());
                    cases_seen += 1;
                }
                ok &= BigUint::from(tau[1]) == stirling2(n_us, l_us) * &unit;
                let last = if n_us >= 1 && l_us >= 1 { stirling2(n_us - 1, l_us - 1) * &unit } else { BigUint::zero() };
                ok &= BigUint::from(tau[n_us]) == last;
            }
            let parameters = params([("n", n.into())]);
            let note = format!(
                "(l-1)! divides every sum; closed forms at i=1 and i=n checked; literal reading \"sum divides (l-1)!\" holds in {} of {} cases",
                literal_holds, cases_seen
            );
            vec![Entry::Identity(IdentityReport::plain("lemma23", parameters, ok, note))]
        }));
    }
    Ok(cases)
}

fn consistency(o: &Options) -> Built {
    let modes = match (o.mode, o.p, o.r) {
        (None, None, None) => vec![CoeffMode::Integers, Z9, Z25],
        _ => o.modes(&[])?,
    };
    let trials = o.trials;
    let mut cases = Vec::new();
    for mode in modes {
        for n in o.ns(&[1, 2, 3, 4], MAX_RANK)? {
            cases.push(Case::with_context(n, mode, move |ctx| {
                let report = consistency_check(ctx, trials, 0xC0FFEE + n as u64);
                let parameters = params([("n", n.into()), ("mode", mode_value(mode)), ("trials", trials.into())]);
                let checks =
                    report.checks.iter().map(|c| format!("{} x{}", c.name, c.cases)).collect::<Vec<_>>().join(", ");
                let note = match &report.witness {
                    Some(w) => format!("{}; witness: {}", checks, w),
                    None => checks,
                };
                vec![Entry::Identity(IdentityReport::plain("consistency", parameters, report.passed, note))]
            }));
        }
    }
    Ok(cases)
}

fn membership(claim: ClaimArg, o: &Options) -> Built {
    let name = claim.name();
    o.no_integral(name)?;
    let core_name: &'static str = match claim {
        ClaimArg::Lemma25 => "lemma25",
        ClaimArg::Lemma26 => "lemma26",
        ClaimArg::Prop27Np2 => "prop27_np2",
        ClaimArg::Prop27Np1 => "prop27_np1",
        ClaimArg::Cor28 => "cor28",
        _ => "remark_r1",
    };
    let (default_ns, default_profiles): (&[u32], &[(u32, u32)]) = match claim {
        ClaimArg::Lemma25 => (&[3], &[(3, 2)]),
        ClaimArg::Lemma26 | ClaimArg::Prop27Np2 | ClaimArg::Prop27Np1 => (&[2, 3], &[(3, 2), (5, 2)]),
        ClaimArg::Cor28 => (&[3, 4], &[(3, 2), (5, 2)]),
        _ => (&[2, 3, 4], &[(3, 1), (5, 1)]),
    };
    let ls: Vec<u32> = match (claim, o.l) {
        (ClaimArg::Lemma25, Some(l)) => vec![l],
        (ClaimArg::Lemma25, None) => vec![2, 3],
        _ => vec![0],
    };
    let mut cases = Vec::new();
    for (p, r) in o.profiles(default_profiles)? {
        for n in o.ns(default_ns, 5)? {
            for &l in &ls {
                let cp = ClaimParams { n, p, r, l };
                let rank = validate_claim(core_name, &cp).map_err(|e| BadParams(e.to_string()))?;
                cases.push(Case::with_context(rank, modular(p, r)?, move |ctx| {
                    match verify_claims(core_name, cp, ctx) {
                        Ok(vs) => vs.into_iter().map(Entry::Membership).collect(),
                        Err(e) => {
                            let parameters = params([("n", n.into()), ("p", p.into()), ("r", r.into())]);
                            vec![error_entry(core_name, parameters, e)]
                        }
                    }
                }));
            }
        }
    }
    Ok(cases)
}

/// The entry reported for a case whose context could not be built.
pub fn context_error(spec: ContextSpec, e: CollectError) -> Entry {
    error_entry("context", params([("n", spec.0.into()), ("mode", mode_value(spec.1))]), e)
}
