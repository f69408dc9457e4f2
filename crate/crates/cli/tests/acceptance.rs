//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use cohen_cli::args::ClaimArg;
use cohen_cli::claims::Options;
use cohen_cli::manifest::Entry;
use cohen_cli::verify_entries;
use cohen_core::collect::consistency::consistency_check;
use cohen_core::identities::{
    lhs_q1, perturb_first_exponent, q1_counterexample_search, rhs_q1, verify_identity, Status,
};
use cohen_core::perm::{all_with_counts, factorial, stirling2};
use cohen_core::subgroups::{gamma, verify_claims, ClaimParams, Membership};
use cohen_core::{CoeffMode, Expr, GenIndex, GroupContext};
use num_bigint::BigUint;
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

const Z9: CoeffMode = CoeffMode::ModPrimePower { p: 3, r: 2 };
const Z25: CoeffMode = CoeffMode::ModPrimePower { p: 5, r: 2 };

fn options() -> Options {
    Options { n: None, p: None, r: None, mode: None, kmax: 12, l: None, trials: 500 }
}

fn entries(claim: ClaimArg, o: &Options) -> Result<Vec<Entry>, String> {
    verify_entries(claim, o, None, None, &mut std::io::sink())
}

/// Every entry is Verified or Member; returns how many there were.
fn all_good(es: &[Entry]) -> Result<usize, String> {
    for e in es {
        let ok = match e {
            Entry::Identity(r) => r.status == Status::Verified,
            Entry::Membership(v) => v.status == Membership::Member,
            Entry::Error { .. } => false,
        };
        ensure(ok, e.line())?;
    }
    ensure(!es.is_empty(), "no entries")?;
    Ok(es.len())
}

fn c1_consistency() -> Outcome {
    let start = Instant::now();
    let mut runs = 0;
    for mode in [CoeffMode::Integers, Z9, Z25] {
        for n in 1..=4 {
            let ctx = GroupContext::new(n, mode).map_err(|e| e.to_string())?;
            let report = consistency_check(&ctx, 500, 17 + n as u64);
            ensure(report.passed, format!("n={} {}: {:?}", n, mode, report.witness))?;
            ensure(report.trials >= 500, "too few trials")?;
            runs += 1;
        }
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(60), format!("took {:?}", took))?;
    Ok(format!("{} contexts x 500 trials in {:.1?}", runs, took))
}

fn c2_perm_table() -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_cohen"))
        .args(["perm", "--n", "3", "--l", "2"])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), "perm exited nonzero")?;
    let text = String::from_utf8_lossy(&out.stdout);
    let ds: Vec<&str> = text.lines().take(6).filter_map(|l| l.split_whitespace().nth(1)).collect();
    ensure(ds == ["2", "1", "1", "1", "1", "0"], format!("got {:?}", ds))?;
    Ok("d = 2,1,1,1,1,0 in lexicographic order".into())
}

fn c3_lemma22() -> Outcome {
    for n in 1..=9usize {
        for l in 1..=n {
            let total: u64 = all_with_counts(n, l).map(|s| s.d).sum();
            ensure(BigUint::from(total) == factorial(l) * stirling2(n, l), format!("n={} l={}", n, l))?;
        }
    }
    Ok("sum d_l = l! S(n,l) for 1 <= l <= n <= 9".into())
}

fn c4_lemma23() -> Outcome {
    for n in 1..=8usize {
        for l in 1..=n {
            let mut tau = vec![0u64; n + 1];
            for s in all_with_counts(n, l) {
                tau[s.perm.first() as usize] += s.d;
            }
            let unit = factorial(l - 1);
            for (i, &t) in tau.iter().enumerate().skip(1) {
                ensure((BigUint::from(t) % &unit).is_zero(), format!("n={} l={} i={}", n, l, i))?;
            }
            ensure(BigUint::from(tau[1]) == stirling2(n, l) * &unit, format!("i=1 n={} l={}", n, l))?;
            ensure(BigUint::from(tau[n]) == stirling2(n - 1, l - 1) * &unit, format!("i=n n={} l={}", n, l))?;
        }
    }
    Ok("(l-1)! divides each first-symbol sum; closed forms at i=1, i=n for n <= 8".into())
}

fn c5_q1_q2() -> Outcome {
    let o = options();
    let q1 = entries(ClaimArg::Q1, &o)?;
    let q2 = entries(ClaimArg::Q2, &o)?;
    // 2 modes x (1+2+3+4) generators, plus the q1 control
    ensure(q1.len() == 21 && q2.len() == 20, format!("{} and {} reports", q1.len(), q2.len()))?;
    let total = all_good(&q1)? + all_good(&q2)?;
    Ok(format!("{} reports, 21 words g each, k <= 12, modes Z and Z/9", total))
}

fn c6_engel_shuffle() -> Outcome {
    let o = options();
    let engel = entries(ClaimArg::Engel, &o)?;
    let shuffle = entries(ClaimArg::Shuffle, &o)?;
    let vanishing = engel.iter().filter(|e| matches!(e, Entry::Identity(r) if r.claim_id == "engel-vanishing")).count();
    ensure(vanishing == 4, "engel vanishing missing")?;
    ensure(shuffle.len() == 10 && engel.len() == 14, "unexpected case counts")?;
    all_good(&engel)?;
    all_good(&shuffle)?;
    Ok("Eq(3) and shuffle form for l <= n <= 4 in K_{n+1}^(Z/9); [x_{n+1},_{n+1} x1..xn] = e".into())
}

fn c7_pr() -> Outcome {
    let es = entries(ClaimArg::Pr, &options())?;
    let words = es.iter().filter(|e| matches!(e, Entry::Identity(r) if r.claim_id == "pr")).count();
    ensure(words == 6, format!("{} word checks", words))?;
    let n = all_good(&es)?;
    Ok(format!("(pr) for n <= 3 at (3,2), (5,2); valuation identity for all p^r <= 125 ({} reports)", n))
}

fn membership(claim: &str, n: u32, p: u32, r: u32, l: u32) -> Result<(Membership, bool, String), String> {
    let cp = ClaimParams { n, p, r, l };
    let rank = cohen_core::subgroups::validate_claim(claim, &cp).map_err(|e| e.to_string())?;
    let ctx = GroupContext::new(rank, CoeffMode::ModPrimePower { p, r }).map_err(|e| e.to_string())?;
    let v = verify_claims(claim, cp, &ctx).map_err(|e| e.to_string())?.remove(0);
    Ok((v.status, v.element.nf.terms.is_empty(), v.element.nf.display))
}

fn c8_lemma25() -> Outcome {
    for l in [2, 3] {
        let (status, _, _) = membership("lemma25", 3, 3, 2, l)?;
        ensure(status == Membership::Member, format!("l={}: {:?}", l, status))?;
    }
    Ok("[x4,_l x1x2x3] Member for l = 2, 3 in K_4^(Z/9), none inconclusive".into())
}

fn c9_lemma26() -> Outcome {
    for (p, r) in [(3, 2), (5, 2)] {
        for n in [2, 3] {
            let (status, identity, _) = membership("lemma26", n, p, r, 0)?;
            ensure(status == Membership::Member, format!("n={} p={}: {:?}", n, p, status))?;
            if n == 2 {
                ensure(identity, format!("(x1x2)^{} is not e", p.pow(r)))?;
            }
        }
    }
    Ok("Member for n in {2,3} at (3,2), (5,2); n=2 element collects to e".into())
}

fn c10_cor28() -> Outcome {
    for (p, r) in [(3, 2), (5, 2)] {
        for claim in ["cor28", "prop27_np2"] {
            let (status, identity, _) = membership(claim, 3, p, r, 0)?;
            ensure(status == Membership::Member && (claim != "cor28" || identity), format!("{} n=3 p={}", claim, p))?;
        }
    }
    let (status, identity, _) = membership("cor28", 4, 3, 2, 0)?;
    ensure(status == Membership::Member, format!("cor28 n=4: {:?}", status))?;
    // (x1..x4)^27 is already trivial, so sifting is also exercised on a nontrivial element
    let (status9, identity9, display9) = membership("lemma26", 4, 3, 2, 0)?;
    ensure(status9 == Membership::Member && !identity9, format!("lemma26 n=4: {:?} {}", status9, display9))?;
    Ok(format!(
        "n=3 collects to e; n=4 (3,2) Member{}; nontrivial (x1..x4)^9 Member of its lemma26 target",
        if identity { " (element is e)" } else { "" }
    ))
}

fn c11_power_identity() -> Outcome {
    let e = Expr::gen_product(1, 4).pow(27);
    for mode in [CoeffMode::ModPrimePower { p: 3, r: 1 }, Z9] {
        let ctx = GroupContext::new(4, mode).map_err(|e| e.to_string())?;
        let nf = ctx.collect(&e).map_err(|e| e.to_string())?;
        ensure(nf.is_identity(), format!("{}: {}", mode, ctx.display(&nf)))?;
    }
    Ok("(x1x2x3x4)^27 = e in K_4^(Z/3) and in K_4^(Z/9)".into())
}

fn c12_negative_controls() -> Outcome {
    let ctx = GroupContext::new(3, Z9).map_err(|e| e.to_string())?;
    let g = Expr::gen_product(2, 3);
    let x = GenIndex::new(1);
    let rhs = rhs_q1(x, &g, 4).map_err(|e| e.to_string())?;
    let report = verify_identity(
        "q1-perturbed",
        Default::default(),
        &lhs_q1(&Expr::Gen(x), &g, 4),
        &perturb_first_exponent(&rhs),
        &ctx,
    )
    .map_err(|e| e.to_string())?;
    ensure(report.status == Status::Falsified, "perturbed rhs still verified")?;
    ensure(report.lhs_nf.is_some() && report.rhs_nf.is_some(), "falsified report lacks normal forms")?;

    let g2 = gamma(2, &ctx).map_err(|e| e.to_string())?;
    let x1 = ctx.generator(1).map_err(|e| e.to_string())?;
    let v = g2.membership(&x1).map_err(|e| e.to_string())?;
    ensure(v.status == Membership::NonMember, format!("x1 in gamma2: {:?}", v.status))?;

    let k5 = GroupContext::new(5, Z9).map_err(|e| e.to_string())?;
    let cx = q1_counterexample_search(&k5, &mut ChaCha8Rng::seed_from_u64(5), 20, 6).map_err(|e| e.to_string())?;
    let cx = cx.ok_or("no (q1) counterexample for a non-generator x")?;
    Ok(format!(
        "perturbed rhs Falsified; x1 NonMember of gamma2; (q1) fails for x = {}, g = {}, k = {}",
        cx.x, cx.g, cx.k
    ))
}

fn run_all(cache: &Path, json: &Path) -> Result<Value, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_cohen"))
        .args(["verify", "--claim", "all", "--json"])
        .arg(json)
        .env("COHEN_CACHE_DIR", cache)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(
        out.status.code() == Some(0),
        format!("exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)),
    )?;
    let text = std::fs::read_to_string(json).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn c13_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cache = dir.path().join("cache");
    let mut cold = run_all(&cache, &dir.path().join("cold.json"))?;
    let files = std::fs::read_dir(&cache).map_err(|e| e.to_string())?.count();
    ensure(files > 0, "cold run wrote no cache files")?;
    let mut warm = run_all(&cache, &dir.path().join("warm.json"))?;

    let schema: Value =
        serde_json::from_str(include_str!("../schema/report-schema-1.json")).map_err(|e| e.to_string())?;
    let compiled = jsonschema::JSONSchema::compile(&schema).map_err(|e| e.to_string())?;
    ensure(compiled.is_valid(&cold), "manifest does not match report-schema-1.json")?;
    ensure(cold["overall"] == "pass", "overall is not pass")?;

    cold.as_object_mut().unwrap().remove("timestamp");
    warm.as_object_mut().unwrap().remove("timestamp");
    ensure(cold == warm, "warm and cold manifests differ")?;
    Ok(format!("{} cache files; manifests identical modulo timestamp and schema-valid", files))
}

fn main() {
    let criteria: [Criterion; 13] = [
        ("consistency for n <= 4 over Z, Z/9, Z/25", c1_consistency),
        ("perm table n=3 l=2", c2_perm_table),
        ("Lemma 2.2", c3_lemma22),
        ("Lemma 2.3", c4_lemma23),
        ("(q1) and (q2)", c5_q1_q2),
        ("Eq(3), shuffle form, Engel vanishing", c6_engel_shuffle),
        ("(pr) and valuations", c7_pr),
        ("Lemma 2.5", c8_lemma25),
        ("Lemma 2.6", c9_lemma26),
        ("Cor 2.8 / np2", c10_cor28),
        ("(x1x2x3x4)^27 = e", c11_power_identity),
        ("negative controls", c12_negative_controls),
        ("determinism with warm and cold cache", c13_determinism),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        match result {
            Ok(detail) => println!("criterion {:>2} PASS {} ({:.1?}): {}", i + 1, name, took, detail),
            Err(why) => {
                failures += 1;
                println!("criterion {:>2} FAIL {} ({:.1?}): {}", i + 1, name, took, why);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
