//! Command-line driver: `collect`, `verify`, `basis` and `perm`.
//!
//! [`run`] is the whole program minus process exit, so tests can drive it
//! with in-memory streams.

pub mod args;
pub mod claims;
pub mod manifest;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context as _;
use clap::error::ErrorKind;
use clap::Parser;
use cohen_core::perm::{all_with_counts, factorial, stirling2};
use cohen_core::{parse, CoeffMode, GroupContext};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use args::{BasisArgs, Cli, CollectArgs, Command, GroupArgs, ModeArg, PermArgs, VerifyArgs};
use claims::{BadParams, ContextSpec, Options};
use manifest::{Entry, Overall, RunManifest};

pub const CACHE_ENV: &str = "COHEN_CACHE_DIR";

/// Exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

enum Failure {
    Usage(String),
    Other(anyhow::Error),
}

impl From<BadParams> for Failure {
    fn from(e: BadParams) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.into())
    }
}

type Outcome = Result<i32, Failure>;

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{}", text) } else { write!(err, "{}", text) };
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Collect(a) => collect(a, out, err),
        Command::Verify(a) => verify(a, out, err),
        Command::Basis(a) => basis(a, out),
        Command::Perm(a) => perm(a, out),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {}", msg);
            EXIT_USAGE
        }
        Err(Failure::Other(e)) => {
            let _ = writeln!(err, "error: {:#}", e);
            EXIT_FAIL
        }
    }
}

/// `COHEN_CACHE_DIR` wins over `--cache`.
fn cache_dir(group: &GroupArgs) -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from).or_else(|| group.cache.clone())
}

fn load_cache(ctx: &GroupContext, dir: Option<&Path>, err: &mut dyn Write) {
    let Some(dir) = dir else { return };
    let path = ctx.cache_path(dir);
    if path.exists() {
        if let Err(e) = ctx.load_cache_file(&path) {
            let _ = writeln!(err, "warning: ignoring cache {}: {}", path.display(), e);
        }
    }
}

fn save_cache(ctx: &GroupContext, dir: Option<&Path>) -> anyhow::Result<()> {
    let Some(dir) = dir else { return Ok(()) };
    fs::create_dir_all(dir).with_context(|| format!("creating cache directory {}", dir.display()))?;
    let path = ctx.cache_path(dir);
    ctx.save_cache(&path).with_context(|| format!("writing cache {}", path.display()))
}

/// Writes pretty JSON to a file, or to `out` for "-".
fn write_json(path: &Path, value: &impl Serialize, out: &mut dyn Write) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    if path == Path::new("-") {
        writeln!(out, "{}", text)?;
    } else {
        fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn collect(a: CollectArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let g = &a.group;
    let probe_rank = g.n.unwrap_or(9);
    let expr = parse(&a.expr, probe_rank).map_err(|e| Failure::Usage(format!("cannot parse expression: {}", e)))?;
    let n = g.n.unwrap_or_else(|| expr.max_generator().max(1));
    let mode = match g.mode {
        Some(ModeArg::Z) if g.p.is_some() || g.r.is_some() => {
            return Err(Failure::Usage("--p and --r need --mode mod".into()))
        }
        Some(ModeArg::Z) => CoeffMode::Integers,
        _ => CoeffMode::ModPrimePower { p: g.p.unwrap_or(3), r: g.r.unwrap_or(2) },
    };
    let ctx = GroupContext::new(n, mode).map_err(|e| Failure::Usage(e.to_string()))?;
    let dir = cache_dir(g);
    load_cache(&ctx, dir.as_deref(), err);
    let nf = ctx.collect(&expr).map_err(|e| Failure::Usage(e.to_string()))?;
    writeln!(out, "{}", ctx.display(&nf))?;
    let terms: Vec<Value> = nf
        .terms()
        .map(|(i, e)| json!({"index": i, "basis": ctx.basis()[i].to_string(), "exponent": e.to_string()}))
        .collect();
    writeln!(out, "{}", Value::Array(terms))?;
    save_cache(&ctx, dir.as_deref())?;
    Ok(EXIT_OK)
}

fn basis(a: BasisArgs, out: &mut dyn Write) -> Outcome {
    let ctx = GroupContext::new(a.n, CoeffMode::Integers).map_err(|e| Failure::Usage(e.to_string()))?;
    let rows: Vec<Value> = ctx
        .basis()
        .iter()
        .enumerate()
        .map(|(i, b)| json!({"index": i, "weight": b.weight(), "commutator": b.to_string(), "entries": b.entries()}))
        .collect();
    if let Some(path) = &a.json {
        write_json(path, &rows, out)?;
        if path == Path::new("-") {
            return Ok(EXIT_OK);
        }
    }
    for (i, b) in ctx.basis().iter().enumerate() {
        writeln!(out, "{:>4} {:>2} {}", i, b.weight(), b)?;
    }
    writeln!(out, "basis size: {}", ctx.basis_len())?;
    Ok(EXIT_OK)
}

/// Largest `n` the permutation table is printed for.
const PERM_MAX_N: usize = 10;

fn perm(a: PermArgs, out: &mut dyn Write) -> Outcome {
    let (n, l) = (a.n, a.l);
    if !(1..=PERM_MAX_N).contains(&n) || l < 1 || l > n {
        return Err(Failure::Usage(format!("need 1 <= l <= n <= {}", PERM_MAX_N)));
    }
    if a.first.is_some_and(|i| i < 1 || i > n) {
        return Err(Failure::Usage(format!("--first must lie in 1..={}", n)));
    }
    let rows: Vec<_> = all_with_counts(n, l).filter(|s| a.first.is_none_or(|i| s.perm.first() as usize == i)).collect();
    let stdout_json = a.json.as_deref() == Some(Path::new("-"));
    if let Some(path) = &a.json {
        let table: Vec<Value> = rows.iter().map(|s| json!({"perm": s.perm.as_slice(), "l": s.l, "d": s.d})).collect();
        write_json(path, &table, out)?;
    }
    if stdout_json {
        return Ok(EXIT_OK);
    }
    for s in &rows {
        writeln!(out, "{} {}", s.perm, s.d)?;
    }
    let sum: u64 = rows.iter().map(|s| s.d).sum();
    let unit = factorial(l - 1);
    match a.first {
        None => writeln!(out, "sum: {} (l! S(n,l) = {})", sum, factorial(l) * stirling2(n, l))?,
        Some(1) => writeln!(out, "sum: {} (S(n,l) (l-1)! = {})", sum, stirling2(n, l) * &unit)?,
        Some(i) if i == n => writeln!(out, "sum: {} (S(n-1,l-1) (l-1)! = {})", sum, stirling2(n - 1, l - 1) * &unit)?,
        Some(_) => {
            let divisible = (num_bigint::BigUint::from(sum) % &unit) == num_bigint::BigUint::from(0u32);
            writeln!(out, "sum: {} ((l-1)! = {} divides it: {})", sum, unit, divisible)?
        }
    }
    Ok(EXIT_OK)
}

/// Builds the entries for a verify run. Shared with the tests.
pub fn verify_entries(
    claim: args::ClaimArg,
    opts: &Options,
    cache: Option<&Path>,
    jobs: Option<usize>,
    err: &mut dyn Write,
) -> Result<Vec<Entry>, String> {
    let cases = claims::build(claim, opts).map_err(|e| e.0)?;
    let mut contexts: BTreeMap<String, (ContextSpec, Option<Arc<GroupContext>>)> = BTreeMap::new();
    let mut context_errors = Vec::new();
    for case in &cases {
        let Some(spec) = case.context else { continue };
        let key = format!("{}:{}", spec.0, spec.1);
        contexts.entry(key).or_insert_with(|| match GroupContext::new(spec.0, spec.1) {
            Ok(ctx) => {
                load_cache(&ctx, cache, err);
                (spec, Some(Arc::new(ctx)))
            }
            Err(e) => {
                context_errors.push(claims::context_error(spec, e));
                (spec, None)
            }
        });
    }
    let lookup = |spec: ContextSpec| contexts[&format!("{}:{}", spec.0, spec.1)].1.clone();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build().map_err(|e| e.to_string())?;
    let mut entries: Vec<Entry> = pool.install(|| {
        cases
            .par_iter()
            .map(|case| match case.context {
                None => (case.run)(None),
                Some(spec) => match lookup(spec) {
                    Some(ctx) => (case.run)(Some(&ctx)),
                    None => Vec::new(),
                },
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    });
    entries.extend(context_errors);
    for (_, ctx) in contexts.values() {
        if let Some(ctx) = ctx {
            save_cache(ctx, cache).map_err(|e| format!("{:#}", e))?;
        }
    }
    Ok(entries)
}

fn verify(a: VerifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    if a.jobs == Some(0) {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let g = &a.group;
    let opts = Options { n: g.n, p: g.p, r: g.r, mode: g.mode, kmax: a.kmax, l: a.l, trials: a.trials };
    let dir = cache_dir(g);
    // build errors are parameter errors; surface them before any work
    claims::build(a.claim, &opts)?;
    let entries =
        verify_entries(a.claim, &opts, dir.as_deref(), a.jobs, err).map_err(|e| Failure::Other(anyhow::anyhow!(e)))?;

    let mut parameters = serde_json::Map::new();
    for (k, v) in [("n", g.n), ("p", g.p), ("r", g.r), ("l", a.l)] {
        if let Some(v) = v {
            parameters.insert(k.into(), v.into());
        }
    }
    if let Some(m) = g.mode {
        parameters.insert("mode".into(), (if m == ModeArg::Z { "z" } else { "mod" }).into());
    }
    parameters.insert("kmax".into(), a.kmax.into());
    parameters.insert("trials".into(), a.trials.into());

    let mut manifest = RunManifest::new(a.claim.name(), parameters, entries);
    if !a.timings {
        manifest.strip_timings();
    }
    let json_to_stdout = a.json.as_deref() == Some(Path::new("-"));
    if !json_to_stdout {
        for e in &manifest.entries {
            writeln!(out, "{}", e.line())?;
        }
        let s = &manifest.summary;
        writeln!(
            out,
            "summary: {} verified, {} falsified, {} skipped, {} member, {} non-member, {} inconclusive, {} errors",
            s.verified, s.falsified, s.skipped, s.member, s.non_member, s.inconclusive, s.errors
        )?;
    }
    if let Some(path) = &a.json {
        write_json(path, &manifest, out)?;
    }
    let overall = match manifest.overall {
        Overall::Pass => "pass",
        Overall::Fail => "fail",
        Overall::Mixed => "mixed",
    };
    if !json_to_stdout {
        writeln!(out, "overall: {}", overall)?;
    }
    if manifest.summary.inconclusive > 0 {
        writeln!(
            err,
            "warning: {} inconclusive verdict(s); see the manifest's inconclusive list",
            manifest.summary.inconclusive
        )?;
    }
    Ok(if manifest.overall == Overall::Fail { EXIT_FAIL } else { EXIT_OK })
}
