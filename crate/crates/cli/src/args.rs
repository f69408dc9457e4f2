use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "cohen",
    version,
    about = "Normal forms and identity checks in reduced free groups with torsion generators"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Collect a word into its normal form.
    Collect(CollectArgs),
    /// Run verification claims and emit a run manifest.
    Verify(VerifyArgs),
    /// Print the ordered commutator basis.
    Basis(BasisArgs),
    /// Print permutations with their block-division counts.
    Perm(PermArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Integral coefficients.
    Z,
    /// Coefficients mod p^r.
    Mod,
}

#[derive(Debug, Clone, Args)]
pub struct GroupArgs {
    /// Number of generators.
    #[arg(long)]
    pub n: Option<u32>,
    /// Odd prime of the torsion relation.
    #[arg(long)]
    pub p: Option<u32>,
    /// Exponent r of the torsion relation x^(p^r) = 1.
    #[arg(long)]
    pub r: Option<u32>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Structure-constant cache directory; COHEN_CACHE_DIR takes precedence.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CollectArgs {
    #[command(flatten)]
    pub group: GroupArgs,
    /// The word, e.g. "[x4,_2 (x1 x2 x3)]".
    #[arg(long)]
    pub expr: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ClaimArg {
    Q1,
    Q2,
    Engel,
    Shuffle,
    Pr,
    Lemma22,
    Lemma23,
    Lemma25,
    Lemma26,
    #[value(name = "prop27-np2")]
    Prop27Np2,
    #[value(name = "prop27-np1")]
    Prop27Np1,
    Cor28,
    #[value(name = "remark-r1")]
    RemarkR1,
    Consistency,
    All,
}

impl ClaimArg {
    pub fn name(self) -> &'static str {
        match self {
            ClaimArg::Q1 => "q1",
            ClaimArg::Q2 => "q2",
            ClaimArg::Engel => "engel",
            ClaimArg::Shuffle => "shuffle",
            ClaimArg::Pr => "pr",
            ClaimArg::Lemma22 => "lemma22",
            ClaimArg::Lemma23 => "lemma23",
            ClaimArg::Lemma25 => "lemma25",
            ClaimArg::Lemma26 => "lemma26",
            ClaimArg::Prop27Np2 => "prop27-np2",
            ClaimArg::Prop27Np1 => "prop27-np1",
            ClaimArg::Cor28 => "cor28",
            ClaimArg::RemarkR1 => "remark-r1",
            ClaimArg::Consistency => "consistency",
            ClaimArg::All => "all",
        }
    }

    /// Every concrete claim, in the order `all` runs them.
    pub const EACH: [ClaimArg; 14] = [
        ClaimArg::Consistency,
        ClaimArg::Lemma22,
        ClaimArg::Lemma23,
        ClaimArg::Q1,
        ClaimArg::Q2,
        ClaimArg::Engel,
        ClaimArg::Shuffle,
        ClaimArg::Pr,
        ClaimArg::Lemma25,
        ClaimArg::Lemma26,
        ClaimArg::Prop27Np2,
        ClaimArg::Prop27Np1,
        ClaimArg::Cor28,
        ClaimArg::RemarkR1,
    ];
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub claim: ClaimArg,
    #[command(flatten)]
    pub group: GroupArgs,
    /// Largest power k in (q1) and (q2).
    #[arg(long, default_value_t = 12)]
    pub kmax: u32,
    /// Number of blocks l.
    #[arg(long)]
    pub l: Option<u32>,
    /// Randomized trials per consistency check.
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    /// Write the run manifest here ("-" for stdout).
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Worker threads for independent cases.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Record per-case wall-clock times (makes the manifest non-reproducible).
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Args)]
pub struct BasisArgs {
    #[arg(long)]
    pub n: u32,
    /// Write the basis as JSON here ("-" for stdout).
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PermArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub l: usize,
    /// Only permutations starting with this symbol.
    #[arg(long)]
    pub first: Option<usize>,
    /// Write the table as a JSON array of {perm, l, d} here ("-" for stdout).
    #[arg(long)]
    pub json: Option<PathBuf>,
}
