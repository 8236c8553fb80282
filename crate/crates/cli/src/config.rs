use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mvcode::{Params, Scheme};
use serde::{Deserialize, Serialize};

/// Environment variable that overrides the default enumeration budget.
pub const BUDGET_ENV: &str = "MVCODE_BUDGET";

#[derive(Debug, Clone, PartialEq, Eq, Parser, Serialize, Deserialize)]
#[command(name = "mvcode", version, about = "Verify and compare multi-version storage codes")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Eq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Check a scheme's decoding guarantee over all or sampled states.
    Verify(VerifyArgs),
    /// Emit the cost and lower-bound comparison table.
    Table(TableArgs),
    /// Build an indistinguishable state pair and check it.
    Fixtures(FixtureArgs),
    /// Encode payloads, decode from one read set, compare bytes.
    Roundtrip(RoundtripArgs),
    /// Search for the cheapest side-view strategy on a tiny instance.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, PartialEq, Eq, Args, Serialize, Deserialize)]
pub struct ParamArgs {
    /// Number of servers.
    #[arg(long)]
    pub n: usize,
    /// Write quorum size.
    #[arg(long)]
    pub cw: usize,
    /// Read quorum size.
    #[arg(long)]
    pub cr: usize,
    /// Number of versions.
    #[arg(long, default_value_t = 2)]
    pub nu: u32,
    /// Side-information radius.
    #[arg(long)]
    pub h: usize,
    /// Message size in bits.
    #[arg(long = "K", default_value_t = 1024)]
    pub k: u64,
}

impl ParamArgs {
    pub fn params(&self) -> mvcode::Result<Params> {
        Params::new(self.n, self.cw, self.cr, self.nu, self.h, self.k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeArg {
    C1,
    C2,
    Central,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Scheme {
        match s {
            SchemeArg::C1 => Scheme::C1,
            SchemeArg::C2 => Scheme::C2,
            SchemeArg::Central => Scheme::Central,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Exhaustive,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Thm3,
    Thm4,
}

#[derive(Debug, Clone, PartialEq, Eq, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, value_enum, default_value_t = SchemeArg::C1)]
    pub scheme: SchemeArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Exhaustive)]
    pub mode: ModeArg,
    /// States drawn in sampled mode.
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    /// Seeds state sampling and bit-exact payloads.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also encode and decode real payloads.
    #[arg(long)]
    pub bitexact: bool,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Cap on states x read sets; defaults to $MVCODE_BUDGET or 2^28.
    #[arg(long)]
    pub budget: Option<u64>,
    /// Report file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Args, Serialize, Deserialize)]
pub struct TableArgs {
    #[arg(long, default_value_t = 2)]
    pub nu: u64,
    /// Inclusive range of c, as `a:b` or a single value.
    #[arg(long, default_value = "3:10")]
    pub c: String,
    #[arg(long = "K", default_value_t = 1024)]
    pub k: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Args, Serialize, Deserialize)]
pub struct FixtureArgs {
    #[arg(long, value_enum)]
    pub which: Which,
    #[arg(long)]
    pub n: usize,
    /// Required for thm4; for thm3 defaults to n - 2.
    #[arg(long)]
    pub c: Option<usize>,
    /// Defaults to the largest radius the fixture allows.
    #[arg(long)]
    pub h: Option<usize>,
    #[arg(long = "K", default_value_t = 1024)]
    pub k: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Args, Serialize, Deserialize)]
pub struct RoundtripArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub cw: usize,
    #[arg(long)]
    pub cr: usize,
    #[arg(long, default_value_t = 2)]
    pub nu: u32,
    #[arg(long)]
    pub h: usize,
    /// Message size in bits; defaults to the payload size, or 1024.
    #[arg(long = "K")]
    pub k: Option<u64>,
    #[arg(long, value_enum, default_value_t = SchemeArg::C1)]
    pub scheme: SchemeArg,
    /// Raw payload file, one per version in order; random when absent.
    #[arg(long = "payload")]
    pub payloads: Vec<PathBuf>,
    /// JSON state (list of per-server version lists); random when absent.
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// Comma-separated server ids; random when absent.
    #[arg(long = "read-set", value_delimiter = ',')]
    pub read_set: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the encoded stores as JSON.
    #[arg(long)]
    pub stores_out: Option<PathBuf>,
    /// Decode from these stores instead of encoding afresh.
    #[arg(long)]
    pub stores_in: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Args, Serialize, Deserialize)]
pub struct OracleArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Allocations are multiples of K/G.
    #[arg(long = "G", default_value_t = 4)]
    pub g: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `a:b` or `a` into an inclusive range with `1 <= a <= b`.
pub fn parse_range(raw: &str) -> Option<std::ops::RangeInclusive<u64>> {
    let (a, b) = match raw.split_once(':') {
        Some((a, b)) => (a.trim().parse().ok()?, b.trim().parse().ok()?),
        None => {
            let v = raw.trim().parse().ok()?;
            (v, v)
        }
    };
    (1 <= a && a <= b).then_some(a..=b)
}
