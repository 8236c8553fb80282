//! Closed-form storage costs and lower bounds.
//!
//! Rational quantities are returned as exact fractions of `K`; multiply by
//! `K` with [`in_bits`]. Only the presentation layer converts to floats.

use std::io::Write;
use std::ops::RangeInclusive;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{regime, Error, Result};

pub type Fraction = Ratio<u64>;

pub fn in_bits(f: Fraction, k_bits: u64) -> Fraction {
    f * k_bits
}

pub fn to_f64(f: Fraction) -> f64 {
    *f.numer() as f64 / *f.denom() as f64
}

/// `log2 C(n, k)`, summed term by term so large arguments do not overflow.
fn log2_binomial(n: u64, k: u64) -> f64 {
    (0..k).map(|j| ((n - j) as f64 / (j + 1) as f64).log2()).sum()
}

/// Lower bound for any scheme, split into its rational leading term and
/// logarithmic correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eq1Bound {
    /// `nu / (c + nu - 1)`, as a fraction of `K`.
    #[serde(with = "ratio_str")]
    pub leading: Fraction,
    /// `log2(nu^nu * C(c + nu - 1, nu)) / (c + nu - 1)`, in bits.
    pub correction: f64,
    pub bits: f64,
}

pub fn lb_eq1(k_bits: u64, nu: u64, c: u64) -> Result<Eq1Bound> {
    if c == 0 || nu == 0 {
        return Err(Error::InvalidParams(format!("needs c, nu >= 1, got c={c} nu={nu}")));
    }
    let span = c + nu - 1;
    let leading = Ratio::new(nu, span);
    let correction = (nu as f64 * (nu as f64).log2() + log2_binomial(span, nu)) / span as f64;
    Ok(Eq1Bound {
        leading,
        correction,
        bits: to_f64(leading) * k_bits as f64 - correction,
    })
}

/// Number of sub-blocks in the decentralized prior construction.
pub fn baseline_t(nu: u64, c: u64) -> u64 {
    if c >= (nu - 1) * (nu - 1) {
        (c - 1).div_ceil(nu) + 1
    } else {
        c.div_ceil(nu - 1)
    }
}

/// `max{nu/c - (nu-1)/(t c), 1/t}`.
pub fn cost_baseline(nu: u64, c: u64) -> Result<Fraction> {
    if nu < 2 || c == 0 {
        return Err(regime("baseline", format!("needs nu >= 2 and c >= 1, got nu={nu} c={c}")));
    }
    let t = baseline_t(nu, c);
    let spread = Ratio::new(nu * t - (nu - 1), t * c);
    Ok(spread.max(Ratio::new(1, t)))
}

/// `(c + 2) / c^2`.
pub fn cost_c1(c: u64) -> Result<Fraction> {
    if c == 0 {
        return Err(regime("c1", "needs c >= 1"));
    }
    Ok(Ratio::new(c + 2, c * c))
}

/// `1 / (c - 2(nu - 1))`.
pub fn cost_c2(nu: u64, c: u64) -> Result<Fraction> {
    if nu == 0 || c + 1 < 2 * nu {
        return Err(regime("c2", format!("needs c >= 2 nu - 1, got nu={nu} c={c}")));
    }
    Ok(Ratio::new(1, c + 2 - 2 * nu))
}

pub fn cost_centralized(c: u64) -> Result<Fraction> {
    if c == 0 {
        return Err(regime("central", "needs c >= 1"));
    }
    Ok(Ratio::new(1, c))
}

/// `2 / (2c - 1)`.
pub fn lb_thm3(c: u64) -> Result<Fraction> {
    if c == 0 {
        return Err(regime("thm3", "needs c >= 1"));
    }
    Ok(Ratio::new(2, 2 * c - 1))
}

/// `max{1/ceil(2c/3), 2/(2c - floor(2c/3))}`.
pub fn lb_thm4(c: u64) -> Result<Fraction> {
    if c < 3 {
        return Err(regime("thm4", format!("needs c >= 3, got {c}")));
    }
    let a = Ratio::new(1, (2 * c).div_ceil(3));
    let b = Ratio::new(2, 2 * c - 2 * c / 3);
    Ok(a.max(b))
}

/// `min{1/(l+1), 2/(2c-l-1)}` for split point `l` in `0..c`.
pub fn thm4_split(c: u64, l: u64) -> Fraction {
    assert!(l < c, "split point {l} outside 0..{c}");
    Ratio::new(1, l + 1).min(Ratio::new(2, 2 * c - l - 1))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSweep {
    pub c: u64,
    #[serde(with = "ratio_str")]
    pub formula: Fraction,
    #[serde(with = "ratio_str")]
    pub best: Fraction,
    pub best_splits: Vec<u64>,
    /// True when some split beats the closed form.
    pub improves: bool,
}

pub fn thm4_sweep(c: u64) -> Result<SplitSweep> {
    let formula = lb_thm4(c)?;
    let values: Vec<Fraction> = (0..c).map(|l| thm4_split(c, l)).collect();
    let best = *values.iter().max().unwrap();
    Ok(SplitSweep {
        c,
        formula,
        best,
        best_splits: (0..c).filter(|&l| values[l as usize] == best).collect(),
        improves: best > formula,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    /// Fraction of `K`, absent for non-rational bounds.
    pub fraction: Option<String>,
    pub bits: Option<f64>,
    pub in_regime: bool,
}

impl Entry {
    fn exact(f: Result<Fraction>, k_bits: u64, in_regime: bool) -> Entry {
        match f {
            Ok(f) => Entry {
                fraction: Some(f.to_string()),
                bits: Some(to_f64(in_bits(f, k_bits))),
                in_regime,
            },
            Err(_) => Entry {
                fraction: None,
                bits: None,
                in_regime: false,
            },
        }
    }

    fn csv(&self) -> String {
        match (self.in_regime, self.bits) {
            (true, Some(b)) => b.to_string(),
            _ => String::new(),
        }
    }
}

pub const VERDICT_GAIN: &str = "side-info gain";
pub const VERDICT_NO_HELP: &str = "no-help";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub c: u64,
    pub nu: u64,
    pub k_bits: u64,
    pub cost_central: Entry,
    pub lb_thm3: Entry,
    pub cost_c1: Entry,
    pub cost_c2: Entry,
    pub cost_baseline: Entry,
    pub lb_eq1: Entry,
    pub lb_thm4: Entry,
    pub verdict: String,
}

pub const TABLE_COLUMNS: [&str; 10] = [
    "c",
    "nu",
    "cost_central",
    "lb_thm3",
    "cost_c1",
    "cost_c2",
    "cost_baseline",
    "lb_eq1",
    "lb_thm4",
    "verdict",
];

/// Verdicts for one `(nu, c)`: "side-info gain" when the best construction
/// in its regime beats the leading term `nu/(c+nu-1)`, "no-help" when the
/// `c_W = c_R` lower bound already reaches the decentralized baseline.
pub fn verdicts(nu: u64, c: u64) -> Vec<&'static str> {
    let mut out = Vec::new();
    let leading = Ratio::new(nu, c + nu - 1);
    let mut best: Option<Fraction> = None;
    if nu == 2 {
        best = cost_c1(c).ok();
    }
    if let Ok(c2) = cost_c2(nu, c) {
        best = Some(best.map_or(c2, |b| b.min(c2)));
    }
    if best.is_some_and(|b| b < leading) {
        out.push(VERDICT_GAIN);
    }
    if nu == 2 {
        if let (Ok(lb), Ok(base)) = (lb_thm4(c), cost_baseline(nu, c)) {
            if lb >= base {
                out.push(VERDICT_NO_HELP);
            }
        }
    }
    out
}

pub fn bound_row(k_bits: u64, nu: u64, c: u64) -> Result<BoundRow> {
    let eq1 = lb_eq1(k_bits, nu, c)?;
    let two = nu == 2;
    Ok(BoundRow {
        c,
        nu,
        k_bits,
        cost_central: Entry::exact(cost_centralized(c), k_bits, true),
        lb_thm3: Entry::exact(lb_thm3(c), k_bits, two && c >= 2),
        cost_c1: Entry::exact(cost_c1(c), k_bits, two),
        cost_c2: Entry::exact(cost_c2(nu, c), k_bits, c + 1 >= 2 * nu),
        cost_baseline: Entry::exact(cost_baseline(nu, c), k_bits, nu >= 2),
        lb_eq1: Entry {
            fraction: None,
            bits: Some(eq1.bits),
            in_regime: true,
        },
        lb_thm4: Entry::exact(lb_thm4(c), k_bits, two && c >= 3),
        verdict: verdicts(nu, c).join(";"),
    })
}

pub fn compare_report(cs: RangeInclusive<u64>, nu: u64, k_bits: u64) -> Result<Vec<BoundRow>> {
    if *cs.start() == 0 || nu == 0 || k_bits == 0 {
        return Err(Error::InvalidParams("c, nu and K must be positive".into()));
    }
    cs.map(|c| bound_row(k_bits, nu, c)).collect()
}

pub fn write_table_csv<W: Write>(rows: &[BoundRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TABLE_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.c.to_string(),
            r.nu.to_string(),
            r.cost_central.csv(),
            r.lb_thm3.csv(),
            r.cost_c1.csv(),
            r.cost_c2.csv(),
            r.cost_baseline.csv(),
            r.lb_eq1.csv(),
            r.lb_thm4.csv(),
            r.verdict.clone(),
        ])?;
    }
    w.flush()
}

mod ratio_str {
    use super::Fraction;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Fraction, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(r)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Fraction, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(D::Error::custom)
    }
}
