//! Exhaustive and sampled verification of allocation schemes.
//!
//! Two layers check the decoding requirement for every read set:
//! the counting layer sums allocated symbols per version, the bit-exact
//! layer encodes random payloads and decodes them through [`quorum_decode`].

pub mod fixtures;
pub mod oracle;

use std::time::{Duration, Instant};

use itertools::Itertools;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{Allocation, AllocationRule};
use crate::codec::{encode_all, layout_for, mask_tail, quorum_decode, Messages, ServerStore};
use crate::error::{Error, Result};
use crate::model::{
    latest_complete, random_state, side_view_unchecked, Params, StateSpace, SystemState, VersionId,
};

pub use fixtures::{check_indistinguishable, fixture_thm3, fixture_thm4, FixturePair};
pub use oracle::{oracle_min_cost, OracleLimits, OracleResult};

/// Violations kept verbatim in a report; the rest are only counted.
pub const MAX_REPORTED_VIOLATIONS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTrace {
    pub version: u32,
    pub symbols: u64,
    pub needed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub state: SystemState,
    pub read_set: Vec<usize>,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<CountTrace>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Mode {
    Exhaustive,
    Sampled { count: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    pub mode: Mode,
    pub bitexact: bool,
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
    /// Cap on `states * read sets`.
    pub budget: u64,
    pub payload_seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            mode: Mode::Exhaustive,
            bitexact: false,
            jobs: 0,
            budget: crate::model::DEFAULT_BUDGET,
            payload_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub symbols: u64,
    /// Exact bits, `symbols * K / denom`, as `a` or `a/b`.
    pub bits_exact: String,
    pub bits: f64,
    /// Physical store size, including padding; 0 unless bit-exact ran.
    pub store_bits: u64,
    pub state: Option<SystemState>,
    pub server: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub scheme: String,
    pub params: Params,
    pub mode: Mode,
    pub layers: Vec<String>,
    pub states_checked: u64,
    pub read_sets_per_state: u64,
    pub denom: u64,
    pub alpha_symbols: u64,
    pub alpha_bits_exact: String,
    pub alpha_bits: f64,
    pub worst_case: WorstCase,
    pub worst_case_equals_alpha: bool,
    pub violation_count: u64,
    pub violations: Vec<Violation>,
    pub pass: bool,
    /// Wall time; kept out of the serialized report so reruns are byte-identical.
    #[serde(skip)]
    pub elapsed: Duration,
}

fn ratio_string(r: Ratio<u64>) -> String {
    r.to_string()
}

fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn allocations<R: AllocationRule + ?Sized>(rule: &R, s: &SystemState, p: &Params) -> Vec<Allocation> {
    (0..p.n)
        .map(|i| rule.allocate(&side_view_unchecked(s, i, p), p))
        .collect()
}

pub fn read_sets(p: &Params) -> impl Iterator<Item = Vec<usize>> {
    (0..p.n).combinations(p.c_r)
}

pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, j| acc * (n - j) as u128 / (j + 1) as u128)
}

/// The latest version `m >= floor` whose allocated symbols over `read_set`
/// reach `denom`, with the per-version trace.
fn counting_outcome(
    allocs: &[Allocation],
    read_set: &[usize],
    floor: VersionId,
    nu: u32,
    denom: u64,
) -> (Option<VersionId>, Vec<CountTrace>) {
    let mut trace = Vec::new();
    for m in (floor.get()..=nu).rev().map(VersionId) {
        let have: u64 = read_set.iter().map(|&t| allocs[t].symbols(m)).sum();
        trace.push(CountTrace {
            version: m.get(),
            symbols: have,
            needed: denom,
        });
        if have >= denom {
            return (Some(m), trace);
        }
    }
    (None, trace)
}

/// Counting-layer check of one state over every read set of size `c_R`.
pub fn check_state_counting<R: AllocationRule + ?Sized>(
    rule: &R,
    s: &SystemState,
    p: &Params,
) -> std::result::Result<(), Violation> {
    let Some(floor) = latest_complete(s, p) else {
        return Ok(());
    };
    let allocs = allocations(rule, s, p);
    let denom = rule.denom(p);
    for t in read_sets(p) {
        let (hit, trace) = counting_outcome(&allocs, &t, floor, p.nu, denom);
        if hit.is_none() {
            return Err(Violation {
                state: s.clone(),
                read_set: t,
                reason: format!("no version >= {} reaches {denom} symbols", floor.get()),
                trace,
            });
        }
    }
    Ok(())
}

pub fn random_messages(p: &Params, seed: u64) -> Messages {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bytes = p.k_bits.div_ceil(8) as usize;
    p.versions()
        .map(|u| {
            let mut m: Vec<u8> = (0..bytes).map(|_| rng.gen()).collect();
            mask_tail(&mut m, p.k_bits);
            (u, m)
        })
        .collect()
}

/// Bit-exact check: random payloads, real stores, real decodes.
pub fn check_state_bitexact<R: AllocationRule + ?Sized>(
    rule: &R,
    s: &SystemState,
    p: &Params,
    seed: u64,
) -> std::result::Result<(), Violation> {
    let messages = random_messages(p, seed);
    let stores = encode_all(rule, s, &messages, p).map_err(|e| Violation {
        state: s.clone(),
        read_set: Vec::new(),
        reason: format!("encode failed: {e}"),
        trace: Vec::new(),
    })?;
    check_stores(rule, s, p, &messages, &stores)
}

/// Decodes `stores` through every read set and compares against `messages`.
///
/// Also checks that each store's size matches its allocation and that the
/// decoded version is the one the counting layer predicts.
pub fn check_stores<R: AllocationRule + ?Sized>(
    rule: &R,
    s: &SystemState,
    p: &Params,
    messages: &Messages,
    stores: &[ServerStore],
) -> std::result::Result<(), Violation> {
    let violation = |t: Vec<usize>, reason: String| Violation {
        state: s.clone(),
        read_set: t,
        reason,
        trace: Vec::new(),
    };
    let allocs = allocations(rule, s, p);
    let layout = layout_for(rule, p);
    for (i, (a, st)) in allocs.iter().zip(stores).enumerate() {
        let expected = a.total_symbols() * layout.symbol_bits();
        if st.bits != expected || st.payload_bits() != expected {
            return Err(violation(
                vec![i],
                format!("store size {} bits, allocation says {expected}", st.bits),
            ));
        }
    }
    let floor = latest_complete(s, p);
    let denom = rule.denom(p);
    for t in read_sets(p) {
        let predicted = floor.and_then(|f| counting_outcome(&allocs, &t, f, p.nu, denom).0);
        match quorum_decode(rule, s, &t, stores, p) {
            Ok(None) => {
                if floor.is_some() {
                    return Err(violation(t, "NULL returned with a complete version".into()));
                }
            }
            Ok(Some(d)) => {
                if Some(d.payload.as_slice()) != messages.get(&d.version).map(Vec::as_slice) {
                    return Err(violation(t, format!("payload mismatch for {}", d.version)));
                }
                if floor.is_none_or(|f| d.version < f) {
                    return Err(violation(t, format!("decoded stale version {}", d.version)));
                }
                if predicted != Some(d.version) {
                    return Err(violation(
                        t,
                        format!(
                            "counting predicts {:?}, bit-exact decoded {}",
                            predicted.map(VersionId::get),
                            d.version
                        ),
                    ));
                }
            }
            Err(e) => return Err(violation(t, e.to_string())),
        }
    }
    Ok(())
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `k`-th sampled state.
pub fn sample_seed(seed: u64, k: u64) -> u64 {
    splitmix64(seed ^ splitmix64(k))
}

#[derive(Default)]
struct Partial {
    checked: u64,
    violation_count: u64,
    violations: Vec<Violation>,
    worst_symbols: u64,
    worst_store_bits: u64,
    worst_at: Option<(SystemState, usize)>,
}

impl Partial {
    fn merge(mut self, other: Partial) -> Partial {
        self.checked += other.checked;
        self.violation_count += other.violation_count;
        let room = MAX_REPORTED_VIOLATIONS.saturating_sub(self.violations.len());
        self.violations.extend(other.violations.into_iter().take(room));
        if other.worst_symbols > self.worst_symbols || self.worst_at.is_none() {
            self.worst_symbols = other.worst_symbols;
            self.worst_at = other.worst_at;
        }
        self.worst_store_bits = self.worst_store_bits.max(other.worst_store_bits);
        self
    }

    fn record(&mut self, v: Violation) {
        self.violation_count += 1;
        if self.violations.len() < MAX_REPORTED_VIOLATIONS {
            self.violations.push(v);
        }
    }
}

fn check_one<R: AllocationRule + ?Sized>(
    rule: &R,
    s: SystemState,
    state_key: u64,
    p: &Params,
    opts: &VerifyOptions,
    acc: &mut Partial,
) {
    acc.checked += 1;
    for i in 0..p.n {
        let total = rule.allocate(&side_view_unchecked(&s, i, p), p).total_symbols();
        if total > acc.worst_symbols || acc.worst_at.is_none() {
            acc.worst_symbols = total;
            acc.worst_at = Some((s.clone(), i));
        }
    }
    if let Err(v) = check_state_counting(rule, &s, p) {
        acc.record(v);
        return;
    }
    if opts.bitexact {
        let seed = splitmix64(opts.payload_seed ^ state_key);
        let messages = random_messages(p, seed);
        match encode_all(rule, &s, &messages, p) {
            Ok(stores) => {
                let biggest = stores.iter().map(|st| st.bits).max().unwrap_or(0);
                acc.worst_store_bits = acc.worst_store_bits.max(biggest);
                if let Err(v) = check_stores(rule, &s, p, &messages, &stores) {
                    acc.record(v);
                }
            }
            Err(e) => acc.record(Violation {
                state: s,
                read_set: Vec::new(),
                reason: format!("encode failed: {e}"),
                trace: Vec::new(),
            }),
        }
    }
}

/// Runs every per-state check over the chosen state population.
///
/// The result is deterministic for a given `(rule, p, opts)` regardless of
/// `opts.jobs`.
pub fn verify<R: AllocationRule + ?Sized>(rule: &R, p: &Params, opts: &VerifyOptions) -> Result<VerifyReport> {
    let started = Instant::now();
    rule.check_regime(p)?;
    let per_state = binomial(p.n as u64, p.c_r as u64);
    let (total, space) = match opts.mode {
        Mode::Exhaustive => {
            let space = StateSpace::new(p, opts.budget)?;
            (space.len(), Some(space))
        }
        Mode::Sampled { count, .. } => (count, None),
    };
    let needed = total as u128 * per_state;
    if needed > opts.budget as u128 {
        return Err(Error::BudgetExceeded {
            needed,
            budget: opts.budget,
        });
    }

    let parts = (rayon::current_num_threads().max(opts.jobs) * 8).max(1);
    let chunk = total.div_ceil(parts as u64).max(1);
    let ranges: Vec<(u64, u64)> = (0..total)
        .step_by(chunk as usize)
        .map(|a| (a, (a + chunk).min(total)))
        .collect();

    let run = || {
        ranges
            .par_iter()
            .map(|&(a, b)| {
                let mut acc = Partial::default();
                for k in a..b {
                    let (s, key) = match (opts.mode, &space) {
                        (Mode::Exhaustive, Some(space)) => (space.state_at(k), k),
                        (Mode::Sampled { seed, .. }, _) => {
                            let sk = sample_seed(seed, k);
                            (random_state(p, sk), sk)
                        }
                        _ => unreachable!(),
                    };
                    check_one(rule, s, key, p, opts, &mut acc);
                }
                acc
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(Partial::default(), Partial::merge)
    };
    let merged = if opts.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?
            .install(run)
    } else {
        run()
    };

    let denom = rule.denom(p);
    let alpha_symbols = rule.alpha_symbols(p);
    let alpha = rule.alpha_bits(p);
    let worst = Ratio::new(merged.worst_symbols * p.k_bits, denom);
    let mut layers = vec!["counting".to_string()];
    if opts.bitexact {
        layers.push("bitexact".to_string());
    }
    let (worst_state, worst_server) = match merged.worst_at {
        Some((s, i)) => (Some(s), Some(i)),
        None => (None, None),
    };
    Ok(VerifyReport {
        scheme: rule.name(),
        params: *p,
        mode: opts.mode,
        layers,
        states_checked: merged.checked,
        read_sets_per_state: per_state as u64,
        denom,
        alpha_symbols,
        alpha_bits_exact: ratio_string(alpha),
        alpha_bits: ratio_f64(alpha),
        worst_case: WorstCase {
            symbols: merged.worst_symbols,
            bits_exact: ratio_string(worst),
            bits: ratio_f64(worst),
            store_bits: merged.worst_store_bits,
            state: worst_state,
            server: worst_server,
        },
        worst_case_equals_alpha: merged.worst_symbols == alpha_symbols,
        violation_count: merged.violation_count,
        pass: merged.violation_count == 0 && merged.worst_symbols <= alpha_symbols,
        violations: merged.violations,
        elapsed: started.elapsed(),
    })
}
