//! Per-server storage budgets, in base symbols, chosen from the side view.
//!
//! A message of `K` bits is split into `denom` base symbols of `K / denom`
//! bits each. Every scheme stores, for each version a server has received,
//! some whole number of MDS-coded symbols of that version.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{regime, Error, Result};
use crate::model::{latest_complete, side_view_unchecked, Params, SideView, SystemState, VersionId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Two versions; version 2 gets `K/c` when the view shows `n-2` holders.
    C1,
    /// Any `nu`; the whole budget goes to the local candidate version.
    C2,
    /// Full information; store `K/c` of the latest complete version.
    Central,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::C1 => "c1",
            Scheme::C2 => "c2",
            Scheme::Central => "central",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "c1" => Ok(Scheme::C1),
            "c2" => Ok(Scheme::C2),
            "central" | "centralized" => Ok(Scheme::Central),
            other => Err(Error::InvalidParams(format!("unknown scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Granularity {
    pub scheme: Scheme,
    /// Base symbols per message.
    pub denom: u64,
}

/// Symbol counts for one server, one entry per version `1..=nu`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Allocation {
    pub granularity: Granularity,
    symbols: Vec<u64>,
}

impl Allocation {
    pub fn empty(granularity: Granularity, nu: u32) -> Self {
        Allocation {
            granularity,
            symbols: vec![0; nu as usize],
        }
    }

    pub fn symbols(&self, u: VersionId) -> u64 {
        self.symbols[(u.get() - 1) as usize]
    }

    pub fn set(&mut self, u: VersionId, count: u64) {
        self.symbols[(u.get() - 1) as usize] = count;
    }

    pub fn total_symbols(&self) -> u64 {
        self.symbols.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total_symbols() == 0
    }

    /// Versions with a nonzero share, with their counts.
    pub fn entries(&self) -> impl Iterator<Item = (VersionId, u64)> + '_ {
        self.symbols
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(u, &c)| (VersionId(u as u32 + 1), c))
    }

    /// Exact bits stored for `u` out of a `k_bits` message.
    pub fn bits(&self, u: VersionId, k_bits: u64) -> Ratio<u64> {
        Ratio::new(self.symbols(u) * k_bits, self.granularity.denom)
    }

    pub fn total_bits(&self, k_bits: u64) -> Ratio<u64> {
        Ratio::new(self.total_symbols() * k_bits, self.granularity.denom)
    }
}

/// A storage policy: a function from `(SideView, Params)` to an allocation.
///
/// Implemented by [`Scheme`]; tests implement it for deliberately broken
/// variants.
pub trait AllocationRule: Send + Sync {
    fn scheme(&self) -> Scheme;

    fn name(&self) -> String {
        self.scheme().to_string()
    }

    fn check_regime(&self, p: &Params) -> Result<()>;

    /// Base symbols per message; also the MDS dimension.
    fn denom(&self, p: &Params) -> u64;

    /// Largest number of symbols of one version a server may store.
    fn slots_per_server(&self, p: &Params) -> u64;

    /// The scheme's worst-case cost in symbols.
    fn alpha_symbols(&self, p: &Params) -> u64;

    /// Assumes `check_regime(p)` has passed.
    fn allocate(&self, view: &SideView, p: &Params) -> Allocation;

    fn granularity(&self, p: &Params) -> Granularity {
        Granularity {
            scheme: self.scheme(),
            denom: self.denom(p),
        }
    }

    /// Worst-case cost in bits, `alpha_symbols * K / denom`.
    fn alpha_bits(&self, p: &Params) -> Ratio<u64> {
        Ratio::new(self.alpha_symbols(p) * p.k_bits, self.denom(p))
    }
}

fn ring_regime(name: &str, p: &Params) -> Result<()> {
    if p.n % 2 != 0 {
        return Err(regime(name, format!("n = {} must be even", p.n)));
    }
    if p.c_w != p.n - 1 {
        return Err(regime(name, format!("c_W = {} must equal n - 1 = {}", p.c_w, p.n - 1)));
    }
    if 2 * p.h + 1 != p.n - 1 {
        return Err(regime(
            name,
            format!("2h + 1 = {} must equal n - 1 = {}", 2 * p.h + 1, p.n - 1),
        ));
    }
    if p.c_r > p.n - 1 {
        return Err(regime(name, format!("c_R = {} must be at most n - 1", p.c_r)));
    }
    Ok(())
}

impl AllocationRule for Scheme {
    fn scheme(&self) -> Scheme {
        *self
    }

    fn check_regime(&self, p: &Params) -> Result<()> {
        p.validate()?;
        match self {
            Scheme::C1 => {
                ring_regime("c1", p)?;
                if p.nu > 2 {
                    return Err(regime("c1", format!("nu = {} but the scheme handles at most 2 versions", p.nu)));
                }
                Ok(())
            }
            Scheme::C2 => {
                ring_regime("c2", p)?;
                let need = 2 * p.nu as usize - 1;
                if p.c() < need {
                    return Err(regime("c2", format!("c = {} must be at least 2nu - 1 = {need}", p.c())));
                }
                Ok(())
            }
            Scheme::Central => {
                if !p.full_information() {
                    return Err(regime(
                        "central",
                        format!("needs 2h + 1 >= n, got h = {} with n = {}", p.h, p.n),
                    ));
                }
                Ok(())
            }
        }
    }

    fn denom(&self, p: &Params) -> u64 {
        let c = p.c() as u64;
        match self {
            Scheme::C1 if p.nu == 1 => c,
            Scheme::C1 => c * c,
            Scheme::C2 => c - 2 * (p.nu as u64 - 1),
            Scheme::Central => c,
        }
    }

    fn slots_per_server(&self, p: &Params) -> u64 {
        match self {
            Scheme::C1 if p.nu == 2 => p.c() as u64 + 2,
            Scheme::C1 | Scheme::C2 | Scheme::Central => 1,
        }
    }

    fn alpha_symbols(&self, p: &Params) -> u64 {
        self.slots_per_server(p)
    }

    fn allocate(&self, view: &SideView, p: &Params) -> Allocation {
        match self {
            Scheme::C1 => c1_unchecked(view, p),
            Scheme::C2 => c2_unchecked(view, p),
            Scheme::Central => central_from_view(view, p),
        }
    }
}

fn c1_unchecked(view: &SideView, p: &Params) -> Allocation {
    let g = Scheme::C1.granularity(p);
    let mut a = Allocation::empty(g, p.nu);
    let own = view.own_state();
    let c = p.c() as u64;
    let v1 = VersionId(1);
    if p.nu == 1 {
        if own.contains(v1) {
            a.set(v1, 1);
        }
        return a;
    }
    let v2 = VersionId(2);
    let alpha = c + 2;
    let threshold = p.n - 2;
    let share2 = if own.contains(v2) && view.receivers_in_view(v2) >= threshold {
        c
    } else {
        0
    };
    a.set(v2, share2);
    if own.contains(v1) {
        a.set(v1, alpha - share2);
    }
    a
}

fn c2_unchecked(view: &SideView, p: &Params) -> Allocation {
    let mut a = Allocation::empty(Scheme::C2.granularity(p), p.nu);
    if let Some(u) = view.local_candidate(p) {
        a.set(u, 1);
    }
    a
}

fn central_from_view(view: &SideView, p: &Params) -> Allocation {
    // Full information: the window is the whole state.
    let mut s = SystemState::empty(p.n);
    for &(j, set) in &view.window {
        s.set(j, set);
    }
    central_unchecked(&s, view.center, p)
}

fn central_unchecked(s: &SystemState, i: usize, p: &Params) -> Allocation {
    let mut a = Allocation::empty(Scheme::Central.granularity(p), p.nu);
    if let Some(l) = latest_complete(s, p) {
        if s.get(i).contains(l) {
            a.set(l, 1);
        }
    }
    a
}

/// Two-version allocation with granularity `c^2` and `alpha = c + 2` symbols.
pub fn alloc_c1(view: &SideView, p: &Params) -> Result<Allocation> {
    Scheme::C1.check_regime(p)?;
    Ok(c1_unchecked(view, p))
}

/// One symbol (of `c - 2(nu-1)`) of the local candidate, if any.
pub fn alloc_c2(view: &SideView, p: &Params) -> Result<Allocation> {
    Scheme::C2.check_regime(p)?;
    Ok(c2_unchecked(view, p))
}

pub fn alloc_centralized(s: &SystemState, i: usize, p: &Params) -> Result<Allocation> {
    Scheme::Central.check_regime(p)?;
    p.check_server(i)?;
    s.validate(p)?;
    Ok(central_unchecked(s, i, p))
}

/// One audit row of an allocation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationRow {
    pub state_id: u64,
    pub server: usize,
    pub version: u32,
    pub symbols: u64,
    pub bits: f64,
}

/// Rows for every `(state, server, version)` with a nonzero share.
pub fn allocation_rows<'a, R, I>(rule: &R, p: &Params, states: I) -> Vec<AllocationRow>
where
    R: AllocationRule + ?Sized,
    I: IntoIterator<Item = (u64, &'a SystemState)>,
{
    let mut rows = Vec::new();
    for (state_id, s) in states {
        for i in 0..p.n {
            let a = rule.allocate(&side_view_unchecked(s, i, p), p);
            for (u, count) in a.entries() {
                let bits = a.bits(u, p.k_bits);
                rows.push(AllocationRow {
                    state_id,
                    server: i,
                    version: u.get(),
                    symbols: count,
                    bits: *bits.numer() as f64 / *bits.denom() as f64,
                });
            }
        }
    }
    rows
}

pub fn write_allocation_csv<W: Write>(rows: &[AllocationRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{side_view, VersionSet};

    fn c1_params() -> Params {
        Params::new(6, 5, 5, 2, 2, 1024).unwrap()
    }

    fn state(raw: &[&[u32]]) -> SystemState {
        SystemState::try_from(raw.iter().map(|v| v.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn c1_threshold_met() {
        let p = c1_params();
        // H_0 = {4,5,0,1,2}; version 2 at 0,1,2,4 → 4 = n-2 receivers in view.
        let s = state(&[&[1, 2], &[1, 2], &[2], &[], &[2], &[]]);
        let v = side_view(&s, 0, &p).unwrap();
        assert_eq!(v.receivers_in_view(VersionId(2)), 4);
        let a = alloc_c1(&v, &p).unwrap();
        assert_eq!(a.granularity.denom, 16);
        assert_eq!(a.symbols(VersionId(2)), 4);
        assert_eq!(a.symbols(VersionId(1)), 2);
        assert_eq!(a.bits(VersionId(2), 1024), Ratio::from_integer(256));
        assert_eq!(a.bits(VersionId(1), 1024), Ratio::from_integer(128));
        assert_eq!(a.total_bits(1024), Ratio::from_integer(384));
    }

    #[test]
    fn c1_threshold_missed() {
        let p = c1_params();
        let s = state(&[&[1, 2], &[1, 2], &[2], &[], &[], &[]]);
        let v = side_view(&s, 0, &p).unwrap();
        assert_eq!(v.receivers_in_view(VersionId(2)), 3);
        let a = alloc_c1(&v, &p).unwrap();
        assert_eq!(a.symbols(VersionId(1)), 6);
        assert_eq!(a.symbols(VersionId(2)), 0);
        assert_eq!(a.total_bits(1024), Ratio::from_integer(384));
    }

    #[test]
    fn c1_received_only() {
        let p = c1_params();
        let s = state(&[&[2], &[1, 2], &[2], &[], &[2], &[]]);
        let a = alloc_c1(&side_view(&s, 0, &p).unwrap(), &p).unwrap();
        assert_eq!(a.symbols(VersionId(2)), 4);
        assert_eq!(a.symbols(VersionId(1)), 0);

        // Threshold met for version 2, but the server only holds version 1.
        let s = state(&[&[1], &[2], &[2], &[2], &[2], &[2]]);
        let a = alloc_c1(&side_view(&s, 0, &p).unwrap(), &p).unwrap();
        assert_eq!(a.symbols(VersionId(2)), 0);
        assert_eq!(a.symbols(VersionId(1)), 6);

        let a = alloc_c1(&side_view(&SystemState::empty(6), 0, &p).unwrap(), &p).unwrap();
        assert!(a.is_empty());
    }

    #[test]
    fn c1_regime_errors() {
        let s = SystemState::empty(7);
        let p = Params::new(7, 6, 6, 2, 3, 1024).unwrap();
        let v = side_view(&s, 0, &p).unwrap();
        assert!(matches!(alloc_c1(&v, &p), Err(Error::Regime { .. })));
        let p = Params::new(6, 5, 5, 2, 1, 1024).unwrap();
        let v = side_view(&SystemState::empty(6), 0, &p).unwrap();
        assert!(matches!(alloc_c1(&v, &p), Err(Error::Regime { .. })));
        let p = Params::new(6, 5, 5, 3, 2, 1024).unwrap();
        let v = side_view(&SystemState::empty(6), 0, &p).unwrap();
        assert!(matches!(alloc_c1(&v, &p), Err(Error::Regime { .. })));
    }

    #[test]
    fn c2_examples() {
        // n = 8, nu = 3, c = 6: granularity 2.
        let p = Params::new(8, 7, 7, 3, 3, 1024).unwrap();
        let s = SystemState::uniform(8, VersionSet::from([1, 2, 3]));
        let a = alloc_c2(&side_view(&s, 0, &p).unwrap(), &p).unwrap();
        assert_eq!(a.granularity.denom, 2);
        assert_eq!(a.symbols(VersionId(3)), 1);
        assert_eq!(a.total_bits(1024), Ratio::from_integer(512));

        let a = alloc_c2(&side_view(&SystemState::empty(8), 0, &p).unwrap(), &p).unwrap();
        assert!(a.is_empty());

        let p = c1_params();
        let s = SystemState::uniform(6, VersionSet::from([1]));
        let a = alloc_c2(&side_view(&s, 0, &p).unwrap(), &p).unwrap();
        assert_eq!(a.symbols(VersionId(1)), 1);
        assert_eq!(a.total_bits(1024), Ratio::from_integer(512));
    }

    #[test]
    fn c2_regime_errors() {
        // c = 4 < 2*3 - 1.
        let p = Params::new(6, 5, 5, 3, 2, 1024).unwrap();
        let v = side_view(&SystemState::empty(6), 0, &p).unwrap();
        assert!(matches!(alloc_c2(&v, &p), Err(Error::Regime { .. })));
    }

    #[test]
    fn centralized_examples() {
        let p = Params::new(6, 5, 5, 2, 3, 1024).unwrap();
        let s1 = state(&[&[1, 2], &[1, 2], &[1, 2], &[1, 2], &[1, 2], &[]]);
        let a = alloc_centralized(&s1, 0, &p).unwrap();
        assert_eq!(a.symbols(VersionId(2)), 1);
        assert_eq!(a.total_bits(1024), Ratio::from_integer(256));

        assert!(alloc_centralized(&SystemState::empty(6), 0, &p).unwrap().is_empty());

        let s = state(&[&[2], &[1], &[1], &[1], &[1], &[1]]);
        assert_eq!(latest_complete(&s, &p), Some(VersionId(1)));
        assert!(alloc_centralized(&s, 0, &p).unwrap().is_empty());
        assert_eq!(alloc_centralized(&s, 1, &p).unwrap().symbols(VersionId(1)), 1);

        let p = Params::new(6, 5, 5, 2, 2, 1024).unwrap();
        assert!(alloc_centralized(&s, 0, &p).is_err());
    }

    #[test]
    fn central_rule_matches_direct() {
        let p = Params::new(5, 4, 4, 2, 2, 64).unwrap();
        for s in crate::model::enumerate_states(&p, 1 << 20).unwrap() {
            for i in 0..5 {
                let via_view = Scheme::Central.allocate(&side_view(&s, i, &p).unwrap(), &p);
                assert_eq!(via_view, alloc_centralized(&s, i, &p).unwrap());
            }
        }
    }

    #[test]
    fn nu_one_collapses_to_centralized_cost() {
        let p = Params::new(6, 5, 5, 1, 2, 1024).unwrap();
        let s = SystemState::uniform(6, VersionSet::from([1]));
        let v = side_view(&s, 0, &p).unwrap();
        for scheme in [Scheme::C1, Scheme::C2] {
            let a = scheme.allocate(&v, &p);
            assert_eq!(a.total_bits(1024), Ratio::from_integer(256), "{scheme}");
        }
    }

    #[test]
    fn csv_rows() {
        let p = c1_params();
        let s = state(&[&[1, 2], &[1, 2], &[1, 2], &[1, 2], &[1, 2], &[]]);
        let rows = allocation_rows(&Scheme::C1, &p, [(7u64, &s)]);
        assert_eq!(rows.len(), 10);
        let mut buf = Vec::new();
        write_allocation_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("state_id,server,version,symbols,bits\n"));
        assert!(text.contains("7,0,1,2,128.0\n"));
        assert!(text.contains("7,0,2,4,256.0\n"));
    }

    #[test]
    fn scheme_parse() {
        assert_eq!("C1".parse::<Scheme>().unwrap(), Scheme::C1);
        assert_eq!("central".parse::<Scheme>().unwrap(), Scheme::Central);
        assert!("c3".parse::<Scheme>().is_err());
    }
}
