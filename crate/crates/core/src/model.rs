//! System parameters, server states, ring neighborhoods and completeness.
//!
//! Servers are numbered `0..n` around a ring; versions are numbered `1..=nu`
//! and totally ordered by id. A server at position `i` sees the states of
//! the servers `i-h ..= i+h` (mod `n`), saturating to the whole ring once
//! `2h + 1 >= n`.

use std::fmt;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_SERVERS: usize = 64;
pub const MAX_VERSIONS: u32 = 16;

/// Default cap on the number of items an exhaustive enumeration may visit.
pub const DEFAULT_BUDGET: u64 = 1 << 28;

/// The system tuple `(n, c_W, c_R, nu, h, K)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Params {
    pub n: usize,
    pub c_w: usize,
    pub c_r: usize,
    pub nu: u32,
    pub h: usize,
    /// Message length in bits.
    pub k_bits: u64,
}

impl Params {
    pub fn new(n: usize, c_w: usize, c_r: usize, nu: u32, h: usize, k_bits: u64) -> Result<Self> {
        let p = Params {
            n,
            c_w,
            c_r,
            nu,
            h,
            k_bits,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.n == 0 || self.n > MAX_SERVERS {
            return bad(format!("n = {} must lie in 1..={MAX_SERVERS}", self.n));
        }
        if self.c_w == 0 || self.c_w > self.n {
            return bad(format!("c_W = {} must lie in 1..=n", self.c_w));
        }
        if self.c_r == 0 || self.c_r > self.n {
            return bad(format!("c_R = {} must lie in 1..=n", self.c_r));
        }
        if self.c_w + self.c_r < self.n + 1 {
            return bad(format!(
                "quorum overlap c = c_W + c_R - n = {} must be at least 1",
                self.c_w as i64 + self.c_r as i64 - self.n as i64
            ));
        }
        if self.nu == 0 || self.nu > MAX_VERSIONS {
            return bad(format!("nu = {} must lie in 1..={MAX_VERSIONS}", self.nu));
        }
        if self.k_bits == 0 {
            return bad("K must be at least 1 bit".into());
        }
        Ok(())
    }

    /// Quorum overlap `c = c_W + c_R - n`.
    pub fn c(&self) -> usize {
        self.c_w + self.c_r - self.n
    }

    pub fn neighborhood_size(&self) -> usize {
        (2 * self.h + 1).min(self.n)
    }

    /// True when every server sees the whole ring.
    pub fn full_information(&self) -> bool {
        2 * self.h + 1 >= self.n
    }

    pub fn versions(&self) -> impl DoubleEndedIterator<Item = VersionId> {
        (1..=self.nu).map(VersionId)
    }

    pub fn check_server(&self, i: usize) -> Result<()> {
        if i < self.n {
            Ok(())
        } else {
            Err(Error::InvalidServer { server: i, n: self.n })
        }
    }
}

/// A version id in `1..=nu`; larger ids are later versions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VersionId(pub u32);

impl VersionId {
    pub fn get(self) -> u32 {
        self.0
    }

    fn bit(self) -> u32 {
        1 << (self.0 - 1)
    }
}

impl fmt::Display for VersionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "W{}", self.0)
    }
}

/// A subset of `[nu]`, bit `u - 1` standing for version `u`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VersionSet(u32);

impl VersionSet {
    pub const EMPTY: VersionSet = VersionSet(0);

    pub fn from_mask(mask: u32) -> Self {
        VersionSet(mask)
    }

    /// All of `1..=nu`.
    pub fn full(nu: u32) -> Self {
        VersionSet(((1u64 << nu) - 1) as u32)
    }

    pub fn mask(self) -> u32 {
        self.0
    }

    pub fn contains(self, u: VersionId) -> bool {
        u.0 >= 1 && u.0 <= 32 && self.0 & u.bit() != 0
    }

    pub fn insert(&mut self, u: VersionId) {
        self.0 |= u.bit();
    }

    pub fn remove(&mut self, u: VersionId) {
        self.0 &= !u.bit();
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl DoubleEndedIterator<Item = VersionId> {
        (1..=32u32)
            .filter(move |u| self.0 & (1 << (u - 1)) != 0)
            .map(VersionId)
    }

    pub fn max(self) -> Option<VersionId> {
        if self.0 == 0 {
            None
        } else {
            Some(VersionId(32 - self.0.leading_zeros()))
        }
    }
}

impl FromIterator<VersionId> for VersionSet {
    fn from_iter<I: IntoIterator<Item = VersionId>>(iter: I) -> Self {
        let mut s = VersionSet::EMPTY;
        for u in iter {
            s.insert(u);
        }
        s
    }
}

impl<const N: usize> From<[u32; N]> for VersionSet {
    fn from(ids: [u32; N]) -> Self {
        ids.into_iter().map(VersionId).collect()
    }
}

/// The per-server received-version subsets `S(0), ..., S(n-1)`.
///
/// Serializes as a JSON array of `n` arrays of version ids, e.g.
/// `[[1,2],[1],[]]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<u32>>", try_from = "Vec<Vec<u32>>")]
pub struct SystemState {
    states: Vec<VersionSet>,
}

impl SystemState {
    pub fn new(states: Vec<VersionSet>) -> Self {
        SystemState { states }
    }

    pub fn empty(n: usize) -> Self {
        SystemState {
            states: vec![VersionSet::EMPTY; n],
        }
    }

    /// Every server holds `set`.
    pub fn uniform(n: usize, set: VersionSet) -> Self {
        SystemState {
            states: vec![set; n],
        }
    }

    pub fn n(&self) -> usize {
        self.states.len()
    }

    pub fn get(&self, i: usize) -> VersionSet {
        self.states[i]
    }

    pub fn set(&mut self, i: usize, s: VersionSet) {
        self.states[i] = s;
    }

    pub fn as_slice(&self) -> &[VersionSet] {
        &self.states
    }

    /// Checks the state against `p`: exactly `n` entries, ids within `[nu]`.
    pub fn validate(&self, p: &Params) -> Result<()> {
        if self.states.len() != p.n {
            return Err(Error::StateFormat(format!(
                "expected {} server states, got {}",
                p.n,
                self.states.len()
            )));
        }
        let allowed = VersionSet::full(p.nu);
        for (i, s) in self.states.iter().enumerate() {
            if s.0 & !allowed.0 != 0 {
                return Err(Error::StateFormat(format!(
                    "server {i} holds a version outside 1..={}",
                    p.nu
                )));
            }
        }
        Ok(())
    }
}

impl From<SystemState> for Vec<Vec<u32>> {
    fn from(s: SystemState) -> Self {
        s.states
            .iter()
            .map(|set| set.iter().map(VersionId::get).collect())
            .collect()
    }
}

impl TryFrom<Vec<Vec<u32>>> for SystemState {
    type Error = Error;

    fn try_from(raw: Vec<Vec<u32>>) -> Result<Self> {
        let mut states = Vec::with_capacity(raw.len());
        for (i, ids) in raw.into_iter().enumerate() {
            let mut set = VersionSet::EMPTY;
            for id in ids {
                if id == 0 || id > MAX_VERSIONS {
                    return Err(Error::StateFormat(format!(
                        "server {i}: version id {id} out of range"
                    )));
                }
                set.insert(VersionId(id));
            }
            states.push(set);
        }
        Ok(SystemState { states })
    }
}

/// The states of the servers a given server can see, keyed by absolute id.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SideView {
    pub center: usize,
    /// Ring order starting at `center - h`; `0..n` when saturated.
    pub window: Vec<(usize, VersionSet)>,
}

impl SideView {
    pub fn own_state(&self) -> VersionSet {
        self.window
            .iter()
            .find(|(j, _)| *j == self.center)
            .map(|(_, s)| *s)
            .expect("side view always contains its center")
    }

    /// `|A_S(u) ∩ H_i|`, computed from the view alone.
    pub fn receivers_in_view(&self, u: VersionId) -> usize {
        self.window.iter().filter(|(_, s)| s.contains(u)).count()
    }

    /// The latest version the center holds that at least `n - 2` servers
    /// in its window have received.
    pub fn local_candidate(&self, p: &Params) -> Option<VersionId> {
        let threshold = p.n.saturating_sub(2);
        self.own_state()
            .iter()
            .rev()
            .find(|&u| self.receivers_in_view(u) >= threshold)
    }

    /// Stable code for the window contents, base `2^nu`, first window entry
    /// least significant.
    pub fn code(&self, nu: u32) -> u64 {
        self.window
            .iter()
            .rev()
            .fold(0u64, |acc, (_, s)| (acc << nu) | s.mask() as u64)
    }
}

/// The servers in `H_i`, in ring order from `i - h` (or `0..n` when
/// `2h + 1 >= n`).
pub fn neighborhood(i: usize, p: &Params) -> Result<Vec<usize>> {
    p.check_server(i)?;
    Ok(neighborhood_unchecked(i, p))
}

pub(crate) fn neighborhood_unchecked(i: usize, p: &Params) -> Vec<usize> {
    if p.full_information() {
        (0..p.n).collect()
    } else {
        let n = p.n;
        (0..=2 * p.h).map(|d| (i + n - p.h + d) % n).collect()
    }
}

pub fn side_view(s: &SystemState, i: usize, p: &Params) -> Result<SideView> {
    p.check_server(i)?;
    s.validate(p)?;
    Ok(side_view_unchecked(s, i, p))
}

pub(crate) fn side_view_unchecked(s: &SystemState, i: usize, p: &Params) -> SideView {
    SideView {
        center: i,
        window: neighborhood_unchecked(i, p)
            .into_iter()
            .map(|j| (j, s.get(j)))
            .collect(),
    }
}

/// `A_S(u)`: servers that have received version `u`.
pub fn receivers(s: &SystemState, u: VersionId) -> Vec<usize> {
    (0..s.n()).filter(|&i| s.get(i).contains(u)).collect()
}

/// `C_S`: versions received by at least `c_W` servers.
pub fn complete_versions(s: &SystemState, p: &Params) -> VersionSet {
    p.versions()
        .filter(|&u| receivers(s, u).len() >= p.c_w)
        .collect()
}

/// `L_S = max C_S`, or `None` when no version is complete.
pub fn latest_complete(s: &SystemState, p: &Params) -> Option<VersionId> {
    complete_versions(s, p).max()
}

pub fn local_candidate(s: &SystemState, i: usize, p: &Params) -> Result<Option<VersionId>> {
    Ok(side_view(s, i, p)?.local_candidate(p))
}

/// All `(2^nu)^n` states, addressable by index.
///
/// State `idx` is `idx` written in base `2^nu`, digit `j` being the subset
/// mask of server `j` (server 0 least significant).
#[derive(Debug, Clone, Copy)]
pub struct StateSpace {
    n: usize,
    nu: u32,
    len: u64,
}

impl StateSpace {
    pub fn new(p: &Params, budget: u64) -> Result<Self> {
        let needed = state_count(p);
        if needed > budget as u128 {
            return Err(Error::BudgetExceeded { needed, budget });
        }
        Ok(StateSpace {
            n: p.n,
            nu: p.nu,
            len: needed as u64,
        })
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn state_at(&self, mut idx: u64) -> SystemState {
        debug_assert!(idx < self.len);
        let mask = (1u64 << self.nu) - 1;
        let mut states = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            states.push(VersionSet((idx & mask) as u32));
            idx >>= self.nu;
        }
        SystemState { states }
    }

    pub fn index_of(&self, s: &SystemState) -> u64 {
        s.states
            .iter()
            .rev()
            .fold(0u64, |acc, set| (acc << self.nu) | set.0 as u64)
    }

    pub fn iter(&self) -> StateIter {
        self.range(0..self.len)
    }

    pub fn range(&self, r: Range<u64>) -> StateIter {
        StateIter {
            space: *self,
            next: r.start,
            end: r.end.min(self.len),
        }
    }

    /// Splits `0..len` into at most `parts` contiguous, disjoint ranges.
    pub fn partitions(&self, parts: usize) -> Vec<Range<u64>> {
        let parts = (parts.max(1) as u64).min(self.len.max(1));
        let chunk = self.len.div_ceil(parts);
        (0..parts)
            .map(|k| (k * chunk).min(self.len)..((k + 1) * chunk).min(self.len))
            .filter(|r| !r.is_empty())
            .collect()
    }
}

pub struct StateIter {
    space: StateSpace,
    next: u64,
    end: u64,
}

impl Iterator for StateIter {
    type Item = SystemState;

    fn next(&mut self) -> Option<SystemState> {
        if self.next >= self.end {
            return None;
        }
        let s = self.space.state_at(self.next);
        self.next += 1;
        Some(s)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.end - self.next) as usize;
        (left, Some(left))
    }
}

impl ExactSizeIterator for StateIter {}

/// `(2^nu)^n`, saturating in `u128`.
pub fn state_count(p: &Params) -> u128 {
    let bits = p.nu as u128 * p.n as u128;
    if bits >= 128 {
        u128::MAX
    } else {
        1u128 << bits
    }
}

pub fn enumerate_states(p: &Params, budget: u64) -> Result<StateIter> {
    Ok(StateSpace::new(p, budget)?.iter())
}

/// A uniformly random state, fully determined by `seed`.
pub fn random_state(p: &Params, seed: u64) -> SystemState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = VersionSet::full(p.nu).0;
    SystemState {
        states: (0..p.n).map(|_| VersionSet(rng.gen::<u32>() & mask)).collect(),
    }
}
