//! Exhaustive search for the cheapest allocation strategy on tiny instances.
//!
//! A strategy maps each server's side view to per-version allocations in
//! multiples of `K/G`. Feasibility is monotone in every allocation, so a
//! server holding one version spends its whole budget `B` on it, and a
//! server holding `{1, 2}` splits `B` as `(B - x, x)`. The search is then
//! over one integer `x` per (server, side view) pair, which a small
//! propagate-and-branch solver handles exactly.

use std::collections::{HashMap, HashSet};

use itertools::Itertools;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{regime, Error, Result};
use crate::model::{latest_complete, side_view_unchecked, Params, StateSpace, SystemState, VersionId, VersionSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_n: usize,
    pub max_granularity: u64,
    /// Search nodes per budget level before giving up.
    pub max_nodes: u64,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_n: 5,
            max_granularity: 4,
            max_nodes: 20_000_000,
        }
    }
}

/// Split chosen for a server holding both versions under a given view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyEntry {
    pub server: usize,
    pub view: u64,
    pub v1_units: u64,
    pub v2_units: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub params: Params,
    pub granularity: u64,
    /// Per-server budget in units of `K/G`.
    pub units: u64,
    pub bits_exact: String,
    pub bits: f64,
    pub variables: usize,
    pub constraints: usize,
    pub nodes: u64,
    #[serde(skip)]
    pub strategy: Vec<StrategyEntry>,
}

impl OracleResult {
    pub fn cost(&self) -> Ratio<u64> {
        Ratio::new(self.units * self.params.k_bits, self.granularity)
    }

    /// Cost as a fraction of `K`.
    pub fn fraction(&self) -> Ratio<u64> {
        Ratio::new(self.units, self.granularity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Role {
    Idle,
    Only(u32),
    Split(usize),
}

/// Requirement of one (state, read set) pair at budget `B`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Constraint {
    /// `sum x >= lo`
    AtLeast(Vec<usize>, i64),
    /// `sum x <= hi`
    AtMost(Vec<usize>, i64),
    /// `sum x <= hi || sum x >= lo`
    Avoid(Vec<usize>, i64, i64),
}

impl Constraint {
    fn vars(&self) -> &[usize] {
        match self {
            Constraint::AtLeast(v, _) | Constraint::AtMost(v, _) | Constraint::Avoid(v, _, _) => v,
        }
    }
}

struct Pattern {
    latest: VersionId,
    only1: u64,
    only2: u64,
    vars: Vec<usize>,
}

/// `None` when the pattern can never be met at budget `b`.
fn instantiate(pat: &Pattern, g: i64, b: i64) -> Option<Option<Constraint>> {
    let k = pat.vars.len() as i64;
    let lo = g - b * pat.only2 as i64;
    if pat.latest.get() == 2 {
        if lo <= 0 {
            return Some(None);
        }
        if b * k < lo {
            return None;
        }
        return Some(Some(Constraint::AtLeast(pat.vars.clone(), lo)));
    }
    // Version 1 decodes iff `B (only1 + k) - X >= G`.
    let hi = b * (pat.only1 as i64 + k) - g;
    if hi >= b * k || lo <= 0 || hi + 1 >= lo {
        return Some(None);
    }
    match (hi >= 0, lo <= b * k) {
        (false, false) => None,
        (false, true) => Some(Some(Constraint::AtLeast(pat.vars.clone(), lo))),
        (true, false) => Some(Some(Constraint::AtMost(pat.vars.clone(), hi))),
        (true, true) => Some(Some(Constraint::Avoid(pat.vars.clone(), hi, lo))),
    }
}

struct Solver<'a> {
    cons: &'a [Constraint],
    watch: Vec<Vec<usize>>,
    lo: Vec<i64>,
    hi: Vec<i64>,
    trail: Vec<(usize, i64, i64)>,
    nodes: u64,
    max_nodes: u64,
}

enum Outcome {
    Sat,
    Unsat,
    OutOfBudget,
}

impl<'a> Solver<'a> {
    fn new(vars: usize, b: i64, cons: &'a [Constraint], max_nodes: u64) -> Self {
        let mut watch = vec![Vec::new(); vars];
        for (ci, c) in cons.iter().enumerate() {
            for &v in c.vars() {
                watch[v].push(ci);
            }
        }
        Solver {
            cons,
            watch,
            lo: vec![0; vars],
            hi: vec![b; vars],
            trail: Vec::new(),
            nodes: 0,
            max_nodes,
        }
    }

    fn set(&mut self, v: usize, lo: i64, hi: i64, changed: &mut Vec<usize>) -> bool {
        if lo == self.lo[v] && hi == self.hi[v] {
            return true;
        }
        self.trail.push((v, self.lo[v], self.hi[v]));
        self.lo[v] = lo;
        self.hi[v] = hi;
        changed.push(v);
        lo <= hi
    }

    fn raise(&self, vars: &[usize], target: i64, out: &mut Vec<(usize, i64, i64)>) {
        let sh: i64 = vars.iter().map(|&v| self.hi[v]).sum();
        for &v in vars {
            let need = target - (sh - self.hi[v]);
            if need > self.lo[v] {
                out.push((v, need, self.hi[v]));
            }
        }
    }

    fn lower(&self, vars: &[usize], target: i64, out: &mut Vec<(usize, i64, i64)>) {
        let sl: i64 = vars.iter().map(|&v| self.lo[v]).sum();
        for &v in vars {
            let cap = target - (sl - self.lo[v]);
            if cap < self.hi[v] {
                out.push((v, self.lo[v], cap));
            }
        }
    }

    /// Bounds propagation to a fixpoint, starting from constraints on `seed`.
    fn propagate(&mut self, seed: Vec<usize>) -> bool {
        let mut queued = vec![false; self.cons.len()];
        let mut queue: Vec<usize> = Vec::new();
        for v in seed {
            for &ci in &self.watch[v] {
                if !queued[ci] {
                    queued[ci] = true;
                    queue.push(ci);
                }
            }
        }
        let mut updates = Vec::new();
        while let Some(ci) = queue.pop() {
            queued[ci] = false;
            updates.clear();
            let c = &self.cons[ci];
            let vars = c.vars();
            let sl: i64 = vars.iter().map(|&v| self.lo[v]).sum();
            let sh: i64 = vars.iter().map(|&v| self.hi[v]).sum();
            match *c {
                Constraint::AtLeast(_, lo) => {
                    if sh < lo {
                        return false;
                    }
                    self.raise(vars, lo, &mut updates);
                }
                Constraint::AtMost(_, hi) => {
                    if sl > hi {
                        return false;
                    }
                    self.lower(vars, hi, &mut updates);
                }
                Constraint::Avoid(_, hi, lo) => match (sl <= hi, sh >= lo) {
                    (false, false) => return false,
                    (true, false) => self.lower(vars, hi, &mut updates),
                    (false, true) => self.raise(vars, lo, &mut updates),
                    (true, true) => {}
                },
            }
            let mut changed = Vec::new();
            for &(v, lo, hi) in &updates {
                let lo = lo.max(self.lo[v]);
                let hi = hi.min(self.hi[v]);
                if !self.set(v, lo, hi, &mut changed) {
                    return false;
                }
            }
            for v in changed {
                for &cj in &self.watch[v] {
                    if !queued[cj] {
                        queued[cj] = true;
                        queue.push(cj);
                    }
                }
            }
        }
        true
    }

    fn undo(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let (v, lo, hi) = self.trail.pop().unwrap();
            self.lo[v] = lo;
            self.hi[v] = hi;
        }
    }

    fn search(&mut self, order: &[usize]) -> Outcome {
        self.nodes += 1;
        if self.nodes > self.max_nodes {
            return Outcome::OutOfBudget;
        }
        let Some(&v) = order
            .iter()
            .filter(|&&v| self.lo[v] < self.hi[v])
            .min_by_key(|&&v| self.hi[v] - self.lo[v])
        else {
            return Outcome::Sat;
        };
        for x in (self.lo[v]..=self.hi[v]).rev() {
            let mark = self.trail.len();
            let mut changed = Vec::new();
            self.set(v, x, x, &mut changed);
            if self.propagate(changed) {
                match self.search(order) {
                    Outcome::Unsat => {}
                    other => return other,
                }
            }
            self.undo(mark);
        }
        Outcome::Unsat
    }
}

/// Connected components of the variable/constraint graph.
fn components(vars: usize, cons: &[Constraint]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..vars).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for c in cons {
        let vs = c.vars();
        for w in vs.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            if a != b {
                parent[a] = b;
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for v in 0..vars {
        let r = find(&mut parent, v);
        groups.entry(r).or_default().push(v);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort();
    out
}

fn check_limits(p: &Params, g: u64, limits: &OracleLimits) -> Result<()> {
    if !(1..=2).contains(&p.nu) {
        return Err(regime("oracle", format!("needs nu <= 2, got {}", p.nu)));
    }
    if g == 0 {
        return Err(Error::InvalidParams("granularity must be at least 1".into()));
    }
    if p.n > limits.max_n {
        return Err(Error::BudgetExceeded {
            needed: p.n as u128,
            budget: limits.max_n as u64,
        });
    }
    if g > limits.max_granularity {
        return Err(Error::BudgetExceeded {
            needed: g as u128,
            budget: limits.max_granularity,
        });
    }
    Ok(())
}

/// The smallest per-server budget, in multiples of `K/G`, at which some
/// side-view strategy lets every read set of every state decode a version
/// at least as new as the latest complete one.
pub fn oracle_min_cost(p: &Params, g: u64, limits: &OracleLimits) -> Result<OracleResult> {
    check_limits(p, g, limits)?;
    let space = StateSpace::new(p, u64::MAX)?;
    let both = VersionSet::full(p.nu);

    let mut var_ids: HashMap<(usize, u64), usize> = HashMap::new();
    let mut patterns: Vec<Pattern> = Vec::new();
    let mut seen = HashSet::new();
    for s in space.iter() {
        let Some(latest) = latest_complete(&s, p) else {
            continue;
        };
        let roles: Vec<Role> = (0..p.n)
            .map(|i| match s.get(i) {
                set if set.is_empty() => Role::Idle,
                set if p.nu == 2 && set == both => {
                    let key = (i, side_view_unchecked(&s, i, p).code(p.nu));
                    let next = var_ids.len();
                    Role::Split(*var_ids.entry(key).or_insert(next))
                }
                set => Role::Only(set.max().unwrap().get()),
            })
            .collect();
        for t in (0..p.n).combinations(p.c_r) {
            let mut pat = Pattern {
                latest,
                only1: 0,
                only2: 0,
                vars: Vec::new(),
            };
            for &j in &t {
                match roles[j] {
                    Role::Idle => {}
                    Role::Only(1) => pat.only1 += 1,
                    Role::Only(_) => pat.only2 += 1,
                    Role::Split(v) => pat.vars.push(v),
                }
            }
            pat.vars.sort_unstable();
            if seen.insert((pat.latest, pat.only1, pat.only2, pat.vars.clone())) {
                patterns.push(pat);
            }
        }
    }

    let nvars = var_ids.len();
    let mut nodes = 0;
    'budget: for b in 0..=g {
        let (gi, bi) = (g as i64, b as i64);
        let mut cons = HashSet::new();
        for pat in &patterns {
            match instantiate(pat, gi, bi) {
                None => continue 'budget,
                Some(Some(c)) => {
                    cons.insert(c);
                }
                Some(None) => {}
            }
        }
        let mut cons: Vec<Constraint> = cons.into_iter().collect();
        cons.sort_by(|a, b| format!("{a:?}").cmp(&format!("{b:?}")));
        let mut solver = Solver::new(nvars, bi, &cons, limits.max_nodes);
        if !solver.propagate((0..nvars).collect()) {
            continue;
        }
        for comp in components(nvars, &cons) {
            let mut order = comp;
            order.sort_by_key(|&v| std::cmp::Reverse(solver.watch[v].len()));
            let before = solver.nodes;
            let outcome = solver.search(&order);
            nodes += solver.nodes - before;
            match outcome {
                Outcome::Sat => {
                    // Pin the component so later components see fixed values.
                    let mut changed = Vec::new();
                    for v in order {
                        let lo = solver.lo[v];
                        solver.set(v, lo, lo, &mut changed);
                    }
                    solver.trail.clear();
                }
                Outcome::Unsat => continue 'budget,
                Outcome::OutOfBudget => {
                    return Err(Error::BudgetExceeded {
                        needed: solver.nodes as u128,
                        budget: limits.max_nodes,
                    })
                }
            }
        }
        let mut strategy: Vec<StrategyEntry> = var_ids
            .iter()
            .map(|(&(server, view), &v)| StrategyEntry {
                server,
                view,
                v1_units: b - solver.lo[v] as u64,
                v2_units: solver.lo[v] as u64,
            })
            .collect();
        strategy.sort_by_key(|e| (e.server, e.view));
        let cost = Ratio::new(b * p.k_bits, g);
        return Ok(OracleResult {
            params: *p,
            granularity: g,
            units: b,
            bits_exact: cost.to_string(),
            bits: *cost.numer() as f64 / *cost.denom() as f64,
            variables: nvars,
            constraints: cons.len(),
            nodes,
            strategy,
        });
    }
    // Budget `G` (a full copy of each held version) always works.
    unreachable!("a full copy of every held version is always feasible")
}

/// Checks a strategy directly against the decoding requirement.
pub fn strategy_feasible(p: &Params, g: u64, units: u64, strategy: &[StrategyEntry]) -> bool {
    let table: HashMap<(usize, u64), (u64, u64)> = strategy
        .iter()
        .map(|e| ((e.server, e.view), (e.v1_units, e.v2_units)))
        .collect();
    let shares = |s: &SystemState, i: usize| -> [u64; 2] {
        let own = s.get(i);
        match (own.contains(VersionId(1)), own.contains(VersionId(2))) {
            (false, false) => [0, 0],
            (true, false) => [units, 0],
            (false, true) => [0, units],
            (true, true) => {
                let key = (i, side_view_unchecked(s, i, p).code(p.nu));
                let (a1, a2) = table.get(&key).copied().unwrap_or((units, 0));
                [a1, a2]
            }
        }
    };
    let space = StateSpace::new(p, u64::MAX).expect("unbounded");
    space.iter().all(|s| {
        let Some(latest) = latest_complete(&s, p) else {
            return true;
        };
        let all: Vec<[u64; 2]> = (0..p.n).map(|i| shares(&s, i)).collect();
        if all.iter().any(|a| a[0] + a[1] > units) {
            return false;
        }
        (0..p.n).combinations(p.c_r).all(|t| {
            (latest.get()..=p.nu).any(|m| t.iter().map(|&j| all[j][m as usize - 1]).sum::<u64>() >= g)
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(h: usize, nu: u32) -> Params {
        Params::new(4, 4, 4, nu, h, 1024).unwrap()
    }

    #[test]
    fn single_version_costs_k_over_c() {
        for h in 0..=2 {
            let r = oracle_min_cost(&p(h, 1), 4, &OracleLimits::default()).unwrap();
            assert_eq!(r.fraction(), Ratio::new(1, 4));
            assert_eq!(r.bits_exact, "256");
        }
    }

    #[test]
    fn full_information_costs_k_over_c() {
        let r = oracle_min_cost(&p(2, 2), 4, &OracleLimits::default()).unwrap();
        assert_eq!(r.fraction(), Ratio::new(1, 4));
        assert!(strategy_feasible(&r.params, 4, r.units, &r.strategy));
    }

    #[test]
    fn no_side_information_matches_brute_force() {
        // h = 0: one split per server, so all strategies can be listed.
        let pp = p(0, 2);
        let r = oracle_min_cost(&pp, 4, &OracleLimits::default()).unwrap();
        let brute = (0..=4u64)
            .find(|&b| {
                (0..(b + 1).pow(4)).any(|code| {
                    let strategy: Vec<StrategyEntry> = (0..4)
                        .map(|i| {
                            let x = code / (b + 1).pow(i as u32) % (b + 1);
                            StrategyEntry {
                                server: i,
                                view: 3,
                                v1_units: b - x,
                                v2_units: x,
                            }
                        })
                        .collect();
                    strategy_feasible(&pp, 4, b, &strategy)
                })
            })
            .unwrap();
        assert_eq!(r.units, brute);
        assert!(strategy_feasible(&pp, 4, r.units, &r.strategy));
    }

    #[test]
    fn limits_are_enforced() {
        let big = Params::new(6, 5, 5, 2, 2, 1024).unwrap();
        assert!(matches!(
            oracle_min_cost(&big, 4, &OracleLimits::default()),
            Err(Error::BudgetExceeded { .. })
        ));
        assert!(matches!(
            oracle_min_cost(&p(0, 2), 5, &OracleLimits::default()),
            Err(Error::BudgetExceeded { .. })
        ));
        let three = Params::new(4, 4, 4, 3, 0, 1024).unwrap();
        assert!(matches!(
            oracle_min_cost(&three, 4, &OracleLimits::default()),
            Err(Error::Regime { .. })
        ));
    }

    #[test]
    fn instantiate_cases() {
        let pat = |latest, only1, only2, k: usize| Pattern {
            latest: VersionId(latest),
            only1,
            only2,
            vars: (0..k).collect(),
        };
        // Enough version-2 holders: nothing to ask.
        assert_eq!(instantiate(&pat(2, 0, 4, 0), 4, 1), Some(None));
        assert_eq!(instantiate(&pat(2, 0, 0, 0), 4, 1), None);
        assert_eq!(
            instantiate(&pat(2, 0, 1, 3), 4, 1),
            Some(Some(Constraint::AtLeast(vec![0, 1, 2], 3)))
        );
        // Version 1 latest: X <= 1 or X >= 4 with X in 0..=4.
        assert_eq!(
            instantiate(&pat(1, 1, 0, 4), 4, 1),
            Some(Some(Constraint::Avoid(vec![0, 1, 2, 3], 1, 4)))
        );
    }
}
