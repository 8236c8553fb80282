//! Pairs of states that some servers cannot tell apart, used to exhibit why
//! storage lower bounds hold.

use serde::{Deserialize, Serialize};

use crate::error::{regime, Result};
use crate::model::{latest_complete, side_view_unchecked, Params, SystemState, VersionId, VersionSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedReadSet {
    pub name: String,
    pub servers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixturePair {
    pub name: String,
    pub params: Params,
    pub s1: SystemState,
    pub s2: SystemState,
    /// Servers whose side views coincide in `s1` and `s2`.
    pub indistinguishable: Vec<usize>,
    /// Versions a read must be able to return in each state; empty means NULL.
    pub required_s1: Vec<u32>,
    pub required_s2: Vec<u32>,
    pub read_sets: Vec<NamedReadSet>,
}

fn required(s: &SystemState, p: &Params) -> Vec<u32> {
    match latest_complete(s, p) {
        Some(l) => (l.get()..=p.nu).collect(),
        None => Vec::new(),
    }
}

/// The first `count` servers, in increasing order, outside `excluded`.
fn fill(count: usize, excluded: &[usize], n: usize) -> Vec<usize> {
    (0..n).filter(|j| !excluded.contains(j)).take(count).collect()
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v.dedup();
    v
}

/// Two-version ring fixture: `s2` differs from `s1` only in server `n - 2`
/// missing version 2, which makes version 2 incomplete.
pub fn fixture_thm3(p: &Params) -> Result<FixturePair> {
    const NAME: &str = "thm3";
    let n = p.n;
    if p.nu != 2 {
        return Err(regime(NAME, "needs nu = 2"));
    }
    if n < 4 || n % 2 != 0 {
        return Err(regime(NAME, format!("needs an even n >= 4, got {n}")));
    }
    if p.c_w != n - 1 {
        return Err(regime(NAME, format!("needs c_W = n - 1 = {}, got {}", n - 1, p.c_w)));
    }
    if p.h != n / 2 - 1 {
        return Err(regime(NAME, format!("needs h = n/2 - 1 = {}, got {}", n / 2 - 1, p.h)));
    }
    if p.c_r > n - 1 {
        return Err(regime(NAME, format!("needs c_R <= n - 1, got {}", p.c_r)));
    }
    let c = p.c();
    let both = VersionSet::from([1, 2]);
    let mut s1 = SystemState::uniform(n, both);
    s1.set(n - 1, VersionSet::EMPTY);
    let mut s2 = s1.clone();
    s2.set(n - 2, VersionSet::from([1]));

    let pivot = n / 2 - 2;
    let mut read_sets = Vec::new();
    if c >= 1 {
        let fixed = [pivot, n - 1];
        let mut r1 = fill(c - 1, &[pivot, n - 2, n - 1], n);
        r1.extend(fixed);
        read_sets.push(NamedReadSet {
            name: "R1".into(),
            servers: sorted(r1),
        });
    }
    if c >= 2 {
        let fixed = [pivot, n - 2, n - 1];
        let mut r2 = fill(c - 2, &fixed, n);
        r2.extend(fixed);
        read_sets.push(NamedReadSet {
            name: "R2".into(),
            servers: sorted(r2),
        });
    }
    Ok(FixturePair {
        name: NAME.into(),
        params: *p,
        required_s1: required(&s1, p),
        required_s2: required(&s2, p),
        s1,
        s2,
        indistinguishable: vec![pivot],
        read_sets,
    })
}

/// Two-version fixture with `c_W = c_R`: in `s2` version 2 only reached
/// servers `0..c`, while version 1 is complete in both states.
///
/// Two choices of the split point `l` are emitted, `ceil(2c/3) - 1` and
/// `floor(2c/3) - 1`, when they differ.
pub fn fixture_thm4(p: &Params) -> Result<FixturePair> {
    const NAME: &str = "thm4";
    let (n, c) = (p.n, p.c());
    if p.nu != 2 {
        return Err(regime(NAME, "needs nu = 2"));
    }
    if c < 3 {
        return Err(regime(NAME, format!("needs c >= 3, got {c}")));
    }
    if p.c_w != p.c_r {
        return Err(regime(NAME, "needs c_W = c_R"));
    }
    if n < (7 * c).div_ceil(3) + 4 {
        return Err(regime(
            NAME,
            format!("needs n >= ceil(7c/3) + 4 = {}, got {n}", (7 * c).div_ceil(3) + 4),
        ));
    }
    if (n - c) % 4 != 0 {
        return Err(regime(NAME, format!("needs (n - c)/4 integral, got n - c = {}", n - c)));
    }
    let q = (n - c) / 4;
    if p.h > q {
        return Err(regime(NAME, format!("needs h <= (n - c)/4 = {q}, got {}", p.h)));
    }

    let head: Vec<usize> = (0..c).collect();
    let middle: Vec<usize> = ((n + 3 * c) / 4..=(3 * n + c - 4) / 4).collect();
    let v1_front: Vec<usize> = (0..=(n + 3 * c - 4) / 4).collect();
    let v1_back: Vec<usize> = ((3 * n + c) / 4..n).collect();

    let mut s1 = SystemState::empty(n);
    let mut s2 = SystemState::empty(n);
    let add = |s: &mut SystemState, servers: &[usize], u: u32| {
        for &j in servers {
            let mut set = s.get(j);
            set.insert(VersionId(u));
            s.set(j, set);
        }
    };
    for s in [&mut s1, &mut s2] {
        add(s, &v1_front, 1);
        add(s, &v1_back, 1);
        add(s, &head, 2);
    }
    add(&mut s1, &middle, 2);

    let mut read_sets = vec![NamedReadSet {
        name: "R1".into(),
        servers: sorted(v1_front.iter().chain(&v1_back).copied().collect()),
    }];
    let mut ls = vec![(2 * c).div_ceil(3) - 1, 2 * c / 3 - 1];
    ls.dedup();
    for l in ls {
        let servers: Vec<usize> = (0..=l)
            .chain(middle.iter().copied())
            .chain(c..=(2 * c).saturating_sub(l + 2))
            .collect();
        read_sets.push(NamedReadSet {
            name: format!("R2(l={l})"),
            servers: sorted(servers),
        });
    }
    Ok(FixturePair {
        name: NAME.into(),
        params: *p,
        required_s1: required(&s1, p),
        required_s2: required(&s2, p),
        s1,
        s2,
        indistinguishable: head,
        read_sets,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureViolation {
    pub server: Option<usize>,
    pub reason: String,
}

/// Checks that every listed server has the same side view in both states
/// and that every read set has `c_R` servers.
pub fn check_indistinguishable(pair: &FixturePair, p: &Params) -> std::result::Result<(), FixtureViolation> {
    for s in [&pair.s1, &pair.s2] {
        s.validate(p).map_err(|e| FixtureViolation {
            server: None,
            reason: e.to_string(),
        })?;
    }
    for &i in &pair.indistinguishable {
        if i >= p.n {
            return Err(FixtureViolation {
                server: Some(i),
                reason: format!("server {i} out of range"),
            });
        }
        if side_view_unchecked(&pair.s1, i, p) != side_view_unchecked(&pair.s2, i, p) {
            return Err(FixtureViolation {
                server: Some(i),
                reason: format!("server {i} sees different side views"),
            });
        }
    }
    for r in &pair.read_sets {
        if r.servers.len() != p.c_r || r.servers.iter().any(|&j| j >= p.n) {
            return Err(FixtureViolation {
                server: None,
                reason: format!("read set {} is not {} distinct servers", r.name, p.c_r),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn thm3(n: usize, c_r: usize) -> FixturePair {
        let p = Params::new(n, n - 1, c_r, 2, n / 2 - 1, 1024).unwrap();
        fixture_thm3(&p).unwrap()
    }

    #[test]
    fn thm3_n6() {
        let f = thm3(6, 5);
        let p = f.params;
        assert_eq!(f.s1.get(5), VersionSet::EMPTY);
        assert_eq!(f.s2.get(4), VersionSet::from([1]));
        assert_eq!(f.indistinguishable, vec![1]);
        assert_eq!(f.required_s1, vec![2]);
        assert_eq!(f.required_s2, vec![1, 2]);
        // c = 4: R1 = {1, 5} plus 0, 2, 3; R2 = {1, 4, 5} plus 0, 2.
        assert_eq!(f.read_sets[0].servers, vec![0, 1, 2, 3, 5]);
        assert_eq!(f.read_sets[1].servers, vec![0, 1, 2, 4, 5]);
        check_indistinguishable(&f, &p).unwrap();
    }

    #[test]
    fn thm3_sweep() {
        for n in [4, 6, 8, 10] {
            for c_r in 2..n {
                let f = thm3(n, c_r);
                check_indistinguishable(&f, &f.params).unwrap();
                // The pivot's window stops just short of server n - 2.
                let pivot = n / 2 - 2;
                assert!(!crate::model::neighborhood(pivot, &f.params).unwrap().contains(&(n - 2)));
            }
        }
    }

    #[test]
    fn thm3_regime() {
        let p = Params::new(6, 5, 5, 2, 1, 1024).unwrap();
        assert!(fixture_thm3(&p).is_err());
        let p = Params::new(7, 6, 6, 2, 2, 1024).unwrap();
        assert!(fixture_thm3(&p).is_err());
    }

    #[test]
    fn thm4_n11_c3() {
        let p = Params::new(11, 7, 7, 2, 2, 1024).unwrap();
        let f = fixture_thm4(&p).unwrap();
        let a = |s: &SystemState, u| crate::model::receivers(s, VersionId(u));
        assert_eq!(a(&f.s1, 2), vec![0, 1, 2, 5, 6, 7, 8]);
        assert_eq!(a(&f.s1, 1), vec![0, 1, 2, 3, 4, 9, 10]);
        assert_eq!(a(&f.s2, 2), vec![0, 1, 2]);
        assert_eq!(a(&f.s2, 1), a(&f.s1, 1));
        assert_eq!(f.required_s1, vec![2]);
        assert_eq!(f.required_s2, vec![1, 2]);
        assert_eq!(f.indistinguishable, vec![0, 1, 2]);
        // l = 1: {0, 1} + middle {5..8} + {3}.
        let names: Vec<_> = f.read_sets.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, vec!["R1", "R2(l=1)"]);
        assert_eq!(f.read_sets[1].servers, vec![0, 1, 3, 5, 6, 7, 8]);
        check_indistinguishable(&f, &p).unwrap();
    }

    #[test]
    fn thm4_n18_c6_and_split_choices() {
        let p = Params::new(18, 12, 12, 2, 3, 1024).unwrap();
        let f = fixture_thm4(&p).unwrap();
        check_indistinguishable(&f, &p).unwrap();
        assert_eq!(f.read_sets.len(), 2);
        // c = 7 has ceil(14/3) - 1 = 4 and floor(14/3) - 1 = 3.
        let p = Params::new(23, 15, 15, 2, 4, 1024).unwrap();
        let f = fixture_thm4(&p).unwrap();
        let names: Vec<_> = f.read_sets.iter().map(|r| r.name.clone()).collect();
        assert_eq!(names, vec!["R1", "R2(l=4)", "R2(l=3)"]);
        check_indistinguishable(&f, &p).unwrap();
    }

    #[test]
    fn thm4_middle_holds_nothing_in_s2() {
        let p = Params::new(18, 12, 12, 2, 3, 1024).unwrap();
        let f = fixture_thm4(&p).unwrap();
        for j in (p.n + 3 * p.c()) / 4..=(3 * p.n + p.c() - 4) / 4 {
            assert_eq!(f.s2.get(j), VersionSet::EMPTY);
            assert_eq!(f.s1.get(j), VersionSet::from([2]));
        }
    }

    #[test]
    fn thm4_regime() {
        let p = Params::new(12, 8, 8, 2, 2, 1024).unwrap();
        assert!(fixture_thm4(&p).is_err());
        let p = Params::new(11, 7, 7, 2, 3, 1024).unwrap();
        assert!(fixture_thm4(&p).is_err());
    }

    #[test]
    fn identical_states_pass() {
        let mut f = thm3(6, 5);
        f.s2 = f.s1.clone();
        f.indistinguishable = (0..6).collect();
        check_indistinguishable(&f, &f.params.clone()).unwrap();
    }

    #[test]
    fn tampered_pair_is_rejected() {
        let mut f = thm3(6, 5);
        f.indistinguishable.push(4);
        let v = check_indistinguishable(&f, &f.params.clone()).unwrap_err();
        assert_eq!(v.server, Some(4));
    }
}
