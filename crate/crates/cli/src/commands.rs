use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mvcode::bounds::{compare_report, cost_baseline, cost_centralized, lb_eq1, thm4_sweep, to_f64, write_table_csv};
use mvcode::codec::{encode_all, mask_tail, quorum_decode, Messages, ServerStore};
use mvcode::model::{random_state, DEFAULT_BUDGET};
use mvcode::verifier::fixtures::FixtureViolation;
use mvcode::verifier::{
    check_indistinguishable, fixture_thm3, fixture_thm4, oracle_min_cost, random_messages, verify, FixturePair, Mode,
    OracleLimits, OracleResult, VerifyOptions,
};
use mvcode::{Params, Scheme, SystemState, VersionId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::{
    parse_range, FixtureArgs, Format, ModeArg, OracleArgs, RoundtripArgs, TableArgs, VerifyArgs, Which, BUDGET_ENV,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn resolve_budget(flag: Option<u64>) -> Result<u64> {
    if let Some(b) = flag {
        return Ok(b);
    }
    match std::env::var(BUDGET_ENV) {
        Ok(raw) => raw
            .trim()
            .parse()
            .with_context(|| format!("{BUDGET_ENV}={raw:?} is not a non-negative integer")),
        Err(_) => Ok(DEFAULT_BUDGET),
    }
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<Status> {
    let p = args.params.params()?;
    let scheme = Scheme::from(args.scheme);
    let opts = VerifyOptions {
        mode: match args.mode {
            ModeArg::Exhaustive => Mode::Exhaustive,
            ModeArg::Sampled => Mode::Sampled {
                count: args.samples,
                seed: args.seed,
            },
        },
        bitexact: args.bitexact,
        jobs: args.jobs,
        budget: resolve_budget(args.budget)?,
        payload_seed: args.seed,
    };
    let report = verify(&scheme, &p, &opts)?;
    emit(args.out.as_ref(), &pretty(&report)?)?;
    eprintln!(
        "{} [{}]: {} states x {} read sets, {} violations, worst case {} bits (alpha {}), {:.2?}",
        report.scheme,
        report.layers.join("+"),
        report.states_checked,
        report.read_sets_per_state,
        report.violation_count,
        report.worst_case.bits_exact,
        report.alpha_bits_exact,
        report.elapsed
    );
    if let Some(v) = report.violations.first() {
        eprintln!("first violation: read set {:?}: {}", v.read_set, v.reason);
    }
    Ok(if report.pass { Status::Pass } else { Status::Fail })
}

pub fn cmd_table(args: &TableArgs) -> Result<Status> {
    let Some(range) = parse_range(&args.c) else {
        bail!("--c must be `a:b` with 1 <= a <= b, got {:?}", args.c);
    };
    let rows = compare_report(range.clone(), args.nu, args.k)?;
    let text = match args.format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_table_csv(&rows, &mut buf)?;
            String::from_utf8(buf)?
        }
        Format::Json => {
            let sweep = range
                .filter(|&c| c >= 3)
                .map(thm4_sweep)
                .collect::<mvcode::Result<Vec<_>>>()?;
            pretty(&json!({ "rows": rows, "split_sweep": sweep }))?
        }
    };
    emit(args.out.as_ref(), &text)?;
    Ok(Status::Pass)
}

fn fixture_pair(args: &FixtureArgs) -> Result<(Params, FixturePair)> {
    let n = args.n;
    match args.which {
        Which::Thm3 => {
            if n < 4 {
                bail!("thm3 needs n >= 4, got {n}");
            }
            let c = args.c.unwrap_or(n - 2);
            let p = Params::new(n, n - 1, c + 1, 2, args.h.unwrap_or(n / 2 - 1), args.k)?;
            Ok((p, fixture_thm3(&p)?))
        }
        Which::Thm4 => {
            let Some(c) = args.c else {
                bail!("thm4 needs --c");
            };
            if c > n || (n - c) % 4 != 0 {
                bail!("thm4 needs (n - c)/4 to be a non-negative integer, got n={n} c={c}");
            }
            let q = (n + c) / 2;
            let p = Params::new(n, q, q, 2, args.h.unwrap_or((n - c) / 4), args.k)?;
            Ok((p, fixture_thm4(&p)?))
        }
    }
}

pub fn cmd_fixtures(args: &FixtureArgs) -> Result<Status> {
    let (p, pair) = fixture_pair(args)?;
    let check: Result<(), FixtureViolation> = check_indistinguishable(&pair, &p);
    let doc = json!({
        "pair": pair,
        "check": match &check {
            Ok(()) => json!({ "ok": true }),
            Err(v) => json!({ "ok": false, "violation": v }),
        },
    });
    emit(args.out.as_ref(), &pretty(&doc)?)?;
    match check {
        Ok(()) => {
            eprintln!("{}: indistinguishable servers {:?}, check ok", pair.name, pair.indistinguishable);
            Ok(Status::Pass)
        }
        Err(v) => {
            eprintln!("{}: check failed: {}", pair.name, v.reason);
            Ok(Status::Fail)
        }
    }
}

fn read_payloads(paths: &[PathBuf], k: Option<u64>, nu: u32) -> Result<(u64, Messages)> {
    if paths.len() != nu as usize {
        bail!("expected {nu} payload files (one per version), got {}", paths.len());
    }
    let raw: Vec<Vec<u8>> = paths
        .iter()
        .map(|p| fs::read(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<_>>()?;
    let k = k.unwrap_or(raw[0].len() as u64 * 8);
    let bytes = k.div_ceil(8) as usize;
    let mut messages = Messages::new();
    for (u, (path, mut m)) in paths.iter().zip(raw).enumerate() {
        if m.len() != bytes {
            bail!("{} has {} bytes, K = {k} bits needs {bytes}", path.display(), m.len());
        }
        mask_tail(&mut m, k);
        messages.insert(VersionId(u as u32 + 1), m);
    }
    Ok((k, messages))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn cmd_roundtrip(args: &RoundtripArgs) -> Result<Status> {
    let (k, given) = if args.payloads.is_empty() {
        (args.k.unwrap_or(1024), None)
    } else {
        let (k, m) = read_payloads(&args.payloads, args.k, args.nu)?;
        (k, Some(m))
    };
    let p = Params::new(args.n, args.cw, args.cr, args.nu, args.h, k)?;
    let messages = given.unwrap_or_else(|| random_messages(&p, args.seed));
    let state: SystemState = match &args.state {
        Some(path) => {
            let s: SystemState = read_json(path)?;
            s.validate(&p)?;
            s
        }
        None => random_state(&p, args.seed),
    };
    let read_set = match &args.read_set {
        Some(t) => {
            let mut sorted = t.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != p.c_r || sorted.iter().any(|&j| j >= p.n) {
                bail!("--read-set must name {} distinct servers below {}", p.c_r, p.n);
            }
            sorted
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            let mut t = rand::seq::index::sample(&mut rng, p.n, p.c_r).into_vec();
            t.sort_unstable();
            t
        }
    };
    let scheme = Scheme::from(args.scheme);
    let stores: Vec<ServerStore> = match &args.stores_in {
        Some(path) => {
            let stores: Vec<ServerStore> = read_json(path)?;
            if stores.len() != p.n {
                bail!("{} holds {} stores, expected {}", path.display(), stores.len(), p.n);
            }
            stores
        }
        None => encode_all(&scheme, &state, &messages, &p)?,
    };
    if let Some(path) = &args.stores_out {
        fs::write(path, pretty(&stores)?).with_context(|| format!("writing {}", path.display()))?;
    }

    let (status, version, note) = match quorum_decode(&scheme, &state, &read_set, &stores, &p) {
        Ok(None) => (Status::Pass, None, "null: no version is complete".to_string()),
        Ok(Some(d)) if d.payload == messages[&d.version] => {
            (Status::Pass, Some(d.version.get()), format!("{} decoded, payload identical", d.version))
        }
        Ok(Some(d)) => (Status::Fail, Some(d.version.get()), format!("{} decoded, payload differs", d.version)),
        Err(e) => (Status::Fail, None, format!("decode failed: {e}")),
    };
    let doc = json!({
        "scheme": scheme.to_string(),
        "k_bits": k,
        "state": state,
        "read_set": read_set,
        "decoded_version": version,
        "identical": status == Status::Pass && version.is_some(),
        "note": note,
    });
    print!("{}", pretty(&doc)?);
    eprintln!("{note}");
    Ok(status)
}

#[derive(Serialize)]
struct OracleReport<'a> {
    result: &'a OracleResult,
    fraction: String,
    lb_eq1_bits: f64,
    cost_baseline_bits: Option<f64>,
    cost_central_bits: f64,
    within_bracket: Option<bool>,
}

pub fn cmd_oracle(args: &OracleArgs) -> Result<Status> {
    let p = args.params.params()?;
    let limits = OracleLimits::default();
    let r = oracle_min_cost(&p, args.g, &limits).with_context(|| {
        format!(
            "oracle search is limited to nu <= 2, n <= {}, G <= {}",
            limits.max_n, limits.max_granularity
        )
    })?;
    let c = p.c() as u64;
    let nu = p.nu as u64;
    let lb = lb_eq1(p.k_bits, nu, c)?.bits;
    let baseline = cost_baseline(nu, c).ok().map(|f| to_f64(f) * p.k_bits as f64);
    let report = OracleReport {
        result: &r,
        fraction: r.fraction().to_string(),
        lb_eq1_bits: lb,
        cost_baseline_bits: baseline,
        cost_central_bits: to_f64(cost_centralized(c)?) * p.k_bits as f64,
        within_bracket: baseline.map(|b| lb <= r.bits && r.bits <= b),
    };
    emit(args.out.as_ref(), &pretty(&report)?)?;
    eprintln!(
        "min cost at G={}: {} K = {} bits (lb_eq1 {:.3}, baseline {})",
        args.g,
        report.fraction,
        r.bits_exact,
        lb,
        baseline.map_or("n/a".to_string(), |b| format!("{b:.3}"))
    );
    Ok(Status::Pass)
}
