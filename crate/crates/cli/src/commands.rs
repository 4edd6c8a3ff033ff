//! One function per subcommand. Each returns its config echo, its payload
//! and the named sub-checks that decide the verdict.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use frogcert::bounds::{envelope_check, eps_step_check, h_upper, l_upper, psi, psi_endpoint_check, region_constants, MIN_RATE};
use frogcert::certificate::{
    default_step_menu, format_ratio, run_certificate_with, verify_certificate, Certificate, CertificateError,
    DEFAULT_GRID_SIZE, DEFAULT_MAX_PASSES, TARGET_RATE,
};
use frogcert::interval::Interval;
use frogcert::operators::{op_a, op_h, op_l, uniform_grid, ExponentialPgf, Pgf};
use frogcert::simulator::{
    estimate_hit_prob, estimate_phi_transitions, oracle_compare, run_batch, run_coupled_batch, BoxModel,
    FiniteDistribution, ModelConfig, Tally, Variant,
};
use num_rational::Rational64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::settings::{parse_menu, pick, pick_list, FileConfig};
use crate::{BoundsArgs, CertifyArgs, EvalArgs, Mode, OracleArgs, SimulateArgs};

pub type Checks = BTreeMap<String, bool>;

pub struct Outcome {
    pub config: Value,
    pub results: Value,
    pub checks: Checks,
}

/// Standard deviations used by every Monte Carlo check.
pub const SIGMAS: f64 = 4.0;

/// Bound on the fraction of coupled episodes excluded for truncation.
pub const MAX_EXCLUSION_RATE: f64 = 0.05;

fn to_json<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).context("report payload")
}

/// A float for the report; NaN and infinities are refused.
fn num(v: f64) -> Result<Value> {
    if !v.is_finite() {
        bail!("non-finite float {v} in report");
    }
    Ok(json!(v))
}

fn ratio_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn certificate_error(e: CertificateError) -> anyhow::Error {
    match e {
        CertificateError::GridTooSmall(_) => anyhow!("invalid grid_size: {e}"),
        CertificateError::BadMenu => anyhow!("invalid step_menu: {e}"),
        other => other.into(),
    }
}

fn write_artifact(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn certify(args: &CertifyArgs, file: &FileConfig, out: Option<&Path>) -> Result<Outcome> {
    let grid_size = pick(args.grid_size, file.grid_size, DEFAULT_GRID_SIZE);
    let menu_default: Vec<String> = default_step_menu().iter().map(format_ratio).collect();
    let menu = parse_menu(&pick_list(args.step_menu.clone(), file.step_menu.clone(), menu_default))?;
    let max_passes = pick(args.max_passes, file.max_passes, DEFAULT_MAX_PASSES);

    let run = run_certificate_with(&menu, max_passes, grid_size, |n, u| {
        eprintln!("pass {n}: m = {}", format_ratio(&u));
    })
    .map_err(certificate_error)?;
    let cert = &run.certificate;
    if let Some(path) = out {
        write_artifact(path, &(cert.to_json() + "\n"))?;
    }
    let verify = verify_certificate(cert);

    let mut delta_counts = BTreeMap::new();
    for d in &menu {
        let n = cert.steps.iter().filter(|s| s.delta == *d).count();
        delta_counts.insert(format_ratio(d), n);
    }
    let mut checks = Checks::new();
    checks.insert("final_rate_reaches_15".into(), cert.final_rate >= Rational64::from_integer(TARGET_RATE));
    checks.insert("self_verify".into(), verify.ok());
    Ok(Outcome {
        config: json!({
            "grid_size": grid_size,
            "step_menu": menu.iter().map(format_ratio).collect::<Vec<_>>(),
            "max_passes": max_passes,
        }),
        results: json!({
            "passes": cert.passes,
            "final_rate": format_ratio(&cert.final_rate),
            "final_rate_decimal": num(ratio_f64(cert.final_rate))?,
            "delta_counts": delta_counts,
            "strictness_decided": run.strictness_decided(),
            "self_verify": to_json(&verify)?,
            "certificate": to_json(cert)?,
        }),
        checks,
    })
}

/// A certificate file, or a `certify` report that embeds one.
fn load_certificate(path: &Path) -> Result<Certificate> {
    let text = fs::read_to_string(path).with_context(|| format!("reading certificate {}", path.display()))?;
    if let Ok(cert) = Certificate::from_json(&text) {
        return Ok(cert);
    }
    let value: Value =
        serde_json::from_str(&text).with_context(|| format!("parsing certificate {}", path.display()))?;
    let embedded = value
        .pointer("/results/certificate")
        .cloned()
        .ok_or_else(|| anyhow!("{} is neither a certificate nor a certify report", path.display()))?;
    serde_json::from_value(embedded).with_context(|| format!("parsing certificate in {}", path.display()))
}

pub fn verify(path: &Path) -> Result<Outcome> {
    let cert = load_certificate(path)?;
    let report = verify_certificate(&cert);
    let mut checks = Checks::new();
    checks.insert("steps_valid".into(), report.ok());
    checks.insert("final_rate_reaches_15".into(), report.final_rate_reaches_target);
    Ok(Outcome {
        config: json!({ "file": path.display().to_string() }),
        results: json!({
            "passes": cert.passes,
            "final_rate": format_ratio(&cert.final_rate),
            "verify": to_json(&report)?,
        }),
        checks,
    })
}

fn grid(grid_size: usize) -> Result<Vec<Interval>> {
    if grid_size < 2 {
        bail!("invalid grid_size: need at least 2 points, got {grid_size}");
    }
    Ok(uniform_grid(grid_size))
}

pub fn bounds(args: &BoundsArgs, file: &FileConfig) -> Result<Outcome> {
    let rates = pick_list(args.a.clone(), file.a.clone(), vec![TARGET_RATE as f64]);
    for &a in &rates {
        if !a.is_finite() || a < MIN_RATE {
            bail!("invalid a: {a} (the bound family needs a >= {MIN_RATE})");
        }
    }
    let grid_size = pick(args.grid_size, file.grid_size, DEFAULT_GRID_SIZE);
    let grid = grid(grid_size)?;
    let mut checks = Checks::new();
    let mut per_rate = Vec::new();
    for &a in &rates {
        let regions = region_constants(a)?;
        let endpoint = psi_endpoint_check(a)?;
        let envelope = envelope_check(a, &grid)?;
        let eps = eps_step_check(a, &grid)?;
        // The side conditions are only claimed from the handoff rate on.
        let required = a >= TARGET_RATE as f64;
        let key = format!("a={a}");
        checks.insert(format!("{key}/envelope_l"), envelope.l.holds());
        checks.insert(format!("{key}/envelope_h"), envelope.h.holds());
        checks.insert(format!("{key}/envelope_psi"), envelope.psi.holds());
        if required {
            for r in &regions {
                checks.insert(format!("{key}/region_{}", r.region.name()), r.verdict);
                if let Some(m) = r.published_match {
                    checks.insert(format!("{key}/region_{}/published_value", r.region.name()), m);
                }
            }
            checks.insert(format!("{key}/psi_endpoint"), endpoint.verdict);
            checks.insert(format!("{key}/eps_step"), eps.holds());
        }
        per_rate.push(json!({
            "a": num(a)?,
            "side_conditions_required": required,
            "regions": to_json(&regions)?,
            "psi_endpoint": to_json(&endpoint)?,
            "envelope": to_json(&envelope)?,
            "eps_step": to_json(&eps)?,
        }));
    }
    Ok(Outcome {
        config: json!({
            "a": rates.iter().map(|&a| num(a)).collect::<Result<Vec<_>>>()?,
            "grid_size": grid_size,
        }),
        results: json!({ "rates": per_rate }),
        checks,
    })
}

fn model_config(args: &SimulateArgs, file: &FileConfig) -> Result<ModelConfig> {
    let (episodes, depth_cap) = match args.mode {
        Mode::Batch => (10_000, 40),
        Mode::Hit | Mode::Phi => (1_000_000, 40),
        Mode::Coupling => (100_000, 5),
    };
    let variant = match args.variant.as_deref().or(file.variant.as_deref()) {
        Some(s) => s
            .parse::<Variant>()
            .map_err(|_| anyhow!("invalid variant: {s:?} (expected original, nonbacktracking or selfsimilar)"))?,
        None => Variant::SelfSimilar,
    };
    let config = ModelConfig {
        variant,
        depth_cap: pick(args.depth_cap, file.depth_cap, depth_cap),
        step_cap: pick(args.step_cap, file.step_cap, 10_000),
        master_seed: pick(args.seed, file.seed, 1),
        episodes: pick(args.episodes, file.episodes, episodes),
        ..ModelConfig::default()
    };
    if config.episodes == 0 {
        bail!("invalid episodes: must be at least 1");
    }
    config.validate()?;
    Ok(config)
}

fn tally_check(t: &Tally, target_num: u32, target_den: u32) -> Result<Value> {
    let target = f64::from(target_num) / f64::from(target_den);
    let se = t.stderr().max(1.0 / t.trials.max(1) as f64);
    Ok(json!({
        "tally": to_json(t)?,
        "estimate": num(t.estimate())?,
        "stderr": num(t.stderr())?,
        "target": format!("{target_num}/{target_den}"),
        "sigmas_from_target": num((t.estimate() - target) / se)?,
        "within": t.within(target, SIGMAS),
    }))
}

#[derive(Serialize)]
struct EpisodeRow<'a> {
    episode_index: u64,
    variant: &'a str,
    root_hits: u64,
    truncated: bool,
}

pub fn simulate(args: &SimulateArgs, file: &FileConfig, out: Option<&Path>) -> Result<Outcome> {
    let config = model_config(args, file)?;
    let mut echo = json!({
        "mode": args.mode.name(),
        "episodes": config.episodes,
        "depth_cap": config.depth_cap,
        "step_cap": config.step_cap,
        "seed": config.master_seed,
    });
    let mut checks = Checks::new();
    let results = match args.mode {
        Mode::Batch => {
            echo["variant"] = json!(config.variant.name());
            let (outcomes, summary) = run_batch(&config)?;
            if let Some(path) = out {
                let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
                for o in &outcomes {
                    w.serialize(EpisodeRow {
                        episode_index: o.episode_index,
                        variant: o.variant.name(),
                        root_hits: o.root_hits,
                        truncated: o.truncated,
                    })?;
                }
                w.flush().with_context(|| format!("writing {}", path.display()))?;
            }
            checks.insert("episodes_completed".into(), outcomes.len() as u64 == config.episodes);
            json!({ "summary": to_json(&summary)? })
        }
        Mode::Hit => {
            let p1 = estimate_hit_prob(1, &config)?;
            let p2 = estimate_hit_prob(2, &config)?;
            let r1 = tally_check(&p1.tally, 4, 9)?;
            let r2 = tally_check(&p2.tally, 3, 8)?;
            checks.insert("p1_within_4_sigma".into(), r1["within"] == json!(true));
            checks.insert("p2_within_4_sigma".into(), r2["within"] == json!(true));
            json!({
                "p1": r1,
                "p2": r2,
                "p1_capped": p1.capped,
                "p2_capped": p2.capped,
            })
        }
        Mode::Phi => {
            let t = estimate_phi_transitions(&config)?;
            let mut named = BTreeMap::new();
            named.insert("first_step_odd", tally_check(&t.first_step[0], 1, 3)?);
            named.insert("first_step_even", tally_check(&t.first_step[1], 1, 4)?);
            named.insert("repeat_up_odd", tally_check(&t.repeat_up[0], 1, 2)?);
            named.insert("repeat_up_even", tally_check(&t.repeat_up[1], 1, 3)?);
            for (slot, parity, n) in [(0, "odd", 2u32), (1, "even", 3)] {
                let all = t
                    .child_tallies(slot)
                    .iter()
                    .all(|c| c.within(1.0 / f64::from(n), SIGMAS));
                checks.insert(format!("child_uniform_{parity}"), all);
            }
            for (name, v) in &named {
                checks.insert(format!("{name}_within_4_sigma"), v["within"] == json!(true));
            }
            json!({ "checks": named, "transitions": to_json(&t)? })
        }
        Mode::Coupling => {
            let s = run_coupled_batch(&config)?;
            checks.insert("path_subset".into(), s.subset_violations == 0);
            checks.insert("dominance_v_vprime_z".into(), s.dominance_violations == 0);
            checks.insert("activated_sets_nest".into(), s.nesting_violations == 0);
            checks.insert("engine_matches_closure".into(), s.engine_disagreements == 0);
            checks.insert("exclusion_below_5_percent".into(), s.exclusion_rate < MAX_EXCLUSION_RATE);
            json!({ "summary": to_json(&s)? })
        }
    };
    Ok(Outcome {
        config: echo,
        results,
        checks,
    })
}

fn parse_models(s: &str) -> Result<Vec<BoxModel>> {
    if s == "all" {
        return Ok(vec![BoxModel::AStar, BoxModel::LStar, BoxModel::HStar]);
    }
    Ok(vec![s.parse::<BoxModel>().map_err(|e| anyhow!("invalid model: {e}"))?])
}

fn parse_dists(s: &str) -> Result<Vec<(String, FiniteDistribution)>> {
    let names: Vec<&str> = if s == "all" {
        vec!["delta0", "delta1", "uniform1"]
    } else {
        vec![s]
    };
    names
        .into_iter()
        .map(|n| {
            FiniteDistribution::by_name(n)
                .map(|d| (n.to_string(), d))
                .ok_or_else(|| anyhow!("invalid dist: {n:?} (expected deltaK, uniformK or all)"))
        })
        .collect()
}

/// Grid steps of the oracle comparison (11 points).
pub const ORACLE_STEPS: i64 = 10;

pub fn oracle(args: &OracleArgs) -> Result<Outcome> {
    let models = parse_models(&args.model)?;
    let dists = parse_dists(&args.dist)?;
    let mut checks = Checks::new();
    let mut comparisons = Vec::new();
    let mut max_width: f64 = 0.0;
    for model in &models {
        for (name, u) in &dists {
            let cmp = oracle_compare(*model, u, ORACLE_STEPS)?;
            checks.insert(format!("{}/{name}", model.name()), cmp.passed());
            if name == "delta0" {
                let law = to_json(&cmp.law)?;
                match model {
                    BoxModel::LStar => {
                        checks.insert("checkpoint/L1_is_(x+3)/4".into(), law == json!(["3/4", "1/4"]));
                    }
                    BoxModel::AStar => {
                        checks.insert("checkpoint/A1_at_0_is_13/24".into(), cmp.points[0].exact == "13/24");
                    }
                    BoxModel::HStar => {}
                }
            }
            max_width = max_width.max(cmp.max_width);
            comparisons.push(json!({
                "model": model.name(),
                "dist": name,
                "comparison": to_json(&cmp)?,
            }));
        }
    }
    Ok(Outcome {
        config: json!({ "model": args.model, "dist": args.dist, "points": ORACLE_STEPS + 1 }),
        results: json!({ "comparisons": comparisons, "max_width": num(max_width)? }),
        checks,
    })
}

#[derive(Serialize, Default)]
struct EvalRow {
    a: f64,
    x: f64,
    pgf_lo: f64,
    pgf_hi: f64,
    a_op_lo: f64,
    a_op_hi: f64,
    l_op_lo: f64,
    l_op_hi: f64,
    h_op_lo: f64,
    h_op_hi: f64,
    psi_lo: Option<f64>,
    psi_hi: Option<f64>,
    l_upper_lo: Option<f64>,
    l_upper_hi: Option<f64>,
    h_upper_lo: Option<f64>,
    h_upper_hi: Option<f64>,
}

pub fn eval(args: &EvalArgs, file: &FileConfig, out: Option<&Path>) -> Result<Outcome> {
    let rates = pick_list(args.a.clone(), file.a.clone(), vec![TARGET_RATE as f64]);
    let grid_size = pick(args.grid_size, file.grid_size, DEFAULT_GRID_SIZE);
    let grid = grid(grid_size)?;
    let mut in_unit = true;
    let mut rows = Vec::new();
    let mut per_rate = Vec::new();
    for &a in &rates {
        if !a.is_finite() || a < 0.0 {
            bail!("invalid a: {a} (need a finite nonnegative rate)");
        }
        let g = ExponentialPgf::new(a)?;
        let with_bounds = a >= MIN_RATE;
        let mut table = Vec::new();
        for &x in &grid {
            let pgf = g.eval(x)?;
            let (ao, lo, ho) = (op_a(&g, x)?, op_l(&g, x)?, op_h(&g, x)?);
            in_unit &= [ao, lo, ho].iter().all(|v| v.is_subset_of(&Interval::UNIT));
            let mut row = EvalRow {
                a,
                x: x.mid(),
                pgf_lo: pgf.lo(),
                pgf_hi: pgf.hi(),
                a_op_lo: ao.lo(),
                a_op_hi: ao.hi(),
                l_op_lo: lo.lo(),
                l_op_hi: lo.hi(),
                h_op_lo: ho.lo(),
                h_op_hi: ho.hi(),
                ..EvalRow::default()
            };
            let mut entry = json!({ "x": num(x.mid())?, "pgf": to_json(&pgf)?, "A": to_json(&ao)?, "L": to_json(&lo)?, "H": to_json(&ho)? });
            if with_bounds {
                let (p, l, h) = (psi(a, x)?, l_upper(a, x)?, h_upper(a, x)?);
                (row.psi_lo, row.psi_hi) = (Some(p.lo()), Some(p.hi()));
                (row.l_upper_lo, row.l_upper_hi) = (Some(l.lo()), Some(l.hi()));
                (row.h_upper_lo, row.h_upper_hi) = (Some(h.lo()), Some(h.hi()));
                entry["psi"] = to_json(&p)?;
                entry["l_upper"] = to_json(&l)?;
                entry["h_upper"] = to_json(&h)?;
            }
            table.push(entry);
            rows.push(row);
        }
        per_rate.push(json!({ "a": num(a)?, "rows": table }));
    }
    if let Some(path) = out {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        for row in &rows {
            w.serialize(row)?;
        }
        w.flush().with_context(|| format!("writing {}", path.display()))?;
    }
    let mut checks = Checks::new();
    checks.insert("operators_in_unit_interval".into(), in_unit);
    Ok(Outcome {
        config: json!({
            "a": rates.iter().map(|&a| num(a)).collect::<Result<Vec<_>>>()?,
            "grid_size": grid_size,
        }),
        results: json!({ "rates": per_rate }),
        checks,
    })
}
