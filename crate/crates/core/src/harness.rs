//! Experiment harness: JSON config ingestion, seeded multi-trial execution,
//! CSV/SVG emission, the invariant-check battery, and aggregation. Everything
//! here is byte-deterministic given the config, independent of worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{cover_traj, learn_exp_policies, uncovered_mass, DesignConfig};
use crate::error::{Error, Result};
use crate::instances::{make_didactic_f1, make_rand_exp_counterexample, make_random_lowrank, parse_instance_spec};
use crate::mdp::{
    feature_covariance, min_eigenvalue, occupancy_measures, optimal_policy_vi, policy_value_exact,
    q_values_exact, tv_gap, TabularMDP,
};
use crate::policy::Policy;
use crate::regression::BufferInit;
use crate::rng::{derive_seed, StreamKey};
use crate::transfer::{
    direct_transfer_protocol, exploration_transfer, sim2explore, trajectory_law_tv,
    zeta_greedy_protocol, RunRecord, TrialKey,
};

fn default_eval_stride() -> u64 {
    50
}

fn default_refit_period() -> usize {
    10
}

fn default_buffer_init() -> BufferInit {
    BufferInit::OnePerSah
}

fn default_sim_cap() -> usize {
    200_000
}

/// One algorithm entry of an experiment; the tag is the CSV algorithm label.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmConfig {
    ZetaGreedy {
        zeta: f64,
        t_episodes: u64,
        #[serde(default = "default_refit_period")]
        refit_period: usize,
        #[serde(default = "default_buffer_init")]
        buffer_init: BufferInit,
    },
    DirectTransfer {
        zeta: f64,
        t_episodes: u64,
    },
    ExplorationTransfer {
        epsilon: f64,
        delta: f64,
        t_episodes: u64,
    },
    #[serde(rename = "sim2explore")]
    Sim2Explore {
        epsilon: f64,
        delta: f64,
        t_episodes: u64,
        #[serde(default = "default_sim_cap")]
        sim_episode_cap: usize,
    },
}

impl AlgorithmConfig {
    pub fn label(&self) -> &'static str {
        match self {
            AlgorithmConfig::ZetaGreedy { .. } => "zeta_greedy",
            AlgorithmConfig::DirectTransfer { .. } => "direct_transfer",
            AlgorithmConfig::ExplorationTransfer { .. } => "exploration_transfer",
            AlgorithmConfig::Sim2Explore { .. } => "sim2explore",
        }
    }
}

/// Experiment description; unknown keys are a hard configuration error.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Instance specifier, e.g. "d1:H=12,eps=0.125" (see parse_instance_spec).
    pub instance: String,
    pub algorithms: Vec<AlgorithmConfig>,
    pub trials: u64,
    pub master_seed: u64,
    pub output_dir: String,
    #[serde(default = "default_eval_stride")]
    pub eval_stride: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        if config.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if config.algorithms.is_empty() {
            return Err(Error::Config("algorithms must be non-empty".into()));
        }
        if config.eval_stride == 0 {
            return Err(Error::Config("eval_stride must be >= 1".into()));
        }
        Ok(config)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: u64,
    pub mean: f64,
    pub std_err: f64,
    pub trials: u64,
}

/// Mean +/- standard error of exact suboptimality over trials.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AggregateCurve {
    pub algorithm: String,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub records: Vec<RunRecord>,
    pub curves: Vec<AggregateCurve>,
    pub csv_path: PathBuf,
    pub svg_path: PathBuf,
}

fn run_one(
    sim: &TabularMDP,
    real: &TabularMDP,
    algo: &AlgorithmConfig,
    key: &TrialKey,
    eval_stride: u64,
) -> Result<RunRecord> {
    match algo {
        AlgorithmConfig::ZetaGreedy { zeta, t_episodes, refit_period, buffer_init } => {
            zeta_greedy_protocol(real, *zeta, *t_episodes, key, *refit_period, *buffer_init, eval_stride)
        }
        AlgorithmConfig::DirectTransfer { zeta, t_episodes } => {
            direct_transfer_protocol(sim, real, *zeta, *t_episodes, key, eval_stride)
        }
        AlgorithmConfig::ExplorationTransfer { epsilon, delta, t_episodes } => {
            exploration_transfer(sim, real, *epsilon, *delta, *t_episodes, key, eval_stride)
        }
        AlgorithmConfig::Sim2Explore { epsilon, delta, t_episodes, sim_episode_cap } => {
            sim2explore(sim, real, *t_episodes, *delta, *epsilon, key, eval_stride, *sim_episode_cap)
        }
    }
}

/// Execute every (algorithm, trial) with derived seeds and write results.csv
/// and curve.svg into the output directory. Record order and file bytes are
/// independent of the worker count.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    let (bundle, real_idx) = parse_instance_spec(&config.instance)?;
    let real = bundle
        .reals
        .get(real_idx)
        .ok_or_else(|| Error::Config(format!("real index {real_idx} out of range")))?;
    let jobs: Vec<(usize, u64)> = (0..config.algorithms.len())
        .flat_map(|i| (0..config.trials).map(move |t| (i, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let records: Vec<Result<RunRecord>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, trial)| {
                let algo = &config.algorithms[i];
                let key = TrialKey::new(derive_seed(config.master_seed, i as u64 + 1), trial);
                run_one(&bundle.sim, real, algo, &key, config.eval_stride).map_err(|e| match e {
                    Error::Budget(msg) => {
                        Error::Budget(format!("{} trial {trial}: {msg}", algo.label()))
                    }
                    other => other,
                })
            })
            .collect()
    });
    let records: Vec<RunRecord> = records.into_iter().collect::<Result<_>>()?;
    let curves = aggregate(&records);
    std::fs::create_dir_all(&config.output_dir)?;
    let csv_path = Path::new(&config.output_dir).join("results.csv");
    let svg_path = Path::new(&config.output_dir).join("curve.svg");
    let config_echo = serde_json::to_string(config)?;
    std::fs::write(&csv_path, records_to_csv(&config_echo, &records))?;
    std::fs::write(&svg_path, render_svg(&curves, Some(&config_echo)))?;
    Ok(ExperimentOutput { records, curves, csv_path, svg_path })
}

/// CSV text: a `# config` echo line, the schema header, one row per probe.
/// Floats carry 17 significant digits so parsing back is lossless.
pub fn records_to_csv(config_echo: &str, records: &[RunRecord]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# config {config_echo}");
    out.push_str(
        "algorithm,trial,episode,real_steps,sim_episodes,exact_suboptimality,mc_value_estimate,seed\n",
    );
    for rec in records {
        for p in &rec.probes {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.16e},{:.16e},{}",
                rec.algorithm,
                rec.trial,
                p.episode,
                p.real_steps,
                p.sim_episodes,
                p.exact_suboptimality,
                p.mc_value_estimate,
                rec.seed
            );
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct CsvRow {
    pub algorithm: String,
    pub trial: u64,
    pub episode: u64,
    pub exact_suboptimality: f64,
}

/// Parse the probe rows back out of a results.csv file.
pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (lineno, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            if !line.starts_with("algorithm,trial,episode") {
                return Err(Error::Config(format!("line {}: unexpected header", lineno + 1)));
            }
            saw_header = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::Config(format!("line {}: expected 8 columns", lineno + 1)));
        }
        let bad = |what: &str| Error::Config(format!("line {}: bad {what}", lineno + 1));
        rows.push(CsvRow {
            algorithm: f[0].to_string(),
            trial: f[1].parse().map_err(|_| bad("trial"))?,
            episode: f[2].parse().map_err(|_| bad("episode"))?,
            exact_suboptimality: f[5].parse().map_err(|_| bad("exact_suboptimality"))?,
        });
    }
    if !saw_header {
        return Err(Error::Config("no CSV header found".into()));
    }
    Ok(rows)
}

fn summarize(buckets: BTreeMap<u64, Vec<f64>>) -> Vec<CurvePoint> {
    buckets
        .into_iter()
        .map(|(episode, vals)| {
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let std_err = if vals.len() > 1 {
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
                var.sqrt() / n.sqrt()
            } else {
                0.0
            };
            CurvePoint { episode, mean, std_err, trials: vals.len() as u64 }
        })
        .collect()
}

/// Per algorithm and probe episode: mean suboptimality and standard error.
/// When a trial probes the same episode twice (a stride probe coinciding with
/// the final checkpoint) the last probe wins.
pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateCurve> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_algo: BTreeMap<&str, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for rec in records {
        if !order.contains(&rec.algorithm.as_str()) {
            order.push(&rec.algorithm);
        }
        let buckets = by_algo.entry(&rec.algorithm).or_default();
        let mut per_trial: BTreeMap<u64, f64> = BTreeMap::new();
        for p in &rec.probes {
            per_trial.insert(p.episode, p.exact_suboptimality);
        }
        for (episode, sub) in per_trial {
            buckets.entry(episode).or_default().push(sub);
        }
    }
    order
        .into_iter()
        .map(|name| AggregateCurve {
            algorithm: name.to_string(),
            points: summarize(by_algo.remove(name).unwrap_or_default()),
        })
        .collect()
}

/// Rebuild aggregate curves from a parsed CSV (for the plot subcommand).
pub fn aggregate_rows(rows: &[CsvRow]) -> Vec<AggregateCurve> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_key: BTreeMap<(&str, u64), BTreeMap<u64, f64>> = BTreeMap::new();
    for r in rows {
        if !order.contains(&r.algorithm.as_str()) {
            order.push(&r.algorithm);
        }
        by_key
            .entry((&r.algorithm, r.trial))
            .or_default()
            .insert(r.episode, r.exact_suboptimality);
    }
    order
        .into_iter()
        .map(|name| {
            let mut buckets: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
            for ((algo, _), per_trial) in &by_key {
                if *algo == name {
                    for (&e, &v) in per_trial {
                        buckets.entry(e).or_default().push(v);
                    }
                }
            }
            AggregateCurve { algorithm: name.to_string(), points: summarize(buckets) }
        })
        .collect()
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

const PLOT_W: f64 = 800.0;
const PLOT_H: f64 = 500.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 180.0;
const MARGIN_T: f64 = 20.0;
const MARGIN_B: f64 = 50.0;

fn fmt2(x: f64) -> String {
    format!("{x:.2}")
}

/// Self-contained SVG line chart: log-x episodes, linear-y suboptimality,
/// shaded +/- one standard error. Byte-deterministic given the curves.
pub fn render_svg(curves: &[AggregateCurve], config_echo: Option<&str>) -> String {
    let x0 = MARGIN_L;
    let x1 = PLOT_W - MARGIN_R;
    let y0 = PLOT_H - MARGIN_B;
    let y1 = MARGIN_T;
    // Probes at episode 0 cannot sit on a log axis; clamp to 1.
    let eps_of = |e: u64| (e.max(1) as f64).log10();
    let mut lx_min = f64::INFINITY;
    let mut lx_max = f64::NEG_INFINITY;
    let mut y_max = 0.0f64;
    for c in curves {
        for p in &c.points {
            lx_min = lx_min.min(eps_of(p.episode));
            lx_max = lx_max.max(eps_of(p.episode));
            y_max = y_max.max(p.mean + p.std_err);
        }
    }
    if !lx_min.is_finite() {
        lx_min = 0.0;
        lx_max = 1.0;
    }
    if lx_max - lx_min < 1e-12 {
        lx_max = lx_min + 1.0;
    }
    if y_max <= 0.0 {
        y_max = 1.0;
    }
    y_max *= 1.05;
    let sx = |e: u64| x0 + (eps_of(e) - lx_min) / (lx_max - lx_min) * (x1 - x0);
    let sy = |v: f64| y0 - (v.max(0.0) / y_max) * (y0 - y1);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PLOT_W}" height="{PLOT_H}" viewBox="0 0 {PLOT_W} {PLOT_H}">"#
    );
    if let Some(echo) = config_echo {
        let safe = echo.replace("--", "__");
        let _ = writeln!(svg, "<!-- config {safe} -->");
    }
    let _ = writeln!(svg, r#"<rect width="{PLOT_W}" height="{PLOT_H}" fill="white"/>"#);
    // Axes.
    let _ = writeln!(
        svg,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        fmt2(x0), fmt2(y0), fmt2(x1), fmt2(y0)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        fmt2(x0), fmt2(y0), fmt2(x0), fmt2(y1)
    );
    // Decade ticks on x.
    let first_dec = lx_min.floor() as i64;
    let last_dec = lx_max.ceil() as i64;
    for dec in first_dec..=last_dec {
        let lx = dec as f64;
        if lx < lx_min - 1e-9 || lx > lx_max + 1e-9 {
            continue;
        }
        let px = x0 + (lx - lx_min) / (lx_max - lx_min) * (x1 - x0);
        let _ = writeln!(
            svg,
            r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="black"/>"#,
            fmt2(px), fmt2(y0), fmt2(y0 + 5.0)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">1e{}</text>"#,
            fmt2(px), fmt2(y0 + 20.0), dec
        );
    }
    // Five linear ticks on y.
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let py = sy(v);
        let _ = writeln!(
            svg,
            r#"<line x1="{0}" y1="{2}" x2="{1}" y2="{2}" stroke="black"/>"#,
            fmt2(x0 - 5.0), fmt2(x0), fmt2(py)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="end">{}</text>"#,
            fmt2(x0 - 8.0), fmt2(py + 4.0), format!("{v:.4}")
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">real episodes (log scale)</text>"#,
        fmt2((x0 + x1) / 2.0), fmt2(y0 + 38.0)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {})">exact suboptimality</text>"#,
        fmt2((y0 + y1) / 2.0), fmt2((y0 + y1) / 2.0)
    );
    for (i, curve) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if curve.points.len() >= 2 {
            // +/- one standard error band: upper edge forward, lower reversed.
            let mut band = String::new();
            for p in &curve.points {
                let _ = write!(band, "{},{} ", fmt2(sx(p.episode)), fmt2(sy(p.mean + p.std_err)));
            }
            for p in curve.points.iter().rev() {
                let _ = write!(band, "{},{} ", fmt2(sx(p.episode)), fmt2(sy(p.mean - p.std_err)));
            }
            let _ = writeln!(
                svg,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
                band.trim_end()
            );
            let mut line = String::new();
            for p in &curve.points {
                let _ = write!(line, "{},{} ", fmt2(sx(p.episode)), fmt2(sy(p.mean)));
            }
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                line.trim_end()
            );
        } else if let Some(p) = curve.points.first() {
            let _ = writeln!(
                svg,
                r#"<circle cx="{}" cy="{}" r="3" fill="{color}"/>"#,
                fmt2(sx(p.episode)), fmt2(sy(p.mean))
            );
        }
        let ly = y1 + 16.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{0}" y1="{2}" x2="{1}" y2="{2}" stroke="{color}" stroke-width="2"/>"#,
            fmt2(x1 + 10.0), fmt2(x1 + 34.0), fmt2(ly)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="12">{}</text>"#,
            fmt2(x1 + 40.0), fmt2(ly + 4.0), curve.algorithm
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckReport {
    pub checks: Vec<CheckResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Battery specifier: `rand:count=100,eps=0.2,seed=1` (every key optional).
#[derive(Clone, Copy, Debug)]
pub struct BatterySpec {
    pub count: usize,
    pub eps_max: f64,
    pub seed: u64,
}

impl Default for BatterySpec {
    fn default() -> Self {
        BatterySpec { count: 100, eps_max: 0.2, seed: 1 }
    }
}

impl BatterySpec {
    pub fn parse(spec: &str) -> Result<Self> {
        let rest = match spec.split_once(':') {
            Some(("rand", r)) => r,
            None if spec.trim() == "rand" || spec.trim().is_empty() => "",
            _ => return Err(Error::Config(format!("unknown battery family in '{spec}'"))),
        };
        let mut out = BatterySpec::default();
        for part in rest.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("battery key without value: '{part}'")))?;
            match k.trim() {
                "count" => out.count = v.trim().parse().map_err(|_| Error::Config(format!("bad count '{v}'")))?,
                "eps" => out.eps_max = v.trim().parse().map_err(|_| Error::Config(format!("bad eps '{v}'")))?,
                "seed" => out.seed = v.trim().parse().map_err(|_| Error::Config(format!("bad seed '{v}'")))?,
                other => return Err(Error::Config(format!("unknown battery key '{other}'"))),
            }
        }
        if out.count == 0 || !(out.eps_max > 0.0 && out.eps_max <= 0.5) {
            return Err(Error::Config("battery needs count >= 1 and eps in (0, 0.5]".into()));
        }
        Ok(out)
    }
}

/// One random sim/real pair with shape bounds S<=8, A<=4, H<=10.
fn random_bundle(spec: &BatterySpec, i: u64) -> Result<(TabularMDP, TabularMDP, f64)> {
    let mut s = StreamKey::new(spec.seed, 0, i).stream(0);
    let ns = 2 + (s.next_u64() % 7) as usize;
    let na = 2 + (s.next_u64() % 3) as usize;
    let hm = 2 + (s.next_u64() % 9) as usize;
    let d = 2 + (s.next_u64() as usize % (ns * na - 1).min(3));
    let eps = s.next_f64() * spec.eps_max;
    let b = make_random_lowrank(ns, na, hm, d, eps, derive_seed(spec.seed, 1000 + i))?;
    let real = b.reals[0].clone();
    Ok((b.sim, real, b.declared_eps_sim))
}

fn random_policy(mdp: &TabularMDP, key: &StreamKey) -> Policy {
    let mut s = key.stream(1);
    let mut table = vec![vec![vec![0.0; mdp.num_actions]; mdp.num_states]; mdp.horizon];
    for per_s in table.iter_mut() {
        for row in per_s.iter_mut() {
            let mut sum = 0.0;
            for p in row.iter_mut() {
                *p = -(1.0 - s.next_f64()).ln();
                sum += *p;
            }
            for p in row.iter_mut() {
                *p /= sum;
            }
        }
    }
    Policy::StochasticTable(table)
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name: name.to_string(), passed, detail }
}

/// Run the invariant battery: value-transfer and gap bounds over random
/// bundles plus the fixed-instance design and coverage guarantees.
pub fn check_suite(spec: &BatterySpec) -> Result<CheckReport> {
    const TOL: f64 = 1e-9;
    let mut checks = Vec::new();

    // Value transfer: playing the sim optimum on real loses at most 2 H^2 eps.
    let mut violations = 0usize;
    let mut worst_margin = f64::NEG_INFINITY;
    for i in 0..spec.count {
        let (sim, real, _) = random_bundle(spec, i as u64)?;
        let (eps, _) = tv_gap(&sim, &real)?;
        let (pi_sim, _, _) = optimal_policy_vi(&sim, None)?;
        let (_, _, v_star) = optimal_policy_vi(&real, None)?;
        let (v_pi, _) = policy_value_exact(&real, &pi_sim)?;
        let h = real.horizon as f64;
        let gap = v_star - v_pi;
        let bound = 2.0 * h * h * eps;
        worst_margin = worst_margin.max(gap - bound);
        if gap > bound + TOL {
            violations += 1;
        }
    }
    checks.push(check(
        "value_transfer_bound",
        violations == 0,
        format!("{} bundles, {} violations, worst margin {:.3e}", spec.count, violations, worst_margin),
    ));

    // Q-gap and visitation-gap bounds on a subsample of the battery.
    let sub = spec.count.min(20);
    let mut q_viol = 0usize;
    let mut w_viol = 0usize;
    for i in 0..sub {
        let (sim, real, _) = random_bundle(spec, i as u64)?;
        let (eps, _) = tv_gap(&sim, &real)?;
        let h = real.horizon as f64;
        let r_max = crate::mdp::max_achievable_return(&sim, &real);
        for p in 0..20u64 {
            let key = StreamKey::new(derive_seed(spec.seed, 7000 + i as u64), p, 0);
            let pol = random_policy(&real, &key);
            let qa = q_values_exact(&sim, &pol)?;
            let qb = q_values_exact(&real, &pol)?;
            let mut max_gap = 0.0f64;
            for (ta, tb) in qa.values.iter().zip(&qb.values) {
                for (ra, rb) in ta.iter().zip(tb) {
                    for (&a, &b) in ra.iter().zip(rb) {
                        max_gap = max_gap.max((a - b).abs());
                    }
                }
            }
            if max_gap > h * r_max * eps + TOL {
                q_viol += 1;
            }
            let wa = occupancy_measures(&sim, &pol)?;
            let wb = occupancy_measures(&real, &pol)?;
            let mut sk = key.stream(2);
            for _ in 0..50 {
                let hh = 1 + (sk.next_u64() as usize % real.horizon);
                let pairs: Vec<(usize, usize)> = (0..real.num_states)
                    .flat_map(|s| (0..real.num_actions).map(move |a| (s, a)))
                    .filter(|_| sk.next_u64() % 2 == 0)
                    .collect();
                let diff = (wa.mass(hh, &pairs) - wb.mass(hh, &pairs)).abs();
                if diff > h * eps + TOL {
                    w_viol += 1;
                }
            }
        }
    }
    checks.push(check(
        "q_gap_bound",
        q_viol == 0,
        format!("{sub} bundles x 20 policies, {q_viol} violations"),
    ));
    checks.push(check(
        "visitation_gap_bound",
        w_viol == 0,
        format!("{sub} bundles x 20 policies x 50 subsets, {w_viol} violations"),
    ));

    // Staged coverage on fixed instances: residual uncovered mass <= beta.
    let d2 = make_rand_exp_counterexample(0.25)?;
    let f1 = make_didactic_f1(10)?;
    let mut cover_ok = true;
    let mut cover_detail = String::new();
    for (label, sim) in [("d2", &d2.sim), ("f1", &f1.sim)] {
        for h in 1..=sim.horizon {
            let out = cover_traj(sim, h, 0.25, &StreamKey::new(spec.seed, 0, 0), 2_000_000)?;
            let covered: Vec<(usize, usize)> =
                out.stages.iter().flat_map(|st| st.covered.iter().cloned()).collect();
            let resid = uncovered_mass(sim, h, &covered)?;
            if resid > 0.25 + TOL {
                cover_ok = false;
                let _ = write!(cover_detail, "{label} h={h}: residual {resid:.4}; ");
            }
        }
    }
    if cover_ok {
        cover_detail = "beta=1/4 on d2 and f1 sims, all steps covered to tolerance".into();
    }
    checks.push(check("cover_traj_residual", cover_ok, cover_detail));

    // Design-loop guarantee on the counterexample sim: min eigenvalue >= 0.45
    // (brute-force optimum is 0.5).
    let design = learn_exp_policies(&d2.sim, 1, 1e-4, &DesignConfig::default())?;
    checks.push(check(
        "design_min_eig_d2",
        design.achieved_min_eig >= 0.45,
        format!("achieved {:.4} (target >= 0.45)", design.achieved_min_eig),
    ));

    // Indistinguishability mechanism: the two counterexample reals share a
    // trajectory law under the well-covering policy.
    let pol = Policy::StochasticTable(vec![vec![vec![0.5, 0.0, 0.0, 0.5]; 2]; 2]);
    let tv = trajectory_law_tv(&d2.reals[0], &d2.reals[1], &pol)?;
    let cov = feature_covariance(&d2.sim, &pol, 1)?;
    let lam = min_eigenvalue(&cov.lambda);
    checks.push(check(
        "counterexample_tv_vs_coverage",
        tv == 0.0 && (lam - 0.5).abs() < 1e-12,
        format!("tv {tv:.3e}, min eig {lam:.6}"),
    ));

    Ok(CheckReport { checks })
}
