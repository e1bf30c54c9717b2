//! Replicated experiments, scheduler comparisons and artifact export.
//!
//! An experiment runs one policy `replicates` times with seeds `seed + i`,
//! reports the run with the median total draw count, and scores its final
//! marginals against the model's reference posterior.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{fmt_f64, hellinger, linspace, parse_f64, GriddedDensity, Kde1D, DEFAULT_GRID_POINTS};
use crate::engine::{run, RunConfig, RunTrace, StopReason};
use crate::models::{load_observed_csv, model_by_name, ModelSpec, ReferencePosterior, GMM_FIXED_SEQUENCE};
use crate::schedule::SchedulerPolicy;
use crate::{Error, Result};

/// Which artifacts an experiment writes when it has an output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportOptions {
    /// Per-iteration particle CSV for every run.
    pub particles: bool,
    /// Per-iteration marginal KDE grids for the median run.
    pub kde_grids: bool,
    /// Comparison table CSV.
    pub hellinger_table: bool,
    /// TAR curves behind TAR decisions.
    pub tar_curves: bool,
    pub grid_points: usize,
}

impl Default for ExportOptions {
    fn default() -> Self {
        Self { particles: true, kde_grids: true, hellinger_table: true, tar_curves: true, grid_points: DEFAULT_GRID_POINTS }
    }
}

/// Experiment settings, read from a flat JSON object. Missing keys take
/// their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: String,
    /// Replacement observed data.
    pub observed: Option<Vec<f64>>,
    /// Replacement observed data, one value per row.
    pub observed_csv: Option<PathBuf>,
    pub n_particles: usize,
    pub oversample: usize,
    pub policy: SchedulerPolicy,
    /// Policies for a comparison; empty means `policy` alone.
    pub policies: Vec<SchedulerPolicy>,
    pub max_iterations: u32,
    pub seed: u64,
    /// Concurrent replicate runs; `None` uses every core.
    pub workers: Option<usize>,
    pub attempt_budget: u64,
    pub draw_budget: Option<u64>,
    pub max_retries: u32,
    pub replicates: usize,
    pub out_dir: Option<PathBuf>,
    pub export: ExportOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let base = RunConfig::new(1000, 5, SchedulerPolicy::adaptive(), 0);
        Self {
            model: "gmm".into(),
            observed: None,
            observed_csv: None,
            n_particles: base.n_particles,
            oversample: base.oversample,
            policy: base.policy,
            policies: Vec::new(),
            max_iterations: base.max_iterations,
            seed: base.seed,
            workers: None,
            attempt_budget: base.attempt_budget,
            draw_budget: None,
            max_retries: base.max_retries,
            replicates: 21,
            out_dir: None,
            export: ExportOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("bad configuration: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 || self.replicates % 2 == 0 {
            return Err(Error::Config(format!("replicate count must be odd, got {}", self.replicates)));
        }
        if self.export.grid_points < 2 {
            return Err(Error::Config("export grid needs at least two points".into()));
        }
        self.run_config(&self.policy, self.seed).validate()?;
        for p in &self.policies {
            p.validate()?;
        }
        self.model_spec().map(|_| ())
    }

    /// The model with any observed-data override applied.
    pub fn model_spec(&self) -> Result<ModelSpec> {
        let mut model = model_by_name(&self.model)?;
        if let Some(path) = &self.observed_csv {
            let observed = load_observed_csv(path)
                .map_err(|e| Error::Config(format!("cannot load observed data from {}: {e}", path.display())))?;
            model = model.with_observed(observed)?;
        }
        if let Some(obs) = &self.observed {
            model = model.with_observed(obs.clone())?;
        }
        Ok(model)
    }

    /// Run settings for one replicate. Workers are left to the enclosing
    /// pool.
    pub fn run_config(&self, policy: &SchedulerPolicy, seed: u64) -> RunConfig {
        RunConfig {
            n_particles: self.n_particles,
            oversample: self.oversample,
            policy: policy.clone(),
            max_iterations: self.max_iterations,
            seed,
            workers: None,
            attempt_budget: self.attempt_budget,
            draw_budget: self.draw_budget,
            max_retries: self.max_retries,
        }
    }

    fn policy_list(&self) -> Vec<SchedulerPolicy> {
        if self.policies.is_empty() {
            vec![self.policy.clone()]
        } else {
            self.policies.clone()
        }
    }
}

/// Parses a policy shorthand:
/// `adaptive[:q_stop]`, `fixed-sequence[:e1,e2,...]`, `fixed-quantile[:q]`,
/// `ess[:alpha]` or `tar[:grid_size[:replicates]]`. A bare
/// `fixed-sequence` uses [`GMM_FIXED_SEQUENCE`].
pub fn parse_policy(text: &str) -> Result<SchedulerPolicy> {
    let (name, args) = match text.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a.trim())),
        None => (text.trim(), None),
    };
    let num = |s: &str| -> Result<f64> {
        s.trim().parse().map_err(|_| Error::Config(format!("bad number {s:?} in policy {text:?}")))
    };
    let int = |s: &str| -> Result<usize> {
        s.trim().parse().map_err(|_| Error::Config(format!("bad integer {s:?} in policy {text:?}")))
    };
    let policy = match (name, args) {
        ("adaptive", None) => SchedulerPolicy::adaptive(),
        ("adaptive", Some(a)) => match SchedulerPolicy::adaptive() {
            SchedulerPolicy::Adaptive { min_stop_iteration, ratio, .. } => {
                SchedulerPolicy::Adaptive { q_stop: num(a)?, min_stop_iteration, ratio }
            }
            _ => unreachable!(),
        },
        ("fixed-sequence", None) => SchedulerPolicy::FixedSequence { epsilons: GMM_FIXED_SEQUENCE.to_vec() },
        ("fixed-sequence", Some(a)) => {
            SchedulerPolicy::FixedSequence { epsilons: a.split(',').map(num).collect::<Result<_>>()? }
        }
        ("fixed-quantile", a) => SchedulerPolicy::FixedQuantile { q: a.map(num).transpose()?.unwrap_or(0.5) },
        ("ess", a) => SchedulerPolicy::Ess { alpha: a.map(num).transpose()?.unwrap_or(0.5) },
        ("tar", a) => {
            let parts: Vec<&str> = a.map(|a| a.split(':').collect()).unwrap_or_default();
            if parts.len() > 2 {
                return Err(Error::Config(format!("too many TAR arguments in {text:?}")));
            }
            SchedulerPolicy::Tar {
                grid_size: parts.first().map(|s| int(s)).transpose()?.unwrap_or(20),
                replicates: parts.get(1).map(|s| int(s)).transpose()?.unwrap_or(20),
                proposals_per_replicate: 1000,
            }
        }
        _ => return Err(Error::Config(format!("unknown policy {text:?}"))),
    };
    policy.validate()?;
    Ok(policy)
}

/// One replicate's headline numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub seed: u64,
    pub iterations: usize,
    pub total_draws: u64,
    pub final_epsilon: f64,
    pub wall_time: f64,
    pub stop: StopReason,
}

impl ReplicateSummary {
    pub fn of(trace: &RunTrace) -> Self {
        Self {
            seed: trace.seed,
            iterations: trace.iterations(),
            total_draws: trace.total_draws,
            final_epsilon: trace.final_epsilon(),
            wall_time: trace.wall_time,
            stop: trace.stop.clone(),
        }
    }
}

/// A replicate that produced no usable trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub seed: u64,
    pub message: String,
}

/// One row of a comparison: the median run of a policy's replicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub policy: String,
    pub median_seed: u64,
    pub iterations: usize,
    pub total_draws: u64,
    pub final_epsilon: f64,
    pub wall_time: f64,
    /// Per-parameter Hellinger distance of the median run's final
    /// marginals to the reference; empty without a reference.
    pub hellinger: Vec<f64>,
    pub draw_budget: Option<u64>,
    pub replicates: Vec<ReplicateSummary>,
    pub failures: Vec<RunFailure>,
    pub warning: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub label: String,
    pub report: Option<PolicyReport>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub model: String,
    pub rows: Vec<PolicyRow>,
}

/// Everything one experiment produced.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub report: PolicyReport,
    /// Surviving traces in seed order.
    pub traces: Vec<RunTrace>,
    /// Index of the median run in `traces`.
    pub median: usize,
}

impl Experiment {
    pub fn median_trace(&self) -> &RunTrace {
        &self.traces[self.median]
    }
}

/// Index of the run with the median total draw count (lower median for an
/// even count). Ties go to the smaller seed.
pub fn median_index(traces: &[RunTrace]) -> Option<usize> {
    let mut order: Vec<usize> = (0..traces.len()).collect();
    order.sort_by_key(|&i| (traces[i].total_draws, traces[i].seed));
    order.get(traces.len().saturating_sub(1) / 2).copied()
}

fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(w) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {w} workers: {e}")))?
            .install(f)),
        None => Ok(f()),
    }
}

/// Runs `config.policy` over `config.replicates` seeds and scores the median
/// run. Artifacts go under `out_dir/<policy label>/` when an output
/// directory is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment> {
    config.validate()?;
    let model = config.model_spec()?;
    let exp = replicate(&model, config, &config.policy, config.draw_budget)?;
    if let Some(dir) = &config.out_dir {
        write_experiment(&exp, &model, config, &dir.join(config.policy.label()))?;
    }
    Ok(exp)
}

fn replicate(
    model: &ModelSpec,
    config: &ExperimentConfig,
    policy: &SchedulerPolicy,
    draw_budget: Option<u64>,
) -> Result<Experiment> {
    let seeds: Vec<u64> = (0..config.replicates as u64).map(|i| config.seed.wrapping_add(i)).collect();
    let outcomes: Vec<Result<RunTrace>> = in_pool(config.workers, || {
        seeds
            .par_iter()
            .map(|&seed| {
                let mut rc = config.run_config(policy, seed);
                rc.draw_budget = draw_budget;
                run(model, &rc)
            })
            .collect()
    })?;
    let mut traces = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in seeds.iter().zip(outcomes) {
        match outcome {
            Ok(trace) => match &trace.stop {
                StopReason::Failed { message } => failures.push(RunFailure { seed: *seed, message: message.clone() }),
                _ => traces.push(trace),
            },
            Err(e) => failures.push(RunFailure { seed: *seed, message: e.to_string() }),
        }
    }
    let Some(median) = median_index(&traces) else {
        return Err(Error::NoSurvivingRuns {
            attempted: seeds.len(),
            first: failures.first().map(|f| f.message.clone()).unwrap_or_default(),
        });
    };
    let warning = (!failures.is_empty())
        .then(|| format!("{} of {} runs failed; report uses the survivors", failures.len(), seeds.len()));
    let m = &traces[median];
    let hellinger = match &model.reference {
        Some(reference) => final_hellinger(m, reference, config.export.grid_points)?,
        None => Vec::new(),
    };
    let report = PolicyReport {
        policy: policy.label(),
        median_seed: m.seed,
        iterations: m.iterations(),
        total_draws: m.total_draws,
        final_epsilon: m.final_epsilon(),
        wall_time: m.wall_time,
        hellinger,
        draw_budget,
        replicates: traces.iter().map(ReplicateSummary::of).collect(),
        failures,
        warning,
    };
    Ok(Experiment { report, traces, median })
}

/// Hellinger distance of each final marginal to the reference marginal.
/// A point-mass reference is smoothed with the sample KDE's bandwidth.
pub fn final_hellinger(trace: &RunTrace, reference: &ReferencePosterior, grid_points: usize) -> Result<Vec<f64>> {
    let system = trace.final_system();
    let weights = system.weights();
    (0..system.dim())
        .map(|j| {
            let kde = Kde1D::silverman(system.coordinate(j), &weights)?;
            let (mut lo, mut hi) = kde.span(3.0);
            if let Some((rlo, rhi)) = reference_span(reference, j, kde.bandwidth()) {
                lo = lo.min(rlo);
                hi = hi.max(rhi);
            }
            let grid = linspace(lo, hi, grid_points);
            let p = kde.evaluate(&grid)?;
            let q = reference.marginal(j, &grid, kde.bandwidth())?;
            hellinger(&p, &q)
        })
        .collect()
}

fn reference_span(reference: &ReferencePosterior, dim: usize, bandwidth: f64) -> Option<(f64, f64)> {
    match reference {
        ReferencePosterior::NormalMixture { components } if dim == 0 => Some(
            components
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, m, s)| (lo.min(m - 6.0 * s), hi.max(m + 6.0 * s))),
        ),
        ReferencePosterior::Dirac { at } => at.get(dim).map(|c| (c - 6.0 * bandwidth, c + 6.0 * bandwidth)),
        _ => None,
    }
}

/// Runs every policy on the same seeds. When an adaptive policy is present
/// it runs first and its median total draws cap the other policies'
/// budgets. A failing policy is reported in its row; the rest continue.
pub fn compare_schedulers(config: &ExperimentConfig) -> Result<(ComparisonReport, Vec<Option<Experiment>>)> {
    config.validate()?;
    let policies = config.policy_list();
    if policies.len() < 2 {
        return Err(Error::Config("a comparison needs at least two policies".into()));
    }
    let model = config.model_spec()?;
    let mut order: Vec<usize> = (0..policies.len()).collect();
    order.sort_by_key(|&i| !matches!(policies[i], SchedulerPolicy::Adaptive { .. }));
    let mut results: Vec<Option<Result<Experiment>>> = (0..policies.len()).map(|_| None).collect();
    let mut matched: Option<u64> = None;
    for i in order {
        let policy = &policies[i];
        let adaptive = matches!(policy, SchedulerPolicy::Adaptive { .. });
        let budget = if adaptive {
            config.draw_budget
        } else {
            match (matched, config.draw_budget) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            }
        };
        let outcome = replicate(&model, config, policy, budget);
        if adaptive && matched.is_none() {
            if let Ok(exp) = &outcome {
                matched = Some(exp.report.total_draws);
            }
        }
        results[i] = Some(outcome);
    }
    let mut rows = Vec::new();
    let mut experiments = Vec::new();
    for (policy, result) in policies.iter().zip(results) {
        match result.expect("every policy ran") {
            Ok(exp) => {
                rows.push(PolicyRow { label: policy.label(), report: Some(exp.report.clone()), error: None });
                experiments.push(Some(exp));
            }
            Err(e) => {
                rows.push(PolicyRow { label: policy.label(), report: None, error: Some(e.to_string()) });
                experiments.push(None);
            }
        }
    }
    let report = ComparisonReport { model: model.name.clone(), rows };
    if let Some(dir) = &config.out_dir {
        for (i, exp) in experiments.iter().enumerate() {
            if let Some(exp) = exp {
                write_experiment(exp, &model, config, &dir.join(format!("{:02}-{}", i, policies[i].label())))?;
            }
        }
        write_report(&report, dir, config.export.hellinger_table)?;
    }
    Ok((report, experiments))
}

/// How a KDE export grid is chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum GridSpec {
    /// Equispaced points covering every iteration's `[min - 3h, max + 3h]`.
    Auto { points: usize },
    Explicit(Vec<f64>),
}

/// Weighted marginal KDE of dimension `dim` for every iteration of `trace`,
/// on one shared grid.
pub fn kde_grid(trace: &RunTrace, dim: usize, grid: &GridSpec) -> Result<Vec<(u32, GriddedDensity)>> {
    if trace.records.is_empty() {
        return Err(Error::invalid("trace has no iterations"));
    }
    let p = trace.final_system().dim();
    if dim >= p {
        return Err(Error::invalid(format!("dimension {dim} out of range for {p} parameters")));
    }
    let kdes: Vec<(u32, Kde1D)> = trace
        .records
        .iter()
        .map(|r| Ok((r.t, Kde1D::silverman(r.particles.coordinate(dim), &r.particles.weights())?)))
        .collect::<Result<_>>()?;
    let points = match grid {
        GridSpec::Explicit(g) => g.clone(),
        GridSpec::Auto { points } => {
            let refs: Vec<&Kde1D> = kdes.iter().map(|(_, k)| k).collect();
            crate::density::union_grid(&refs, *points)
        }
    };
    kdes.iter().map(|(t, k)| Ok((*t, k.evaluate(&points)?))).collect()
}

/// Writes [`kde_grid`] as CSV with columns `iteration, x, density`.
pub fn export_kde_grid(trace: &RunTrace, dim: usize, grid: &GridSpec, path: impl AsRef<Path>) -> Result<()> {
    let blocks = kde_grid(trace, dim, grid)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "x", "density"])?;
    for (t, density) in &blocks {
        for (x, v) in density.grid().iter().zip(density.values()) {
            w.write_record([t.to_string(), fmt_f64(*x), fmt_f64(*v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row of a particle CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleRow {
    pub iteration: u32,
    pub index: usize,
    pub theta: Vec<f64>,
    pub weight: f64,
    pub distance: f64,
}

/// Writes every iteration's particles with columns
/// `iteration, particle_index, theta_1..theta_p, weight, distance`.
pub fn write_particles_csv(trace: &RunTrace, path: impl AsRef<Path>) -> Result<()> {
    let p = trace.final_system().dim();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["iteration".to_string(), "particle_index".to_string()];
    header.extend((1..=p).map(|j| format!("theta_{j}")));
    header.extend(["weight".to_string(), "distance".to_string()]);
    w.write_record(&header)?;
    for r in &trace.records {
        for (i, particle) in r.particles.particles().iter().enumerate() {
            let mut row = vec![r.t.to_string(), i.to_string()];
            row.extend(particle.theta.iter().map(|&x| fmt_f64(x)));
            row.push(fmt_f64(particle.weight));
            row.push(fmt_f64(particle.distance));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_particles_csv(path: impl AsRef<Path>) -> Result<Vec<ParticleRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let width = r.headers()?.len();
    if width < 5 {
        return Err(Error::invalid("particle CSV needs at least five columns"));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let int = |i: usize| -> Result<u64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::invalid("bad integer field in particle CSV"))
        };
        let theta = (2..width - 2).map(|i| parse_f64(rec.get(i))).collect::<Result<_>>()?;
        out.push(ParticleRow {
            iteration: int(0)? as u32,
            index: int(1)? as usize,
            theta,
            weight: parse_f64(rec.get(width - 2))?,
            distance: parse_f64(rec.get(width - 1))?,
        });
    }
    Ok(out)
}

/// Writes `(iteration, tolerance, acceptance_rate)` rows for every TAR
/// decision in `trace`. Returns whether any curve was present.
pub fn write_tar_csv(trace: &RunTrace, path: impl AsRef<Path>) -> Result<bool> {
    let curves: Vec<_> = trace
        .records
        .iter()
        .filter_map(|r| r.tar_curve.as_ref().map(|c| (r.t, c)))
        .collect();
    if curves.is_empty() {
        return Ok(false);
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "tolerance", "acceptance_rate"])?;
    for (t, curve) in curves {
        for (eps, rate) in curve {
            w.write_record([t.to_string(), fmt_f64(*eps), fmt_f64(*rate)])?;
        }
    }
    w.flush()?;
    Ok(true)
}

/// Per-run record without particles.
#[derive(Serialize)]
struct RunSummary<'a> {
    model: &'a str,
    policy: &'a str,
    seed: u64,
    stop: &'a StopReason,
    total_draws: u64,
    wall_time: f64,
    iterations: Vec<IterationSummary>,
}

#[derive(Serialize)]
struct IterationSummary {
    t: u32,
    epsilon: f64,
    q_used: Option<f64>,
    c_hat: Option<f64>,
    draws: u64,
    out_of_support: u64,
    acceptance_rate: f64,
    ess: f64,
    wall_time: f64,
}

fn write_run_summary(trace: &RunTrace, path: &Path) -> Result<()> {
    let summary = RunSummary {
        model: &trace.model,
        policy: &trace.policy,
        seed: trace.seed,
        stop: &trace.stop,
        total_draws: trace.total_draws,
        wall_time: trace.wall_time,
        iterations: trace
            .records
            .iter()
            .map(|r| IterationSummary {
                t: r.t,
                epsilon: r.epsilon,
                q_used: r.q_used,
                c_hat: r.c_hat,
                draws: r.draws,
                out_of_support: r.out_of_support,
                acceptance_rate: r.acceptance_rate,
                ess: r.ess,
                wall_time: r.wall_time,
            })
            .collect(),
    };
    fs::write(path, serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

fn write_experiment(exp: &Experiment, model: &ModelSpec, config: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for trace in &exp.traces {
        let run_dir = dir.join(format!("run-{}", trace.seed));
        fs::create_dir_all(&run_dir)?;
        write_run_summary(trace, &run_dir.join("summary.json"))?;
        if config.export.particles {
            write_particles_csv(trace, run_dir.join("particles.csv"))?;
        }
        if config.export.tar_curves {
            write_tar_csv(trace, run_dir.join("tar.csv"))?;
        }
    }
    let median = exp.median_trace();
    if config.export.kde_grids {
        for j in 0..model.prior.dims().len() {
            export_kde_grid(median, j, &GridSpec::Auto { points: config.export.grid_points }, dir.join(format!("kde_theta_{}.csv", j + 1)))?;
        }
    }
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&exp.report)?)?;
    Ok(())
}

/// Writes `comparison.json` and, if asked, `comparison.csv` into `dir`.
pub fn write_report(report: &ComparisonReport, dir: &Path, table: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("comparison.json"), serde_json::to_string_pretty(report)?)?;
    if table {
        let mut f = fs::File::create(dir.join("comparison.csv"))?;
        f.write_all(comparison_csv(report).as_bytes())?;
    }
    Ok(())
}

/// Side-by-side table, one row per policy.
pub fn comparison_csv(report: &ComparisonReport) -> String {
    let p = report
        .rows
        .iter()
        .filter_map(|r| r.report.as_ref().map(|r| r.hellinger.len()))
        .max()
        .unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["policy", "median_seed", "iterations", "total_draws", "final_epsilon", "wall_time"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=p).map(|j| format!("hellinger_{j}")));
    header.push("error".into());
    w.write_record(&header).expect("in-memory write");
    for row in &report.rows {
        let mut rec = vec![row.label.clone()];
        match &row.report {
            Some(r) => {
                rec.extend([
                    r.median_seed.to_string(),
                    r.iterations.to_string(),
                    r.total_draws.to_string(),
                    fmt_f64(r.final_epsilon),
                    fmt_f64(r.wall_time),
                ]);
                rec.extend((0..p).map(|j| r.hellinger.get(j).map(|h| fmt_f64(*h)).unwrap_or_default()));
            }
            None => rec.extend(std::iter::repeat_n(String::new(), 5 + p)),
        }
        rec.push(row.error.clone().unwrap_or_default());
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
}

/// Prints a comparison as an aligned text table.
pub fn format_report(report: &ComparisonReport) -> String {
    let mut out = format!("model: {}\n", report.model);
    out.push_str(&format!(
        "{:<24} {:>5} {:>12} {:>12} {:>10} {:>10}  {}\n",
        "policy", "T", "total draws", "final eps", "time (s)", "median", "hellinger"
    ));
    for row in &report.rows {
        match &row.report {
            Some(r) => {
                let h: Vec<String> = r.hellinger.iter().map(|h| format!("{h:.3}")).collect();
                out.push_str(&format!(
                    "{:<24} {:>5} {:>12} {:>12.5} {:>10.2} {:>10}  {}\n",
                    row.label,
                    r.iterations,
                    r.total_draws,
                    r.final_epsilon,
                    r.wall_time,
                    r.median_seed,
                    h.join(" ")
                ));
                if let Some(w) = &r.warning {
                    out.push_str(&format!("  warning: {w}\n"));
                }
            }
            None => out.push_str(&format!("{:<24} failed: {}\n", row.label, row.error.as_deref().unwrap_or(""))),
        }
    }
    out
}
