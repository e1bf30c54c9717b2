//! The ABC-PMC driver.
//!
//! Proposals are indexed by a per-iteration attempt counter and each
//! attempt draws from its own random stream, so batches of attempts can be
//! simulated in parallel and then scanned in index order. The first `N`
//! acceptances in that order are kept and later ones discarded, which makes
//! a run independent of the number of workers.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::models::{KernelChoice, ModelSpec};
use crate::particles::{
    ess, kernel_variance, ln_importance_weight, normalize_ln_weights, Parameter, ParticleSystem, PerturbationKernel,
    ProposalSampler, WeightedParticle,
};
use crate::rng::{Domain, StreamRng, Streams};
use crate::schedule::{decide, ScheduleContext, ScheduleDecision, SchedulerPolicy};
use crate::{Error, Result};

fn default_attempt_budget() -> u64 {
    10_000_000
}

fn default_max_retries() -> u32 {
    10
}

fn default_max_iterations() -> u32 {
    50
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n_particles: usize,
    /// Prior draws per retained particle at initialization.
    pub oversample: usize,
    pub policy: SchedulerPolicy,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: u32,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool. Never affects results.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Attempts allowed per iteration before giving up.
    #[serde(default = "default_attempt_budget")]
    pub attempt_budget: u64,
    /// Cap on total simulated draws over the run, for budget-matched
    /// comparisons. An iteration that would exceed it is abandoned.
    #[serde(default)]
    pub draw_budget: Option<u64>,
    /// Simulator retries on non-finite output.
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
}

impl RunConfig {
    pub fn new(n_particles: usize, oversample: usize, policy: SchedulerPolicy, seed: u64) -> Self {
        Self {
            n_particles,
            oversample,
            policy,
            max_iterations: default_max_iterations(),
            seed,
            workers: None,
            attempt_budget: default_attempt_budget(),
            draw_budget: None,
            max_retries: default_max_retries(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(Error::Config("at least two particles are required".into()));
        }
        if self.oversample < 1 {
            return Err(Error::Config("oversampling factor must be at least 1".into()));
        }
        if self.max_iterations < 1 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("worker count must be positive".into()));
        }
        if self.attempt_budget < self.n_particles as u64 {
            return Err(Error::Config("attempt budget is smaller than the particle count".into()));
        }
        self.policy.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: u32,
    pub epsilon: f64,
    /// Quantile that set this iteration's tolerance.
    pub q_used: Option<f64>,
    /// Ratio supremum behind `q_used`, for the adaptive policy.
    pub c_hat: Option<f64>,
    /// `(tolerance, acceptance rate)` curve behind a TAR decision.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tar_curve: Option<Vec<(f64, f64)>>,
    /// Simulated proposals, `D_t`.
    pub draws: u64,
    /// Proposals rejected outside the prior support without simulation.
    pub out_of_support: u64,
    pub acceptance_rate: f64,
    pub ess: f64,
    pub wall_time: f64,
    pub particles: ParticleSystem,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopReason {
    /// The schedule asked to stop; `q` is the quantile behind the request.
    Schedule { reason: String, q: Option<f64> },
    MaxIterations,
    /// The next iteration would exceed the draw budget. Its partial draws
    /// are not part of the trace total.
    DrawBudget { discarded_draws: u64 },
    /// A later iteration failed; the trace holds everything before it.
    Failed { message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub model: String,
    pub policy: String,
    pub seed: u64,
    pub records: Vec<IterationRecord>,
    pub stop: StopReason,
    pub total_draws: u64,
    pub wall_time: f64,
}

impl RunTrace {
    pub fn succeeded(&self) -> bool {
        !matches!(self.stop, StopReason::Failed { .. })
    }

    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("a trace holds at least the initial iteration")
    }

    pub fn final_system(&self) -> &ParticleSystem {
        &self.last().particles
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_epsilon(&self) -> f64 {
        self.last().epsilon
    }

    /// Copy with every wall-clock field zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        let mut t = self.clone();
        t.wall_time = 0.0;
        for r in &mut t.records {
            r.wall_time = 0.0;
        }
        t
    }
}

/// Perturbation kernel for proposals drawn from `system`.
pub fn build_kernel(model: &ModelSpec, system: &ParticleSystem) -> Result<PerturbationKernel> {
    Ok(match &model.kernel {
        KernelChoice::Gaussian => PerturbationKernel::Gaussian { variance: kernel_variance(system)? },
        KernelChoice::UniformAdditive { half_width } => PerturbationKernel::UniformAdditive { half_width: *half_width },
    })
}

/// Simulates and measures the distance, retrying non-finite results on
/// fresh streams. `stream(r)` yields the stream for retry `r`.
fn simulate_distance(
    model: &ModelSpec,
    theta: &[f64],
    first: &mut StreamRng,
    stream: impl Fn(u32) -> StreamRng,
    max_retries: u32,
) -> Result<f64> {
    let mut retry = 0;
    loop {
        let y = if retry == 0 {
            model.simulate(theta, first)?
        } else {
            model.simulate(theta, &mut stream(retry))?
        };
        let d = if y.iter().any(|v| v.is_nan()) { f64::NAN } else { model.distance(&y) };
        if !d.is_nan() {
            return Ok(d);
        }
        if retry >= max_retries {
            return Err(Error::SimulatorFailure { theta: theta.to_vec(), retries: retry });
        }
        retry += 1;
    }
}

/// One attempt's result before acceptance is decided.
enum Attempt {
    OutOfSupport,
    Simulated { theta: Parameter, distance: f64 },
}

struct Harvest {
    accepted: Vec<(Parameter, f64)>,
    draws: u64,
    out_of_support: u64,
}

enum HarvestEnd {
    Done(Harvest),
    OverBudget { draws: u64 },
}

/// Runs attempts `0, 1, 2, ...` in parallel batches until `n` have
/// `distance <= epsilon`, committing acceptances in attempt order.
fn harvest(
    n: usize,
    epsilon: f64,
    attempt_budget: u64,
    draw_cap: Option<u64>,
    run_one: impl Fn(u64) -> Result<Attempt> + Sync,
) -> Result<HarvestEnd> {
    let mut accepted = Vec::with_capacity(n);
    let (mut draws, mut oos, mut next) = (0u64, 0u64, 0u64);
    let mut batch = n.max(1024) as u64;
    while accepted.len() < n {
        if next >= attempt_budget {
            return Err(Error::AcceptanceStarvation { epsilon, attempts: next, accepted: accepted.len() });
        }
        let end = (next + batch).min(attempt_budget);
        let results: Vec<Result<Attempt>> = (next..end).into_par_iter().map(&run_one).collect();
        for r in results {
            next += 1;
            match r? {
                Attempt::OutOfSupport => oos += 1,
                Attempt::Simulated { theta, distance } => {
                    if draw_cap.is_some_and(|cap| draws >= cap) {
                        return Ok(HarvestEnd::OverBudget { draws });
                    }
                    draws += 1;
                    if distance <= epsilon {
                        accepted.push((theta, distance));
                        if accepted.len() == n {
                            break;
                        }
                    }
                }
            }
        }
        // Size the next batch from the observed acceptance rate.
        let rate = accepted.len().max(1) as f64 / next as f64;
        let want = 1.25 * (n - accepted.len()) as f64 / rate;
        batch = want.clamp(256.0, 65536.0) as u64;
    }
    Ok(HarvestEnd::Done(Harvest { accepted, draws, out_of_support: oos }))
}

/// Result of initialization: the first system, its record, and the full
/// prior sample used as the reference density for the first adaptive step.
pub struct Initialized {
    pub system: ParticleSystem,
    pub record: IterationRecord,
    pub prior_sample: Vec<Parameter>,
}

fn uniform_system(accepted: Vec<(Parameter, f64)>, epsilon: f64) -> Result<ParticleSystem> {
    let n = accepted.len();
    let p = accepted.first().map_or(0, |(t, _)| t.len());
    let w = 1.0 / n as f64;
    let particles = accepted
        .into_iter()
        .map(|(theta, distance)| WeightedParticle { theta, weight: w, distance })
        .collect();
    ParticleSystem::new(particles, epsilon, 1, vec![0.0; p])
}

fn record(t: u32, system: ParticleSystem, draws: u64, oos: u64, started: Instant) -> IterationRecord {
    IterationRecord {
        t,
        epsilon: system.tolerance(),
        q_used: None,
        c_hat: None,
        tar_curve: None,
        draws,
        out_of_support: oos,
        acceptance_rate: system.len() as f64 / draws as f64,
        ess: ess(&system.weights()),
        wall_time: started.elapsed().as_secs_f64(),
        particles: system,
    }
}

/// First iteration. With a fixed sequence the first tolerance is applied
/// by rejection from the prior; otherwise `kN` prior draws are simulated
/// and the `N` closest kept, the farthest of them setting `ε₁`.
pub fn initialize(model: &ModelSpec, config: &RunConfig) -> Result<Initialized> {
    config.validate()?;
    let started = Instant::now();
    let streams = Streams::new(config.seed);
    let n = config.n_particles;
    let run_one = |i: u64| -> Result<Attempt> {
        let mut rng = streams.stream(Domain::Init, i, 0);
        let theta = model.prior.sample(&mut rng);
        let distance =
            simulate_distance(model, &theta, &mut rng, |r| streams.stream(Domain::Init, i, u64::from(r)), config.max_retries)?;
        Ok(Attempt::Simulated { theta, distance })
    };

    if let SchedulerPolicy::FixedSequence { epsilons } = &config.policy {
        let eps = epsilons[0];
        let h = match harvest(n, eps, config.attempt_budget, None, run_one)? {
            HarvestEnd::Done(h) => h,
            HarvestEnd::OverBudget { .. } => unreachable!("no draw cap at initialization"),
        };
        let system = uniform_system(h.accepted, eps)?;
        let prior_sample = system.thetas();
        return Ok(Initialized { system: system.clone(), record: record(1, system, h.draws, 0, started), prior_sample });
    }

    let total = (n * config.oversample) as u64;
    let draws: Vec<(Parameter, f64)> = (0..total)
        .into_par_iter()
        .map(|i| match run_one(i)? {
            Attempt::Simulated { theta, distance } => Ok((theta, distance)),
            Attempt::OutOfSupport => unreachable!("prior draws lie in the support"),
        })
        .collect::<Result<_>>()?;
    let prior_sample: Vec<Parameter> = draws.iter().map(|(t, _)| t.clone()).collect();
    let mut order: Vec<usize> = (0..draws.len()).collect();
    order.sort_by(|&a, &b| draws[a].1.total_cmp(&draws[b].1).then(a.cmp(&b)));
    order.truncate(n);
    let accepted: Vec<(Parameter, f64)> = order.iter().map(|&i| draws[i].clone()).collect();
    let eps = accepted.last().map(|a| a.1).unwrap_or(f64::NAN);
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!(
            "initial tolerance {eps} is not positive and finite; increase the oversampling factor"
        )));
    }
    let system = uniform_system(accepted, eps)?;
    Ok(Initialized { system: system.clone(), record: record(1, system, total, 0, started), prior_sample })
}

enum IterationEnd {
    Done(ParticleSystem, IterationRecord),
    OverBudget { draws: u64 },
}

/// One iteration `t >= 2` at tolerance `epsilon` from `prev`.
/// `draw_cap` limits this iteration's simulated draws.
fn iterate_capped(
    prev: &ParticleSystem,
    epsilon: f64,
    model: &ModelSpec,
    config: &RunConfig,
    draw_cap: Option<u64>,
) -> Result<IterationEnd> {
    if !(epsilon > 0.0 && epsilon < prev.tolerance()) {
        return Err(Error::invalid(format!(
            "tolerance {epsilon} must be positive and below the previous {}",
            prev.tolerance()
        )));
    }
    let started = Instant::now();
    let t = prev.iteration() + 1;
    let streams = Streams::new(config.seed);
    let kernel = build_kernel(model, prev)?;
    let sampler = ProposalSampler::new(prev, &kernel)?;
    let run_one = |a: u64| -> Result<Attempt> {
        let mut rng = streams.retry(u64::from(t), a, 0);
        let theta = sampler.draw(&mut rng);
        if !model.prior.in_support(&theta) {
            return Ok(Attempt::OutOfSupport);
        }
        let distance =
            simulate_distance(model, &theta, &mut rng, |r| streams.retry(u64::from(t), a, r), config.max_retries)?;
        Ok(Attempt::Simulated { theta, distance })
    };
    let h = match harvest(config.n_particles, epsilon, config.attempt_budget, draw_cap, run_one)? {
        HarvestEnd::Done(h) => h,
        HarvestEnd::OverBudget { draws } => return Ok(IterationEnd::OverBudget { draws }),
    };
    let ln_w: Vec<f64> = h
        .accepted
        .par_iter()
        .map(|(theta, _)| ln_importance_weight(theta, prev, &kernel, &model.prior))
        .collect();
    let weights = normalize_ln_weights(&ln_w)?;
    let tau2 = match &kernel {
        PerturbationKernel::Gaussian { variance } => variance.clone(),
        PerturbationKernel::UniformAdditive { half_width } => vec![half_width * half_width / 3.0; prev.dim()],
    };
    let particles = h
        .accepted
        .into_iter()
        .zip(weights)
        .map(|((theta, distance), weight)| WeightedParticle { theta, weight, distance })
        .collect();
    let system = ParticleSystem::new(particles, epsilon, t, tau2)?;
    let rec = record(t, system.clone(), h.draws, h.out_of_support, started);
    Ok(IterationEnd::Done(system, rec))
}

/// One iteration `t >= 2`: propose from `prev`, keep the first `N`
/// proposals within `epsilon`, and weight them by importance sampling.
pub fn iterate(
    prev: &ParticleSystem,
    epsilon: f64,
    model: &ModelSpec,
    config: &RunConfig,
) -> Result<(ParticleSystem, IterationRecord)> {
    match iterate_capped(prev, epsilon, model, config, None)? {
        IterationEnd::Done(s, r) => Ok((s, r)),
        IterationEnd::OverBudget { .. } => unreachable!("no draw cap"),
    }
}

/// Full run: initialize, then alternate schedule decisions and iterations
/// until the schedule stops, the iteration cap or draw budget is reached,
/// or an iteration fails. Only configuration and initialization errors are
/// returned as `Err`; later failures end the trace with
/// [`StopReason::Failed`].
pub fn run(model: &ModelSpec, config: &RunConfig) -> Result<RunTrace> {
    config.validate()?;
    match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {w} workers: {e}")))?
            .install(|| run_inner(model, config)),
        None => run_inner(model, config),
    }
}

fn run_inner(model: &ModelSpec, config: &RunConfig) -> Result<RunTrace> {
    let started = Instant::now();
    let streams = Streams::new(config.seed);
    let init = initialize(model, config)?;
    let mut total = init.record.draws;
    let mut records = vec![init.record];
    let mut system = init.system;
    let mut previous = init.prior_sample;
    let stop = loop {
        if records.len() as u32 >= config.max_iterations {
            break StopReason::MaxIterations;
        }
        if config.draw_budget.is_some_and(|cap| total >= cap) {
            break StopReason::DrawBudget { discarded_draws: 0 };
        }
        let step = build_kernel(model, &system).and_then(|kernel| {
            let ctx = ScheduleContext {
                current: &system,
                previous: &previous,
                completed: records.len() as u32,
                model,
                kernel: &kernel,
                streams,
            };
            decide(&config.policy, &ctx)
        });
        let (decision, info) = match step {
            Ok(d) => d,
            Err(e) => break StopReason::Failed { message: e.to_string() },
        };
        let (next, q) = match decision {
            ScheduleDecision::Stop { reason, q } => break StopReason::Schedule { reason, q },
            ScheduleDecision::Continue { next_epsilon, q_used } => (next_epsilon, q_used),
        };
        let cap = config.draw_budget.map(|c| c - total);
        match iterate_capped(&system, next, model, config, cap) {
            Ok(IterationEnd::Done(new, mut rec)) => {
                rec.q_used = q;
                rec.c_hat = info.c_hat;
                rec.tar_curve = info.tar_curve;
                total += rec.draws;
                records.push(rec);
                previous = system.thetas();
                system = new;
            }
            Ok(IterationEnd::OverBudget { draws }) => break StopReason::DrawBudget { discarded_draws: draws },
            Err(e) => break StopReason::Failed { message: e.to_string() },
        }
    };
    Ok(RunTrace {
        model: model.name.clone(),
        policy: config.policy.label(),
        seed: config.seed,
        records,
        stop,
        total_draws: total,
        wall_time: started.elapsed().as_secs_f64(),
    })
}
