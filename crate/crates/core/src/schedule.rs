//! Tolerance schedules and stopping decisions.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::models::ModelSpec;
use crate::particles::{ess, Parameter, ParticleSystem, PerturbationKernel, ProposalSampler};
use crate::ratio::{adaptive_quantile, kliep_fit, ratio_sup, RatioFitConfig};
use crate::rng::{stream_for, Domain, Streams};
use crate::{Error, Result};

fn default_q_stop() -> f64 {
    0.99
}

fn default_min_stop() -> u32 {
    3
}

fn default_tar_proposals() -> usize {
    1000
}

/// How the next tolerance is chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchedulerPolicy {
    /// Quantile `1 / sup r̂` of the current distances, where `r̂` estimates
    /// the ratio of the current to the previous posterior. Stops once that
    /// quantile exceeds `q_stop` after `min_stop_iteration` iterations.
    Adaptive {
        #[serde(default = "default_q_stop")]
        q_stop: f64,
        #[serde(default = "default_min_stop")]
        min_stop_iteration: u32,
        #[serde(default)]
        ratio: RatioFitConfig,
    },
    /// Preset tolerances; the first one seeds the initial population.
    FixedSequence { epsilons: Vec<f64> },
    /// A fixed quantile of the current distances.
    FixedQuantile { q: f64 },
    /// Smallest tolerance keeping `alpha` of the effective sample size.
    Ess { alpha: f64 },
    /// Elbow of a simulated threshold/acceptance-rate curve.
    Tar {
        grid_size: usize,
        replicates: usize,
        #[serde(default = "default_tar_proposals")]
        proposals_per_replicate: usize,
    },
}

impl SchedulerPolicy {
    pub fn adaptive() -> Self {
        SchedulerPolicy::Adaptive {
            q_stop: default_q_stop(),
            min_stop_iteration: default_min_stop(),
            ratio: RatioFitConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        match self {
            SchedulerPolicy::Adaptive { q_stop, ratio, .. } => {
                if !open_unit(*q_stop) {
                    return Err(Error::Config(format!("q_stop must lie in (0, 1), got {q_stop}")));
                }
                ratio.validate()
            }
            SchedulerPolicy::FixedSequence { epsilons } => {
                if epsilons.is_empty() || epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                    return Err(Error::Config("fixed sequence needs positive finite tolerances".into()));
                }
                if epsilons.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(Error::Config("fixed sequence must be strictly decreasing".into()));
                }
                Ok(())
            }
            SchedulerPolicy::FixedQuantile { q } if !open_unit(*q) => {
                Err(Error::Config(format!("fixed quantile must lie in (0, 1), got {q}")))
            }
            SchedulerPolicy::Ess { alpha } if !open_unit(*alpha) => {
                Err(Error::Config(format!("ESS fraction must lie in (0, 1), got {alpha}")))
            }
            SchedulerPolicy::Tar { grid_size, replicates, proposals_per_replicate } => {
                if *grid_size < 3 || *replicates == 0 || *proposals_per_replicate == 0 {
                    return Err(Error::Config("TAR needs >= 3 grid points and positive replicate sizes".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Short label used in reports.
    pub fn label(&self) -> String {
        match self {
            SchedulerPolicy::Adaptive { .. } => "adaptive".into(),
            SchedulerPolicy::FixedSequence { .. } => "fixed-sequence".into(),
            SchedulerPolicy::FixedQuantile { q } => format!("fixed-quantile-{q}"),
            SchedulerPolicy::Ess { alpha } => format!("ess-{alpha}"),
            SchedulerPolicy::Tar { .. } => "tar".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ScheduleDecision {
    Continue { next_epsilon: f64, q_used: Option<f64> },
    /// `q` is the quantile that triggered the stop, when there is one.
    Stop { reason: String, q: Option<f64> },
}

/// Empirical quantile with linear interpolation between order statistics
/// (1-based position `(n - 1) q + 1`).
pub fn distance_quantile(distances: &[f64], q: f64) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::invalid("distance quantile of an empty sample"));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::invalid(format!("quantile level {q} outside (0, 1]")));
    }
    let mut d = distances.to_vec();
    d.sort_by(f64::total_cmp);
    let pos = (d.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    if lo + 1 >= d.len() {
        return Ok(d[d.len() - 1]);
    }
    let frac = pos - lo as f64;
    Ok(d[lo] + frac * (d[lo + 1] - d[lo]))
}

/// Turns a proposed tolerance into one that strictly decreases. Proposals
/// at or above `current` fall back to the largest positive distance below
/// it; `None` when no such distance exists.
pub fn strictly_below(proposed: f64, current: f64, distances: &[f64]) -> Option<f64> {
    if proposed > 0.0 && proposed < current {
        return Some(proposed);
    }
    distances
        .iter()
        .copied()
        .filter(|&d| d > 0.0 && d < current)
        .max_by(f64::total_cmp)
}

/// Outcome of one adaptive step.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveStep {
    pub c_hat: f64,
    pub q: f64,
    pub decision: ScheduleDecision,
}

/// Adaptive rule after `completed` iterations. `prev` samples the previous
/// posterior (the prior after initialization), `curr` the current one.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_next(
    prev: &[Parameter],
    curr: &[Parameter],
    curr_distances: &[f64],
    current_epsilon: f64,
    q_stop: f64,
    min_stop_iteration: u32,
    completed: u32,
    ratio: &RatioFitConfig,
    seed: u64,
) -> Result<AdaptiveStep> {
    if prev.is_empty() || curr.is_empty() {
        return Err(Error::invalid("adaptive step needs both posterior samples"));
    }
    let model = kliep_fit(curr, prev, ratio, seed)?;
    let p = curr[0].len();
    let bounds: Vec<(f64, f64)> = (0..p)
        .map(|j| {
            prev.iter()
                .chain(curr)
                .map(|t| t[j])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
        })
        .collect();
    let c_hat = ratio_sup(&model, &bounds)?;
    let q = adaptive_quantile(c_hat);
    let decision = if q > q_stop && completed >= min_stop_iteration {
        ScheduleDecision::Stop { reason: format!("quantile {q:.4} exceeds {q_stop}"), q: Some(q) }
    } else {
        let proposed = distance_quantile(curr_distances, q)?;
        match strictly_below(proposed, current_epsilon, curr_distances) {
            Some(e) => ScheduleDecision::Continue { next_epsilon: e, q_used: Some(q) },
            None => ScheduleDecision::Stop { reason: "tolerance cannot decrease further".into(), q: Some(q) },
        }
    };
    Ok(AdaptiveStep { c_hat, q, decision })
}

/// Result of the ESS rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EssStep {
    pub epsilon: f64,
    /// Set when the target ESS is below one, so any single particle meets it.
    pub flagged: bool,
}

/// Smallest `ε'` whose truncated, renormalized weights keep an ESS of at
/// least `alpha` times the current ESS.
///
/// The truncated ESS is not monotone in `ε'`, so the bisection runs on its
/// running maximum over the sorted distances; the first crossing of that
/// envelope is the first crossing of the ESS itself.
pub fn ess_next(weights: &[f64], distances: &[f64], alpha: f64) -> Result<EssStep> {
    if weights.is_empty() || weights.len() != distances.len() {
        return Err(Error::invalid("ESS rule needs matching weights and distances"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("ESS fraction {alpha} outside (0, 1]")));
    }
    let mut order: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
    if order.is_empty() {
        return Err(Error::DegenerateParticles);
    }
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]));
    // Prefix ESS at each distinct distance: (Σw)² / Σw².
    let mut levels: Vec<f64> = Vec::new();
    let mut envelope: Vec<f64> = Vec::new();
    let (mut s1, mut s2) = (0.0, 0.0);
    for (k, &i) in order.iter().enumerate() {
        s1 += weights[i];
        s2 += weights[i] * weights[i];
        let last_of_level = order.get(k + 1).is_none_or(|&j| distances[j] != distances[i]);
        if last_of_level {
            let e = s1 * s1 / s2;
            levels.push(distances[i]);
            envelope.push(envelope.last().map_or(e, |m: &f64| m.max(e)));
        }
    }
    let target = alpha * ess(weights);
    let flagged = target < 1.0;
    let mut lo = 0usize;
    let mut hi = levels.len() - 1;
    // Bisection for the first envelope value reaching the target; the
    // full set always reaches it since its ESS is the reference.
    while lo < hi {
        let mid = (lo + hi) / 2;
        if envelope[mid] >= target * (1.0 - 1e-12) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let epsilon = levels[lo..]
        .iter()
        .copied()
        .find(|&d| d > 0.0)
        .ok_or_else(|| Error::invalid("all distances are zero"))?;
    Ok(EssStep { epsilon, flagged })
}

/// Monte Carlo threshold/acceptance-rate curve from the current system.
///
/// Each replicate draws `proposals` perturbed particles, simulates them and
/// records, per grid tolerance, the fraction of simulated distances within
/// it. Out-of-support proposals are skipped. Rates are averaged over
/// replicates, so the curve is non-decreasing in the tolerance.
pub fn tar_curve(
    system: &ParticleSystem,
    kernel: &PerturbationKernel,
    model: &ModelSpec,
    grid: &[f64],
    replicates: usize,
    proposals: usize,
    streams: Streams,
) -> Result<Vec<(f64, f64)>> {
    if grid.is_empty() || replicates == 0 || proposals == 0 {
        return Err(Error::invalid("TAR curve needs a grid and positive replicate sizes"));
    }
    let sampler = ProposalSampler::new(system, kernel)?;
    let t = u64::from(system.iteration());
    let per_rep: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let mut rng = streams.stream(Domain::Tar, t, r as u64);
            let mut d = Vec::with_capacity(proposals);
            for _ in 0..proposals {
                let theta = sampler.draw(&mut rng);
                if !model.prior.in_support(&theta) {
                    continue;
                }
                let y = model.simulate(&theta, &mut rng)?;
                let dist = model.distance(&y);
                if dist.is_nan() {
                    return Err(Error::SimulatorFailure { theta: theta.into_inner(), retries: 0 });
                }
                d.push(dist);
            }
            d.sort_by(f64::total_cmp);
            let n = d.len().max(1) as f64;
            Ok(grid.iter().map(|&e| d.partition_point(|&x| x <= e) as f64 / n).collect())
        })
        .collect::<Result<_>>()?;
    Ok(grid
        .iter()
        .enumerate()
        .map(|(g, &e)| (e, per_rep.iter().map(|r| r[g]).sum::<f64>() / replicates as f64))
        .collect())
}

/// Grid of `n` tolerances spaced evenly inside `(0, epsilon)`.
pub fn tar_grid(epsilon: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|i| epsilon * i as f64 / (n + 1) as f64).collect()
}

/// Elbow of a curve: after min-max scaling both axes, the point farthest
/// from the chord joining the endpoints. `None` when that distance is
/// below 0.01.
pub fn tar_elbow(curve: &[(f64, f64)]) -> Result<Option<f64>> {
    if curve.len() < 3 {
        return Err(Error::invalid("elbow detection needs at least three points"));
    }
    if curve.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::invalid("curve tolerances must be increasing"));
    }
    let scale = |vals: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = vals.collect();
        let (lo, hi) = crate::density::min_max(&v);
        let span = hi - lo;
        v.into_iter().map(|x| if span > 0.0 { (x - lo) / span } else { 0.0 }).collect::<Vec<_>>()
    };
    let xs = scale(&mut curve.iter().map(|c| c.0));
    let ys = scale(&mut curve.iter().map(|c| c.1));
    let n = curve.len();
    let (dx, dy) = (xs[n - 1] - xs[0], ys[n - 1] - ys[0]);
    let norm = (dx * dx + dy * dy).sqrt();
    if norm == 0.0 {
        return Ok(None);
    }
    let (mut best, mut best_d) = (0, 0.0);
    for i in 1..n - 1 {
        let d = (dx * (ys[i] - ys[0]) - dy * (xs[i] - xs[0])).abs() / norm;
        if d > best_d {
            (best, best_d) = (i, d);
        }
    }
    Ok(if best_d < 0.01 { None } else { Some(curve[best].0) })
}

/// Everything a policy may consult at the end of an iteration.
pub struct ScheduleContext<'a> {
    pub current: &'a ParticleSystem,
    /// Previous posterior sample, or the prior draws after initialization.
    pub previous: &'a [Parameter],
    /// Iterations completed so far, initialization included.
    pub completed: u32,
    pub model: &'a ModelSpec,
    pub kernel: &'a PerturbationKernel,
    pub streams: Streams,
}

/// Diagnostics emitted alongside a decision.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DecisionInfo {
    pub c_hat: Option<f64>,
    pub ess_flagged: bool,
    pub tar_curve: Option<Vec<(f64, f64)>>,
}

pub fn decide(policy: &SchedulerPolicy, ctx: &ScheduleContext) -> Result<(ScheduleDecision, DecisionInfo)> {
    let eps = ctx.current.tolerance();
    let distances = ctx.current.distances();
    let mut info = DecisionInfo::default();
    let cont_or_stop = |proposed: f64, q: Option<f64>| match strictly_below(proposed, eps, &distances) {
        Some(e) => ScheduleDecision::Continue { next_epsilon: e, q_used: q },
        None => ScheduleDecision::Stop { reason: "tolerance cannot decrease further".into(), q },
    };
    let decision = match policy {
        SchedulerPolicy::Adaptive { q_stop, min_stop_iteration, ratio } => {
            let seed = stream_for(ctx.streams.seed(), Domain::RatioFit, u64::from(ctx.completed), 0).next_u64();
            let step = adaptive_next(
                ctx.previous,
                &ctx.current.thetas(),
                &distances,
                eps,
                *q_stop,
                *min_stop_iteration,
                ctx.completed,
                ratio,
                seed,
            )?;
            info.c_hat = Some(step.c_hat);
            step.decision
        }
        SchedulerPolicy::FixedSequence { epsilons } => match epsilons.get(ctx.completed as usize) {
            Some(&e) if e < eps => ScheduleDecision::Continue { next_epsilon: e, q_used: None },
            Some(&e) => {
                return Err(Error::Config(format!("fixed tolerance {e} does not decrease below {eps}")));
            }
            None => ScheduleDecision::Stop { reason: "fixed sequence exhausted".into(), q: None },
        },
        SchedulerPolicy::FixedQuantile { q } => cont_or_stop(distance_quantile(&distances, *q)?, Some(*q)),
        SchedulerPolicy::Ess { alpha } => {
            let step = ess_next(&ctx.current.weights(), &distances, *alpha)?;
            info.ess_flagged = step.flagged;
            cont_or_stop(step.epsilon, None)
        }
        SchedulerPolicy::Tar { grid_size, replicates, proposals_per_replicate } => {
            let curve = tar_curve(
                ctx.current,
                ctx.kernel,
                ctx.model,
                &tar_grid(eps, *grid_size),
                *replicates,
                *proposals_per_replicate,
                ctx.streams,
            )?;
            let elbow = tar_elbow(&curve)?;
            info.tar_curve = Some(curve);
            match elbow {
                Some(e) => cont_or_stop(e, None),
                None => ScheduleDecision::Stop { reason: "TAR curve has no elbow".into(), q: None },
            }
        }
    };
    Ok((decision, info))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn quantile_examples() {
        let d = [4.0, 2.0, 1.0, 3.0];
        assert_eq!(distance_quantile(&d, 0.5).unwrap(), 2.5);
        assert_eq!(distance_quantile(&d, 0.25).unwrap(), 1.75);
        assert_eq!(distance_quantile(&d, 1.0).unwrap(), 4.0);
        assert!(distance_quantile(&[], 0.5).is_err());
        assert!(distance_quantile(&d, 0.0).is_err());
    }

    #[test]
    fn quantile_half_shrinks_tolerance() {
        let d = [1.0, 2.0, 3.0, 4.0];
        let next = strictly_below(distance_quantile(&d, 0.5).unwrap(), 4.0, &d).unwrap();
        assert_eq!(next, 2.5);
    }

    #[test]
    fn strict_decrease_fallback() {
        let d = [1.0, 2.0, 4.0];
        assert_eq!(strictly_below(4.0, 4.0, &d), Some(2.0));
        assert_eq!(strictly_below(1.0, 1.0, &[1.0, 1.0]), None);
    }

    fn normal_params(n: usize, mu: f64, sd: f64, seed: u64) -> Vec<Parameter> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let z: f64 = r.sample(StandardNormal);
                Parameter::from(vec![mu + sd * z])
            })
            .collect()
    }

    #[test]
    fn identical_samples_stop_from_third_iteration() {
        let s = normal_params(500, 0.0, 1.0, 1);
        let d: Vec<f64> = (1..=500).map(|i| i as f64 / 500.0).collect();
        let cfg = RatioFitConfig::default();
        let step = adaptive_next(&s, &s, &d, 1.0, 0.99, 3, 3, &cfg, 7).unwrap();
        assert!(step.q > 0.9, "q = {}", step.q);
        let early = adaptive_next(&s, &s, &d, 1.0, 0.99, 3, 2, &cfg, 7).unwrap();
        assert!(matches!(early.decision, ScheduleDecision::Continue { .. }));
    }

    #[test]
    fn shrinking_posterior_gives_small_quantile() {
        let prev = normal_params(1000, 0.0, 2.0, 2);
        let curr = normal_params(1000, 0.0, 0.5, 3);
        let d: Vec<f64> = (1..=1000).map(|i| i as f64 / 1000.0).collect();
        let step = adaptive_next(&prev, &curr, &d, 1.0, 0.99, 3, 1, &RatioFitConfig::default(), 5).unwrap();
        // true ratio sup is 4
        assert!(step.c_hat > 2.5 && step.c_hat < 6.0, "c = {}", step.c_hat);
        match step.decision {
            ScheduleDecision::Continue { next_epsilon, q_used } => {
                assert!(next_epsilon < 1.0);
                assert_eq!(q_used, Some(step.q));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ess_examples() {
        let s = ess_next(&[0.25; 4], &[1.0, 2.0, 3.0, 4.0], 0.5).unwrap();
        assert_eq!(s, EssStep { epsilon: 2.0, flagged: false });
        let s = ess_next(&[0.25; 4], &[1.0, 2.0, 3.0, 4.0], 1.0).unwrap();
        assert_eq!(s.epsilon, 4.0);
        let s = ess_next(&[0.0, 1.0, 0.0], &[1.0, 2.5, 3.0], 0.5).unwrap();
        assert_eq!(s.epsilon, 2.5);
        assert!(s.flagged);
    }

    #[test]
    fn ess_handles_non_monotone_prefixes() {
        // Prefix ESS is 1, 2, then drops to 1/0.66 once the heavy particle
        // enters. The first prefix reaching the full-set ESS is the second.
        let w = [0.1, 0.1, 0.8];
        let d = [1.0, 2.0, 3.0];
        assert_eq!(ess_next(&w, &d, 1.0).unwrap().epsilon, 2.0);
        assert_eq!(ess_next(&w, &d, 0.9).unwrap().epsilon, 2.0);
    }

    #[test]
    fn elbow_examples() {
        let l = [(0.0, 0.0), (1.0, 0.05), (2.0, 0.1), (2.2, 0.9), (3.0, 1.0)];
        assert_eq!(tar_elbow(&l).unwrap(), Some(2.0));
        let line: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 0.1 * i as f64)).collect();
        assert_eq!(tar_elbow(&line).unwrap(), None);
        assert!(tar_elbow(&l[..2]).is_err());
    }

    #[test]
    fn elbow_of_step_curve_is_corner() {
        // Flat at zero, then a jump at 5: the first point after the jump
        // sits farthest above the chord.
        let c: Vec<(f64, f64)> = (1..=10).map(|i| (i as f64, if i < 5 { 0.0 } else { 1.0 })).collect();
        assert_eq!(tar_elbow(&c).unwrap(), Some(5.0));
    }

    #[test]
    fn policy_validation() {
        assert!(SchedulerPolicy::FixedSequence { epsilons: vec![1.0, 1.0] }.validate().is_err());
        assert!(SchedulerPolicy::FixedQuantile { q: 1.0 }.validate().is_err());
        assert!(SchedulerPolicy::Ess { alpha: 0.0 }.validate().is_err());
        assert!(SchedulerPolicy::adaptive().validate().is_ok());
        let json = r#"{"kind":"adaptive"}"#;
        assert_eq!(serde_json::from_str::<SchedulerPolicy>(json).unwrap(), SchedulerPolicy::adaptive());
    }

    fn brute_ess(weights: &[f64], distances: &[f64], alpha: f64) -> f64 {
        let target = alpha * ess(weights);
        let mut cands: Vec<f64> = distances.iter().zip(weights).filter(|(_, w)| **w > 0.0).map(|(d, _)| *d).collect();
        cands.sort_by(f64::total_cmp);
        for &e in &cands {
            let (s1, s2) = distances
                .iter()
                .zip(weights)
                .filter(|(d, _)| **d <= e)
                .fold((0.0, 0.0), |(a, b), (_, w)| (a + w, b + w * w));
            if s2 > 0.0 && s1 * s1 / s2 >= target * (1.0 - 1e-12) && e > 0.0 {
                return e;
            }
        }
        unreachable!("the full set meets its own ESS")
    }

    proptest! {
        #[test]
        fn quantile_monotone_in_q(
            d in prop::collection::vec(0.0f64..100.0, 1..50),
            a in 0.01f64..1.0, b in 0.01f64..1.0,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(distance_quantile(&d, lo).unwrap() <= distance_quantile(&d, hi).unwrap());
        }

        #[test]
        fn ess_matches_enumeration(
            raw in prop::collection::vec(0u32..10, 1..=12),
            dist in prop::collection::vec(1u32..20, 12),
            alpha in 0.05f64..1.0,
        ) {
            prop_assume!(raw.iter().any(|&w| w > 0));
            let total: f64 = raw.iter().map(|&w| w as f64).sum();
            let w: Vec<f64> = raw.iter().map(|&x| x as f64 / total).collect();
            let d: Vec<f64> = dist[..w.len()].iter().map(|&x| x as f64).collect();
            prop_assert_eq!(ess_next(&w, &d, alpha).unwrap().epsilon, brute_ess(&w, &d, alpha));
        }

        #[test]
        fn elbow_lies_on_grid(ys in prop::collection::vec(0.0f64..1.0, 3..30)) {
            let mut ys = ys;
            ys.sort_by(f64::total_cmp);
            let c: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, &y)| (i as f64 + 1.0, y)).collect();
            if let Some(e) = tar_elbow(&c).unwrap() {
                prop_assert!(c[1..c.len() - 1].iter().any(|p| p.0 == e));
            }
        }
    }
}
