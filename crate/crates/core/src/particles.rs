//! Particle-system state shared by every sampler: priors, weighted
//! particles, perturbation kernels, importance weights and moments.
//!
//! The perturbation kernel is diagonal. Each coordinate gets its own
//! variance `tau_j^2 = 2 * var_w(theta_j)`, where `var_w` is the weighted
//! population variance `sum_i W_i (theta_ij - mu_j)^2` without the
//! small-sample correction.

use std::f64::consts::PI;
use std::ops::Deref;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Point in parameter space, in model units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Parameter(Vec<f64>);

impl Parameter {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("parameter must have at least one coordinate"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite parameter {values:?}")));
        }
        Ok(Self(values))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Parameter {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Parameter {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

/// One coordinate of a product prior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorDim {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, variance: f64 },
}

impl PriorDim {
    fn validate(&self) -> Result<()> {
        match *self {
            PriorDim::Uniform { lo, hi } if lo.is_finite() && hi.is_finite() && lo < hi => Ok(()),
            PriorDim::Normal { mean, variance } if mean.is_finite() && variance > 0.0 && variance.is_finite() => Ok(()),
            other => Err(Error::invalid(format!("invalid prior {other:?}"))),
        }
    }

    pub fn ln_density(&self, x: f64) -> f64 {
        match *self {
            PriorDim::Uniform { lo, hi } => {
                if (lo..=hi).contains(&x) {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            PriorDim::Normal { mean, variance } => {
                let z = x - mean;
                -LN_SQRT_2PI - 0.5 * variance.ln() - 0.5 * z * z / variance
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            PriorDim::Uniform { lo, hi } => rng.random_range(lo..hi),
            PriorDim::Normal { mean, variance } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + variance.sqrt() * z
            }
        }
    }

    /// Finite `(lo, hi)` range holding essentially all prior mass.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            PriorDim::Uniform { lo, hi } => (lo, hi),
            PriorDim::Normal { mean, variance } => {
                let sd = variance.sqrt();
                (mean - 8.0 * sd, mean + 8.0 * sd)
            }
        }
    }
}

/// Product prior over all parameter coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Prior {
    dims: Vec<PriorDim>,
}

impl Prior {
    pub fn new(dims: Vec<PriorDim>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::invalid("prior needs at least one dimension"));
        }
        for d in &dims {
            d.validate()?;
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[PriorDim] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn ln_density(&self, theta: &[f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.dims.len());
        self.dims
            .iter()
            .zip(theta)
            .map(|(d, &x)| d.ln_density(x))
            .sum()
    }

    /// Density at `theta`; zero outside the support.
    pub fn density(&self, theta: &[f64]) -> f64 {
        self.ln_density(theta).exp()
    }

    pub fn in_support(&self, theta: &[f64]) -> bool {
        self.ln_density(theta) > f64::NEG_INFINITY
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Parameter {
        Parameter(self.dims.iter().map(|d| d.sample(rng)).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedParticle {
    pub theta: Parameter,
    pub weight: f64,
    pub distance: f64,
}

/// The sampler state after one iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleSystem {
    particles: Vec<WeightedParticle>,
    tolerance: f64,
    iteration: u32,
    kernel_variance: Vec<f64>,
}

impl ParticleSystem {
    /// Checks every invariant: at least two particles of one common
    /// dimension, non-negative weights summing to one within 1e-12,
    /// finite distances no larger than the tolerance.
    pub fn new(
        particles: Vec<WeightedParticle>,
        tolerance: f64,
        iteration: u32,
        kernel_variance: Vec<f64>,
    ) -> Result<Self> {
        if particles.len() < 2 {
            return Err(Error::invalid("a particle system needs at least two particles"));
        }
        if !(tolerance > 0.0 && tolerance.is_finite()) {
            return Err(Error::invalid(format!("tolerance must be positive and finite, got {tolerance}")));
        }
        if iteration < 1 {
            return Err(Error::invalid("iterations are numbered from 1"));
        }
        let p = particles[0].theta.len();
        if p == 0 {
            return Err(Error::invalid("empty parameter"));
        }
        for (i, q) in particles.iter().enumerate() {
            if q.theta.len() != p {
                return Err(Error::invalid(format!("particle {i} has dimension {}, expected {p}", q.theta.len())));
            }
            if !(q.weight >= 0.0 && q.weight.is_finite()) {
                return Err(Error::invalid(format!("particle {i} has weight {}", q.weight)));
            }
            if !(q.distance >= 0.0 && q.distance <= tolerance) {
                return Err(Error::invalid(format!(
                    "particle {i} distance {} exceeds tolerance {tolerance}",
                    q.distance
                )));
            }
        }
        let total = stable_sum(particles.iter().map(|q| q.weight));
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        if kernel_variance.len() != p || kernel_variance.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("kernel variance must hold one non-negative entry per dimension"));
        }
        Ok(Self { particles, tolerance, iteration, kernel_variance })
    }

    pub fn particles(&self) -> &[WeightedParticle] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.particles[0].theta.len()
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn iteration(&self) -> u32 {
        self.iteration
    }

    /// Variance of the kernel that generated this system's proposals
    /// (zeros for the prior-sampled first iteration).
    pub fn kernel_variance(&self) -> &[f64] {
        &self.kernel_variance
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|q| q.weight).collect()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.particles.iter().map(|q| q.distance).collect()
    }

    pub fn thetas(&self) -> Vec<Parameter> {
        self.particles.iter().map(|q| q.theta.clone()).collect()
    }

    /// Values of coordinate `j` across particles.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.particles.iter().map(|q| q.theta[j]).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Per-dimension weighted mean and weighted population variance.
pub fn weighted_moments(system: &ParticleSystem) -> Moments {
    let p = system.dim();
    let mut mean = vec![0.0; p];
    for q in system.particles() {
        for (m, x) in mean.iter_mut().zip(q.theta.iter()) {
            *m += q.weight * x;
        }
    }
    let mut variance = vec![0.0; p];
    for q in system.particles() {
        for ((v, m), x) in variance.iter_mut().zip(&mean).zip(q.theta.iter()) {
            let d = x - m;
            *v += q.weight * d * d;
        }
    }
    Moments { mean, variance }
}

/// Gaussian kernel variance: twice the weighted variance, per dimension.
pub fn kernel_variance(system: &ParticleSystem) -> Result<Vec<f64>> {
    let Moments { variance, .. } = weighted_moments(system);
    if let Some(dimension) = variance.iter().position(|&v| v == 0.0) {
        return Err(Error::DegenerateKernel { dimension });
    }
    Ok(variance.into_iter().map(|v| 2.0 * v).collect())
}

/// How a resampled particle is moved before simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationKernel {
    /// Independent `N(0, variance_j)` noise per coordinate.
    Gaussian { variance: Vec<f64> },
    /// Independent `U(-half_width, half_width)` noise per coordinate.
    UniformAdditive { half_width: f64 },
}

impl PerturbationKernel {
    fn validate(&self, p: usize) -> Result<()> {
        match self {
            PerturbationKernel::Gaussian { variance } => {
                if variance.len() != p || variance.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return Err(Error::invalid(format!("bad Gaussian kernel variance {variance:?}")));
                }
            }
            PerturbationKernel::UniformAdditive { half_width } => {
                if !(*half_width > 0.0 && half_width.is_finite()) {
                    return Err(Error::invalid(format!("bad uniform kernel half width {half_width}")));
                }
            }
        }
        Ok(())
    }

    pub fn perturb<R: Rng + ?Sized>(&self, center: &[f64], rng: &mut R) -> Parameter {
        let values = match self {
            PerturbationKernel::Gaussian { variance } => center
                .iter()
                .zip(variance)
                .map(|(&c, &v)| {
                    let z: f64 = rng.sample(StandardNormal);
                    c + v.sqrt() * z
                })
                .collect(),
            PerturbationKernel::UniformAdditive { half_width } => center
                .iter()
                .map(|&c| c + rng.random_range(-half_width..*half_width))
                .collect(),
        };
        Parameter(values)
    }

    /// Log kernel density of moving `from` to `to`.
    pub fn ln_density(&self, from: &[f64], to: &[f64]) -> f64 {
        match self {
            PerturbationKernel::Gaussian { variance } => from
                .iter()
                .zip(to)
                .zip(variance)
                .map(|((&a, &b), &v)| {
                    let z = (b - a) / v.sqrt();
                    -LN_SQRT_2PI - 0.5 * v.ln() - 0.5 * z * z
                })
                .sum(),
            PerturbationKernel::UniformAdditive { half_width } => {
                if from.iter().zip(to).all(|(a, b)| (b - a).abs() <= *half_width) {
                    -(from.len() as f64) * (2.0 * half_width).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

/// Weighted selection from a particle system followed by perturbation.
#[derive(Clone, Debug)]
pub struct ProposalSampler<'a> {
    system: &'a ParticleSystem,
    kernel: &'a PerturbationKernel,
    index: WeightedIndex<f64>,
}

impl<'a> ProposalSampler<'a> {
    pub fn new(system: &'a ParticleSystem, kernel: &'a PerturbationKernel) -> Result<Self> {
        kernel.validate(system.dim())?;
        let index = WeightedIndex::new(system.particles().iter().map(|q| q.weight))
            .map_err(|_| Error::DegenerateParticles)?;
        Ok(Self { system, kernel, index })
    }

    /// Index of a particle chosen with probability proportional to weight.
    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.index.sample(rng)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Parameter {
        let i = self.select(rng);
        self.kernel.perturb(&self.system.particles()[i].theta, rng)
    }
}

/// Draws one proposal: select by weight, then perturb. Out-of-support
/// results are returned as-is; they get prior density zero downstream.
pub fn resample_and_perturb<R: Rng + ?Sized>(
    system: &ParticleSystem,
    kernel: &PerturbationKernel,
    rng: &mut R,
) -> Result<Parameter> {
    Ok(ProposalSampler::new(system, kernel)?.draw(rng))
}

/// Log density of the mixture proposal `sum_K W_K K(theta_K -> theta)`.
/// Negative infinity when no previous particle can reach `theta`.
pub fn ln_proposal_density(theta: &[f64], prev: &ParticleSystem, kernel: &PerturbationKernel) -> f64 {
    match kernel {
        PerturbationKernel::UniformAdditive { half_width } => {
            let reach = stable_sum(prev.particles().iter().filter_map(|q| {
                (kernel.ln_density(&q.theta, theta) > f64::NEG_INFINITY).then_some(q.weight)
            }));
            if reach > 0.0 {
                reach.ln() - theta.len() as f64 * (2.0 * half_width).ln()
            } else {
                f64::NEG_INFINITY
            }
        }
        PerturbationKernel::Gaussian { .. } => log_sum_exp(
            prev.particles()
                .iter()
                .filter(|q| q.weight > 0.0)
                .map(|q| q.weight.ln() + kernel.ln_density(&q.theta, theta)),
        ),
    }
}

/// Unnormalized log importance weight `ln pi(theta) - ln q(theta)`.
/// Negative infinity outside the prior support or where the proposal
/// density vanishes.
pub fn ln_importance_weight(
    theta: &[f64],
    prev: &ParticleSystem,
    kernel: &PerturbationKernel,
    prior: &Prior,
) -> f64 {
    let lp = prior.ln_density(theta);
    if lp == f64::NEG_INFINITY {
        return lp;
    }
    let lq = ln_proposal_density(theta, prev, kernel);
    if lq == f64::NEG_INFINITY {
        return lq;
    }
    lp - lq
}

/// Unnormalized importance weight `pi(theta) / q(theta)`, or zero.
pub fn importance_weight(
    theta: &[f64],
    prev: &ParticleSystem,
    kernel: &PerturbationKernel,
    prior: &Prior,
) -> f64 {
    ln_importance_weight(theta, prev, kernel, prior).exp()
}

/// Rescales non-negative weights to sum to one.
pub fn normalize_weights(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::invalid("weights must be finite and non-negative"));
    }
    let total = stable_sum(raw.iter().copied());
    if !(total > 0.0) {
        return Err(Error::DegenerateParticles);
    }
    Ok(raw.iter().map(|w| w / total).collect())
}

/// Normalizes weights given in log space, shifting by the maximum first.
pub fn normalize_ln_weights(ln_raw: &[f64]) -> Result<Vec<f64>> {
    let max = ln_raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Err(Error::DegenerateParticles);
    }
    let shifted: Vec<f64> = ln_raw.iter().map(|l| (l - max).exp()).collect();
    normalize_weights(&shifted)
}

/// Effective sample size `1 / sum W^2` of normalized weights.
pub fn ess(weights: &[f64]) -> f64 {
    1.0 / stable_sum(weights.iter().map(|w| w * w))
}

/// Neumaier-compensated sum.
pub(crate) fn stable_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + stable_sum(values.map(|v| (v - max).exp())).ln()
}

/// Standard normal density.
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}
