//! Benchmark forward models, their distances and reference posteriors.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::density::{parse_f64, GriddedDensity};
use crate::particles::{std_normal_pdf, Prior, PriorDim};
use crate::rng::{stream_for, Domain, StreamRng};
use crate::{Error, Result};

/// A stochastic forward model together with its discrepancy measure.
pub trait Simulator: Send + Sync + fmt::Debug {
    /// Simulated data at `theta`. Non-finite entries signal a failed
    /// simulation; infinities are treated as an infinitely distant dataset.
    fn simulate(&self, theta: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>>;

    /// Discrepancy between two datasets.
    fn distance(&self, a: &[f64], b: &[f64]) -> f64;
}

/// Perturbation kernel family a model is run with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelChoice {
    /// Gaussian with twice the weighted particle variance.
    Gaussian,
    UniformAdditive { half_width: f64 },
}

/// Known posterior used to score final particle systems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferencePosterior {
    /// One-dimensional normal mixture, components `(weight, mean, sd)`.
    NormalMixture { components: Vec<(f64, f64, f64)> },
    /// Point mass. Its marginal is smoothed with the caller's bandwidth.
    Dirac { at: Vec<f64> },
}

impl ReferencePosterior {
    /// Marginal density of coordinate `dim` on `grid`. `bandwidth` is only
    /// used to smooth point masses.
    pub fn marginal(&self, dim: usize, grid: &[f64], bandwidth: f64) -> Result<GriddedDensity> {
        let values = match self {
            ReferencePosterior::NormalMixture { components } => {
                if dim != 0 {
                    return Err(Error::invalid(format!("mixture reference has no dimension {dim}")));
                }
                grid.iter().map(|&x| mixture_pdf(components, x)).collect()
            }
            ReferencePosterior::Dirac { at } => {
                let c = *at
                    .get(dim)
                    .ok_or_else(|| Error::invalid(format!("point-mass reference has no dimension {dim}")))?;
                if !(bandwidth > 0.0) {
                    return Err(Error::invalid("point-mass reference needs a positive bandwidth"));
                }
                grid.iter().map(|&x| std_normal_pdf((x - c) / bandwidth) / bandwidth).collect()
            }
        };
        GriddedDensity::new(grid.to_vec(), values)
    }
}

fn mixture_pdf(components: &[(f64, f64, f64)], x: f64) -> f64 {
    components
        .iter()
        .map(|&(w, m, s)| w * std_normal_pdf((x - m) / s) / s)
        .sum()
}

/// A complete benchmark: prior, simulator, observed data and metadata.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub name: String,
    pub prior: Prior,
    pub observed: Vec<f64>,
    pub kernel: KernelChoice,
    pub reference: Option<ReferencePosterior>,
    simulator: Arc<dyn Simulator>,
}

impl ModelSpec {
    pub fn new(
        name: impl Into<String>,
        prior: Prior,
        observed: Vec<f64>,
        kernel: KernelChoice,
        reference: Option<ReferencePosterior>,
        simulator: Arc<dyn Simulator>,
    ) -> Self {
        Self { name: name.into(), prior, observed, kernel, reference, simulator }
    }

    pub fn simulate(&self, theta: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
        self.simulator.simulate(theta, rng)
    }

    /// Distance of simulated data to the observed data.
    pub fn distance(&self, simulated: &[f64]) -> f64 {
        self.simulator.distance(simulated, &self.observed)
    }

    pub fn simulator(&self) -> &Arc<dyn Simulator> {
        &self.simulator
    }

    /// Replaces the observed dataset, keeping its length.
    pub fn with_observed(mut self, observed: Vec<f64>) -> Result<Self> {
        if observed.len() != self.observed.len() {
            return Err(Error::Config(format!(
                "model {} expects {} observed values, got {}",
                self.name,
                self.observed.len(),
                observed.len()
            )));
        }
        if observed.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("observed values must be finite".into()));
        }
        self.observed = observed;
        Ok(self)
    }
}

/// Names accepted by [`model_by_name`].
pub const MODEL_NAMES: [&str; 4] = ["gmm", "silk", "lotka-volterra", "daycare"];

pub fn model_by_name(name: &str) -> Result<ModelSpec> {
    match name {
        "gmm" => Ok(gmm()),
        "silk" => Ok(silk()),
        "lotka-volterra" | "lv" => lotka_volterra(LvConfig::default()),
        "daycare" => Ok(daycare()),
        other => Err(Error::Config(format!("unknown model {other:?}; expected one of {MODEL_NAMES:?}"))),
    }
}

/// Observed data from a CSV with one value per row. A non-numeric first
/// row is taken as a header.
pub fn load_observed_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let field = row.get(0);
        if i == 0 && field.is_some_and(|f| f.trim().parse::<f64>().is_err()) {
            continue;
        }
        out.push(parse_f64(field)?);
    }
    Ok(out)
}

/// `0.5 N(theta, 1) + 0.5 N(theta, 0.01)`.
pub fn gmm_simulate<R: Rng + ?Sized>(theta: f64, rng: &mut R) -> f64 {
    let sd = if rng.random::<bool>() { 1.0 } else { 0.1 };
    let z: f64 = rng.sample(StandardNormal);
    theta + sd * z
}

/// Exact posterior of the mixture model at `y = 0` under its wide uniform prior.
pub fn gmm_reference() -> ReferencePosterior {
    ReferencePosterior::NormalMixture { components: vec![(0.5, 0.0, 1.0), (0.5, 0.0, 0.1)] }
}

pub fn gmm_reference_posterior(grid: &[f64]) -> Result<GriddedDensity> {
    gmm_reference().marginal(0, grid, 1.0)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct GaussianMixture;

impl Simulator for GaussianMixture {
    fn simulate(&self, theta: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
        Ok(vec![gmm_simulate(theta[0], rng)])
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        (a[0] - b[0]).abs()
    }
}

pub fn gmm() -> ModelSpec {
    ModelSpec::new(
        "gmm",
        Prior::new(vec![PriorDim::Uniform { lo: -10.0, hi: 10.0 }]).expect("valid prior"),
        vec![0.0],
        KernelChoice::Gaussian,
        Some(gmm_reference()),
        Arc::new(GaussianMixture),
    )
}

/// Ten-step tolerance sequence commonly used as the mixture model's
/// fixed-schedule baseline.
pub const GMM_FIXED_SEQUENCE: [f64; 10] = [1.0, 0.5013, 0.2519, 0.1272, 0.0648, 0.0337, 0.0181, 0.0102, 0.0064, 0.0025];

/// `(theta - 10)^2 - 100 exp(-100 (theta - 3)^2)`: a broad well at 10 and a
/// narrow, deeper spike at 3.
pub fn silk_simulate(theta: f64) -> f64 {
    (theta - 10.0).powi(2) - 100.0 * (-100.0 * (theta - 3.0).powi(2)).exp()
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Silk;

impl Simulator for Silk {
    fn simulate(&self, theta: &[f64], _rng: &mut StreamRng) -> Result<Vec<f64>> {
        Ok(vec![silk_simulate(theta[0])])
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    }
}

pub fn silk() -> ModelSpec {
    ModelSpec::new(
        "silk",
        Prior::new(vec![PriorDim::Normal { mean: 10.0, variance: 10.0 }]).expect("valid prior"),
        vec![-51.0],
        KernelChoice::Gaussian,
        Some(ReferencePosterior::Dirac { at: vec![3.0] }),
        Arc::new(Silk),
    )
}

/// Predator–prey settings. The defaults reproduce the standard benchmark
/// time grid and starting populations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LvConfig {
    pub initial: (f64, f64),
    pub times: Vec<f64>,
    pub step: f64,
    pub noise_sd: f64,
    /// Parameters the default observed dataset is generated at.
    pub truth: (f64, f64),
    /// Seed of the noise in the default observed dataset.
    pub observed_seed: u64,
}

impl Default for LvConfig {
    fn default() -> Self {
        Self {
            initial: (1.0, 0.5),
            times: vec![1.1, 2.4, 3.9, 5.6, 7.5, 9.6, 11.9, 14.4],
            step: 0.01,
            noise_sd: 0.5,
            truth: (1.0, 1.0),
            observed_seed: 2009,
        }
    }
}

const LV_BLOWUP: f64 = 1e6;

fn lv_rhs(a: f64, b: f64, (x, y): (f64, f64)) -> (f64, f64) {
    (a * x - x * y, b * x * y - y)
}

/// Noise-free trajectory: 8 prey values then 8 predator values, or `None`
/// when the populations blow up.
pub fn lv_trajectory(a: f64, b: f64, config: &LvConfig) -> Option<Vec<f64>> {
    let h = config.step;
    let mut s = config.initial;
    let mut t_steps = 0u64;
    let mut prey = Vec::with_capacity(config.times.len());
    let mut pred = Vec::with_capacity(config.times.len());
    for &t_obs in &config.times {
        let target = (t_obs / h).round() as u64;
        while t_steps < target {
            let k1 = lv_rhs(a, b, s);
            let k2 = lv_rhs(a, b, (s.0 + 0.5 * h * k1.0, s.1 + 0.5 * h * k1.1));
            let k3 = lv_rhs(a, b, (s.0 + 0.5 * h * k2.0, s.1 + 0.5 * h * k2.1));
            let k4 = lv_rhs(a, b, (s.0 + h * k3.0, s.1 + h * k3.1));
            s.0 += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            s.1 += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            t_steps += 1;
            if !(s.0.abs() <= LV_BLOWUP && s.1.abs() <= LV_BLOWUP) {
                return None;
            }
        }
        prey.push(s.0);
        pred.push(s.1);
    }
    prey.extend(pred);
    Some(prey)
}

/// Noisy observation at `(a, b)`. Blow-ups give an all-infinite sentinel.
pub fn lv_simulate<R: Rng + ?Sized>(a: f64, b: f64, config: &LvConfig, rng: &mut R) -> Vec<f64> {
    match lv_trajectory(a, b, config) {
        Some(mut v) => {
            if config.noise_sd > 0.0 {
                for x in &mut v {
                    let z: f64 = rng.sample(StandardNormal);
                    *x += config.noise_sd * z;
                }
            }
            v
        }
        None => vec![f64::INFINITY; 2 * config.times.len()],
    }
}

/// Sum of squared differences.
pub fn sum_of_squares(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Debug)]
pub struct LotkaVolterra {
    pub config: LvConfig,
}

impl Simulator for LotkaVolterra {
    fn simulate(&self, theta: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
        Ok(lv_simulate(theta[0], theta[1], &self.config, rng))
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        sum_of_squares(a, b)
    }
}

pub fn lotka_volterra(config: LvConfig) -> Result<ModelSpec> {
    if !(config.step > 0.0) || config.times.is_empty() || config.times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("Lotka-Volterra needs a positive step and increasing times".into()));
    }
    let mut rng = stream_for(config.observed_seed, Domain::Observed, 0, 0);
    let observed = lv_simulate(config.truth.0, config.truth.1, &config, &mut rng);
    if observed.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("Lotka-Volterra observed dataset diverged".into()));
    }
    let uniform = PriorDim::Uniform { lo: -10.0, hi: 10.0 };
    Ok(ModelSpec::new(
        "lotka-volterra",
        Prior::new(vec![uniform.clone(), uniform]).expect("valid prior"),
        observed,
        KernelChoice::UniformAdditive { half_width: 0.1 },
        None,
        Arc::new(LotkaVolterra { config }),
    ))
}

/// Placeholder for the day-care transmission model; simulating errors.
#[derive(Clone, Copy, Debug, Default)]
pub struct DayCare;

impl Simulator for DayCare {
    fn simulate(&self, _theta: &[f64], _rng: &mut StreamRng) -> Result<Vec<f64>> {
        Err(Error::NotImplemented("day-care transmission simulator".into()))
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        sum_of_squares(a, b)
    }
}

/// Priors: transmission rate `U(0, 11)`, external infection `U(0, 2)`,
/// co-infection `U(0, 1)`.
pub fn daycare() -> ModelSpec {
    ModelSpec::new(
        "daycare",
        Prior::new(vec![
            PriorDim::Uniform { lo: 0.0, hi: 11.0 },
            PriorDim::Uniform { lo: 0.0, hi: 2.0 },
            PriorDim::Uniform { lo: 0.0, hi: 1.0 },
        ])
        .expect("valid prior"),
        Vec::new(),
        KernelChoice::Gaussian,
        None,
        Arc::new(DayCare),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::linspace;
    use crate::rng::Streams;
    use proptest::prelude::*;

    // Independent DOP853 solution (rtol = atol = 1e-13) at a = b = 1.
    const LV_REFERENCE: [f64; 16] = [
        1.6192379319294241, 1.350645671174452, 0.5377765879350012, 0.6593862312582434,
        1.575272576739158, 0.8053867960425788, 0.613069019959893, 1.7373524127782436,
        0.7018987295644615, 1.6342970126502805, 1.288666438762775, 0.5904574982877755,
        0.6663246280933223, 1.7047408852712622, 0.6321124817798299, 0.8776519922872519,
    ];

    fn rng() -> StreamRng {
        Streams::new(3).stream(Domain::Aux, 0, 0)
    }

    #[test]
    fn gmm_moments() {
        let mut r = rng();
        let n = 100_000;
        let ys: Vec<f64> = (0..n).map(|_| gmm_simulate(0.0, &mut r)).collect();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 0.505).abs() < 0.02, "var {var}");
    }

    #[test]
    fn gmm_distance() {
        let m = gmm();
        assert!((m.distance(&[0.3]) - 0.3).abs() < 1e-15);
        assert_eq!(m.simulator().distance(&[0.3], &[0.3]), 0.0);
    }

    #[test]
    fn gmm_reference_values() {
        let d = gmm_reference_posterior(&[-0.5, 0.0, 0.5]).unwrap();
        assert!((d.values()[1] - 2.1942).abs() < 1e-4);
        assert_eq!(d.values()[0], d.values()[2]);
        let grid = linspace(-6.0, 6.0, 2048);
        let d = gmm_reference_posterior(&grid).unwrap();
        assert!((d.integral() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn silk_values() {
        assert_eq!(silk_simulate(3.0), -51.0);
        assert!(silk_simulate(10.0).abs() < 1e-300);
        assert!((silk_simulate(0.0) - 100.0).abs() < 1e-12);
        let m = silk();
        let mut r = rng();
        assert_eq!(m.simulate(&[2.9], &mut r).unwrap(), m.simulate(&[2.9], &mut r).unwrap());
        assert_eq!(m.distance(&[-51.0]), 0.0);
    }

    #[test]
    fn lv_noiseless_matches_reference() {
        let cfg = LvConfig { noise_sd: 0.0, ..Default::default() };
        let v = lv_simulate(1.0, 1.0, &cfg, &mut rng());
        for (a, b) in v.iter().zip(LV_REFERENCE) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn lv_distance_examples() {
        let y: Vec<f64> = LV_REFERENCE.to_vec();
        assert_eq!(sum_of_squares(&y, &y), 0.0);
        let mut z = y.clone();
        z[3] += 0.1;
        assert!((sum_of_squares(&y, &z) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn lv_blowup_gives_infinite_distance() {
        let m = lotka_volterra(LvConfig::default()).unwrap();
        let y = m.simulate(&[10.0, -10.0], &mut rng()).unwrap();
        assert!(y.iter().all(|v| v.is_infinite()));
        assert_eq!(m.distance(&y), f64::INFINITY);
    }

    #[test]
    fn lv_observed_is_fixed() {
        let a = lotka_volterra(LvConfig::default()).unwrap();
        let b = lotka_volterra(LvConfig::default()).unwrap();
        assert_eq!(a.observed, b.observed);
        assert_eq!(a.observed.len(), 16);
        assert_eq!(a.kernel, KernelChoice::UniformAdditive { half_width: 0.1 });
    }

    #[test]
    fn daycare_is_a_stub() {
        let m = model_by_name("daycare").unwrap();
        assert_eq!(m.prior.dim(), 3);
        assert!(matches!(m.simulate(&[1.0, 1.0, 0.5], &mut rng()), Err(Error::NotImplemented(_))));
    }

    #[test]
    fn unknown_model_is_config_error() {
        assert!(matches!(model_by_name("nope"), Err(Error::Config(_))));
    }

    #[test]
    fn observed_override_checks_length() {
        assert!(gmm().with_observed(vec![1.0, 2.0]).is_err());
        assert_eq!(gmm().with_observed(vec![0.25]).unwrap().observed, vec![0.25]);
    }

    #[test]
    fn observed_csv_with_and_without_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("obs.csv");
        std::fs::write(&p, "value\n1.5\n-2\n").unwrap();
        assert_eq!(load_observed_csv(&p).unwrap(), vec![1.5, -2.0]);
        std::fs::write(&p, "0.25\n").unwrap();
        assert_eq!(load_observed_csv(&p).unwrap(), vec![0.25]);
    }

    proptest! {
        #[test]
        fn gmm_mean_shifts_with_theta(theta in -10.0f64..10.0, seed in 0u64..100) {
            let mut r = Streams::new(seed).stream(Domain::Aux, 1, 0);
            let n = 20_000;
            let mean = (0..n).map(|_| gmm_simulate(theta, &mut r)).sum::<f64>() / n as f64;
            // sd of the mean is sqrt(0.505 / n) ~ 0.005
            prop_assert!((mean - theta).abs() < 0.03);
        }

        #[test]
        fn distances_symmetric_nonnegative(
            a in prop::collection::vec(-100.0f64..100.0, 16),
            b in prop::collection::vec(-100.0f64..100.0, 16),
        ) {
            let sims: [&dyn Simulator; 3] = [&GaussianMixture, &Silk, &LotkaVolterra { config: LvConfig::default() }];
            for s in sims {
                let d = s.distance(&a, &b);
                prop_assert!(d >= 0.0);
                prop_assert_eq!(d, s.distance(&b, &a));
                prop_assert_eq!(s.distance(&a, &a), 0.0);
            }
        }

        #[test]
        fn silk_is_pure(theta in -20.0f64..40.0) {
            prop_assert_eq!(silk_simulate(theta).to_bits(), silk_simulate(theta).to_bits());
        }

        #[test]
        fn lv_noiseless_deterministic(a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let cfg = LvConfig { noise_sd: 0.0, ..Default::default() };
            prop_assert_eq!(lv_trajectory(a, b, &cfg), lv_trajectory(a, b, &cfg));
        }
    }
}
