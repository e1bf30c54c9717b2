//! KLIEP density-ratio estimation and the supremum of the fitted ratio.
//!
//! The ratio `r = p_num / p_den` is modelled as a non-negative mixture of
//! Gaussian bumps centred on numerator points. Coefficients maximize the
//! numerator log-likelihood of `r̂` subject to `r̂` averaging to one over
//! the denominator sample; the bump width is picked by held-out likelihood.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::optimize::{brent_max, halton_box, nelder_mead_max};
use crate::particles::Parameter;
use crate::rng::{stream_for, Domain};
use crate::{Error, Result};

/// Kernel widths tried during cross-validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum WidthCandidates {
    /// Multiples of the median pairwise distance of the pooled sample.
    MedianScaled(Vec<f64>),
    /// Literal widths.
    Absolute(Vec<f64>),
}

/// Nine log-spaced widths from 1e-3 to 10. Being fixed rather than
/// scale-adaptive, they make the fit flatten out once both samples are far
/// narrower than the smallest width, which is what lets the stopping rule
/// fire on concentrated posteriors.
impl Default for WidthCandidates {
    fn default() -> Self {
        WidthCandidates::Absolute((0..9).map(|i| 10f64.powf(-3.0 + 0.5 * i as f64)).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RatioFitConfig {
    pub num_centers: usize,
    pub width_candidates: WidthCandidates,
    pub cv_folds: usize,
    /// Widths whose held-out score is within this many standard errors of
    /// the best are eligible; the widest eligible one is used.
    pub cv_slack: f64,
    /// Cap on gradient iterations per fit.
    pub max_iterations: usize,
    /// Minimum score improvement that counts as progress.
    pub tolerance: f64,
}

impl Default for RatioFitConfig {
    fn default() -> Self {
        Self {
            num_centers: 100,
            width_candidates: WidthCandidates::default(),
            cv_folds: 5,
            cv_slack: 1.0,
            max_iterations: 2000,
            tolerance: 1e-6,
        }
    }
}

impl RatioFitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_centers == 0 {
            return Err(Error::Config("num_centers must be positive".into()));
        }
        if self.cv_folds < 2 {
            return Err(Error::Config("cv_folds must be at least 2".into()));
        }
        if !(self.cv_slack >= 0.0 && self.cv_slack.is_finite()) {
            return Err(Error::Config("cv_slack must be a finite non-negative number".into()));
        }
        if self.max_iterations == 0 || !(self.tolerance > 0.0) {
            return Err(Error::Config("max_iterations and tolerance must be positive".into()));
        }
        let widths = match &self.width_candidates {
            WidthCandidates::MedianScaled(w) | WidthCandidates::Absolute(w) => w,
        };
        if widths.is_empty() || widths.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Config("width candidates must be positive and non-empty".into()));
        }
        Ok(())
    }
}

/// Fitted ratio `r̂(θ) = Σ α_l exp(-‖θ - c_l‖² / (2σ²))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioModel {
    centers: Vec<Vec<f64>>,
    width: f64,
    alphas: Vec<f64>,
}

impl RatioModel {
    pub fn new(centers: Vec<Vec<f64>>, width: f64, alphas: Vec<f64>) -> Result<Self> {
        if centers.is_empty() || centers.len() != alphas.len() {
            return Err(Error::invalid("ratio model needs one coefficient per center"));
        }
        let p = centers[0].len();
        if p == 0 || centers.iter().any(|c| c.len() != p) {
            return Err(Error::invalid("ratio centers must share a positive dimension"));
        }
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::invalid(format!("ratio width must be positive, got {width}")));
        }
        if alphas.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(Error::invalid("ratio coefficients must be finite and non-negative"));
        }
        Ok(Self { centers, width, alphas })
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    pub fn eval(&self, theta: &[f64]) -> f64 {
        let s = -0.5 / (self.width * self.width);
        self.centers
            .iter()
            .zip(&self.alphas)
            .filter(|(_, a)| **a > 0.0)
            .map(|(c, a)| a * (s * sq_dist(c, theta)).exp())
            .sum()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Row-major kernel matrix of `points` against `centers`.
fn kernel_matrix(points: &[&[f64]], centers: &[Vec<f64>], width: f64) -> Vec<f64> {
    let s = -0.5 / (width * width);
    let mut k = Vec::with_capacity(points.len() * centers.len());
    for p in points {
        k.extend(centers.iter().map(|c| (s * sq_dist(p, c)).exp()));
    }
    k
}

fn mat_vec(k: &[f64], rows: &[usize], b: usize, alpha: &[f64], out: &mut [f64]) {
    for (o, &i) in out.iter_mut().zip(rows) {
        *o = k[i * b..(i + 1) * b].iter().zip(alpha).map(|(x, a)| x * a).sum();
    }
}

const FLOOR: f64 = 1e-300;

fn mean_log(r: &[f64]) -> f64 {
    r.iter().map(|v| v.max(FLOOR).ln()).sum::<f64>() / r.len() as f64
}

/// Enforces `α ≥ 0` and `bᵀα = 1`.
fn project(alpha: &mut [f64], bvec: &[f64], bb: f64) {
    let ba: f64 = bvec.iter().zip(alpha.iter()).map(|(b, a)| b * a).sum();
    let shift = (1.0 - ba) / bb;
    for (a, b) in alpha.iter_mut().zip(bvec) {
        *a = (*a + b * shift).max(0.0);
    }
    let ba: f64 = bvec.iter().zip(alpha.iter()).map(|(b, a)| b * a).sum();
    if ba > 0.0 {
        for a in alpha.iter_mut() {
            *a /= ba;
        }
    } else {
        // Clipping zeroed every useful coefficient; restart from the
        // flat feasible point.
        for (a, b) in alpha.iter_mut().zip(bvec) {
            *a = b / bb;
        }
    }
}

const MAX_STEP: f64 = 1e3;
const MIN_STEP: f64 = 1e-3;

/// Projected gradient ascent on the training rows of `k`. The step grows
/// after each productive move and shrinks tenfold when progress stalls;
/// a stall at the smallest step is stationarity.
fn kliep_alpha(k: &[f64], rows: &[usize], b: usize, bvec: &[f64], config: &RatioFitConfig) -> Result<Vec<f64>> {
    let bb: f64 = bvec.iter().map(|x| x * x).sum();
    if !(bb > 0.0) {
        return Err(Error::invalid("denominator sample has no mass near any ratio center"));
    }
    let mut alpha = vec![1.0; b];
    project(&mut alpha, bvec, bb);
    let mut r = vec![0.0; rows.len()];
    mat_vec(k, rows, b, &alpha, &mut r);
    let mut score = mean_log(&r);
    let mut grad = vec![0.0; b];
    let mut cand = vec![0.0; b];
    let mut r_cand = vec![0.0; rows.len()];
    let n = rows.len() as f64;
    let mut eps = MAX_STEP;
    let mut fresh_grad = false;
    for _ in 0..config.max_iterations {
        if !fresh_grad {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (&i, &ri) in rows.iter().zip(&r) {
                if ri > FLOOR {
                    let inv = 1.0 / (ri * n);
                    for (g, kij) in grad.iter_mut().zip(&k[i * b..(i + 1) * b]) {
                        *g += kij * inv;
                    }
                }
            }
            fresh_grad = true;
        }
        for ((c, a), g) in cand.iter_mut().zip(&alpha).zip(&grad) {
            *c = a + eps * g;
        }
        project(&mut cand, bvec, bb);
        mat_vec(k, rows, b, &cand, &mut r_cand);
        let new_score = mean_log(&r_cand);
        if !new_score.is_finite() {
            return Err(Error::RatioNonConvergence { iterations: config.max_iterations, score: new_score, step: eps });
        }
        let improved = new_score > score;
        if improved {
            std::mem::swap(&mut alpha, &mut cand);
            std::mem::swap(&mut r, &mut r_cand);
            fresh_grad = false;
        }
        if new_score <= score + config.tolerance {
            if eps <= MIN_STEP {
                return Ok(alpha);
            }
            eps = (eps / 10.0).max(MIN_STEP);
        } else {
            eps = (eps * 2.0).min(MAX_STEP);
        }
        if improved {
            score = new_score;
        }
    }
    Err(Error::RatioNonConvergence { iterations: config.max_iterations, score, step: eps })
}

/// Mean and standard error of per-fold scores.
fn fold_summary(scores: &[f64]) -> (f64, f64) {
    let k = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / k;
    if !mean.is_finite() {
        return (f64::NEG_INFINITY, 0.0);
    }
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Median pairwise Euclidean distance, on at most 1000 points.
fn median_pairwise(points: &[&[f64]], seed: u64) -> f64 {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    if idx.len() > 1000 {
        let mut rng = stream_for(seed, Domain::RatioFit, u64::MAX, 0);
        idx.shuffle(&mut rng);
        idx.truncate(1000);
    }
    let mut d = Vec::with_capacity(idx.len() * (idx.len() - 1) / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            d.push(sq_dist(points[i], points[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// Fits `r = p_num / p_den` from samples of each density.
///
/// `seed` drives center subsampling and fold assignment; equal inputs and
/// seed give identical models.
pub fn kliep_fit(numerator: &[Parameter], denominator: &[Parameter], config: &RatioFitConfig, seed: u64) -> Result<RatioModel> {
    config.validate()?;
    let min_len = 10.max(config.num_centers.min(numerator.len()));
    if numerator.len() < min_len || denominator.len() < min_len {
        return Err(Error::invalid(format!(
            "ratio fit needs at least {min_len} points per sample (got {} and {})",
            numerator.len(),
            denominator.len()
        )));
    }
    let p = numerator[0].len();
    if numerator.iter().chain(denominator).any(|t| t.len() != p) {
        return Err(Error::invalid("numerator and denominator dimensions differ"));
    }
    let num: Vec<&[f64]> = numerator.iter().map(|t| &t[..]).collect();
    let den: Vec<&[f64]> = denominator.iter().map(|t| &t[..]).collect();

    let mut rng = stream_for(seed, Domain::RatioFit, 0, 0);
    let b = config.num_centers.min(num.len());
    let mut perm: Vec<usize> = (0..num.len()).collect();
    perm.shuffle(&mut rng);
    let centers: Vec<Vec<f64>> = perm[..b].iter().map(|&i| num[i].to_vec()).collect();
    let mut folds: Vec<usize> = (0..num.len()).collect();
    folds.shuffle(&mut rng);
    let fold_of: Vec<usize> = {
        let mut f = vec![0; num.len()];
        for (pos, &i) in folds.iter().enumerate() {
            f[i] = pos % config.cv_folds;
        }
        f
    };

    let widths: Vec<f64> = match &config.width_candidates {
        WidthCandidates::Absolute(w) => w.clone(),
        WidthCandidates::MedianScaled(m) => {
            let pooled: Vec<&[f64]> = num.iter().chain(&den).copied().collect();
            let med = median_pairwise(&pooled, seed);
            if !(med > 0.0) {
                return Err(Error::ZeroSpread);
            }
            m.iter().map(|x| x * med).collect()
        }
    };

    let all_rows: Vec<usize> = (0..num.len()).collect();
    let scored: Vec<((f64, f64), Vec<f64>, Vec<f64>)> = widths
        .par_iter()
        .map(|&w| {
            let k_num = kernel_matrix(&num, &centers, w);
            let k_den = kernel_matrix(&den, &centers, w);
            let mut bvec = vec![0.0; b];
            for row in k_den.chunks_exact(b) {
                for (s, v) in bvec.iter_mut().zip(row) {
                    *s += v;
                }
            }
            bvec.iter_mut().for_each(|s| *s /= den.len() as f64);
            let mut scores = Vec::with_capacity(config.cv_folds);
            for fold in 0..config.cv_folds {
                let (test, train): (Vec<usize>, Vec<usize>) = all_rows.iter().partition(|&&i| fold_of[i] == fold);
                let score = match kliep_alpha(&k_num, &train, b, &bvec, config) {
                    Ok(alpha) => {
                        let mut r = vec![0.0; test.len()];
                        mat_vec(&k_num, &test, b, &alpha, &mut r);
                        mean_log(&r)
                    }
                    Err(_) => f64::NEG_INFINITY,
                };
                scores.push(score);
            }
            (fold_summary(&scores), k_num, bvec)
        })
        .collect();
    let (best_mean, best_se) = scored
        .iter()
        .map(|(s, _, _)| *s)
        .fold((f64::NEG_INFINITY, 0.0), |acc: (f64, f64), s| if s.0 > acc.0 { s } else { acc });
    if best_mean == f64::NEG_INFINITY {
        return Err(Error::invalid("no width candidate gives a finite held-out score"));
    }
    let (width, k_num, bvec) = widths
        .iter()
        .zip(scored)
        .filter(|(_, ((mean, _), _, _))| *mean >= best_mean - config.cv_slack * best_se)
        .max_by(|a, b| a.0.total_cmp(b.0))
        .map(|(&w, (_, k, bv))| (w, k, bv))
        .expect("the best candidate qualifies");
    let alphas = kliep_alpha(&k_num, &all_rows, b, &bvec, config)?;
    RatioModel::new(centers, width, alphas)
}

/// Supremum of `r̂` over the box, clamped below at 1.
pub fn ratio_sup(model: &RatioModel, bounds: &[(f64, f64)]) -> Result<f64> {
    let p = model.dim();
    if bounds.len() != p {
        return Err(Error::invalid("box dimension differs from the ratio model"));
    }
    if bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(Error::invalid("ratio supremum box must be finite and ordered"));
    }
    let check = |x: &[f64], v: f64| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteRatio { at: x.to_vec() })
        }
    };
    let mut best = f64::NEG_INFINITY;
    for c in model.centers() {
        best = best.max(check(c, model.eval(c))?);
    }
    if p == 1 {
        let (lo, hi) = bounds[0];
        const PROBES: usize = 64;
        let xs: Vec<f64> = (0..PROBES).map(|i| lo + (hi - lo) * i as f64 / (PROBES - 1) as f64).collect();
        let mut k_best = 0;
        let mut v_best = f64::NEG_INFINITY;
        for (k, &x) in xs.iter().enumerate() {
            let v = check(&[x], model.eval(&[x]))?;
            if v > v_best {
                (k_best, v_best) = (k, v);
            }
        }
        best = best.max(v_best);
        let a = xs[k_best.saturating_sub(1)];
        let b = xs[(k_best + 1).min(PROBES - 1)];
        if b > a {
            let (x, v) = brent_max(|x| model.eval(&[x]), a, b, 1e-10, 500);
            best = best.max(check(&[x], v)?);
        }
    } else {
        let mut starts: Vec<(f64, Vec<f64>)> = Vec::new();
        for x in halton_box(512, bounds) {
            let v = check(&x, model.eval(&x))?;
            starts.push((v, x));
        }
        starts.sort_by(|a, b| b.0.total_cmp(&a.0));
        starts.truncate(16);
        for (v, x) in starts {
            best = best.max(v);
            let m = nelder_mead_max(|t| model.eval(t), &x, bounds, 1e-12, 400 * p);
            best = best.max(check(&m.x, m.value)?);
        }
    }
    Ok(best.max(1.0))
}

/// Quantile implied by a ratio supremum: `q = 1 / ĉ`, with `ĉ` clamped at 1.
pub fn adaptive_quantile(c_hat: f64) -> f64 {
    1.0 / c_hat.max(1.0)
}
