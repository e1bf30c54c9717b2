//! Checks shared by the integration tests and the acceptance binary. Each
//! returns a one-line detail on success and a diagnostic on failure.

#![allow(dead_code)]

use std::f64::consts::SQRT_2;

use aabc::density::{hellinger, linspace, Kde1D};
use aabc::engine::{run, RunConfig, RunTrace};
use aabc::models::{gmm, lotka_volterra, silk, LvConfig, ModelSpec};
use aabc::particles::{ess, normalize_weights, Parameter};
use aabc::ratio::{adaptive_quantile, kliep_fit, ratio_sup, RatioFitConfig, RatioModel};
use aabc::schedule::{distance_quantile, ess_next, SchedulerPolicy};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub type Check = Result<String, String>;

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn property<S: Strategy>(
    name: &str,
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner(cases).run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

pub fn normal_sample(n: usize, sd: f64, seed: u64) -> Vec<Parameter> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(0.0, sd).unwrap();
    (0..n).map(|_| Parameter::from(vec![d.sample(&mut rng)])).collect()
}

fn den_residual(model: &RatioModel, den: &[Parameter]) -> f64 {
    (den.iter().map(|t| model.eval(t)).sum::<f64>() / den.len() as f64 - 1.0).abs()
}

/// N(0, 1) over N(0, 2²) has ratio `2 exp(-3x²/8)`.
pub fn kliep_oracle() -> Check {
    let grid = linspace(-1.5, 1.5, 301);
    let mut worst_mse: f64 = 0.0;
    let mut worst_flat: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    for rep in 0..3u64 {
        let num = normal_sample(1000, 1.0, 100 + rep);
        let den = normal_sample(1000, 2.0, 200 + rep);
        let m = kliep_fit(&num, &den, &RatioFitConfig::default(), rep).map_err(|e| e.to_string())?;
        let mse = grid
            .iter()
            .map(|&x| (m.eval(&[x]) - 2.0 * (-3.0 * x * x / 8.0).exp()).powi(2))
            .sum::<f64>()
            / grid.len() as f64;
        worst_mse = worst_mse.max(mse);
        worst_residual = worst_residual.max(den_residual(&m, &den));

        let s = normal_sample(1000, 1.0, 300 + rep);
        let flat = kliep_fit(&s, &s, &RatioFitConfig::default(), rep).map_err(|e| e.to_string())?;
        let dev = s.iter().map(|t| (flat.eval(t) - 1.0).abs()).sum::<f64>() / s.len() as f64;
        worst_flat = worst_flat.max(dev);
        worst_residual = worst_residual.max(den_residual(&flat, &s));
    }
    let detail = format!("mse {worst_mse:.4}, self-ratio |r-1| {worst_flat:.4}, residual {worst_residual:.1e}");
    if worst_mse <= 0.05 && worst_flat <= 0.1 && worst_residual <= 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Smallest tolerance among the particles' distances whose truncated set
/// keeps `alpha` of the current ESS, by trying every candidate.
pub fn brute_ess_tolerance(weights: &[f64], distances: &[f64], alpha: f64) -> f64 {
    let target = alpha * ess(weights);
    let mut candidates: Vec<f64> = distances
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(d, _)| *d)
        .collect();
    candidates.sort_by(f64::total_cmp);
    for &e in &candidates {
        let kept: Vec<f64> = weights
            .iter()
            .zip(distances)
            .filter(|(w, d)| **w > 0.0 && **d <= e)
            .map(|(w, _)| *w)
            .collect();
        let s1: f64 = kept.iter().sum();
        let s2: f64 = kept.iter().map(|w| w * w).sum();
        if s1 * s1 / s2 >= target * (1.0 - 1e-12) {
            return e;
        }
    }
    panic!("the full set always meets its own ESS")
}

fn ess_case(raw: &[u32], dist: &[u32], alpha: f64) -> Result<(), String> {
    let total: f64 = raw.iter().map(|&w| w as f64).sum();
    let w: Vec<f64> = raw.iter().map(|&x| x as f64 / total).collect();
    let d: Vec<f64> = dist.iter().map(|&x| x as f64).collect();
    let got = ess_next(&w, &d, alpha).map_err(|e| e.to_string())?.epsilon;
    let want = brute_ess_tolerance(&w, &d, alpha);
    if got == want {
        Ok(())
    } else {
        Err(format!("weights {raw:?} distances {dist:?} alpha {alpha}: bisection {got}, enumeration {want}"))
    }
}

/// Exhaustive sweep over small systems plus random systems up to twelve
/// particles.
pub fn ess_equivalence(random_cases: u32) -> Check {
    let alphas = [0.1, 0.25, 0.5, 0.75, 0.9, 1.0];
    let mut exhaustive = 0usize;
    for n in 1..=4usize {
        let combos = 3usize.pow(n as u32);
        for wi in 0..combos {
            let raw: Vec<u32> = (0..n).map(|k| (wi / 3usize.pow(k as u32) % 3) as u32).collect();
            if raw.iter().all(|&w| w == 0) {
                continue;
            }
            for di in 0..combos {
                let dist: Vec<u32> = (0..n).map(|k| (di / 3usize.pow(k as u32) % 3) as u32 + 1).collect();
                for &alpha in &alphas {
                    ess_case(&raw, &dist, alpha)?;
                    exhaustive += 1;
                }
            }
        }
    }
    let strategy = (1usize..=12).prop_flat_map(|n| {
        (
            prop::collection::vec(0u32..10, n),
            prop::collection::vec(1u32..20, n),
            0.01f64..=1.0,
        )
    });
    property("ess enumeration", random_cases, strategy, |(raw, dist, alpha)| {
        prop_assume!(raw.iter().any(|&w| w > 0));
        ess_case(&raw, &dist, alpha).map_err(TestCaseError::fail)
    })?;
    Ok(format!("{exhaustive} exhaustive and {random_cases} random systems agree"))
}

/// Per-record invariants of a finished trace.
pub fn trace_invariants(trace: &RunTrace, n: usize) -> Result<(), String> {
    let mut sum = 0u64;
    let mut prev = f64::INFINITY;
    for r in &trace.records {
        let w = r.particles.weights();
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(format!("t={} weights sum to {total}", r.t));
        }
        if !(1.0 - 1e-9..=n as f64 + 1e-9).contains(&r.ess) {
            return Err(format!("t={} ESS {} outside [1, {n}]", r.t, r.ess));
        }
        if r.draws < n as u64 || r.acceptance_rate != n as f64 / r.draws as f64 {
            return Err(format!("t={} acceptance {} with {} draws", r.t, r.acceptance_rate, r.draws));
        }
        if !(r.epsilon < prev) {
            return Err(format!("t={} tolerance {} not below {prev}", r.t, r.epsilon));
        }
        if let Some(q) = r.q_used {
            if !(q > 0.0 && q <= 1.0) {
                return Err(format!("t={} quantile {q}", r.t));
            }
        }
        if let Some(c) = r.c_hat {
            if !(c >= 1.0) {
                return Err(format!("t={} ratio supremum {c}", r.t));
            }
        }
        prev = r.epsilon;
        sum += r.draws;
    }
    if sum != trace.total_draws {
        return Err(format!("iteration draws sum to {sum}, trace total {}", trace.total_draws));
    }
    Ok(())
}

fn small_run(policy: SchedulerPolicy, seed: u64) -> Result<RunTrace, TestCaseError> {
    let mut cfg = RunConfig::new(100, 3, policy, seed);
    cfg.max_iterations = 6;
    run(&gmm(), &cfg).map_err(|e| TestCaseError::fail(e.to_string()))
}

/// The property suites listed for every build.
pub fn property_suites(cases: u32) -> Check {
    property("weight normalization", cases, prop::collection::vec(0.0f64..1e6, 1..500), |raw| {
        prop_assume!(raw.iter().any(|&w| w > 0.0));
        let w = normalize_weights(&raw).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        Ok(())
    })?;
    property("ESS bounds", cases, prop::collection::vec(0.0f64..1.0, 1..300), |raw| {
        prop_assume!(raw.iter().any(|&w| w > 0.0));
        let w = normalize_weights(&raw).unwrap();
        let e = ess(&w);
        prop_assert!(e >= 1.0 - 1e-9 && e <= w.len() as f64 + 1e-9);
        Ok(())
    })?;
    property("quantile range", cases, 0.0f64..1e9, |c| {
        let q = adaptive_quantile(c);
        prop_assert!(q > 0.0 && q <= 1.0);
        Ok(())
    })?;
    property("ratio supremum at least one", (cases / 16).max(4), (0.2f64..3.0, 0.2f64..3.0, 0u64..1000), |(a, b, seed)| {
        let num = normal_sample(200, a, seed);
        let den = normal_sample(200, b, seed + 1);
        let m = kliep_fit(&num, &den, &RatioFitConfig::default(), seed).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let pooled: Vec<f64> = num.iter().chain(&den).map(|t| t[0]).collect();
        let lo = pooled.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = pooled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let c = ratio_sup(&m, &[(lo, hi)]).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(c >= 1.0);
        Ok(())
    })?;
    let policies = prop_oneof![
        Just(SchedulerPolicy::adaptive()),
        (0.2f64..0.8).prop_map(|q| SchedulerPolicy::FixedQuantile { q }),
        (0.3f64..0.9).prop_map(|alpha| SchedulerPolicy::Ess { alpha }),
    ];
    property("run invariants", (cases / 32).max(4), (policies, 0u64..10_000), |(policy, seed)| {
        let trace = small_run(policy, seed)?;
        trace_invariants(&trace, 100).map_err(TestCaseError::fail)
    })?;
    property("Hellinger bounds", cases, (-5.0f64..5.0, 0.1f64..3.0, -5.0f64..5.0, 0.1f64..3.0), |(m1, s1, m2, s2)| {
        let grid = linspace(-20.0, 20.0, 2048);
        let pdf = |m: f64, s: f64| -> Vec<f64> {
            grid.iter().map(|x| (-(x - m).powi(2) / (2.0 * s * s)).exp() / s).collect()
        };
        let p = aabc::density::GriddedDensity::new(grid.clone(), pdf(m1, s1)).unwrap();
        let q = aabc::density::GriddedDensity::new(grid.clone(), pdf(m2, s2)).unwrap();
        let h = hellinger(&p, &q).unwrap();
        prop_assert!((0.0..=SQRT_2).contains(&h));
        prop_assert!(hellinger(&p, &p).unwrap().abs() <= 1e-12);
        Ok(())
    })?;
    property(
        "KDE integral",
        cases,
        (prop::collection::vec(-50.0f64..50.0, 2..200), prop::collection::vec(0.01f64..1.0, 200)),
        |(pts, w)| {
            prop_assume!(pts.iter().any(|&x| x != pts[0]));
            let w = &w[..pts.len()];
            let kde = Kde1D::silverman(pts, w).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let (lo, hi) = kde.span(8.0);
            let n = (((hi - lo) / kde.bandwidth()) as usize * 8).clamp(2048, 400_000);
            let d = kde.evaluate(&linspace(lo, hi, n)).unwrap();
            prop_assert!((d.integral() - 1.0).abs() <= 0.01, "integral {}", d.integral());
            Ok(())
        },
    )?;
    property(
        "distance quantile monotone",
        cases,
        (prop::collection::vec(0.0f64..100.0, 1..100), 0.001f64..1.0, 0.001f64..1.0),
        |(d, a, b)| {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(distance_quantile(&d, lo).unwrap() <= distance_quantile(&d, hi).unwrap());
            Ok(())
        },
    )?;
    Ok(format!("8 suites, up to {cases} cases each"))
}

/// Runs `(model, config)` with one and with eight workers and compares the
/// timing-free traces field by field and through their JSON encoding.
pub fn same_at_worker_counts(model: &ModelSpec, config: &RunConfig) -> Result<(), String> {
    let at = |w: usize| {
        let mut c = config.clone();
        c.workers = Some(w);
        run(model, &c).map(|t| t.without_timing()).map_err(|e| e.to_string())
    };
    let (one, eight) = (at(1)?, at(8)?);
    let json = |t: &RunTrace| serde_json::to_string(t).map_err(|e| e.to_string());
    if one != eight || json(&one)? != json(&eight)? {
        return Err(format!("{} / {} seed {} differs between 1 and 8 workers", model.name, config.policy.label(), config.seed));
    }
    Ok(())
}

pub fn determinism() -> Check {
    let lv = lotka_volterra(LvConfig::default()).map_err(|e| e.to_string())?;
    let mut lv_cfg = RunConfig::new(200, 3, SchedulerPolicy::adaptive(), 5);
    lv_cfg.max_iterations = 3;
    let mut tar = RunConfig::new(300, 5, SchedulerPolicy::Tar { grid_size: 15, replicates: 4, proposals_per_replicate: 300 }, 2);
    tar.max_iterations = 4;
    let cases: Vec<(ModelSpec, RunConfig)> = vec![
        (gmm(), RunConfig::new(1000, 5, SchedulerPolicy::adaptive(), 7)),
        (silk(), RunConfig::new(500, 5, SchedulerPolicy::adaptive(), 3)),
        (gmm(), tar),
        (lv, lv_cfg),
    ];
    for (model, config) in &cases {
        same_at_worker_counts(model, config)?;
    }
    Ok(format!("{} configurations bit-identical at 1 and 8 workers", cases.len()))
}
