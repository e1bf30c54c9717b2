//! Weighted 1-D kernel density estimation and Hellinger distances between
//! densities tabulated on a shared grid.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::particles::{ess, normalize_weights, std_normal_pdf};
use crate::{Error, Result};

/// Number of grid points used for Hellinger comparisons.
pub const DEFAULT_GRID_POINTS: usize = 2048;

/// Weighted quantile by cumulative-weight inversion.
///
/// Each sorted point sits at the midpoint of its cumulative weight slab,
/// `(S_i - w_i / 2) / S`, and values in between are linearly interpolated.
/// With equal weights this is the Hazen plotting position.
pub fn weighted_quantile(points: &[f64], weights: &[f64], q: f64) -> Result<f64> {
    if points.is_empty() || points.len() != weights.len() {
        return Err(Error::invalid("weighted quantile needs matching non-empty inputs"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid(format!("quantile level {q} outside [0, 1]")));
    }
    let mut order: Vec<usize> = (0..points.len()).filter(|&i| weights[i] > 0.0).collect();
    if order.is_empty() {
        return Err(Error::DegenerateParticles);
    }
    order.sort_by(|&a, &b| points[a].total_cmp(&points[b]));
    let total: f64 = order.iter().map(|&i| weights[i]).sum();
    let mut cum = 0.0;
    let positions: Vec<f64> = order
        .iter()
        .map(|&i| {
            let mid = (cum + 0.5 * weights[i]) / total;
            cum += weights[i];
            mid
        })
        .collect();
    if q <= positions[0] {
        return Ok(points[order[0]]);
    }
    let last = order.len() - 1;
    if q >= positions[last] {
        return Ok(points[order[last]]);
    }
    let k = positions.partition_point(|&p| p <= q);
    let (p0, p1) = (positions[k - 1], positions[k]);
    let (x0, x1) = (points[order[k - 1]], points[order[k]]);
    Ok(x0 + (x1 - x0) * (q - p0) / (p1 - p0))
}

/// Silverman's robust rule of thumb with importance weights:
/// `0.9 * min(sd_w, IQR_w / 1.34) * n_eff^(-1/5)`, where `n_eff` is the
/// effective sample size of the weights. When one of the two spread
/// measures vanishes the other is used alone.
pub fn silverman_bandwidth(points: &[f64], weights: &[f64]) -> Result<f64> {
    if points.len() < 2 || points.len() != weights.len() {
        return Err(Error::invalid("bandwidth selection needs at least two weighted points"));
    }
    let w = normalize_weights(weights)?;
    let mean: f64 = points.iter().zip(&w).map(|(x, w)| w * x).sum();
    let var: f64 = points.iter().zip(&w).map(|(x, w)| w * (x - mean).powi(2)).sum();
    let sd = var.sqrt();
    let iqr = weighted_quantile(points, &w, 0.75)? - weighted_quantile(points, &w, 0.25)?;
    let robust = iqr / 1.34;
    let spread = match (sd > 0.0, robust > 0.0) {
        (true, true) => sd.min(robust),
        (true, false) => sd,
        (false, true) => robust,
        (false, false) => return Err(Error::ZeroSpread),
    };
    Ok(0.9 * spread * ess(&w).powf(-0.2))
}

/// Weighted Gaussian kernel density estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct Kde1D {
    points: Vec<f64>,
    weights: Vec<f64>,
    bandwidth: f64,
}

impl Kde1D {
    pub fn new(points: Vec<f64>, weights: &[f64], bandwidth: f64) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::invalid("KDE needs matching non-empty points and weights"));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
        }
        let weights = normalize_weights(weights)?;
        Ok(Self { points, weights, bandwidth })
    }

    /// KDE with the weighted Silverman bandwidth.
    pub fn silverman(points: Vec<f64>, weights: &[f64]) -> Result<Self> {
        let h = silverman_bandwidth(&points, weights)?;
        Self::new(points, weights, h)
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&xi, &w)| w * std_normal_pdf((x - xi) / h))
            .sum::<f64>()
            / h
    }

    pub fn evaluate(&self, grid: &[f64]) -> Result<GriddedDensity> {
        GriddedDensity::new(grid.to_vec(), grid.iter().map(|&x| self.pdf(x)).collect())
    }

    /// `[min - pad * h, max + pad * h]` over the sample.
    pub fn span(&self, pad: f64) -> (f64, f64) {
        let (lo, hi) = min_max(&self.points);
        (lo - pad * self.bandwidth, hi + pad * self.bandwidth)
    }
}

/// Density values tabulated on a strictly increasing grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GriddedDensity {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl GriddedDensity {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() {
            return Err(Error::invalid("gridded density needs at least two matching points"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("grid must be strictly increasing"));
        }
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("density values must be finite and non-negative"));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Trapezoid-rule integral over the grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.values)
    }

    /// Copy rescaled to unit trapezoid integral.
    pub fn normalized(&self) -> Result<Self> {
        let z = self.integral();
        if !(z > 0.0) {
            return Err(Error::invalid("cannot normalize a density with zero mass on its grid"));
        }
        Ok(Self { grid: self.grid.clone(), values: self.values.iter().map(|v| v / z).collect() })
    }

    /// Two-column CSV: `x,density`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "density"])?;
        for (x, v) in self.grid.iter().zip(&self.values) {
            w.write_record([fmt_f64(*x), fmt_f64(*v)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut grid = Vec::new();
        let mut values = Vec::new();
        for row in r.records() {
            let row = row?;
            grid.push(parse_f64(row.get(0))?);
            values.push(parse_f64(row.get(1))?);
        }
        Self::new(grid, values)
    }
}

/// Hellinger distance `(int (sqrt p - sqrt q)^2)^(1/2)` by the trapezoid
/// rule. Both densities are renormalized on the shared grid first, so the
/// result lies in `[0, sqrt 2]`.
pub fn hellinger(p: &GriddedDensity, q: &GriddedDensity) -> Result<f64> {
    if p.grid != q.grid {
        return Err(Error::GridMismatch(format!(
            "grids differ ({} vs {} points)",
            p.grid.len(),
            q.grid.len()
        )));
    }
    let p = p.normalized()?;
    let q = q.normalized()?;
    let sq: Vec<f64> = p
        .values
        .iter()
        .zip(&q.values)
        .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2))
        .collect();
    Ok(trapezoid(&p.grid, &sq).clamp(0.0, 2.0).sqrt())
}

/// `n` equispaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "linspace needs at least two points");
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| if i == n - 1 { hi } else { lo + step * i as f64 }).collect()
}

/// Grid covering every KDE's `[min - 3h, max + 3h]`.
pub fn union_grid(kdes: &[&Kde1D], points: usize) -> Vec<f64> {
    let (lo, hi) = kdes
        .iter()
        .map(|k| k.span(3.0))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (lo, hi)| (a.min(lo), b.max(hi)));
    linspace(lo, hi, points)
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

pub(crate) fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Decimal text with 17 significant digits; parses back to the same bits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn parse_f64(field: Option<&str>) -> Result<f64> {
    let s = field.ok_or_else(|| Error::invalid("missing CSV field"))?;
    s.trim()
        .parse()
        .map_err(|_| Error::invalid(format!("not a number: {s:?}")))
}
