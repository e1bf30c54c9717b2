//! Derivative-free maximizers used to locate the supremum of a fitted ratio.

/// Result of a maximization.
#[derive(Clone, Debug, PartialEq)]
pub struct Maximum {
    pub x: Vec<f64>,
    pub value: f64,
}

const GOLDEN: f64 = 0.381_966_011_250_105_1;

/// Brent's method (golden section with parabolic steps) for a maximum of
/// `f` on `[lo, hi]`. Returns `(argmax, max)`.
pub fn brent_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> (f64, f64) {
    let mut g = |x: f64| -f(x);
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = g(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = g(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            (v, fv) = (w, fw);
            (w, fw) = (x, fx);
            (x, fx) = (u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, fv) = (w, fw);
                (w, fw) = (u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    (x, -fx)
}

/// Nelder–Mead simplex search for a maximum of `f`, with every vertex
/// clamped into the box `bounds`.
pub fn nelder_mead_max<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    start: &[f64],
    bounds: &[(f64, f64)],
    tol: f64,
    max_iter: usize,
) -> Maximum {
    let p = start.len();
    let clamp = |x: &mut Vec<f64>| {
        for (xi, (lo, hi)) in x.iter_mut().zip(bounds) {
            *xi = xi.clamp(*lo, *hi);
        }
    };
    let mut eval = |x: &[f64]| -f(x);
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(p + 1);
    simplex.push(start.to_vec());
    for j in 0..p {
        let mut x = start.to_vec();
        let span = bounds[j].1 - bounds[j].0;
        let step = 0.05 * span.max(1e-12);
        x[j] = if x[j] + step <= bounds[j].1 { x[j] + step } else { x[j] - step };
        clamp(&mut x);
        simplex.push(x);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x)).collect();

    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=p).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        if (values[p] - values[0]).abs() <= tol * (values[0].abs() + values[p].abs()) + 1e-300 {
            break;
        }
        let centroid: Vec<f64> = (0..p)
            .map(|j| simplex[..p].iter().map(|x| x[j]).sum::<f64>() / p as f64)
            .collect();
        let along = |t: f64| {
            let mut x: Vec<f64> = (0..p).map(|j| centroid[j] + t * (simplex[p][j] - centroid[j])).collect();
            clamp(&mut x);
            x
        };
        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = eval(&xe);
            if fe < fr {
                simplex[p] = xe;
                values[p] = fe;
            } else {
                simplex[p] = xr;
                values[p] = fr;
            }
        } else if fr < values[p - 1] {
            simplex[p] = xr;
            values[p] = fr;
        } else {
            let (xc, fc) = if fr < values[p] {
                let x = along(-0.5);
                let v = eval(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = eval(&x);
                (x, v)
            };
            if fc < values[p].min(fr) {
                simplex[p] = xc;
                values[p] = fc;
            } else {
                for i in 1..=p {
                    let x: Vec<f64> = (0..p).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
                    values[i] = eval(&x);
                    simplex[i] = x;
                }
            }
        }
    }
    let best = (0..=p).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    Maximum { x: simplex[best].clone(), value: -values[best] }
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `i` in base `b`.
fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let inv = 1.0 / b as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

/// First `n` points of the Halton sequence mapped into `bounds`, skipping
/// the origin.
pub fn halton_box(n: usize, bounds: &[(f64, f64)]) -> Vec<Vec<f64>> {
    assert!(bounds.len() <= PRIMES.len(), "Halton probes support up to {} dimensions", PRIMES.len());
    (1..=n as u64)
        .map(|i| {
            bounds
                .iter()
                .zip(PRIMES)
                .map(|((lo, hi), b)| lo + (hi - lo) * radical_inverse(i, b))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_parabola_peak() {
        let (x, v) = brent_max(|x| 3.0 - (x - 1.3).powi(2), -5.0, 5.0, 1e-10, 200);
        assert!((x - 1.3).abs() < 1e-7);
        assert!((v - 3.0).abs() < 1e-12);
    }

    #[test]
    fn brent_boundary_maximum() {
        let (x, _) = brent_max(|x| x, 0.0, 2.0, 1e-10, 200);
        assert!((x - 2.0).abs() < 1e-6);
    }

    #[test]
    fn brent_narrow_gaussian() {
        let (x, v) = brent_max(|x| (-(x - 0.7f64).powi(2) / 0.02).exp(), 0.0, 1.5, 1e-10, 200);
        assert!((x - 0.7).abs() < 1e-6);
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn nelder_mead_2d_bump() {
        let f = |x: &[f64]| 5.0 * (-((x[0] - 1.0).powi(2) + (x[1] + 2.0).powi(2))).exp();
        let m = nelder_mead_max(f, &[0.0, 0.0], &[(-4.0, 4.0), (-4.0, 4.0)], 1e-12, 2000);
        assert!((m.value - 5.0).abs() < 1e-8);
        assert!((m.x[0] - 1.0).abs() < 1e-3 && (m.x[1] + 2.0).abs() < 1e-3);
    }

    #[test]
    fn nelder_mead_respects_box() {
        let m = nelder_mead_max(|x: &[f64]| x[0] + x[1], &[0.0, 0.0], &[(-1.0, 1.0), (-1.0, 0.5)], 1e-12, 2000);
        assert!(m.x[0] <= 1.0 && m.x[1] <= 0.5);
        assert!((m.value - 1.5).abs() < 1e-6);
    }

    #[test]
    fn halton_first_points() {
        let pts = halton_box(3, &[(0.0, 1.0), (0.0, 1.0)]);
        assert_eq!(pts[0], vec![0.5, 1.0 / 3.0]);
        assert_eq!(pts[1], vec![0.25, 2.0 / 3.0]);
        assert!((pts[2][0] - 0.75).abs() < 1e-15 && (pts[2][1] - 1.0 / 9.0).abs() < 1e-15);
    }
}
