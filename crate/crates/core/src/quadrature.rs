//! Gauss–Legendre nodes and Beta-weighted quadrature on `[0, 1]`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::math;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`,
/// nodes ascending. Mirrored pairs are exactly symmetric.
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n < 2 {
        return Err(Error::Parameter {
            name: "quadrature_points",
            value: n as f64,
        });
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        // Tricomi's initial guess for the i-th largest root.
        let mut x = math::cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok((nodes, weights))
}

/// `P_n(x)` and `P_n'(x)` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Log-density of `Beta(a, b)` at `t ∈ (0, 1)`.
pub fn beta_log_density(t: f64, a: f64, b: f64) -> f64 {
    let log_beta = math::lgamma(a) + math::lgamma(b) - math::lgamma(a + b);
    (a - 1.0) * math::ln(t) + (b - 1.0) * math::ln(1.0 - t) - log_beta
}

/// Discrete probability measure on `(0, 1)` approximating `Beta(a, b)`:
/// Gauss–Legendre nodes mapped to `[0, 1]`, weighted by the density and
/// renormalised to sum to one.
///
/// Renormalisation keeps the measure exact in mass even when the density
/// is singular at the endpoints (`a < 1` or `b < 1`). For `a == b` the
/// measure is symmetric about 1/2.
pub fn beta_measure(a: f64, b: f64, points: usize) -> Result<Vec<(f64, f64)>> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Parameter {
            name: "beta shape",
            value: a.min(b),
        });
    }
    let (nodes, weights) = gauss_legendre(points)?;
    let mut measure = Vec::with_capacity(points);
    let mut total = 0.0;
    for (x, w) in nodes.iter().zip(&weights) {
        let t = 0.5 * (x + 1.0);
        let mass = 0.5 * w * math::exp(beta_log_density(t, a, b));
        if !mass.is_finite() {
            return Err(Error::Numeric(alloc::format!(
                "Beta({a}, {b}) quadrature weight at t={t} is not finite"
            )));
        }
        total += mass;
        measure.push((t, mass));
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Numeric(alloc::format!(
            "Beta({a}, {b}) quadrature mass {total}"
        )));
    }
    for (_, m) in &mut measure {
        *m /= total;
    }
    Ok(measure)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre(5).unwrap();
        // Exact up to degree 9.
        let int = |f: &dyn Fn(f64) -> f64| x.iter().zip(&w).map(|(x, w)| w * f(*x)).sum::<f64>();
        assert!((int(&|_| 1.0) - 2.0).abs() < 1e-14);
        assert!((int(&|x| x * x) - 2.0 / 3.0).abs() < 1e-14);
        assert!((int(&|x| x.powi(8)) - 2.0 / 9.0).abs() < 1e-14);
        assert!(int(&|x| x.powi(7)).abs() < 1e-14);
    }

    #[test]
    fn legendre_nodes_symmetric_and_sorted() {
        for n in [2, 3, 8, 17, 64, 128] {
            let (x, w) = gauss_legendre(n).unwrap();
            for i in 0..n {
                assert_eq!(x[i], -x[n - 1 - i]);
                assert_eq!(w[i], w[n - 1 - i]);
                if i > 0 {
                    assert!(x[i] > x[i - 1]);
                }
            }
            let total: f64 = w.iter().sum();
            assert!((total - 2.0).abs() < 1e-12, "n={n} total={total}");
        }
    }

    #[test]
    fn beta_measure_smooth_case_matches_moments() {
        // Beta(2, 5): mean 2/7, E[t^2] = a(a+1)/((a+b)(a+b+1)) = 6/56.
        let m = beta_measure(2.0, 5.0, 32).unwrap();
        let mean: f64 = m.iter().map(|(t, w)| t * w).sum();
        let second: f64 = m.iter().map(|(t, w)| t * t * w).sum();
        assert!((mean - 2.0 / 7.0).abs() < 1e-12);
        assert!((second - 6.0 / 56.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(gauss_legendre(1).is_err());
        assert!(beta_measure(0.0, 1.0, 8).is_err());
    }
}
