//! Central-difference gradient checking.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Denominator floor of the relative error, so coordinates whose true
/// gradient is zero are judged on absolute error instead.
pub const REL_ERR_FLOOR: f64 = 1e-3;

/// Relative error `|a - b| / max(|a|, |b|, REL_ERR_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR)
}

fn eval(f: &impl Fn(&mut Graph, Var) -> Result<Var>, x: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let v = g.constant(x.clone());
    let out = f(&mut g, v)?;
    Ok(g.value(out).data().iter().sum())
}

/// Compares the reverse-mode gradient of `sum(f(x))` against central
/// differences with per-coordinate step `eps * max(1, |x_i|)`; returns the
/// worst [`relative_error`].
///
/// `f` must be deterministic: freeze any random draws before calling.
pub fn check_gradients(
    f: impl Fn(&mut Graph, Var) -> Result<Var>,
    x: &Tensor,
    eps: f64,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Parameter {
            name: "eps",
            value: eps,
        });
    }
    let mut g = Graph::new();
    let v = g.param(x.clone());
    let out = f(&mut g, v)?;
    let loss = if g.value(out).len() == 1 {
        out
    } else {
        g.sum(out)
    };
    g.backward(loss)?;
    let zero = Tensor::zeros(x.shape());
    let analytic = g.grad(v).unwrap_or(&zero).clone();

    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let xi = x.data()[i];
        let h = eps * xi.abs().max(1.0);
        probe.data_mut()[i] = xi + h;
        let up = eval(&f, &probe)?;
        probe.data_mut()[i] = xi - h;
        let down = eval(&f, &probe)?;
        probe.data_mut()[i] = xi;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn identity_has_no_error() {
        let x = Tensor::vector(vec![0.3, -1.2, 2.0]);
        let err = check_gradients(|_, v| Ok(v), &x, 1e-5).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn l2_norm_matches_closed_form() {
        let x = Tensor::vector(vec![3.0, 4.0]);
        let mut g = Graph::new();
        let v = g.param(x.clone());
        let n = g.l2_norm(v);
        g.backward(n).unwrap();
        assert_eq!(g.grad(v).unwrap().data(), &[0.6, 0.8]);
        let err = check_gradients(|g, v| Ok(g.l2_norm(v)), &x, 1e-5).unwrap();
        assert!(err <= 1e-8, "{err}");
    }

    #[test]
    fn rejects_nonpositive_eps() {
        let x = Tensor::vector(vec![1.0]);
        assert!(check_gradients(|_, v| Ok(v), &x, 0.0).is_err());
    }
}
