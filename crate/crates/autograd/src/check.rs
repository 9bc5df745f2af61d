//! Central finite-difference verification utilities.
//!
//! `numeric_gradient` never touches the backward pass: it re-evaluates a
//! forward-only closure at perturbed inputs, so it stays an independent
//! oracle for whatever the recorded graph computes.

use crate::tensor::Tensor;

/// Central finite differences of a scalar function, one coordinate at a time.
pub fn numeric_gradient<F>(f: &mut F, x: &[f64], eps: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let fp = f(&probe);
        probe[i] = x[i] - eps;
        let fm = f(&probe);
        probe[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * eps);
    }
    grad
}

/// Pointwise relative error with a small absolute floor so that exact zeros
/// compare clean.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

/// Compare the recorded-graph gradient of a scalar function against central
/// finite differences, input by input. `f` receives freshly built tensors
/// (shape/value pairs from `inputs`) and must return a scalar tensor.
///
/// Returns the worst relative error over all inputs, or an error message
/// naming the offending input and coordinate.
pub fn check_gradients<F, E>(
    inputs: &[(Vec<usize>, Vec<f64>)],
    eps: f64,
    tol: f64,
    f: F,
) -> std::result::Result<f64, String>
where
    F: Fn(&[Tensor<f64>]) -> std::result::Result<Tensor<f64>, E>,
    E: std::fmt::Display + std::fmt::Debug,
{
    // Analytic pass.
    let tensors: Vec<Tensor<f64>> = inputs
        .iter()
        .map(|(shape, vals)| Tensor::param(shape, vals.clone()).expect("input shape"))
        .collect();
    let loss = f(&tensors).map_err(|e| format!("forward failed: {e}"))?;
    if loss.numel() != 1 {
        return Err(format!("function returned {} elements, expected scalar", loss.numel()));
    }
    loss.backward().map_err(|e| format!("backward failed: {e}"))?;

    let mut worst = 0.0f64;
    for (k, (_, vals)) in inputs.iter().enumerate() {
        let analytic = tensors[k].grad().unwrap_or_else(|| vec![0.0; vals.len()]);
        let mut eval = |xs: &[f64]| -> f64 {
            let rebuilt: Vec<Tensor<f64>> = inputs
                .iter()
                .enumerate()
                .map(|(j, (s, v))| {
                    let data = if j == k { xs.to_vec() } else { v.clone() };
                    Tensor::from_vec(s, data).expect("input shape")
                })
                .collect();
            f(&rebuilt).expect("forward failed during probing").item()
        };
        let numeric = numeric_gradient(&mut eval, vals, eps);
        for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
            let e = rel_err(a, n);
            if e > tol {
                return Err(format!(
                    "input {k} coord {i}: analytic {a:e} vs numeric {n:e} (rel err {e:e} > tol {tol:e})"
                ));
            }
            worst = worst.max(e);
        }
    }
    Ok(worst)
}
