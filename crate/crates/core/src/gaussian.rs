//! Diagonal Gaussian log densities, row-wise over `[n, d]` inputs.

use std::f64::consts::PI;

use crate::autodiff::{Tensor, Var};
use crate::error::{Error, Result};

/// `log N(x_i; mean_i, diag(std²))` per row of `x`.
///
/// `mean` is `[n, d]`; `std` holds one positive entry per dimension.
pub fn log_density<'t>(x: Var<'t>, mean: Var<'t>, std: &[f64]) -> Result<Var<'t>> {
    let z = x.sub(mean)?;
    standardized_log_density(z, std)
}

/// Same as [`log_density`] with the residual `x - mean` already formed.
pub fn standardized_log_density<'t>(residual: Var<'t>, std: &[f64]) -> Result<Var<'t>> {
    let shape = residual.shape();
    if shape.len() != 2 || shape[1] != std.len() {
        return Err(Error::shape("gaussian_log_density", &shape, &[std.len()]));
    }
    if std.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::domain("gaussian_log_density", format!("std must be positive, got {std:?}")));
    }
    let n = shape[0];
    let tape = residual.tape();
    let inv = tape
        .constant(Tensor::vector(std.iter().map(|s| 1.0 / s).collect()))
        .broadcast_rows(n)?;
    let z = residual.mul(inv)?;
    let norm: f64 = std.iter().map(|s| s.ln()).sum::<f64>() + 0.5 * std.len() as f64 * (2.0 * PI).ln();
    Ok(z.square().sum_axis(1)?.scale(-0.5).shift(-norm))
}

/// Standard normal log density per row.
pub fn standard_normal<'t>(u: Var<'t>) -> Result<Var<'t>> {
    let d = u.shape().get(1).copied().unwrap_or(0);
    standardized_log_density(u, &vec![1.0; d])
}

/// Scalar reference formula.
pub fn log_density_scalar(x: &[f64], mean: &[f64], std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(std)
        .map(|((x, m), s)| -0.5 * ((x - m) / s).powi(2) - s.ln() - 0.5 * (2.0 * PI).ln())
        .sum()
}
