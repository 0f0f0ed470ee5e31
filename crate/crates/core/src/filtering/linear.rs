//! Linear-Gaussian state-space model and its closed-form Kalman filter.
//!
//! `sₜ = A sₜ₋₁ + aₜ + qₜ`, `qₜ ~ N(0, diag(σ_q²))`
//! `oₜ = C sₜ + rₜ`, `rₜ ~ N(0, diag(σ_r²))`
//!
//! The particle model is the bootstrap filter for this SSM; the Kalman
//! recursion is the exact reference it is checked against.

use super::model::{ParticleModel, Propagation};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::gaussian;
use crate::nn::Params;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearGaussian {
    /// `[d, d]`
    pub transition: Tensor,
    /// `[m, d]`
    pub emission: Tensor,
    pub process_std: Vec<f64>,
    pub obs_std: Vec<f64>,
}

impl LinearGaussian {
    pub fn new(transition: Tensor, emission: Tensor, process_std: Vec<f64>, obs_std: Vec<f64>) -> Result<Self> {
        let d = transition.rows();
        if transition.rank() != 2 || transition.cols() != d {
            return Err(Error::shape("linear_gaussian", transition.shape(), &[d, d]));
        }
        if emission.rank() != 2 || emission.cols() != d {
            return Err(Error::shape("linear_gaussian", emission.shape(), &[obs_std.len(), d]));
        }
        if process_std.len() != d || obs_std.len() != emission.rows() {
            return Err(Error::Config("noise dimensions do not match the model".into()));
        }
        if process_std.iter().chain(&obs_std).any(|&s| !(s >= 0.0)) {
            return Err(Error::Config("noise std must be non-negative".into()));
        }
        Ok(LinearGaussian {
            transition,
            emission,
            process_std,
            obs_std,
        })
    }

    /// Scalar random walk `xₜ = a·xₜ₋₁ + uₜ + N(0, q²)`, `oₜ = xₜ + N(0, r²)`.
    pub fn scalar(a: f64, q: f64, r: f64) -> Result<Self> {
        Self::new(Tensor::matrix(1, 1, vec![a])?, Tensor::matrix(1, 1, vec![1.0])?, vec![q], vec![r])
    }

    pub fn obs_dim(&self) -> usize {
        self.emission.rows()
    }

    fn mean<'t>(&self, prev: Var<'t>, action: &[f64]) -> Result<Var<'t>> {
        let tape = prev.tape();
        let n = prev.shape()[0];
        let moved = prev.matmul(tape.constant(self.transition.clone()).transpose()?)?;
        if action.is_empty() {
            return Ok(moved);
        }
        moved.add(tape.constant(Tensor::vector(action.to_vec())).broadcast_rows(n)?)
    }
}

impl ParticleModel for LinearGaussian {
    fn state_dim(&self) -> usize {
        self.transition.rows()
    }

    fn encode_observations<'t>(&self, tape: &'t Tape, _params: &Params<'t>, observations: &Tensor) -> Result<Var<'t>> {
        if observations.rank() != 2 || observations.cols() != self.obs_dim() {
            return Err(Error::shape("encode_observations", observations.shape(), &[self.obs_dim()]));
        }
        Ok(tape.constant(observations.clone()))
    }

    fn propagate<'t>(
        &self,
        _params: &Params<'t>,
        prev: Var<'t>,
        action: &[f64],
        _features: Var<'t>,
        noise: &Tensor,
    ) -> Result<Propagation<'t>> {
        let d = self.state_dim();
        let scaled: Vec<f64> = noise
            .data()
            .iter()
            .enumerate()
            .map(|(i, e)| e * self.process_std[i % d])
            .collect();
        let eps = prev.tape().constant(Tensor::new(noise.shape().to_vec(), scaled)?);
        let states = self.mean(prev, action)?.add(eps)?;
        let log_p = gaussian::standardized_log_density(eps, &self.process_std)?;
        Ok(Propagation {
            states,
            log_dynamics: log_p,
            log_proposal: log_p,
        })
    }

    fn log_likelihood<'t>(&self, _params: &Params<'t>, states: Var<'t>, features: Var<'t>) -> Result<Var<'t>> {
        let n = states.shape()[0];
        let tape = states.tape();
        let predicted = states.matmul(tape.constant(self.emission.clone()).transpose()?)?;
        gaussian::log_density(features.broadcast_rows(n)?, predicted, &self.obs_std)
    }

    fn log_dynamics<'t>(&self, _params: &Params<'t>, states: Var<'t>, prev: Var<'t>, action: &[f64]) -> Result<Var<'t>> {
        gaussian::log_density(states, self.mean(prev, action)?, &self.process_std)
    }
}

/// Exact filtering distributions `p(sₜ | o₁:ₜ)` for `t = 1..T`.
#[derive(Clone, Debug, PartialEq)]
pub struct KalmanOutput {
    pub means: Vec<Vec<f64>>,
    /// Row-major `d × d` posterior covariances.
    pub covariances: Vec<Vec<f64>>,
    pub predicted_covariances: Vec<Vec<f64>>,
    pub gains: Vec<Vec<f64>>,
    /// `log p(o₁:T)`.
    pub log_marginal: f64,
}

impl KalmanOutput {
    /// Marginal posterior standard deviations at step index `t`.
    pub fn std(&self, t: usize) -> Vec<f64> {
        let d = self.means[t].len();
        (0..d).map(|i| self.covariances[t][i * d + i].max(0.0).sqrt()).collect()
    }
}

// Small dense row-major helpers; d is at most a handful.
fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for p in 0..k {
            let aip = a[i * k + p];
            for j in 0..m {
                out[i * m + j] += aip * b[p * m + j];
            }
        }
    }
    out
}

fn transpose(a: &[f64], n: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            out[j * n + i] = a[i * m + j];
        }
    }
    out
}

/// Lower Cholesky factor; fails unless `a` is symmetric positive definite.
fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                let diag = a[i * n + i] - s;
                if !(diag > 0.0) {
                    return Err(Error::Numerical("covariance is not positive definite".into()));
                }
                l[i * n + i] = diag.sqrt();
            } else {
                l[i * n + j] = (a[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Solve `A X = B` for SPD `A` (`n × n`) and `B` (`n × m`) via Cholesky.
fn spd_solve(a: &[f64], b: &[f64], n: usize, m: usize) -> Result<(Vec<f64>, f64)> {
    let l = cholesky(a, n)?;
    let mut x = b.to_vec();
    for col in 0..m {
        for i in 0..n {
            let s: f64 = (0..i).map(|k| l[i * n + k] * x[k * m + col]).sum();
            x[i * m + col] = (x[i * m + col] - s) / l[i * n + i];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k * m + col]).sum();
            x[i * m + col] = (x[i * m + col] - s) / l[i * n + i];
        }
    }
    let log_det = 2.0 * (0..n).map(|i| l[i * n + i].ln()).sum::<f64>();
    Ok((x, log_det))
}

/// Kalman filter for `model` with prior `s₀ ~ N(mean0, cov0)`.
///
/// `observations` is `[T, m]`, `actions` is `[T, d]` or `[T, 0]`.
pub fn kalman_oracle(
    model: &LinearGaussian,
    mean0: &[f64],
    cov0: &[f64],
    observations: &Tensor,
    actions: &Tensor,
) -> Result<KalmanOutput> {
    let d = model.state_dim();
    let m = model.obs_dim();
    if mean0.len() != d || cov0.len() != d * d {
        return Err(Error::Config("prior has the wrong dimension".into()));
    }
    if observations.rank() != 2 || observations.cols() != m {
        return Err(Error::shape("kalman_oracle", observations.shape(), &[m]));
    }
    let steps = observations.rows();
    if actions.rows() != steps {
        return Err(Error::shape("kalman_oracle", actions.shape(), &[steps, d]));
    }
    let a = model.transition.data();
    let c = model.emission.data();
    let at = transpose(a, d, d);
    let ct = transpose(c, m, d);

    let mut mean = mean0.to_vec();
    let mut cov = cov0.to_vec();
    let mut out = KalmanOutput {
        means: Vec::with_capacity(steps),
        covariances: Vec::with_capacity(steps),
        predicted_covariances: Vec::with_capacity(steps),
        gains: Vec::with_capacity(steps),
        log_marginal: 0.0,
    };
    for t in 0..steps {
        // predict
        mean = matmul(a, &mean, d, d, 1);
        let action = actions.row(t);
        if !action.is_empty() {
            for (mi, ai) in mean.iter_mut().zip(action) {
                *mi += ai;
            }
        }
        cov = matmul(&matmul(a, &cov, d, d, d), &at, d, d, d);
        for i in 0..d {
            cov[i * d + i] += model.process_std[i].powi(2);
        }
        out.predicted_covariances.push(cov.clone());

        // update
        let pct = matmul(&cov, &ct, d, d, m);
        let mut s = matmul(c, &pct, m, d, m);
        for i in 0..m {
            s[i * m + i] += model.obs_std[i].powi(2);
        }
        let innovation: Vec<f64> = observations
            .row(t)
            .iter()
            .zip(matmul(c, &mean, m, d, 1))
            .map(|(o, p)| o - p)
            .collect();
        // K = P Cᵀ S⁻¹, computed as (S⁻¹ (P Cᵀ)ᵀ)ᵀ since S is symmetric.
        let (kt, log_det_s) = spd_solve(&s, &transpose(&pct, d, m), m, d)?;
        let gain = transpose(&kt, m, d);
        let (s_inv_innov, _) = spd_solve(&s, &innovation, m, 1)?;
        let quad: f64 = innovation.iter().zip(&s_inv_innov).map(|(a, b)| a * b).sum();
        out.log_marginal += -0.5 * (quad + log_det_s + m as f64 * (2.0 * std::f64::consts::PI).ln());

        let correction = matmul(&gain, &innovation, d, m, 1);
        for (mi, ci) in mean.iter_mut().zip(correction) {
            *mi += ci;
        }
        let kc = matmul(&gain, c, d, m, d);
        let kcp = matmul(&kc, &cov, d, d, d);
        for (p, k) in cov.iter_mut().zip(kcp) {
            *p -= k;
        }
        out.means.push(mean.clone());
        out.covariances.push(cov.clone());
        out.gains.push(gain);
    }
    Ok(out)
}
