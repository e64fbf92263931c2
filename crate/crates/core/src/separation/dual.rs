//! Dual certificates for the membership problem of one neuron.

use serde::Serialize;

use super::profile::{slab, slice_maxima};
use crate::error::Result;
use crate::network::Neuron;

/// Tolerance for "exactly" integral scaled components.
const INTEGRAL_TOL: f64 = 1e-9;

/// A feasible solution (or recession ray) of the dual of the upper
/// membership problem. `beta` and `gamma` are implied by `alpha` and the slab
/// multipliers and are produced on demand by [`DualSolution::expand`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub theta_upper: Vec<f64>,
    pub theta_lower: Vec<f64>,
    /// `alpha.xhat + sum_i zhat_i max_{D^i} (a_i w - alpha).x`; for a ray the
    /// slope terms are dropped and this is the cost per unit step.
    pub objective: f64,
    pub is_ray: bool,
}

/// All components divided by `|s| |w_j|` (or `|w_j|` when `s = 0`), and `theta`
/// by `|s|` (or 1).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaledDual {
    pub alpha: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub theta_upper: Vec<f64>,
    pub theta_lower: Vec<f64>,
}

impl DualSolution {
    /// Builds the certificate for `alpha` by solving every slice exactly.
    /// Slices with zero weight get zero slab multipliers.
    pub fn for_alpha(neuron: &Neuron, alpha: Vec<f64>, xhat: &[f64], zhat: &[f64], is_ray: bool) -> Result<Self> {
        let mut sm = slice_maxima(neuron, &alpha, is_ray)?;
        for (m, &z) in sm.multipliers.iter_mut().zip(zhat) {
            if z == 0.0 {
                *m = 0.0;
            }
        }
        let mut objective: f64 = alpha.iter().zip(xhat).map(|(a, x)| a * x).sum();
        objective += zhat.iter().zip(&sm.values).map(|(z, v)| z * v).sum::<f64>();
        Ok(Self {
            alpha,
            theta_upper: sm.multipliers.iter().map(|m| m.max(0.0)).collect(),
            theta_lower: sm.multipliers.iter().map(|m| (-m).max(0.0)).collect(),
            objective,
            is_ray,
        })
    }

    /// Right-hand side `a_i w_j` (0 for rays) minus `alpha_j` and the slab terms.
    fn residual_term(&self, neuron: &Neuron, i: usize, j: usize) -> f64 {
        let a = if self.is_ray { 0.0 } else { neuron.activation.slopes()[i] };
        let w = neuron.weights[j];
        a * w - self.alpha[j] - w * (self.theta_upper[i] - self.theta_lower[i])
    }

    /// Box multipliers `(beta, gamma)`, indexed `[slice][coordinate]`.
    pub fn expand(&self, neuron: &Neuron) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let (k, n) = (neuron.pieces(), neuron.dim());
        let mut beta = vec![vec![0.0; n]; k];
        let mut gamma = vec![vec![0.0; n]; k];
        for i in 0..k {
            for j in 0..n {
                let t = self.residual_term(neuron, i, j);
                beta[i][j] = t.max(0.0);
                gamma[i][j] = (-t).max(0.0);
            }
        }
        (beta, gamma)
    }

    /// Largest violation of the equality rows `beta - gamma + w theta_u -
    /// w theta_l + alpha = a_i w` (right-hand side 0 for rays).
    pub fn row_residual(&self, neuron: &Neuron) -> f64 {
        let (beta, gamma) = self.expand(neuron);
        let mut worst = 0.0_f64;
        for i in 0..neuron.pieces() {
            let a = if self.is_ray { 0.0 } else { neuron.activation.slopes()[i] };
            for j in 0..neuron.dim() {
                let w = neuron.weights[j];
                let lhs = beta[i][j] - gamma[i][j] + w * self.theta_upper[i] - w * self.theta_lower[i] + self.alpha[j];
                worst = worst.max((lhs - a * w).abs());
            }
        }
        worst
    }

    /// Dual objective recomputed from the expanded multipliers.
    pub fn dual_objective(&self, neuron: &Neuron, xhat: &[f64], zhat: &[f64]) -> f64 {
        let (beta, gamma) = self.expand(neuron);
        let mut total: f64 = self.alpha.iter().zip(xhat).map(|(a, x)| a * x).sum();
        for i in 0..neuron.pieces() {
            let (lo, hi) = slab(neuron, i);
            let mut v = hi * self.theta_upper[i] - lo * self.theta_lower[i];
            for j in 0..neuron.dim() {
                v += neuron.upper[j] * beta[i][j] - neuron.lower[j] * gamma[i][j];
            }
            total += zhat[i] * v;
        }
        total
    }

    pub fn scaled(&self, neuron: &Neuron) -> ScaledDual {
        let s = neuron.as_staircase().map_or(0.0, |st| st.slope());
        let tau = if s == 0.0 { 1.0 } else { s.abs() };
        let per = |j: usize| tau * neuron.weights[j].abs();
        let div = |v: f64, d: f64| if d == 0.0 { 0.0 } else { v / d };
        let (beta, gamma) = self.expand(neuron);
        ScaledDual {
            alpha: (0..neuron.dim()).map(|j| div(self.alpha[j], per(j))).collect(),
            beta: beta.iter().map(|row| row.iter().enumerate().map(|(j, &v)| div(v, per(j))).collect()).collect(),
            gamma: gamma.iter().map(|row| row.iter().enumerate().map(|(j, &v)| div(v, per(j))).collect()).collect(),
            theta_upper: self.theta_upper.iter().map(|t| t / tau).collect(),
            theta_lower: self.theta_lower.iter().map(|t| t / tau).collect(),
        }
    }

    /// Every scaled component lies in `{0, 1, -1}` up to rounding.
    pub fn is_integral(&self, neuron: &Neuron) -> bool {
        let sd = self.scaled(neuron);
        let ok = |v: &f64| [0.0, 1.0, -1.0].iter().any(|t| (v - t).abs() <= INTEGRAL_TOL);
        sd.alpha.iter().all(ok)
            && sd.beta.iter().flatten().all(ok)
            && sd.gamma.iter().flatten().all(ok)
            && sd.theta_upper.iter().all(ok)
            && sd.theta_lower.iter().all(ok)
    }

    /// `beta` and `gamma` are never both positive at the same entry.
    pub fn has_complementary_bounds(&self, neuron: &Neuron) -> bool {
        let (beta, gamma) = self.expand(neuron);
        beta.iter().flatten().zip(gamma.iter().flatten()).all(|(b, g)| *b == 0.0 || *g == 0.0)
    }

    /// Coordinates with zero weight carry no multipliers.
    pub fn ignores_zero_weights(&self, neuron: &Neuron) -> bool {
        let (beta, gamma) = self.expand(neuron);
        (0..neuron.dim()).filter(|&j| neuron.weights[j] == 0.0).all(|j| {
            self.alpha[j] == 0.0 && beta.iter().all(|r| r[j] == 0.0) && gamma.iter().all(|r| r[j] == 0.0)
        })
    }

    /// At least one of the two slab multiplier families vanishes.
    pub fn uses_one_slab_side(&self) -> bool {
        self.theta_upper.iter().all(|&t| t == 0.0) || self.theta_lower.iter().all(|&t| t == 0.0)
    }
}
