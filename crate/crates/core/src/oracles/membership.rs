//! Simplex-based references for hull membership of one neuron.

use crate::error::{Error, Result};
use crate::lp::{solve, LinearProgram, LpStatus, ObjSense, RowSense, INF};
use crate::network::Neuron;
use crate::separation::{Certificate, Direction};

use super::vertices::VertexSet;

/// Dual of the upper membership problem with variables `alpha` (free) and,
/// per slice, `beta`, `gamma` (n each) and the two slab multipliers.
pub fn membership_dual_lp(neuron: &Neuron, xhat: &[f64], zhat: &[f64]) -> LinearProgram {
    let (n, k) = (neuron.dim(), neuron.pieces());
    let h = neuron.activation.breakpoints();
    let mut lp = LinearProgram::new(ObjSense::Minimize);
    let alpha: Vec<usize> = (0..n).map(|j| lp.add_named_var(format!("alpha{j}"), -INF, INF, xhat[j])).collect();
    for i in 0..k {
        let beta: Vec<usize> =
            (0..n).map(|j| lp.add_named_var(format!("beta{i}_{j}"), 0.0, INF, zhat[i] * neuron.upper[j])).collect();
        let gamma: Vec<usize> =
            (0..n).map(|j| lp.add_named_var(format!("gamma{i}_{j}"), 0.0, INF, -zhat[i] * neuron.lower[j])).collect();
        let tu = lp.add_named_var(format!("thu{i}"), 0.0, INF, zhat[i] * (h[i + 1] - neuron.bias));
        let tl = lp.add_named_var(format!("thl{i}"), 0.0, INF, -zhat[i] * (h[i] - neuron.bias));
        let a = neuron.activation.slopes()[i];
        for j in 0..n {
            let w = neuron.weights[j];
            lp.add_row(vec![(beta[j], 1.0), (gamma[j], -1.0), (tu, w), (tl, -w), (alpha[j], 1.0)], RowSense::Eq, a * w);
        }
    }
    lp
}

/// The same dual with every column divided by `|s| |w_j|` (or `|w_j|` when
/// `s = 0`) and zero-weight coordinates dropped; its matrix and right-hand
/// side are in `{0, 1, -1}` for a staircase. Column order per kept
/// coordinate: `alpha`, then per slice `beta`, `gamma`, then the slab pairs.
pub fn scaled_membership_lp(neuron: &Neuron, xhat: &[f64], zhat: &[f64]) -> Result<LinearProgram> {
    let stair = neuron
        .as_staircase()
        .ok_or_else(|| Error::Parameter("scaled dual needs a staircase".into()))?;
    let s = stair.slope();
    let tau = if s == 0.0 { 1.0 } else { s.abs() };
    let keep: Vec<usize> = (0..neuron.dim()).filter(|&j| neuron.weights[j] != 0.0).collect();
    let k = neuron.pieces();
    let h = neuron.activation.breakpoints();
    let mut lp = LinearProgram::new(ObjSense::Minimize);
    let alpha: Vec<usize> = keep
        .iter()
        .map(|&j| lp.add_named_var(format!("alpha{j}"), -INF, INF, tau * neuron.weights[j].abs() * xhat[j]))
        .collect();
    let mut beta = vec![Vec::new(); k];
    let mut gamma = vec![Vec::new(); k];
    for i in 0..k {
        for &j in &keep {
            let sc = tau * neuron.weights[j].abs();
            beta[i].push(lp.add_named_var(format!("beta{i}_{j}"), 0.0, INF, zhat[i] * sc * neuron.upper[j]));
            gamma[i].push(lp.add_named_var(format!("gamma{i}_{j}"), 0.0, INF, -zhat[i] * sc * neuron.lower[j]));
        }
    }
    for i in 0..k {
        let tu = lp.add_named_var(format!("thu{i}"), 0.0, INF, zhat[i] * tau * (h[i + 1] - neuron.bias));
        let tl = lp.add_named_var(format!("thl{i}"), 0.0, INF, -zhat[i] * tau * (h[i] - neuron.bias));
        let a = neuron.activation.slopes()[i] / tau;
        for (p, &j) in keep.iter().enumerate() {
            let sg = neuron.weights[j].signum();
            lp.add_row(
                vec![(beta[i][p], 1.0), (gamma[i][p], -1.0), (tu, sg), (tl, -sg), (alpha[p], 1.0)],
                RowSense::Eq,
                a * sg,
            );
        }
    }
    Ok(lp)
}

fn intercept_mass(neuron: &Neuron, zhat: &[f64]) -> f64 {
    (0..neuron.pieces()).map(|i| zhat[i] * neuron.shifted_intercept(i)).sum()
}

/// Optimal value of the membership dual by the simplex, in the same
/// convention as [`crate::separation::SeparationResult::certificate`].
pub fn membership_value(neuron: &Neuron, xhat: &[f64], zhat: &[f64], direction: Direction) -> Result<Certificate> {
    if direction == Direction::Lower {
        return Ok(match membership_value(&neuron.negated(), xhat, zhat, Direction::Upper)? {
            Certificate::Finite(v) => Certificate::Finite(-v),
            Certificate::Unbounded => Certificate::Unbounded,
        });
    }
    let sol = solve(&membership_dual_lp(neuron, xhat, zhat))?;
    match sol.status {
        LpStatus::Optimal => Ok(Certificate::Finite(sol.objective)),
        LpStatus::Unbounded => Ok(Certificate::Unbounded),
        LpStatus::Infeasible => Err(Error::Numerical("membership dual reported infeasible".into())),
    }
}

/// Tightest bound on `y` at `(xhat, zhat)` over the hull of `vertices`:
/// `max` for [`Direction::Upper`], `min` for [`Direction::Lower`]. `None` when
/// `(xhat, zhat)` is not a mixture of the vertices.
pub fn hull_bound(vertices: &VertexSet, xhat: &[f64], zhat: &[f64], direction: Direction) -> Result<Option<f64>> {
    let sense = match direction {
        Direction::Upper => ObjSense::Maximize,
        Direction::Lower => ObjSense::Minimize,
    };
    let mut lp = LinearProgram::new(sense);
    let lam: Vec<usize> = vertices.vertices.iter().map(|v| lp.add_var(0.0, INF, v.y)).collect();
    for (j, &xj) in xhat.iter().enumerate() {
        let coefs = vertices.vertices.iter().zip(&lam).map(|(v, &c)| (c, v.x[j])).collect();
        lp.add_row(coefs, RowSense::Eq, xj);
    }
    for (i, &zi) in zhat.iter().enumerate() {
        let coefs = vertices.vertices.iter().zip(&lam).filter(|(v, _)| v.piece == i).map(|(_, &c)| (c, 1.0)).collect();
        lp.add_row(coefs, RowSense::Eq, zi);
    }
    let sol = solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(Some(sol.objective)),
        LpStatus::Infeasible => Ok(None),
        LpStatus::Unbounded => Err(Error::Numerical("hull LP cannot be unbounded".into())),
    }
}

/// `max c.x` over slice `i` by the simplex.
pub fn slice_max_lp(neuron: &Neuron, c: &[f64], i: usize) -> Result<f64> {
    let h = neuron.activation.breakpoints();
    let mut lp = LinearProgram::new(ObjSense::Maximize);
    let x: Vec<usize> = (0..neuron.dim()).map(|j| lp.add_var(neuron.lower[j], neuron.upper[j], c[j])).collect();
    let coefs: Vec<(usize, f64)> = x.iter().zip(&neuron.weights).map(|(&v, &w)| (v, w)).collect();
    lp.add_range(coefs, h[i] - neuron.bias, h[i + 1] - neuron.bias);
    let sol = solve(&lp)?;
    if !sol.is_optimal() {
        return Err(Error::Formulation(format!("slice {i} LP is {:?}", sol.status)));
    }
    Ok(sol.objective)
}

/// Hull bound shifted into certificate units (intercepts removed).
pub fn hull_certificate(neuron: &Neuron, vertices: &VertexSet, xhat: &[f64], zhat: &[f64], direction: Direction) -> Result<Certificate> {
    Ok(match hull_bound(vertices, xhat, zhat, direction)? {
        Some(v) => Certificate::Finite(v - intercept_mass(neuron, zhat)),
        None => Certificate::Unbounded,
    })
}
