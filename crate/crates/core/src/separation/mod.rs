//! Exact separation over the convex hull of one neuron's Cayley embedding.
//!
//! A point `(xhat, yhat, zhat)` lies in the hull iff `yhat` is at most
//! `min_alpha F(alpha)` with
//! `F(alpha) = alpha.xhat + sum_i zhat_i (max_{D^i} (a_i w - alpha).x + a_i b + d_i)`.
//! For staircases the minimizing `alpha` is a `{0, 1, -1}` multiple of the
//! oriented weights, and the candidates come from minimizing `psi`. Every
//! candidate is scored by the exact `F`, so a wrong candidate can only cost
//! strength, never validity.

mod dual;
mod profile;
mod psi;

pub use dual::{DualSolution, ScaledDual};
pub use psi::{build_psi, minimize_psi_c, minimize_psi_c_with, round_fractional, Orientation, PsiInstance, PsiMinimum, Scan};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Neuron, NeuronId};
use crate::pwl::decompose_staircase;
use profile::slice_maxima;
use psi::Geometry;

/// Minimum violation for a point to count as outside.
pub const VIOLATION_TOL: f64 = 1e-7;
/// Margin enforced when scaling a recession ray into a concrete cut.
const RAY_MARGIN: f64 = 1e-6;
const RAY_DOUBLINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `y <= alpha.x + sum_i c_i z_i`.
    Upper,
    /// `y >= alpha.x + sum_i c_i z_i`.
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cut {
    pub direction: Direction,
    pub alpha: Vec<f64>,
    pub coefs: Vec<f64>,
    pub neuron: Option<NeuronId>,
}

impl Cut {
    pub fn rhs(&self, x: &[f64], z: &[f64]) -> f64 {
        let ax: f64 = self.alpha.iter().zip(x).map(|(a, v)| a * v).sum();
        ax + self.coefs.iter().zip(z).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Positive when `(x, y, z)` violates the cut.
    pub fn violation(&self, x: &[f64], y: f64, z: &[f64]) -> f64 {
        let r = self.rhs(x, z);
        match self.direction {
            Direction::Upper => y - r,
            Direction::Lower => r - y,
        }
    }

    fn negated(self) -> Self {
        let flip = |v: Vec<f64>| v.into_iter().map(|a| -a).collect();
        let direction = match self.direction {
            Direction::Upper => Direction::Lower,
            Direction::Lower => Direction::Upper,
        };
        Self { direction, alpha: flip(self.alpha), coefs: flip(self.coefs), neuron: self.neuron }
    }
}

/// Exact `z`-coefficients for `alpha`: the slice maxima (upper) or minima
/// (lower) of `(a_i w - alpha).x + a_i b + d_i`.
pub fn retrieve_cut(neuron: &Neuron, alpha: &[f64], direction: Direction) -> Result<Cut> {
    if alpha.len() != neuron.dim() {
        return Err(Error::Input("alpha has the wrong dimension".into()));
    }
    match direction {
        Direction::Upper => {
            let sm = slice_maxima(neuron, alpha, false)?;
            let coefs = (0..neuron.pieces()).map(|i| sm.values[i] + neuron.shifted_intercept(i)).collect();
            Ok(Cut { direction, alpha: alpha.to_vec(), coefs, neuron: None })
        }
        Direction::Lower => {
            let neg: Vec<f64> = alpha.iter().map(|a| -a).collect();
            Ok(retrieve_cut(&neuron.negated(), &neg, Direction::Upper)?.negated())
        }
    }
}

/// Value of the membership dual at the query point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Certificate {
    /// Optimal value of `max_alpha alpha.xhat + sum_i zhat_i opt_{D^i}(a_i w - alpha).x`
    /// for the lower side, or its `min` counterpart for the upper side.
    Finite(f64),
    /// The dual is unbounded: `(xhat, zhat)` is not a mixture of slice points.
    Unbounded,
}

/// Which candidate produced the selected `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Family {
    ZeroSeed,
    SlopeSeed,
    Ray(Orientation),
    /// Unrestricted minimization over all slice sets.
    Point,
    /// Minimization restricted to sloped slices.
    PointSloped,
    /// Minimization restricted to flat slices.
    PointFlat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationResult {
    /// Violated inequality, if any.
    pub cut: Option<Cut>,
    pub certificate: Certificate,
    /// Tightest bound on `y` at `(xhat, zhat)`: `min F` for the upper side,
    /// `max` for the lower side; infinite when unbounded.
    pub bound: f64,
    /// Certificate for the upper problem (of `-g` for the lower side).
    pub dual: Option<DualSolution>,
    pub family: Option<Family>,
}

impl SeparationResult {
    pub fn is_violated(&self) -> bool {
        self.cut.is_some()
    }

    fn flipped(self) -> Self {
        Self {
            cut: self.cut.map(Cut::negated),
            certificate: match self.certificate {
                Certificate::Finite(v) => Certificate::Finite(-v),
                Certificate::Unbounded => Certificate::Unbounded,
            },
            bound: -self.bound,
            ..self
        }
    }
}

/// Outcome of the candidate search on the upper side.
#[derive(Debug, Clone)]
enum Search {
    Bounded { alpha: Vec<f64>, value: f64, family: Family },
    Ray { direction: Vec<f64>, cost: f64, orientation: Orientation },
}

fn check_point(neuron: &Neuron, xhat: &[f64], zhat: &[f64]) -> Result<()> {
    if neuron.is_degenerate() {
        return Err(Error::Degenerate("zero weight vector".into()));
    }
    if xhat.len() != neuron.dim() || xhat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("xhat has the wrong dimension or is not finite".into()));
    }
    if zhat.len() != neuron.pieces() {
        return Err(Error::Input("zhat has the wrong dimension".into()));
    }
    let sum: f64 = zhat.iter().sum();
    if zhat.iter().any(|&z| !(z >= -VIOLATION_TOL)) || (sum - 1.0).abs() > VIOLATION_TOL {
        return Err(Error::Input(format!("zhat is not in the simplex (sum {sum})")));
    }
    Ok(())
}

/// `F(alpha)`: the cut's right-hand side at `(xhat, zhat)`.
fn cut_value(neuron: &Neuron, alpha: &[f64], xhat: &[f64], zhat: &[f64]) -> Result<f64> {
    Ok(retrieve_cut(neuron, alpha, Direction::Upper)?.rhs(xhat, zhat))
}

/// Recession cost of `alpha = direction` (no slopes, no intercepts).
fn ray_cost(neuron: &Neuron, direction: &[f64], xhat: &[f64], zhat: &[f64]) -> Result<f64> {
    let sm = slice_maxima(neuron, direction, true)?;
    let dx: f64 = direction.iter().zip(xhat).map(|(a, x)| a * x).sum();
    Ok(dx + zhat.iter().zip(&sm.values).map(|(z, v)| z * v).sum::<f64>())
}

fn search_upper(neuron: &Neuron, slope: f64, xhat: &[f64], zhat: &[f64]) -> Result<Search> {
    let geo = Geometry::new(neuron, slope, xhat);
    let z: Vec<f64> = zhat.iter().map(|v| v.max(0.0)).collect();
    let n = neuron.dim();

    // Unboundedness: a negative prefix of either orientation yields a ray.
    for orientation in [Orientation::UpperSlab, Orientation::LowerSlab] {
        let inst = geo.instance(orientation, &z);
        let m = minimize_psi_c_with(&inst, None, Scan::FirstNegative);
        if m.value >= 0.0 {
            continue;
        }
        let mut unit = vec![0.0; n];
        let step = if orientation == Orientation::UpperSlab { -1.0 } else { 1.0 };
        for j in inst.support_at(m.mass) {
            unit[j] = step;
        }
        let direction = geo.alpha(neuron, &unit);
        let cost = ray_cost(neuron, &direction, xhat, &z)?;
        if cost < -inst.tolerance() * geo.scale {
            return Ok(Search::Ray { direction, cost, orientation });
        }
        log::debug!("discarding ray with nonnegative exact cost {cost}");
    }

    let k = neuron.pieces();
    let target: Vec<f64> = (0..k).map(|i| if geo.sloped[i] { geo.slab_hi[i] } else { geo.slab_lo[i] }).collect();
    let lower = geo.instance(Orientation::LowerSlab, &z).with_hbar(target.iter().map(|v| -v).collect());
    let upper = geo.instance(Orientation::UpperSlab, &z).with_hbar(target.iter().map(|v| v - geo.total_delta).collect());
    let flat: Vec<bool> = geo.sloped.iter().map(|s| !s).collect();
    let total: f64 = z.iter().sum();

    let mut units: Vec<(Family, Vec<f64>)> = Vec::new();
    let ones: Vec<f64> = geo.sign.iter().map(|&s| if s == 0 { 0.0 } else { 1.0 }).collect();
    units.push((Family::ZeroSeed, vec![0.0; n]));
    units.push((Family::SlopeSeed, ones));
    let mass_unit = |mass: f64| {
        let mut unit = vec![0.0; n];
        for j in lower.support_at(mass) {
            unit[j] = 1.0;
        }
        unit
    };
    let all = minimize_psi_c(&lower, None);
    units.push((Family::Point, mass_unit(all.mass)));
    let sloped = minimize_psi_c(&lower, Some(&geo.sloped));
    units.push((Family::PointSloped, mass_unit(sloped.mass)));
    let flat_min = minimize_psi_c(&upper, Some(&flat));
    units.push((Family::PointFlat, mass_unit((total - flat_min.mass).max(0.0))));
    // The same supports shifted by -1 on the active coordinates.
    for idx in 2..units.len() {
        let (family, unit) = &units[idx];
        let shifted = unit.iter().zip(&geo.sign).map(|(u, &s)| if s == 0 { 0.0 } else { u - 1.0 }).collect();
        units.push((*family, shifted));
    }

    let mut scored = Vec::with_capacity(units.len());
    for (family, unit) in units {
        let alpha = geo.alpha(neuron, &unit);
        let value = cut_value(neuron, &alpha, xhat, &z)?;
        scored.push((alpha, value, family));
    }
    let best = scored.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let tie = best + 1e-12 * best.abs().max(1.0);
    // Among tied optima prefer a certificate using one slab side only.
    let mut chosen = None;
    for (idx, cand) in scored.iter().enumerate().filter(|(_, c)| c.1 <= tie) {
        if chosen.is_none() {
            chosen = Some(idx);
        }
        if DualSolution::for_alpha(neuron, cand.0.clone(), xhat, &z, false)?.uses_one_slab_side() {
            chosen = Some(idx);
            break;
        }
    }
    let (alpha, value, family) = scored.swap_remove(chosen.expect("candidate list is non-empty"));
    Ok(Search::Bounded { alpha, value, family })
}

/// Smallest power-of-two multiple `lambda` of the ray, starting from the
/// linear estimate, with `yhat - value(lambda) >= RAY_MARGIN`.
fn scale_ray(mut value: impl FnMut(f64) -> Result<f64>, yhat: f64, base: f64, cost: f64) -> Result<Option<(f64, f64)>> {
    let mut lambda = ((base - yhat + RAY_MARGIN) / -cost).max(1.0);
    for _ in 0..RAY_DOUBLINGS {
        let v = value(lambda)?;
        if yhat - v >= RAY_MARGIN {
            return Ok(Some((lambda, v)));
        }
        lambda *= 2.0;
    }
    Ok(None)
}

fn intercept_mass(neuron: &Neuron, zhat: &[f64]) -> f64 {
    (0..neuron.pieces()).map(|i| zhat[i] * neuron.shifted_intercept(i)).sum()
}

/// Separates `(xhat, yhat, zhat)` from the hull of a staircase neuron.
pub fn separate_staircase(neuron: &Neuron, xhat: &[f64], yhat: f64, zhat: &[f64], direction: Direction) -> Result<SeparationResult> {
    check_point(neuron, xhat, zhat)?;
    let stair = neuron
        .as_staircase()
        .ok_or_else(|| Error::Parameter("activation is not a staircase".into()))?;
    if direction == Direction::Lower {
        return Ok(separate_staircase(&neuron.negated(), xhat, -yhat, zhat, Direction::Upper)?.flipped());
    }
    let z: Vec<f64> = zhat.iter().map(|v| v.max(0.0)).collect();
    match search_upper(neuron, stair.slope(), xhat, &z)? {
        Search::Bounded { alpha, value, family } => {
            let dual = DualSolution::for_alpha(neuron, alpha.clone(), xhat, &z, false)?;
            let cut = if yhat - value > VIOLATION_TOL { Some(retrieve_cut(neuron, &alpha, Direction::Upper)?) } else { None };
            Ok(SeparationResult {
                cut,
                certificate: Certificate::Finite(value - intercept_mass(neuron, &z)),
                bound: value,
                dual: Some(dual),
                family: Some(family),
            })
        }
        Search::Ray { direction, cost, orientation } => {
            let dual = DualSolution::for_alpha(neuron, direction.clone(), xhat, &z, true)?;
            let base = cut_value(neuron, &vec![0.0; neuron.dim()], xhat, &z)?;
            let eval = |lambda: f64| {
                let alpha: Vec<f64> = direction.iter().map(|d| d * lambda).collect();
                cut_value(neuron, &alpha, xhat, &z)
            };
            let cut = match scale_ray(eval, yhat, base, cost)? {
                Some((lambda, _)) => {
                    let alpha: Vec<f64> = direction.iter().map(|d| d * lambda).collect();
                    Some(retrieve_cut(neuron, &alpha, Direction::Upper)?)
                }
                None => None,
            };
            Ok(SeparationResult {
                cut,
                certificate: Certificate::Unbounded,
                bound: f64::NEG_INFINITY,
                dual: Some(dual),
                family: Some(Family::Ray(orientation)),
            })
        }
    }
}

/// Separates for a general piecewise-linear neuron by splitting it into
/// staircases on the common grid and summing the component cuts.
pub fn separate_pwl(neuron: &Neuron, xhat: &[f64], yhat: f64, zhat: &[f64], direction: Direction) -> Result<SeparationResult> {
    check_point(neuron, xhat, zhat)?;
    if neuron.as_staircase().is_some() {
        return separate_staircase(neuron, xhat, yhat, zhat, direction);
    }
    if direction == Direction::Lower {
        return Ok(separate_pwl(&neuron.negated(), xhat, -yhat, zhat, Direction::Upper)?.flipped());
    }
    let z: Vec<f64> = zhat.iter().map(|v| v.max(0.0)).collect();
    let dec = decompose_staircase(&neuron.activation);
    let mut parts: Vec<(Neuron, f64)> = Vec::new();
    if let Some(f0) = dec.constant_part {
        parts.push((neuron.with_activation(f0), 0.0));
    }
    for st in dec.staircases {
        let s = st.slope();
        parts.push((neuron.with_activation(st.into_function()), s));
    }

    let n = neuron.dim();
    let mut alphas: Vec<Vec<f64>> = Vec::with_capacity(parts.len());
    let mut values = Vec::with_capacity(parts.len());
    let mut ray: Option<(usize, Vec<f64>, f64)> = None;
    for (v, (part, slope)) in parts.iter().enumerate() {
        match search_upper(part, *slope, xhat, &z)? {
            Search::Bounded { alpha, value, .. } => {
                alphas.push(alpha);
                values.push(value);
            }
            Search::Ray { direction, cost, .. } => {
                values.push(cut_value(part, &vec![0.0; n], xhat, &z)?);
                alphas.push(vec![0.0; n]);
                if ray.is_none() {
                    ray = Some((v, direction, cost));
                }
            }
        }
    }

    let sum_cut = |alphas: &[Vec<f64>]| -> Result<Cut> {
        let mut alpha = vec![0.0; n];
        let mut coefs = vec![0.0; neuron.pieces()];
        for ((part, _), a) in parts.iter().zip(alphas) {
            let c = retrieve_cut(part, a, Direction::Upper)?;
            alpha.iter_mut().zip(&c.alpha).for_each(|(s, v)| *s += v);
            coefs.iter_mut().zip(&c.coefs).for_each(|(s, v)| *s += v);
        }
        Ok(Cut { direction: Direction::Upper, alpha, coefs, neuron: None })
    };

    match ray {
        None => {
            let value: f64 = values.iter().sum();
            let cut = if yhat - value > VIOLATION_TOL { Some(sum_cut(&alphas)?) } else { None };
            Ok(SeparationResult {
                cut,
                certificate: Certificate::Finite(value - intercept_mass(neuron, &z)),
                bound: value,
                dual: None,
                family: None,
            })
        }
        Some((u, direction, cost)) => {
            let base: f64 = values.iter().sum();
            let others = base - values[u];
            let part = &parts[u].0;
            let eval = |lambda: f64| {
                let alpha: Vec<f64> = direction.iter().map(|d| d * lambda).collect();
                Ok(others + cut_value(part, &alpha, xhat, &z)?)
            };
            let cut = match scale_ray(eval, yhat, base, cost)? {
                Some((lambda, _)) => {
                    alphas[u] = direction.iter().map(|d| d * lambda).collect();
                    Some(sum_cut(&alphas)?)
                }
                None => None,
            };
            Ok(SeparationResult { cut, certificate: Certificate::Unbounded, bound: f64::NEG_INFINITY, dual: None, family: None })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwl::PiecewiseLinear;

    fn relu_neuron(w: Vec<f64>, b: f64) -> Neuron {
        let n = w.len();
        let f = PiecewiseLinear::new(vec![-100.0, 0.0, 100.0], vec![0.0, 1.0], vec![0.0, 0.0]).unwrap();
        Neuron::new(w, b, &f, vec![-1.0; n], vec![1.0; n]).unwrap()
    }

    #[test]
    fn vertices_are_not_separated() {
        let nr = relu_neuron(vec![1.0, -2.0], 0.5);
        for x in [[-1.0, -1.0], [1.0, -1.0], [0.3, 0.9], [1.0, 1.0]] {
            let y = nr.output(&x).unwrap();
            let i = nr.activation.piece_of(nr.pre_activation(&x)).unwrap();
            let mut z = vec![0.0; 2];
            z[i] = 1.0;
            for dir in [Direction::Upper, Direction::Lower] {
                let r = separate_staircase(&nr, &x, y, &z, dir).unwrap();
                assert!(r.cut.is_none(), "{x:?} {dir:?}");
            }
        }
    }

    #[test]
    fn point_above_the_hull_is_cut() {
        let nr = relu_neuron(vec![1.0], 0.0);
        // x = 0 with z split evenly: the hull allows y up to 0.5 at most.
        let r = separate_staircase(&nr, &[0.0], 0.9, &[0.5, 0.5], Direction::Upper).unwrap();
        let cut = r.cut.expect("violated");
        assert!(cut.violation(&[0.0], 0.9, &[0.5, 0.5]) > 1e-7);
        assert!((r.bound - 0.5).abs() < 1e-9);
    }

    #[test]
    fn single_piece_retrieval_is_the_intercept() {
        let f = PiecewiseLinear::new(vec![-10.0, 10.0], vec![2.0], vec![1.0]).unwrap();
        let nr = Neuron::new(vec![1.0, 1.0], 0.5, &f, vec![0.0; 2], vec![1.0; 2]).unwrap();
        let cut = retrieve_cut(&nr, &[2.0, 2.0], Direction::Upper).unwrap();
        assert!((cut.coefs[0] - (2.0 * 0.5 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn unit_square_slices() {
        // f with 4 pieces over w.x = x1 + x2 in [0, 2].
        let f = PiecewiseLinear::new(vec![0.0, 0.5, 1.0, 1.5, 2.0], vec![0.0; 4], vec![0.0; 4]).unwrap();
        let nr = Neuron::new(vec![1.0, 1.0], 0.0, &f, vec![0.0; 2], vec![1.0; 2]).unwrap();
        let cut = retrieve_cut(&nr, &[-1.0, -2.0], Direction::Upper).unwrap();
        // max of x1 + 2 x2 on each slab.
        let want = [0.5 * 2.0, 1.0 * 2.0, 1.0 * 2.0 + 0.5, 3.0];
        for (c, w) in cut.coefs.iter().zip(want) {
            assert!((c - w).abs() < 1e-12, "{:?}", cut.coefs);
        }
    }

    #[test]
    fn non_mixture_is_unbounded() {
        let nr = relu_neuron(vec![1.0], 0.0);
        // x = 1 with all mass on the negative slice is not a slice mixture.
        let r = separate_staircase(&nr, &[1.0], 0.0, &[1.0, 0.0], Direction::Upper).unwrap();
        assert_eq!(r.certificate, Certificate::Unbounded);
        assert!(r.cut.unwrap().violation(&[1.0], 0.0, &[1.0, 0.0]) >= 1e-6);
    }
}
