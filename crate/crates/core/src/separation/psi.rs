//! The set function `psi` over slice index sets and its continuous extension.
//!
//! `psi(K) = sum_{i in K} zhat_i hbar_i + G(zhat(K))` with
//! `G(t) = sum_j min(xbar_j, delta_j t)`. `G` is concave and the cheapest
//! `hbar` mass for a given `t` is convex in `t`, so the minimum over `K` is
//! attained on a prefix of the indices sorted by `hbar`. Walking those
//! prefixes in order of increasing `t` while merging with the sorted ratios
//! `xbar_j / delta_j` evaluates every candidate in linear time.

use crate::error::{Error, Result};
use crate::network::Neuron;

/// Which slab multiplier family the instance describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum Orientation {
    /// Only upper-slab multipliers may be positive.
    UpperSlab,
    /// Only lower-slab multipliers may be positive (signs flipped).
    LowerSlab,
}

/// How far [`minimize_psi_c_with`] scans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scan {
    /// Global minimum.
    Full,
    /// Stop at the first prefix with negative value.
    FirstNegative,
}

#[derive(Debug, Clone)]
pub struct PsiInstance {
    /// Sign pattern in `{0, 1, -1}` used to orient each coordinate.
    pub sign: Vec<i8>,
    pub delta: Vec<f64>,
    pub xbar: Vec<f64>,
    pub hbar: Vec<f64>,
    pub zhat: Vec<f64>,
    pub orientation: Orientation,
    /// Coordinates with `delta > 0`, sorted by `xbar / delta` (stable).
    pub order: Vec<usize>,
}

/// Result of minimizing the continuous extension.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiMinimum {
    pub q: Vec<f64>,
    pub value: f64,
    /// `sum_i zhat_i q_i` at the minimizer.
    pub mass: f64,
}

impl PsiInstance {
    /// Assembles an instance; `xbar` entries are clamped at zero.
    pub fn new(sign: Vec<i8>, delta: Vec<f64>, xbar: Vec<f64>, hbar: Vec<f64>, zhat: Vec<f64>, orientation: Orientation) -> Self {
        let xbar: Vec<f64> = xbar.iter().zip(&delta).map(|(&x, &d)| x.clamp(0.0, d.max(0.0))).collect();
        let mut order: Vec<usize> = (0..delta.len()).filter(|&j| delta[j] > 0.0).collect();
        order.sort_by(|&a, &b| (xbar[a] / delta[a]).total_cmp(&(xbar[b] / delta[b])).then(a.cmp(&b)));
        Self { sign, delta, xbar, hbar, zhat, orientation, order }
    }

    /// Same coordinates with a different slice-side vector.
    pub fn with_hbar(&self, hbar: Vec<f64>) -> Self {
        Self { hbar, ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        self.delta.len()
    }

    pub fn pieces(&self) -> usize {
        self.hbar.len()
    }

    /// Magnitude below which values count as zero.
    pub fn tolerance(&self) -> f64 {
        1e-9 * self.delta.iter().sum::<f64>().max(1.0)
    }

    /// `G(t) = sum_j min(xbar_j, delta_j t)`.
    pub fn coordinate_term(&self, t: f64) -> f64 {
        self.xbar.iter().zip(&self.delta).map(|(&x, &d)| x.min(d * t)).sum()
    }

    pub fn psi(&self, set: &[usize]) -> f64 {
        let mut t = 0.0;
        let mut h = 0.0;
        for &i in set {
            t += self.zhat[i];
            h += self.zhat[i] * self.hbar[i];
        }
        h + self.coordinate_term(t)
    }

    pub fn psi_c(&self, q: &[f64]) -> f64 {
        let mut t = 0.0;
        let mut h = 0.0;
        for (i, &qi) in q.iter().enumerate() {
            t += self.zhat[i] * qi;
            h += self.zhat[i] * self.hbar[i] * qi;
        }
        h + self.coordinate_term(t)
    }

    /// Coordinates that prefer their `xbar` term at mass `t`.
    pub fn support_at(&self, t: f64) -> Vec<usize> {
        (0..self.dim()).filter(|&j| self.delta[j] > 0.0 && self.xbar[j] < self.delta[j] * t).collect()
    }
}

/// Derives the instance for `neuron` at `xhat`, `zhat`.
///
/// `UpperSlab` uses `xbar = delta - r`, `hbar_i = h_i - b - m1`, and
/// `LowerSlab` uses `xbar = r`, `hbar_i = m0 - (h_{i-1} - b)`, where `r_j` is
/// the distance of `xhat_j` from the bound minimizing the signed activity and
/// `m0`, `m1` are the minimum and maximum of that activity over the box.
pub fn build_psi(neuron: &Neuron, xhat: &[f64], zhat: &[f64], orientation: Orientation) -> Result<PsiInstance> {
    let stair = neuron
        .as_staircase()
        .ok_or_else(|| Error::Parameter("activation is not a staircase".into()))?;
    if neuron.is_degenerate() {
        return Err(Error::Degenerate("zero weight vector".into()));
    }
    if xhat.len() != neuron.dim() || zhat.len() != neuron.pieces() {
        return Err(Error::Input("point dimensions do not match the neuron".into()));
    }
    let geo = Geometry::new(neuron, stair.slope(), xhat);
    Ok(geo.instance(orientation, zhat))
}

/// Normalized coordinates shared by every instance built for one point.
#[derive(Debug, Clone)]
pub(crate) struct Geometry {
    /// `|s|`, or 1 when `s = 0`.
    pub scale: f64,
    /// Orientation of each coordinate: `sign(sigma w_j)`.
    pub sign: Vec<i8>,
    pub delta: Vec<f64>,
    /// Distance from the activity-minimizing bound, clamped to `[0, delta]`.
    pub r: Vec<f64>,
    pub total_delta: f64,
    /// Slab of each slice in the shifted signed activity `S in [0, total_delta]`.
    pub slab_lo: Vec<f64>,
    pub slab_hi: Vec<f64>,
    /// Slices whose slope equals the non-zero staircase slope.
    pub sloped: Vec<bool>,
}

impl Geometry {
    pub(crate) fn new(neuron: &Neuron, slope: f64, xhat: &[f64]) -> Self {
        let n = neuron.dim();
        let flip = slope < 0.0;
        let scale = if slope == 0.0 { 1.0 } else { slope.abs() };
        let mut sign = vec![0i8; n];
        let mut delta = vec![0.0; n];
        let mut r = vec![0.0; n];
        let mut m0 = 0.0;
        for j in 0..n {
            let w = if flip { -neuron.weights[j] } else { neuron.weights[j] };
            let (l, u) = (neuron.lower[j], neuron.upper[j]);
            m0 += (w * l).min(w * u);
            if w == 0.0 {
                continue;
            }
            let d = (u - l) * w.abs();
            delta[j] = d;
            if d <= 0.0 {
                continue;
            }
            sign[j] = if w > 0.0 { 1 } else { -1 };
            let dist = if w > 0.0 { xhat[j] - l } else { u - xhat[j] };
            r[j] = (dist * w.abs()).clamp(0.0, d);
        }
        let total_delta: f64 = delta.iter().sum();
        let k = neuron.pieces();
        let h = neuron.activation.breakpoints();
        let b = neuron.bias;
        let mut slab_lo = Vec::with_capacity(k);
        let mut slab_hi = Vec::with_capacity(k);
        for i in 0..k {
            let (lo, hi) = if flip { (-(h[i + 1] - b), -(h[i] - b)) } else { (h[i] - b, h[i + 1] - b) };
            slab_lo.push((lo - m0).clamp(0.0, total_delta));
            slab_hi.push((hi - m0).clamp(0.0, total_delta));
        }
        let sloped = neuron.activation.slopes().iter().map(|&a| slope != 0.0 && a == slope).collect();
        Self { scale, sign, delta, r, total_delta, slab_lo, slab_hi, sloped }
    }

    pub(crate) fn instance(&self, orientation: Orientation, zhat: &[f64]) -> PsiInstance {
        match orientation {
            Orientation::UpperSlab => {
                let xbar = self.delta.iter().zip(&self.r).map(|(d, r)| d - r).collect();
                let hbar = self.slab_hi.iter().map(|h| h - self.total_delta).collect();
                PsiInstance::new(self.sign.clone(), self.delta.clone(), xbar, hbar, zhat.to_vec(), orientation)
            }
            Orientation::LowerSlab => {
                let hbar = self.slab_lo.iter().map(|h| -h).collect();
                let sign = self.sign.iter().map(|s| -s).collect();
                PsiInstance::new(sign, self.delta.clone(), self.r.clone(), hbar, zhat.to_vec(), orientation)
            }
        }
    }

    /// Unscaled `alpha` from a per-coordinate multiple of the sign pattern.
    pub(crate) fn alpha(&self, neuron: &Neuron, unit: &[f64]) -> Vec<f64> {
        (0..self.sign.len())
            .map(|j| {
                if self.sign[j] == 0 || unit[j] == 0.0 {
                    0.0
                } else {
                    self.scale * f64::from(self.sign[j]) * neuron.weights[j].abs() * unit[j]
                }
            })
            .collect()
    }
}

/// Global minimum of the continuous extension over `q in [0,1]^k` with
/// `q_i = 0` outside `allowed`.
pub fn minimize_psi_c(inst: &PsiInstance, allowed: Option<&[bool]>) -> PsiMinimum {
    minimize_psi_c_with(inst, allowed, Scan::Full)
}

pub fn minimize_psi_c_with(inst: &PsiInstance, allowed: Option<&[bool]>, scan: Scan) -> PsiMinimum {
    let k = inst.pieces();
    let mut idx: Vec<usize> = (0..k).filter(|&i| inst.zhat[i] > 0.0 && allowed.map_or(true, |m| m[i])).collect();
    let ascending = idx.windows(2).all(|p| inst.hbar[p[0]] <= inst.hbar[p[1]]);
    let descending = idx.windows(2).all(|p| inst.hbar[p[0]] >= inst.hbar[p[1]]);
    if descending && !ascending {
        idx.reverse();
    } else if !ascending {
        idx.sort_by(|&a, &b| inst.hbar[a].total_cmp(&inst.hbar[b]).then(a.cmp(&b)));
    }
    let tol = inst.tolerance();

    let ratio = |j: usize| inst.xbar[j] / inst.delta[j];
    let mut ptr = 0;
    let mut done = 0.0;
    let mut rest: f64 = inst.order.iter().map(|&j| inst.delta[j]).sum();
    let (mut t, mut h) = (0.0, 0.0);
    let mut best = (0usize, 0.0, 0.0);
    for (p, &i) in idx.iter().enumerate() {
        let t0 = t;
        let t1 = t + inst.zhat[i];
        while ptr < inst.order.len() && ratio(inst.order[ptr]) < t1 {
            let j = inst.order[ptr];
            let r = ratio(j);
            if scan == Scan::FirstNegative && r > t0 {
                // Inside the segment the first sign change can precede the prefix point.
                let value = h + inst.hbar[i] * (r - t0) + done + r * rest.max(0.0);
                if value < -tol {
                    let mut q = vec![0.0; k];
                    for &e in &idx[..p] {
                        q[e] = 1.0;
                    }
                    q[i] = (r - t0) / inst.zhat[i];
                    return PsiMinimum { q, value, mass: r };
                }
            }
            done += inst.xbar[j];
            rest -= inst.delta[j];
            ptr += 1;
        }
        t = t1;
        h += inst.zhat[i] * inst.hbar[i];
        while ptr < inst.order.len() && ratio(inst.order[ptr]) <= t {
            let j = inst.order[ptr];
            done += inst.xbar[j];
            rest -= inst.delta[j];
            ptr += 1;
        }
        let value = h + done + t * rest.max(0.0);
        if value < best.1 {
            best = (p + 1, value, t);
        }
        if scan == Scan::FirstNegative && value < -tol {
            break;
        }
    }
    if best.1 >= -tol {
        return PsiMinimum { q: vec![0.0; k], value: 0.0, mass: 0.0 };
    }
    let mut q = vec![0.0; k];
    for &i in &idx[..best.0] {
        q[i] = 1.0;
    }
    PsiMinimum { q, value: best.1, mass: best.2 }
}

/// Rounds a point with at most one fractional entry to a binary set with
/// negative `psi`, trying both neighbours of the fractional entry.
pub fn round_fractional(q: &[f64], inst: &PsiInstance) -> Result<Vec<usize>> {
    let frac: Vec<usize> = (0..q.len()).filter(|&i| q[i] > 0.0 && q[i] < 1.0).collect();
    if frac.len() > 1 {
        return Err(Error::Input(format!("{} fractional entries, at most one allowed", frac.len())));
    }
    let base: Vec<usize> = (0..q.len()).filter(|&i| q[i] >= 1.0).collect();
    let Some(&f) = frac.first() else {
        return Ok(base);
    };
    let mut with = base.clone();
    with.push(f);
    with.sort_unstable();
    let (v0, v1) = (inst.psi(&base), inst.psi(&with));
    let (set, v) = if v1 < v0 { (with, v1) } else { (base, v0) };
    if v >= 0.0 {
        return Err(Error::Internal(format!("both roundings are nonnegative ({v0}, {v1})")));
    }
    Ok(set)
}
