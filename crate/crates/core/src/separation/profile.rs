//! Exact inner maximization over the slices `D^i`.
//!
//! For a fixed objective `c` the map `P -> max { c.x : l <= x <= u, w.x = P }`
//! is concave and piecewise linear. It is built once per distinct objective
//! (one sort) and then read at each slice's clamp point by binary search, so
//! all `k` slice maxima cost `O(n log n + k log n)`.

use crate::error::{Error, Result};
use crate::network::Neuron;

/// Relative tolerance for an empty slice.
const SLAB_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub(crate) struct Profile {
    p0: f64,
    v0: f64,
    up: Walk,
    down: Walk,
}

/// Segments leaving the box optimum in one direction of `P`.
#[derive(Debug, Clone, Default)]
struct Walk {
    /// Distance from `p0` after each segment.
    reach: Vec<f64>,
    /// Value change from `v0` after each segment.
    gain: Vec<f64>,
    /// Value change per unit of `P` (signed along increasing `P`).
    slope: Vec<f64>,
}

impl Walk {
    fn build(mut segs: Vec<(f64, f64)>, ascending: bool) -> Self {
        // (width, slope); the walk takes the least costly segments first.
        if ascending {
            segs.sort_by(|a, b| a.1.total_cmp(&b.1));
        } else {
            segs.sort_by(|a, b| b.1.total_cmp(&a.1));
        }
        let mut walk = Walk::default();
        let (mut r, mut g) = (0.0, 0.0);
        for (width, slope) in segs {
            r += width;
            // Moving down by `width` at slope `slope` changes the value by -slope*width.
            g += if ascending { -slope * width } else { slope * width };
            walk.reach.push(r);
            walk.gain.push(g);
            walk.slope.push(slope);
        }
        walk
    }

    /// Gain and segment slope at distance `d > 0`.
    fn at(&self, d: f64, ascending: bool) -> Option<(f64, f64)> {
        if self.reach.is_empty() {
            return None;
        }
        let m = self.reach.partition_point(|&r| r < d).min(self.reach.len() - 1);
        let (r0, g0) = if m == 0 { (0.0, 0.0) } else { (self.reach[m - 1], self.gain[m - 1]) };
        let step = d - r0;
        let slope = self.slope[m];
        let gain = if ascending { g0 - slope * step } else { g0 + slope * step };
        Some((gain, slope))
    }
}

impl Profile {
    pub(crate) fn new(c: &[f64], w: &[f64], lower: &[f64], upper: &[f64]) -> Self {
        let mut p0 = 0.0;
        let mut v0 = 0.0;
        let mut ups = Vec::new();
        let mut downs = Vec::new();
        for j in 0..c.len() {
            let at_upper = c[j] > 0.0;
            let x = if at_upper { upper[j] } else { lower[j] };
            p0 += w[j] * x;
            v0 += c[j] * x;
            let width = (upper[j] - lower[j]) * w[j].abs();
            if w[j] == 0.0 || width <= 0.0 {
                continue;
            }
            let ratio = c[j] / w[j];
            // Leaving the bound raises P when w_j and the move direction agree.
            if at_upper == (w[j] < 0.0) {
                ups.push((width, ratio));
            } else {
                downs.push((width, ratio));
            }
        }
        Self { p0, v0, up: Walk::build(ups, false), down: Walk::build(downs, true) }
    }

    pub(crate) fn optimum_activity(&self) -> f64 {
        self.p0
    }

    /// `(V(p), mu)` where `mu` is a supergradient of `V` at `p` on the side
    /// facing the box optimum.
    pub(crate) fn eval(&self, p: f64) -> (f64, f64) {
        if p > self.p0 {
            match self.up.at(p - self.p0, false) {
                Some((g, s)) => (self.v0 + g, s),
                None => (self.v0, 0.0),
            }
        } else if p < self.p0 {
            match self.down.at(self.p0 - p, true) {
                Some((g, s)) => (self.v0 + g, s),
                None => (self.v0, 0.0),
            }
        } else {
            (self.v0, 0.0)
        }
    }
}

/// Per-slice maxima of `(a_i w - alpha).x` (or `-alpha.x` when
/// `homogeneous`) together with the slab multipliers in `w.x` units.
#[derive(Debug, Clone)]
pub(crate) struct SliceMaxima {
    pub values: Vec<f64>,
    pub multipliers: Vec<f64>,
}

/// Activity range `[h_{i-1} - b, h_i - b]` of slice `i` in `w.x` units.
pub(crate) fn slab(neuron: &Neuron, i: usize) -> (f64, f64) {
    let h = neuron.activation.breakpoints();
    (h[i] - neuron.bias, h[i + 1] - neuron.bias)
}

pub(crate) fn slice_maxima(neuron: &Neuron, alpha: &[f64], homogeneous: bool) -> Result<SliceMaxima> {
    let k = neuron.pieces();
    let w = &neuron.weights;
    let slopes = neuron.activation.slopes();
    let scale = neuron.activation.upper().abs().max(neuron.activation.lower().abs()).max(1.0);
    let mut profiles: Vec<(f64, Profile)> = Vec::new();
    let mut values = Vec::with_capacity(k);
    let mut multipliers = Vec::with_capacity(k);
    for i in 0..k {
        let a = if homogeneous { 0.0 } else { slopes[i] };
        let idx = match profiles.iter().position(|(s, _)| *s == a) {
            Some(idx) => idx,
            None => {
                let c: Vec<f64> = w.iter().zip(alpha).map(|(wj, aj)| a * wj - aj).collect();
                profiles.push((a, Profile::new(&c, w, &neuron.lower, &neuron.upper)));
                profiles.len() - 1
            }
        };
        let profile = &profiles[idx].1;
        let (lo, hi) = slab(neuron, i);
        if lo > hi + SLAB_TOL * scale {
            return Err(Error::Formulation(format!("slice {i} is empty: [{lo}, {hi}]")));
        }
        let p = profile.optimum_activity().clamp(lo, hi.max(lo));
        let (v, mu) = profile.eval(p);
        values.push(v);
        multipliers.push(mu);
    }
    Ok(SliceMaxima { values, multipliers })
}
