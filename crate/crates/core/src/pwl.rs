//! Univariate piecewise-linear functions, staircase classification and
//! staircase decomposition.
//!
//! Functions are right-continuous: piece `i` covers `[h_i, h_{i+1})` and the
//! last piece is closed. Jumps at breakpoints are allowed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used to merge breakpoints that are numerically equal.
pub const BREAKPOINT_MERGE_TOL: f64 = 1e-12;
/// Relative tolerance under which two slopes are considered identical.
pub const SLOPE_TOL: f64 = 1e-12;

fn merge_tol(lo: f64, hi: f64) -> f64 {
    BREAKPOINT_MERGE_TOL * (hi - lo).abs().max(1.0)
}

fn same_slope(a: f64, b: f64) -> bool {
    (a - b).abs() <= SLOPE_TOL * a.abs().max(b.abs()).max(1.0)
}

#[derive(Deserialize)]
struct RawPwl {
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
    intercepts: Vec<f64>,
}

impl TryFrom<RawPwl> for PiecewiseLinear {
    type Error = Error;
    fn try_from(raw: RawPwl) -> Result<Self> {
        PiecewiseLinear::new(raw.breakpoints, raw.slopes, raw.intercepts)
    }
}

/// A piecewise-linear function on `[h_0, h_k]` with `k >= 1` pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPwl")]
pub struct PiecewiseLinear {
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
    intercepts: Vec<f64>,
}

impl PiecewiseLinear {
    /// Builds a function from `k + 1` breakpoints and `k` slope/intercept
    /// pairs. Pieces narrower than the merge tolerance are dropped.
    pub fn new(breakpoints: Vec<f64>, slopes: Vec<f64>, intercepts: Vec<f64>) -> Result<Self> {
        let k = slopes.len();
        if k == 0 {
            return Err(Error::Parameter("a piecewise-linear function needs at least one piece".into()));
        }
        if breakpoints.len() != k + 1 || intercepts.len() != k {
            return Err(Error::Parameter(format!(
                "expected {} breakpoints and {} intercepts, got {} and {}",
                k + 1,
                k,
                breakpoints.len(),
                intercepts.len()
            )));
        }
        if breakpoints.iter().chain(&slopes).chain(&intercepts).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite value in piecewise-linear data".into()));
        }
        for w in breakpoints.windows(2) {
            if w[1] < w[0] {
                return Err(Error::Parameter("breakpoints must be increasing".into()));
            }
        }
        let tol = merge_tol(breakpoints[0], breakpoints[k]);
        let keep: Vec<usize> = (0..k).filter(|&i| breakpoints[i + 1] - breakpoints[i] > tol).collect();
        if keep.is_empty() {
            return Err(Error::Parameter("piecewise-linear domain has zero width".into()));
        }
        if keep.len() == k {
            return Ok(Self { breakpoints, slopes, intercepts });
        }
        // Each dropped sliver is absorbed by the previous kept piece.
        let mut bps = vec![breakpoints[0]];
        for (pos, &i) in keep.iter().enumerate() {
            let end = match keep.get(pos + 1) {
                Some(&next) => breakpoints[next],
                None => breakpoints[k],
            };
            let _ = i;
            bps.push(end);
        }
        Ok(Self {
            breakpoints: bps,
            slopes: keep.iter().map(|&i| slopes[i]).collect(),
            intercepts: keep.iter().map(|&i| intercepts[i]).collect(),
        })
    }

    /// Continuous function through the given `(t, value)` knots.
    pub fn from_knots(knots: &[(f64, f64)]) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::Parameter("need at least two knots".into()));
        }
        let mut bps = Vec::with_capacity(knots.len());
        let mut slopes = Vec::with_capacity(knots.len() - 1);
        let mut ints = Vec::with_capacity(knots.len() - 1);
        bps.push(knots[0].0);
        for w in knots.windows(2) {
            let (t0, v0) = w[0];
            let (t1, v1) = w[1];
            if t1 <= t0 {
                return Err(Error::Parameter("knots must be strictly increasing".into()));
            }
            let a = (v1 - v0) / (t1 - t0);
            slopes.push(a);
            ints.push(v0 - a * t0);
            bps.push(t1);
        }
        Self::new(bps, slopes, ints)
    }

    pub fn pieces(&self) -> usize {
        self.slopes.len()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn lower(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn upper(&self) -> f64 {
        self.breakpoints[self.pieces()]
    }

    /// Index of the right-continuous piece containing `t`.
    pub fn piece_of(&self, t: f64) -> Result<usize> {
        if !(t >= self.lower() && t <= self.upper()) {
            return Err(Error::Domain(format!(
                "{t} outside [{}, {}]",
                self.lower(),
                self.upper()
            )));
        }
        let k = self.pieces();
        let interior = &self.breakpoints[1..k];
        Ok(interior.partition_point(|&h| h <= t))
    }

    /// Value of piece `i`'s affine map at `t` (no domain check).
    pub fn piece_value(&self, i: usize, t: f64) -> f64 {
        self.slopes[i] * t + self.intercepts[i]
    }

    pub fn evaluate(&self, t: f64) -> Result<f64> {
        let i = self.piece_of(t)?;
        Ok(self.piece_value(i, t))
    }

    /// Jump `f(h_i+) - f(h_i-)` at interior breakpoint `i` (1..k-1).
    pub fn jump(&self, i: usize) -> f64 {
        let h = self.breakpoints[i];
        self.piece_value(i, h) - self.piece_value(i - 1, h)
    }

    pub fn value_scale(&self) -> f64 {
        (0..self.pieces())
            .flat_map(|i| [self.piece_value(i, self.breakpoints[i]), self.piece_value(i, self.breakpoints[i + 1])])
            .fold(1.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_continuous(&self) -> bool {
        let tol = 1e-12 * self.value_scale();
        (1..self.pieces()).all(|i| self.jump(i).abs() <= tol)
    }

    /// Smallest and largest value attained (closure of the graph).
    pub fn range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.pieces() {
            for t in [self.breakpoints[i], self.breakpoints[i + 1]] {
                let v = self.piece_value(i, t);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    /// Restriction to `[lo, hi]`, dropping pieces that do not meet it.
    pub fn clip(&self, lo: f64, hi: f64) -> Result<Self> {
        let slack = merge_tol(self.lower(), self.upper());
        if !(lo < hi) || lo < self.lower() - slack || hi > self.upper() + slack {
            return Err(Error::Domain(format!(
                "cannot clip [{}, {}] to [{lo}, {hi}]",
                self.lower(),
                self.upper()
            )));
        }
        let tol = merge_tol(lo, hi);
        let mut bps = vec![lo];
        let mut slopes = Vec::new();
        let mut ints = Vec::new();
        for i in 0..self.pieces() {
            let a = self.breakpoints[i].max(lo);
            let b = self.breakpoints[i + 1].min(hi);
            if b - a > tol {
                if slopes.is_empty() {
                    bps[0] = lo;
                }
                slopes.push(self.slopes[i]);
                ints.push(self.intercepts[i]);
                bps.push(b);
            }
        }
        if slopes.is_empty() {
            // The interval sits inside a single sliver; use the piece at lo.
            let i = self.piece_of(lo.clamp(self.lower(), self.upper()))?;
            return Self::new(vec![lo, hi], vec![self.slopes[i]], vec![self.intercepts[i]]);
        }
        let last = bps.len() - 1;
        bps[last] = hi;
        Self::new(bps, slopes, ints)
    }

    pub fn negate(&self) -> Self {
        Self {
            breakpoints: self.breakpoints.clone(),
            slopes: self.slopes.iter().map(|a| -a).collect(),
            intercepts: self.intercepts.iter().map(|d| -d).collect(),
        }
    }

    /// Distinct slope values in increasing order.
    pub fn distinct_slopes(&self) -> Vec<f64> {
        let mut s = self.slopes.clone();
        s.sort_by(|a, b| a.total_cmp(b));
        let mut out: Vec<f64> = Vec::new();
        for a in s {
            if out.last().map_or(true, |&b| !same_slope(a, b)) {
                out.push(a);
            }
        }
        out
    }

    pub fn is_piecewise_constant(&self) -> bool {
        self.slopes.iter().all(|&a| a == 0.0)
    }
}

/// Spec-level entry point: `f(t)` with right-continuous piece selection.
pub fn evaluate(f: &PiecewiseLinear, t: f64) -> Result<f64> {
    f.evaluate(t)
}

/// A piecewise-linear function whose slopes all lie in `{0, s}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Staircase {
    function: PiecewiseLinear,
    slope: f64,
}

impl Staircase {
    pub fn new(function: PiecewiseLinear, slope: f64) -> Result<Self> {
        if !slope.is_finite() {
            return Err(Error::Parameter("staircase slope must be finite".into()));
        }
        if let Some(a) = function.slopes().iter().find(|&&a| a != 0.0 && a != slope) {
            return Err(Error::Parameter(format!("slope {a} is neither 0 nor {slope}")));
        }
        Ok(Self { function, slope })
    }

    /// Classifies `f` as a staircase if its slopes take at most one non-zero value.
    pub fn from_pwl(function: &PiecewiseLinear) -> Option<Self> {
        let mut s = 0.0;
        for &a in function.slopes() {
            if a == 0.0 {
                continue;
            }
            if s == 0.0 {
                s = a;
            } else if a != s {
                return None;
            }
        }
        Some(Self { function: function.clone(), slope: s })
    }

    pub fn function(&self) -> &PiecewiseLinear {
        &self.function
    }

    pub fn into_function(self) -> PiecewiseLinear {
        self.function
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    /// `true` for pieces whose slope equals `s` (and `s != 0`).
    pub fn is_sloped(&self, i: usize) -> bool {
        self.slope != 0.0 && self.function.slopes()[i] == self.slope
    }
}

/// `f = constant_part + sum(staircases)` on a common breakpoint grid.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub constant_part: Option<PiecewiseLinear>,
    pub staircases: Vec<Staircase>,
}

impl Decomposition {
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        let mut v = match &self.constant_part {
            Some(f0) => f0.evaluate(t)?,
            None => 0.0,
        };
        for s in &self.staircases {
            v += s.function().evaluate(t)?;
        }
        Ok(v)
    }
}

/// Splits `f` into continuous staircases plus a piecewise-constant part that
/// carries every jump.
///
/// Components are nested level sets of the slope sequence, anchored at zero:
/// for positive slopes `p_1 < p_2 < ...` the v-th component has slope
/// `p_v - p_{v-1}` on `{i : a_i >= p_v}`, and symmetrically for negative
/// slopes. Every component therefore shares `f`'s grid, and the number of
/// components equals the number of distinct non-zero slopes. The value
/// `f(h_0)` is shared evenly among the continuous components.
pub fn decompose_staircase(f: &PiecewiseLinear) -> Decomposition {
    let k = f.pieces();
    let h = f.breakpoints();
    let distinct = f.distinct_slopes();
    let group = |a: f64| -> f64 {
        *distinct
            .iter()
            .find(|&&s| same_slope(a, s))
            .expect("slope belongs to its own distinct set")
    };
    let reps: Vec<f64> = f.slopes().iter().map(|&a| group(a)).collect();

    let mut layers: Vec<(f64, Vec<bool>)> = Vec::new();
    let mut prev = 0.0;
    for &p in distinct.iter().filter(|&&s| s > 0.0 && !same_slope(s, 0.0)) {
        layers.push((p - prev, reps.iter().map(|&a| a >= p).collect()));
        prev = p;
    }
    prev = 0.0;
    for &q in distinct.iter().rev().filter(|&&s| s < 0.0 && !same_slope(s, 0.0)) {
        layers.push((q - prev, reps.iter().map(|&a| a <= q).collect()));
        prev = q;
    }

    let f_left = f.piece_value(0, h[0]);
    let continuous = f.is_continuous();
    if layers.is_empty() {
        if continuous {
            let flat = PiecewiseLinear::new(h.to_vec(), vec![0.0; k], vec![f_left; k]).expect("valid grid");
            return Decomposition {
                constant_part: None,
                staircases: vec![Staircase { function: flat, slope: 0.0 }],
            };
        }
        return Decomposition { constant_part: Some(f.clone()), staircases: Vec::new() };
    }

    let m = layers.len() as f64;
    let mut staircases = Vec::with_capacity(layers.len());
    let mut sum_at_left = vec![0.0; k];
    let mut sum_slope = vec![0.0; k];
    for (delta, members) in layers {
        let mut slopes = vec![0.0; k];
        let mut ints = vec![0.0; k];
        let mut acc = f_left / m;
        for i in 0..k {
            let width = h[i + 1] - h[i];
            if members[i] {
                slopes[i] = delta;
                ints[i] = acc - delta * h[i];
                sum_slope[i] += delta;
            } else {
                ints[i] = acc;
            }
            sum_at_left[i] += acc;
            if members[i] {
                acc += delta * width;
            }
        }
        let func = PiecewiseLinear::new(h.to_vec(), slopes, ints).expect("valid grid");
        staircases.push(Staircase { function: func, slope: delta });
    }

    let constant_part = if continuous {
        None
    } else {
        let ints: Vec<f64> = (0..k).map(|i| f.piece_value(i, h[i]) - sum_at_left[i]).collect();
        Some(PiecewiseLinear::new(h.to_vec(), vec![0.0; k], ints).expect("valid grid"))
    };
    Decomposition { constant_part, staircases }
}

/// Uniform `2^bits`-level quantizer on `[lo, hi]`: equal-width pieces with
/// output levels `0, 1/(2^bits - 1), ..., 1`.
pub fn dorefa(bits: u32, lo: f64, hi: f64) -> Result<Staircase> {
    if bits == 0 || bits > 20 {
        return Err(Error::Parameter(format!("dorefa bit width must be in 1..=20, got {bits}")));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Parameter(format!("dorefa range [{lo}, {hi}] is empty")));
    }
    let k = 1usize << bits;
    let width = (hi - lo) / k as f64;
    let mut bps: Vec<f64> = (0..=k).map(|i| lo + width * i as f64).collect();
    bps[k] = hi;
    let levels: Vec<f64> = (0..k).map(|i| i as f64 / (k - 1) as f64).collect();
    let f = PiecewiseLinear::new(bps, vec![0.0; k], levels)?;
    Staircase::new(f, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relu() -> PiecewiseLinear {
        PiecewiseLinear::new(vec![-1.0, 0.0, 1.0], vec![0.0, 1.0], vec![0.0, 0.0]).unwrap()
    }

    #[test]
    fn relu_values() {
        let f = relu();
        assert_eq!(f.evaluate(-0.5).unwrap(), 0.0);
        assert_eq!(f.evaluate(1.0).unwrap(), 1.0);
        assert!(f.evaluate(1.5).is_err());
        assert!(f.evaluate(f64::NAN).is_err());
    }

    #[test]
    fn dorefa_breakpoint_takes_right_piece() {
        let q = dorefa(2, 0.0, 1.0).unwrap();
        let f = q.function();
        for i in 1..4 {
            let t = f.breakpoints()[i];
            let by_scan = (0..4).rev().find(|&p| f.breakpoints()[p] <= t).unwrap();
            assert_eq!(f.piece_of(t).unwrap(), by_scan);
            assert_eq!(f.evaluate(t).unwrap(), f.intercepts()[by_scan]);
        }
    }

    #[test]
    fn dorefa_piece_counts() {
        let one = dorefa(1, 0.0, 1.0).unwrap();
        assert_eq!(one.function().pieces(), 2);
        assert_eq!(one.function().intercepts(), &[0.0, 1.0]);
        assert_eq!(dorefa(2, -1.0, 1.0).unwrap().function().pieces(), 4);
        assert_eq!(dorefa(5, -1.0, 1.0).unwrap().function().pieces(), 32);
        assert!(dorefa(0, 0.0, 1.0).is_err());
    }

    #[test]
    fn slivers_are_merged() {
        let f = PiecewiseLinear::new(vec![0.0, 1.0, 1.0 + 1e-15, 2.0], vec![1.0, 5.0, 0.0], vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(f.pieces(), 2);
        assert_eq!(f.slopes(), &[1.0, 0.0]);
    }

    #[test]
    fn clip_drops_outside_pieces() {
        let q = dorefa(2, 0.0, 1.0).unwrap();
        let c = q.function().clip(0.3, 0.6).unwrap();
        assert_eq!(c.pieces(), 2);
        assert_eq!(c.breakpoints(), &[0.3, 0.5, 0.6]);
        assert!(q.function().clip(-0.5, 0.6).is_err());
    }

    #[test]
    fn relu_decomposes_into_itself() {
        let d = decompose_staircase(&relu());
        assert!(d.constant_part.is_none());
        assert_eq!(d.staircases.len(), 1);
        assert_eq!(d.staircases[0].function(), &relu());
    }

    #[test]
    fn jumps_go_to_constant_part() {
        let f = PiecewiseLinear::new(vec![0.0, 1.0, 2.0], vec![1.0, 1.0], vec![0.0, 3.0]).unwrap();
        let d = decompose_staircase(&f);
        assert_eq!(d.staircases.len(), 1);
        let f0 = d.constant_part.as_ref().unwrap();
        assert_eq!(f0.intercepts(), &[0.0, 3.0]);
        for t in [0.0, 0.5, 1.0, 1.7, 2.0] {
            assert!((d.evaluate(t).unwrap() - f.evaluate(t).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn staircase_classification() {
        assert!(Staircase::from_pwl(&relu()).is_some());
        let mixed = PiecewiseLinear::new(vec![0.0, 1.0, 2.0], vec![1.0, 2.0], vec![0.0, -1.0]).unwrap();
        assert!(Staircase::from_pwl(&mixed).is_none());
        assert!(Staircase::new(mixed, 1.0).is_err());
    }
}
