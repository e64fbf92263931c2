//! Two-line relaxations of activations and back-substitution to the input.

use serde::Serialize;

use super::{check_box, PreActBounds};
use crate::error::{Error, Result};
use crate::network::{affine_range, Activation, BoxDomain, Network, NeuronId};
use crate::pwl::{PiecewiseLinear, Staircase};

/// Relative tolerance for the uniform-step test.
const UNIFORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Lower,
    Upper,
}

/// `coefs.x + constant` bounding a quantity from the side given by `sense`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearBound {
    pub coefs: Vec<f64>,
    pub constant: f64,
    pub sense: Sense,
}

impl LinearBound {
    fn line(slope: f64, constant: f64, sense: Sense) -> Self {
        Self { coefs: vec![slope], constant, sense }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coefs.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.constant
    }

    fn slope(&self) -> f64 {
        self.coefs[0]
    }
}

/// Upper and lower line for one activation over its pre-activation range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivationRelaxation {
    pub upper: LinearBound,
    pub lower: LinearBound,
    /// The rules did not apply and constant bounds were used instead.
    pub fallback: bool,
}

impl ActivationRelaxation {
    fn constant(lo: f64, hi: f64, fallback: bool) -> Self {
        Self { upper: LinearBound::line(0.0, hi, Sense::Upper), lower: LinearBound::line(0.0, lo, Sense::Lower), fallback }
    }
}

/// Relaxation of a non-decreasing piecewise-constant staircase on `[lo, hi]`
/// for uniform breakpoint and level steps. Other step patterns get the
/// constant bounds `[f_1, f_k]` with `fallback` set.
pub fn deeppoly_activation_relax(f: &Staircase, lo: f64, hi: f64) -> Result<ActivationRelaxation> {
    if !(lo < hi) {
        let v = f.function().evaluate(lo)?;
        return Ok(ActivationRelaxation::constant(v, v, false));
    }
    let g = f.function().clip(lo, hi)?;
    if !g.is_piecewise_constant() {
        return Err(Error::Parameter("quantized relaxation needs a piecewise-constant staircase".into()));
    }
    // Merge neighbouring pieces with the same level.
    let mut h = vec![g.breakpoints()[0]];
    let mut levels: Vec<f64> = Vec::new();
    for (i, &v) in g.intercepts().iter().enumerate() {
        match levels.last() {
            Some(&last) if last == v => *h.last_mut().expect("nonempty") = g.breakpoints()[i + 1],
            Some(&last) if v < last => {
                return Err(Error::Parameter("quantized relaxation does not support decreasing staircases".into()))
            }
            _ => {
                levels.push(v);
                h.push(g.breakpoints()[i + 1]);
            }
        }
    }
    let k = levels.len();
    let (f1, fk) = (levels[0], levels[k - 1]);
    if k == 1 {
        return Ok(ActivationRelaxation::constant(f1, f1, false));
    }
    let left = h[1] - h[0];
    let right = h[k] - h[k - 1];
    if k == 2 {
        let rise = fk - f1;
        return Ok(if right >= left {
            let s = rise / right;
            ActivationRelaxation {
                upper: LinearBound::line(0.0, fk, Sense::Upper),
                lower: LinearBound::line(s, f1 - s * h[1], Sense::Lower),
                fallback: false,
            }
        } else {
            let s = rise / left;
            ActivationRelaxation {
                upper: LinearBound::line(s, fk - s * h[1], Sense::Upper),
                lower: LinearBound::line(0.0, f1, Sense::Lower),
                fallback: false,
            }
        });
    }
    let step = h[2] - h[1];
    let rise = levels[1] - levels[0];
    let tol = UNIFORM_TOL * (hi - lo).max(1.0);
    let vtol = UNIFORM_TOL * (fk - f1).abs().max(1.0);
    let uniform = (1..k - 1).all(|i| (h[i + 1] - h[i] - step).abs() <= tol)
        && levels.windows(2).all(|p| (p[1] - p[0] - rise).abs() <= vtol);
    if !uniform {
        return Ok(ActivationRelaxation::constant(f1, fk, true));
    }
    let upper = if left > step {
        let s = (fk - f1) / (h[k - 1] - h[0]);
        LinearBound::line(s, fk - s * h[k - 1], Sense::Upper)
    } else {
        let s = rise / step;
        LinearBound::line(s, fk - s * h[k - 1], Sense::Upper)
    };
    let lower = if right > step {
        let s = (fk - f1) / (h[k] - h[1]);
        LinearBound::line(s, f1 - s * h[1], Sense::Lower)
    } else {
        let s = rise / step;
        LinearBound::line(s, f1 - s * h[1], Sense::Lower)
    };
    Ok(ActivationRelaxation { upper, lower, fallback: false })
}

/// Endpoints of every piece, the vertices of the graph's closure.
fn graph_points(g: &PiecewiseLinear) -> Vec<(f64, f64)> {
    let h = g.breakpoints();
    (0..g.pieces()).flat_map(|i| [(h[i], g.piece_value(i, h[i])), (h[i + 1], g.piece_value(i, h[i + 1]))]).collect()
}

fn upper_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            if (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0) >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// Hull edge above the midpoint: the supporting line of least area.
fn midpoint_edge(hull: &[(f64, f64)], mid: f64) -> (f64, f64) {
    for e in hull.windows(2) {
        let ((x0, y0), (x1, y1)) = (e[0], e[1]);
        if x1 > x0 && x0 <= mid && mid <= x1 {
            let s = (y1 - y0) / (x1 - x0);
            return (s, y0 - s * x0);
        }
    }
    // Only reachable for a zero-width range.
    let top = hull.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    (0.0, top)
}

/// Least-area lines from the concave and convex envelopes of `g`.
fn envelope_relax(g: &PiecewiseLinear) -> ActivationRelaxation {
    let pts = graph_points(g);
    let mid = 0.5 * (g.lower() + g.upper());
    let (su, cu) = midpoint_edge(&upper_hull(pts.clone()), mid);
    let flipped: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x, -y)).collect();
    let (sl, cl) = midpoint_edge(&upper_hull(flipped), mid);
    ActivationRelaxation {
        upper: LinearBound::line(su, cu, Sense::Upper),
        lower: LinearBound::line(-sl, -cl, Sense::Lower),
        fallback: false,
    }
}

/// Two-line relaxation of any supported activation on `[lo, hi]`.
/// Piecewise-constant staircases (including Dorefa) follow the quantized
/// rules; everything else uses least-area lines of its envelopes.
pub fn relax_activation(act: &Activation, lo: f64, hi: f64) -> Result<ActivationRelaxation> {
    if matches!(act, Activation::Identity) {
        return Ok(ActivationRelaxation {
            upper: LinearBound::line(1.0, 0.0, Sense::Upper),
            lower: LinearBound::line(1.0, 0.0, Sense::Lower),
            fallback: false,
        });
    }
    if !(lo < hi) {
        let v = act.evaluate(lo)?;
        return Ok(ActivationRelaxation::constant(v, v, false));
    }
    let g = act.restricted(lo, hi)?;
    let quantized = matches!(act, Activation::Dorefa { .. } | Activation::Staircase(_));
    if quantized && g.is_piecewise_constant() {
        deeppoly_activation_relax(&Staircase::new(g, 0.0)?, lo, hi)
    } else {
        Ok(envelope_relax(&g))
    }
}

/// Bound on `a.y + c` over the relaxation, where `y` are the outputs of layer
/// `layer - 1` (or the input when `layer == 0`).
fn back_substitute(
    net: &Network,
    relax: &[Vec<ActivationRelaxation>],
    input_box: &BoxDomain,
    layer: usize,
    mut a: Vec<f64>,
    mut c: f64,
    sense: Sense,
) -> f64 {
    for m in (0..layer).rev() {
        let lm = &net.layers()[m];
        let mut t = vec![0.0; lm.width()];
        for (j, &aj) in a.iter().enumerate() {
            if aj == 0.0 {
                continue;
            }
            let r = &relax[m][j];
            let line = if (aj > 0.0) == (sense == Sense::Upper) { &r.upper } else { &r.lower };
            t[j] = aj * line.slope();
            c += aj * line.constant;
        }
        let mut next = vec![0.0; lm.weights.first().map_or(0, Vec::len)];
        for (j, &tj) in t.iter().enumerate() {
            if tj == 0.0 {
                continue;
            }
            c += tj * lm.bias[j];
            next.iter_mut().zip(&lm.weights[j]).for_each(|(s, w)| *s += tj * w);
        }
        a = next;
    }
    a.iter()
        .zip(input_box.lower.iter().zip(&input_box.upper))
        .map(|(&aj, (&l, &u))| match sense {
            Sense::Upper => (aj * l).max(aj * u),
            Sense::Lower => (aj * l).min(aj * u),
        })
        .sum::<f64>()
        + c
}

/// DeepPoly state: pre-activation bounds plus the line pair of every neuron.
#[derive(Debug, Clone)]
pub struct DeepPoly {
    pub bounds: PreActBounds,
    relax: Vec<Vec<ActivationRelaxation>>,
    input_box: BoxDomain,
}

impl DeepPoly {
    /// Back-substitutes every pre-activation to the input box and intersects
    /// the result with interval arithmetic on the previous layer's outputs.
    pub fn analyze(net: &Network, input_box: &BoxDomain) -> Result<Self> {
        check_box(net, input_box)?;
        let mut relax: Vec<Vec<ActivationRelaxation>> = Vec::with_capacity(net.layers().len());
        let mut out = PreActBounds { layers: Vec::with_capacity(net.layers().len()), fallbacks: Vec::new() };
        for (li, layer) in net.layers().iter().enumerate() {
            let (plo, phi) = out.layer_inputs(net, input_box, li)?;
            let mut row = Vec::with_capacity(layer.width());
            let mut rrow = Vec::with_capacity(layer.width());
            for (i, (w, &b)) in layer.weights.iter().zip(&layer.bias).enumerate() {
                let (ilo, ihi) = affine_range(w, b, &plo, &phi);
                let (lo, hi) = if li == 0 {
                    (ilo, ihi)
                } else {
                    let l = back_substitute(net, &relax, input_box, li, w.clone(), b, Sense::Lower).max(ilo);
                    let u = back_substitute(net, &relax, input_box, li, w.clone(), b, Sense::Upper).min(ihi);
                    if l <= u { (l, u) } else { (u, u) }
                };
                let r = relax_activation(&layer.activations[i], lo, hi)?;
                if r.fallback {
                    out.fallbacks.push(NeuronId { layer: li, index: i });
                }
                row.push((lo, hi));
                rrow.push(r);
            }
            out.layers.push(row);
            relax.push(rrow);
        }
        Ok(Self { bounds: out, relax, input_box: input_box.clone() })
    }

    /// Upper bound on `c.out` over the relaxation, where `out` are the
    /// network outputs.
    pub fn max_output(&self, net: &Network, c: &[f64]) -> Result<f64> {
        let last = net.layers().len();
        let bs = back_substitute(net, &self.relax, &self.input_box, last, c.to_vec(), 0.0, Sense::Upper);
        let (lo, hi) = self.bounds.layer_inputs(net, &self.input_box, last)?;
        let iv: f64 = c.iter().zip(lo.iter().zip(&hi)).map(|(&cj, (&l, &u))| (cj * l).max(cj * u)).sum();
        Ok(bs.min(iv))
    }
}

/// Pre-activation bounds from [`DeepPoly::analyze`].
pub fn deeppoly_bounds(net: &Network, input_box: &BoxDomain) -> Result<PreActBounds> {
    Ok(DeepPoly::analyze(net, input_box)?.bounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Layer;

    fn check_sandwich(act: &Activation, lo: f64, hi: f64, r: &ActivationRelaxation) {
        for s in 0..=1000 {
            let t = lo + (hi - lo) * s as f64 / 1000.0;
            let v = act.evaluate(t).unwrap();
            assert!(r.upper.eval(&[t]) >= v - 1e-9, "upper fails at {t}");
            assert!(r.lower.eval(&[t]) <= v + 1e-9, "lower fails at {t}");
        }
    }

    #[test]
    fn two_level_rules() {
        let f = Staircase::new(PiecewiseLinear::new(vec![0.0, 1.0, 3.0], vec![0.0; 2], vec![0.0, 1.0]).unwrap(), 0.0).unwrap();
        let r = deeppoly_activation_relax(&f, 0.0, 3.0).unwrap();
        assert_eq!(r.upper, LinearBound::line(0.0, 1.0, Sense::Upper));
        assert_eq!(r.lower, LinearBound::line(0.5, -0.5, Sense::Lower));

        let r = deeppoly_activation_relax(&f, 0.0, 1.5).unwrap();
        assert_eq!(r.upper, LinearBound::line(1.0, 0.0, Sense::Upper));
        assert_eq!(r.lower, LinearBound::line(0.0, 0.0, Sense::Lower));
    }

    #[test]
    fn wide_outer_pieces_use_chords() {
        let f = Staircase::new(
            PiecewiseLinear::new(vec![-2.0, 0.0, 1.0, 3.0], vec![0.0; 3], vec![0.0, 1.0, 2.0]).unwrap(),
            0.0,
        )
        .unwrap();
        let r = deeppoly_activation_relax(&f, -2.0, 3.0).unwrap();
        assert!((r.upper.slope() - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.lower.slope() - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.upper.eval(&[1.0]) - 2.0).abs() < 1e-15);
        assert!((r.lower.eval(&[0.0]) - 0.0).abs() < 1e-15);
    }

    #[test]
    fn relaxations_sandwich_dorefa() {
        for bits in 1..=4 {
            let act = Activation::Dorefa { bits, lo: 0.0, hi: 1.0 };
            for (lo, hi) in [(-0.3, 1.4), (0.1, 0.9), (0.26, 0.74), (0.0, 1.0), (-1.0, 0.05)] {
                let r = relax_activation(&act, lo, hi).unwrap();
                assert!(!r.fallback);
                check_sandwich(&act, lo, hi, &r);
            }
        }
    }

    #[test]
    fn relu_uses_the_triangle() {
        let r = relax_activation(&Activation::Relu, -1.0, 3.0).unwrap();
        assert_eq!(r.upper, LinearBound::line(0.75, 0.75, Sense::Upper));
        assert_eq!(r.lower, LinearBound::line(1.0, 0.0, Sense::Lower));
        let r = relax_activation(&Activation::Relu, -3.0, 1.0).unwrap();
        assert_eq!(r.lower, LinearBound::line(0.0, 0.0, Sense::Lower));
    }

    #[test]
    fn uneven_steps_fall_back() {
        let f = PiecewiseLinear::new(vec![0.0, 1.0, 1.5, 4.0, 5.0], vec![0.0; 4], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let r = deeppoly_activation_relax(&Staircase::new(f, 0.0).unwrap(), 0.0, 5.0).unwrap();
        assert!(r.fallback);
        assert_eq!(r.upper.constant, 3.0);
        assert_eq!(r.lower.constant, 0.0);
    }

    #[test]
    fn decreasing_steps_are_rejected() {
        let f = PiecewiseLinear::new(vec![0.0, 1.0, 2.0], vec![0.0; 2], vec![1.0, 0.0]).unwrap();
        assert!(deeppoly_activation_relax(&Staircase::new(f, 0.0).unwrap(), 0.0, 2.0).is_err());
    }

    #[test]
    fn hidden_relu_layer_by_hand() {
        // y = relu(x1 + x2), relu(x1 - x2) on [-1, 1]^2; out = y1 - y2.
        let b = BoxDomain::new(vec![-1.0; 2], vec![1.0; 2]).unwrap();
        let net = Network::new(
            vec![
                Layer::new(vec![vec![1.0, 1.0], vec![1.0, -1.0]], vec![0.0; 2], Activation::Relu),
                Layer::new(vec![vec![1.0, -1.0]], vec![0.0], Activation::Identity),
            ],
            b.clone(),
        )
        .unwrap();
        let pb = deeppoly_bounds(&net, &b).unwrap();
        // Both hidden ranges are [-2, 2]: upper line 0.5 t + 1, lower line 1.0 t
        // (midpoint tie takes the right edge). Upper: 0.5(x1+x2)+1 - (x1-x2)
        // = -0.5 x1 + 1.5 x2 + 1 <= 3. Lower: (x1+x2) - 0.5(x1-x2) - 1
        // = 0.5 x1 + 1.5 x2 - 1 >= -3. Interval arithmetic gives [-2, 2].
        assert_eq!(pb.layers[1], vec![(-2.0, 2.0)]);
        let quarter = BoxDomain::new(vec![0.0, -1.0], vec![1.0, 0.0]).unwrap();
        let dp = DeepPoly::analyze(&net, &quarter).unwrap();
        assert_eq!(dp.max_output(&net, &[1.0]).unwrap(), 0.5);
        let pb = dp.bounds;
        // x1 + x2 in [-1, 1], x1 - x2 in [0, 2] (exact): upper 0.5 t + 0.5 for
        // y1, y2 = t. Upper: 0.5(x1+x2)+0.5-(x1-x2) = -0.5x1+1.5x2+0.5 <= 0.5.
        // Lower: y1 >= t? midpoint 0 tie -> right edge slope 1: (x1+x2)-(x1-x2)
        // = 2 x2 >= -2; interval gives [0 - 2, 1 - 0] = [-2, 1].
        assert_eq!(pb.layers[1], vec![(-2.0, 0.5)]);
    }
}
