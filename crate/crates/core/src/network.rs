//! Dense feed-forward networks, per-neuron activation descriptors and the
//! single-neuron model used by the formulation and separation code.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pwl::{dorefa, PiecewiseLinear, Staircase};

/// Tolerance used when checking that a point lies in a box or a domain.
pub const DOMAIN_TOL: f64 = 1e-9;

/// Axis-aligned box `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::Input("box lower/upper lengths differ".into()));
        }
        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !l.is_finite() || !u.is_finite() {
                return Err(Error::Input(format!("box coordinate {j} is not finite")));
            }
            if l > u {
                return Err(Error::Input(format!("box coordinate {j} is empty: [{l}, {u}]")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&l, &u))| v >= l - tol && v <= u + tol)
    }

    /// Intersection with the infinity-norm ball of radius `eps` around `center`.
    pub fn intersect_ball(&self, center: &[f64], eps: f64) -> Result<Self> {
        if center.len() != self.dim() {
            return Err(Error::Input(format!(
                "input has {} coordinates, network expects {}",
                center.len(),
                self.dim()
            )));
        }
        if !(eps >= 0.0) {
            return Err(Error::Input(format!("radius must be nonnegative, got {eps}")));
        }
        let lower: Vec<f64> = center.iter().zip(&self.lower).map(|(&c, &l)| (c - eps).max(l)).collect();
        let upper: Vec<f64> = center.iter().zip(&self.upper).map(|(&c, &u)| (c + eps).min(u)).collect();
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::Input("perturbation ball misses the input box".into()));
        }
        Ok(Self { lower, upper })
    }
}

/// Activation attached to a neuron.
///
/// `Relu` and `Dorefa` are total functions on the real line (Dorefa clamps to
/// its end levels outside `[lo, hi]`). `Pwl` and `Staircase` are only defined
/// on their own breakpoint range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Dorefa { bits: u32, lo: f64, hi: f64 },
    Pwl(PiecewiseLinear),
    Staircase(PiecewiseLinear),
}

impl Activation {
    pub fn validate(&self) -> Result<()> {
        match self {
            Activation::Dorefa { bits, lo, hi } => dorefa(*bits, *lo, *hi).map(|_| ()),
            Activation::Staircase(f) => Staircase::from_pwl(f)
                .map(|_| ())
                .ok_or_else(|| Error::Input("activation of kind staircase has more than one nonzero slope".into())),
            _ => Ok(()),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Activation::Identity)
    }

    pub fn evaluate(&self, t: f64) -> Result<f64> {
        match self {
            Activation::Identity => Ok(t),
            Activation::Relu => Ok(t.max(0.0)),
            Activation::Dorefa { bits, lo, hi } => {
                let q = dorefa(*bits, *lo, *hi)?;
                q.function().evaluate(t.clamp(*lo, *hi))
            }
            Activation::Pwl(f) | Activation::Staircase(f) => f.evaluate(t),
        }
    }

    /// Piecewise-linear form of the activation restricted to `[lo, hi]`.
    pub fn restricted(&self, lo: f64, hi: f64) -> Result<PiecewiseLinear> {
        if !(lo < hi) {
            return Err(Error::Domain(format!("restriction interval [{lo}, {hi}] is empty")));
        }
        match self {
            Activation::Identity => PiecewiseLinear::new(vec![lo, hi], vec![1.0], vec![0.0]),
            Activation::Relu => {
                if hi <= 0.0 {
                    PiecewiseLinear::new(vec![lo, hi], vec![0.0], vec![0.0])
                } else if lo >= 0.0 {
                    PiecewiseLinear::new(vec![lo, hi], vec![1.0], vec![0.0])
                } else {
                    PiecewiseLinear::new(vec![lo, 0.0, hi], vec![0.0, 1.0], vec![0.0, 0.0])
                }
            }
            Activation::Dorefa { bits, lo: qlo, hi: qhi } => {
                let q = dorefa(*bits, *qlo, *qhi)?;
                let f = q.function();
                let (mut bps, ints) = (f.breakpoints().to_vec(), f.intercepts().to_vec());
                // Stretch the outer levels so the clamp is represented.
                bps[0] = bps[0].min(lo);
                let k = ints.len();
                bps[k] = bps[k].max(hi);
                let ext = PiecewiseLinear::new(bps, vec![0.0; k], ints)?;
                ext.clip(lo, hi)
            }
            Activation::Pwl(f) | Activation::Staircase(f) => {
                let tol = DOMAIN_TOL * (f.upper() - f.lower()).abs().max(1.0);
                if lo < f.lower() - tol || hi > f.upper() + tol {
                    return Err(Error::Domain(format!(
                        "pre-activation range [{lo}, {hi}] exceeds activation domain [{}, {}]",
                        f.lower(),
                        f.upper()
                    )));
                }
                f.clip(lo.max(f.lower()), hi.min(f.upper()))
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ActivationSpec {
    Shared(Activation),
    PerNeuron(Vec<Activation>),
}

#[derive(Deserialize)]
struct RawLayer {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    activation: ActivationSpec,
}

#[derive(Deserialize)]
struct RawNetwork {
    layers: Vec<RawLayer>,
    input_box: BoxDomain,
}

/// One dense layer: `weights[i]` is the incoming weight row of neuron `i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Layer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activations: Vec<Activation>,
}

impl Layer {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>, activation: Activation) -> Self {
        let n = bias.len();
        Self { weights, bias, activations: vec![activation; n] }
    }

    pub fn width(&self) -> usize {
        self.bias.len()
    }

    pub fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

/// Pre- and post-activation values of every layer for one input.
#[derive(Debug, Clone)]
pub struct Trace {
    pub input: Vec<f64>,
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

/// Stable identifier of a neuron: `(layer, index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NeuronId {
    pub layer: usize,
    pub index: usize,
}

impl std::fmt::Display for NeuronId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "L{}N{}", self.layer, self.index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    input_box: BoxDomain,
}

impl Network {
    pub fn new(layers: Vec<Layer>, input_box: BoxDomain) -> Result<Self> {
        input_box.validate()?;
        if layers.is_empty() {
            return Err(Error::Input("network has no layers".into()));
        }
        let mut width = input_box.dim();
        for (li, layer) in layers.iter().enumerate() {
            if layer.weights.len() != layer.bias.len() || layer.activations.len() != layer.bias.len() {
                return Err(Error::Input(format!("layer {li}: weights, bias and activations disagree in size")));
            }
            for row in &layer.weights {
                if row.len() != width {
                    return Err(Error::Input(format!(
                        "layer {li}: weight row has length {}, expected {width}",
                        row.len()
                    )));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Input(format!("layer {li}: non-finite weight")));
                }
            }
            if layer.bias.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("layer {li}: non-finite bias")));
            }
            for act in &layer.activations {
                act.validate()?;
            }
            width = layer.width();
        }
        Ok(Self { layers, input_box })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawNetwork = serde_json::from_str(text)?;
        let layers = raw
            .layers
            .into_iter()
            .map(|l| {
                let n = l.bias.len();
                let activations = match l.activation {
                    ActivationSpec::Shared(a) => vec![a; n],
                    ActivationSpec::PerNeuron(v) => v,
                };
                Layer { weights: l.weights, bias: l.bias, activations }
            })
            .collect();
        Self::new(layers, raw.input_box)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            layers: Vec<LayerOut<'a>>,
            input_box: &'a BoxDomain,
        }
        #[derive(Serialize)]
        struct LayerOut<'a> {
            weights: &'a [Vec<f64>],
            bias: &'a [f64],
            activation: serde_json::Value,
        }
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let shared = l.activations.windows(2).all(|w| w[0] == w[1]);
                let activation = if shared && !l.activations.is_empty() {
                    serde_json::to_value(&l.activations[0])
                } else {
                    serde_json::to_value(&l.activations)
                }
                .expect("activations serialize");
                LayerOut { weights: &l.weights, bias: &l.bias, activation }
            })
            .collect();
        serde_json::to_string_pretty(&Out { layers, input_box: &self.input_box }).expect("network serializes")
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_box(&self) -> &BoxDomain {
        &self.input_box
    }

    pub fn input_dim(&self) -> usize {
        self.input_box.dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::width)
    }

    pub fn neuron_count(&self) -> usize {
        self.layers.iter().map(Layer::width).sum()
    }

    pub fn neuron_ids(&self) -> impl Iterator<Item = NeuronId> + '_ {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(layer, l)| (0..l.width()).map(move |index| NeuronId { layer, index }))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(x)?.post.pop().unwrap_or_default())
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        if !self.input_box.contains(x, DOMAIN_TOL) {
            return Err(Error::Domain("input lies outside the network's input box".into()));
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate() {
            let input = post.last().map_or(x, |v| v.as_slice());
            let t = layer.pre_activation(input);
            let y = t
                .iter()
                .zip(&layer.activations)
                .enumerate()
                .map(|(i, (&v, act))| {
                    act.evaluate(v).map_err(|e| Error::Domain(format!("neuron L{li}N{i}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            pre.push(t);
            post.push(y);
        }
        Ok(Trace { input: x.to_vec(), pre, post })
    }
}

/// A single neuron `y = f(w.x + b)` on the box `lower <= x <= upper`, with
/// the activation already restricted to the pre-activation range `[L, U]`.
#[derive(Debug, Clone)]
pub struct Neuron {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub activation: PiecewiseLinear,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// `(min, max)` of `w.x + b` over the box.
pub fn affine_range(w: &[f64], b: f64, lower: &[f64], upper: &[f64]) -> (f64, f64) {
    let mut lo = b;
    let mut hi = b;
    for ((&wj, &l), &u) in w.iter().zip(lower).zip(upper) {
        let (a, c) = (wj * l, wj * u);
        lo += a.min(c);
        hi += a.max(c);
    }
    (lo, hi)
}

impl Neuron {
    /// Builds a neuron and clips `activation` to the box-induced range.
    ///
    /// The activation must cover `[L, U]` (up to a small tolerance).
    pub fn new(weights: Vec<f64>, bias: f64, activation: &PiecewiseLinear, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        Self::with_range(weights, bias, activation, lower, upper, f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Like [`Neuron::new`], with the pre-activation range additionally
    /// restricted to `[range_lo, range_hi]` (for bounds tighter than the box).
    pub fn with_range(
        weights: Vec<f64>,
        bias: f64,
        activation: &PiecewiseLinear,
        lower: Vec<f64>,
        upper: Vec<f64>,
        range_lo: f64,
        range_hi: f64,
    ) -> Result<Self> {
        let n = weights.len();
        if lower.len() != n || upper.len() != n {
            return Err(Error::Input("weights and box dimensions differ".into()));
        }
        BoxDomain::new(lower.clone(), upper.clone())?;
        let (blo, bhi) = affine_range(&weights, bias, &lower, &upper);
        let (lo, hi) = (blo.max(range_lo), bhi.min(range_hi));
        if !(hi > lo) {
            return Err(Error::Degenerate(format!("pre-activation range [{lo}, {hi}] is a single point")));
        }
        let tol = DOMAIN_TOL * (activation.upper() - activation.lower()).abs().max(1.0);
        if lo < activation.lower() - tol || hi > activation.upper() + tol {
            return Err(Error::Domain(format!(
                "pre-activation range [{lo}, {hi}] exceeds activation domain [{}, {}]",
                activation.lower(),
                activation.upper()
            )));
        }
        let clipped = activation.clip(lo.max(activation.lower()), hi.min(activation.upper()))?;
        // Snap the outer breakpoints to the exact range.
        let mut bps = clipped.breakpoints().to_vec();
        let k = clipped.pieces();
        bps[0] = lo;
        bps[k] = hi;
        let activation = PiecewiseLinear::new(bps, clipped.slopes().to_vec(), clipped.intercepts().to_vec())?;
        Ok(Self { weights, bias, activation, lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn pieces(&self) -> usize {
        self.activation.pieces()
    }

    pub fn pre_range(&self) -> (f64, f64) {
        (self.activation.lower(), self.activation.upper())
    }

    pub fn pre_activation(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn output(&self, x: &[f64]) -> Result<f64> {
        let t = self.pre_activation(x).clamp(self.activation.lower(), self.activation.upper());
        self.activation.evaluate(t)
    }

    /// Constant term of piece `i` as a function of `x`: `a_i b + d_i`.
    pub fn shifted_intercept(&self, i: usize) -> f64 {
        self.activation.slopes()[i] * self.bias + self.activation.intercepts()[i]
    }

    pub fn as_staircase(&self) -> Option<Staircase> {
        Staircase::from_pwl(&self.activation)
    }

    pub fn is_degenerate(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }

    /// Same neuron with activation `-f`.
    pub fn negated(&self) -> Self {
        Self { activation: self.activation.negate(), ..self.clone() }
    }

    /// Same neuron with a different activation on the same grid.
    pub fn with_activation(&self, activation: PiecewiseLinear) -> Self {
        Self { activation, ..self.clone() }
    }
}
