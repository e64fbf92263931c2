//! The `separate` debug command: one neuron, one query point.

use serde::{Deserialize, Serialize};
use stairverify::network::{affine_range, Activation, Neuron};
use stairverify::separation::{separate_pwl, Certificate, Cut, Direction, SeparationResult};

use crate::io::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
pub struct NeuronSpec {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub activation: Activation,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Query file: a neuron and a point `(x, y, z)`.
#[derive(Debug, Clone, Deserialize)]
pub struct Instance {
    pub neuron: NeuronSpec,
    pub x: Vec<f64>,
    pub y: f64,
    pub z: Vec<f64>,
    #[serde(default)]
    pub direction: Option<Direction>,
}

impl NeuronSpec {
    pub fn build(&self) -> CliResult<Neuron> {
        if self.weights.len() != self.lower.len() || self.lower.len() != self.upper.len() {
            return Err(CliError::Input("weights, lower and upper must have the same length".into()));
        }
        let (lo, hi) = affine_range(&self.weights, self.bias, &self.lower, &self.upper);
        if !(hi > lo) {
            return Err(CliError::Input(format!("neuron pre-activation range [{lo}, {hi}] is a single point")));
        }
        let f = self.activation.restricted(lo, hi)?;
        Ok(Neuron::new(self.weights.clone(), self.bias, &f, self.lower.clone(), self.upper.clone())?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeparateOutput {
    pub direction: Direction,
    pub inside: bool,
    /// Tightest bound on `y` at `(x, z)`, infinite when `(x, z)` is outside
    /// the projection of the hull.
    pub bound: f64,
    pub certificate: Certificate,
    pub cut: Option<Cut>,
    pub violation: Option<f64>,
    /// Activation pieces after restriction to the box; `z` is indexed by these.
    pub pieces: Vec<[f64; 2]>,
}

pub fn run(inst: &Instance, direction: Option<Direction>) -> CliResult<SeparateOutput> {
    let neuron = inst.neuron.build()?;
    let dir = direction.or(inst.direction).unwrap_or(Direction::Upper);
    if inst.z.len() != neuron.pieces() {
        return Err(CliError::Input(format!(
            "z has {} entries but the activation has {} pieces on this box",
            inst.z.len(),
            neuron.pieces()
        )));
    }
    let r: SeparationResult = separate_pwl(&neuron, &inst.x, inst.y, &inst.z, dir)?;
    let violation = r.cut.as_ref().map(|c| c.violation(&inst.x, inst.y, &inst.z));
    let h = neuron.activation.breakpoints();
    Ok(SeparateOutput {
        direction: dir,
        inside: r.cut.is_none(),
        bound: r.bound,
        certificate: r.certificate,
        cut: r.cut,
        violation,
        pieces: h.windows(2).map(|w| [w[0], w[1]]).collect(),
    })
}

/// 17 significant digits, enough to reproduce any `f64` exactly.
pub fn digits17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn render_text(out: &SeparateOutput) -> String {
    let dir = match out.direction {
        Direction::Upper => "upper",
        Direction::Lower => "lower",
    };
    match &out.cut {
        None => {
            let cert = match out.certificate {
                Certificate::Finite(v) => digits17(v),
                Certificate::Unbounded => "unbounded".into(),
            };
            format!("inside ({dir})\ncertificate {cert}\nbound {}\n", digits17(out.bound))
        }
        Some(cut) => {
            let join = |v: &[f64]| v.iter().map(|&a| digits17(a)).collect::<Vec<_>>().join(" ");
            format!(
                "violated ({dir})\nalpha {}\ncoefs {}\nviolation {}\n",
                join(&cut.alpha),
                join(&cut.coefs),
                digits17(out.violation.unwrap_or(f64::NAN))
            )
        }
    }
}
