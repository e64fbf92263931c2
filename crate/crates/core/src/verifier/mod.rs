//! Relaxed (LP plus cutting planes) and exact (branch-and-bound) drivers.

mod exact;
mod relaxed;

use std::str::FromStr;
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::bounds::{interval_bounds, DeepPoly, PreActBounds};
use crate::error::{Error, Result};
use crate::formulations::{FormulationKind, NeuronFormulation, QueryModel, VerificationQuery};
use crate::lp::LinearProgram;
use crate::separation::{separate_pwl, Direction};

pub use exact::verify_exact;
pub use relaxed::verify_relaxed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Deeppoly,
    BigmLp,
    CayleyLp,
    BigmExact,
    CayleyExact,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::Deeppoly, Mode::BigmLp, Mode::CayleyLp, Mode::BigmExact, Mode::CayleyExact];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Deeppoly => "deeppoly",
            Mode::BigmLp => "bigm-lp",
            Mode::CayleyLp => "cayley-lp",
            Mode::BigmExact => "bigm-exact",
            Mode::CayleyExact => "cayley-exact",
        }
    }

    pub fn is_exact(self) -> bool {
        matches!(self, Mode::BigmExact | Mode::CayleyExact)
    }

    pub fn formulation(self) -> Option<FormulationKind> {
        match self {
            Mode::Deeppoly => None,
            Mode::BigmLp | Mode::BigmExact => Some(FormulationKind::Bigm),
            Mode::CayleyLp | Mode::CayleyExact => Some(FormulationKind::Cayley),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown mode {s:?}; expected one of deeppoly, bigm-lp, cayley-lp, bigm-exact, cayley-exact")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub mode: Mode,
    /// Cutting-plane rounds for the relaxed modes and at the root node.
    pub max_cut_rounds: usize,
    /// Rounds of lazy cuts at every other branch-and-bound node.
    pub node_cut_rounds: usize,
    /// A cut is added only if the LP point violates it by more than this.
    pub cut_tol: f64,
    pub node_limit: usize,
    #[serde(serialize_with = "as_secs")]
    pub timeout: Duration,
    /// Absolute optimality tolerance for pruning nodes.
    pub gap_tol: f64,
    /// Exact modes: keep going to the optimum instead of stopping once the
    /// verdict is known.
    pub optimize: bool,
}

fn as_secs<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            mode: Mode::CayleyLp,
            max_cut_rounds: 20,
            node_cut_rounds: 2,
            cut_tol: 1e-6,
            node_limit: 100_000,
            timeout: Duration::from_secs(120),
            gap_tol: 1e-7,
            optimize: false,
        }
    }
}

impl VerifyConfig {
    pub fn with_mode(mode: Mode) -> Self {
        Self { mode, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cut_tol > 0.0) || !(self.gap_tol > 0.0) {
            return Err(Error::Parameter("tolerances must be positive".into()));
        }
        if self.timeout.is_zero() {
            return Err(Error::Parameter("timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Robust,
    Falsified,
    Unknown,
}

/// Outcome for one target label.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetReport {
    pub target: usize,
    pub verdict: Verdict,
    /// Upper bound on `out[target] - out[label]` (infinite if none was found).
    pub bound: f64,
    /// Best value of a feasible point of the model, exact modes only.
    pub incumbent: Option<f64>,
    /// LP objective after each cutting-plane round (relaxed modes).
    pub bound_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub mode: Mode,
    pub verdict: Verdict,
    pub targets: Vec<TargetReport>,
    /// Input that flips the label under the forward pass.
    pub counterexample: Option<Vec<f64>>,
    pub cuts_added: usize,
    pub nodes: usize,
    pub gap_percent: Option<f64>,
    pub solve_time: f64,
    pub separation_time: f64,
    pub total_time: f64,
    pub message: Option<String>,
}

impl VerifyReport {
    /// Empty report with an unknown verdict.
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            verdict: Verdict::Unknown,
            targets: Vec::new(),
            counterexample: None,
            cuts_added: 0,
            nodes: 0,
            gap_percent: None,
            solve_time: 0.0,
            separation_time: 0.0,
            total_time: 0.0,
            message: None,
        }
    }

    fn note(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        warn!("{msg}");
        match &mut self.message {
            Some(m) => {
                m.push_str("; ");
                m.push_str(&msg);
            }
            None => self.message = Some(msg),
        }
    }

    /// Verdict over all targets: falsified if any is, robust if all are.
    fn finish(&mut self, started: Instant) {
        self.verdict = if self.targets.iter().any(|t| t.verdict == Verdict::Falsified) {
            Verdict::Falsified
        } else if !self.targets.is_empty() && self.targets.iter().all(|t| t.verdict == Verdict::Robust) {
            Verdict::Robust
        } else {
            Verdict::Unknown
        };
        self.total_time = started.elapsed().as_secs_f64();
    }
}

/// Runs the mode selected in `config`.
pub fn verify(query: &VerificationQuery, config: &VerifyConfig) -> Result<VerifyReport> {
    if config.mode.is_exact() {
        verify_exact(query, config)
    } else {
        verify_relaxed(query, config)
    }
}

/// DeepPoly analysis of the query region; falls back to interval bounds
/// (with a note) when an activation has no relaxation rule.
fn query_bounds(query: &VerificationQuery, report: &mut VerifyReport) -> Result<(PreActBounds, Option<DeepPoly>)> {
    let region = query.input_region()?;
    match DeepPoly::analyze(&query.network, &region) {
        Ok(dp) => {
            if !dp.bounds.fallbacks.is_empty() {
                debug!("{} neurons used constant relaxations", dp.bounds.fallbacks.len());
            }
            Ok((dp.bounds.clone(), Some(dp)))
        }
        Err(Error::Parameter(msg)) => {
            report.note(format!("DeepPoly unavailable ({msg}); using interval bounds"));
            Ok((interval_bounds(&query.network, &region)?, None))
        }
        Err(e) => Err(e),
    }
}

/// The anchor if it lies in the region and already flips the label.
fn anchor_counterexample(query: &VerificationQuery, target: usize) -> Result<Option<Vec<f64>>> {
    let region = query.input_region()?;
    if !region.contains(&query.anchor, 0.0) {
        return Ok(None);
    }
    Ok((query.margin(target, &query.anchor)? > query.threshold).then(|| query.anchor.clone()))
}

/// Replays `x` (clamped into the region) through the forward pass and returns
/// it if it flips the label.
fn replay(query: &VerificationQuery, target: usize, x: &[f64]) -> Result<Option<Vec<f64>>> {
    let region = query.input_region()?;
    let x: Vec<f64> = x.iter().zip(region.lower.iter().zip(&region.upper)).map(|(&v, (&l, &u))| v.clamp(l, u)).collect();
    match query.margin(target, &x) {
        Ok(m) if m > query.threshold => Ok(Some(x)),
        Ok(_) => Ok(None),
        // A stale-bounds domain error cannot happen inside the region, but a
        // replay failure should not abort verification.
        Err(e) => {
            debug!("replay failed: {e}");
            Ok(None)
        }
    }
}

/// Projects the LP values of one neuron onto its box and the simplex.
fn neuron_point(form: &NeuronFormulation, values: &[f64]) -> (Vec<f64>, f64, Vec<f64>) {
    let (mut x, y, mut z) = form.point(values);
    if let Some(nr) = &form.neuron {
        for (j, v) in x.iter_mut().enumerate() {
            *v = v.clamp(nr.lower[j], nr.upper[j]);
        }
    }
    z.iter_mut().for_each(|v| *v = v.max(0.0));
    let s: f64 = z.iter().sum();
    if s > 0.0 {
        z.iter_mut().for_each(|v| *v /= s);
    } else if let Some(first) = z.first_mut() {
        *first = 1.0;
    }
    (x, y, z)
}

/// One separation pass over every neuron at the LP point `values`. Adds the
/// cuts violated by more than `tol` and returns how many were added.
fn separation_round(model: &mut QueryModel, values: &[f64], tol: f64, report: &mut VerifyReport) -> usize {
    let started = Instant::now();
    let QueryModel { lp, neurons, .. } = model;
    let mut added = 0;
    for form in neurons.iter_mut() {
        added += separate_neuron(lp, form, values, tol);
    }
    report.separation_time += started.elapsed().as_secs_f64();
    report.cuts_added += added;
    added
}

fn separate_neuron(lp: &mut LinearProgram, form: &mut NeuronFormulation, values: &[f64], tol: f64) -> usize {
    let Some(neuron) = form.neuron.clone() else { return 0 };
    let (x, y, z) = neuron_point(form, values);
    let (raw_x, raw_y, raw_z) = form.point(values);
    let mut added = 0;
    for dir in [Direction::Upper, Direction::Lower] {
        match separate_pwl(&neuron, &x, y, &z, dir) {
            Ok(res) => {
                if let Some(mut cut) = res.cut {
                    if cut.violation(&raw_x, raw_y, &raw_z) > tol {
                        cut.neuron = form.id;
                        added += usize::from(form.add_cut(lp, cut));
                    }
                }
            }
            Err(e) => debug!("separation skipped for {:?}: {e}", form.id),
        }
    }
    added
}
