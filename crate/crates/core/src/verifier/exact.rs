use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use log::{debug, info};

use super::{anchor_counterexample, query_bounds, replay, separation_round, TargetReport, Verdict, VerifyConfig, VerifyReport};
use crate::bounds::PreActBounds;
use crate::error::{Error, Result};
use crate::formulations::{build_query_lp, FormulationKind, QueryModel, VerificationQuery};
use crate::lp::{solve, solve_warm, Basis, LinearProgram, LpSolution, LpStatus};

/// `z` values within this distance of 0 or 1 count as integral.
const INTEGRALITY_TOL: f64 = 1e-6;

/// Open node: per neuron, the contiguous range of pieces still allowed.
struct Node {
    bound: f64,
    ranges: Vec<(usize, usize)>,
    solution: LpSolution,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound.total_cmp(&other.bound) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound.total_cmp(&other.bound)
    }
}

/// Best-first branch-and-bound on the piece indicators. Branching bisects
/// the allowed piece range of the neuron whose `z` is least integral; in the
/// Cayley mode every node LP optimum is also separated (lazy cuts, kept
/// globally since they are valid for the whole hull).
pub fn verify_exact(query: &VerificationQuery, config: &VerifyConfig) -> Result<VerifyReport> {
    config.validate()?;
    let Some(kind) = config.mode.formulation().filter(|_| config.mode.is_exact()) else {
        return Err(Error::Parameter(format!("{} is not an exact mode", config.mode)));
    };
    let started = Instant::now();
    let mut report = VerifyReport::new(config.mode);
    let (bounds, _) = query_bounds(query, &mut report)?;
    let mut worst_gap: Option<f64> = Some(0.0);
    for target in query.targets() {
        let mut tr = TargetReport { target, verdict: Verdict::Unknown, bound: f64::INFINITY, incumbent: None, bound_history: Vec::new() };
        if !config.optimize {
            if let Some(x) = anchor_counterexample(query, target)? {
                tr.verdict = Verdict::Falsified;
                report.counterexample = Some(x);
                report.targets.push(tr);
                break;
            }
        }
        let search = Search { query, target, kind, config, started };
        let out = search.run(&bounds, &mut report)?;
        tr.bound = out.upper;
        tr.incumbent = out.incumbent.map(|(v, _)| v);
        if out.upper <= query.threshold {
            tr.verdict = Verdict::Robust;
        } else if let Some(cx) = out.witness {
            tr.verdict = Verdict::Falsified;
            report.counterexample = Some(cx);
        } else if out.complete {
            report.note(format!("target {target}: optimum above threshold is not attained by the forward pass"));
        }
        let gap = match tr.incumbent {
            _ if out.complete => Some(0.0),
            Some(lb) => Some(100.0 * (out.upper - lb).max(0.0) / lb.abs().max(1e-9)),
            None => None,
        };
        worst_gap = match (worst_gap, gap) {
            (Some(a), Some(b)) => Some(a.max(b)),
            _ => None,
        };
        info!("target {target}: [{:?}, {}] -> {:?}", tr.incumbent, tr.bound, tr.verdict);
        let stop = tr.verdict == Verdict::Falsified && !config.optimize;
        report.targets.push(tr);
        if stop {
            break;
        }
    }
    report.gap_percent = worst_gap;
    report.finish(started);
    Ok(report)
}

struct Outcome {
    upper: f64,
    incumbent: Option<(f64, Vec<f64>)>,
    /// A replayed input whose margin exceeds the threshold.
    witness: Option<Vec<f64>>,
    /// The tree was exhausted (no limit hit).
    complete: bool,
}

struct Search<'a> {
    query: &'a VerificationQuery,
    target: usize,
    kind: FormulationKind,
    config: &'a VerifyConfig,
    started: Instant,
}

impl Search<'_> {
    fn node_lp(model: &QueryModel, ranges: &[(usize, usize)]) -> LinearProgram {
        let mut lp = model.lp.clone();
        for (form, &(a, b)) in model.neurons.iter().zip(ranges) {
            for (i, &v) in form.z.iter().enumerate() {
                if i < a || i > b {
                    lp.upper[v] = 0.0;
                }
            }
        }
        lp
    }

    fn solve_node(model: &QueryModel, ranges: &[(usize, usize)], basis: Option<&Basis>, report: &mut VerifyReport) -> Result<LpSolution> {
        let lp = Self::node_lp(model, ranges);
        let t = Instant::now();
        let sol = match basis {
            Some(b) => solve_warm(&lp, b)?,
            None => solve(&lp)?,
        };
        report.solve_time += t.elapsed().as_secs_f64();
        if sol.status == LpStatus::Unbounded {
            return Err(Error::Numerical("node LP reported unbounded".into()));
        }
        Ok(sol)
    }

    /// Lazy-cut rounds at a node; returns the final node solution.
    fn strengthen(&self, model: &mut QueryModel, node: &Node, rounds: usize, report: &mut VerifyReport) -> Result<LpSolution> {
        let mut sol = node.solution.clone();
        for _ in 0..rounds {
            if sol.status != LpStatus::Optimal {
                break;
            }
            if separation_round(model, &sol.x, self.config.cut_tol, report) == 0 {
                break;
            }
            sol = Self::solve_node(model, &node.ranges, sol.basis.as_ref(), report)?;
        }
        Ok(sol)
    }

    /// Neuron to branch on and the split point, or `None` if `z` is integral.
    fn branching(model: &QueryModel, ranges: &[(usize, usize)], x: &[f64]) -> Option<(usize, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (f, form) in model.neurons.iter().enumerate() {
            let (a, b) = ranges[f];
            if a == b {
                continue;
            }
            let top = (a..=b).map(|i| x[form.z[i]]).fold(0.0_f64, f64::max);
            let score = 1.0 - top;
            if score > INTEGRALITY_TOL && best.map_or(true, |(s, _)| score > s) {
                best = Some((score, f));
            }
        }
        let (_, f) = best?;
        let (a, b) = ranges[f];
        let z: Vec<f64> = (a..=b).map(|i| x[model.neurons[f].z[i]].max(0.0)).collect();
        let total: f64 = z.iter().sum();
        let first = z.iter().position(|&v| v > INTEGRALITY_TOL).unwrap_or(0);
        let last = z.iter().rposition(|&v| v > INTEGRALITY_TOL).unwrap_or(z.len() - 1);
        // Split where the cumulative mass crosses one half, keeping mass on
        // both sides.
        let mut acc = 0.0;
        let mut split = first;
        for (i, &v) in z.iter().enumerate() {
            acc += v;
            if acc >= 0.5 * total {
                split = i;
                break;
            }
        }
        let split = split.clamp(first, last.saturating_sub(1).max(first));
        Some((f, a + split))
    }

    fn run(&self, bounds: &PreActBounds, report: &mut VerifyReport) -> Result<Outcome> {
        let cfg = self.config;
        let thr = self.query.threshold;
        let mut model = build_query_lp(self.query, self.target, self.kind, bounds)?;
        let root_ranges: Vec<(usize, usize)> = model.neurons.iter().map(|f| (0, f.z.len() - 1)).collect();
        let root = Self::solve_node(&model, &root_ranges, None, report)?;
        if root.status != LpStatus::Optimal {
            return Err(Error::Numerical("root LP is infeasible".into()));
        }
        let mut heap = BinaryHeap::new();
        heap.push(Node { bound: root.objective, ranges: root_ranges, solution: root });
        let mut incumbent: Option<(f64, Vec<f64>)> = None;
        let mut witness = None;
        if self.query.input_region()?.contains(&self.query.anchor, 0.0) {
            let m = self.query.margin(self.target, &self.query.anchor)?;
            if m > thr {
                witness = Some(self.query.anchor.clone());
            }
            incumbent = Some((m, self.query.anchor.clone()));
        }
        let mut first = true;
        let prune = |bound: f64, inc: &Option<(f64, Vec<f64>)>| inc.as_ref().map_or(false, |(v, _)| bound <= v + cfg.gap_tol);
        while let Some(node) = heap.pop() {
            if prune(node.bound, &incumbent) {
                heap.clear();
                break;
            }
            if !cfg.optimize && (node.bound <= thr || witness.is_some()) {
                heap.push(node);
                break;
            }
            if report.nodes >= cfg.node_limit || self.started.elapsed() >= cfg.timeout {
                heap.push(node);
                report.note(format!("target {}: node or time limit reached", self.target));
                break;
            }
            report.nodes += 1;
            let rounds = match self.kind {
                FormulationKind::Cayley if first => cfg.max_cut_rounds,
                FormulationKind::Cayley => cfg.node_cut_rounds,
                FormulationKind::Bigm => 0,
            };
            first = false;
            let sol = self.strengthen(&mut model, &node, rounds, report)?;
            if sol.status != LpStatus::Optimal || prune(sol.objective, &incumbent) {
                continue;
            }
            let bound = sol.objective.min(node.bound);
            match Self::branching(&model, &node.ranges, &sol.x) {
                None => {
                    let x = model.input_point(&sol.x);
                    debug!("integral node with value {}", sol.objective);
                    if incumbent.as_ref().map_or(true, |(v, _)| sol.objective > *v) {
                        incumbent = Some((sol.objective, x.clone()));
                    }
                    if witness.is_none() && sol.objective > thr {
                        witness = replay(self.query, self.target, &x)?;
                    }
                }
                Some((f, split)) => {
                    let (a, b) = node.ranges[f];
                    for range in [(a, split), (split + 1, b)] {
                        let mut ranges = node.ranges.clone();
                        ranges[f] = range;
                        let child = Self::solve_node(&model, &ranges, sol.basis.as_ref(), report)?;
                        if child.status == LpStatus::Optimal && !prune(child.objective, &incumbent) {
                            heap.push(Node { bound: child.objective.min(bound), ranges, solution: child });
                        }
                    }
                }
            }
        }
        let inc_value = incumbent.as_ref().map(|(v, _)| *v);
        let open = heap.iter().map(|n| n.bound).fold(f64::NEG_INFINITY, f64::max);
        let complete = heap.is_empty();
        let upper = if complete { inc_value.unwrap_or(f64::NEG_INFINITY) } else { open.max(inc_value.unwrap_or(f64::NEG_INFINITY)) };
        Ok(Outcome { upper, incumbent, witness, complete })
    }
}
