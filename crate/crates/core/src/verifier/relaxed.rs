use std::time::Instant;

use log::{debug, info};

use super::{anchor_counterexample, query_bounds, replay, separation_round, TargetReport, Verdict, VerifyConfig, VerifyReport};
use crate::error::{Error, Result};
use crate::formulations::{build_query_lp, FormulationKind, VerificationQuery};
use crate::lp::{solve, solve_warm, LpSolution, LpStatus};

/// Solves the LP relaxation per target; in the Cayley mode, alternates LP
/// solves and separation until no cut is violated or the round limit is hit.
/// The `deeppoly` mode only back-substitutes the objective.
pub fn verify_relaxed(query: &VerificationQuery, config: &VerifyConfig) -> Result<VerifyReport> {
    config.validate()?;
    if config.mode.is_exact() {
        return Err(Error::Parameter(format!("{} is not a relaxation mode", config.mode)));
    }
    let started = Instant::now();
    let mut report = VerifyReport::new(config.mode);
    let (bounds, deeppoly) = query_bounds(query, &mut report)?;
    for target in query.targets() {
        let mut tr = TargetReport { target, verdict: Verdict::Unknown, bound: f64::INFINITY, incumbent: None, bound_history: Vec::new() };
        if let Some(x) = anchor_counterexample(query, target)? {
            tr.verdict = Verdict::Falsified;
            report.counterexample = Some(x);
            report.targets.push(tr);
            break;
        }
        let last_x = match config.mode.formulation() {
            None => {
                match &deeppoly {
                    Some(dp) => tr.bound = dp.max_output(&query.network, &query.objective(target))?,
                    None => report.note("no DeepPoly bound for this network"),
                }
                None
            }
            Some(kind) => match solve_target(query, target, kind, &bounds, config, &mut report, &mut tr) {
                Ok(x) => x,
                Err(e @ Error::Numerical(_)) => {
                    report.note(format!("target {target}: {e}"));
                    None
                }
                Err(e) => return Err(e),
            },
        };
        if tr.bound <= query.threshold {
            tr.verdict = Verdict::Robust;
        } else if let Some(x) = last_x {
            if let Some(cx) = replay(query, target, &x)? {
                tr.verdict = Verdict::Falsified;
                report.counterexample = Some(cx);
            }
        }
        info!("target {target}: bound {} -> {:?}", tr.bound, tr.verdict);
        let stop = tr.verdict == Verdict::Falsified;
        report.targets.push(tr);
        if stop {
            break;
        }
    }
    report.finish(started);
    Ok(report)
}

fn timed_solve(lp: &crate::lp::LinearProgram, warm: Option<&LpSolution>, report: &mut VerifyReport) -> Result<LpSolution> {
    let t = Instant::now();
    let sol = match warm.and_then(|s| s.basis.as_ref()) {
        Some(b) => solve_warm(lp, b)?,
        None => solve(lp)?,
    };
    report.solve_time += t.elapsed().as_secs_f64();
    Ok(sol)
}

/// Returns the input part of the final LP point.
fn solve_target(
    query: &VerificationQuery,
    target: usize,
    kind: FormulationKind,
    bounds: &crate::bounds::PreActBounds,
    config: &VerifyConfig,
    report: &mut VerifyReport,
    tr: &mut TargetReport,
) -> Result<Option<Vec<f64>>> {
    let mut model = build_query_lp(query, target, kind, bounds)?;
    let mut sol = timed_solve(&model.lp, None, report)?;
    for round in 0.. {
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => return Err(Error::Numerical("query LP reported infeasible".into())),
            LpStatus::Unbounded => return Err(Error::Numerical("query LP reported unbounded".into())),
        }
        tr.bound_history.push(sol.objective);
        tr.bound = sol.objective;
        if kind != FormulationKind::Cayley || round >= config.max_cut_rounds {
            break;
        }
        let added = separation_round(&mut model, &sol.x, config.cut_tol, report);
        debug!("round {round}: objective {} with {added} new cuts", sol.objective);
        if added == 0 {
            break;
        }
        sol = timed_solve(&model.lp, Some(&sol), report)?;
    }
    Ok(Some(model.input_point(&sol.x)))
}
