use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnapsackSense {
    Max,
    Min,
}

/// Optimizes `c.x` over `{l <= x <= u, lhs <= w.x <= rhs}` greedily.
///
/// Starts at the box optimum and, if `w.x` misses the slab, moves coordinates
/// toward the slab in order of increasing objective loss per unit of `w.x`.
/// At most one coordinate ends strictly between its bounds.
pub fn solve_box_knapsack(
    c: &[f64],
    w: &[f64],
    lhs: f64,
    rhs: f64,
    l: &[f64],
    u: &[f64],
    sense: KnapsackSense,
) -> Result<(Vec<f64>, f64)> {
    let n = c.len();
    if w.len() != n || l.len() != n || u.len() != n {
        return Err(Error::Input("knapsack vectors have different lengths".into()));
    }
    if lhs > rhs {
        return Err(Error::Infeasible(format!("empty slab [{lhs}, {rhs}]")));
    }
    let sgn = match sense {
        KnapsackSense::Max => 1.0,
        KnapsackSense::Min => -1.0,
    };
    let mut x: Vec<f64> = (0..n).map(|j| if sgn * c[j] > 0.0 { u[j] } else { l[j] }).collect();
    let mut act: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
    let scale = w
        .iter()
        .zip(l.iter().zip(u))
        .fold(lhs.abs().max(rhs.abs()).max(1.0), |m, (wj, (lj, uj))| m.max((wj * lj).abs()).max((wj * uj).abs()));
    let tol = 1e-12 * scale;

    let target = if act > rhs + tol {
        Some(rhs)
    } else if act < lhs - tol {
        Some(lhs)
    } else {
        None
    };
    if let Some(target) = target {
        let decrease = act > target;
        // Objective loss per unit of activity moved toward the slab.
        let mut order: Vec<(usize, f64)> = (0..n)
            .filter(|&j| w[j] != 0.0 && u[j] > l[j])
            .filter(|&j| {
                let moves_down = (w[j] > 0.0) == decrease;
                if moves_down {
                    x[j] > l[j]
                } else {
                    x[j] < u[j]
                }
            })
            .map(|j| {
                let ratio = sgn * c[j] / w[j];
                (j, if decrease { ratio } else { -ratio })
            })
            .collect();
        order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let mut need = (act - target).abs();
        for (j, _) in order {
            if need <= 0.0 {
                break;
            }
            let room = (u[j] - l[j]) * w[j].abs();
            let toward_lower = (w[j] > 0.0) == decrease;
            if room <= need {
                x[j] = if toward_lower { l[j] } else { u[j] };
                need -= room;
            } else {
                let delta = need / w[j].abs();
                x[j] = if toward_lower { u[j] - delta } else { l[j] + delta };
                need = 0.0;
            }
        }
        act = w.iter().zip(&x).map(|(a, b)| a * b).sum();
        if act > rhs + 1e-9 * scale || act < lhs - 1e-9 * scale {
            return Err(Error::Infeasible(format!("slab [{lhs}, {rhs}] does not meet the box")));
        }
    }
    let obj = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    Ok((x, obj))
}
