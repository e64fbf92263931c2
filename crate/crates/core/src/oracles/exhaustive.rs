use crate::error::{Error, Result};
use crate::formulations::VerificationQuery;
use crate::lp::{solve, LinearProgram, LpStatus, ObjSense, RowSense, INF};
use crate::network::Activation;
use crate::pwl::dorefa;

/// Largest number of piece patterns [`exhaustive_verify`] will enumerate.
pub const PATTERN_BUDGET: usize = 4096;

/// `(lo, hi, slope, intercept)` for every piece of the unrestricted activation.
fn pieces(act: &Activation) -> Result<Vec<(f64, f64, f64, f64)>> {
    Ok(match act {
        Activation::Identity => vec![(-INF, INF, 1.0, 0.0)],
        Activation::Relu => vec![(-INF, 0.0, 0.0, 0.0), (0.0, INF, 1.0, 0.0)],
        Activation::Dorefa { bits, lo, hi } => {
            let q = dorefa(*bits, *lo, *hi)?;
            let f = q.function();
            let h = f.breakpoints();
            let k = f.pieces();
            (0..k)
                .map(|i| {
                    let a = if i == 0 { -INF } else { h[i] };
                    let b = if i + 1 == k { INF } else { h[i + 1] };
                    (a, b, 0.0, f.intercepts()[i])
                })
                .collect()
        }
        Activation::Pwl(f) | Activation::Staircase(f) => {
            let h = f.breakpoints();
            (0..f.pieces()).map(|i| (h[i], h[i + 1], f.slopes()[i], f.intercepts()[i])).collect()
        }
    })
}

/// Exact `max c.out` for one target by fixing every neuron to one piece of
/// its activation, solving the resulting LP and taking the best pattern.
/// Independent of the bounds module. Returns `-inf` if no pattern is feasible.
pub fn exhaustive_verify(query: &VerificationQuery, target: usize) -> Result<f64> {
    let region = query.input_region()?;
    let net = &query.network;
    let all: Vec<Vec<Vec<(f64, f64, f64, f64)>>> = net
        .layers()
        .iter()
        .map(|l| l.activations.iter().map(pieces).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let counts: Vec<usize> = all.iter().flatten().map(Vec::len).collect();
    let total = counts.iter().try_fold(1usize, |acc, &c| acc.checked_mul(c).filter(|&p| p <= PATTERN_BUDGET));
    let Some(total) = total else {
        return Err(Error::Capability(format!("more than {PATTERN_BUDGET} piece patterns")));
    };
    let c = query.objective(target);
    let mut best = f64::NEG_INFINITY;
    let mut choice = vec![0usize; counts.len()];
    for _ in 0..total {
        let mut lp = LinearProgram::new(ObjSense::Maximize);
        let mut prev: Vec<usize> =
            (0..region.dim()).map(|j| lp.add_var(region.lower[j], region.upper[j], 0.0)).collect();
        let mut flat = 0;
        for (li, layer) in net.layers().iter().enumerate() {
            let mut outs = Vec::with_capacity(layer.width());
            for i in 0..layer.width() {
                let (lo, hi, a, d) = all[li][i][choice[flat]];
                flat += 1;
                let wx: Vec<(usize, f64)> = prev.iter().zip(&layer.weights[i]).map(|(&v, &w)| (v, w)).collect();
                let b = layer.bias[i];
                lp.add_range(wx.clone(), lo - b, hi - b);
                let y = lp.add_var(-INF, INF, 0.0);
                let mut row: Vec<(usize, f64)> = wx.into_iter().map(|(v, w)| (v, a * w)).collect();
                row.push((y, -1.0));
                lp.add_row(row, RowSense::Eq, -(a * b + d));
                outs.push(y);
            }
            prev = outs;
        }
        for (&v, &cv) in prev.iter().zip(&c) {
            lp.objective[v] = cv;
        }
        let sol = solve(&lp)?;
        match sol.status {
            LpStatus::Optimal => best = best.max(sol.objective),
            LpStatus::Infeasible => {}
            LpStatus::Unbounded => return Err(Error::Numerical("pattern LP is unbounded".into())),
        }
        // Advance the mixed-radix counter.
        for (slot, &n) in choice.iter_mut().zip(&counts) {
            *slot += 1;
            if *slot < n {
                break;
            }
            *slot = 0;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{BoxDomain, Layer, Network};

    #[test]
    fn two_relus_by_hand() {
        // out1 - out0 with out0 = 0, out1 = relu(x) - relu(-x) = x on [-1, 2].
        let b = BoxDomain::new(vec![-1.0], vec![2.0]).unwrap();
        let net = Network::new(
            vec![
                Layer::new(vec![vec![1.0], vec![-1.0]], vec![0.0; 2], Activation::Relu),
                Layer::new(vec![vec![0.0, 0.0], vec![1.0, -1.0]], vec![0.0; 2], Activation::Identity),
            ],
            b,
        )
        .unwrap();
        let q = VerificationQuery::new(net, vec![0.5], 10.0, 0).unwrap();
        assert!((exhaustive_verify(&q, 1).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn budget_is_enforced() {
        let b = BoxDomain::new(vec![0.0], vec![1.0]).unwrap();
        let act = Activation::Dorefa { bits: 3, lo: 0.0, hi: 1.0 };
        let net = Network::new(
            vec![
                Layer::new(vec![vec![1.0]; 5], vec![0.0; 5], act),
                Layer::new(vec![vec![1.0; 5], vec![0.0; 5]], vec![0.0; 2], Activation::Identity),
            ],
            b,
        )
        .unwrap();
        let q = VerificationQuery::new(net, vec![0.5], 0.1, 0).unwrap();
        assert!(matches!(exhaustive_verify(&q, 1), Err(Error::Capability(_))));
    }
}
