//! Per-neuron constraint systems (Big-M and Cayley cut pools) and the
//! target-attack LP that stitches them into one model.

use serde::{Deserialize, Serialize};

use crate::bounds::{output_range, PreActBounds};
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, ObjSense, RowSense};
use crate::network::{Activation, BoxDomain, Network, Neuron, NeuronId};
use crate::separation::{retrieve_cut, Cut, Direction};

/// Two cuts with the same direction whose `alpha` differ by at most this
/// much are treated as duplicates.
pub const CUT_DEDUP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormulationKind {
    Bigm,
    Cayley,
}

/// Variables and cut pool of one neuron inside a [`LinearProgram`]. Only
/// neurons with at least two pieces on their range get one.
#[derive(Debug, Clone)]
pub struct NeuronFormulation {
    pub id: Option<NeuronId>,
    pub inputs: Vec<usize>,
    pub output: usize,
    pub z: Vec<usize>,
    pub neuron: Option<Neuron>,
    pub cuts: Vec<Cut>,
}

impl NeuronFormulation {
    /// `(x, y, z)` restricted to this neuron.
    pub fn point(&self, values: &[f64]) -> (Vec<f64>, f64, Vec<f64>) {
        let x = self.inputs.iter().map(|&v| values[v]).collect();
        let z = self.z.iter().map(|&v| values[v]).collect();
        (x, values[self.output], z)
    }

    /// Whether a cut with this direction and `alpha` is already pooled.
    pub fn has_cut(&self, cut: &Cut) -> bool {
        self.cuts.iter().any(|c| {
            c.direction == cut.direction
                && c.alpha.iter().zip(&cut.alpha).all(|(a, b)| (a - b).abs() <= CUT_DEDUP_TOL)
        })
    }

    /// Appends `cut` as a row unless it is a duplicate. Returns whether a row
    /// was added.
    pub fn add_cut(&mut self, lp: &mut LinearProgram, cut: Cut) -> bool {
        if self.z.is_empty() || self.has_cut(&cut) {
            return false;
        }
        // Upper: y - alpha.x - c.z <= 0. Lower: the same expression >= 0.
        let mut coefs = vec![(self.output, 1.0)];
        coefs.extend(self.inputs.iter().zip(&cut.alpha).filter(|(_, &a)| a != 0.0).map(|(&v, &a)| (v, -a)));
        coefs.extend(self.z.iter().zip(&cut.coefs).map(|(&v, &c)| (v, -c)));
        let sense = match cut.direction {
            Direction::Upper => RowSense::Le,
            Direction::Lower => RowSense::Ge,
        };
        lp.add_row(coefs, sense, 0.0);
        self.cuts.push(cut);
        true
    }
}

fn add_output(lp: &mut LinearProgram, neuron: &Neuron, id: Option<NeuronId>) -> usize {
    let (lo, hi) = neuron.activation.range();
    let name = id.map_or_else(|| "y".to_string(), |id| format!("y_{id}"));
    lp.add_named_var(name, lo, hi, 0.0)
}

fn add_indicators(lp: &mut LinearProgram, neuron: &Neuron, inputs: &[usize], id: Option<NeuronId>) -> Vec<usize> {
    let k = neuron.pieces();
    let z: Vec<usize> = (0..k)
        .map(|i| lp.add_named_var(id.map_or_else(|| format!("z{i}"), |id| format!("z_{id}_{i}")), 0.0, 1.0, 0.0))
        .collect();
    lp.add_row(z.iter().map(|&v| (v, 1.0)).collect(), RowSense::Eq, 1.0);
    // sum_i h_{i-1} z_i <= w.x + b <= sum_i h_i z_i
    let h = neuron.activation.breakpoints();
    let wx: Vec<(usize, f64)> = inputs.iter().zip(&neuron.weights).filter(|(_, &w)| w != 0.0).map(|(&v, &w)| (v, w)).collect();
    let mut lo = wx.clone();
    lo.extend(z.iter().enumerate().map(|(i, &v)| (v, -h[i])));
    lp.add_row(lo, RowSense::Ge, -neuron.bias);
    let mut hi = wx;
    hi.extend(z.iter().enumerate().map(|(i, &v)| (v, -h[i + 1])));
    lp.add_row(hi, RowSense::Le, -neuron.bias);
    z
}

/// Big-M formulation with `z` continuous in `[0, 1]`. Each piece gets its
/// own constants, bounding `y - a_i t - d_i` over the range when `z_i = 0`;
/// piecewise-constant activations use `y = sum_i d_i z_i` instead.
pub fn build_bigm(lp: &mut LinearProgram, neuron: &Neuron, inputs: &[usize], id: Option<NeuronId>) -> Result<NeuronFormulation> {
    check_inputs(neuron, inputs)?;
    let y = add_output(lp, neuron, id);
    let z = add_indicators(lp, neuron, inputs, id);
    let f = &neuron.activation;
    if f.is_piecewise_constant() {
        let mut coefs = vec![(y, 1.0)];
        coefs.extend(z.iter().zip(f.intercepts()).map(|(&v, &d)| (v, -d)));
        lp.add_row(coefs, RowSense::Eq, 0.0);
    } else {
        let (ylo, yhi) = f.range();
        let (tlo, thi) = neuron.pre_range();
        for i in 0..neuron.pieces() {
            let (a, d) = (f.slopes()[i], f.intercepts()[i]);
            let (p, q) = (a * tlo + d, a * thi + d);
            let m_hi = yhi - p.min(q);
            let m_lo = ylo - p.max(q);
            // y - a (w.x) - z_i m_hi <= a b + d - m_hi, and the mirrored row.
            let mut row = vec![(y, 1.0)];
            row.extend(inputs.iter().zip(&neuron.weights).filter(|(_, &w)| w != 0.0).map(|(&v, &w)| (v, -a * w)));
            let shift = a * neuron.bias + d;
            let mut up = row.clone();
            up.push((z[i], m_hi));
            lp.add_row(up, RowSense::Le, shift + m_hi);
            row.push((z[i], m_lo));
            lp.add_row(row, RowSense::Ge, shift + m_lo);
        }
    }
    Ok(NeuronFormulation { id, inputs: inputs.to_vec(), output: y, z, neuron: Some(neuron.clone()), cuts: Vec::new() })
}

/// Slopes whose `alpha = a w` seed cuts are installed: 0 and every distinct
/// slope of the activation.
fn seed_slopes(neuron: &Neuron) -> Vec<f64> {
    let mut s = vec![0.0];
    s.extend(neuron.activation.distinct_slopes().into_iter().filter(|&a| a != 0.0));
    s
}

/// Cayley-embedding formulation: simplex and coupling rows plus the seed
/// cuts `alpha = 0` and `alpha = a w` for each slope, in both directions.
/// With integral `z` the seeds already pin `y` to the active piece.
pub fn build_cayley(lp: &mut LinearProgram, neuron: &Neuron, inputs: &[usize], id: Option<NeuronId>) -> Result<NeuronFormulation> {
    check_inputs(neuron, inputs)?;
    let y = add_output(lp, neuron, id);
    let z = add_indicators(lp, neuron, inputs, id);
    let mut form = NeuronFormulation { id, inputs: inputs.to_vec(), output: y, z, neuron: Some(neuron.clone()), cuts: Vec::new() };
    for a in seed_slopes(neuron) {
        let alpha: Vec<f64> = neuron.weights.iter().map(|w| a * w).collect();
        for dir in [Direction::Upper, Direction::Lower] {
            let mut cut = retrieve_cut(neuron, &alpha, dir)?;
            cut.neuron = id;
            form.add_cut(lp, cut);
        }
    }
    Ok(form)
}

fn check_inputs(neuron: &Neuron, inputs: &[usize]) -> Result<()> {
    if inputs.len() != neuron.dim() {
        return Err(Error::Formulation(format!("{} input variables for a neuron of dimension {}", inputs.len(), neuron.dim())));
    }
    Ok(())
}

pub fn build_neuron(lp: &mut LinearProgram, kind: FormulationKind, neuron: &Neuron, inputs: &[usize], id: Option<NeuronId>) -> Result<NeuronFormulation> {
    match kind {
        FormulationKind::Bigm => build_bigm(lp, neuron, inputs, id),
        FormulationKind::Cayley => build_cayley(lp, neuron, inputs, id),
    }
}

/// Single-neuron model with input variables on the neuron's box.
pub fn neuron_lp(neuron: &Neuron, kind: FormulationKind, sense: ObjSense) -> Result<(LinearProgram, NeuronFormulation)> {
    let mut lp = LinearProgram::new(sense);
    let inputs: Vec<usize> =
        (0..neuron.dim()).map(|j| lp.add_named_var(format!("x{j}"), neuron.lower[j], neuron.upper[j], 0.0)).collect();
    let form = build_neuron(&mut lp, kind, neuron, &inputs, None)?;
    Ok((lp, form))
}

/// Robustness query around `anchor`: is `out[target] - out[label] <= threshold`
/// for every input within `eps` (infinity norm) of `anchor` and inside the
/// network's input box? `target = None` checks every other label.
#[derive(Debug, Clone)]
pub struct VerificationQuery {
    pub network: Network,
    pub anchor: Vec<f64>,
    pub eps: f64,
    pub label: usize,
    pub target: Option<usize>,
    pub threshold: f64,
}

impl VerificationQuery {
    pub fn new(network: Network, anchor: Vec<f64>, eps: f64, label: usize) -> Result<Self> {
        let q = Self { network, anchor, eps, label, target: None, threshold: 0.0 };
        q.input_region()?;
        if label >= q.network.output_dim() {
            return Err(Error::Input(format!("label {label} out of range for {} outputs", q.network.output_dim())));
        }
        Ok(q)
    }

    /// `X_eps(anchor)` intersected with the input box.
    pub fn input_region(&self) -> Result<BoxDomain> {
        if self.anchor.len() != self.network.input_dim() {
            return Err(Error::Input(format!(
                "anchor has dimension {}, network expects {}",
                self.anchor.len(),
                self.network.input_dim()
            )));
        }
        self.network.input_box().intersect_ball(&self.anchor, self.eps)
    }

    pub fn targets(&self) -> Vec<usize> {
        match self.target {
            Some(t) => vec![t],
            None => (0..self.network.output_dim()).filter(|&t| t != self.label).collect(),
        }
    }

    /// Coefficients `c` of `c.out` for one target.
    pub fn objective(&self, target: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.network.output_dim()];
        c[target] += 1.0;
        c[self.label] -= 1.0;
        c
    }

    /// `c.N(x)` evaluated by the forward pass.
    pub fn margin(&self, target: usize, x: &[f64]) -> Result<f64> {
        let out = self.network.forward(x)?;
        Ok(self.objective(target).iter().zip(&out).map(|(c, v)| c * v).sum())
    }
}

/// The stitched target-attack LP and its variable map.
#[derive(Debug, Clone)]
pub struct QueryModel {
    pub lp: LinearProgram,
    pub kind: FormulationKind,
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
    /// Neurons with a piece selection, in layer order.
    pub neurons: Vec<NeuronFormulation>,
}

impl QueryModel {
    pub fn input_point(&self, values: &[f64]) -> Vec<f64> {
        self.inputs.iter().map(|&v| values[v]).collect()
    }
}

/// Builds `max c.out` over the query region with every neuron modelled by
/// `kind` on the ranges in `bounds`. `z` is continuous.
pub fn build_query_lp(query: &VerificationQuery, target: usize, kind: FormulationKind, bounds: &PreActBounds) -> Result<QueryModel> {
    let region = query.input_region()?;
    let net = &query.network;
    if bounds.layers.len() != net.layers().len() {
        return Err(Error::Input("bounds do not match the network".into()));
    }
    let mut lp = LinearProgram::new(ObjSense::Maximize);
    let inputs: Vec<usize> =
        (0..region.dim()).map(|j| lp.add_named_var(format!("x{j}"), region.lower[j], region.upper[j], 0.0)).collect();
    let mut prev = inputs.clone();
    let mut neurons = Vec::new();
    for (li, layer) in net.layers().iter().enumerate() {
        let (blo, bhi) = bounds.layer_inputs(net, &region, li)?;
        let mut outs = Vec::with_capacity(layer.width());
        for i in 0..layer.width() {
            let id = NeuronId { layer: li, index: i };
            let (lo, hi) = bounds.get(id);
            let (w, b, act) = (&layer.weights[i], layer.bias[i], &layer.activations[i]);
            let wx = || prev.iter().zip(w).filter(|(_, &c)| c != 0.0).map(|(&v, &c)| (v, c)).collect::<Vec<_>>();
            if matches!(act, Activation::Identity) {
                let y = lp.add_named_var(format!("y_{id}"), lo, hi, 0.0);
                let mut row = wx();
                row.push((y, -1.0));
                lp.add_row(row, RowSense::Eq, -b);
                outs.push(y);
                continue;
            }
            if !(hi > lo) {
                let v = act.evaluate(lo)?;
                outs.push(lp.add_named_var(format!("y_{id}"), v, v, 0.0));
                continue;
            }
            let g = act.restricted(lo, hi)?;
            if g.pieces() == 1 {
                let (a, d) = (g.slopes()[0], g.intercepts()[0]);
                let (ylo, yhi) = output_range(act, lo, hi)?;
                let y = lp.add_named_var(format!("y_{id}"), ylo, yhi, 0.0);
                let mut row: Vec<(usize, f64)> = wx().into_iter().map(|(v, c)| (v, a * c)).collect();
                row.push((y, -1.0));
                lp.add_row(row, RowSense::Eq, -(a * b + d));
                // Keep the pre-activation inside its range.
                lp.add_range(wx(), lo - b, hi - b);
                outs.push(y);
                continue;
            }
            let neuron = match Neuron::with_range(w.clone(), b, &g, blo.clone(), bhi.clone(), lo, hi) {
                Ok(nr) => nr,
                Err(Error::Degenerate(_)) => {
                    let v = act.evaluate(lo)?;
                    outs.push(lp.add_named_var(format!("y_{id}"), v, v, 0.0));
                    continue;
                }
                Err(e) => return Err(e),
            };
            let form = build_neuron(&mut lp, kind, &neuron, &prev, Some(id))?;
            outs.push(form.output);
            neurons.push(form);
        }
        prev = outs;
    }
    for (&v, c) in prev.iter().zip(query.objective(target)) {
        lp.objective[v] = c;
    }
    Ok(QueryModel { lp, kind, inputs, outputs: prev, neurons })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::solve;
    use crate::pwl::{dorefa, PiecewiseLinear};

    fn relu(w: Vec<f64>, lo: f64, hi: f64) -> Neuron {
        let n = w.len();
        let f = PiecewiseLinear::new(vec![-10.0, 0.0, 10.0], vec![0.0, 1.0], vec![0.0, 0.0]).unwrap();
        Neuron::new(w, 0.0, &f, vec![lo; n], vec![hi; n]).unwrap()
    }

    #[test]
    fn relu_hull_is_the_triangle() {
        // Linear objectives over the hull of (-1, 0), (0, 0), (1, 1).
        let nr = relu(vec![1.0], -1.0, 1.0);
        for (cx, cy, want) in [(-0.5, 1.0, 0.5), (1.0, -1.0, 0.0), (0.0, 1.0, 1.0), (-1.0, 0.0, 1.0)] {
            let (mut lp, form) = neuron_lp(&nr, FormulationKind::Cayley, ObjSense::Maximize).unwrap();
            lp.objective[form.inputs[0]] = cx;
            lp.objective[form.output] = cy;
            let s = solve(&lp).unwrap();
            assert!((s.objective - want).abs() < 1e-9, "{cx} {cy}: {}", s.objective);
        }
    }

    #[test]
    fn zero_seed_bounds_y_by_slice_maxima() {
        let nr = relu(vec![1.0, -1.0], 0.0, 1.0);
        let (lp, form) = neuron_lp(&nr, FormulationKind::Cayley, ObjSense::Maximize).unwrap();
        let first = &form.cuts[0];
        assert_eq!(first.direction, Direction::Upper);
        assert!(first.alpha.iter().all(|&a| a == 0.0));
        // Slice maxima of the ReLU value: 0 on the negative slice, 1 on the other.
        assert_eq!(first.coefs, vec![0.0, 1.0]);
        assert!(lp.num_rows() >= 3 + 4);
    }

    #[test]
    fn constant_pieces_skip_big_m() {
        let q = dorefa(2, 0.0, 1.0).unwrap();
        let nr = Neuron::new(vec![1.0], 0.0, q.function(), vec![0.0], vec![1.0]).unwrap();
        let (lp, form) = neuron_lp(&nr, FormulationKind::Bigm, ObjSense::Maximize).unwrap();
        // simplex, two coupling rows, y = sum d_i z_i
        assert_eq!(lp.num_rows(), 4);
        assert_eq!(form.z.len(), 4);
    }

    #[test]
    fn duplicate_cuts_are_ignored() {
        let nr = relu(vec![1.0], -1.0, 1.0);
        let (mut lp, mut form) = neuron_lp(&nr, FormulationKind::Cayley, ObjSense::Maximize).unwrap();
        let rows = lp.num_rows();
        let cut = retrieve_cut(&nr, &[0.0], Direction::Upper).unwrap();
        assert!(!form.add_cut(&mut lp, cut));
        assert_eq!(lp.num_rows(), rows);
    }
}
