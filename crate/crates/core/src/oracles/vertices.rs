use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::Neuron;

/// Largest input dimension accepted by the enumeration.
pub const MAX_VERTEX_DIM: usize = 8;
const DEDUP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CayleyVertex {
    pub x: Vec<f64>,
    pub y: f64,
    /// Index of the slice; the `z` part is the unit vector `e^piece`.
    pub piece: usize,
}

impl CayleyVertex {
    pub fn z(&self, k: usize) -> Vec<f64> {
        let mut z = vec![0.0; k];
        z[self.piece] = 1.0;
        z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VertexSet {
    pub pieces: usize,
    pub vertices: Vec<CayleyVertex>,
}

/// Vertices of `box ∩ {lo <= w.x <= hi}`: box corners inside the slab plus
/// the points where a box edge meets either slab hyperplane.
pub fn slice_vertices(w: &[f64], lo: f64, hi: f64, lower: &[f64], upper: &[f64]) -> Vec<Vec<f64>> {
    let n = w.len();
    let scale = lo.abs().max(hi.abs()).max(1.0);
    let tol = 1e-12 * scale;
    let mut out: Vec<Vec<f64>> = Vec::new();
    let push = |p: Vec<f64>, out: &mut Vec<Vec<f64>>| {
        if !out.iter().any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() <= DEDUP_TOL * scale)) {
            out.push(p);
        }
    };
    for mask in 0u32..1 << n {
        let corner: Vec<f64> = (0..n).map(|j| if mask >> j & 1 == 1 { upper[j] } else { lower[j] }).collect();
        let act: f64 = w.iter().zip(&corner).map(|(a, b)| a * b).sum();
        if act >= lo - tol && act <= hi + tol {
            push(corner.clone(), &mut out);
        }
        for free in 0..n {
            if mask >> free & 1 == 1 || w[free] == 0.0 || upper[free] <= lower[free] {
                continue;
            }
            let rest: f64 = (0..n).filter(|&j| j != free).map(|j| w[j] * corner[j]).sum();
            for target in [lo, hi] {
                let v = (target - rest) / w[free];
                if v > lower[free] && v < upper[free] {
                    let mut p = corner.clone();
                    p[free] = v;
                    push(p, &mut out);
                }
            }
        }
    }
    out
}

/// All vertices of the Cayley embedding: each slice vertex paired with the
/// value of its own affine piece.
pub fn enumerate_cayley_vertices(neuron: &Neuron) -> Result<VertexSet> {
    let n = neuron.dim();
    if n > MAX_VERTEX_DIM {
        return Err(Error::Capability(format!("vertex enumeration supports n <= {MAX_VERTEX_DIM}, got {n}")));
    }
    let k = neuron.pieces();
    let h = neuron.activation.breakpoints();
    let mut vertices = Vec::new();
    for i in 0..k {
        let (lo, hi) = (h[i] - neuron.bias, h[i + 1] - neuron.bias);
        for x in slice_vertices(&neuron.weights, lo, hi, &neuron.lower, &neuron.upper) {
            let t = neuron.pre_activation(&x);
            let y = neuron.activation.piece_value(i, t);
            vertices.push(CayleyVertex { x, y, piece: i });
        }
    }
    Ok(VertexSet { pieces: k, vertices })
}
