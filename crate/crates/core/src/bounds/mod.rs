//! Pre-activation bound propagation: plain interval arithmetic and a
//! DeepPoly-style back-substitution for quantized activations.

mod deeppoly;

use serde::ser::{Serialize, SerializeMap, Serializer};

use crate::error::{Error, Result};
use crate::network::{affine_range, Activation, BoxDomain, Network, NeuronId};

pub use deeppoly::{deeppoly_activation_relax, deeppoly_bounds, DeepPoly, relax_activation, ActivationRelaxation, LinearBound, Sense};

/// Per-neuron pre-activation intervals `[L, U]`, indexed `[layer][neuron]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreActBounds {
    pub layers: Vec<Vec<(f64, f64)>>,
    /// Neurons whose relaxation fell back to constant bounds.
    pub fallbacks: Vec<NeuronId>,
}

impl PreActBounds {
    pub fn get(&self, id: NeuronId) -> (f64, f64) {
        self.layers[id.layer][id.index]
    }

    /// Box of the inputs feeding `layer`: the input box for layer 0, otherwise
    /// the output ranges of the previous layer.
    pub fn layer_inputs(&self, net: &Network, input_box: &BoxDomain, layer: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if layer == 0 {
            return Ok((input_box.lower.clone(), input_box.upper.clone()));
        }
        let prev = &net.layers()[layer - 1];
        let mut lo = Vec::with_capacity(prev.width());
        let mut hi = Vec::with_capacity(prev.width());
        for (act, &(l, u)) in prev.activations.iter().zip(&self.layers[layer - 1]) {
            let (a, b) = output_range(act, l, u)?;
            lo.push(a);
            hi.push(b);
        }
        Ok((lo, hi))
    }

    /// Every interval of `self` lies inside the matching one of `other`.
    pub fn within(&self, other: &PreActBounds, tol: f64) -> bool {
        self.layers
            .iter()
            .flatten()
            .zip(other.layers.iter().flatten())
            .all(|(a, b)| a.0 >= b.0 - tol && a.1 <= b.1 + tol)
    }
}

impl Serialize for PreActBounds {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.layers.iter().map(Vec::len).sum()))?;
        for (layer, row) in self.layers.iter().enumerate() {
            for (index, &(l, u)) in row.iter().enumerate() {
                map.serialize_entry(&NeuronId { layer, index }.to_string(), &[l, u])?;
            }
        }
        map.end()
    }
}

/// Range of the activation over `[lo, hi]` (closure of the graph).
pub fn output_range(act: &Activation, lo: f64, hi: f64) -> Result<(f64, f64)> {
    if hi <= lo {
        let v = act.evaluate(lo)?;
        return Ok((v, v));
    }
    Ok(act.restricted(lo, hi)?.range())
}

pub(crate) fn check_box(net: &Network, input_box: &BoxDomain) -> Result<()> {
    input_box.validate()?;
    if input_box.dim() != net.input_dim() {
        return Err(Error::Input(format!(
            "input box has dimension {}, network expects {}",
            input_box.dim(),
            net.input_dim()
        )));
    }
    Ok(())
}

/// Propagates the input box layer by layer with interval arithmetic.
pub fn interval_bounds(net: &Network, input_box: &BoxDomain) -> Result<PreActBounds> {
    check_box(net, input_box)?;
    let mut lo = input_box.lower.clone();
    let mut hi = input_box.upper.clone();
    let mut layers = Vec::with_capacity(net.layers().len());
    for layer in net.layers() {
        let pre: Vec<(f64, f64)> =
            layer.weights.iter().zip(&layer.bias).map(|(w, &b)| affine_range(w, b, &lo, &hi)).collect();
        let mut nlo = Vec::with_capacity(pre.len());
        let mut nhi = Vec::with_capacity(pre.len());
        for (act, &(l, u)) in layer.activations.iter().zip(&pre) {
            let (a, b) = output_range(act, l, u)?;
            nlo.push(a);
            nhi.push(b);
        }
        layers.push(pre);
        lo = nlo;
        hi = nhi;
    }
    Ok(PreActBounds { layers, fallbacks: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Layer;

    #[test]
    fn single_layer_ranges() {
        let b = BoxDomain::new(vec![0.0; 2], vec![1.0; 2]).unwrap();
        let net = Network::new(vec![Layer::new(vec![vec![1.0, -1.0]], vec![0.0], Activation::Relu)], b.clone()).unwrap();
        assert_eq!(interval_bounds(&net, &b).unwrap().layers, vec![vec![(-1.0, 1.0)]]);

        let b = BoxDomain::new(vec![0.0], vec![1.0]).unwrap();
        let net = Network::new(vec![Layer::new(vec![vec![2.0]], vec![1.0], Activation::Identity)], b.clone()).unwrap();
        assert_eq!(interval_bounds(&net, &b).unwrap().layers, vec![vec![(1.0, 3.0)]]);
    }

    #[test]
    fn deeper_layers_use_activation_ranges() {
        let b = BoxDomain::new(vec![-1.0], vec![1.0]).unwrap();
        let net = Network::new(
            vec![
                Layer::new(vec![vec![1.0]], vec![0.0], Activation::Relu),
                Layer::new(vec![vec![-2.0]], vec![0.5], Activation::Identity),
            ],
            b.clone(),
        )
        .unwrap();
        let pb = interval_bounds(&net, &b).unwrap();
        assert_eq!(pb.layers[1], vec![(-1.5, 0.5)]);
        let json = serde_json::to_string(&pb).unwrap();
        assert_eq!(json, r#"{"L0N0":[-1.0,1.0],"L1N0":[-1.5,0.5]}"#);
    }

    #[test]
    fn wrong_box_dimension() {
        let b = BoxDomain::new(vec![0.0], vec![1.0]).unwrap();
        let net = Network::new(vec![Layer::new(vec![vec![1.0]], vec![0.0], Activation::Relu)], b).unwrap();
        let other = BoxDomain::new(vec![0.0; 2], vec![1.0; 2]).unwrap();
        assert!(interval_bounds(&net, &other).is_err());
    }
}
