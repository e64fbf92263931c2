#![allow(dead_code)]

use rand::Rng;
use stairverify::network::Neuron;
use stairverify::pwl::PiecewiseLinear;

/// Random neuron whose activation takes slopes in `slopes` piecewise.
pub fn random_neuron(rng: &mut impl Rng, n: usize, k: usize, slopes: &[f64], continuous: bool) -> Neuron {
    loop {
        let w: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.15) { 0.0 } else { (rng.gen_range(-2.0f64..2.0) * 4.0).round() / 4.0 })
            .collect();
        if w.iter().all(|&v| v == 0.0) {
            continue;
        }
        let lower: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..0.5)).collect();
        let upper: Vec<f64> = lower
            .iter()
            .map(|&l| if rng.gen_bool(0.05) { l } else { l + rng.gen_range(0.2..2.5) })
            .collect();
        let b = rng.gen_range(-1.0..1.0);
        let (lo, hi) = stairverify::network::affine_range(&w, b, &lower, &upper);
        if hi - lo < 1e-3 {
            continue;
        }
        let mut inner: Vec<f64> = (0..k - 1).map(|_| rng.gen_range(lo..hi)).collect();
        inner.sort_by(f64::total_cmp);
        let mut bps = vec![lo - 1.0];
        bps.extend(inner);
        bps.push(hi + 1.0);
        let a: Vec<f64> = (0..k).map(|_| slopes[rng.gen_range(0..slopes.len())]).collect();
        let mut d = Vec::with_capacity(k);
        let mut level = rng.gen_range(-1.0..1.0);
        for i in 0..k {
            if i == 0 {
                d.push(level);
            } else {
                let t = bps[i];
                let left = a[i - 1] * t + d[i - 1];
                let jump = if continuous { 0.0 } else { rng.gen_range(-1.0..1.5) };
                level = left + jump - a[i] * t;
                d.push(level);
            }
        }
        let Ok(f) = PiecewiseLinear::new(bps, a, d) else { continue };
        if let Ok(nr) = Neuron::new(w, b, &f, lower, upper) {
            return nr;
        }
    }
}

pub fn random_simplex(rng: &mut impl Rng, k: usize, sparse: bool) -> Vec<f64> {
    let mut z: Vec<f64> = (0..k).map(|_| if sparse && rng.gen_bool(0.4) { 0.0 } else { rng.gen_range(0.0..1.0) }).collect();
    if z.iter().all(|&v| v == 0.0) {
        z[rng.gen_range(0..k)] = 1.0;
    }
    let s: f64 = z.iter().sum();
    z.iter_mut().for_each(|v| *v /= s);
    z
}

/// `(x, y, z)` as a random mixture of points sampled inside slices, with
/// `y` perturbed around the mixture of the slice values.
pub fn random_mixture(rng: &mut impl Rng, nr: &Neuron) -> (Vec<f64>, f64, Vec<f64>) {
    let (n, k) = (nr.dim(), nr.pieces());
    let sparse = rng.gen_bool(0.5);
    let z = random_simplex(rng, k, sparse);
    let mut x = vec![0.0; n];
    let mut y = 0.0;
    for i in 0..k {
        if z[i] == 0.0 {
            continue;
        }
        let p = sample_in_slice(rng, nr, i);
        let t = nr.pre_activation(&p);
        let v = nr.activation.piece_value(i, t);
        for j in 0..n {
            x[j] += z[i] * p[j];
        }
        y += z[i] * v;
    }
    (x, y + rng.gen_range(-0.6..0.6), z)
}

/// A point of slice `i` found by rejection, falling back to the greedy
/// knapsack point.
pub fn sample_in_slice(rng: &mut impl Rng, nr: &Neuron, i: usize) -> Vec<f64> {
    let h = nr.activation.breakpoints();
    let (lo, hi) = (h[i] - nr.bias, h[i + 1] - nr.bias);
    for _ in 0..200 {
        let p: Vec<f64> = (0..nr.dim()).map(|j| if nr.upper[j] > nr.lower[j] { rng.gen_range(nr.lower[j]..=nr.upper[j]) } else { nr.lower[j] }).collect();
        let act: f64 = nr.weights.iter().zip(&p).map(|(a, b)| a * b).sum();
        if act >= lo && act <= hi {
            return p;
        }
    }
    let c: Vec<f64> = (0..nr.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    stairverify::lp::solve_box_knapsack(&c, &nr.weights, lo, hi, &nr.lower, &nr.upper, stairverify::lp::KnapsackSense::Max)
        .unwrap()
        .0
}

/// Random activation of the requested family; PWL ones span a domain wide
/// enough for any pre-activation the generated networks produce.
pub fn random_activation(rng: &mut impl Rng, kind: &str) -> stairverify::network::Activation {
    use stairverify::network::Activation;
    match kind {
        "relu" => Activation::Relu,
        "dorefa" => {
            let lo = rng.gen_range(-1.0..0.0);
            Activation::Dorefa { bits: rng.gen_range(1..=3), lo, hi: lo + rng.gen_range(0.5..2.0) }
        }
        _ => {
            let k = rng.gen_range(2..=5);
            let mut inner: Vec<f64> = (0..k - 1).map(|_| rng.gen_range(-2.0..2.0)).collect();
            inner.sort_by(f64::total_cmp);
            let mut bps = vec![-1e3];
            bps.extend(inner);
            bps.push(1e3);
            let constant = kind == "staircase";
            let slopes: Vec<f64> = (0..k)
                .map(|_| if constant { 0.0 } else { [0.0, 0.5, 1.0, -0.5][rng.gen_range(0..4)] })
                .collect();
            let mut ints: Vec<f64> = Vec::with_capacity(k);
            for i in 0..k {
                if i == 0 {
                    ints.push(rng.gen_range(-1.0..1.0));
                } else {
                    let t = bps[i];
                    let left = slopes[i - 1] * t + ints[i - 1];
                    let jump = if constant { rng.gen_range(0.1..1.0) } else { rng.gen_range(-0.5..0.5) };
                    ints.push(left + jump - slopes[i] * t);
                }
            }
            let f = PiecewiseLinear::new(bps, slopes, ints).unwrap();
            if constant {
                Activation::Staircase(f)
            } else {
                Activation::Pwl(f)
            }
        }
    }
}

/// Dense network with the given widths (first entry is the input dimension)
/// and an affine output layer.
pub fn random_network(rng: &mut impl Rng, widths: &[usize], kind: &str) -> stairverify::network::Network {
    use stairverify::network::{Activation, BoxDomain, Layer, Network};
    let mut layers = Vec::new();
    for (li, pair) in widths.windows(2).enumerate() {
        let last = li + 2 == widths.len();
        let weights: Vec<Vec<f64>> =
            (0..pair[1]).map(|_| (0..pair[0]).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let bias: Vec<f64> = (0..pair[1]).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let activations = (0..pair[1])
            .map(|_| if last { Activation::Identity } else { random_activation(rng, kind) })
            .collect();
        layers.push(Layer { weights, bias, activations });
    }
    let n = widths[0];
    let lower: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..0.0)).collect();
    let upper: Vec<f64> = lower.iter().map(|l| l + rng.gen_range(0.1..1.5)).collect();
    Network::new(layers, BoxDomain::new(lower, upper).unwrap()).unwrap()
}

pub fn sample_box(rng: &mut impl Rng, b: &stairverify::network::BoxDomain) -> Vec<f64> {
    b.lower.iter().zip(&b.upper).map(|(&l, &u)| if u > l { rng.gen_range(l..=u) } else { l }).collect()
}
