//! Separation for general piecewise-linear activations and cut retrieval.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stairverify::oracles::{enumerate_cayley_vertices, hull_bound, slice_max_lp};
use stairverify::separation::{retrieve_cut, separate_pwl, separate_staircase, Direction};

#[test]
fn retrieved_coefficients_match_slice_lps() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let n = rng.gen_range(1..=5);
        let k = rng.gen_range(1..=5);
        let continuous = rng.gen_bool(0.5);
        let nr = common::random_neuron(&mut rng, n, k, &[0.0, 1.0, -0.5, 2.0], continuous);
        let alpha: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let up = retrieve_cut(&nr, &alpha, Direction::Upper).unwrap();
        let lo = retrieve_cut(&nr, &alpha, Direction::Lower).unwrap();
        for i in 0..nr.pieces() {
            let a = nr.activation.slopes()[i];
            let c: Vec<f64> = (0..n).map(|j| a * nr.weights[j] - alpha[j]).collect();
            let neg: Vec<f64> = c.iter().map(|v| -v).collect();
            let off = nr.shifted_intercept(i);
            let max = slice_max_lp(&nr, &c, i).unwrap() + off;
            let min = -slice_max_lp(&nr, &neg, i).unwrap() + off;
            assert!((up.coefs[i] - max).abs() < 1e-8 * (1.0 + max.abs()), "{} vs {max}", up.coefs[i]);
            assert!((lo.coefs[i] - min).abs() < 1e-8 * (1.0 + min.abs()), "{} vs {min}", lo.coefs[i]);
        }
    }
}

#[test]
fn pwl_bound_equals_hull_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut checked = 0;
    for _ in 0..200 {
        let n = rng.gen_range(1..=2);
        let k = rng.gen_range(2..=5);
        let continuous = rng.gen_bool(0.5);
        let nr = common::random_neuron(&mut rng, n, k, &[0.0, 1.0, -1.0, 0.5], continuous);
        let vs = enumerate_cayley_vertices(&nr).unwrap();
        let (x, y, z) = common::random_mixture(&mut rng, &nr);
        for dir in [Direction::Upper, Direction::Lower] {
            let r = separate_pwl(&nr, &x, y, &z, dir).unwrap();
            let Some(hull) = hull_bound(&vs, &x, &z, dir).unwrap() else { continue };
            assert!((r.bound - hull).abs() < 1e-6 * (1.0 + hull.abs()), "{dir:?}: {} vs {hull}", r.bound);
            if let Some(cut) = &r.cut {
                assert!(cut.violation(&x, y, &z) > 0.0);
                for v in &vs.vertices {
                    let viol = cut.violation(&v.x, v.y, &v.z(nr.pieces()));
                    assert!(viol <= 1e-7 * (1.0 + v.y.abs()), "vertex cut off by {viol}");
                }
            }
            checked += 1;
        }
    }
    assert!(checked > 300);
}

#[test]
fn midpoint_of_two_vertices_is_not_cut() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..300 {
        let n = rng.gen_range(1..=3);
        let k = rng.gen_range(1..=4);
        let nr = common::random_neuron(&mut rng, n, k, &[0.0, 1.5], false);
        let vs = enumerate_cayley_vertices(&nr).unwrap();
        let a = &vs.vertices[rng.gen_range(0..vs.vertices.len())];
        let b = &vs.vertices[rng.gen_range(0..vs.vertices.len())];
        let kk = nr.pieces();
        let x: Vec<f64> = a.x.iter().zip(&b.x).map(|(p, q)| 0.5 * (p + q)).collect();
        let z: Vec<f64> = a.z(kk).iter().zip(&b.z(kk)).map(|(p, q)| 0.5 * (p + q)).collect();
        let y = 0.5 * (a.y + b.y);
        for dir in [Direction::Upper, Direction::Lower] {
            let r = separate_staircase(&nr, &x, y, &z, dir).unwrap();
            assert!(r.cut.is_none(), "{:?}", r.cut);
        }
    }
}
