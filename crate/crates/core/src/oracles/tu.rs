use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Constraint matrix of the scaled membership dual for sign pattern `sign`
/// and `k` slices. Rows are `(i, j)` pairs; columns are `beta^i`, `gamma^i`,
/// `theta_upper`, `theta_lower` and `alpha`.
pub fn dual_constraint_matrix(sign: &[i64], k: usize) -> Vec<Vec<i64>> {
    let n = sign.len();
    let cols = 2 * n * k + 2 * k + n;
    let mut a = vec![vec![0i64; cols]; n * k];
    for i in 0..k {
        for j in 0..n {
            let r = i * n + j;
            a[r][i * n + j] = 1;
            a[r][n * k + i * n + j] = -1;
            a[r][2 * n * k + i] = sign[j];
            a[r][2 * n * k + k + i] = -sign[j];
            a[r][2 * n * k + 2 * k + j] = 1;
        }
    }
    a
}

/// Exact determinant by fraction-free (Bareiss) elimination.
pub fn determinant(m: &[Vec<i64>]) -> i128 {
    let n = m.len();
    if n == 0 {
        return 1;
    }
    let mut a: Vec<Vec<i128>> = m.iter().map(|r| r.iter().map(|&v| i128::from(v)).collect()).collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for p in 0..n {
        if a[p][p] == 0 {
            let Some(r) = (p + 1..n).find(|&r| a[r][p] != 0) else {
                return 0;
            };
            a.swap(p, r);
            sign = -sign;
        }
        for r in p + 1..n {
            for c in p + 1..n {
                a[r][c] = (a[r][c] * a[p][p] - a[r][p] * a[p][c]) / prev;
            }
            a[r][p] = 0;
        }
        prev = a[p][p];
    }
    sign * a[n - 1][n - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuReport {
    pub ok: bool,
    pub checked: usize,
    /// A square submatrix with determinant outside `{0, 1, -1}`.
    pub witness: Option<Vec<Vec<i64>>>,
    pub witness_det: Option<i128>,
}

/// Samples square submatrices of every size and checks their determinants.
pub fn sample_submatrices(a: &[Vec<i64>], trials: usize, rng: &mut impl Rng) -> TuReport {
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let max = rows.min(cols);
    for t in 0..trials {
        if max == 0 {
            break;
        }
        let size = rng.gen_range(1..=max);
        let rs = sample(rng, rows, size).into_vec();
        let cs = sample(rng, cols, size).into_vec();
        let sub: Vec<Vec<i64>> = rs.iter().map(|&r| cs.iter().map(|&c| a[r][c]).collect()).collect();
        let det = determinant(&sub);
        if det.abs() > 1 {
            return TuReport { ok: false, checked: t + 1, witness: Some(sub), witness_det: Some(det) };
        }
    }
    TuReport { ok: true, checked: trials, witness: None, witness_det: None }
}

/// Random sign pattern, then `trials` sampled submatrices of the dual matrix.
pub fn sample_tu_check(n: usize, k: usize, trials: usize, seed: u64) -> TuReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sign: Vec<i64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
    let a = dual_constraint_matrix(&sign, k);
    sample_submatrices(&a, trials, &mut rng)
}
