use crate::error::{Error, Result};
use crate::separation::PsiInstance;

pub const MAX_BRUTE_PIECES: usize = 20;

/// Exact minimum of `psi` over all subsets of the allowed slices.
pub fn brute_min_psi(inst: &PsiInstance, allowed: Option<&[bool]>) -> Result<(Vec<usize>, f64)> {
    let k = inst.pieces();
    if k > MAX_BRUTE_PIECES {
        return Err(Error::Capability(format!("subset enumeration supports k <= {MAX_BRUTE_PIECES}")));
    }
    let ok: Vec<usize> = (0..k).filter(|&i| allowed.map_or(true, |m| m[i])).collect();
    let mut best = (Vec::new(), inst.psi(&[]));
    for mask in 1u32..1 << ok.len() {
        let set: Vec<usize> = ok.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &i)| i).collect();
        let v = inst.psi(&set);
        if v < best.1 {
            best = (set, v);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::separation::Orientation;

    #[test]
    fn empty_set_is_zero_and_single_piece_is_exact() {
        let p = PsiInstance::new(vec![1], vec![1.0], vec![0.5], vec![-1.0], vec![1.0], Orientation::UpperSlab);
        assert_eq!(p.psi(&[]), 0.0);
        let (set, v) = brute_min_psi(&p, None).unwrap();
        assert_eq!(set, vec![0]);
        assert!((v + 0.5).abs() < 1e-12);
        let (set, v) = brute_min_psi(&p, Some(&[false])).unwrap();
        assert!(set.is_empty() && v == 0.0);
    }
}
