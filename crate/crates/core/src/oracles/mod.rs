//! Brute-force references for the test suites and the debug CLI.

mod exhaustive;
mod membership;
mod psi;
mod tu;
mod vertices;

pub use exhaustive::{exhaustive_verify, PATTERN_BUDGET};
pub use membership::{hull_bound, hull_certificate, membership_dual_lp, membership_value, scaled_membership_lp, slice_max_lp};
pub use psi::{brute_min_psi, MAX_BRUTE_PIECES};
pub use tu::{determinant, dual_constraint_matrix, sample_submatrices, sample_tu_check, TuReport};
pub use vertices::{enumerate_cayley_vertices, slice_vertices, CayleyVertex, VertexSet, MAX_VERTEX_DIM};
