//! Neuron alignment: activation-based matching costs, an exact assignment
//! solver, and block permutations of network weights.

mod align;
mod assignment;
mod cost;
mod permutation;

pub use align::{align_networks, alignment_stability, correlation_signature, matched_cost, Alignment, StabilityReport};
pub use assignment::{solve_assignment, Assignment};
pub use cost::{build_cost, collect_activations, normalize_rows, CostMatrix, CostVariant};
pub use permutation::{is_permutation, BlockPermutation};
