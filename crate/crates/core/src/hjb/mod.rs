//! Hamiltonians, the mild HJB fixed point and feedback synthesis.

pub mod cost;
pub mod field;
pub mod hamiltonian;
pub mod residual;
pub mod solver;

pub use cost::{ControlCost, CostSpec, StateCost};
pub use field::{GridAxis, SolveReport, ValueField};
pub use hamiltonian::{
    check_hamiltonian_lipschitz, control_hamiltonian, feedback_map, feedback_policy, hamiltonian_f0, hamiltonian_fcv,
    lipschitz_constant, minimizer,
};
pub use solver::{contraction_constant, default_half_widths, solve_mild_hjb, FieldScheme, SolverConfig};
pub use residual::{generator_estimate, strict_form_residual};
