//! The two worked applications: boundary-controlled heat equation and control delay.

pub mod delay;
pub mod neumann;

pub use delay::{build_delay_instance, DelayInstance, DelayParams};
pub use neumann::{
    boundary_input, build_neumann_instance, cosine_mode, default_cost, green_identity_residual, neumann_map_1d,
    neumann_solution_1d, square_boundary_matrix, square_modes, NeumannInstance, NeumannParams,
};
