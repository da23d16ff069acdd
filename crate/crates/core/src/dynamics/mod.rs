//! Controls, exact transition laws and path simulation.

pub mod approx;
pub mod control;
pub mod law;
pub mod paths;
pub mod system;

pub use crate::conditions::kernel_bound_audit;
pub use approx::{approximate_by_simple, Interpolation, Mesh, SampledControl};
pub use control::{ControlBox, ControlProcess, FeedbackPolicy, SimpleControl};
pub use law::{controlled_law, controlled_mean, covariance_qt, transition_law, GaussianLaw};
pub use paths::{merge_times, sample_paths, sample_paths_system, simulate_path, uniform_grid, validate_grid, PathEnsemble, SimPlan};
pub use system::{dense_transition, LinearControlSystem, Transition};
