//! Spectral toolkit for additively controlled Ornstein–Uhlenbeck dynamics:
//! exact-in-law simulation, transition semigroups on cylinder functions, a
//! mild-solution fixed-point solver for the discounted HJB equation, and
//! Monte-Carlo verification of Dynkin-type identities.

pub mod apps;
pub mod conditions;
pub mod cylinder;
pub mod dynamics;
pub mod error;
pub mod hjb;
pub mod model;
pub mod numerics;
pub mod quadrature;
pub mod rng;
pub mod semigroup;
pub mod verify;

#[cfg(test)]
pub(crate) mod testutil;

pub use conditions::{ConditionId, ConditionReport, ThetaWindow};
pub use cylinder::{CylinderFunction, Profile};
pub use dynamics::{ControlBox, ControlProcess, FeedbackPolicy, LinearControlSystem, SimpleControl};
pub use error::{Error, Result};
pub use hjb::ValueField;
pub use model::{ModelSpec, SpectralModel};
pub use semigroup::{Drift, Estimate, Observable, Scheme};
