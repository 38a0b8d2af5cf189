//! Geometric flat outputs for mechanical systems on principal bundles.
//!
//! A system is a Riemannian metric, a potential and a control
//! codistribution on a configuration manifold `Q`, plus a free group action
//! `G` with shape space `S = Q/G`. When a section of `Q → S` is
//! metric-orthogonal to the underactuation distribution and the implicit
//! dynamics are regular, the group part of the induced trivialization is a
//! flat output. This crate checks those conditions numerically, plans in
//! flat space, reconstructs states and inputs, and closes the loop by
//! simulation.

pub mod bundle;
pub mod cli;
pub mod error;
pub mod flatmap;
pub mod flatness;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod planner;
pub mod sampling;
pub mod sim;
pub mod systems;

pub use error::{Error, Result};
pub use model::{MechanicalSystem, Section, SectionMap, SystemModel};
