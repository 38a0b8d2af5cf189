//! The mechanical-system abstraction shared by every module.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::bundle::{GroupElement, GroupKind, LieAlgebraVec, ShapeDomain, ShapeKind, ShapePoint};
use crate::geometry::{Chart, ConfigPoint};
use crate::linalg::angle_diff;

/// An unconstrained mechanical system on a principal bundle: kinetic-energy
/// metric, potential, control codistribution and a free group action.
///
/// Vectors are passed as frame components in [`Self::chart`]'s frame;
/// covectors as components in the dual frame.
pub trait MechanicalSystem: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn chart(&self) -> &'static Chart;
    fn group_kind(&self) -> GroupKind;
    fn shape_kind(&self) -> ShapeKind;
    /// Named physical parameters, in a fixed order.
    fn params(&self) -> Vec<(String, f64)>;
    /// Gravitational acceleration, used as the natural acceleration scale.
    fn gravity(&self) -> f64;

    fn metric(&self, q: &ConfigPoint) -> DMatrix<f64>;
    /// `dM/dq^l` for each coordinate `l`, when known in closed form.
    fn metric_partials(&self, _q: &ConfigPoint) -> Option<Vec<DMatrix<f64>>> {
        None
    }
    fn potential(&self, q: &ConfigPoint) -> f64;
    /// `dP` in the dual frame, when known in closed form.
    fn potential_differential(&self, _q: &ConfigPoint) -> Option<DVector<f64>> {
        None
    }
    /// Columns are the covectors spanning `F_q`.
    fn control_codistribution(&self, q: &ConfigPoint) -> DMatrix<f64>;
    /// A smooth frame of the unactuated subbundle, when known in closed form.
    fn unactuated_frame(&self, _q: &ConfigPoint) -> Option<DMatrix<f64>> {
        None
    }
    /// Bilinear part `∇_{E(y)} E(x)` of the connection for non-coordinate
    /// frames. Coordinate charts return `None` and use Christoffel symbols.
    fn connection(&self, _q: &ConfigPoint, _y: &DVector<f64>, _x: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    /// The group action `Φ_g`.
    fn act(&self, g: &GroupElement, q: &ConfigPoint) -> ConfigPoint;
    /// Tangent map `TΦ_g` applied to `v ∈ T_qQ`.
    fn push_forward(&self, g: &GroupElement, q: &ConfigPoint, v: &DVector<f64>) -> DVector<f64>;
    /// Infinitesimal generator `ξ_Q(q)`.
    fn generator(&self, xi: &LieAlgebraVec, q: &ConfigPoint) -> DVector<f64>;
    /// Bundle projection `π`.
    fn project(&self, q: &ConfigPoint) -> ShapePoint;
    /// `Tπ(q̇)` as an ambient shape velocity.
    fn project_velocity(&self, q: &ConfigPoint, qdot: &DVector<f64>) -> DVector<f64>;
    /// The unique `g` with `Φ_g(base) = q` for `q` in the fiber of `base`.
    fn relative_group(&self, base: &ConfigPoint, q: &ConfigPoint) -> GroupElement;
    /// Built-in sections, primary first.
    fn sections(&self) -> Vec<SectionMap>;
    /// Closed-form seed for the shape solve, if the system has one.
    fn closed_form_shape(&self, _g: &GroupElement, _xi: &LieAlgebraVec, _xidot: &LieAlgebraVec) -> Option<ShapePoint> {
        None
    }
    fn random_config(&self, rng: &mut dyn RngCore) -> ConfigPoint;

    /// Local chart centered at `q0`; `z = 0` maps to `q0`.
    fn local_point(&self, q0: &ConfigPoint, z: &DVector<f64>) -> ConfigPoint {
        ConfigPoint::new_unchecked(q0.chart, &q0.coords + z)
    }
    /// Inverse of [`Self::local_point`].
    fn local_coords(&self, q0: &ConfigPoint, q: &ConfigPoint) -> DVector<f64> {
        coordinate_offsets(q0, q)
    }
    /// Rate of the local coordinates `z` given frame velocity `qdot` at
    /// `local_point(q0, z)`.
    fn local_velocity(&self, _q0: &ConfigPoint, _z: &DVector<f64>, qdot: &DVector<f64>) -> DVector<f64> {
        qdot.clone()
    }
    /// Frame velocity and acceleration from raw coordinate derivatives.
    fn frame_rates(&self, _q: &ConfigPoint, dcoords: &DVector<f64>, ddcoords: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (dcoords.clone(), ddcoords.clone())
    }
}

/// Shared handle to a system model.
pub type SystemModel = Arc<dyn MechanicalSystem>;

/// Coordinate difference `q - q0`, shortest branch on wrapped coordinates.
pub fn coordinate_offsets(q0: &ConfigPoint, q: &ConfigPoint) -> DVector<f64> {
    let mut d = &q.coords - &q0.coords;
    if q0.chart.frame_kind == crate::geometry::FrameKind::Coordinate {
        for (i, wrap) in q0.chart.wrap_mask.iter().enumerate() {
            if *wrap {
                d[i] = angle_diff(q.coords[i], q0.coords[i]);
            }
        }
    }
    d
}

/// A local section `σ : U ⊆ S → Q`.
pub trait Section: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn domain(&self) -> ShapeDomain;
    fn eval(&self, s: &ShapePoint) -> ConfigPoint;
    /// `Tσ(ṡ)` in frame components at `eval(s)`, for an ambient shape
    /// velocity `ṡ` tangent to `S`.
    fn tangent(&self, s: &ShapePoint, sdot: &DVector<f64>) -> DVector<f64>;
}

pub type SectionMap = Arc<dyn Section>;
