//! Planar rocket (ducted fan) on SE(2), symmetric under planar translations.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use crate::bundle::{GroupElement, GroupKind, LieAlgebraVec, ShapeDomain, ShapeKind, ShapePoint};
use crate::geometry::{Chart, ConfigPoint, FrameKind};
use crate::model::{MechanicalSystem, Section, SectionMap};

pub static ROCKET_CHART: Chart = Chart {
    name: "rocket_x1_x2_theta",
    dim: 3,
    frame_kind: FrameKind::Coordinate,
    wrap_mask: &[false, false, true],
};

/// Planar rocket with mass `m`, rotational inertia `j` and thrust offset `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rocket {
    pub m: f64,
    pub j: f64,
    pub r: f64,
    pub g_grav: f64,
    /// Offset of the section's center of oscillation; `None` means `J/(m r)`.
    pub section_offset: Option<f64>,
    /// How many force columns to keep (1, 2, or 3 with an added pure torque).
    pub force_columns: usize,
}

impl Default for Rocket {
    fn default() -> Self {
        Self { m: 1.0, j: 0.2, r: 0.5, g_grav: 9.81, section_offset: None, force_columns: 2 }
    }
}

impl Rocket {
    pub fn new(m: f64, j: f64, r: f64, g_grav: f64) -> Self {
        Self { m, j, r, g_grav, ..Self::default() }
    }

    /// Distance `J/(m r)` from the center of mass to the center of oscillation.
    pub fn oscillation_offset(&self) -> f64 {
        self.j / (self.m * self.r)
    }

    pub fn section(&self) -> RocketSection {
        RocketSection { offset: self.section_offset.unwrap_or_else(|| self.oscillation_offset()) }
    }
}

/// `θ ↦ (c sin θ, −c cos θ, θ)`.
#[derive(Debug, Clone)]
pub struct RocketSection {
    pub offset: f64,
}

impl Section for RocketSection {
    fn name(&self) -> &str {
        "rocket_global"
    }

    fn domain(&self) -> ShapeDomain {
        ShapeDomain::Full
    }

    fn eval(&self, s: &ShapePoint) -> ConfigPoint {
        let th = s.coords[0];
        let c = self.offset;
        ConfigPoint::new_unchecked(&ROCKET_CHART, DVector::from_vec(vec![c * th.sin(), -c * th.cos(), th]))
    }

    fn tangent(&self, s: &ShapePoint, sdot: &DVector<f64>) -> DVector<f64> {
        let th = s.coords[0];
        DVector::from_vec(vec![self.offset * th.cos(), self.offset * th.sin(), 1.0]) * sdot[0]
    }
}

impl MechanicalSystem for Rocket {
    fn name(&self) -> &str {
        "rocket"
    }

    fn chart(&self) -> &'static Chart {
        &ROCKET_CHART
    }

    fn group_kind(&self) -> GroupKind {
        GroupKind::R2
    }

    fn shape_kind(&self) -> ShapeKind {
        ShapeKind::Angle
    }

    fn params(&self) -> Vec<(String, f64)> {
        let mut p = vec![("m".into(), self.m), ("J".into(), self.j), ("r".into(), self.r), ("g_grav".into(), self.g_grav)];
        if let Some(c) = self.section_offset {
            p.push(("section_offset".into(), c));
        }
        p.push(("force_columns".into(), self.force_columns as f64));
        p
    }

    fn gravity(&self) -> f64 {
        self.g_grav
    }

    fn metric(&self, _q: &ConfigPoint) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![self.m, self.m, self.j]))
    }

    fn metric_partials(&self, _q: &ConfigPoint) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::zeros(3, 3); 3])
    }

    fn potential(&self, q: &ConfigPoint) -> f64 {
        self.m * self.g_grav * q.coords[1]
    }

    fn potential_differential(&self, _q: &ConfigPoint) -> Option<DVector<f64>> {
        Some(DVector::from_vec(vec![0.0, self.m * self.g_grav, 0.0]))
    }

    fn control_codistribution(&self, q: &ConfigPoint) -> DMatrix<f64> {
        let (s, c) = q.coords[2].sin_cos();
        let cols = [
            DVector::from_vec(vec![c, s, self.r]),
            DVector::from_vec(vec![-s, c, 0.0]),
            DVector::from_vec(vec![0.0, 0.0, 1.0]),
        ];
        DMatrix::from_columns(&cols[..self.force_columns.clamp(1, 3)])
    }

    fn unactuated_frame(&self, q: &ConfigPoint) -> Option<DMatrix<f64>> {
        if self.force_columns != 2 {
            return None;
        }
        let (s, c) = q.coords[2].sin_cos();
        Some(DMatrix::from_column_slice(3, 1, &[-self.r * c, -self.r * s, 1.0]))
    }

    fn act(&self, g: &GroupElement, q: &ConfigPoint) -> ConfigPoint {
        let c = &q.coords;
        ConfigPoint::new_unchecked(&ROCKET_CHART, DVector::from_vec(vec![c[0] + g.data[0], c[1] + g.data[1], c[2]]))
    }

    fn push_forward(&self, _g: &GroupElement, _q: &ConfigPoint, v: &DVector<f64>) -> DVector<f64> {
        v.clone()
    }

    fn generator(&self, xi: &LieAlgebraVec, _q: &ConfigPoint) -> DVector<f64> {
        DVector::from_vec(vec![xi.comps[0], xi.comps[1], 0.0])
    }

    fn project(&self, q: &ConfigPoint) -> ShapePoint {
        ShapePoint::angle(q.coords[2])
    }

    fn project_velocity(&self, _q: &ConfigPoint, qdot: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, qdot[2])
    }

    fn relative_group(&self, base: &ConfigPoint, q: &ConfigPoint) -> GroupElement {
        GroupElement {
            kind: GroupKind::R2,
            data: DVector::from_vec(vec![q.coords[0] - base.coords[0], q.coords[1] - base.coords[1]]),
        }
    }

    fn sections(&self) -> Vec<SectionMap> {
        vec![Arc::new(self.section())]
    }

    /// Thrust axis `(−sin θ, cos θ)` along the required specific force.
    fn closed_form_shape(&self, _g: &GroupElement, _xi: &LieAlgebraVec, xidot: &LieAlgebraVec) -> Option<ShapePoint> {
        let (w1, w2) = (xidot.comps[0], xidot.comps[1] + self.g_grav);
        if w1.hypot(w2) < 1e-12 * self.g_grav.max(1.0) {
            return None;
        }
        Some(ShapePoint::angle((-w1).atan2(w2)))
    }

    fn random_config(&self, rng: &mut dyn RngCore) -> ConfigPoint {
        ConfigPoint::new_unchecked(
            &ROCKET_CHART,
            DVector::from_vec(vec![rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-3.2..3.2)]),
        )
    }
}
