//! Planar aerial manipulator: a thrust vehicle carried on a revolute joint
//! behind an end-effector link, symmetric under SE(2).
//!
//! Configuration `(x1, x2, θ, φ)`: end-effector pose and joint angle. The
//! end-effector link is a uniform rod of mass `m_g` and length `l_g` running
//! from the tool point back to the joint; the vehicle (mass `m_q`,
//! inertia `j_q`) sits at distance `l_q` from the joint along the direction
//! `θ + φ`, which is also its thrust axis.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::{Rng, RngCore};

use crate::bundle::{group_rates, GroupElement, GroupKind, LieAlgebraVec, ShapeDomain, ShapeKind, ShapePoint};
use crate::geometry::{Chart, ConfigPoint, FrameKind};
use crate::model::{MechanicalSystem, Section, SectionMap};

pub static MANIPULATOR_CHART: Chart = Chart {
    name: "manipulator_x1_x2_theta_phi",
    dim: 4,
    frame_kind: FrameKind::Coordinate,
    wrap_mask: &[false, false, true, true],
};

#[derive(Debug, Clone, PartialEq)]
pub struct Manipulator {
    pub m_g: f64,
    pub m_q: f64,
    pub l_g: f64,
    pub l_q: f64,
    pub j_q: f64,
    pub g_grav: f64,
}

impl Default for Manipulator {
    fn default() -> Self {
        Self { m_g: 1.0, m_q: 0.3, l_g: 0.2, l_q: 0.4, j_q: 0.01, g_grav: 9.81 }
    }
}

fn u(a: f64) -> Vector2<f64> {
    Vector2::new(a.cos(), a.sin())
}

fn du(a: f64) -> Vector2<f64> {
    Vector2::new(-a.sin(), a.cos())
}

fn rot2(a: f64) -> Matrix2<f64> {
    let (s, c) = a.sin_cos();
    Matrix2::new(c, -s, s, c)
}

impl Manipulator {
    pub fn new(m_g: f64, m_q: f64, l_g: f64, l_q: f64, g_grav: f64) -> Self {
        Self { m_g, m_q, l_g, l_q, g_grav, ..Self::default() }
    }

    pub fn total_mass(&self) -> f64 {
        self.m_g + self.m_q
    }

    /// Rod inertia about its own center.
    fn j_g(&self) -> f64 {
        self.m_g * self.l_g * self.l_g / 12.0
    }

    /// `ℓ_q m_q / (m_g + m_q)`, the section's radius.
    pub fn section_radius(&self) -> f64 {
        self.l_q * self.m_q / self.total_mass()
    }

    /// Offset of the center of mass behind the flat output along `θ`.
    pub fn com_offset(&self) -> f64 {
        self.l_g * (self.m_g + 2.0 * self.m_q) / (2.0 * self.total_mass())
    }

    /// Positional Jacobians (2×4) of the rod center and of the vehicle.
    fn jacobians(&self, q: &ConfigPoint) -> (DMatrix<f64>, DMatrix<f64>) {
        let th = q.coords[2];
        let al = th + q.coords[3];
        let mut jg = DMatrix::zeros(2, 4);
        let mut jq = DMatrix::zeros(2, 4);
        for k in 0..2 {
            jg[(k, k)] = 1.0;
            jq[(k, k)] = 1.0;
        }
        let a = -0.5 * self.l_g * du(th);
        let b = -self.l_g * du(th) - self.l_q * du(al);
        let c = -self.l_q * du(al);
        for k in 0..2 {
            jg[(k, 2)] = a[k];
            jq[(k, 2)] = b[k];
            jq[(k, 3)] = c[k];
        }
        (jg, jq)
    }

    /// Center of mass of the whole system.
    pub fn center_of_mass(&self, q: &ConfigPoint) -> Vector2<f64> {
        let x = Vector2::new(q.coords[0], q.coords[1]);
        let th = q.coords[2];
        let pg = x - 0.5 * self.l_g * u(th);
        let pq = x - self.l_g * u(th) - self.l_q * u(th + q.coords[3]);
        (self.m_g * pg + self.m_q * pq) / self.total_mass()
    }

    pub fn section(&self) -> ManipulatorSection {
        ManipulatorSection { radius: self.section_radius() }
    }
}

/// `φ ↦ (k cos φ, k sin φ, 0, φ)`.
#[derive(Debug, Clone)]
pub struct ManipulatorSection {
    pub radius: f64,
}

impl Section for ManipulatorSection {
    fn name(&self) -> &str {
        "manipulator_global"
    }

    fn domain(&self) -> ShapeDomain {
        ShapeDomain::Full
    }

    fn eval(&self, s: &ShapePoint) -> ConfigPoint {
        let p = s.coords[0];
        ConfigPoint::new_unchecked(&MANIPULATOR_CHART, DVector::from_vec(vec![self.radius * p.cos(), self.radius * p.sin(), 0.0, p]))
    }

    fn tangent(&self, s: &ShapePoint, sdot: &DVector<f64>) -> DVector<f64> {
        let p = s.coords[0];
        DVector::from_vec(vec![-self.radius * p.sin(), self.radius * p.cos(), 0.0, 1.0]) * sdot[0]
    }
}

impl MechanicalSystem for Manipulator {
    fn name(&self) -> &str {
        "manipulator"
    }

    fn chart(&self) -> &'static Chart {
        &MANIPULATOR_CHART
    }

    fn group_kind(&self) -> GroupKind {
        GroupKind::SE2
    }

    fn shape_kind(&self) -> ShapeKind {
        ShapeKind::Angle
    }

    fn params(&self) -> Vec<(String, f64)> {
        vec![
            ("m_g".into(), self.m_g),
            ("m_q".into(), self.m_q),
            ("l_g".into(), self.l_g),
            ("l_q".into(), self.l_q),
            ("J_q".into(), self.j_q),
            ("g_grav".into(), self.g_grav),
        ]
    }

    fn gravity(&self) -> f64 {
        self.g_grav
    }

    fn metric(&self, q: &ConfigPoint) -> DMatrix<f64> {
        let (jg, jq) = self.jacobians(q);
        let mut m = jg.transpose() * &jg * self.m_g + jq.transpose() * &jq * self.m_q;
        m[(2, 2)] += self.j_g() + self.j_q;
        m[(2, 3)] += self.j_q;
        m[(3, 2)] += self.j_q;
        m[(3, 3)] += self.j_q;
        m
    }

    fn metric_partials(&self, q: &ConfigPoint) -> Option<Vec<DMatrix<f64>>> {
        let (jg, jq) = self.jacobians(q);
        let th = q.coords[2];
        let al = th + q.coords[3];
        // u'' = -u, so differentiating -c u'(a) gives c u(a).
        let mut djg_th = DMatrix::zeros(2, 4);
        let mut djq_th = DMatrix::zeros(2, 4);
        let mut djq_ph = DMatrix::zeros(2, 4);
        let a = 0.5 * self.l_g * u(th);
        let b = self.l_g * u(th) + self.l_q * u(al);
        let c = self.l_q * u(al);
        for k in 0..2 {
            djg_th[(k, 2)] = a[k];
            djq_th[(k, 2)] = b[k];
            djq_th[(k, 3)] = c[k];
            djq_ph[(k, 2)] = c[k];
            djq_ph[(k, 3)] = c[k];
        }
        let sym = |d: &DMatrix<f64>, j: &DMatrix<f64>| d.transpose() * j + j.transpose() * d;
        let d_th = sym(&djg_th, &jg) * self.m_g + sym(&djq_th, &jq) * self.m_q;
        let d_ph = sym(&djq_ph, &jq) * self.m_q;
        Some(vec![DMatrix::zeros(4, 4), DMatrix::zeros(4, 4), d_th, d_ph])
    }

    fn potential(&self, q: &ConfigPoint) -> f64 {
        self.total_mass() * self.g_grav * self.center_of_mass(q).y
    }

    fn potential_differential(&self, q: &ConfigPoint) -> Option<DVector<f64>> {
        let (jg, jq) = self.jacobians(q);
        Some((jg.row(1) * self.m_g + jq.row(1) * self.m_q).transpose() * self.g_grav)
    }

    /// Thrust along the vehicle axis at the vehicle's center, vehicle torque,
    /// and joint torque.
    fn control_codistribution(&self, q: &ConfigPoint) -> DMatrix<f64> {
        let ph = q.coords[3];
        let al = q.coords[2] + ph;
        DMatrix::from_columns(&[
            DVector::from_vec(vec![al.cos(), al.sin(), -self.l_g * ph.sin(), 0.0]),
            DVector::from_vec(vec![0.0, 0.0, 1.0, 1.0]),
            DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0]),
        ])
    }

    fn unactuated_frame(&self, q: &ConfigPoint) -> Option<DMatrix<f64>> {
        let al = q.coords[2] + q.coords[3];
        Some(DMatrix::from_column_slice(4, 1, &[-al.sin(), al.cos(), 0.0, 0.0]))
    }

    fn act(&self, g: &GroupElement, q: &ConfigPoint) -> ConfigPoint {
        let x = rot2(g.data[2]) * Vector2::new(q.coords[0], q.coords[1]);
        ConfigPoint::new_unchecked(
            &MANIPULATOR_CHART,
            DVector::from_vec(vec![x.x + g.data[0], x.y + g.data[1], q.coords[2] + g.data[2], q.coords[3]]),
        )
    }

    fn push_forward(&self, g: &GroupElement, _q: &ConfigPoint, v: &DVector<f64>) -> DVector<f64> {
        let w = rot2(g.data[2]) * Vector2::new(v[0], v[1]);
        DVector::from_vec(vec![w.x, w.y, v[2], v[3]])
    }

    fn generator(&self, xi: &LieAlgebraVec, q: &ConfigPoint) -> DVector<f64> {
        let w = xi.comps[2];
        DVector::from_vec(vec![xi.comps[0] - w * q.coords[1], xi.comps[1] + w * q.coords[0], w, 0.0])
    }

    fn project(&self, q: &ConfigPoint) -> ShapePoint {
        ShapePoint::angle(q.coords[3])
    }

    fn project_velocity(&self, _q: &ConfigPoint, qdot: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, qdot[3])
    }

    /// `pose(q) ∘ pose(base)⁻¹` in SE(2).
    fn relative_group(&self, base: &ConfigPoint, q: &ConfigPoint) -> GroupElement {
        let pose = |c: &DVector<f64>| GroupElement { kind: GroupKind::SE2, data: DVector::from_vec(vec![c[0], c[1], c[2]]) };
        pose(&q.coords).compose(&pose(&base.coords).inverse())
    }

    fn sections(&self) -> Vec<SectionMap> {
        vec![Arc::new(self.section())]
    }

    /// Vehicle axis along the specific force required by the center of mass.
    fn closed_form_shape(&self, g: &GroupElement, xi: &LieAlgebraVec, xidot: &LieAlgebraVec) -> Option<ShapePoint> {
        let (gd, gdd) = group_rates(g, xi, xidot);
        let th = g.data[2];
        let com_acc = Vector2::new(gdd[0], gdd[1]) + self.com_offset() * (u(th) * gd[2] * gd[2] - du(th) * gdd[2]);
        let w = com_acc + Vector2::new(0.0, self.g_grav);
        if w.norm() < 1e-12 * self.g_grav.max(1.0) {
            return None;
        }
        Some(ShapePoint::angle(w.y.atan2(w.x) - th))
    }

    fn random_config(&self, rng: &mut dyn RngCore) -> ConfigPoint {
        ConfigPoint::new_unchecked(
            &MANIPULATOR_CHART,
            DVector::from_vec(vec![
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.2..3.2),
                rng.gen_range(-3.2..3.2),
            ]),
        )
    }
}
