//! Quadrotor on SE(3) in body-frame velocities, symmetric under
//! translations and rotations about the body thrust axis.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, RngCore};

use crate::bundle::{random_in_ball, GroupElement, GroupKind, LieAlgebraVec, ShapeDomain, ShapeKind, ShapePoint};
use crate::geometry::{Chart, ConfigPoint, SE3_BODY};
use crate::linalg::{reorthonormalize, rot_z, so3_exp, so3_log, so3_right_jacobian_inv, vee};
use crate::model::{MechanicalSystem, Section, SectionMap};

#[derive(Debug, Clone, PartialEq)]
pub struct Quadrotor {
    pub m: f64,
    pub j_xx: f64,
    pub j_zz: f64,
    pub g_grav: f64,
}

impl Default for Quadrotor {
    fn default() -> Self {
        Self { m: 1.0, j_xx: 0.01, j_zz: 0.02, g_grav: 9.81 }
    }
}

impl Quadrotor {
    pub fn new(m: f64, j_xx: f64, j_zz: f64, g_grav: f64) -> Self {
        Self { m, j_xx, j_zz, g_grav }
    }

    fn inertia(&self) -> Vector3<f64> {
        Vector3::new(self.j_xx, self.j_xx, self.j_zz)
    }
}

fn split(v: &DVector<f64>) -> (Vector3<f64>, Vector3<f64>) {
    (Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5]))
}

fn join(a: &Vector3<f64>, b: &Vector3<f64>) -> DVector<f64> {
    DVector::from_vec(vec![a.x, a.y, a.z, b.x, b.y, b.z])
}

/// Which pole a sphere section avoids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hemisphere {
    /// Defined away from `-e3`.
    North,
    /// Defined away from `+e3`.
    South,
}

/// Rotation-valued section of `SE(3) → S²` whose third column is `s`.
#[derive(Debug, Clone)]
pub struct SphereSection {
    pub hemisphere: Hemisphere,
}

impl SphereSection {
    pub fn rotation(&self, s: &Vector3<f64>) -> Matrix3<f64> {
        let (s1, s2, s3) = (s.x, s.y, s.z);
        match self.hemisphere {
            Hemisphere::North => {
                let d = s3 + 1.0;
                Matrix3::new(
                    1.0 - s1 * s1 / d, -s1 * s2 / d, s1,
                    -s1 * s2 / d, 1.0 - s2 * s2 / d, s2,
                    -s1, -s2, s3,
                )
            }
            Hemisphere::South => {
                let e = s3 - 1.0;
                Matrix3::new(
                    1.0 + s1 * s1 / e, -s1 * s2 / e, s1,
                    s1 * s2 / e, -1.0 - s2 * s2 / e, s2,
                    s1, -s2, s3,
                )
            }
        }
    }

    /// Directional derivative of [`Self::rotation`] along `sd`.
    pub fn rotation_rate(&self, s: &Vector3<f64>, sd: &Vector3<f64>) -> Matrix3<f64> {
        let (s1, s2, s3) = (s.x, s.y, s.z);
        let (d1, d2, d3) = (sd.x, sd.y, sd.z);
        let cross = d1 * s2 + s1 * d2;
        match self.hemisphere {
            Hemisphere::North => {
                let d = s3 + 1.0;
                let off = -cross / d + s1 * s2 * d3 / (d * d);
                Matrix3::new(
                    -2.0 * s1 * d1 / d + s1 * s1 * d3 / (d * d), off, d1,
                    off, -2.0 * s2 * d2 / d + s2 * s2 * d3 / (d * d), d2,
                    -d1, -d2, d3,
                )
            }
            Hemisphere::South => {
                let e = s3 - 1.0;
                let off = -cross / e + s1 * s2 * d3 / (e * e);
                Matrix3::new(
                    2.0 * s1 * d1 / e - s1 * s1 * d3 / (e * e), off, d1,
                    -off, -2.0 * s2 * d2 / e + s2 * s2 * d3 / (e * e), d2,
                    d1, -d2, d3,
                )
            }
        }
    }
}

impl Section for SphereSection {
    fn name(&self) -> &str {
        match self.hemisphere {
            Hemisphere::North => "sigma_north",
            Hemisphere::South => "sigma_south",
        }
    }

    fn domain(&self) -> ShapeDomain {
        match self.hemisphere {
            Hemisphere::North => ShapeDomain::SphereMinusPole { pole: [0.0, 0.0, -1.0] },
            Hemisphere::South => ShapeDomain::SphereMinusPole { pole: [0.0, 0.0, 1.0] },
        }
    }

    fn eval(&self, s: &ShapePoint) -> ConfigPoint {
        ConfigPoint::se3(Vector3::zeros(), self.rotation(&s.vec3()))
    }

    fn tangent(&self, s: &ShapePoint, sdot: &DVector<f64>) -> DVector<f64> {
        let v = s.vec3();
        let r = self.rotation(&v);
        let dr = self.rotation_rate(&v, &Vector3::new(sdot[0], sdot[1], sdot[2]));
        join(&Vector3::zeros(), &vee(&(r.transpose() * dr)))
    }
}

impl MechanicalSystem for Quadrotor {
    fn name(&self) -> &str {
        "quadrotor"
    }

    fn chart(&self) -> &'static Chart {
        &SE3_BODY
    }

    fn group_kind(&self) -> GroupKind {
        GroupKind::R3xS1
    }

    fn shape_kind(&self) -> ShapeKind {
        ShapeKind::Sphere
    }

    fn params(&self) -> Vec<(String, f64)> {
        vec![
            ("m".into(), self.m),
            ("J_xx".into(), self.j_xx),
            ("J_zz".into(), self.j_zz),
            ("g_grav".into(), self.g_grav),
        ]
    }

    fn gravity(&self) -> f64 {
        self.g_grav
    }

    fn metric(&self, _q: &ConfigPoint) -> DMatrix<f64> {
        let j = self.inertia();
        DMatrix::from_diagonal(&DVector::from_vec(vec![self.m, self.m, self.m, j.x, j.y, j.z]))
    }

    fn potential(&self, q: &ConfigPoint) -> f64 {
        self.m * self.g_grav * q.coords[2]
    }

    fn potential_differential(&self, q: &ConfigPoint) -> Option<DVector<f64>> {
        let f = q.rotation().transpose() * Vector3::z() * (self.m * self.g_grav);
        Some(join(&f, &Vector3::zeros()))
    }

    /// Body thrust along `e3` and the three body torques.
    fn control_codistribution(&self, _q: &ConfigPoint) -> DMatrix<f64> {
        let mut f = DMatrix::zeros(6, 4);
        f[(2, 0)] = 1.0;
        for k in 0..3 {
            f[(3 + k, 1 + k)] = 1.0;
        }
        f
    }

    fn unactuated_frame(&self, _q: &ConfigPoint) -> Option<DMatrix<f64>> {
        let mut u = DMatrix::zeros(6, 2);
        u[(0, 0)] = 1.0;
        u[(1, 1)] = 1.0;
        Some(u)
    }

    fn connection(&self, _q: &ConfigPoint, y: &DVector<f64>, x: &DVector<f64>) -> Option<DVector<f64>> {
        let (_, w1) = split(y);
        let (v2, w2) = split(x);
        let j = self.inertia();
        let sym = w1.cross(&w2.component_mul(&j)) + w2.cross(&w1.component_mul(&j));
        let ang = sym.component_div(&j) * 0.5 + w1.cross(&w2) * 0.5;
        Some(join(&w1.cross(&v2), &ang))
    }

    fn act(&self, g: &GroupElement, q: &ConfigPoint) -> ConfigPoint {
        let d = &g.data;
        ConfigPoint::se3(q.position() + Vector3::new(d[0], d[1], d[2]), q.rotation() * rot_z(d[3]))
    }

    fn push_forward(&self, g: &GroupElement, _q: &ConfigPoint, v: &DVector<f64>) -> DVector<f64> {
        let rt = rot_z(g.data[3]).transpose();
        let (lin, ang) = split(v);
        join(&(rt * lin), &(rt * ang))
    }

    fn generator(&self, xi: &LieAlgebraVec, q: &ConfigPoint) -> DVector<f64> {
        let c = &xi.comps;
        let v = q.rotation().transpose() * Vector3::new(c[0], c[1], c[2]);
        join(&v, &Vector3::new(0.0, 0.0, c[3]))
    }

    fn project(&self, q: &ConfigPoint) -> ShapePoint {
        ShapePoint::sphere(q.rotation() * Vector3::z())
    }

    fn project_velocity(&self, q: &ConfigPoint, qdot: &DVector<f64>) -> DVector<f64> {
        let (_, w) = split(qdot);
        let sd = q.rotation() * w.cross(&Vector3::z());
        DVector::from_column_slice(sd.as_slice())
    }

    fn relative_group(&self, base: &ConfigPoint, q: &ConfigPoint) -> GroupElement {
        let dx = q.position() - base.position();
        let rel = base.rotation().transpose() * q.rotation();
        GroupElement { kind: GroupKind::R3xS1, data: DVector::from_vec(vec![dx.x, dx.y, dx.z, rel[(1, 0)].atan2(rel[(0, 0)])]) }
    }

    fn sections(&self) -> Vec<SectionMap> {
        vec![
            Arc::new(SphereSection { hemisphere: Hemisphere::North }),
            Arc::new(SphereSection { hemisphere: Hemisphere::South }),
        ]
    }

    /// Thrust axis along the specific force `a + g e3`.
    fn closed_form_shape(&self, _g: &GroupElement, _xi: &LieAlgebraVec, xidot: &LieAlgebraVec) -> Option<ShapePoint> {
        let c = &xidot.comps;
        let w = Vector3::new(c[0], c[1], c[2] + self.g_grav);
        if w.norm() < 1e-12 * self.g_grav.max(1.0) {
            return None;
        }
        Some(ShapePoint::sphere(w))
    }

    fn random_config(&self, rng: &mut dyn RngCore) -> ConfigPoint {
        let x = Vector3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let w = random_in_ball(3, rng, std::f64::consts::PI);
        ConfigPoint::se3(x, so3_exp(&Vector3::new(w[0], w[1], w[2])))
    }

    /// `z = (Δx, Θ)` with `x = x0 + Δx`, `R = R0 exp(Θ)`.
    fn local_point(&self, q0: &ConfigPoint, z: &DVector<f64>) -> ConfigPoint {
        let (dx, th) = split(z);
        ConfigPoint::se3(q0.position() + dx, reorthonormalize(&(q0.rotation() * so3_exp(&th))))
    }

    fn local_coords(&self, q0: &ConfigPoint, q: &ConfigPoint) -> DVector<f64> {
        join(&(q.position() - q0.position()), &so3_log(&(q0.rotation().transpose() * q.rotation())))
    }

    fn local_velocity(&self, q0: &ConfigPoint, z: &DVector<f64>, qdot: &DVector<f64>) -> DVector<f64> {
        let (_, th) = split(z);
        let (v, w) = split(qdot);
        let r = q0.rotation() * so3_exp(&th);
        join(&(r * v), &so3_right_jacobian_inv(&th, &w))
    }

    fn frame_rates(&self, q: &ConfigPoint, dc: &DVector<f64>, ddc: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let r = q.rotation();
        let xd = Vector3::new(dc[0], dc[1], dc[2]);
        let xdd = Vector3::new(ddc[0], ddc[1], ddc[2]);
        let rd = Matrix3::from_fn(|i, k| dc[3 + 3 * i + k]);
        let rdd = Matrix3::from_fn(|i, k| ddc[3 + 3 * i + k]);
        let v = r.transpose() * xd;
        let w = vee(&(r.transpose() * rd));
        let vd = rd.transpose() * xd + r.transpose() * xdd;
        let wd = vee(&(rd.transpose() * rd + r.transpose() * rdd));
        (join(&v, &w), join(&vd, &wd))
    }
}

/// Rotation whose body `e3` is `s` and whose yaw about it is `psi`, relative to the section.
pub fn attitude(section: &SphereSection, s: &Vector3<f64>, psi: f64) -> Matrix3<f64> {
    section.rotation(s) * rot_z(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::skew;

    #[test]
    fn sections_are_rotations_with_axis_s() {
        for hemi in [Hemisphere::North, Hemisphere::South] {
            let sec = SphereSection { hemisphere: hemi };
            for s in [Vector3::new(0.3, -0.4, 0.5), Vector3::new(-0.1, 0.7, -0.2), Vector3::new(0.9, 0.1, 0.05)] {
                let s = s.normalize();
                let r = sec.rotation(&s);
                assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-12);
                assert!((r.determinant() - 1.0).abs() < 1e-12);
                assert!((r * Vector3::z() - s).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn section_rate_matches_fd() {
        for hemi in [Hemisphere::North, Hemisphere::South] {
            let sec = SphereSection { hemisphere: hemi };
            let s = Vector3::new(0.2, -0.5, 0.3).normalize();
            let sd = Vector3::new(0.4, 0.9, -1.1);
            let h = 1e-6;
            let fd = (sec.rotation(&(s + sd * h)) - sec.rotation(&(s - sd * h))) / (2.0 * h);
            assert!((fd - sec.rotation_rate(&s, &sd)).amax() < 1e-8);
        }
    }

    #[test]
    fn skew_generator_matches_right_multiplication() {
        let q = ConfigPoint::se3(Vector3::zeros(), so3_exp(&Vector3::new(0.1, 0.2, 0.3)));
        let r = q.rotation();
        let w = 0.4;
        let rd = r * skew(&Vector3::new(0.0, 0.0, w));
        let h = 1e-6;
        let fd = (r * rot_z(w * h) - r * rot_z(-w * h)) / (2.0 * h);
        assert!((fd - rd).amax() < 1e-9);
    }
}
