//! Riemannian primitives on a system's configuration chart: metric
//! evaluation, musical isomorphisms, Christoffel symbols, covariant
//! derivatives and the forced geodesic residual.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::linalg::{self, wrap_angle};
use crate::model::MechanicalSystem;

/// How tangent components at a point are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    /// Coordinate vector fields `d/dq^i`.
    Coordinate,
    /// Body-fixed linear and angular velocity on SE(3).
    BodyFrame,
}

/// A named local chart.
#[derive(Debug, PartialEq, Eq)]
pub struct Chart {
    pub name: &'static str,
    /// Manifold dimension.
    pub dim: usize,
    pub frame_kind: FrameKind,
    /// Angle-like coordinates, wrapped to `[-pi, pi)`.
    pub wrap_mask: &'static [bool],
}

impl Chart {
    /// Number of stored coordinates: `dim` for coordinate charts, 12 for
    /// SE(3) (position plus row-major rotation).
    pub fn coord_len(&self) -> usize {
        match self.frame_kind {
            FrameKind::Coordinate => self.dim,
            FrameKind::BodyFrame => 12,
        }
    }
}

/// Body-frame chart on SE(3).
pub static SE3_BODY: Chart = Chart {
    name: "se3_body",
    dim: 6,
    frame_kind: FrameKind::BodyFrame,
    wrap_mask: &[false; 6],
};

const ROTATION_TOL: f64 = 1e-9;

/// A point of the configuration manifold in a named chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigPoint {
    pub chart: &'static Chart,
    pub coords: DVector<f64>,
}

impl ConfigPoint {
    /// Builds a point, wrapping angle-like coordinates and validating the
    /// rotation block of SE(3) points.
    pub fn new(chart: &'static Chart, coords: DVector<f64>) -> Result<Self> {
        if coords.len() != chart.coord_len() {
            return Err(Error::DimensionMismatch { expected: chart.coord_len(), found: coords.len() });
        }
        let p = Self::new_unchecked(chart, coords);
        if chart.frame_kind == FrameKind::BodyFrame {
            let r = p.rotation();
            let orth = (r.transpose() * r - Matrix3::identity()).abs().max();
            if orth > ROTATION_TOL || (r.determinant() - 1.0).abs() > ROTATION_TOL {
                return Err(Error::Model(format!("rotation block is not in SO(3) (orthogonality error {orth:e})")));
            }
        }
        Ok(p)
    }

    /// Wraps angles but skips validation.
    pub fn new_unchecked(chart: &'static Chart, mut coords: DVector<f64>) -> Self {
        if chart.frame_kind == FrameKind::Coordinate {
            for (i, wrap) in chart.wrap_mask.iter().enumerate() {
                if *wrap {
                    coords[i] = wrap_angle(coords[i]);
                }
            }
        }
        Self { chart, coords }
    }

    pub fn from_slice(chart: &'static Chart, c: &[f64]) -> Result<Self> {
        Self::new(chart, DVector::from_column_slice(c))
    }

    /// SE(3) point from position and rotation.
    pub fn se3(position: Vector3<f64>, rotation: Matrix3<f64>) -> Self {
        let mut c = DVector::zeros(12);
        c.fixed_rows_mut::<3>(0).copy_from(&position);
        for r in 0..3 {
            for k in 0..3 {
                c[3 + 3 * r + k] = rotation[(r, k)];
            }
        }
        Self { chart: &SE3_BODY, coords: c }
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.coords[0], self.coords[1], self.coords[2])
    }

    /// Rotation block of an SE(3) point.
    pub fn rotation(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, k| self.coords[3 + 3 * r + k])
    }

    pub fn dim(&self) -> usize {
        self.chart.dim
    }

    fn ensure_chart(&self, other: &'static Chart) -> Result<()> {
        if std::ptr::eq(self.chart, other) || self.chart == other {
            Ok(())
        } else {
            Err(Error::ChartMismatch { expected: other.name.into(), found: self.chart.name.into() })
        }
    }
}

/// Tangent vector with components in the chart's frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVec {
    pub at: ConfigPoint,
    pub comps: DVector<f64>,
}

/// Covector with components dual to the chart's frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CotangentVec {
    pub at: ConfigPoint,
    pub comps: DVector<f64>,
}

impl TangentVec {
    pub fn new(at: ConfigPoint, comps: DVector<f64>) -> Result<Self> {
        if comps.len() != at.dim() {
            return Err(Error::DimensionMismatch { expected: at.dim(), found: comps.len() });
        }
        Ok(Self { at, comps })
    }
}

impl CotangentVec {
    pub fn new(at: ConfigPoint, comps: DVector<f64>) -> Result<Self> {
        if comps.len() != at.dim() {
            return Err(Error::DimensionMismatch { expected: at.dim(), found: comps.len() });
        }
        Ok(Self { at, comps })
    }
}

/// Metric at `q`, rejected unless symmetric positive-definite.
pub fn metric_checked(sys: &dyn MechanicalSystem, q: &ConfigPoint) -> Result<DMatrix<f64>> {
    let m = sys.metric(q);
    let asym = (&m - m.transpose()).abs().max();
    let scale = m.abs().max().max(f64::MIN_POSITIVE);
    // Cholesky pivots bound the spectrum cheaply; the eigenvalue is only
    // needed for the error report.
    let pivots_ok = m.clone().cholesky().is_some_and(|c| c.l_dirty().diagonal().iter().all(|d| d * d > 1e-12 * scale));
    if asym > 1e-12 * scale.max(1.0) || !pivots_ok {
        return Err(Error::NotPositiveDefinite { at: q.coords.iter().cloned().collect(), min_eig: linalg::min_eigenvalue(&m) });
    }
    Ok(m)
}

/// Metric inner product of two frame-component vectors at `q`.
pub fn inner(sys: &dyn MechanicalSystem, q: &ConfigPoint, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (sys.metric(q) * b).dot(a)
}

pub fn kinetic_energy(sys: &dyn MechanicalSystem, q: &ConfigPoint, qdot: &DVector<f64>) -> f64 {
    0.5 * inner(sys, q, qdot, qdot)
}

/// Solves `M(q) v = f` for frame components.
pub fn sharp_comps(sys: &dyn MechanicalSystem, q: &ConfigPoint, f: &DVector<f64>) -> Result<DVector<f64>> {
    let m = metric_checked(sys, q)?;
    let n = m.nrows();
    m.cholesky()
        .map(|c| c.solve(f))
        .ok_or_else(|| Error::NotPositiveDefinite { at: q.coords.iter().cloned().collect(), min_eig: 0.0 })
        .and_then(|v| if v.len() == n { Ok(v) } else { Err(Error::DimensionMismatch { expected: n, found: v.len() }) })
}

/// Musical isomorphism `T*Q -> TQ`.
pub fn sharp(sys: &dyn MechanicalSystem, f: &CotangentVec) -> Result<TangentVec> {
    f.at.ensure_chart(sys.chart())?;
    let v = sharp_comps(sys, &f.at, &f.comps)?;
    Ok(TangentVec { at: f.at.clone(), comps: v })
}

/// Musical isomorphism `TQ -> T*Q`.
pub fn flat(sys: &dyn MechanicalSystem, v: &TangentVec) -> Result<CotangentVec> {
    v.at.ensure_chart(sys.chart())?;
    Ok(CotangentVec { at: v.at.clone(), comps: sys.metric(&v.at) * &v.comps })
}

fn fd_step(q: &ConfigPoint) -> f64 {
    1e-6 * q.coords.amax().max(1.0)
}

/// Differential of the potential in frame components.
///
/// Falls back to a 5-point stencil in the local chart when the system does
/// not supply it.
pub fn potential_differential(sys: &dyn MechanicalSystem, q: &ConfigPoint) -> DVector<f64> {
    if let Some(dp) = sys.potential_differential(q) {
        return dp;
    }
    let n = q.dim();
    let h = 1e-3 * q.coords.amax().max(1.0);
    DVector::from_fn(n, |i, _| {
        let mut dir = DVector::zeros(n);
        dir[i] = 1.0;
        five_point_scalar(|t| sys.potential(&move_along(sys, q, &dir, t)), h)
    })
}

fn five_point_scalar<F: Fn(f64) -> f64>(f: F, h: f64) -> f64 {
    linalg::D1_5
        .iter()
        .enumerate()
        .filter(|(_, w)| **w != 0.0)
        .map(|(k, w)| w * f((k as f64 - 2.0) * h))
        .sum::<f64>()
        / h
}

/// `grad P = (dP)^sharp`.
pub fn grad_potential(sys: &dyn MechanicalSystem, q: &ConfigPoint) -> Result<TangentVec> {
    q.ensure_chart(sys.chart())?;
    let dp = potential_differential(sys, q);
    Ok(TangentVec { at: q.clone(), comps: sharp_comps(sys, q, &dp)? })
}

/// Christoffel symbols of the second kind, `gamma[k][(i, j)] = Γ^k_{ij}`.
#[derive(Debug, Clone)]
pub struct Christoffel {
    pub gamma: Vec<DMatrix<f64>>,
}

impl Christoffel {
    /// `Γ^k_{ij} y^i x^j`.
    pub fn contract(&self, y: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.gamma.len(), |k, _| (&self.gamma[k] * x).dot(y))
    }
}

fn require_coordinate(q: &ConfigPoint) -> Result<()> {
    if q.chart.frame_kind != FrameKind::Coordinate {
        return Err(Error::ChartMismatch { expected: "coordinate chart".into(), found: q.chart.name.into() });
    }
    Ok(())
}

/// Metric partials `dM/dq^l` by central differences with step
/// `1e-6 * max(1, |q|)`.
pub fn metric_partials_fd(sys: &dyn MechanicalSystem, q: &ConfigPoint) -> Vec<DMatrix<f64>> {
    let n = q.dim();
    let h = fd_step(q);
    (0..n)
        .map(|l| {
            let mut plus = q.coords.clone();
            let mut minus = q.coords.clone();
            plus[l] += h;
            minus[l] -= h;
            let mp = sys.metric(&ConfigPoint::new_unchecked(q.chart, plus));
            let mm = sys.metric(&ConfigPoint::new_unchecked(q.chart, minus));
            (mp - mm) / (2.0 * h)
        })
        .collect()
}

fn christoffel_from_partials(m: &DMatrix<f64>, dm: &[DMatrix<f64>]) -> Result<Christoffel> {
    let n = m.nrows();
    let minv = m.clone().try_inverse().ok_or(Error::NotPositiveDefinite { at: vec![], min_eig: 0.0 })?;
    // first kind: c[l][(i,j)] = 1/2 (d_i M_lj + d_j M_li - d_l M_ij)
    let first: Vec<DMatrix<f64>> = (0..n)
        .map(|l| DMatrix::from_fn(n, n, |i, j| 0.5 * (dm[i][(l, j)] + dm[j][(l, i)] - dm[l][(i, j)])))
        .collect();
    let gamma = (0..n)
        .map(|k| {
            let mut g = DMatrix::zeros(n, n);
            for (l, c) in first.iter().enumerate() {
                let w = minv[(k, l)];
                g.zip_apply(c, |a, b| *a += w * b);
            }
            g
        })
        .collect();
    Ok(Christoffel { gamma })
}

/// Levi-Civita Christoffel symbols at `q` (coordinate charts only).
///
/// Uses the system's analytic metric partials when available.
pub fn christoffel_at(sys: &dyn MechanicalSystem, q: &ConfigPoint) -> Result<Christoffel> {
    require_coordinate(q)?;
    let m = metric_checked(sys, q)?;
    let dm = sys.metric_partials(q).unwrap_or_else(|| metric_partials_fd(sys, q));
    if dm.len() != q.dim() {
        return Err(Error::DimensionMismatch { expected: q.dim(), found: dm.len() });
    }
    christoffel_from_partials(&m, &dm)
}

/// Christoffel symbols from finite-difference metric partials, ignoring any
/// analytic partials.
pub fn christoffel_fd(sys: &dyn MechanicalSystem, q: &ConfigPoint) -> Result<Christoffel> {
    require_coordinate(q)?;
    let m = metric_checked(sys, q)?;
    christoffel_from_partials(&m, &metric_partials_fd(sys, q))
}

/// `∇_{E(y)} E(x)` for frame-constant components `y`, `x`: the bilinear part
/// of the covariant derivative.
pub fn connection(sys: &dyn MechanicalSystem, q: &ConfigPoint, y: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(v) = sys.connection(q, y, x) {
        return Ok(v);
    }
    Ok(christoffel_at(sys, q)?.contract(y, x))
}

/// Moves from `q` along frame direction `w` for parameter `t`; the curve's
/// velocity at `t = 0` is `w`.
pub fn move_along(sys: &dyn MechanicalSystem, q: &ConfigPoint, w: &DVector<f64>, t: f64) -> ConfigPoint {
    let z = sys.local_velocity(q, &DVector::zeros(w.len()), w) * t;
    sys.local_point(q, &z)
}

/// Frame velocity whose local-chart rate at `q` (at `z = 0`) is `zdot`.
pub fn frame_from_local_rate(sys: &dyn MechanicalSystem, q: &ConfigPoint, zdot: &DVector<f64>) -> DVector<f64> {
    let n = q.dim();
    let z0 = DVector::zeros(n);
    let cols: Vec<DVector<f64>> = (0..n)
        .map(|i| {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            sys.local_velocity(q, &z0, &e)
        })
        .collect();
    let a = DMatrix::from_columns(&cols);
    a.lu().solve(zdot).unwrap_or_else(|| zdot.clone())
}

/// Step used for differentiating vector fields along curves (5-point stencil).
pub const FIELD_STEP: f64 = 1e-3;

/// Covariant derivative `∇_Y X` at `q` of the vector field `field` along
/// the frame vector `y`.
pub fn covariant_derivative<F>(sys: &dyn MechanicalSystem, q: &ConfigPoint, y: &DVector<f64>, field: F) -> Result<DVector<f64>>
where
    F: Fn(&ConfigPoint) -> Result<DVector<f64>>,
{
    let x0 = field(q)?;
    let ynorm = y.norm();
    if ynorm == 0.0 {
        return Ok(DVector::zeros(x0.len()));
    }
    let h = FIELD_STEP / ynorm.max(1.0);
    let mut samples = Vec::with_capacity(5);
    for k in 0..5 {
        let t = (k as f64 - 2.0) * h;
        samples.push(if k == 2 { x0.clone() } else { field(&move_along(sys, q, y, t))? });
    }
    let mut deriv = DVector::zeros(x0.len());
    for (w, s) in linalg::D1_5.iter().zip(&samples) {
        deriv += s * *w;
    }
    deriv /= h;
    Ok(deriv + connection(sys, q, y, &x0)?)
}

/// Left side of the forced geodesic equation, `∇_q̇ q̇ + grad P`.
pub fn dynamics_residual_comps(
    sys: &dyn MechanicalSystem,
    q: &ConfigPoint,
    qdot: &DVector<f64>,
    qddot: &DVector<f64>,
) -> Result<DVector<f64>> {
    let gp = sharp_comps(sys, q, &potential_differential(sys, q))?;
    Ok(qddot + connection(sys, q, qdot, qdot)? + gp)
}

/// `∇_q̇ q̇ + grad P` for tangent data at a common point.
pub fn dynamics_residual(sys: &dyn MechanicalSystem, q: &ConfigPoint, qdot: &TangentVec, qddot: &TangentVec) -> Result<TangentVec> {
    q.ensure_chart(sys.chart())?;
    for v in [qdot, qddot] {
        if v.at.chart != q.chart || (&v.at.coords - &q.coords).amax() > 1e-12 {
            return Err(Error::ChartMismatch { expected: format!("{} at {:?}", q.chart.name, q.coords.as_slice()), found: format!("{} at {:?}", v.at.chart.name, v.at.coords.as_slice()) });
        }
    }
    let r = dynamics_residual_comps(sys, q, &qdot.comps, &qddot.comps)?;
    Ok(TangentVec { at: q.clone(), comps: r })
}

/// Acceleration produced by input covector `f` (frame components):
/// `q̈ = f♯ − ∇-quadratic − grad P`.
pub fn forced_acceleration(sys: &dyn MechanicalSystem, q: &ConfigPoint, qdot: &DVector<f64>, f: &DVector<f64>) -> Result<DVector<f64>> {
    let drift = dynamics_residual_comps(sys, q, qdot, &DVector::zeros(qdot.len()))?;
    Ok(sharp_comps(sys, q, f)? - drift)
}

/// Total mechanical energy `K + P`.
pub fn energy(sys: &dyn MechanicalSystem, q: &ConfigPoint, qdot: &DVector<f64>) -> f64 {
    kinetic_energy(sys, q, qdot) + sys.potential(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{Manipulator, Quadrotor, Rocket};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn rocket_gravity_covector_sharpens_to_g() {
        let sys = Rocket::default();
        let q = ConfigPoint::from_slice(sys.chart(), &[0.3, -1.0, 0.4]).unwrap();
        let f = CotangentVec::new(q.clone(), DVector::from_vec(vec![0.0, sys.m * sys.g_grav, 0.0])).unwrap();
        let v = sharp(&sys, &f).unwrap();
        assert_relative_eq!(v.comps, DVector::from_vec(vec![0.0, sys.g_grav, 0.0]), epsilon = 1e-14);
    }

    #[test]
    fn sharp_flat_identity_and_residual() {
        use rand::Rng;
        let systems: Vec<Box<dyn MechanicalSystem>> =
            vec![Box::new(Rocket::default()), Box::new(Manipulator::default()), Box::new(Quadrotor::default())];
        let mut r = rng();
        for sys in &systems {
            for _ in 0..50 {
                let q = sys.random_config(&mut r);
                let f = DVector::from_fn(q.dim(), |_, _| r.gen_range(-3.0..3.0));
                let cv = CotangentVec::new(q.clone(), f.clone()).unwrap();
                let v = sharp(sys.as_ref(), &cv).unwrap();
                assert!((sys.metric(&q) * &v.comps - &f).amax() < 1e-10);
                let back = flat(sys.as_ref(), &v).unwrap();
                assert!((back.comps - &f).amax() < 1e-12 * f.amax().max(1.0));
            }
        }
    }

    #[test]
    fn grad_potential_examples() {
        let rocket = Rocket::default();
        let q = ConfigPoint::from_slice(rocket.chart(), &[5.0, -3.0, 0.7]).unwrap();
        let g = grad_potential(&rocket, &q).unwrap();
        assert_relative_eq!(g.comps, DVector::from_vec(vec![0.0, rocket.g_grav, 0.0]), epsilon = 1e-12);

        let quad = Quadrotor::default();
        let q = ConfigPoint::se3(Vector3::new(1.0, 2.0, 3.0), Matrix3::identity());
        let g = grad_potential(&quad, &q).unwrap();
        assert_relative_eq!(g.comps, DVector::from_vec(vec![0.0, 0.0, quad.g_grav, 0.0, 0.0, 0.0]), epsilon = 1e-12);
    }

    #[test]
    fn constant_potential_has_zero_gradient() {
        let sys = Rocket { g_grav: 0.0, ..Rocket::default() };
        let q = ConfigPoint::from_slice(sys.chart(), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(grad_potential(&sys, &q).unwrap().comps.amax(), 0.0);
    }

    #[test]
    fn constant_metric_has_vanishing_christoffels() {
        let sys = Rocket::default();
        let q = ConfigPoint::from_slice(sys.chart(), &[0.1, 0.2, 0.3]).unwrap();
        for g in christoffel_fd(&sys, &q).unwrap().gamma {
            assert_eq!(g.amax(), 0.0);
        }
    }

    #[test]
    fn manipulator_christoffels_symmetric_compatible_and_match_fd() {
        let sys = Manipulator::default();
        let mut r = rng();
        for _ in 0..100 {
            let q = sys.random_config(&mut r);
            let ga = christoffel_at(&sys, &q).unwrap();
            let gf = christoffel_fd(&sys, &q).unwrap();
            let m = sys.metric(&q);
            let dm = metric_partials_fd(&sys, &q);
            let n = q.dim();
            for k in 0..n {
                assert!((&ga.gamma[k] - ga.gamma[k].transpose()).amax() < 1e-8);
                assert!((&ga.gamma[k] - &gf.gamma[k]).amax() < 1e-6);
            }
            // metric compatibility: d_k M_ij = Γ^l_ki M_lj + Γ^l_kj M_il
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut rhs = 0.0;
                        for l in 0..n {
                            rhs += ga.gamma[l][(k, i)] * m[(l, j)] + ga.gamma[l][(k, j)] * m[(i, l)];
                        }
                        assert!((dm[k][(i, j)] - rhs).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn christoffel_rejects_body_frame() {
        let quad = Quadrotor::default();
        let q = ConfigPoint::se3(Vector3::zeros(), Matrix3::identity());
        assert!(matches!(christoffel_at(&quad, &q), Err(Error::ChartMismatch { .. })));
    }

    #[test]
    fn residual_examples() {
        let rocket = Rocket::default();
        let q = ConfigPoint::from_slice(rocket.chart(), &[0.0, 0.0, 0.3]).unwrap();
        let z = TangentVec::new(q.clone(), DVector::zeros(3)).unwrap();
        let r = dynamics_residual(&rocket, &q, &z, &z).unwrap();
        assert_relative_eq!(r.comps, DVector::from_vec(vec![0.0, rocket.g_grav, 0.0]), epsilon = 1e-12);

        let quad = Quadrotor::default();
        let q = ConfigPoint::se3(Vector3::zeros(), Matrix3::identity());
        let z = TangentVec::new(q.clone(), DVector::zeros(6)).unwrap();
        let r = dynamics_residual(&quad, &q, &z, &z).unwrap();
        assert_relative_eq!(r.comps, DVector::from_vec(vec![0.0, 0.0, quad.g_grav, 0.0, 0.0, 0.0]), epsilon = 1e-12);
    }

    #[test]
    fn residual_rejects_mismatched_points() {
        let rocket = Rocket::default();
        let q = ConfigPoint::from_slice(rocket.chart(), &[0.0, 0.0, 0.3]).unwrap();
        let other = ConfigPoint::from_slice(rocket.chart(), &[1.0, 0.0, 0.3]).unwrap();
        let z = TangentVec::new(other, DVector::zeros(3)).unwrap();
        assert!(dynamics_residual(&rocket, &q, &z, &z).is_err());
    }

    #[test]
    fn quadratic_term_scales_by_four() {
        use rand::Rng;
        let systems: Vec<Box<dyn MechanicalSystem>> = vec![
            Box::new(Manipulator { g_grav: 0.0, ..Manipulator::default() }),
            Box::new(Quadrotor { g_grav: 0.0, ..Quadrotor::default() }),
        ];
        let mut r = rng();
        for sys in &systems {
            for _ in 0..20 {
                let q = sys.random_config(&mut r);
                let v = DVector::from_fn(q.dim(), |_, _| r.gen_range(-2.0..2.0));
                let z = DVector::zeros(q.dim());
                let r1 = dynamics_residual_comps(sys.as_ref(), &q, &v, &z).unwrap();
                let r2 = dynamics_residual_comps(sys.as_ref(), &q, &(&v * 2.0), &z).unwrap();
                assert!((r2 - r1 * 4.0).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn body_frame_connection_is_metric_compatible_and_torsion_free() {
        use rand::Rng;
        let quad = Quadrotor::default();
        let mut r = rng();
        let q = quad.random_config(&mut r);
        let m = quad.metric(&q);
        let basis: Vec<DVector<f64>> = (0..6).map(|i| DVector::from_fn(6, |j, _| if i == j { 1.0 } else { 0.0 })).collect();
        let z = DVector::from_fn(6, |_, _| r.gen_range(-1.0..1.0));
        for a in &basis {
            for b in &basis {
                let lhs = (&m * connection(&quad, &q, &z, a).unwrap()).dot(b) + (&m * a).dot(&connection(&quad, &q, &z, b).unwrap());
                assert!(lhs.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn point_construction_validates() {
        let rocket = Rocket::default();
        let p = ConfigPoint::from_slice(rocket.chart(), &[0.0, 0.0, 4.0]).unwrap();
        assert!(p.coords[2] < std::f64::consts::PI && p.coords[2] >= -std::f64::consts::PI);
        assert!(ConfigPoint::from_slice(rocket.chart(), &[0.0, 0.0]).is_err());
        let mut bad = ConfigPoint::se3(Vector3::zeros(), Matrix3::identity()).coords;
        bad[3] = 1.1;
        assert!(ConfigPoint::new(&SE3_BODY, bad).is_err());
    }
}
