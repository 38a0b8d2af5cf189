//! Flat output, shape recovery from the implicit dynamics, and
//! reconstruction of configuration, velocity and inputs.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::bundle::{
    spatial_acceleration, spatial_velocity, trivialize, GroupElement, LieAlgebraVec, ShapeDomain, ShapeKind, ShapePoint,
    Trivialization,
};
use crate::error::{Error, Result};
use crate::flatness::{implicit_scale, implicit_value, unactuated_frame, SHAPE_STEP};
use crate::geometry::{dynamics_residual_comps, metric_checked, ConfigPoint, TangentVec};
use crate::linalg::{D1_5, D2_5};
use crate::model::{coordinate_offsets, MechanicalSystem};

/// A point on a flat-output curve with time derivatives of its coordinates
/// (angles unwrapped).
#[derive(Debug, Clone, PartialEq)]
pub struct FlatPoint {
    pub value: GroupElement,
    pub derivs: Vec<DVector<f64>>,
}

impl FlatPoint {
    /// A point at rest.
    pub fn at_rest(value: GroupElement, order: usize) -> Self {
        let n = value.kind.dim();
        Self { value, derivs: vec![DVector::zeros(n); order] }
    }

    fn deriv(&self, k: usize) -> DVector<f64> {
        self.derivs.get(k - 1).cloned().unwrap_or_else(|| DVector::zeros(self.value.kind.dim()))
    }

    /// `(ξ, ξ̇)` with `ξ = ġ g⁻¹`.
    pub fn velocities(&self) -> (LieAlgebraVec, LieAlgebraVec) {
        let gd = self.deriv(1);
        let gdd = self.deriv(2);
        (spatial_velocity(&self.value, &gd), spatial_acceleration(&self.value, &gd, &gdd))
    }

    /// Taylor expansion of the curve by `tau`, keeping the stored orders.
    pub fn shifted(&self, tau: f64) -> Result<FlatPoint> {
        let order = self.derivs.len();
        let taylor = |start: usize| -> DVector<f64> {
            // start = 0 expands the value, start = k the k-th derivative.
            let mut acc = if start == 0 { self.value.data.clone() } else { self.deriv(start) };
            let mut fact = 1.0;
            for j in 1..=(order - start.min(order)) {
                fact *= j as f64;
                acc += self.deriv(start + j) * (tau.powi(j as i32) / fact);
            }
            acc
        };
        let value = GroupElement::new(self.value.kind, taylor(0))?;
        Ok(FlatPoint { value, derivs: (1..=order).map(taylor).collect() })
    }
}

/// Reconstructed configuration, velocity and input at one instant.
#[derive(Debug, Clone)]
pub struct ReconstructedSample {
    pub t: f64,
    pub q: ConfigPoint,
    pub qdot: TangentVec,
    pub shape: ShapePoint,
    /// Coefficients on the columns of `F`.
    pub force_coeffs: DVector<f64>,
    /// `M`-norm of the part of the dynamics residual outside `sharp(F)`.
    pub residual: f64,
}

/// `y = φ(q)`, the group part of the trivialization.
pub fn flat_output(sys: &dyn MechanicalSystem, triv: &Trivialization, q: &ConfigPoint) -> Result<GroupElement> {
    Ok(trivialize(sys, triv, q)?.1)
}

/// A converged root of the implicit dynamics.
#[derive(Debug, Clone)]
pub struct NewtonRoot {
    pub shape: ShapePoint,
    /// `‖E‖` with rows normalized by their scale.
    pub residual: f64,
    pub iterations: usize,
    /// Determinant of the row-normalized Jacobian at the root.
    pub normalized_det: f64,
    pub condition: f64,
    pub sigma_min: f64,
}

pub const NEWTON_TOL: f64 = 1e-11;
pub const NEWTON_MAX_ITER: usize = 50;
/// Largest accepted condition number of `∂E/∂s`.
pub const MAX_CONDITION: f64 = 1e10;

fn normalized_value(
    sys: &dyn MechanicalSystem,
    triv: &Trivialization,
    s: &ShapePoint,
    g: &GroupElement,
    xi: &LieAlgebraVec,
    xidot: &LieAlgebraVec,
) -> Result<(DVector<f64>, DMatrix<f64>, DVector<f64>)> {
    let (e, x, q) = implicit_value(sys, triv, s, g, xi, xidot, None)?;
    let scale = implicit_scale(sys, &q, &x).map(|v| if v > 0.0 { v } else { 1.0 });
    Ok((e.component_div(&scale), x, scale))
}

fn normalized_eval(
    sys: &dyn MechanicalSystem,
    triv: &Trivialization,
    s: &ShapePoint,
    g: &GroupElement,
    xi: &LieAlgebraVec,
    xidot: &LieAlgebraVec,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (e, x, scale) = normalized_value(sys, triv, s, g, xi, xidot)?;
    let k = s.kind.dim();
    let mut jac = DMatrix::zeros(e.len(), k);
    for a in 0..k {
        let mut d = DVector::zeros(k);
        d[a] = SHAPE_STEP;
        let (p, _, _) = implicit_value(sys, triv, &s.local_point(&d), g, xi, xidot, Some(&x))?;
        let (m, _, _) = implicit_value(sys, triv, &s.local_point(&-d), g, xi, xidot, Some(&x))?;
        jac.set_column(a, &((p - m) / (2.0 * SHAPE_STEP)).component_div(&scale));
    }
    Ok((e, jac))
}

fn svd_stats(j: &DMatrix<f64>) -> (f64, f64) {
    let sv = j.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    (smin, if smin > 0.0 { smax / smin } else { f64::INFINITY })
}

/// Newton on `E(s) = 0` from `guess`, without singularity screening of the
/// root. Steps are taken in the local shape chart at the current iterate.
pub fn newton_shape(
    sys: &dyn MechanicalSystem,
    triv: &Trivialization,
    g: &GroupElement,
    xi: &LieAlgebraVec,
    xidot: &LieAlgebraVec,
    guess: &ShapePoint,
) -> Result<NewtonRoot> {
    let mut s = guess.clone();
    let mut best = f64::INFINITY;
    let mut best_root: Option<NewtonRoot> = None;
    let mut polished = false;
    for it in 0..=NEWTON_MAX_ITER {
        if polished {
            // the step from a converged iterate is tiny, so the Jacobian
            // statistics carry over and only the residual is needed
            let (e, _, _) = normalized_value(sys, triv, &s, g, xi, xidot)?;
            let mut root = best_root.expect("polishing starts from a converged iterate");
            let r = e.norm();
            if r < root.residual {
                root.shape = s;
                root.residual = r;
                root.iterations = it;
            }
            return Ok(root);
        }
        let (e, j) = normalized_eval(sys, triv, &s, g, xi, xidot)?;
        let r = e.norm();
        best = best.min(r);
        let (smin, cond) = svd_stats(&j);
        if r < NEWTON_TOL && best_root.as_ref().is_none_or(|b| r < b.residual) {
            let det = if j.is_square() { j.determinant() } else { 0.0 };
            best_root = Some(NewtonRoot { shape: s.clone(), residual: r, iterations: it, normalized_det: det, condition: cond, sigma_min: smin });
        }
        // one extra step past the tolerance, then keep whichever iterate was smaller
        if r < NEWTON_TOL && (!(smin > 0.0) || !cond.is_finite()) {
            if let Some(root) = best_root {
                return Ok(root);
            }
        }
        if r < NEWTON_TOL {
            polished = true;
        }
        if !(smin > 1e-14) || !j.is_square() {
            return Err(Error::Singular { condition: cond });
        }
        let mut step = j.lu().solve(&e).ok_or(Error::Singular { condition: cond })?;
        let n = step.norm();
        if n > 0.5 {
            step *= 0.5 / n;
        }
        s = s.local_point(&-step);
    }
    if let Some(root) = best_root {
        return Ok(root);
    }
    Err(Error::NoConvergence { residual: best, iterations: NEWTON_MAX_ITER })
}

/// Spread initial guesses over the shape space, inside `domain`.
pub fn shape_guesses(kind: ShapeKind, domain: &ShapeDomain) -> Vec<ShapePoint> {
    let pts: Vec<ShapePoint> = match kind {
        ShapeKind::Angle => (0..8).map(|k| ShapePoint::angle(-std::f64::consts::PI + k as f64 * std::f64::consts::PI / 4.0)).collect(),
        ShapeKind::Sphere => {
            let mut v = vec![
                Vector3::z(),
                Vector3::x(),
                Vector3::y(),
                -Vector3::x(),
                -Vector3::y(),
                -Vector3::z(),
                Vector3::new(1.0, 1.0, 1.0),
                Vector3::new(-1.0, -1.0, -1.0),
            ];
            v.retain(|p| domain.margin(&ShapePoint::sphere(*p)) > 0.3);
            while v.len() < 8 {
                let k = v.len() as f64;
                v.push(Vector3::new(k.cos(), k.sin(), 0.3));
            }
            v.into_iter().map(ShapePoint::sphere).collect()
        }
    };
    pts.into_iter().filter(|p| domain.contains(p)).collect()
}

/// Solve the implicit dynamics for the shape.
///
/// Seeds, in order: `guess` (the previous sample), the system's closed form,
/// then a coarse grid. Roots with `cond(∂E/∂s) > 1e10` are refused.
pub fn solve_shape(
    sys: &dyn MechanicalSystem,
    triv: &Trivialization,
    g: &GroupElement,
    xi: &LieAlgebraVec,
    xidot: &LieAlgebraVec,
    guess: Option<&ShapePoint>,
) -> Result<ShapePoint> {
    let dom = triv.section.domain();
    let mut seeds: Vec<ShapePoint> = Vec::new();
    if let Some(s) = guess {
        seeds.push(s.clone());
    } else if let Some(s) = sys.closed_form_shape(g, xi, xidot) {
        if dom.contains(&s) {
            seeds.push(s);
        }
    }
    let mut last = Error::NoConvergence { residual: f64::INFINITY, iterations: 0 };
    let from_grid = guess.is_none();
    let grid = if from_grid { shape_guesses(sys.shape_kind(), &dom) } else { vec![] };
    for seed in seeds.iter().chain(grid.iter()) {
        match newton_shape(sys, triv, g, xi, xidot, seed) {
            Ok(root) => {
                if !(root.sigma_min > 1e-10) || root.condition > MAX_CONDITION {
                    return Err(Error::Singular { condition: root.condition });
                }
                return Ok(root.shape);
            }
            Err(e @ Error::Singular { .. }) => return Err(e),
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// `(q, s)` from `(y, ẏ, ÿ)`: `q = Φ_y(σ(s))`.
pub fn reconstruct(sys: &dyn MechanicalSystem, triv: &Trivialization, y: &FlatPoint, guess: Option<&ShapePoint>) -> Result<(ConfigPoint, ShapePoint)> {
    let (xi, xidot) = y.velocities();
    let s = solve_shape(sys, triv, &y.value, &xi, &xidot, guess)?;
    Ok((triv.inverse(sys, &s, &y.value)?, s))
}

/// Default time step for differentiating the reconstruction.
pub const DT_FD: f64 = 1e-4;

/// Tolerance on the out-of-range dynamics residual, relative to `max(1, ‖r‖_M)`.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// Full state and input reconstruction at time `t`.
///
/// Velocity and acceleration come from 5-point differences of
/// [`reconstruct`] over `y` Taylor-shifted to `{0, ±dt_fd, ±2 dt_fd}`.
pub fn reconstruct_full(
    sys: &dyn MechanicalSystem,
    triv: &Trivialization,
    t: f64,
    y: &FlatPoint,
    dt_fd: f64,
    guess: Option<&ShapePoint>,
) -> Result<ReconstructedSample> {
    let (q0, s0) = reconstruct(sys, triv, y, guess)?;
    let n = q0.coords.len();
    let mut dc = DVector::zeros(n);
    let mut ddc = DVector::zeros(n);
    for k in 0..5 {
        if k == 2 {
            continue;
        }
        let tau = (k as f64 - 2.0) * dt_fd;
        let (qk, _) = reconstruct(sys, triv, &y.shifted(tau)?, Some(&s0))?;
        let d = coordinate_offsets(&q0, &qk);
        dc += &d * (D1_5[k] / dt_fd);
        ddc += &d * (D2_5[k] / (dt_fd * dt_fd));
    }
    let (qdot, qddot) = sys.frame_rates(&q0, &dc, &ddc);
    let r = dynamics_residual_comps(sys, &q0, &qdot, &qddot)?;
    let m = metric_checked(sys, &q0)?;
    let f = sys.control_codistribution(&q0);
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite { at: q0.coords.iter().cloned().collect(), min_eig: 0.0 })?;
    let minv_f = chol.solve(&f);
    let normal = f.transpose() * &minv_f;
    let c = normal.clone().lu().solve(&(f.transpose() * &r)).ok_or(Error::Singular { condition: f64::INFINITY })?;
    let rem = &minv_f * &c - &r;
    let residual = (&m * &rem).dot(&rem).max(0.0).sqrt();
    let rnorm = (&m * &r).dot(&r).max(0.0).sqrt();
    if residual > FEASIBILITY_TOL * rnorm.max(1.0) {
        return Err(Error::Infeasible { t, residual });
    }
    Ok(ReconstructedSample { t, qdot: TangentVec { at: q0.clone(), comps: qdot }, q: q0, shape: s0, force_coeffs: c, residual })
}

/// Unactuated frame at `q`, for reports.
pub fn unactuated_at(sys: &dyn MechanicalSystem, q: &ConfigPoint) -> Result<DMatrix<f64>> {
    unactuated_frame(sys, q, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::GroupKind;
    use crate::systems::{Manipulator, Quadrotor, Rocket};
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn triv0(sys: &dyn MechanicalSystem) -> Trivialization {
        Trivialization::new(sys.sections()[0].clone())
    }

    #[test]
    fn rocket_flat_output_is_center_of_oscillation() {
        let sys = Rocket::default();
        let c = sys.oscillation_offset();
        let q = ConfigPoint::from_slice(sys.chart(), &[0.4, -1.3, 0.9]).unwrap();
        let y = flat_output(&sys, &triv0(&sys), &q).unwrap();
        assert_relative_eq!(y.data[0], 0.4 - c * 0.9f64.sin(), epsilon = 1e-14);
        assert_relative_eq!(y.data[1], -1.3 + c * 0.9f64.cos(), epsilon = 1e-14);
    }

    #[test]
    fn quadrotor_identity_flat_output() {
        let sys = Quadrotor::default();
        let q = ConfigPoint::se3(Vector3::zeros(), Matrix3::identity());
        let y = flat_output(&sys, &triv0(&sys), &q).unwrap();
        assert!(y.data.amax() < 1e-15);
    }

    #[test]
    fn rocket_hover_shape_and_free_fall() {
        let sys = Rocket::default();
        let t = triv0(&sys);
        let g = GroupElement::identity(GroupKind::R2);
        let z = LieAlgebraVec::zero(GroupKind::R2);
        let s = solve_shape(&sys, &t, &g, &z, &z, Some(&ShapePoint::angle(0.0))).unwrap();
        assert!(s.coords[0].abs() < 1e-12);
        let ff = LieAlgebraVec::new(GroupKind::R2, DVector::from_vec(vec![0.0, -sys.g_grav])).unwrap();
        assert!(matches!(solve_shape(&sys, &t, &g, &z, &ff, None), Err(Error::Singular { .. })));
        assert!(matches!(solve_shape(&sys, &t, &g, &z, &ff, Some(&ShapePoint::angle(0.3))), Err(Error::Singular { .. })));
    }

    #[test]
    fn newton_agrees_with_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let systems: Vec<Box<dyn MechanicalSystem>> = vec![Box::new(Rocket::default()), Box::new(Manipulator::default()), Box::new(Quadrotor::default())];
        for sys in &systems {
            let t = triv0(sys.as_ref());
            let kind = sys.group_kind();
            for _ in 0..30 {
                let g = GroupElement::random(kind, &mut rng, 3.0);
                let xi = LieAlgebraVec { kind, comps: crate::bundle::random_in_ball(kind.dim(), &mut rng, 2.0) };
                let xidot = LieAlgebraVec { kind, comps: crate::bundle::random_in_ball(kind.dim(), &mut rng, 4.0) };
                let cf = sys.closed_form_shape(&g, &xi, &xidot).unwrap();
                if !t.section.domain().contains(&cf) || t.section.domain().margin(&cf) < 0.3 {
                    continue;
                }
                // Start Newton a little off the closed form.
                let start = cf.local_point(&DVector::from_element(cf.kind.dim(), 0.1));
                let root = newton_shape(sys.as_ref(), &t, &g, &xi, &xidot, &start).unwrap();
                assert!(root.shape.distance(&cf) < 1e-9, "{}", sys.name());
            }
        }
    }

    #[test]
    fn reconstruct_constant_examples() {
        let sys = Rocket::default();
        let y = FlatPoint::at_rest(GroupElement::from_slice(GroupKind::R2, &[1.0, 2.0]).unwrap(), 4);
        let (q, _) = reconstruct(&sys, &triv0(&sys), &y, None).unwrap();
        assert_relative_eq!(q.coords, DVector::from_vec(vec![1.0, 2.0 - sys.oscillation_offset(), 0.0]), epsilon = 1e-12);

        let quad = Quadrotor::default();
        let y = FlatPoint::at_rest(GroupElement::from_slice(GroupKind::R3xS1, &[1.0, 2.0, 3.0, 0.7]).unwrap(), 4);
        let (q, _) = reconstruct(&quad, &triv0(&quad), &y, None).unwrap();
        assert!((q.position() - Vector3::new(1.0, 2.0, 3.0)).amax() < 1e-12);
        assert!((q.rotation() - crate::linalg::rot_z(0.7)).amax() < 1e-12);
    }

    #[test]
    fn hover_forces() {
        let sys = Rocket::default();
        let y = FlatPoint::at_rest(GroupElement::from_slice(GroupKind::R2, &[1.0, 2.0]).unwrap(), 4);
        let r = reconstruct_full(&sys, &triv0(&sys), 0.0, &y, DT_FD, None).unwrap();
        assert!((r.force_coeffs - DVector::from_vec(vec![0.0, sys.m * sys.g_grav])).amax() < 1e-10);

        let quad = Quadrotor::default();
        let y = FlatPoint::at_rest(GroupElement::from_slice(GroupKind::R3xS1, &[1.0, 2.0, 3.0, 0.7]).unwrap(), 4);
        let r = reconstruct_full(&quad, &triv0(&quad), 0.0, &y, DT_FD, None).unwrap();
        assert!((r.force_coeffs - DVector::from_vec(vec![quad.m * quad.g_grav, 0.0, 0.0, 0.0])).amax() < 1e-10);
    }

    #[test]
    fn taylor_shift_of_polynomial_is_exact() {
        let g = GroupElement::from_slice(GroupKind::R2, &[1.0, 2.0]).unwrap();
        let y = FlatPoint { value: g, derivs: vec![DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, 2.0])] };
        let s = y.shifted(0.5).unwrap();
        assert_relative_eq!(s.value.data, DVector::from_vec(vec![1.5, 2.25]), epsilon = 1e-15);
        assert_relative_eq!(s.derivs[0], DVector::from_vec(vec![1.0, 1.0]), epsilon = 1e-15);
    }
}
