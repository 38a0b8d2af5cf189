//! Unactuated subbundle, underactuation distribution, and the conditions
//! under which a trivialization's group part is a flat output.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bundle::{
    group_rates, random_in_ball, GroupElement, LieAlgebraVec, ShapePoint, Trivialization,
};
use crate::error::{Error, Result};
use crate::flatmap::{newton_shape, shape_guesses};
use crate::geometry::{
    covariant_derivative, frame_from_local_rate, metric_checked, potential_differential, ConfigPoint, TangentVec,
};
use crate::linalg::{column_span, hstack, orthonormalize, rank, subspace_sine, RANK_TOL};
use crate::model::{coordinate_offsets, MechanicalSystem, Section};
use crate::sampling::{par_samples, random_shape};

/// A pointwise basis of a distribution.
#[derive(Debug, Clone)]
pub struct DistributionSample {
    pub at: ConfigPoint,
    pub basis: Vec<TangentVec>,
}

impl DistributionSample {
    fn from_matrix(at: &ConfigPoint, m: &DMatrix<f64>) -> Self {
        let basis = (0..m.ncols()).map(|j| TangentVec { at: at.clone(), comps: m.column(j).into_owned() }).collect();
        Self { at: at.clone(), basis }
    }

    /// Basis vectors as columns.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.at.dim();
        if self.basis.is_empty() {
            return DMatrix::zeros(n, 0);
        }
        DMatrix::from_columns(&self.basis.iter().map(|v| v.comps.clone()).collect::<Vec<_>>())
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}

/// `E(s)` and `∂E/∂s` in the local shape chart centered at `s`.
#[derive(Debug, Clone)]
pub struct ImplicitDynamicsEval {
    pub value: DVector<f64>,
    pub jacobian_shape: DMatrix<f64>,
}

fn check_rank(sys: &dyn MechanicalSystem, q: &ConfigPoint) -> Result<DMatrix<f64>> {
    let f = sys.control_codistribution(q);
    // Gershgorin bound on the Gram matrix settles the common well-conditioned case
    let gram = f.transpose() * &f;
    let floor = 1e-12 * gram.trace();
    if (0..gram.nrows()).all(|i| gram[(i, i)] - (0..gram.ncols()).filter(|&j| j != i).map(|j| gram[(i, j)].abs()).sum::<f64>() > floor) {
        return Ok(f);
    }
    let r = rank(&f, RANK_TOL);
    if r < f.ncols() {
        return Err(Error::RankDrop { expected: f.ncols(), found: r });
    }
    Ok(f)
}

/// Frame of `UQ` at `q`. Without a closed form, continues `reference`
/// (a frame at a nearby point) by projection onto the nullspace of `Fᵀ`.
pub fn unactuated_frame(sys: &dyn MechanicalSystem, q: &ConfigPoint, reference: Option<&DMatrix<f64>>) -> Result<DMatrix<f64>> {
    let f = check_rank(sys, q)?;
    if let Some(x) = sys.unactuated_frame(q) {
        return Ok(x);
    }
    let null = crate::linalg::nullspace(&f.transpose(), RANK_TOL);
    match reference {
        Some(r) if r.ncols() == null.ncols() => Ok(orthonormalize(&(&null * (null.transpose() * r)))),
        _ => Ok(null),
    }
}

/// Basis of the unactuated subbundle `UQ = ann F`.
pub fn unactuated_basis(sys: &dyn MechanicalSystem, q: &ConfigPoint) -> Result<DistributionSample> {
    Ok(DistributionSample::from_matrix(q, &unactuated_frame(sys, q, None)?))
}

/// `Δ = span{X, ∇_Y X}` for a smooth frame `X` of `UQ` and frame fields `Y`.
pub fn underactuation_distribution(sys: &dyn MechanicalSystem, q: &ConfigPoint) -> Result<DistributionSample> {
    Ok(DistributionSample::from_matrix(q, &delta_matrix(sys, q)?))
}

fn delta_matrix(sys: &dyn MechanicalSystem, q: &ConfigPoint) -> Result<DMatrix<f64>> {
    let x0 = unactuated_frame(sys, q, None)?;
    let n = q.dim();
    let mut cols: Vec<DVector<f64>> = (0..x0.ncols()).map(|i| x0.column(i).into_owned()).collect();
    for i in 0..x0.ncols() {
        for j in 0..n {
            let mut y = DVector::zeros(n);
            y[j] = 1.0;
            let field = |p: &ConfigPoint| unactuated_frame(sys, p, Some(&x0)).map(|x| x.column(i).into_owned());
            cols.push(covariant_derivative(sys, q, &y, field)?);
        }
    }
    if cols.is_empty() {
        return Ok(DMatrix::zeros(n, 0));
    }
    Ok(column_span(&DMatrix::from_columns(&cols), RANK_TOL))
}

/// Generic rank of `F`: the largest rank seen at a few fixed configurations.
pub fn generic_control_rank(sys: &dyn MechanicalSystem) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    (0..8).map(|_| rank(&sys.control_codistribution(&sys.random_config(&mut rng)), RANK_TOL)).max().unwrap_or(0)
}

/// Necessary condition `dim G = rank F`.
pub fn check_dim_condition(sys: &dyn MechanicalSystem) -> bool {
    sys.group_kind().dim() == generic_control_rank(sys)
}

/// `Tσ` of the local shape-chart coordinate vectors, by central differences.
pub fn section_tangents(sys: &dyn MechanicalSystem, section: &dyn Section, s: &ShapePoint) -> DMatrix<f64> {
    const H: f64 = 1e-6;
    let q = section.eval(s);
    let k = s.kind.dim();
    let cols: Vec<DVector<f64>> = (0..k)
        .map(|a| {
            let mut e = DVector::zeros(k);
            e[a] = H;
            let plus = sys.local_coords(&q, &section.eval(&s.local_point(&e)));
            let minus = sys.local_coords(&q, &section.eval(&s.local_point(&-e)));
            frame_from_local_rate(sys, &q, &((plus - minus) / (2.0 * H)))
        })
        .collect();
    DMatrix::from_columns(&cols)
}

fn max_normalized_inner(m: &DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.ncols() {
        let u = a.column(i);
        let nu = (m * u).dot(&u).sqrt();
        for j in 0..b.ncols() {
            let v = b.column(j);
            let nv = (m * v).dot(&v).sqrt();
            if nu > 0.0 && nv > 0.0 {
                worst = worst.max(((m * v).dot(&u) / (nu * nv)).abs());
            }
        }
    }
    worst
}

/// Largest normalized `|⟨Tσ(∂_α), δ⟩_M|` at `Φ_g(σ(s))`.
pub fn orthogonality_at(sys: &dyn MechanicalSystem, section: &dyn Section, s: &ShapePoint, g: &GroupElement) -> Result<f64> {
    if !section.domain().contains(s) {
        return Err(Error::ChartExcluded { section: section.name().into(), shape: s.coords.iter().cloned().collect() });
    }
    let base = section.eval(s);
    let t = section_tangents(sys, section, s);
    let t = DMatrix::from_columns(&(0..t.ncols()).map(|a| sys.push_forward(g, &base, &t.column(a).into_owned())).collect::<Vec<_>>());
    let q = sys.act(g, &base);
    let delta = delta_matrix(sys, &q)?;
    Ok(max_normalized_inner(&metric_checked(sys, &q)?, &t, &delta))
}

/// Margin kept from a section's excluded set when sampling.
pub const SAMPLE_MARGIN: f64 = 1e-3;

/// Condition I: max residual of `Δ ⊥ Tσ` over `n_samples` random shapes.
pub fn check_orthogonality(sys: &dyn MechanicalSystem, section: &dyn Section, n_samples: usize, seed: u64) -> Result<f64> {
    let dom = section.domain();
    let kind = sys.shape_kind();
    let id = GroupElement::identity(sys.group_kind());
    let res = par_samples(n_samples, seed, |_, rng| {
        let s = random_shape(kind, &dom, SAMPLE_MARGIN, rng);
        orthogonality_at(sys, section, &s, &id)
    });
    res.into_iter().try_fold(0.0f64, |acc, r| Ok(acc.max(r?)))
}

/// Subspace distance between `TΦ_g Δ_q` and `Δ_{g·q}`.
pub fn delta_equivariance_at(sys: &dyn MechanicalSystem, q: &ConfigPoint, g: &GroupElement) -> Result<f64> {
    let d = delta_matrix(sys, q)?;
    let pushed = hstack(d.nrows(), &(0..d.ncols()).map(|j| sys.push_forward(g, q, &d.column(j).into_owned())).collect::<Vec<_>>());
    let other = delta_matrix(sys, &sys.act(g, q))?;
    if pushed == other {
        return Ok(0.0);
    }
    Ok(subspace_sine(&pushed, &other))
}

/// Max principal-angle sine between `TΦ_g(Δ_q)` and `Δ_{g·q}` over random `(g, q)`.
pub fn check_delta_equivariance(sys: &dyn MechanicalSystem, n_samples: usize, seed: u64) -> Result<f64> {
    let kind = sys.group_kind();
    let res = par_samples(n_samples, seed, |_, rng| {
        let q = sys.random_config(rng);
        let g = GroupElement::random(kind, rng, 3.0);
        delta_equivariance_at(sys, &q, &g)
    });
    res.into_iter().try_fold(0.0f64, |acc, r| Ok(acc.max(r?)))
}

/// Per-component scale of `E`: `‖X_i‖_M · sqrt(λmax M) · g`.
pub fn implicit_scale(sys: &dyn MechanicalSystem, q: &ConfigPoint, x: &DMatrix<f64>) -> DVector<f64> {
    let m = sys.metric(q);
    let lmax = m.clone().symmetric_eigenvalues().amax();
    let acc = lmax.sqrt() * sys.gravity().max(1.0);
    DVector::from_fn(x.ncols(), |i, _| {
        let c = x.column(i);
        (&m * c).dot(&c).sqrt() * acc
    })
}

/// `⟨X_i, ξ̇^a V_a + ξ^a ξ^b ∇_{V_a} V_b + grad P⟩` at `q` with frame `x`.
fn implicit_at(sys: &dyn MechanicalSystem, q: &ConfigPoint, x: &DMatrix<f64>, xi: &LieAlgebraVec, xidot: &LieAlgebraVec) -> Result<DVector<f64>> {
    let vq = sys.generator(xi, q);
    let mut acc = sys.generator(xidot, q);
    if xi.comps.amax() > 0.0 {
        acc += covariant_derivative(sys, q, &vq, |p| Ok(sys.generator(xi, p)))?;
    }
    let m = metric_checked(sys, q)?;
    let rhs = &m * acc + potential_differential(sys, q);
    Ok(x.transpose() * rhs)
}

/// Shape-independent implicit dynamics `E(s; g, ξ, ξ̇)` at `q = Φ_g(σ(s))`,
/// without the Jacobian.
pub fn implicit_value(
    sys: &dyn MechanicalSystem,
    triv: &Trivialization,
    s: &ShapePoint,
    g: &GroupElement,
    xi: &LieAlgebraVec,
    xidot: &LieAlgebraVec,
    reference: Option<&DMatrix<f64>>,
) -> Result<(DVector<f64>, DMatrix<f64>, ConfigPoint)> {
    let q = triv.inverse(sys, s, g)?;
    let x = unactuated_frame(sys, &q, reference)?;
    let e = implicit_at(sys, &q, &x, xi, xidot)?;
    Ok((e, x, q))
}

/// Finite-difference step in local shape coordinates.
pub const SHAPE_STEP: f64 = 1e-6;

/// `E` and `∂E/∂s` (central differences in the local shape chart at `s`).
pub fn implicit_dynamics(
    sys: &dyn MechanicalSystem,
    triv: &Trivialization,
    s: &ShapePoint,
    g: &GroupElement,
    xi: &LieAlgebraVec,
    xidot: &LieAlgebraVec,
) -> Result<ImplicitDynamicsEval> {
    let (value, x, _) = implicit_value(sys, triv, s, g, xi, xidot, None)?;
    let k = s.kind.dim();
    let mut jac = DMatrix::zeros(value.len(), k);
    for a in 0..k {
        let mut e = DVector::zeros(k);
        e[a] = SHAPE_STEP;
        let (p, _, _) = implicit_value(sys, triv, &s.local_point(&e), g, xi, xidot, Some(&x))?;
        let (m, _, _) = implicit_value(sys, triv, &s.local_point(&-e), g, xi, xidot, Some(&x))?;
        jac.set_column(a, &((p - m) / (2.0 * SHAPE_STEP)));
    }
    Ok(ImplicitDynamicsEval { value, jacobian_shape: jac })
}

/// Projection of the forced geodesic equation onto `UQ` along the curve
/// `t ↦ Φ_{g(t)}(σ(s(t)))`, with `ṡ`, `s̈` in the local shape chart at `s`
/// and `(g, ξ, ξ̇)` fixing the group part to second order.
#[allow(clippy::too_many_arguments)]
pub fn implicit_dynamics_full(
    sys: &dyn MechanicalSystem,
    triv: &Trivialization,
    s: &ShapePoint,
    sdot: &DVector<f64>,
    sddot: &DVector<f64>,
    g: &GroupElement,
    xi: &LieAlgebraVec,
    xidot: &LieAlgebraVec,
) -> Result<DVector<f64>> {
    const H: f64 = 2e-3;
    let (gd, gdd) = group_rates(g, xi, xidot);
    let curve = |t: f64| -> Result<ConfigPoint> {
        let gt = GroupElement::new(g.kind, &g.data + &gd * t + &gdd * (0.5 * t * t))?;
        let st = s.local_point(&(sdot * t + sddot * (0.5 * t * t)));
        triv.inverse(sys, &st, &gt)
    };
    let q0 = curve(0.0)?;
    let rates = |h: f64| -> Result<(DVector<f64>, DVector<f64>)> {
        let n = q0.coords.len();
        let mut dc = DVector::zeros(n);
        let mut ddc = DVector::zeros(n);
        for k in 0..5 {
            let d = coordinate_offsets(&q0, &curve((k as f64 - 2.0) * h)?);
            dc += &d * (crate::linalg::D1_5[k] / h);
            ddc += &d * (crate::linalg::D2_5[k] / (h * h));
        }
        Ok((dc, ddc))
    };
    // Richardson step on the h^4 truncation term.
    let (d1, dd1) = rates(H)?;
    let (d2, dd2) = rates(H / 2.0)?;
    let dc = (d2 * 16.0 - d1) / 15.0;
    let ddc = (dd2 * 16.0 - dd1) / 15.0;
    let (qdot, qddot) = sys.frame_rates(&q0, &dc, &ddc);
    let r = crate::geometry::dynamics_residual_comps(sys, &q0, &qdot, &qddot)?;
    let x = unactuated_frame(sys, &q0, None)?;
    Ok(x.transpose() * metric_checked(sys, &q0)? * r)
}

/// A sampled `(g, ξ, ξ̇)` tuple with a root `s` of the implicit dynamics.
#[derive(Debug, Clone, Serialize)]
pub struct RootSample {
    pub g: Vec<f64>,
    pub xi: Vec<f64>,
    pub xidot: Vec<f64>,
    pub shape: Vec<f64>,
    /// `|det ∂E/∂s|` after normalizing rows by their scale.
    pub det: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub samples: usize,
    pub roots: usize,
    /// Samples for which no root was found.
    pub skipped: usize,
    /// Fraction of roots with `|det| > 1e-8`.
    pub generic_fraction: f64,
    pub singular_samples: Vec<RootSample>,
}

/// Normalized-Jacobian determinant threshold for regularity.
pub const REGULARITY_TOL: f64 = 1e-8;

/// Roots of `E(·; g, ξ, ξ̇)` reachable from the spread seeds, each with its
/// normalized Jacobian determinant.
pub fn roots_with_det(
    sys: &dyn MechanicalSystem,
    triv: &Trivialization,
    g: &GroupElement,
    xi: &LieAlgebraVec,
    xidot: &LieAlgebraVec,
) -> Vec<(ShapePoint, f64)> {
    let mut roots: Vec<(ShapePoint, f64)> = Vec::new();
    for guess in shape_guesses(sys.shape_kind(), &triv.section.domain()) {
        let Ok(root) = newton_shape(sys, triv, g, xi, xidot, &guess) else { continue };
        if roots.iter().any(|(r, _)| r.distance(&root.shape) < 1e-6) {
            continue;
        }
        roots.push((root.shape, root.normalized_det));
    }
    roots
}

/// Whether any root of the tuple has a degenerate Jacobian (or `E ≡ 0`).
pub fn is_singular_tuple(
    sys: &dyn MechanicalSystem,
    triv: &Trivialization,
    g: &GroupElement,
    xi: &LieAlgebraVec,
    xidot: &LieAlgebraVec,
) -> bool {
    roots_with_det(sys, triv, g, xi, xidot).iter().any(|(_, d)| d.abs() <= REGULARITY_TOL)
}

/// Condition II: fraction of sampled roots at which `∂E/∂s` is nonsingular.
pub fn check_regularity(sys: &dyn MechanicalSystem, triv: &Trivialization, n_samples: usize, seed: u64) -> RegularityReport {
    let kind = sys.group_kind();
    let per = par_samples(n_samples, seed, |_, rng| {
        let g = GroupElement::random(kind, rng, 10.0);
        let xi = LieAlgebraVec { kind, comps: random_in_ball(kind.dim(), rng, 10.0) };
        let xidot = LieAlgebraVec { kind, comps: random_in_ball(kind.dim(), rng, 10.0) };
        let roots = roots_with_det(sys, triv, &g, &xi, &xidot);
        roots
            .into_iter()
            .map(|(s, det)| RootSample {
                g: g.data.iter().cloned().collect(),
                xi: xi.comps.iter().cloned().collect(),
                xidot: xidot.comps.iter().cloned().collect(),
                shape: s.coords.iter().cloned().collect(),
                det,
            })
            .collect::<Vec<_>>()
    });
    let skipped = per.iter().filter(|r| r.is_empty()).count();
    let all: Vec<RootSample> = per.into_iter().flatten().collect();
    let generic = all.iter().filter(|r| r.det.abs() > REGULARITY_TOL).count();
    RegularityReport {
        samples: n_samples,
        roots: all.len(),
        skipped,
        generic_fraction: if all.is_empty() { 0.0 } else { generic as f64 / all.len() as f64 },
        singular_samples: all.into_iter().filter(|r| r.det.abs() <= REGULARITY_TOL).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::GroupKind;
    use crate::systems::{Manipulator, Quadrotor, Rocket};
    use approx::assert_relative_eq;
    use nalgebra::{Matrix3, Vector3};
    use std::f64::consts::PI;

    #[test]
    fn rocket_unactuated_examples() {
        let sys = Rocket::default();
        let q = ConfigPoint::from_slice(sys.chart(), &[0.0, 0.0, 0.0]).unwrap();
        let u = unactuated_basis(&sys, &q).unwrap().matrix();
        assert!(subspace_sine(&u, &DMatrix::from_column_slice(3, 1, &[-sys.r, 0.0, 1.0])) < 1e-12);
        let q = ConfigPoint::from_slice(sys.chart(), &[0.0, 0.0, PI / 2.0]).unwrap();
        let u = unactuated_basis(&sys, &q).unwrap().matrix();
        assert!(subspace_sine(&u, &DMatrix::from_column_slice(3, 1, &[0.0, -sys.r, 1.0])) < 1e-12);
    }

    #[test]
    fn fully_actuated_rocket_has_empty_uq() {
        let sys = Rocket { force_columns: 3, ..Rocket::default() };
        let q = ConfigPoint::from_slice(sys.chart(), &[0.0, 0.0, 0.4]).unwrap();
        assert_eq!(unactuated_basis(&sys, &q).unwrap().dim(), 0);
        assert!(!check_dim_condition(&sys));
    }

    #[test]
    fn quadrotor_unactuated_and_delta() {
        let sys = Quadrotor::default();
        let q = ConfigPoint::se3(Vector3::new(1.0, 2.0, 3.0), crate::linalg::so3_exp(&Vector3::new(0.3, -0.2, 0.5)));
        let u = unactuated_basis(&sys, &q).unwrap().matrix();
        let mut e12 = DMatrix::zeros(6, 2);
        e12[(0, 0)] = 1.0;
        e12[(1, 1)] = 1.0;
        assert!(subspace_sine(&u, &e12) < 1e-12);
        let d = underactuation_distribution(&sys, &q).unwrap().matrix();
        let mut e123 = DMatrix::zeros(6, 3);
        for k in 0..3 {
            e123[(k, k)] = 1.0;
        }
        assert!(subspace_sine(&d, &e123) < 1e-10);
    }

    #[test]
    fn rocket_delta_matches_display() {
        let sys = Rocket::default();
        for th in [0.0, 0.7, -2.0, 3.0] {
            let q = ConfigPoint::from_slice(sys.chart(), &[0.3, -1.0, th]).unwrap();
            let d = underactuation_distribution(&sys, &q).unwrap().matrix();
            let (s, c) = f64::sin_cos(th);
            let want = DMatrix::from_column_slice(3, 2, &[-sys.r * c, -sys.r * s, 1.0, sys.r * s, -sys.r * c, 0.0]);
            assert!(subspace_sine(&d, &want) < 1e-10);
        }
    }

    #[test]
    fn manipulator_delta_is_translations() {
        let sys = Manipulator::default();
        let q = ConfigPoint::from_slice(sys.chart(), &[0.3, -1.0, 0.4, 1.1]).unwrap();
        let d = underactuation_distribution(&sys, &q).unwrap().matrix();
        let want = DMatrix::from_column_slice(4, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(subspace_sine(&d, &want) < 1e-10);
    }

    #[test]
    fn continuation_frame_matches_closed_form_delta() {
        // Same system without the closed-form UQ frame.
        #[derive(Debug)]
        struct Plain(Manipulator);
        impl MechanicalSystem for Plain {
            fn name(&self) -> &str { "plain" }
            fn chart(&self) -> &'static crate::geometry::Chart { self.0.chart() }
            fn group_kind(&self) -> GroupKind { self.0.group_kind() }
            fn shape_kind(&self) -> crate::bundle::ShapeKind { self.0.shape_kind() }
            fn params(&self) -> Vec<(String, f64)> { vec![] }
            fn gravity(&self) -> f64 { self.0.g_grav }
            fn metric(&self, q: &ConfigPoint) -> DMatrix<f64> { self.0.metric(q) }
            fn potential(&self, q: &ConfigPoint) -> f64 { self.0.potential(q) }
            fn control_codistribution(&self, q: &ConfigPoint) -> DMatrix<f64> { self.0.control_codistribution(q) }
            fn act(&self, g: &GroupElement, q: &ConfigPoint) -> ConfigPoint { self.0.act(g, q) }
            fn push_forward(&self, g: &GroupElement, q: &ConfigPoint, v: &DVector<f64>) -> DVector<f64> { self.0.push_forward(g, q, v) }
            fn generator(&self, xi: &LieAlgebraVec, q: &ConfigPoint) -> DVector<f64> { self.0.generator(xi, q) }
            fn project(&self, q: &ConfigPoint) -> ShapePoint { self.0.project(q) }
            fn project_velocity(&self, q: &ConfigPoint, v: &DVector<f64>) -> DVector<f64> { self.0.project_velocity(q, v) }
            fn relative_group(&self, b: &ConfigPoint, q: &ConfigPoint) -> GroupElement { self.0.relative_group(b, q) }
            fn sections(&self) -> Vec<crate::model::SectionMap> { self.0.sections() }
            fn random_config(&self, rng: &mut dyn rand::RngCore) -> ConfigPoint { self.0.random_config(rng) }
        }
        let plain = Plain(Manipulator::default());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let q = plain.random_config(&mut rng);
            let a = underactuation_distribution(&plain, &q).unwrap().matrix();
            let b = underactuation_distribution(&plain.0, &q).unwrap().matrix();
            assert!(subspace_sine(&a, &b) < 1e-8);
        }
    }

    #[test]
    fn uq_annihilated_by_forces() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let systems: Vec<Box<dyn MechanicalSystem>> = vec![Box::new(Rocket::default()), Box::new(Manipulator::default()), Box::new(Quadrotor::default())];
        for sys in &systems {
            for _ in 0..50 {
                let q = sys.random_config(&mut rng);
                let u = unactuated_basis(sys.as_ref(), &q).unwrap().matrix();
                assert!((sys.control_codistribution(&q).transpose() * u).amax() < 1e-10);
            }
        }
    }

    #[test]
    fn dim_condition_examples() {
        assert!(check_dim_condition(&Rocket::default()));
        assert!(check_dim_condition(&Quadrotor::default()));
        assert!(check_dim_condition(&Manipulator::default()));
        assert!(!check_dim_condition(&Rocket { force_columns: 1, ..Rocket::default() }));
    }

    #[test]
    fn rocket_orthogonality_and_tamper() {
        let sys = Rocket::default();
        let sec = sys.section();
        assert!(check_orthogonality(&sys, &sec, 50, 1).unwrap() < 1e-9);
        let bad = Rocket { section_offset: Some(2.0 * sys.oscillation_offset()), ..Rocket::default() };
        assert!(check_orthogonality(&bad, &bad.section(), 50, 1).unwrap() > 1e-2);
    }

    #[test]
    fn identity_equivariance_is_exact() {
        let sys = Manipulator::default();
        let q = ConfigPoint::from_slice(sys.chart(), &[0.3, -1.0, 0.4, 1.1]).unwrap();
        assert_eq!(delta_equivariance_at(&sys, &q, &GroupElement::identity(GroupKind::SE2)).unwrap(), 0.0);
    }

    #[test]
    fn rocket_implicit_dynamics_oracle() {
        let sys = Rocket::default();
        let triv = Trivialization::new(sys.sections()[0].clone());
        let g = GroupElement::from_slice(GroupKind::R2, &[1.0, -3.0]).unwrap();
        let xi = LieAlgebraVec::new(GroupKind::R2, DVector::from_vec(vec![0.4, -0.2])).unwrap();
        for (a1, a2, th) in [(0.0, 0.0, 0.3), (1.5, -2.0, -1.2), (-0.7, 4.0, 2.5)] {
            let xidot = LieAlgebraVec::new(GroupKind::R2, DVector::from_vec(vec![a1, a2])).unwrap();
            let s = ShapePoint::angle(th);
            let ev = implicit_dynamics(&sys, &triv, &s, &g, &xi, &xidot).unwrap();
            let e = -sys.m * sys.r * (th.cos() * a1 + th.sin() * (a2 + sys.g_grav));
            assert_relative_eq!(ev.value[0], e, epsilon = 1e-10);
            let de = -sys.m * sys.r * (-th.sin() * a1 + th.cos() * (a2 + sys.g_grav));
            assert_relative_eq!(ev.jacobian_shape[(0, 0)], de, epsilon = 1e-7);
        }
    }

    #[test]
    fn quadrotor_hover_implicit_dynamics_vanish() {
        let sys = Quadrotor::default();
        let triv = Trivialization::new(sys.sections()[0].clone());
        let z = LieAlgebraVec::zero(GroupKind::R3xS1);
        let ev = implicit_dynamics(&sys, &triv, &ShapePoint::sphere(Vector3::z()), &GroupElement::identity(GroupKind::R3xS1), &z, &z).unwrap();
        assert!(ev.value.amax() < 1e-12);
        let _ = Matrix3::<f64>::identity();
    }

    #[test]
    fn full_form_matches_reduced_for_orthogonal_sections() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let systems: Vec<Box<dyn MechanicalSystem>> = vec![Box::new(Rocket::default()), Box::new(Manipulator::default()), Box::new(Quadrotor::default())];
        for sys in &systems {
            let triv = Trivialization::new(sys.sections()[0].clone());
            let kind = sys.group_kind();
            for i in 0..10 {
                let mut r = crate::sampling::sample_rng(13, i);
                let s = random_shape(sys.shape_kind(), &triv.section.domain(), 0.3, &mut r);
                let g = GroupElement::random(kind, &mut rng, 3.0);
                let xi = LieAlgebraVec { kind, comps: random_in_ball(kind.dim(), &mut rng, 2.0) };
                let xidot = LieAlgebraVec { kind, comps: random_in_ball(kind.dim(), &mut rng, 2.0) };
                let k = s.kind.dim();
                let sd = random_in_ball(k, &mut rng, 1.5);
                let sdd = random_in_ball(k, &mut rng, 1.5);
                let full = implicit_dynamics_full(sys.as_ref(), &triv, &s, &sd, &sdd, &g, &xi, &xidot).unwrap();
                let red = implicit_dynamics(sys.as_ref(), &triv, &s, &g, &xi, &xidot).unwrap().value;
                assert!((full - red).amax() < 1e-7, "{}", sys.name());
            }
        }
    }

    #[test]
    fn tampered_section_depends_on_shape_rates() {
        let sys = Rocket { section_offset: Some(0.0), ..Rocket::default() };
        let triv = Trivialization::new(sys.sections()[0].clone());
        let kind = GroupKind::R2;
        let g = GroupElement::identity(kind);
        let z = LieAlgebraVec::zero(kind);
        let s = ShapePoint::angle(0.4);
        let full = implicit_dynamics_full(&sys, &triv, &s, &DVector::from_element(1, 0.0), &DVector::from_element(1, 2.0), &g, &z, &z).unwrap();
        let red = implicit_dynamics(&sys, &triv, &s, &g, &z, &z).unwrap().value;
        assert!((full - red).amax() > 1e-2);
    }
}
