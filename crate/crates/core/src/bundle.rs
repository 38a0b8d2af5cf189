//! Principal-bundle structure: symmetry groups, shape points, sections,
//! trivializations and the split of velocities into vertical (group) and
//! horizontal (shape) parts.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2, Vector3};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ConfigPoint, TangentVec};
use crate::linalg::{angle_diff, wrap_angle};
use crate::model::{MechanicalSystem, SectionMap};

/// The three symmetry groups the built-in systems use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupKind {
    /// Planar translations.
    R2,
    /// Planar rigid motions `(x, y, angle)`.
    SE2,
    /// Spatial translations plus a rotation angle.
    R3xS1,
}

impl GroupKind {
    pub fn dim(self) -> usize {
        match self {
            GroupKind::R2 => 2,
            GroupKind::SE2 => 3,
            GroupKind::R3xS1 => 4,
        }
    }

    /// Which components are angles.
    pub fn angle_mask(self) -> &'static [bool] {
        match self {
            GroupKind::R2 => &[false, false],
            GroupKind::SE2 => &[false, false, true],
            GroupKind::R3xS1 => &[false, false, false, true],
        }
    }

    pub fn basis(self, a: usize) -> LieAlgebraVec {
        let mut c = DVector::zeros(self.dim());
        c[a] = 1.0;
        LieAlgebraVec { kind: self, comps: c }
    }
}

fn rot2(a: f64) -> Matrix2<f64> {
    let (s, c) = a.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Group element in minimal coordinates, angles wrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    pub kind: GroupKind,
    pub data: DVector<f64>,
}

/// Element of the Lie algebra in the basis `e_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct LieAlgebraVec {
    pub kind: GroupKind,
    pub comps: DVector<f64>,
}

impl LieAlgebraVec {
    pub fn new(kind: GroupKind, comps: DVector<f64>) -> Result<Self> {
        if comps.len() != kind.dim() {
            return Err(Error::DimensionMismatch { expected: kind.dim(), found: comps.len() });
        }
        Ok(Self { kind, comps })
    }

    pub fn zero(kind: GroupKind) -> Self {
        Self { kind, comps: DVector::zeros(kind.dim()) }
    }
}

impl GroupElement {
    pub fn new(kind: GroupKind, mut data: DVector<f64>) -> Result<Self> {
        if data.len() != kind.dim() {
            return Err(Error::DimensionMismatch { expected: kind.dim(), found: data.len() });
        }
        for (i, a) in kind.angle_mask().iter().enumerate() {
            if *a {
                data[i] = wrap_angle(data[i]);
            }
        }
        Ok(Self { kind, data })
    }

    pub fn from_slice(kind: GroupKind, d: &[f64]) -> Result<Self> {
        Self::new(kind, DVector::from_column_slice(d))
    }

    pub fn identity(kind: GroupKind) -> Self {
        Self { kind, data: DVector::zeros(kind.dim()) }
    }

    /// Group product `self · other`.
    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        assert_eq!(self.kind, other.kind, "composing elements of different groups");
        let d = match self.kind {
            GroupKind::R2 | GroupKind::R3xS1 => &self.data + &other.data,
            GroupKind::SE2 => {
                let t = Vector2::new(self.data[0], self.data[1]) + rot2(self.data[2]) * Vector2::new(other.data[0], other.data[1]);
                DVector::from_vec(vec![t.x, t.y, self.data[2] + other.data[2]])
            }
        };
        GroupElement::new(self.kind, d).expect("dimension preserved")
    }

    pub fn inverse(&self) -> GroupElement {
        let d = match self.kind {
            GroupKind::R2 | GroupKind::R3xS1 => -&self.data,
            GroupKind::SE2 => {
                let t = -(rot2(-self.data[2]) * Vector2::new(self.data[0], self.data[1]));
                DVector::from_vec(vec![t.x, t.y, -self.data[2]])
            }
        };
        GroupElement::new(self.kind, d).expect("dimension preserved")
    }

    /// Group exponential.
    pub fn exp(xi: &LieAlgebraVec) -> GroupElement {
        let d = match xi.kind {
            GroupKind::R2 | GroupKind::R3xS1 => xi.comps.clone(),
            GroupKind::SE2 => {
                let w = xi.comps[2];
                let (a, b) = if w.abs() < 1e-8 { (1.0 - w * w / 6.0, w / 2.0) } else { (w.sin() / w, (1.0 - w.cos()) / w) };
                let v = Matrix2::new(a, -b, b, a) * Vector2::new(xi.comps[0], xi.comps[1]);
                DVector::from_vec(vec![v.x, v.y, w])
            }
        };
        GroupElement::new(xi.kind, d).expect("dimension preserved")
    }

    /// Random element with minimal coordinates uniform in a ball of the
    /// given radius.
    pub fn random(kind: GroupKind, rng: &mut dyn RngCore, radius: f64) -> GroupElement {
        GroupElement::new(kind, random_in_ball(kind.dim(), rng, radius)).expect("dimension preserved")
    }

    /// Euclidean distance on vector components, shortest angular distance
    /// on angle components, combined in quadrature.
    pub fn distance(&self, other: &GroupElement) -> f64 {
        self.kind
            .angle_mask()
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let d = if *a { angle_diff(self.data[i], other.data[i]) } else { self.data[i] - other.data[i] };
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Uniform sample in the `n`-ball of radius `radius`.
pub fn random_in_ball(n: usize, rng: &mut dyn RngCore, radius: f64) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        if v.norm_squared() <= 1.0 {
            return v * radius;
        }
    }
}

/// Spatial velocity `ξ = ġ g⁻¹` from coordinate rates.
pub fn spatial_velocity(g: &GroupElement, gdot: &DVector<f64>) -> LieAlgebraVec {
    let comps = match g.kind {
        GroupKind::R2 | GroupKind::R3xS1 => gdot.clone(),
        GroupKind::SE2 => DVector::from_vec(vec![gdot[0] + gdot[2] * g.data[1], gdot[1] - gdot[2] * g.data[0], gdot[2]]),
    };
    LieAlgebraVec { kind: g.kind, comps }
}

/// Time derivative of the spatial velocity from coordinate rates.
pub fn spatial_acceleration(g: &GroupElement, gdot: &DVector<f64>, gddot: &DVector<f64>) -> LieAlgebraVec {
    let comps = match g.kind {
        GroupKind::R2 | GroupKind::R3xS1 => gddot.clone(),
        GroupKind::SE2 => DVector::from_vec(vec![
            gddot[0] + gddot[2] * g.data[1] + gdot[2] * gdot[1],
            gddot[1] - gddot[2] * g.data[0] - gdot[2] * gdot[0],
            gddot[2],
        ]),
    };
    LieAlgebraVec { kind: g.kind, comps }
}

/// Inverse of [`spatial_velocity`] / [`spatial_acceleration`]: coordinate
/// rates `(ġ, g̈)` from `(ξ, ξ̇)`.
pub fn group_rates(g: &GroupElement, xi: &LieAlgebraVec, xidot: &LieAlgebraVec) -> (DVector<f64>, DVector<f64>) {
    match g.kind {
        GroupKind::R2 | GroupKind::R3xS1 => (xi.comps.clone(), xidot.comps.clone()),
        GroupKind::SE2 => {
            let (x, y) = (g.data[0], g.data[1]);
            let w = xi.comps[2];
            let gd = DVector::from_vec(vec![xi.comps[0] - w * y, xi.comps[1] + w * x, w]);
            let gdd = DVector::from_vec(vec![
                xidot.comps[0] - xidot.comps[2] * y - w * gd[1],
                xidot.comps[1] + xidot.comps[2] * x + w * gd[0],
                xidot.comps[2],
            ]);
            (gd, gdd)
        }
    }
}

/// Geometry of the shape space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapeKind {
    /// A circle, stored as one wrapped angle.
    Angle,
    /// The unit sphere, stored as a unit 3-vector.
    Sphere,
}

impl ShapeKind {
    pub fn dim(self) -> usize {
        match self {
            ShapeKind::Angle => 1,
            ShapeKind::Sphere => 2,
        }
    }

    pub fn ambient_dim(self) -> usize {
        match self {
            ShapeKind::Angle => 1,
            ShapeKind::Sphere => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapePoint {
    pub kind: ShapeKind,
    pub coords: DVector<f64>,
}

impl ShapePoint {
    /// Wraps angles and normalizes sphere points.
    pub fn new(kind: ShapeKind, coords: DVector<f64>) -> Result<Self> {
        if coords.len() != kind.ambient_dim() {
            return Err(Error::DimensionMismatch { expected: kind.ambient_dim(), found: coords.len() });
        }
        Ok(match kind {
            ShapeKind::Angle => Self { kind, coords: DVector::from_element(1, wrap_angle(coords[0])) },
            ShapeKind::Sphere => {
                let n = coords.norm();
                if !(n > 0.0) {
                    return Err(Error::Model("zero vector is not a point of the sphere".into()));
                }
                Self { kind, coords: coords / n }
            }
        })
    }

    pub fn angle(a: f64) -> Self {
        Self { kind: ShapeKind::Angle, coords: DVector::from_element(1, wrap_angle(a)) }
    }

    pub fn sphere(v: Vector3<f64>) -> Self {
        Self::new(ShapeKind::Sphere, DVector::from_column_slice(v.normalize().as_slice())).expect("nonzero")
    }

    pub fn vec3(&self) -> Vector3<f64> {
        Vector3::new(self.coords[0], self.coords[1], self.coords[2])
    }

    /// Distance on the shape space (angular for circles, chordal on spheres).
    pub fn distance(&self, other: &ShapePoint) -> f64 {
        match self.kind {
            ShapeKind::Angle => angle_diff(self.coords[0], other.coords[0]).abs(),
            ShapeKind::Sphere => (&self.coords - &other.coords).norm(),
        }
    }

    /// Orthonormal basis (ambient columns) of the tangent space.
    pub fn tangent_basis(&self) -> DMatrix<f64> {
        match self.kind {
            ShapeKind::Angle => DMatrix::from_element(1, 1, 1.0),
            ShapeKind::Sphere => {
                let s = self.vec3();
                let axis = if s.x.abs() <= s.y.abs() && s.x.abs() <= s.z.abs() {
                    Vector3::x()
                } else if s.y.abs() <= s.z.abs() {
                    Vector3::y()
                } else {
                    Vector3::z()
                };
                let t1 = axis.cross(&s).normalize();
                let t2 = s.cross(&t1);
                DMatrix::from_columns(&[DVector::from_column_slice(t1.as_slice()), DVector::from_column_slice(t2.as_slice())])
            }
        }
    }

    /// Local chart centered here: `alpha ↦ s`.
    pub fn local_point(&self, alpha: &DVector<f64>) -> ShapePoint {
        match self.kind {
            ShapeKind::Angle => ShapePoint::angle(self.coords[0] + alpha[0]),
            ShapeKind::Sphere => {
                let w = &self.coords + self.tangent_basis() * alpha;
                ShapePoint::new(ShapeKind::Sphere, w).expect("nonzero near center")
            }
        }
    }

    /// Inverse of [`Self::local_point`].
    pub fn local_coords(&self, s: &ShapePoint) -> DVector<f64> {
        match self.kind {
            ShapeKind::Angle => DVector::from_element(1, angle_diff(s.coords[0], self.coords[0])),
            ShapeKind::Sphere => self.tangent_basis().transpose() * &s.coords / self.coords.dot(&s.coords),
        }
    }

    /// Ambient images of the coordinate vectors `∂/∂alpha^k` at `alpha`.
    pub fn local_tangent(&self, alpha: &DVector<f64>) -> DMatrix<f64> {
        match self.kind {
            ShapeKind::Angle => DMatrix::from_element(1, 1, 1.0),
            ShapeKind::Sphere => {
                let t = self.tangent_basis();
                let w = &self.coords + &t * alpha;
                let n = w.norm();
                let u = &w / n;
                (DMatrix::identity(3, 3) - &u * u.transpose()) * t / n
            }
        }
    }
}

/// Subset of the shape space on which a section is defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeDomain {
    Full,
    /// The sphere minus one pole.
    SphereMinusPole { pole: [f64; 3] },
}

/// Shapes closer than this to an excluded pole are rejected.
pub const EXCLUSION_RADIUS: f64 = 1e-6;

impl ShapeDomain {
    /// Distance to the excluded set (infinite for full domains).
    pub fn margin(&self, s: &ShapePoint) -> f64 {
        match self {
            ShapeDomain::Full => f64::INFINITY,
            ShapeDomain::SphereMinusPole { pole } => (s.vec3() - Vector3::from_column_slice(pole)).norm(),
        }
    }

    pub fn contains(&self, s: &ShapePoint) -> bool {
        self.margin(s) > EXCLUSION_RADIUS
    }
}

/// Canonical trivialization `ψ(q) = (π(q), φ(q))` of a section, with
/// `ψ⁻¹(s, g) = Φ_g(σ(s))`.
#[derive(Debug, Clone)]
pub struct Trivialization {
    pub section: SectionMap,
}

impl Trivialization {
    pub fn new(section: SectionMap) -> Self {
        Self { section }
    }

    pub fn name(&self) -> &str {
        self.section.name()
    }

    pub fn check_domain(&self, s: &ShapePoint) -> Result<()> {
        if self.section.domain().contains(s) {
            Ok(())
        } else {
            Err(Error::ChartExcluded { section: self.section.name().into(), shape: s.coords.iter().cloned().collect() })
        }
    }

    /// `ψ⁻¹(s, g) = Φ_g(σ(s))`.
    pub fn inverse(&self, sys: &dyn MechanicalSystem, s: &ShapePoint, g: &GroupElement) -> Result<ConfigPoint> {
        self.check_domain(s)?;
        Ok(sys.act(g, &self.section.eval(s)))
    }
}

/// The group action `Φ_g(q)`.
pub fn act(sys: &dyn MechanicalSystem, g: &GroupElement, q: &ConfigPoint) -> Result<ConfigPoint> {
    if g.kind != sys.group_kind() {
        return Err(Error::GroupMismatch { expected: format!("{:?}", sys.group_kind()), found: format!("{:?}", g.kind) });
    }
    Ok(sys.act(g, q))
}

/// Bundle projection `π(q)`.
pub fn project(sys: &dyn MechanicalSystem, q: &ConfigPoint) -> ShapePoint {
    sys.project(q)
}

/// `q ↦ (π(q), φ(q))`.
pub fn trivialize(sys: &dyn MechanicalSystem, triv: &Trivialization, q: &ConfigPoint) -> Result<(ShapePoint, GroupElement)> {
    let s = sys.project(q);
    triv.check_domain(&s)?;
    let base = triv.section.eval(&s);
    Ok((s, sys.relative_group(&base, q)))
}

/// Matrix whose columns are the generators `V_a(q)`.
pub fn generator_matrix(sys: &dyn MechanicalSystem, q: &ConfigPoint) -> DMatrix<f64> {
    let kind = sys.group_kind();
    let cols: Vec<DVector<f64>> = (0..kind.dim()).map(|a| sys.generator(&kind.basis(a), q)).collect();
    DMatrix::from_columns(&cols)
}

/// `ξ_Q(q)`.
pub fn infinitesimal_generator(sys: &dyn MechanicalSystem, xi: &LieAlgebraVec, q: &ConfigPoint) -> Result<TangentVec> {
    if xi.kind != sys.group_kind() {
        return Err(Error::GroupMismatch { expected: format!("{:?}", sys.group_kind()), found: format!("{:?}", xi.kind) });
    }
    TangentVec::new(q.clone(), sys.generator(xi, q))
}

/// Horizontal lift at `q` of an ambient shape velocity, for the canonical
/// flat connection: `TΦ_g Tσ(ṡ)`.
pub fn horizontal_lift(sys: &dyn MechanicalSystem, triv: &Trivialization, q: &ConfigPoint, sdot: &DVector<f64>) -> Result<DVector<f64>> {
    let (s, g) = trivialize(sys, triv, q)?;
    let base = triv.section.eval(&s);
    Ok(sys.push_forward(&g, &base, &triv.section.tangent(&s, sdot)))
}

/// Horizontal basis `H_alpha` at `q` for the local shape chart centered at
/// `π(q)`.
pub fn horizontal_basis(sys: &dyn MechanicalSystem, triv: &Trivialization, q: &ConfigPoint) -> Result<DMatrix<f64>> {
    let s = sys.project(q);
    let t = s.local_tangent(&DVector::zeros(s.kind.dim()));
    let cols = (0..t.ncols()).map(|a| horizontal_lift(sys, triv, q, &t.column(a).into_owned())).collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_columns(&cols))
}

/// Splits `q̇ = ξ^a V_a + ṡ^α H_α` for the canonical flat connection.
///
/// Returns `ξ = ġ g⁻¹` and the ambient shape velocity `ṡ = Tπ(q̇)`.
pub fn velocity_split(
    sys: &dyn MechanicalSystem,
    triv: &Trivialization,
    q: &ConfigPoint,
    qdot: &DVector<f64>,
) -> Result<(LieAlgebraVec, DVector<f64>)> {
    let sdot = sys.project_velocity(q, qdot);
    let h = horizontal_lift(sys, triv, q, &sdot)?;
    let v = generator_matrix(sys, q);
    let vertical = qdot - h;
    let xi = v
        .svd(true, true)
        .solve(&vertical, 1e-14)
        .map_err(|e| Error::Model(format!("generator matrix not full rank: {e}")))?;
    Ok((LieAlgebraVec { kind: sys.group_kind(), comps: xi }, sdot))
}

/// `ġ` of the group part along `q̇`.
pub fn group_velocity(sys: &dyn MechanicalSystem, triv: &Trivialization, q: &ConfigPoint, qdot: &DVector<f64>) -> Result<DVector<f64>> {
    let (_, g) = trivialize(sys, triv, q)?;
    let (xi, _) = velocity_split(sys, triv, q, qdot)?;
    Ok(group_rates(&g, &xi, &LieAlgebraVec::zero(g.kind)).0)
}
