//! Ambient manifold `M ⊂ ℝ^Q` and constraint submanifold `N ⊂ M`, both given
//! as closed-form nearest-point projections and tangent projectors, plus the
//! closed-form test vector fields used to probe stationarity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{dot, norm, Real};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Distance below which a point counts as sitting on a focal locus.
const FOCAL_EPS: f64 = 1e-300;

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AmbientKind {
    /// `ℝ^dim` itself.
    Euclidean { dim: usize },
    /// Round sphere `S^dim` of the given radius centered at the origin of `ℝ^{dim+1}`.
    Sphere { dim: usize, radius: f64 },
    /// Flat torus `ℝ^dim / (periods ℤ^dim)` embedded as a product of circles in `ℝ^{2 dim}`.
    FlatTorus { dim: usize, periods: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbientManifold {
    #[serde(flatten)]
    pub kind: AmbientKind,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl AmbientManifold {
    pub fn new(kind: AmbientKind) -> Result<Self> {
        let m = AmbientManifold { kind, tolerance: DEFAULT_TOLERANCE };
        m.validate()?;
        Ok(m)
    }

    pub fn euclidean(dim: usize) -> Self {
        Self::new(AmbientKind::Euclidean { dim }).expect("valid euclidean dimension")
    }

    pub fn sphere(dim: usize, radius: f64) -> Result<Self> {
        Self::new(AmbientKind::Sphere { dim, radius })
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter("ambient.tolerance must be positive".into()));
        }
        match &self.kind {
            AmbientKind::Euclidean { dim } => {
                if *dim < 2 {
                    return Err(Error::InvalidParameter("ambient.dim must be at least 2".into()));
                }
            }
            AmbientKind::Sphere { dim, radius } => {
                if *dim < 2 || !(*radius > 0.0) {
                    return Err(Error::InvalidParameter(
                        "ambient sphere needs dim >= 2 and radius > 0".into(),
                    ));
                }
            }
            AmbientKind::FlatTorus { dim, periods } => {
                if *dim < 2 || periods.len() != *dim || periods.iter().any(|p| !(*p > 0.0)) {
                    return Err(Error::InvalidParameter(
                        "ambient flat torus needs dim >= 2 and one positive period per dimension".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Dimension `Q` of the Euclidean space hosting `M`.
    pub fn embedding_dim(&self) -> usize {
        match &self.kind {
            AmbientKind::Euclidean { dim } => *dim,
            AmbientKind::Sphere { dim, .. } => dim + 1,
            AmbientKind::FlatTorus { dim, .. } => 2 * dim,
        }
    }

    /// Intrinsic dimension `m` of `M`.
    pub fn dim(&self) -> usize {
        match &self.kind {
            AmbientKind::Euclidean { dim } | AmbientKind::Sphere { dim, .. } | AmbientKind::FlatTorus { dim, .. } => *dim,
        }
    }

    pub fn is_flat_space(&self) -> bool {
        matches!(self.kind, AmbientKind::Euclidean { .. })
    }

    fn check_len(&self, p: &[f64]) -> Result<()> {
        let q = self.embedding_dim();
        if p.len() != q {
            return Err(Error::DimensionMismatch { expected: q, got: p.len() });
        }
        Ok(())
    }

    pub fn project_to_ambient(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.check_len(p)?;
        match &self.kind {
            AmbientKind::Euclidean { .. } => Ok(p.to_vec()),
            AmbientKind::Sphere { radius, .. } => {
                let r = norm(p);
                if !(r > FOCAL_EPS) {
                    return Err(Error::ProjectionIllPosed(p.to_vec()));
                }
                Ok(p.iter().map(|x| x * radius / r).collect())
            }
            AmbientKind::FlatTorus { periods, .. } => {
                let mut out = p.to_vec();
                for (k, period) in periods.iter().enumerate() {
                    let rad = period / (2.0 * std::f64::consts::PI);
                    let (a, b) = (p[2 * k], p[2 * k + 1]);
                    let r = a.hypot(b);
                    if !(r > FOCAL_EPS) {
                        return Err(Error::ProjectionIllPosed(p.to_vec()));
                    }
                    out[2 * k] = a * rad / r;
                    out[2 * k + 1] = b * rad / r;
                }
                Ok(out)
            }
        }
    }

    /// Euclidean distance from `p` to its projection on `M`.
    pub fn distance_to(&self, p: &[f64]) -> f64 {
        match self.project_to_ambient(p) {
            Ok(q) => p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
            Err(_) => f64::INFINITY,
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.distance_to(p) <= self.tolerance * (1.0 + self.scale())
    }

    /// Characteristic length used to make membership checks relative.
    fn scale(&self) -> f64 {
        match &self.kind {
            AmbientKind::Euclidean { .. } => 0.0,
            AmbientKind::Sphere { radius, .. } => *radius,
            AmbientKind::FlatTorus { periods, .. } => periods.iter().cloned().fold(0.0, f64::max),
        }
    }

    pub fn tangent_project(&self, p: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(p)?;
        self.check_len(v)?;
        if !self.contains(p) {
            return Err(Error::PointOffManifold { distance: self.distance_to(p) });
        }
        Ok(self.tangent_project_at(p, v))
    }

    /// Tangent projection without the membership check; generic so that it
    /// can run inside differentiated kernels.
    pub fn tangent_project_at<T: Real>(&self, p: &[T], v: &[T]) -> Vec<T> {
        match &self.kind {
            AmbientKind::Euclidean { .. } => v.to_vec(),
            AmbientKind::Sphere { .. } => {
                let pp = dot(p, p);
                let k = dot(p, v) / pp;
                v.iter().zip(p).map(|(vi, pi)| *vi - k * *pi).collect()
            }
            AmbientKind::FlatTorus { dim, .. } => {
                let mut out = v.to_vec();
                for k in 0..*dim {
                    let (a, b) = (p[2 * k], p[2 * k + 1]);
                    let rr = a * a + b * b;
                    let s = (v[2 * k] * a + v[2 * k + 1] * b) / rr;
                    out[2 * k] -= s * a;
                    out[2 * k + 1] -= s * b;
                }
                out
            }
        }
    }

    /// Distance used by ball-mass diagnostics: geodesic on the sphere, chordal elsewhere.
    pub fn distance(&self, p: &[f64], q: &[f64]) -> f64 {
        match &self.kind {
            AmbientKind::Sphere { radius, .. } => {
                let c = (dot(p, q) / (norm(p) * norm(q))).clamp(-1.0, 1.0);
                radius * c.acos()
            }
            _ => p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
        }
    }

    /// Uniformly distributed point of `M` (for Euclidean space: in the cube `[-1,1]^Q`).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let q = self.embedding_dim();
        loop {
            let p: Vec<f64> = (0..q).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if let Ok(x) = self.project_to_ambient(&p) {
                return x;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintKind {
    /// Round hypersphere of dimension `Q - 1`.
    Sphere { dim: usize, radius: f64, center: Vec<f64> },
    /// Affine `dim`-plane through `basepoint` spanned by `basis`.
    Plane { dim: usize, basepoint: Vec<f64>, basis: Vec<Vec<f64>> },
    /// Round circle in the plane spanned by `plane` (default: first two axes).
    Circle {
        radius: f64,
        center: Vec<f64>,
        #[serde(default)]
        plane: Option<[Vec<f64>; 2]>,
    },
    /// Product of circles of the given radii in consecutive coordinate pairs.
    ProductTorus { radii: Vec<f64> },
}

/// Validated constraint with cached orthonormal frames.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSubmanifold {
    pub kind: ConstraintKind,
    pub tolerance: f64,
    q: usize,
    frame: Vec<Vec<f64>>,
}

fn gram_schmidt(vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let mut w = v.clone();
        for e in &out {
            let k = dot(&w, e);
            for (wi, ei) in w.iter_mut().zip(e) {
                *wi -= k * ei;
            }
        }
        let n = norm(&w);
        if !(n > 1e-12 * (1.0 + norm(v))) {
            return Err(Error::InvalidParameter("constraint basis is linearly dependent".into()));
        }
        out.push(w.iter().map(|x| x / n).collect());
    }
    Ok(out)
}

impl ConstraintSubmanifold {
    pub fn new(kind: ConstraintKind, embedding_dim: usize) -> Result<Self> {
        let q = embedding_dim;
        let bad = |msg: &str| Err(Error::InvalidParameter(format!("constraint: {msg}")));
        let frame = match &kind {
            ConstraintKind::Sphere { dim, radius, center } => {
                if *dim + 1 != q || center.len() != q || !(*radius > 0.0) {
                    return bad("sphere needs dim = Q - 1, a center in ℝ^Q and radius > 0");
                }
                Vec::new()
            }
            ConstraintKind::Plane { dim, basepoint, basis } => {
                if *dim == 0 || *dim >= q || basis.len() != *dim || basepoint.len() != q || basis.iter().any(|b| b.len() != q) {
                    return bad("plane needs 0 < dim < Q and dim basis vectors in ℝ^Q");
                }
                gram_schmidt(basis)?
            }
            ConstraintKind::Circle { radius, center, plane } => {
                if center.len() != q || !(*radius > 0.0) {
                    return bad("circle needs a center in ℝ^Q and radius > 0");
                }
                let plane = match plane {
                    Some(p) => p.to_vec(),
                    None => {
                        let mut e1 = vec![0.0; q];
                        let mut e2 = vec![0.0; q];
                        e1[0] = 1.0;
                        e2[1] = 1.0;
                        vec![e1, e2]
                    }
                };
                if plane.iter().any(|b| b.len() != q) {
                    return bad("circle plane vectors must lie in ℝ^Q");
                }
                gram_schmidt(&plane)?
            }
            ConstraintKind::ProductTorus { radii } => {
                if radii.is_empty() || 2 * radii.len() > q || radii.iter().any(|r| !(*r > 0.0)) {
                    return bad("product torus needs 2 * len(radii) <= Q and positive radii");
                }
                Vec::new()
            }
        };
        Ok(ConstraintSubmanifold { kind, tolerance: DEFAULT_TOLERANCE, q, frame })
    }

    /// Unit sphere `S^{Q-1}` centered at the origin.
    pub fn unit_sphere(embedding_dim: usize) -> Self {
        Self::new(
            ConstraintKind::Sphere { dim: embedding_dim - 1, radius: 1.0, center: vec![0.0; embedding_dim] },
            embedding_dim,
        )
        .expect("valid unit sphere")
    }

    /// Unit circle in the plane of the first two coordinates.
    pub fn unit_circle(embedding_dim: usize) -> Self {
        Self::new(ConstraintKind::Circle { radius: 1.0, center: vec![0.0; embedding_dim], plane: None }, embedding_dim)
            .expect("valid unit circle")
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn embedding_dim(&self) -> usize {
        self.q
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            ConstraintKind::Sphere { dim, .. } | ConstraintKind::Plane { dim, .. } => *dim,
            ConstraintKind::Circle { .. } => 1,
            ConstraintKind::ProductTorus { radii } => radii.len(),
        }
    }

    fn check_len(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.q {
            return Err(Error::DimensionMismatch { expected: self.q, got: p.len() });
        }
        Ok(())
    }

    pub fn project_to_constraint(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.check_len(p)?;
        match &self.kind {
            ConstraintKind::Sphere { radius, center, .. } => {
                let d: Vec<f64> = p.iter().zip(center).map(|(a, c)| a - c).collect();
                let r = norm(&d);
                if !(r > FOCAL_EPS) {
                    return Err(Error::ProjectionIllPosed(p.to_vec()));
                }
                Ok(center.iter().zip(&d).map(|(c, x)| c + x * radius / r).collect())
            }
            ConstraintKind::Plane { basepoint, .. } => {
                let d: Vec<f64> = p.iter().zip(basepoint).map(|(a, c)| a - c).collect();
                let mut out = basepoint.clone();
                for e in &self.frame {
                    let k = dot(&d, e);
                    for (o, ei) in out.iter_mut().zip(e) {
                        *o += k * ei;
                    }
                }
                Ok(out)
            }
            ConstraintKind::Circle { radius, center, .. } => {
                let d: Vec<f64> = p.iter().zip(center).map(|(a, c)| a - c).collect();
                let a = dot(&d, &self.frame[0]);
                let b = dot(&d, &self.frame[1]);
                let r = a.hypot(b);
                if !(r > FOCAL_EPS) {
                    return Err(Error::ProjectionIllPosed(p.to_vec()));
                }
                Ok((0..self.q)
                    .map(|i| center[i] + radius * (a * self.frame[0][i] + b * self.frame[1][i]) / r)
                    .collect())
            }
            ConstraintKind::ProductTorus { radii } => {
                let mut out = vec![0.0; self.q];
                for (k, rad) in radii.iter().enumerate() {
                    let (a, b) = (p[2 * k], p[2 * k + 1]);
                    let r = a.hypot(b);
                    if !(r > FOCAL_EPS) {
                        return Err(Error::ProjectionIllPosed(p.to_vec()));
                    }
                    out[2 * k] = a * rad / r;
                    out[2 * k + 1] = b * rad / r;
                }
                Ok(out)
            }
        }
    }

    pub fn distance_to(&self, p: &[f64]) -> f64 {
        match self.project_to_constraint(p) {
            Ok(q) => p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
            Err(_) => f64::INFINITY,
        }
    }

    fn scale(&self) -> f64 {
        match &self.kind {
            ConstraintKind::Sphere { radius, .. } | ConstraintKind::Circle { radius, .. } => *radius,
            ConstraintKind::Plane { .. } => 0.0,
            ConstraintKind::ProductTorus { radii } => radii.iter().cloned().fold(0.0, f64::max),
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.distance_to(p) <= self.tolerance * (1.0 + self.scale())
    }

    pub fn constraint_tangent_project(&self, p: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(p)?;
        self.check_len(v)?;
        if !self.contains(p) {
            return Err(Error::PointOffManifold { distance: self.distance_to(p) });
        }
        Ok(self.tangent_project_at(p, v))
    }

    /// Orthogonal projection onto `T_p N` without the membership check.
    pub fn tangent_project_at(&self, p: &[f64], v: &[f64]) -> Vec<f64> {
        match &self.kind {
            ConstraintKind::Sphere { center, .. } => {
                let d: Vec<f64> = p.iter().zip(center).map(|(a, c)| a - c).collect();
                let k = dot(&d, v) / dot(&d, &d);
                v.iter().zip(&d).map(|(vi, di)| vi - k * di).collect()
            }
            ConstraintKind::Plane { .. } => {
                let mut out = vec![0.0; self.q];
                for e in &self.frame {
                    let k = dot(v, e);
                    for (o, ei) in out.iter_mut().zip(e) {
                        *o += k * ei;
                    }
                }
                out
            }
            ConstraintKind::Circle { center, .. } => {
                let d: Vec<f64> = p.iter().zip(center).map(|(a, c)| a - c).collect();
                let a = dot(&d, &self.frame[0]);
                let b = dot(&d, &self.frame[1]);
                let r = a.hypot(b);
                let t: Vec<f64> = (0..self.q).map(|i| (-b * self.frame[0][i] + a * self.frame[1][i]) / r).collect();
                let k = dot(v, &t);
                t.iter().map(|ti| k * ti).collect()
            }
            ConstraintKind::ProductTorus { radii } => {
                let mut out = vec![0.0; self.q];
                for k in 0..radii.len() {
                    let (a, b) = (p[2 * k], p[2 * k + 1]);
                    let rr = a * a + b * b;
                    let s = (v[2 * k + 1] * a - v[2 * k] * b) / rr;
                    out[2 * k] = -s * b;
                    out[2 * k + 1] = s * a;
                }
                out
            }
        }
    }

    /// Random point on `N`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        loop {
            let p: Vec<f64> = (0..self.q).map(|_| rng.gen_range(-2.0..2.0)).collect();
            if let Ok(x) = self.project_to_constraint(&p) {
                return x;
            }
        }
    }
}

/// Spherical cutoff `χ(|x - center|)`: one inside `inner`, zero beyond `outer`,
/// quintic smoothstep transition in between.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub center: Vec<f64>,
    pub inner: f64,
    pub outer: f64,
}

/// Largest slope of the quintic smoothstep `6s^5 - 15s^4 + 10s^3` on `[0, 1]`.
pub const SMOOTHSTEP_MAX_SLOPE: f64 = 1.875;

impl Cutoff {
    pub fn new(center: Vec<f64>, inner: f64, outer: f64) -> Result<Self> {
        if !(inner > 0.0 && inner < outer) {
            return Err(Error::BadRadii { inner, outer });
        }
        Ok(Cutoff { center, inner, outer })
    }

    /// `(χ(t), χ'(t))` at distance `t` from the center.
    pub fn profile(&self, t: f64) -> (f64, f64) {
        if t <= self.inner {
            (1.0, 0.0)
        } else if t >= self.outer {
            (0.0, 0.0)
        } else {
            let w = self.outer - self.inner;
            let s = (t - self.inner) / w;
            let s2 = s * s;
            let step = s2 * s * (10.0 - 15.0 * s + 6.0 * s2);
            let slope = 30.0 * s2 * (1.0 - s) * (1.0 - s);
            (1.0 - step, -slope / w)
        }
    }

    pub fn max_slope(&self) -> f64 {
        SMOOTHSTEP_MAX_SLOPE / (self.outer - self.inner)
    }
}

/// Closed-form vector fields on `ℝ^Q` with analytic Jacobians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    Constant { value: Vec<f64> },
    /// `x ↦ A x + b`, `A` given row-major as `Q` rows.
    Affine { matrix: Vec<Vec<f64>>, offset: Vec<f64> },
    /// Position field `x - center`.
    Radial { center: Vec<f64> },
    /// `(x-p) - |x-p|^2 / (2R^2) (x-c)`: the position field about `p ∈ ∂B_R(c)`
    /// bent to be tangent to that sphere.
    SphereAdaptedRadial { point: Vec<f64>, sphere_center: Vec<f64>, radius: f64 },
    /// `|x-c|^2 v - <v, x-c>(x-c)`: tangent to every sphere about `c`.
    SphereTangential { direction: Vec<f64>, sphere_center: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestVectorField {
    pub label: String,
    pub kind: FieldKind,
    pub cutoff: Option<Cutoff>,
    pub tangent_to_n: bool,
    /// Upper bound for `sup|X| + sup|DX|` over the field's region of interest.
    pub c1_bound: f64,
    /// Constant factor applied to the field.
    #[serde(default = "unit_gain")]
    pub gain: f64,
}

fn unit_gain() -> f64 {
    1.0
}

fn sub_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

impl FieldKind {
    pub fn dim(&self) -> usize {
        match self {
            FieldKind::Constant { value } => value.len(),
            FieldKind::Affine { offset, .. } => offset.len(),
            FieldKind::Radial { center } => center.len(),
            FieldKind::SphereAdaptedRadial { point, .. } => point.len(),
            FieldKind::SphereTangential { direction, .. } => direction.len(),
        }
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        match self {
            FieldKind::Constant { value } => value.clone(),
            FieldKind::Affine { matrix, offset } => {
                matrix.iter().zip(offset).map(|(row, b)| dot(row, x) + b).collect()
            }
            FieldKind::Radial { center } => sub_vec(x, center),
            FieldKind::SphereAdaptedRadial { point, sphere_center, radius } => {
                let y = sub_vec(x, point);
                let z = sub_vec(x, sphere_center);
                let k = dot(&y, &y) / (2.0 * radius * radius);
                y.iter().zip(&z).map(|(yi, zi)| yi - k * zi).collect()
            }
            FieldKind::SphereTangential { direction, sphere_center } => {
                let z = sub_vec(x, sphere_center);
                let zz = dot(&z, &z);
                let vz = dot(direction, &z);
                direction.iter().zip(&z).map(|(v, zi)| zz * v - vz * zi).collect()
            }
        }
    }

    /// Row-major Jacobian `J[i][j] = ∂X_i / ∂x_j`.
    fn jacobian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let q = x.len();
        let ident = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
        match self {
            FieldKind::Constant { .. } => vec![vec![0.0; q]; q],
            FieldKind::Affine { matrix, .. } => matrix.clone(),
            FieldKind::Radial { .. } => (0..q).map(|i| (0..q).map(|j| ident(i, j)).collect()).collect(),
            FieldKind::SphereAdaptedRadial { point, sphere_center, radius } => {
                let y = sub_vec(x, point);
                let z = sub_vec(x, sphere_center);
                let s = 1.0 / (2.0 * radius * radius);
                let yy = dot(&y, &y);
                (0..q)
                    .map(|i| (0..q).map(|j| ident(i, j) * (1.0 - s * yy) - 2.0 * s * z[i] * y[j]).collect())
                    .collect()
            }
            FieldKind::SphereTangential { direction: v, sphere_center } => {
                let z = sub_vec(x, sphere_center);
                let vz = dot(v, &z);
                (0..q)
                    .map(|i| (0..q).map(|j| 2.0 * v[i] * z[j] - z[i] * v[j] - vz * ident(i, j)).collect())
                    .collect()
            }
        }
    }

    /// `(sup |X|, sup ‖DX‖)` over the ball `B_rho(c)`.
    fn bounds(&self, c: &[f64], rho: f64) -> (f64, f64) {
        let dist = |p: &[f64]| norm(&sub_vec(c, p)) + rho;
        match self {
            FieldKind::Constant { value } => (norm(value), 0.0),
            FieldKind::Affine { matrix, offset } => {
                let fro = matrix.iter().map(|r| dot(r, r)).sum::<f64>().sqrt();
                (fro * (norm(c) + rho) + norm(offset), fro)
            }
            FieldKind::Radial { center } => (dist(center), 1.0),
            FieldKind::SphereAdaptedRadial { point, sphere_center, radius } => {
                let y = dist(point);
                let z = dist(sphere_center);
                let s = 1.0 / (2.0 * radius * radius);
                (y + s * y * y * z, 1.0 + s * (y * y + 2.0 * y * z))
            }
            FieldKind::SphereTangential { direction, sphere_center } => {
                let z = dist(sphere_center);
                let v = norm(direction);
                (2.0 * v * z * z, 4.0 * v * z)
            }
        }
    }
}

impl TestVectorField {
    /// Builds a field and computes its C¹ bound over `B_rho(region_center)`,
    /// or over the cutoff ball when a cutoff is present.
    pub fn new(
        label: impl Into<String>,
        kind: FieldKind,
        cutoff: Option<Cutoff>,
        tangent_to_n: bool,
        region_center: &[f64],
        region_radius: f64,
    ) -> Self {
        let (c, rho) = match &cutoff {
            Some(cut) => (cut.center.clone(), cut.outer),
            None => (region_center.to_vec(), region_radius),
        };
        let (sup, dsup) = kind.bounds(&c, rho);
        let c1_bound = match &cutoff {
            Some(cut) => sup + dsup + sup * cut.max_slope(),
            None => sup + dsup,
        };
        TestVectorField { label: label.into(), kind, cutoff, tangent_to_n, c1_bound, gain: 1.0 }
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    /// The field multiplied by the constant `k`.
    pub fn scaled(&self, k: f64) -> Self {
        TestVectorField { gain: self.gain * k, c1_bound: self.c1_bound * k.abs(), ..self.clone() }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut v = self.eval_unit(x);
        if self.gain != 1.0 {
            v.iter_mut().for_each(|x| *x *= self.gain);
        }
        v
    }

    pub fn jacobian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut j = self.jacobian_unit(x);
        if self.gain != 1.0 {
            j.iter_mut().flatten().for_each(|x| *x *= self.gain);
        }
        j
    }

    fn eval_unit(&self, x: &[f64]) -> Vec<f64> {
        match &self.cutoff {
            None => self.kind.eval(x),
            Some(cut) => {
                let t = norm(&sub_vec(x, &cut.center));
                let (chi, _) = cut.profile(t);
                if t >= cut.outer {
                    return vec![0.0; x.len()];
                }
                self.kind.eval(x).into_iter().map(|v| chi * v).collect()
            }
        }
    }

    fn jacobian_unit(&self, x: &[f64]) -> Vec<Vec<f64>> {
        match &self.cutoff {
            None => self.kind.jacobian(x),
            Some(cut) => {
                let y = sub_vec(x, &cut.center);
                let t = norm(&y);
                let q = x.len();
                if t >= cut.outer {
                    return vec![vec![0.0; q]; q];
                }
                let (chi, dchi) = cut.profile(t);
                let base = self.kind.eval(x);
                let mut jac = self.kind.jacobian(x);
                for (i, row) in jac.iter_mut().enumerate() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v *= chi;
                        if dchi != 0.0 {
                            *v += base[i] * dchi * y[j] / t;
                        }
                    }
                }
                jac
            }
        }
    }

    /// Tangential divergence `Σ_k <e_k, DX e_k>` along an orthonormal frame.
    pub fn div_along(&self, x: &[f64], frame: &[&[f64]]) -> f64 {
        let jac = self.jacobian(x);
        frame
            .iter()
            .map(|e| jac.iter().zip(e.iter()).map(|(row, ei)| ei * dot(row, e)).sum::<f64>())
            .sum()
    }

    /// Largest normal component (relative to `N`) over the given points of `N`.
    pub fn tangency_defect(&self, constraint: &ConstraintSubmanifold, points: &[Vec<f64>]) -> f64 {
        points
            .iter()
            .map(|p| {
                let x = self.eval(p);
                let t = constraint.tangent_project_at(p, &x);
                norm(&sub_vec(&x, &t))
            })
            .fold(0.0, f64::max)
    }
}

/// `X(x) = (x - p) χ(|x - p|)`, the localized position field.
pub fn make_radial_cutoff_field(center: &[f64], inner: f64, outer: f64) -> Result<TestVectorField> {
    let cutoff = Cutoff::new(center.to_vec(), inner, outer)?;
    Ok(TestVectorField::new(
        format!("radial_cutoff(r={inner}..{outer})"),
        FieldKind::Radial { center: center.to_vec() },
        Some(cutoff),
        false,
        center,
        outer,
    ))
}

/// Rotation field `A(x - c)` with `A = e_i e_j^T - e_j e_i^T`.
pub fn rotation_field(q: usize, i: usize, j: usize, center: &[f64], region_radius: f64) -> TestVectorField {
    let mut matrix = vec![vec![0.0; q]; q];
    matrix[i][j] = -1.0;
    matrix[j][i] = 1.0;
    let offset: Vec<f64> = matrix.iter().map(|row| -dot(row, center)).collect();
    TestVectorField::new(
        format!("rotation({i},{j})"),
        FieldKind::Affine { matrix, offset },
        None,
        true,
        center,
        region_radius,
    )
}

/// Test-field dictionary adapted to the constraint: every field is tangent to
/// `N`, and cutoff fields whose support meets `N` are bent to stay tangent.
/// `region` is a ball `(center, radius)` enclosing the surface.
pub fn standard_dictionary(
    ambient: &AmbientManifold,
    constraint: Option<&ConstraintSubmanifold>,
    region: (&[f64], f64),
) -> Vec<TestVectorField> {
    let q = ambient.embedding_dim();
    let (c, rho) = region;
    let mut out = Vec::new();
    let unit = |i: usize| {
        let mut e = vec![0.0; q];
        e[i] = 1.0;
        e
    };
    match constraint.map(|n| &n.kind) {
        None => {
            for i in 0..q {
                out.push(TestVectorField::new(format!("constant(e{i})"), FieldKind::Constant { value: unit(i) }, None, true, c, rho));
            }
            out.push(TestVectorField::new("dilation", FieldKind::Radial { center: c.to_vec() }, None, true, c, rho));
            for i in 0..q {
                for j in (i + 1)..q {
                    out.push(rotation_field(q, i, j, c, rho));
                }
            }
            if let Ok(f) = make_radial_cutoff_field(c, 0.25 * rho, 0.5 * rho) {
                out.push(TestVectorField { tangent_to_n: true, ..f });
            }
        }
        Some(ConstraintKind::Sphere { radius, center, .. }) => {
            for i in 0..q {
                for j in (i + 1)..q {
                    out.push(rotation_field(q, i, j, center, rho.max(*radius)));
                }
            }
            for i in 0..q {
                out.push(TestVectorField::new(
                    format!("sphere_tangential(e{i})"),
                    FieldKind::SphereTangential { direction: unit(i), sphere_center: center.clone() },
                    None,
                    true,
                    center,
                    *radius,
                ));
            }
            // Interior localized dilations, kept clear of N.
            let inner = 0.2 * radius;
            let outer = 0.4 * radius;
            let mut centers = vec![center.clone()];
            for i in 0..q {
                let mut p = center.clone();
                p[i] += 0.45 * radius;
                centers.push(p);
            }
            for p in centers {
                if let Ok(f) = make_radial_cutoff_field(&p, inner, outer) {
                    out.push(TestVectorField { tangent_to_n: true, ..f });
                }
            }
            // Boundary-adapted localized dilations centered on N.
            for i in 0..q {
                for sign in [1.0, -1.0] {
                    let mut p = center.clone();
                    p[i] += sign * radius;
                    if let Ok(cut) = Cutoff::new(p.clone(), 0.25 * radius, 0.5 * radius) {
                        out.push(TestVectorField::new(
                            format!("adapted_radial(e{i},{sign})"),
                            FieldKind::SphereAdaptedRadial { point: p, sphere_center: center.clone(), radius: *radius },
                            Some(cut),
                            true,
                            c,
                            rho,
                        ));
                    }
                }
            }
        }
        Some(ConstraintKind::Plane { basis, .. }) => {
            for (k, b) in basis.iter().enumerate() {
                out.push(TestVectorField::new(format!("plane_constant({k})"), FieldKind::Constant { value: b.clone() }, None, true, c, rho));
            }
            if let Ok(f) = make_radial_cutoff_field(c, 0.1 * rho, 0.2 * rho) {
                out.push(TestVectorField { tangent_to_n: true, ..f });
            }
        }
        Some(ConstraintKind::Circle { center, radius, .. }) => {
            let n = constraint.unwrap();
            let (e1, e2) = (&n.frame[0], &n.frame[1]);
            let mut matrix = vec![vec![0.0; q]; q];
            for i in 0..q {
                for j in 0..q {
                    matrix[i][j] = e2[i] * e1[j] - e1[i] * e2[j];
                }
            }
            let offset: Vec<f64> = matrix.iter().map(|row| -dot(row, center)).collect();
            out.push(TestVectorField::new("circle_rotation", FieldKind::Affine { matrix, offset }, None, true, c, rho));
            if let Ok(f) = make_radial_cutoff_field(center, 0.2 * radius, 0.4 * radius) {
                out.push(TestVectorField { tangent_to_n: true, ..f });
            }
        }
        Some(ConstraintKind::ProductTorus { radii }) => {
            for k in 0..radii.len() {
                out.push(rotation_field(q, 2 * k, 2 * k + 1, &vec![0.0; q], rho));
            }
        }
    }
    out
}
