//! Varifold-level measurements on discrete immersions.
//!
//! The pushforward varifold samples each face at the centroids of its regular
//! subdivision, so ball masses, density ratios and first-variation residuals
//! are all quadratures over those samples. Atom and neck detection work in the
//! domain instead: intrinsic balls are measured with graph distances in the
//! mesh's fixed reference chart, and the measure is the induced vertex area.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::ambient::{AmbientKind, ConstraintSubmanifold, TestVectorField};
use crate::error::{Error, Result};
use crate::mesh::geometry::{induced_metric, vertex_areas};
use crate::mesh::{shape_operator, Immersion, SurfaceMesh};
use crate::par;
use crate::real::{dot, norm, sub};

/// Relative tolerance of the tangency check on dictionary fields.
const TANGENCY_TOL: f64 = 1e-8;

/// How ball membership is decided.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BallMetric {
    /// Euclidean distance in `ℝ^Q`.
    Chordal,
    /// Arc length on the round sphere of this radius about the origin; sample
    /// points are pushed radially onto the sphere first.
    Geodesic { radius: f64 },
}

impl BallMetric {
    pub fn distance(&self, p: &[f64], x: &[f64]) -> f64 {
        match self {
            BallMetric::Chordal => chord(p, x),
            BallMetric::Geodesic { radius } => {
                let (np, nx) = (norm(p), norm(x));
                if np == 0.0 || nx == 0.0 {
                    return chord(p, x);
                }
                let d: f64 = p.iter().zip(x).map(|(a, b)| (a / np - b / nx).powi(2)).sum::<f64>().sqrt();
                radius * 2.0 * (0.5 * d).min(1.0).asin()
            }
        }
    }
}

fn chord(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarifoldSample {
    pub point: Vec<f64>,
    /// Orthonormal basis of the face plane.
    pub plane: [Vec<f64>; 2],
    pub weight: f64,
    pub face: usize,
}

/// Discrete pushforward varifold `Φ_*(vol_Φ)` with its tangent planes.
#[derive(Clone, Debug)]
pub struct PushforwardVarifold {
    pub samples: Vec<VarifoldSample>,
    pub total_mass: f64,
    pub metric: BallMetric,
    /// Constraint the boundary is held on, used to check test fields.
    pub constraint: Option<ConstraintSubmanifold>,
    /// Images of the boundary vertices.
    pub boundary_points: Vec<Vec<f64>>,
    /// Boundary edges as index pairs into `boundary_points`.
    pub boundary_segments: Vec<[usize; 2]>,
    /// Mean edge length of the source immersion.
    pub resolution: f64,
}

/// Barycentric `(u, v)` of the centroids of the `k`-fold regular subdivision.
fn subdivision_centroids(k: usize) -> Vec<(f64, f64)> {
    let kf = k as f64;
    let mut out = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..(k - i) {
            out.push(((i as f64 + 1.0 / 3.0) / kf, (j as f64 + 1.0 / 3.0) / kf));
            if i + j + 2 <= k {
                out.push(((i as f64 + 2.0 / 3.0) / kf, (j as f64 + 2.0 / 3.0) / kf));
            }
        }
    }
    out
}

fn orthonormal_pair(e1: &[f64], e2: &[f64]) -> [Vec<f64>; 2] {
    let n1 = norm(e1);
    let a: Vec<f64> = e1.iter().map(|x| x / n1).collect();
    let mut b = e2.to_vec();
    for _ in 0..2 {
        let c = dot(&a, &b);
        b.iter_mut().zip(&a).for_each(|(bi, ai)| *bi -= c * ai);
    }
    let nb = norm(&b);
    b.iter_mut().for_each(|x| *x /= nb);
    [a, b]
}

/// Pushforward of the induced area measure. `samples_per_face` must be a
/// perfect square `k²`: each face is split into its `k`-fold regular
/// subdivision and every sub-triangle centroid carries an equal share.
pub fn pushforward(imm: &Immersion, samples_per_face: usize) -> Result<PushforwardVarifold> {
    let k = (samples_per_face as f64).sqrt().round() as usize;
    if samples_per_face == 0 || k * k != samples_per_face {
        return Err(Error::InvalidParameter(format!(
            "samples per face must be a positive perfect square, got {samples_per_face}"
        )));
    }
    let metric_field = induced_metric(imm)?;
    let faces = imm.mesh.faces();
    let bary = subdivision_centroids(k);
    let share = 1.0 / samples_per_face as f64;
    let per_face = par::map_indexed(faces.len(), |fi| {
        let f = faces[fi];
        let (p0, p1, p2) = (imm.point(f[0]), imm.point(f[1]), imm.point(f[2]));
        let e1 = sub(p1, p0);
        let e2 = sub(p2, p0);
        let plane = orthonormal_pair(&e1, &e2);
        let weight = metric_field.face_areas[fi] * share;
        bary.iter()
            .map(|&(u, v)| VarifoldSample {
                point: (0..p0.len()).map(|i| p0[i] + u * e1[i] + v * e2[i]).collect(),
                plane: plane.clone(),
                weight,
                face: fi,
            })
            .collect::<Vec<_>>()
    });
    let samples: Vec<VarifoldSample> = per_face.into_iter().flatten().collect();
    let weights: Vec<f64> = samples.iter().map(|s| s.weight).collect();
    let total_mass = par::ordered_sum(&weights);

    let metric = match imm.ambient.kind {
        AmbientKind::Sphere { radius, .. } => BallMetric::Geodesic { radius },
        _ => BallMetric::Chordal,
    };
    let mut index = vec![usize::MAX; imm.n_vertices()];
    let mut boundary_points = Vec::new();
    let mut boundary_segments = Vec::new();
    for [a, b] in imm.mesh.boundary_edges() {
        for v in [a, b] {
            if index[v] == usize::MAX {
                index[v] = boundary_points.len();
                boundary_points.push(imm.point(v).to_vec());
            }
        }
        boundary_segments.push([index[a], index[b]]);
    }
    Ok(PushforwardVarifold {
        samples,
        total_mass,
        metric,
        constraint: imm.constraint.clone(),
        boundary_points,
        boundary_segments,
        resolution: imm.mean_edge_length(),
    })
}

impl PushforwardVarifold {
    /// Sum of two varifolds. Boundary data is concatenated; the constraint
    /// and ball metric of `self` are kept.
    pub fn union(&self, other: &PushforwardVarifold) -> PushforwardVarifold {
        let mut samples = self.samples.clone();
        samples.extend(other.samples.iter().cloned());
        let offset = self.boundary_points.len();
        let mut boundary_points = self.boundary_points.clone();
        boundary_points.extend(other.boundary_points.iter().cloned());
        let mut boundary_segments = self.boundary_segments.clone();
        boundary_segments.extend(other.boundary_segments.iter().map(|[a, b]| [a + offset, b + offset]));
        let weights: Vec<f64> = samples.iter().map(|s| s.weight).collect();
        PushforwardVarifold {
            samples,
            total_mass: par::ordered_sum(&weights),
            metric: self.metric.clone(),
            constraint: self.constraint.clone(),
            boundary_points,
            boundary_segments,
            resolution: self.resolution.min(other.resolution),
        }
    }

    fn distances(&self, p: &[f64]) -> Vec<f64> {
        par::map_indexed(self.samples.len(), |i| self.metric.distance(p, &self.samples[i].point))
    }

    /// Distance from `p` to the image of the boundary, `∞` for closed surfaces.
    pub fn boundary_distance(&self, p: &[f64]) -> f64 {
        self.boundary_segments
            .iter()
            .map(|&[a, b]| point_segment_distance(p, &self.boundary_points[a], &self.boundary_points[b]))
            .fold(f64::INFINITY, f64::min)
    }
}

fn point_segment_distance(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab = sub(b, a);
    let ap = sub(p, a);
    let len2 = dot(&ab, &ab);
    let t = if len2 > 0.0 { (dot(&ap, &ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let c: Vec<f64> = a.iter().zip(&ab).map(|(x, d)| x + t * d).collect();
    chord(p, &c)
}

/// Mass within distance `r` of `p`, summed in sample order.
pub fn ball_mass(varifold: &PushforwardVarifold, p: &[f64], r: f64) -> f64 {
    if !(r > 0.0) {
        return 0.0;
    }
    let d = varifold.distances(p);
    mass_within(varifold, &d, r)
}

fn mass_within(varifold: &PushforwardVarifold, distances: &[f64], r: f64) -> f64 {
    varifold
        .samples
        .iter()
        .zip(distances)
        .filter(|(_, d)| **d <= r)
        .fold(0.0, |acc, (s, _)| acc + s.weight)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityCurve {
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
    pub masses: Vec<f64>,
    /// `μ(B_r(p)) / (π r²)`.
    pub values: Vec<f64>,
    /// Largest `ratio(r) / ratio(r')` over `r < r'` with positive mass at `r'`;
    /// zero when no such pair exists.
    pub drop: f64,
    pub boundary_point: bool,
    /// Distance to the boundary image; absent for closed surfaces.
    pub boundary_distance: Option<f64>,
}

/// Density ratios on a grid of radii. The point counts as a boundary point
/// when it lies within one mean edge length of the boundary image.
pub fn density_ratio_curve(varifold: &PushforwardVarifold, p: &[f64], radii: &[f64]) -> Result<DensityCurve> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("density radii must be positive and strictly increasing".into()));
    }
    let d = varifold.distances(p);
    let masses: Vec<f64> = radii.iter().map(|&r| mass_within(varifold, &d, r)).collect();
    let values: Vec<f64> = masses.iter().zip(radii).map(|(m, r)| m / (std::f64::consts::PI * r * r)).collect();
    let mut drop = 0.0f64;
    for i in 0..values.len() {
        for j in (i + 1)..values.len() {
            if values[j] > 0.0 {
                drop = drop.max(values[i] / values[j]);
            }
        }
    }
    let boundary_distance = Some(varifold.boundary_distance(p)).filter(|d| d.is_finite());
    Ok(DensityCurve {
        center: p.to_vec(),
        radii: radii.to_vec(),
        masses,
        values,
        drop,
        boundary_point: boundary_distance.is_some_and(|d| d <= varifold.resolution),
        boundary_distance,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldResidual {
    pub label: String,
    /// `Σ weight · div_Π X`.
    pub first_variation: f64,
    pub c1_bound: f64,
    /// `|first_variation| / (c1_bound · total mass)`.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationarityReport {
    pub max_residual: f64,
    pub fields: Vec<FieldResidual>,
}

/// Normalized first variation of the varifold against each admissible field.
///
/// With a constraint every field must be tangent to it at the boundary
/// points. Without one, a surface with boundary only admits fields that
/// vanish on its boundary image.
pub fn stationarity_residual(
    varifold: &PushforwardVarifold,
    dictionary: &[TestVectorField],
) -> Result<StationarityReport> {
    if dictionary.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    for (index, field) in dictionary.iter().enumerate() {
        let deviation = boundary_defect(varifold, field);
        if deviation > TANGENCY_TOL * field.c1_bound.max(f64::MIN_POSITIVE) {
            return Err(Error::FieldNotTangent { index, deviation });
        }
    }
    let mass = varifold.total_mass;
    let fields = par::map_indexed(dictionary.len(), |k| {
        let field = &dictionary[k];
        let first_variation = varifold.samples.iter().fold(0.0, |acc, s| {
            acc + s.weight * field.div_along(&s.point, &[&s.plane[0], &s.plane[1]])
        });
        let denom = field.c1_bound * mass;
        let residual = if denom > 0.0 { first_variation.abs() / denom } else { 0.0 };
        FieldResidual { label: field.label.clone(), first_variation, c1_bound: field.c1_bound, residual }
    });
    let max_residual = fields.iter().map(|f| f.residual).fold(0.0, f64::max);
    Ok(StationarityReport { max_residual, fields })
}

fn boundary_defect(varifold: &PushforwardVarifold, field: &TestVectorField) -> f64 {
    match &varifold.constraint {
        Some(n) => field.tangency_defect(n, &varifold.boundary_points),
        None => varifold.boundary_points.iter().map(|p| norm(&field.eval(p))).fold(0.0, f64::max),
    }
}

/// The fields of `dictionary` that pass the boundary check of
/// [`stationarity_residual`].
pub fn admissible_fields(varifold: &PushforwardVarifold, dictionary: &[TestVectorField]) -> Vec<TestVectorField> {
    dictionary
        .iter()
        .filter(|f| boundary_defect(varifold, f) <= TANGENCY_TOL * f.c1_bound.max(f64::MIN_POSITIVE))
        .cloned()
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryAngle {
    pub vertex: usize,
    pub degrees: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrthogonalityReport {
    pub max_degrees: f64,
    pub vertices: Vec<BoundaryAngle>,
}

/// Deviation from a right angle between the surface conormal and `T N`.
///
/// Each boundary edge carries the conormal of its face: the unit vector in
/// the face plane perpendicular to the edge. A boundary vertex reports the
/// larger deviation of its two boundary edges, `asin |P_{T_pN} ν|`.
pub fn orthogonality_residual(imm: &Immersion) -> Result<OrthogonalityReport> {
    if !imm.mesh.has_boundary() {
        return Err(Error::NoBoundary);
    }
    let n = imm
        .constraint
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("orthogonality needs a boundary constraint".into()))?;
    let mut worst = vec![f64::NAN; imm.n_vertices()];
    let mut order = Vec::new();
    for [a, b] in imm.mesh.boundary_edges() {
        let fi = imm.mesh.boundary_face(a, b).ok_or_else(|| Error::InvalidMesh(format!("edge {a}-{b} has no face")))?;
        let f = imm.mesh.faces()[fi];
        let o = f.iter().copied().find(|&v| v != a && v != b).expect("triangle has a third vertex");
        let (pa, pb, po) = (imm.point(a), imm.point(b), imm.point(o));
        let t = sub(pb, pa);
        let tn = norm(&t);
        let mut nu = sub(po, pa);
        let c = dot(&nu, &t) / (tn * tn);
        nu.iter_mut().zip(&t).for_each(|(x, ti)| *x -= c * ti);
        let nn = norm(&nu);
        nu.iter_mut().for_each(|x| *x /= nn);
        for (v, p) in [(a, pa), (b, pb)] {
            let proj = n.tangent_project_at(p, &nu);
            let deg = norm(&proj).min(1.0).asin().to_degrees();
            if worst[v].is_nan() {
                order.push(v);
                worst[v] = deg;
            } else {
                worst[v] = worst[v].max(deg);
            }
        }
    }
    let vertices: Vec<BoundaryAngle> = order.into_iter().map(|v| BoundaryAngle { vertex: v, degrees: worst[v] }).collect();
    let max_degrees = vertices.iter().map(|b| b.degrees).fold(0.0, f64::max);
    Ok(OrthogonalityReport { max_degrees, vertices })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Multiplicity {
    pub value: f64,
    pub nearest: i64,
}

/// Density ratio at one scale, with the nearest integer for comparison.
pub fn multiplicity_estimate(varifold: &PushforwardVarifold, p: &[f64], r: f64) -> Multiplicity {
    let value = if r > 0.0 { ball_mass(varifold, p, r) / (std::f64::consts::PI * r * r) } else { 0.0 };
    Multiplicity { value, nearest: value.round() as i64 }
}

/// Weighted point measure.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMeasure {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl PointMeasure {
    pub fn total(&self) -> f64 {
        par::ordered_sum(&self.weights)
    }

    pub fn ball_mass(&self, p: &[f64], r: f64) -> f64 {
        self.points.iter().zip(&self.weights).filter(|(x, _)| chord(p, x) <= r).fold(0.0, |a, (_, w)| a + w)
    }
}

/// The lower-order part of the energy as a measure: `σ` times boundary
/// length at edge midpoints plus `σ⁴ f²` times vertex area at vertices.
pub fn entropy_measure(imm: &Immersion, sigma: f64) -> Result<PointMeasure> {
    let shape = shape_operator(imm)?;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for [a, b] in imm.mesh.boundary_edges() {
        let (pa, pb) = (imm.point(a), imm.point(b));
        points.push(pa.iter().zip(pb).map(|(x, y)| 0.5 * (x + y)).collect());
        weights.push(sigma * chord(pa, pb));
    }
    let s4 = sigma.powi(4);
    for v in 0..imm.n_vertices() {
        points.push(imm.point(v).to_vec());
        weights.push(s4 * shape.f[v] * shape.f[v] * shape.vertex_areas[v]);
    }
    Ok(PointMeasure { points, weights })
}

// ---------------------------------------------------------------------------
// Domain-side detectors

#[derive(PartialEq)]
struct Node(f64, usize);

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Graph distances from `src` along mesh edges measured in the reference
/// chart, up to `cutoff` (farther vertices stay at `∞`).
pub fn reference_distances(mesh: &SurfaceMesh, src: usize, cutoff: f64) -> Vec<f64> {
    let refp = mesh.reference();
    let mut d = vec![f64::INFINITY; mesh.n_vertices()];
    let mut heap = BinaryHeap::new();
    d[src] = 0.0;
    heap.push(Node(0.0, src));
    while let Some(Node(dv, v)) = heap.pop() {
        if dv > d[v] {
            continue;
        }
        for &w in mesh.ring(v) {
            let nd = dv + chord(&refp[v], &refp[w]);
            if nd < d[w] && nd <= cutoff {
                d[w] = nd;
                heap.push(Node(nd, w));
            }
        }
    }
    d
}

fn mean_reference_edge(mesh: &SurfaceMesh) -> f64 {
    let r = mesh.reference();
    let e = mesh.edges();
    e.iter().map(|[a, b]| chord(&r[*a], &r[*b])).sum::<f64>() / e.len().max(1) as f64
}

fn reference_diameter(mesh: &SurfaceMesh) -> f64 {
    let r = mesh.reference();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in r {
        for i in 0..3 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    (0..3).map(|i| (hi[i] - lo[i]).powi(2)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AtomOptions {
    /// Mass quantum a ball must keep.
    pub threshold: f64,
    /// Decreasing radii; the last one is the floor.
    pub radii: Vec<f64>,
}

impl AtomOptions {
    /// Threshold `0.1 ×` total area, dyadic radii from half the reference
    /// diameter down to a floor of twice the mean reference edge length.
    pub fn for_immersion(imm: &Immersion) -> Result<Self> {
        let total = induced_metric(imm)?.total_area();
        let floor = 2.0 * mean_reference_edge(&imm.mesh);
        Ok(AtomOptions { threshold: 0.1 * total, radii: dyadic_radii(0.5 * reference_diameter(&imm.mesh), floor) })
    }
}

/// `start, start/2, …` while above `floor`, then `floor` itself.
pub fn dyadic_radii(start: f64, floor: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = start;
    while r > floor && out.len() < 64 {
        out.push(r);
        r *= 0.5;
    }
    out.push(floor);
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Atom {
    pub vertex: usize,
    pub reference_position: [f64; 3],
    /// Ball masses along the radius grid.
    pub masses: Vec<f64>,
}

/// Vertices whose intrinsic balls keep mass `≥ threshold` down to the
/// smallest radius. Candidates closer than twice the floor to a heavier one
/// are suppressed.
pub fn detect_atoms(mesh: &SurfaceMesh, weights: &[f64], options: &AtomOptions) -> Result<Vec<Atom>> {
    if !(options.threshold > 0.0) {
        return Err(Error::InvalidParameter("atom threshold must be positive".into()));
    }
    if weights.len() != mesh.n_vertices() {
        return Err(Error::DimensionMismatch { expected: mesh.n_vertices(), got: weights.len() });
    }
    if options.radii.is_empty() || options.radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidParameter("atom radii must be positive".into()));
    }
    let floor = options.radii.iter().copied().fold(f64::INFINITY, f64::min);
    let rmax = options.radii.iter().copied().fold(0.0, f64::max);
    let mass_in = |d: &[f64], r: f64| d.iter().zip(weights).filter(|(d, _)| **d <= r).fold(0.0, |a, (_, w)| a + w);

    let screen = par::map_indexed(mesh.n_vertices(), |v| mass_in(&reference_distances(mesh, v, floor), floor));
    let mut candidates: Vec<usize> = (0..mesh.n_vertices()).filter(|&v| screen[v] >= options.threshold).collect();
    candidates.sort_by(|a, b| screen[*b].total_cmp(&screen[*a]).then(a.cmp(b)));

    let mut atoms: Vec<Atom> = Vec::new();
    let mut blocked = vec![false; mesh.n_vertices()];
    for v in candidates {
        if blocked[v] {
            continue;
        }
        let d = reference_distances(mesh, v, rmax.max(2.0 * floor));
        for (w, dw) in d.iter().enumerate() {
            if *dw <= 2.0 * floor {
                blocked[w] = true;
            }
        }
        atoms.push(Atom {
            vertex: v,
            reference_position: mesh.reference()[v],
            masses: options.radii.iter().map(|&r| mass_in(&d, r)).collect(),
        });
    }
    Ok(atoms)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeckOptions {
    /// Mass each side of the annulus must carry.
    pub mass_threshold: f64,
    /// Largest image diameter of a bounding circle.
    pub diameter_threshold: f64,
    /// Outer radius `R` of the dyadic family; defaults to half the
    /// eccentricity of the center.
    pub outer_radius: Option<f64>,
}

impl NeckOptions {
    /// Mass threshold `0.1 ×` total area; diameter threshold `0.1 ×` the
    /// ambient diameter scale (sphere diameter, or the image diameter in
    /// flat space).
    pub fn for_immersion(imm: &Immersion) -> Result<Self> {
        let total = induced_metric(imm)?.total_area();
        let scale = match imm.ambient.kind {
            AmbientKind::Sphere { radius, .. } => 2.0 * radius,
            _ => image_diameter(imm),
        };
        Ok(NeckOptions { mass_threshold: 0.1 * total, diameter_threshold: 0.1 * scale, outer_radius: None })
    }
}

fn image_diameter(imm: &Immersion) -> f64 {
    let q = imm.q();
    let mut lo = vec![f64::INFINITY; q];
    let mut hi = vec![f64::NEG_INFINITY; q];
    for v in 0..imm.n_vertices() {
        for (i, x) in imm.point(v).iter().enumerate() {
            lo[i] = lo[i].min(*x);
            hi[i] = hi[i].max(*x);
        }
    }
    lo.iter().zip(&hi).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeckFlag {
    pub center: usize,
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Area between the two circles.
    pub annulus_area: f64,
    pub inner_diameter: f64,
    pub outer_diameter: f64,
    /// Area enclosed by the inner circle.
    pub inner_mass: f64,
    /// Area beyond the outer circle.
    pub outer_mass: f64,
}

/// Image points of the level set `{d = r}` along mesh edges.
fn level_curve(imm: &Immersion, d: &[f64], r: f64) -> Vec<Vec<f64>> {
    let mut pts = Vec::new();
    for &[a, b] in imm.mesh.edges() {
        let (da, db) = (d[a], d[b]);
        if !(da.is_finite() && db.is_finite()) {
            continue;
        }
        let (lo, hi, pl, ph) = if da <= db { (da, db, a, b) } else { (db, da, b, a) };
        if lo <= r && r < hi {
            let t = (r - lo) / (hi - lo);
            let (x, y) = (imm.point(pl), imm.point(ph));
            pts.push(x.iter().zip(y).map(|(u, v)| u + t * (v - u)).collect());
        }
    }
    pts
}

fn point_set_diameter(pts: &[Vec<f64>]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            best = best.max(chord(&pts[i], &pts[j]));
        }
    }
    best
}

/// Dyadic annuli `(R/2^{j+1}, R/2^j)`, `j < depth`, around each center whose
/// bounding circles both have small image diameter while mass sits on both
/// sides.
pub fn detect_necks(
    imm: &Immersion,
    centers: &[usize],
    depth: usize,
    options: &NeckOptions,
) -> Result<Vec<NeckFlag>> {
    if depth < 2 {
        return Err(Error::InvalidParameter(format!("neck depth must be at least 2, got {depth}")));
    }
    if let Some(&c) = centers.iter().find(|&&c| c >= imm.n_vertices()) {
        return Err(Error::InvalidParameter(format!("neck center {c} is not a vertex")));
    }
    let weights = vertex_areas(imm);
    let per_center = par::map_indexed(centers.len(), |k| {
        let c = centers[k];
        let d = reference_distances(&imm.mesh, c, f64::INFINITY);
        let ecc = d.iter().copied().filter(|x| x.is_finite()).fold(0.0, f64::max);
        let big_r = options.outer_radius.unwrap_or(0.5 * ecc);
        let mut flags = Vec::new();
        for j in 0..depth {
            let outer = big_r / f64::powi(2.0, j as i32);
            let inner = 0.5 * outer;
            let (mut m_in, mut m_ann, mut m_out) = (0.0, 0.0, 0.0);
            for (dv, w) in d.iter().zip(&weights) {
                if *dv <= inner {
                    m_in += w;
                } else if *dv <= outer {
                    m_ann += w;
                } else {
                    m_out += w;
                }
            }
            let ci = level_curve(imm, &d, inner);
            let co = level_curve(imm, &d, outer);
            if ci.is_empty() || co.is_empty() {
                continue;
            }
            let (di, dout) = (point_set_diameter(&ci), point_set_diameter(&co));
            if di <= options.diameter_threshold
                && dout <= options.diameter_threshold
                && m_in >= options.mass_threshold
                && m_out >= options.mass_threshold
            {
                flags.push(NeckFlag {
                    center: c,
                    inner_radius: inner,
                    outer_radius: outer,
                    annulus_area: m_ann,
                    inner_diameter: di,
                    outer_diameter: dout,
                    inner_mass: m_in,
                    outer_mass: m_out,
                });
            }
        }
        flags
    });
    Ok(per_center.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subdivision_centroids_are_equal_area_partition() {
        for k in 1..6 {
            let c = subdivision_centroids(k);
            assert_eq!(c.len(), k * k);
            let (su, sv) = c.iter().fold((0.0, 0.0), |(a, b), (u, v)| (a + u, b + v));
            assert!((su / (k * k) as f64 - 1.0 / 3.0).abs() < 1e-12);
            assert!((sv / (k * k) as f64 - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn geodesic_metric_matches_arc_length() {
        let m = BallMetric::Geodesic { radius: 2.0 };
        let d = m.distance(&[2.0, 0.0, 0.0], &[0.0, 1.0, 0.0]);
        assert!((d - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn dyadic_radii_end_at_floor() {
        assert_eq!(dyadic_radii(1.0, 0.2), vec![1.0, 0.5, 0.25, 0.2]);
        assert_eq!(dyadic_radii(0.1, 0.2), vec![0.2]);
    }
}
