//! Induced metric, areas, lengths and mixed Voronoi vertex areas.

use serde::Serialize;

use super::{dist, Immersion, DEGENERACY_FACTOR};
use crate::error::{Error, Result};
use crate::par;
use crate::real::{dot, Real};

/// Per-face induced metric in the simplex chart `E = [x1 - x0, x2 - x0]`,
/// where the reference triangle is the standard unit right triangle.
#[derive(Clone, Debug, Serialize)]
pub struct MetricField {
    /// `[g11, g12, g22]` per face.
    pub metrics: Vec<[f64; 3]>,
    pub face_areas: Vec<f64>,
    /// Boundary edge lengths in loop order.
    pub boundary_edge_lengths: Vec<f64>,
}

impl MetricField {
    pub fn total_area(&self) -> f64 {
        par::ordered_sum(&self.face_areas)
    }

    pub fn boundary_length(&self) -> f64 {
        par::ordered_sum(&self.boundary_edge_lengths)
    }
}

/// Gram matrix `[|a|², a·b, |b|²]` of the two edges leaving `p0`.
#[inline]
pub fn face_gram<T: Real>(p0: &[T], p1: &[T], p2: &[T]) -> [T; 3] {
    let mut g = [T::zero(); 3];
    for k in 0..p0.len() {
        let a = p1[k] - p0[k];
        let b = p2[k] - p0[k];
        g[0] += a * a;
        g[1] += a * b;
        g[2] += b * b;
    }
    g
}

#[inline]
pub fn gram_det<T: Real>(g: &[T; 3]) -> T {
    g[0] * g[2] - g[1] * g[1]
}

#[inline]
pub fn triangle_area<T: Real>(p0: &[T], p1: &[T], p2: &[T]) -> T {
    let g = face_gram(p0, p1, p2);
    gram_det(&g).sqrt() * 0.5
}

/// Mixed Voronoi area shares of the three corners of a triangle.
pub fn mixed_voronoi<T: Real>(p: [&[T]; 3]) -> [T; 3] {
    let e = |i: usize, j: usize| -> Vec<T> { p[j].iter().zip(p[i]).map(|(a, b)| *a - *b).collect() };
    let area = triangle_area(p[0], p[1], p[2]);
    // corner dot products
    let mut cdot = [T::zero(); 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        cdot[i] = dot(&e(i, j), &e(i, k));
    }
    if let Some(obtuse) = (0..3).find(|&i| cdot[i].val() < 0.0) {
        let mut out = [area * 0.25; 3];
        out[obtuse] = area * 0.5;
        return out;
    }
    // cot at corner i = (e_ij . e_ik) / (2 A)
    let inv = (area * 2.0).recip();
    let cot = [cdot[0] * inv, cdot[1] * inv, cdot[2] * inv];
    let mut out = [T::zero(); 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        let lij = dot(&e(i, j), &e(i, j));
        let lik = dot(&e(i, k), &e(i, k));
        out[i] = (lij * cot[k] + lik * cot[j]) * 0.125;
    }
    out
}

fn floor(imm: &Immersion) -> f64 {
    let h = imm.mean_edge_length();
    DEGENERACY_FACTOR * h * h * h * h
}

pub(crate) fn check_faces(imm: &Immersion) -> Result<()> {
    let fl = floor(imm);
    for (fi, f) in imm.mesh.faces().iter().enumerate() {
        let g = face_gram(imm.point(f[0]), imm.point(f[1]), imm.point(f[2]));
        if !(gram_det(&g) >= fl) || fl == 0.0 {
            return Err(Error::DegenerateFace(fi));
        }
    }
    Ok(())
}

pub fn induced_metric(imm: &Immersion) -> Result<MetricField> {
    let fl = floor(imm);
    let faces = imm.mesh.faces();
    let metrics = par::try_map_indexed(faces.len(), |fi| {
        let f = faces[fi];
        let g = face_gram(imm.point(f[0]), imm.point(f[1]), imm.point(f[2]));
        if !(gram_det(&g) >= fl) || fl == 0.0 {
            return Err(Error::DegenerateFace(fi));
        }
        Ok(g)
    })?;
    let face_areas = metrics.iter().map(|g| 0.5 * gram_det(g).sqrt()).collect();
    let boundary_edge_lengths = boundary_edge_lengths(imm);
    Ok(MetricField { metrics, face_areas, boundary_edge_lengths })
}

fn boundary_edge_lengths(imm: &Immersion) -> Vec<f64> {
    imm.mesh.boundary_edges().map(|[a, b]| dist(imm.point(a), imm.point(b))).collect()
}

pub fn area(imm: &Immersion) -> Result<f64> {
    Ok(induced_metric(imm)?.total_area())
}

pub fn boundary_length(imm: &Immersion) -> f64 {
    par::ordered_sum(&boundary_edge_lengths(imm))
}

/// Mixed Voronoi vertex areas; they partition the total area exactly.
pub fn vertex_areas(imm: &Immersion) -> Vec<f64> {
    let mut out = vec![0.0; imm.n_vertices()];
    for f in imm.mesh.faces() {
        let a = mixed_voronoi([imm.point(f[0]), imm.point(f[1]), imm.point(f[2])]);
        for k in 0..3 {
            out[f[k]] += a[k];
        }
    }
    out
}

/// Gradient of the total area with respect to vertex positions (flat layout).
pub fn area_gradient(imm: &Immersion) -> Vec<f64> {
    let q = imm.q();
    let mut grad = vec![0.0; imm.positions.len()];
    for f in imm.mesh.faces() {
        let (p0, p1, p2) = (imm.point(f[0]), imm.point(f[1]), imm.point(f[2]));
        let g = face_gram(p0, p1, p2);
        let a2 = gram_det(&g);
        if a2 <= 0.0 {
            continue;
        }
        // A = ½√(|a|²|b|² − (a·b)²)
        let k = 0.25 / (0.5 * a2.sqrt());
        for c in 0..q {
            let a = p1[c] - p0[c];
            let b = p2[c] - p0[c];
            let da = k * (g[2] * a - g[1] * b);
            let db = k * (g[0] * b - g[1] * a);
            grad[f[1] * q + c] += da;
            grad[f[2] * q + c] += db;
            grad[f[0] * q + c] -= da + db;
        }
    }
    grad
}

/// Gradient of the boundary length (flat layout).
pub fn length_gradient(imm: &Immersion) -> Vec<f64> {
    let q = imm.q();
    let mut grad = vec![0.0; imm.positions.len()];
    for [a, b] in imm.mesh.boundary_edges() {
        let (pa, pb) = (imm.point(a), imm.point(b));
        let l = dist(pa, pb);
        if l == 0.0 {
            continue;
        }
        for c in 0..q {
            let t = (pb[c] - pa[c]) / l;
            grad[b * q + c] += t;
            grad[a * q + c] -= t;
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::AmbientManifold;
    use crate::mesh::SurfaceMesh;
    use std::sync::Arc;

    fn triangle(pts: [[f64; 3]; 3]) -> Immersion {
        let mesh = Arc::new(SurfaceMesh::new(3, vec![[0, 1, 2]], pts.to_vec()).unwrap());
        let pos = pts.iter().flatten().cloned().collect();
        Immersion::new_unchecked(mesh, pos, AmbientManifold::euclidean(3), None).unwrap()
    }

    #[test]
    fn unit_right_triangle_is_isometric() {
        let t = triangle([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let m = induced_metric(&t).unwrap();
        assert_eq!(m.metrics[0], [1.0, 0.0, 1.0]);
        assert_eq!(m.face_areas[0], 0.5);
        let mut t2 = t.clone();
        t2.positions.iter_mut().for_each(|x| *x *= 2.0);
        assert_eq!(induced_metric(&t2).unwrap().metrics[0], [4.0, 0.0, 4.0]);
    }

    #[test]
    fn collapsed_triangle_is_degenerate() {
        let t = triangle([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        assert_eq!(induced_metric(&t).unwrap_err(), Error::DegenerateFace(0));
    }

    #[test]
    fn voronoi_shares_partition_area() {
        for pts in [
            [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.3, 0.8, 0.0]],
            [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.9, 0.1, 0.2]],
        ] {
            let t = triangle(pts);
            let a: f64 = vertex_areas(&t).iter().sum();
            assert!((a - area(&t).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn analytic_gradients_match_differences() {
        let t = triangle([[0.1, 0.0, 0.3], [1.0, 0.2, 0.0], [0.3, 0.8, -0.1]]);
        let ga = area_gradient(&t);
        let gl = length_gradient(&t);
        let h = 1e-6;
        for i in 0..9 {
            let mut p = t.clone();
            p.positions[i] += h;
            let mut m = t.clone();
            m.positions[i] -= h;
            let fa = (area(&p).unwrap() - area(&m).unwrap()) / (2.0 * h);
            let fl = (boundary_length(&p) - boundary_length(&m)) / (2.0 * h);
            assert!((fa - ga[i]).abs() < 1e-8);
            assert!((fl - gl[i]).abs() < 1e-8);
        }
    }
}
