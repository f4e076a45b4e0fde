//! Cotangent Laplacian in the induced metric and the sparse solves built on it.

use super::geometry::vertex_areas;
use super::Immersion;
use crate::real::dot;

/// Cotangent edge weights `½(cot α + cot β)` in the induced metric, in edge order.
pub fn cotangent_weights(imm: &Immersion) -> Vec<([usize; 2], f64)> {
    let mut w = std::collections::BTreeMap::<[usize; 2], f64>::new();
    for f in imm.mesh.faces() {
        for k in 0..3 {
            let (i, j, o) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
            let po = imm.point(o);
            let a: Vec<f64> = imm.point(i).iter().zip(po).map(|(x, y)| x - y).collect();
            let b: Vec<f64> = imm.point(j).iter().zip(po).map(|(x, y)| x - y).collect();
            let c = dot(&a, &b);
            let s = (dot(&a, &a) * dot(&b, &b) - c * c).max(0.0).sqrt();
            *w.entry([i.min(j), i.max(j)]).or_insert(0.0) += 0.5 * c / s;
        }
    }
    w.into_iter().collect()
}

/// Symmetric operator `x ↦ diag(d) x + Σ_edges w_ij (x_i - x_j)(e_i - e_j)`.
pub struct GraphOperator {
    pub diag_mass: Vec<f64>,
    pub weights: Vec<([usize; 2], f64)>,
}

impl GraphOperator {
    pub fn n(&self) -> usize {
        self.diag_mass.len()
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, (m, xi)) in out.iter_mut().zip(self.diag_mass.iter().zip(x)) {
            *o = m * xi;
        }
        for ([i, j], w) in &self.weights {
            let d = w * (x[*i] - x[*j]);
            out[*i] += d;
            out[*j] -= d;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = self.diag_mass.clone();
        for ([i, j], w) in &self.weights {
            d[*i] += w;
            d[*j] += w;
        }
        d
    }

    /// Jacobi-preconditioned conjugate gradients on the unknowns flagged `free`;
    /// the other entries of `x` are held fixed.
    pub fn solve(&self, rhs: &[f64], x: &mut [f64], free: &[bool], rel_tol: f64) {
        let n = self.n();
        let diag = self.diagonal();
        let mut r = vec![0.0; n];
        self.apply(x, &mut r);
        for v in 0..n {
            r[v] = if free[v] { rhs[v] - r[v] } else { 0.0 };
        }
        let precond = |r: &[f64]| -> Vec<f64> {
            (0..n).map(|v| if free[v] && diag[v] > 0.0 { r[v] / diag[v] } else { 0.0 }).collect()
        };
        let target = rel_tol * dot(rhs, rhs).sqrt().max(dot(&r, &r).sqrt());
        let mut z = precond(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];
        for _ in 0..(4 * n).max(100) {
            if dot(&r, &r).sqrt() <= target {
                break;
            }
            self.apply(&p, &mut ap);
            for v in 0..n {
                if !free[v] {
                    ap[v] = 0.0;
                }
            }
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                break;
            }
            let alpha = rz / pap;
            for v in 0..n {
                x[v] += alpha * p[v];
                r[v] -= alpha * ap[v];
            }
            z = precond(&r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for v in 0..n {
                p[v] = z[v] + beta * p[v];
            }
        }
    }
}

/// Solves the cotangent Laplace equation with Dirichlet data.
pub fn harmonic_extension(imm: &Immersion, fixed: &[Option<f64>]) -> Vec<f64> {
    let op = GraphOperator { diag_mass: vec![0.0; imm.n_vertices()], weights: cotangent_weights(imm) };
    let mut u: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    let free: Vec<bool> = fixed.iter().map(|f| f.is_none()).collect();
    op.solve(&vec![0.0; u.len()], &mut u, &free, 1e-13);
    u
}

/// Applies `(M + α L + β L M⁻¹ L)⁻¹` coordinatewise to a per-vertex field,
/// where `M` is the lumped mass and `L` the cotangent Laplacian with negative
/// weights clipped.
pub fn sobolev_smooth(imm: &Immersion, alpha: f64, beta: f64, field: &[f64]) -> Vec<f64> {
    let q = imm.q();
    let n = imm.n_vertices();
    let mass = vertex_areas(imm);
    let lap = GraphOperator {
        diag_mass: vec![0.0; n],
        weights: cotangent_weights(imm).into_iter().map(|(e, w)| (e, w.max(0.0))).collect(),
    };
    let ldiag = lap.diagonal();
    let mut tmp = vec![0.0; n];
    let mut tmp2 = vec![0.0; n];
    let mut apply = |x: &[f64], out: &mut [f64]| {
        lap.apply(x, &mut tmp);
        for v in 0..n {
            tmp2[v] = tmp[v] / mass[v];
        }
        lap.apply(&tmp2, out);
        for v in 0..n {
            out[v] = beta * out[v] + alpha * tmp[v] + mass[v] * x[v];
        }
    };
    let diag: Vec<f64> = (0..n).map(|v| mass[v] + alpha * ldiag[v] + beta * ldiag[v] * ldiag[v] / mass[v]).collect();
    let mut out = vec![0.0; field.len()];
    for c in 0..q {
        let rhs: Vec<f64> = (0..n).map(|v| field[v * q + c]).collect();
        let x = pcg(&mut apply, &diag, &rhs, 1e-8, 20 * n + 100);
        for v in 0..n {
            out[v * q + c] = x[v];
        }
    }
    out
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
fn pcg(apply: &mut impl FnMut(&[f64], &mut [f64]), diag: &[f64], rhs: &[f64], rel_tol: f64, max_iter: usize) -> Vec<f64> {
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let target = rel_tol * dot(rhs, rhs).sqrt();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(a, d)| a / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        if dot(&r, &r).sqrt() <= target {
            break;
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let a = rz / pap;
        for v in 0..n {
            x[v] += a * p[v];
            r[v] -= a * ap[v];
        }
        for v in 0..n {
            z[v] = r[v] / diag[v];
        }
        let rz_new = dot(&r, &z);
        let b = rz_new / rz;
        rz = rz_new;
        for v in 0..n {
            p[v] = z[v] + b * p[v];
        }
    }
    x
}
