//! Discrete second fundamental form by local quadratic fitting.
//!
//! At a vertex `x` with stencil offsets `d_j = x_j - x`, tangent coordinates
//! `(u_j, v_j)` are taken in an area-weighted estimate of the tangent plane,
//! normalised by the RMS stencil radius. Each ambient coordinate is fitted as
//! `d ≈ x_u u + x_v v + ½ x_uu u² + x_uv uv + ½ x_vv v²` by least squares.
//! The fitted Hessians are projected onto the normal space of the surface
//! inside `T_x M` and contracted with the inverse fitted metric.

use serde::Serialize;

use super::geometry::{face_gram, gram_det, mixed_voronoi};
use super::{Immersion, LocalStencil};
use crate::ambient::AmbientManifold;
use crate::error::{Error, Result};
use crate::par;
use crate::real::{dot, inv_sym2, solve_spd, Real};

const FIT_PIVOT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
pub struct StencilInfo {
    /// Two-ring stencil in use.
    pub extended: bool,
    /// Number of neighbours entering the fit.
    pub size: usize,
}

/// Linear map from stencil offsets to the fitted jet at one vertex.
#[derive(Clone, Debug)]
pub struct FitOperator {
    pub extended: bool,
    /// `weights[j][a]`: coefficient `a` (of `x_u, x_v, x_uu, x_uv, x_vv`) contributed by neighbour `j`.
    pub weights: Vec<[f64; 5]>,
    /// Inverse fitted metric `[g^11, g^12, g^22]` in the normalised fit chart.
    pub ginv: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct ShapeField {
    /// `f = |II|²` per vertex.
    pub f: Vec<f64>,
    /// Orthonormal basis of the normal space of the surface inside `T M`, per vertex.
    pub normals: Vec<Vec<Vec<f64>>>,
    /// Mixed Voronoi vertex areas.
    pub vertex_areas: Vec<f64>,
    pub stencils: Vec<StencilInfo>,
    pub fits: Vec<FitOperator>,
}

pub(crate) struct LocalFit<T> {
    pub f: T,
    pub area: T,
    /// Tangent-projected fitted first derivatives.
    pub jac: [Vec<T>; 2],
    pub ginv: [T; 3],
    pub weights: Vec<[T; 5]>,
}

/// Face tangent frame `(e1, e2, g⁻¹, area)`.
type FaceFrame<T> = (Vec<T>, Vec<T>, [T; 3], T);

/// Area-weighted sum of the face tangent projectors around the centre vertex, applied to `d`.
fn plane_project<T: Real>(frames: &[FaceFrame<T>], d: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); d.len()];
    for (e1, e2, gi, a) in frames {
        let s1 = dot(e1, d);
        let s2 = dot(e2, d);
        let c1 = (gi[0] * s1 + gi[1] * s2) * *a;
        let c2 = (gi[1] * s1 + gi[2] * s2) * *a;
        for k in 0..d.len() {
            out[k] += e1[k] * c1 + e2[k] * c2;
        }
    }
    out
}

/// Fits the jet at `verts[0]` of `st` from local positions `pos` (`q` per vertex).
/// Returns `None` when the fit is rank deficient or a face is degenerate.
pub(crate) fn local_fit<T: Real>(
    pos: &[T],
    q: usize,
    st: &LocalStencil,
    extended: bool,
    ambient: &AmbientManifold,
) -> Option<LocalFit<T>> {
    let p = |i: usize| &pos[i * q..(i + 1) * q];
    let c = p(0);
    let offset = |i: usize| -> Vec<T> { p(i).iter().zip(c).map(|(a, b)| *a - *b).collect() };

    let mut frames = Vec::with_capacity(st.faces.len());
    let mut area = T::zero();
    for f in &st.faces {
        let (p0, p1, p2) = (p(f[0]), p(f[1]), p(f[2]));
        let g = face_gram(p0, p1, p2);
        let det = gram_det(&g);
        if !(det.val() > 0.0) {
            return None;
        }
        let (i00, i01, i11, _) = inv_sym2(g[0], g[1], g[2]);
        let e1: Vec<T> = p1.iter().zip(p0).map(|(a, b)| *a - *b).collect();
        let e2: Vec<T> = p2.iter().zip(p0).map(|(a, b)| *a - *b).collect();
        frames.push((e1, e2, [i00, i01, i11], det.sqrt() * 0.5));
        let shares = mixed_voronoi([p0, p1, p2]);
        let corner = f.iter().position(|&x| x == 0).expect("stencil face misses centre");
        area += shares[corner];
    }

    // Tangent frame guess.
    let ta = plane_project(&frames, &offset(st.guide.0));
    let na = dot(&ta, &ta).sqrt();
    if !(na.val() > 0.0) {
        return None;
    }
    let a: Vec<T> = ta.iter().map(|x| *x / na).collect();
    let ortho = |i: usize| -> (Vec<T>, f64) {
        let t = plane_project(&frames, &offset(i));
        let s = dot(&t, &a);
        let r: Vec<T> = t.iter().zip(&a).map(|(x, y)| *x - s * *y).collect();
        let ratio = dot(&r, &r).val().sqrt() / dot(&t, &t).val().sqrt().max(f64::MIN_POSITIVE);
        (r, ratio)
    };
    let (mut tb, ratio) = ortho(st.guide.1);
    if !(ratio > 0.2) {
        let best = (1..=st.ring_len)
            .map(|i| (i, ortho(i).1))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap_or(std::cmp::Ordering::Equal))?;
        tb = ortho(best.0).0;
    }
    let nb = dot(&tb, &tb).sqrt();
    if !(nb.val() > 0.0) {
        return None;
    }
    let b: Vec<T> = tb.iter().map(|x| *x / nb).collect();

    // Least-squares design.
    let support = st.support(extended);
    let k = support - 1;
    if k < 5 {
        return None;
    }
    let offsets: Vec<Vec<T>> = (1..support).map(offset).collect();
    let mut r2 = T::zero();
    for d in &offsets {
        r2 += dot(d, d);
    }
    let inv_l = (r2 / k as f64).sqrt().recip();
    let rows: Vec<[T; 5]> = offsets
        .iter()
        .map(|d| {
            let u = dot(d, &a) * inv_l;
            let v = dot(d, &b) * inv_l;
            [u, v, u * u * 0.5, u * v, v * v * 0.5]
        })
        .collect();
    let mut m = vec![T::zero(); 25];
    for r in &rows {
        for i in 0..5 {
            for j in 0..5 {
                m[i * 5 + j] += r[i] * r[j];
            }
        }
    }
    let mut rhs = vec![T::zero(); 5 * k];
    for (j, r) in rows.iter().enumerate() {
        for i in 0..5 {
            rhs[i * k + j] = r[i];
        }
    }
    solve_spd(&mut m, 5, &mut rhs, k, FIT_PIVOT_TOL)?;
    let weights: Vec<[T; 5]> = (0..k).map(|j| std::array::from_fn(|i| rhs[i * k + j])).collect();

    let mut coef = vec![vec![T::zero(); q]; 5];
    for (j, d) in offsets.iter().enumerate() {
        for i in 0..5 {
            let w = weights[j][i];
            for s in 0..q {
                coef[i][s] += w * d[s];
            }
        }
    }
    let xu = ambient.tangent_project_at(c, &coef[0]);
    let xv = ambient.tangent_project_at(c, &coef[1]);
    let (g0, g1, g2) = (dot(&xu, &xu), dot(&xu, &xv), dot(&xv, &xv));
    let (i00, i01, i11, det) = inv_sym2(g0, g1, g2);
    if !(det.val() > 0.0) {
        return None;
    }

    let normal_part = |h: &[T]| -> Vec<T> {
        let t = ambient.tangent_project_at(c, h);
        let s1 = dot(&xu, &t);
        let s2 = dot(&xv, &t);
        let k1 = i00 * s1 + i01 * s2;
        let k2 = i01 * s1 + i11 * s2;
        (0..q).map(|s| t[s] - k1 * xu[s] - k2 * xv[s]).collect()
    };
    let ii = [normal_part(&coef[2]), normal_part(&coef[3]), normal_part(&coef[4])];
    let mut ip = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let x = dot(&ii[i], &ii[j]);
            ip[i][j] = x;
            ip[j][i] = x;
        }
    }
    let gi = [[i00, i01], [i01, i11]];
    let idx = |i: usize, j: usize| i + j;
    let mut f = T::zero();
    for i in 0..2 {
        for j in 0..2 {
            for kk in 0..2 {
                for l in 0..2 {
                    f += gi[i][kk] * gi[j][l] * ip[idx(i, j)][idx(kk, l)];
                }
            }
        }
    }
    Some(LocalFit { f, area, jac: [xu, xv], ginv: [i00, i01, i11], weights })
}

/// Copies the positions of the first `support` stencil vertices into a local buffer.
pub(crate) fn gather(imm: &Immersion, st: &LocalStencil, support: usize) -> Vec<f64> {
    let q = imm.q();
    let mut out = Vec::with_capacity(support * q);
    for &g in &st.verts[..support] {
        out.extend_from_slice(imm.point(g));
    }
    out
}

/// Fits vertex `v`, falling back to the two-ring when the one-ring cannot
/// determine a quadratic. Returns the fit and whether the two-ring was used.
pub(crate) fn fit_vertex(imm: &Immersion, v: usize) -> Result<(LocalFit<f64>, bool)> {
    let st = imm.mesh.stencil(v);
    let q = imm.q();
    let pos = gather(imm, st, st.verts.len());
    if !st.prefer_extended {
        if let Some(fit) = local_fit(&pos, q, st, false, &imm.ambient) {
            return Ok((fit, false));
        }
    }
    local_fit(&pos, q, st, true, &imm.ambient)
        .map(|fit| (fit, true))
        .ok_or(Error::StencilRankDeficient(v))
}

/// Orthonormal basis of the normal space of `span(xu, xv)` inside `T_c M`.
fn normal_frame(ambient: &AmbientManifold, c: &[f64], xu: &[f64], xv: &[f64]) -> Vec<Vec<f64>> {
    let q = c.len();
    let want = ambient.dim().saturating_sub(2);
    let mut basis: Vec<Vec<f64>> = vec![xu.to_vec(), xv.to_vec()];
    let mut out = Vec::with_capacity(want);
    // Gram-Schmidt the tangent vectors first so they can be removed below.
    let mut tang: Vec<Vec<f64>> = Vec::new();
    for t in basis.drain(..) {
        let mut t = t;
        for e in &tang {
            let s = dot(&t, e);
            t.iter_mut().zip(e).for_each(|(x, y)| *x -= s * y);
        }
        let n = dot(&t, &t).sqrt();
        t.iter_mut().for_each(|x| *x /= n);
        tang.push(t);
    }
    for i in 0..q {
        if out.len() == want {
            break;
        }
        let mut e = vec![0.0; q];
        e[i] = 1.0;
        let mut t = ambient.tangent_project_at(c, &e);
        for _ in 0..2 {
            for b in tang.iter().chain(out.iter()) {
                let s = dot(&t, b);
                t.iter_mut().zip(b).for_each(|(x, y)| *x -= s * y);
            }
        }
        let n = dot(&t, &t).sqrt();
        if n > 0.5 {
            t.iter_mut().for_each(|x| *x /= n);
            out.push(t);
        }
    }
    out
}

pub fn shape_operator(imm: &Immersion) -> Result<ShapeField> {
    let per = par::try_map_indexed(imm.n_vertices(), |v| {
        let (fit, extended) = fit_vertex(imm, v)?;
        let frame = normal_frame(&imm.ambient, imm.point(v), &fit.jac[0], &fit.jac[1]);
        Ok((fit, extended, frame))
    })?;
    let mut field = ShapeField {
        f: Vec::with_capacity(per.len()),
        normals: Vec::with_capacity(per.len()),
        vertex_areas: Vec::with_capacity(per.len()),
        stencils: Vec::with_capacity(per.len()),
        fits: Vec::with_capacity(per.len()),
    };
    for (fit, extended, frame) in per {
        field.f.push(fit.f.max(0.0));
        field.vertex_areas.push(fit.area);
        field.normals.push(frame);
        field.stencils.push(StencilInfo { extended, size: fit.weights.len() });
        field.fits.push(FitOperator { extended, weights: fit.weights, ginv: fit.ginv });
    }
    Ok(field)
}

impl ShapeField {
    /// `∫ f² dA` as a vertex sum.
    pub fn bending_integral(&self) -> f64 {
        self.f.iter().zip(&self.vertex_areas).fold(0.0, |s, (f, a)| s + f * f * a)
    }
}

pub fn bending_integral(imm: &Immersion) -> Result<f64> {
    Ok(shape_operator(imm)?.bending_integral())
}
