//! The relaxed energy `E_σ = area + σ·length(∂) + σ⁴ ∫|II|⁴`, its exact
//! discrete gradient, the Finsler norm on variations and the dictionary
//! surrogate for the dual norm of `dE_σ`.

use serde::Serialize;

use crate::ambient::TestVectorField;
use crate::error::{Error, Result};
use crate::mesh::geometry::{area_gradient, face_gram, length_gradient};
use crate::mesh::shape::{fit_vertex, gather, local_fit, shape_operator, ShapeField};
use crate::mesh::{area, boundary_length, Immersion};
use crate::par;
use crate::real::{dot, inv_sym2, Dual};

/// Tangent lanes per forward-mode sweep.
const LANES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub sigma: f64,
    pub area_term: f64,
    pub boundary_term: f64,
    pub bending_term: f64,
    pub total: f64,
    pub sigma_derivative: f64,
    pub boundary_length: f64,
    pub bending_integral: f64,
}

impl EnergyBreakdown {
    pub fn from_parts(sigma: f64, area: f64, length: f64, bending: f64) -> Self {
        let s4 = sigma.powi(4);
        let area_term = area;
        let boundary_term = sigma * length;
        let bending_term = s4 * bending;
        EnergyBreakdown {
            sigma,
            area_term,
            boundary_term,
            bending_term,
            total: area_term + boundary_term + bending_term,
            sigma_derivative: length + 4.0 * sigma.powi(3) * bending,
            boundary_length: length,
            bending_integral: bending,
        }
    }

    /// Same immersion, different `σ`.
    pub fn at_sigma(&self, sigma: f64) -> Self {
        Self::from_parts(sigma, self.area_term, self.boundary_length, self.bending_integral)
    }

    /// `σ log(1/σ) L + σ⁴ log(1/σ) ∫|II|⁴`.
    pub fn entropy(&self) -> f64 {
        let s = self.sigma;
        if s <= 0.0 {
            return 0.0;
        }
        let lg = (1.0 / s).ln();
        s * lg * self.boundary_length + s.powi(4) * lg * self.bending_integral
    }
}

pub fn energy(imm: &Immersion, sigma: f64) -> Result<EnergyBreakdown> {
    check_sigma(sigma)?;
    let a = area(imm)?;
    let l = boundary_length(imm);
    let b = shape_operator(imm)?.bending_integral();
    Ok(EnergyBreakdown::from_parts(sigma, a, l, b))
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma must be a finite nonnegative number, got {sigma}")));
    }
    Ok(())
}

/// Per-vertex vectors in `ℝ^Q`, flat layout.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationField {
    pub q: usize,
    pub w: Vec<f64>,
    pub admissible: bool,
}

impl VariationField {
    /// Wraps `w` and records whether it is tangent to `M` (and to `N` on the boundary).
    pub fn new(imm: &Immersion, w: Vec<f64>) -> Result<Self> {
        if w.len() != imm.positions.len() {
            return Err(Error::DimensionMismatch { expected: imm.positions.len(), got: w.len() });
        }
        let mut p = w.clone();
        imm.project_variation(&mut p);
        let scale = w.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
        let defect = w.iter().zip(&p).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let admissible = defect <= 1e-9 * scale;
        Ok(VariationField { q: imm.q(), w, admissible })
    }

    /// Projects `w` onto the admissible tangent spaces.
    pub fn projected(imm: &Immersion, mut w: Vec<f64>) -> Self {
        imm.project_variation(&mut w);
        VariationField { q: imm.q(), w, admissible: true }
    }

    /// Samples an ambient vector field at the vertices.
    pub fn from_field(imm: &Immersion, field: &TestVectorField) -> Self {
        let mut w = Vec::with_capacity(imm.positions.len());
        for v in 0..imm.n_vertices() {
            w.extend(field.eval(imm.point(v)));
        }
        Self::projected(imm, w)
    }

    pub fn vector(&self, v: usize) -> &[f64] {
        &self.w[v * self.q..(v + 1) * self.q]
    }

    /// Coordinate pairing `Σ_v ⟨a_v, b_v⟩`.
    pub fn pairing(&self, other: &VariationField) -> f64 {
        dot(&self.w, &other.w)
    }

    pub fn l2_norm(&self) -> f64 {
        dot(&self.w, &self.w).sqrt()
    }

    pub fn max_norm(&self) -> f64 {
        self.w.chunks(self.q).map(|c| dot(c, c).sqrt()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, k: f64) -> Self {
        VariationField { q: self.q, w: self.w.iter().map(|x| k * x).collect(), admissible: self.admissible }
    }
}

/// Unprojected gradient of `∫|II|⁴` by local forward-mode differentiation.
pub fn bending_gradient(imm: &Immersion) -> Result<Vec<f64>> {
    let q = imm.q();
    let locals = par::try_map_indexed(imm.n_vertices(), |v| {
        let (_, extended) = fit_vertex(imm, v)?;
        let st = imm.mesh.stencil(v);
        let support = st.support(extended);
        let base = gather(imm, st, support);
        let n_in = base.len();
        let mut grad = vec![0.0; n_in];
        let mut seeded: Vec<Dual<LANES>> = base.iter().map(|&x| Dual::constant(x)).collect();
        for start in (0..n_in).step_by(LANES) {
            let end = (start + LANES).min(n_in);
            for (lane, i) in (start..end).enumerate() {
                seeded[i] = Dual::variable(base[i], lane);
            }
            let fit = local_fit(&seeded, q, st, extended, &imm.ambient).ok_or(Error::StencilRankDeficient(v))?;
            let term = fit.f * fit.f * fit.area;
            for (lane, i) in (start..end).enumerate() {
                grad[i] = term.d[lane];
                seeded[i] = Dual::constant(base[i]);
            }
        }
        Ok((support, grad))
    })?;
    let mut out = vec![0.0; imm.positions.len()];
    for (v, (support, grad)) in locals.into_iter().enumerate() {
        let st = imm.mesh.stencil(v);
        for (li, &g) in st.verts[..support].iter().enumerate() {
            for c in 0..q {
                out[g * q + c] += grad[li * q + c];
            }
        }
    }
    Ok(out)
}

/// Energy and its constraint-projected gradient.
pub fn energy_and_gradient(imm: &Immersion, sigma: f64) -> Result<(EnergyBreakdown, VariationField)> {
    let e = energy(imm, sigma)?;
    let mut g = area_gradient(imm);
    if sigma > 0.0 {
        let gl = length_gradient(imm);
        let gb = bending_gradient(imm)?;
        let s4 = sigma.powi(4);
        for i in 0..g.len() {
            g[i] += sigma * gl[i] + s4 * gb[i];
        }
    }
    Ok((e, VariationField::projected(imm, g)))
}

pub fn gradient(imm: &Immersion, sigma: f64) -> Result<VariationField> {
    Ok(energy_and_gradient(imm, sigma)?.1)
}

/// `‖w‖_∞ + max_faces |∇w| + ‖∇²w‖_{L⁴}` on the mesh.
pub fn finsler_norm(imm: &Immersion, field: &VariationField) -> Result<f64> {
    let shape = shape_operator(imm)?;
    finsler_norm_with(imm, &shape, field)
}

/// [`finsler_norm`] reusing a computed shape field.
pub fn finsler_norm_with(imm: &Immersion, shape: &ShapeField, field: &VariationField) -> Result<f64> {
    let q = imm.q();
    if field.w.len() != imm.positions.len() {
        return Err(Error::DimensionMismatch { expected: imm.positions.len(), got: field.w.len() });
    }
    let sup = field.max_norm();

    let faces = imm.mesh.faces();
    let grads = par::map_indexed(faces.len(), |fi| {
        let f = faces[fi];
        let g = face_gram(imm.point(f[0]), imm.point(f[1]), imm.point(f[2]));
        let (i00, i01, i11, _) = inv_sym2(g[0], g[1], g[2]);
        let w0 = field.vector(f[0]);
        let d1: Vec<f64> = field.vector(f[1]).iter().zip(w0).map(|(a, b)| a - b).collect();
        let d2: Vec<f64> = field.vector(f[2]).iter().zip(w0).map(|(a, b)| a - b).collect();
        let d1 = imm.ambient.tangent_project_at(imm.point(f[0]), &d1);
        let d2 = imm.ambient.tangent_project_at(imm.point(f[0]), &d2);
        (i00 * dot(&d1, &d1) + 2.0 * i01 * dot(&d1, &d2) + i11 * dot(&d2, &d2)).max(0.0).sqrt()
    });
    let lip = grads.into_iter().fold(0.0, f64::max);

    let hess = par::map_indexed(imm.n_vertices(), |v| {
        let fit = &shape.fits[v];
        let st = imm.mesh.stencil(v);
        let wv = field.vector(v);
        let mut h = vec![vec![0.0; q]; 3];
        for (j, wts) in fit.weights.iter().enumerate() {
            let wj = field.vector(st.verts[j + 1]);
            for a in 0..3 {
                for s in 0..q {
                    h[a][s] += wts[a + 2] * (wj[s] - wv[s]);
                }
            }
        }
        let h: Vec<Vec<f64>> = h.iter().map(|x| imm.ambient.tangent_project_at(imm.point(v), x)).collect();
        let gi = [[fit.ginv[0], fit.ginv[1]], [fit.ginv[1], fit.ginv[2]]];
        let mut n2 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        n2 += gi[i][k] * gi[j][l] * dot(&h[i + j], &h[k + l]);
                    }
                }
            }
        }
        let n2 = n2.max(0.0);
        n2 * n2 * shape.vertex_areas[v]
    });
    let l4 = par::ordered_sum(&hess).powf(0.25);
    Ok(sup + lip + l4)
}

/// Largest normalised pairing `|dE_σ(w)| / ‖w‖_Φ` over the dictionary fields
/// and the gradient direction itself.
pub fn criticality_norm(imm: &Immersion, sigma: f64, dictionary: &[TestVectorField]) -> Result<f64> {
    let (_, grad) = energy_and_gradient(imm, sigma)?;
    criticality_with_gradient(imm, &grad, dictionary)
}

/// [`criticality_norm`] for a precomputed gradient.
pub fn criticality_with_gradient(
    imm: &Immersion,
    grad: &VariationField,
    dictionary: &[TestVectorField],
) -> Result<f64> {
    if dictionary.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    check_dictionary(imm, dictionary)?;
    let shape = shape_operator(imm)?;
    let mut best = 0.0f64;
    let mut consider = |w: &VariationField| -> Result<()> {
        let p = grad.pairing(w);
        if p != 0.0 {
            let n = finsler_norm_with(imm, &shape, w)?;
            if n > 0.0 {
                best = best.max(p.abs() / n);
            }
        }
        Ok(())
    };
    consider(grad)?;
    for x in dictionary {
        consider(&VariationField::from_field(imm, x))?;
    }
    Ok(best)
}

fn check_dictionary(imm: &Immersion, dictionary: &[TestVectorField]) -> Result<()> {
    let Some(n) = &imm.constraint else { return Ok(()) };
    let boundary: Vec<Vec<f64>> = (0..imm.n_vertices())
        .filter(|&v| imm.mesh.is_boundary_vertex(v))
        .map(|v| imm.point(v).to_vec())
        .collect();
    for (index, x) in dictionary.iter().enumerate() {
        let deviation = x.tangency_defect(n, &boundary);
        let scale = boundary.iter().map(|p| dot(&x.eval(p), &x.eval(p)).sqrt()).fold(1.0, f64::max);
        if deviation > 1e-8 * scale {
            return Err(Error::FieldNotTangent { index, deviation });
        }
    }
    Ok(())
}
