//! Conformal modulus of an annulus from a discrete harmonic function.

use super::laplace::{cotangent_weights, harmonic_extension};
use super::Immersion;
use crate::error::{Error, Result};

/// `1 / ∫|∇u|²` for the discrete harmonic `u` equal to 0 on the first
/// boundary loop and 1 on the second. For a flat round annulus with radii
/// `r < R` this approximates `log(R/r) / (2π)`.
pub fn annulus_modulus_estimate(imm: &Immersion) -> Result<f64> {
    let topo = imm.mesh.topology();
    if topo.genus != 0 || topo.boundary_components != 2 || topo.connected_components != 1 {
        return Err(Error::WrongTopology {
            expected: "annulus",
            genus: topo.genus,
            boundaries: topo.boundary_components,
        });
    }
    let mut fixed: Vec<Option<f64>> = vec![None; imm.n_vertices()];
    for (k, lp) in imm.mesh.boundary_loops().iter().enumerate() {
        for &v in lp {
            fixed[v] = Some(k as f64);
        }
    }
    let u = harmonic_extension(imm, &fixed);
    let energy: f64 = cotangent_weights(imm).iter().map(|([i, j], w)| w * (u[*i] - u[*j]).powi(2)).sum();
    if !(energy > 0.0) {
        return Err(Error::InvalidMesh("harmonic function has zero energy".into()));
    }
    Ok(1.0 / energy)
}
