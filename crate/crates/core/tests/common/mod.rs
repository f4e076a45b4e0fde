#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use viscoflow::ambient::{AmbientManifold, ConstraintSubmanifold};
use viscoflow::energy::energy;
use viscoflow::mesh::generators::reference_positions;
use viscoflow::mesh::{Immersion, MeshGenerator};

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Equatorial disk with boundary on the unit sphere, randomly perturbed.
pub fn perturbed_disk(refinement: u32, amplitude: f64, seed: u64) -> Immersion {
    let mesh = Arc::new(MeshGenerator::Disk { refinement }.build().unwrap());
    let h = 1.0 / (1u32 << refinement) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = reference_positions(&mesh, 3);
    for x in pos.iter_mut() {
        *x += amplitude * h * rng.gen_range(-1.0..1.0);
    }
    Immersion::projected(mesh, pos, AmbientManifold::euclidean(3), Some(ConstraintSubmanifold::unit_sphere(3)))
        .unwrap()
}

/// A perturbed cap of a great 2-sphere inside the unit 3-sphere of `ℝ⁴`.
pub fn perturbed_cap_in_s3(refinement: u32, amplitude: f64, seed: u64) -> Immersion {
    let mesh = Arc::new(MeshGenerator::Disk { refinement }.build().unwrap());
    let h = 1.0 / (1u32 << refinement) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = Vec::new();
    for p in mesh.reference() {
        let (x, y) = (0.6 * p[0], 0.6 * p[1]);
        pos.extend_from_slice(&[
            x + amplitude * h * rng.gen_range(-1.0..1.0),
            y + amplitude * h * rng.gen_range(-1.0..1.0),
            amplitude * h * rng.gen_range(-1.0..1.0),
            1.0,
        ]);
    }
    let ambient = AmbientManifold::sphere(3, 1.0).unwrap();
    Immersion::projected(mesh, pos, ambient, None).unwrap()
}

/// Central differences of `x ↦ E_σ(π(x))` for several `σ` at once, where
/// `π` is the composite constraint projection. Returns one gradient per `σ`.
#[allow(clippy::needless_range_loop)]
pub fn fd_gradient(imm: &Immersion, sigmas: &[f64], rel_step: f64) -> Vec<Vec<f64>> {
    let h = rel_step * imm.mean_edge_length();
    let n = imm.positions.len();
    let mut out = vec![vec![0.0; n]; sigmas.len()];
    for i in 0..n {
        let eval = |delta: f64| {
            let mut p = imm.clone();
            p.positions[i] += delta;
            p.project_in_place().unwrap();
            energy(&p, 0.0).unwrap()
        };
        let (ep, em) = (eval(h), eval(-h));
        for (k, &s) in sigmas.iter().enumerate() {
            out[k][i] = (ep.at_sigma(s).total - em.at_sigma(s).total) / (2.0 * h);
        }
    }
    out
}

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    l2(&d) / l2(b)
}
