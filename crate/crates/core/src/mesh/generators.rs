//! Parametric mesh generators. Each mesh carries its own positions as the
//! reference chart, which is also the default immersion.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Immersion, SurfaceMesh};
use crate::ambient::{AmbientManifold, ConstraintSubmanifold};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshGenerator {
    /// Unit disk in the `xy`-plane with `2^refinement` concentric rings.
    Disk { refinement: u32 },
    /// Flat annulus with inner radius 1 and outer radius `radii_ratio`.
    Annulus { refinement: u32, radii_ratio: f64 },
    /// Unit icosphere.
    Sphere { subdivision: u32 },
    /// Open unit-radius cylinder around the `z`-axis, centred at the origin.
    Cylinder { refinement: u32, height: f64 },
    /// Torus of revolution with radii 2 and 1.
    Torus { refinement: u32 },
}

const MAX_LEVEL: u32 = 9;

impl MeshGenerator {
    pub fn build(&self) -> Result<SurfaceMesh> {
        let level = match *self {
            MeshGenerator::Disk { refinement }
            | MeshGenerator::Annulus { refinement, .. }
            | MeshGenerator::Cylinder { refinement, .. }
            | MeshGenerator::Torus { refinement } => refinement,
            MeshGenerator::Sphere { subdivision } => subdivision,
        };
        if level > MAX_LEVEL {
            return Err(Error::InvalidParameter(format!("refinement {level} exceeds {MAX_LEVEL}")));
        }
        match *self {
            MeshGenerator::Disk { refinement } => Ok(disk(refinement)),
            MeshGenerator::Annulus { refinement, radii_ratio } => {
                if !(radii_ratio > 1.0 && radii_ratio.is_finite()) {
                    return Err(Error::InvalidParameter(format!("radii ratio {radii_ratio} must exceed 1")));
                }
                Ok(annulus(refinement, radii_ratio))
            }
            MeshGenerator::Sphere { subdivision } => Ok(sphere(subdivision)),
            MeshGenerator::Cylinder { refinement, height } => {
                if !(height > 0.0 && height.is_finite()) {
                    return Err(Error::InvalidParameter(format!("cylinder height {height} must be positive")));
                }
                Ok(cylinder(refinement, height))
            }
            MeshGenerator::Torus { refinement } => Ok(torus(refinement)),
        }
    }
}

pub fn build_mesh(generator: &MeshGenerator) -> Result<SurfaceMesh> {
    generator.build()
}

/// Reference positions padded with zeros to `q` coordinates.
pub fn reference_positions(mesh: &SurfaceMesh, q: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(mesh.n_vertices() * q);
    for p in mesh.reference() {
        for i in 0..q {
            out.push(if i < 3 { p[i] } else { 0.0 });
        }
    }
    out
}

/// Immersion given by the reference chart, projected onto `M` and `N`.
pub fn reference_immersion(
    mesh: Arc<SurfaceMesh>,
    ambient: AmbientManifold,
    constraint: Option<ConstraintSubmanifold>,
) -> Result<Immersion> {
    let pos = reference_positions(&mesh, ambient.embedding_dim());
    Immersion::projected(mesh, pos, ambient, constraint)
}

fn build(points: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> SurfaceMesh {
    SurfaceMesh::new(points.len(), faces, points).expect("generator produced an invalid mesh")
}

/// Triangulates the strip between two closed rings by merging their angular
/// orders. `inner` and `outer` hold vertex ids with angles `phase + 2πj/n`.
/// Triangles are oriented counter-clockwise when `inner` is the smaller
/// radius in the plane; `flip` reverses them.
pub(crate) fn strip(
    faces: &mut Vec<[usize; 3]>,
    inner: &[usize],
    inner_phase: f64,
    outer: &[usize],
    outer_phase: f64,
    flip: bool,
) {
    let (n0, n1) = (inner.len(), outer.len());
    let ang0 = |j: usize| inner_phase + 2.0 * PI * j as f64 / n0 as f64;
    let ang1 = |j: usize| outer_phase + 2.0 * PI * j as f64 / n1 as f64;
    let (mut a, mut b) = (0usize, 0usize);
    let mut push = |t: [usize; 3]| faces.push(if flip { [t[0], t[2], t[1]] } else { t });
    while a < n0 || b < n1 {
        let advance_inner = b == n1 || (a < n0 && ang0(a + 1) < ang1(b + 1) - 1e-12);
        if advance_inner {
            push([inner[a % n0], outer[b % n1], inner[(a + 1) % n0]]);
            a += 1;
        } else {
            push([inner[a % n0], outer[b % n1], outer[(b + 1) % n1]]);
            b += 1;
        }
    }
}

fn disk(k: u32) -> SurfaceMesh {
    let rings = 1usize << k;
    let mut pts = vec![[0.0, 0.0, 0.0]];
    let mut ids: Vec<Vec<usize>> = vec![vec![0]];
    for i in 1..=rings {
        let n = 6 * i;
        let r = i as f64 / rings as f64;
        let ring: Vec<usize> = (0..n)
            .map(|j| {
                let t = 2.0 * PI * j as f64 / n as f64;
                pts.push([r * t.cos(), r * t.sin(), 0.0]);
                pts.len() - 1
            })
            .collect();
        ids.push(ring);
    }
    let mut faces = Vec::new();
    for j in 0..6 {
        faces.push([0, ids[1][j], ids[1][(j + 1) % 6]]);
    }
    for i in 2..=rings {
        strip(&mut faces, &ids[i - 1], 0.0, &ids[i], 0.0, false);
    }
    build(pts, faces)
}

fn annulus(k: u32, rho: f64) -> SurfaceMesh {
    let n = 12usize << k;
    let m = ((rho.ln() * n as f64 / (2.0 * PI)).round() as usize).max(1);
    let mut pts = Vec::new();
    let mut ids = Vec::new();
    let phase = |i: usize| PI * (i % 2) as f64 / n as f64;
    for i in 0..=m {
        let r = rho.powf(i as f64 / m as f64);
        let ring: Vec<usize> = (0..n)
            .map(|j| {
                let t = phase(i) + 2.0 * PI * j as f64 / n as f64;
                pts.push([r * t.cos(), r * t.sin(), 0.0]);
                pts.len() - 1
            })
            .collect();
        ids.push(ring);
    }
    let mut faces = Vec::new();
    for i in 1..=m {
        strip(&mut faces, &ids[i - 1], phase(i - 1), &ids[i], phase(i), false);
    }
    build(pts, faces)
}

fn cylinder(k: u32, h: f64) -> SurfaceMesh {
    let n = 12usize << k;
    let m = ((h * n as f64 / (2.0 * PI)).round() as usize).max(1);
    let mut pts = Vec::new();
    let mut ids = Vec::new();
    let phase = |i: usize| PI * (i % 2) as f64 / n as f64;
    for i in 0..=m {
        let z = -0.5 * h + h * i as f64 / m as f64;
        let ring: Vec<usize> = (0..n)
            .map(|j| {
                let t = phase(i) + 2.0 * PI * j as f64 / n as f64;
                pts.push([t.cos(), t.sin(), z]);
                pts.len() - 1
            })
            .collect();
        ids.push(ring);
    }
    let mut faces = Vec::new();
    for i in 1..=m {
        strip(&mut faces, &ids[i - 1], phase(i - 1), &ids[i], phase(i), true);
    }
    build(pts, faces)
}

fn torus(k: u32) -> SurfaceMesh {
    let nu = 12usize << k;
    let nv = 6usize << k;
    let (big, small) = (2.0, 1.0);
    let mut pts = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = 2.0 * PI * i as f64 / nu as f64;
        for j in 0..nv {
            let v = 2.0 * PI * j as f64 / nv as f64;
            let r = big + small * v.cos();
            pts.push([r * u.cos(), r * u.sin(), small * v.sin()]);
        }
    }
    let id = |i: usize, j: usize| (i % nu) * nv + (j % nv);
    let mut faces = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    build(pts, faces)
}

fn sphere(k: u32) -> SurfaceMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut pts: Vec<[f64; 3]> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let normalize = |p: [f64; 3]| {
        let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        [p[0] / n, p[1] / n, p[2] / n]
    };
    pts.iter_mut().for_each(|p| *p = normalize(*p));
    for _ in 0..k {
        let mut mid = std::collections::HashMap::new();
        let mut next = Vec::with_capacity(4 * faces.len());
        let mut midpoint = |a: usize, b: usize, pts: &mut Vec<[f64; 3]>| -> usize {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (pts[a], pts[b]);
                pts.push(normalize([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                pts.len() - 1
            })
        };
        for f in &faces {
            let ab = midpoint(f[0], f[1], &mut pts);
            let bc = midpoint(f[1], f[2], &mut pts);
            let ca = midpoint(f[2], f[0], &mut pts);
            next.extend_from_slice(&[[f[0], ab, ca], [f[1], bc, ab], [f[2], ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    build(pts, faces)
}
