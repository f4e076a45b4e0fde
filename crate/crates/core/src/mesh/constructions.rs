//! Ready-made immersions used by scenarios, tests and benchmarks.

use std::f64::consts::PI;
use std::sync::Arc;

use super::generators::{reference_positions, strip, MeshGenerator};
use super::{Immersion, SurfaceMesh};
use crate::ambient::{AmbientManifold, ConstraintSubmanifold};
use crate::error::{Error, Result};

/// Round sphere of radius `r` centred at the origin of `ℝ³`, no constraint.
pub fn round_sphere(subdivision: u32, r: f64) -> Result<Immersion> {
    let mesh = Arc::new(MeshGenerator::Sphere { subdivision }.build()?);
    let pos = reference_positions(&mesh, 3).into_iter().map(|x| x * r).collect();
    Immersion::new(mesh, pos, AmbientManifold::euclidean(3), None)
}

/// Planar slice `z = c` of the unit ball in `ℝ³`, boundary on the unit sphere.
pub fn horizontal_disk(refinement: u32, c: f64) -> Result<Immersion> {
    let mesh = Arc::new(MeshGenerator::Disk { refinement }.build()?);
    let s = (1.0 - c * c).sqrt();
    let mut pos = reference_positions(&mesh, 3);
    for p in pos.chunks_mut(3) {
        p[0] *= s;
        p[1] *= s;
        p[2] = c;
    }
    Immersion::projected(mesh, pos, AmbientManifold::euclidean(3), Some(ConstraintSubmanifold::unit_sphere(3)))
}

/// The equatorial unit disk with boundary on the unit sphere.
pub fn equatorial_disk(refinement: u32) -> Result<Immersion> {
    horizontal_disk(refinement, 0.0)
}

/// Flat unit disk in `ℝ³` without a constraint.
pub fn flat_disk(refinement: u32) -> Result<Immersion> {
    let mesh = Arc::new(MeshGenerator::Disk { refinement }.build()?);
    let pos = reference_positions(&mesh, 3);
    Immersion::new(mesh, pos, AmbientManifold::euclidean(3), None)
}

/// Horizontal slice of the unit ball meeting the unit sphere at
/// `meeting_angle` (radians), then rotated about the `x`-axis by `tilt`.
pub fn tilted_disk(refinement: u32, meeting_angle: f64, tilt: f64) -> Result<Immersion> {
    if !(meeting_angle > 0.0 && meeting_angle <= PI / 2.0) {
        return Err(Error::InvalidParameter(format!("meeting angle {meeting_angle} must lie in (0, π/2]")));
    }
    let base = horizontal_disk(refinement, meeting_angle.cos())?;
    let (s, c) = tilt.sin_cos();
    let rot = vec![vec![1.0, 0.0, 0.0], vec![0.0, c, -s], vec![0.0, s, c]];
    let imm = base.transformed(1.0, &rot, &[0.0; 3]);
    imm.validate()?;
    Ok(imm)
}

/// Two parallel flat unit disks at heights `±gap/2`, as one two-component mesh.
pub fn parallel_disks(refinement: u32, gap: f64) -> Result<Immersion> {
    let one = MeshGenerator::Disk { refinement }.build()?;
    let n = one.n_vertices();
    let mut faces = one.faces().to_vec();
    faces.extend(one.faces().iter().map(|f| [f[0] + n, f[1] + n, f[2] + n]));
    let mut reference = one.reference().to_vec();
    reference.extend(one.reference().iter().map(|p| [p[0], p[1], p[2] + 3.0]));
    let mut pos = Vec::with_capacity(6 * n);
    for (k, p) in reference.iter().enumerate() {
        let z = if k < n { -0.5 * gap } else { 0.5 * gap };
        pos.extend([p[0], p[1], z]);
    }
    let mesh = Arc::new(SurfaceMesh::new(2 * n, faces, reference)?);
    Immersion::new(mesh, pos, AmbientManifold::euclidean(3), None)
}

/// Flat unit disk in the plane `z = 0` whose central disk of radius
/// `a = sqrt(blister_area / 2π)` is replaced by a hemisphere of area
/// `blister_area`. In the reference chart the hemisphere occupies only the
/// disk of radius `domain_radius` around the central vertex 0.
pub fn blister_disk(blister_area: f64, domain_radius: f64) -> Result<Immersion> {
    let a = (blister_area / (2.0 * PI)).sqrt();
    if !(a > 0.0 && a < 0.5 && domain_radius > 0.0 && domain_radius < 0.5) {
        return Err(Error::InvalidParameter("blister area and domain radius must be small and positive".into()));
    }
    const CAP_RINGS: usize = 6;
    const CAP_COUNT: usize = 24;
    const SPACING: f64 = 0.06;
    let mut image = vec![[0.0, 0.0, a]];
    let mut reference = vec![[0.0, 0.0, 0.0]];
    let mut rings: Vec<Vec<usize>> = Vec::new();
    let mut push_ring = |count: usize, img: &dyn Fn(f64) -> [f64; 3], rho: f64, image: &mut Vec<[f64; 3]>| {
        let ids: Vec<usize> = (0..count)
            .map(|j| {
                let th = 2.0 * PI * j as f64 / count as f64;
                image.push(img(th));
                reference.push([rho * th.cos(), rho * th.sin(), 0.0]);
                image.len() - 1
            })
            .collect();
        rings.push(ids);
    };
    for i in 1..=CAP_RINGS {
        let phi = 0.5 * PI * i as f64 / CAP_RINGS as f64;
        let (sp, cp) = phi.sin_cos();
        let rho = domain_radius * i as f64 / CAP_RINGS as f64;
        push_ring(CAP_COUNT, &|th: f64| [a * sp * th.cos(), a * sp * th.sin(), a * cp], rho, &mut image);
    }
    let outer_rings = ((1.0 - a) / SPACING).ceil() as usize;
    for i in 1..=outer_rings {
        let s = a + (1.0 - a) * i as f64 / outer_rings as f64;
        let count = CAP_COUNT.max((2.0 * PI * s / SPACING).round() as usize);
        let rho = domain_radius + (1.0 - domain_radius) * (s - a) / (1.0 - a);
        push_ring(count, &|th: f64| [s * th.cos(), s * th.sin(), 0.0], rho, &mut image);
    }
    let mut faces = Vec::new();
    let first = &rings[0];
    for j in 0..first.len() {
        faces.push([0, first[j], first[(j + 1) % first.len()]]);
    }
    for i in 1..rings.len() {
        strip(&mut faces, &rings[i - 1], 0.0, &rings[i], 0.0, false);
    }
    let mesh = Arc::new(SurfaceMesh::new(image.len(), faces, reference)?);
    let pos = image.iter().flatten().copied().collect();
    Immersion::new(mesh, pos, AmbientManifold::euclidean(3), None)
}

/// Two unit spheres joined by a tube of radius `tube_radius` and length
/// `tube_length`, as a surface of revolution about the `z`-axis with
/// `segments` vertices per ring.
///
/// Rings are spaced uniformly in the conformal coordinate `t` of the profile
/// (`dt = ds / r`), and the reference chart is the unit sphere at polar angle
/// `2 atan(exp(t - t_mid))`. Each bulb therefore sits in a small polar cap of
/// the domain while the tube fills the band around the equator.
pub fn dumbbell(segments: usize, tube_radius: f64, tube_length: f64) -> Result<Immersion> {
    let eps = tube_radius;
    if segments < 8 || !(eps > 0.0 && eps < 0.5) || !(tube_length > 0.0) {
        return Err(Error::InvalidParameter("dumbbell needs segments >= 8, a thin tube and a positive length".into()));
    }
    let half = 0.5 * tube_length;
    let center_z = half + (1.0 - eps * eps).sqrt();
    let t_attach = ((PI - eps.asin()) / 2.0).tan().ln();
    let t_mid = t_attach + half / eps;
    let dt = 2.0 * PI / segments as f64;
    let t_start = (dt / 2.0).tan().ln();
    let t_end = 2.0 * t_mid - t_start;
    let m = ((t_end - t_start) / dt).ceil() as usize;
    let profile = |t: f64| -> (f64, f64) {
        let upper = |t: f64| {
            if t <= t_attach {
                let alpha = 2.0 * t.exp().atan();
                (alpha.sin(), center_z + alpha.cos())
            } else {
                (eps, half - eps * (t - t_attach))
            }
        };
        if t > t_mid {
            let (r, z) = upper(2.0 * t_mid - t);
            (r, -z)
        } else {
            upper(t)
        }
    };
    let mut image = vec![[0.0, 0.0, center_z + 1.0]];
    let mut reference = vec![[0.0, 0.0, 1.0]];
    let mut rings: Vec<Vec<usize>> = Vec::new();
    let phase = |i: usize| PI * (i % 2) as f64 / segments as f64;
    for i in 0..=m {
        let t = t_start + (t_end - t_start) * i as f64 / m as f64;
        let (r, z) = profile(t);
        let theta = 2.0 * (t - t_mid).exp().atan();
        let (st, ct) = theta.sin_cos();
        let ids = (0..segments)
            .map(|j| {
                let ph = phase(i) + 2.0 * PI * j as f64 / segments as f64;
                image.push([r * ph.cos(), r * ph.sin(), z]);
                reference.push([st * ph.cos(), st * ph.sin(), ct]);
                image.len() - 1
            })
            .collect();
        rings.push(ids);
    }
    let south = image.len();
    image.push([0.0, 0.0, -center_z - 1.0]);
    reference.push([0.0, 0.0, -1.0]);
    let mut faces = Vec::new();
    for j in 0..segments {
        faces.push([0, rings[0][j], rings[0][(j + 1) % segments]]);
    }
    for i in 1..rings.len() {
        strip(&mut faces, &rings[i - 1], phase(i - 1), &rings[i], phase(i), false);
    }
    let last = &rings[m];
    for j in 0..segments {
        faces.push([south, last[(j + 1) % segments], last[j]]);
    }
    let mesh = Arc::new(SurfaceMesh::new(image.len(), faces, reference)?);
    let pos = image.iter().flatten().copied().collect();
    Immersion::new(mesh, pos, AmbientManifold::euclidean(3), None)
}
