//! Oriented triangulated domains and their discrete immersions.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::Serialize;

use crate::ambient::{AmbientManifold, ConstraintSubmanifold};
use crate::error::{Error, Result};

pub mod constructions;
pub mod generators;
pub mod geometry;
pub mod io;
pub mod laplace;
pub mod modulus;
pub mod shape;

pub use generators::MeshGenerator;
pub use geometry::{area, boundary_length, induced_metric, MetricField};
pub use modulus::annulus_modulus_estimate;
pub use shape::{bending_integral, shape_operator, ShapeField};

/// Relative degeneracy floor: `det g ≥ DEGENERACY_FACTOR · (mean edge)^4`.
pub const DEGENERACY_FACTOR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Topology {
    pub vertices: usize,
    pub edges: usize,
    pub faces: usize,
    pub euler_characteristic: i64,
    pub genus: usize,
    pub boundary_components: usize,
    pub connected_components: usize,
}

/// Vertex neighbourhood used by the local fitting kernels. Indices in
/// `faces`, `guide` refer to positions in `verts`; `verts[0]` is the vertex itself.
#[derive(Clone, Debug)]
pub struct LocalStencil {
    pub verts: Vec<usize>,
    pub ring_len: usize,
    pub faces: Vec<[usize; 3]>,
    pub guide: (usize, usize),
    /// One-ring too small for a quadratic fit; go straight to the two-ring.
    pub prefer_extended: bool,
}

impl LocalStencil {
    /// Number of leading entries of `verts` a fit depends on.
    pub fn support(&self, extended: bool) -> usize {
        if extended {
            self.verts.len()
        } else {
            1 + self.ring_len
        }
    }
}

#[derive(Clone, Debug)]
pub struct SurfaceMesh {
    n_vertices: usize,
    faces: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    boundary_loops: Vec<Vec<usize>>,
    on_boundary: Vec<bool>,
    rings: Vec<Vec<usize>>,
    vertex_faces: Vec<Vec<usize>>,
    stencils: Vec<LocalStencil>,
    reference: Vec<[f64; 3]>,
    topology: Topology,
}

impl SurfaceMesh {
    /// Builds and validates a mesh. `reference` gives the domain chart used for
    /// intrinsic distances on `Σ` (atoms, necks).
    pub fn new(n_vertices: usize, faces: Vec<[usize; 3]>, reference: Vec<[f64; 3]>) -> Result<Self> {
        if reference.len() != n_vertices {
            return Err(Error::InvalidMesh(format!(
                "{} reference positions for {} vertices",
                reference.len(),
                n_vertices
            )));
        }
        if faces.is_empty() {
            return Err(Error::InvalidMesh("no faces".into()));
        }
        let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * faces.len());
        let mut vertex_faces = vec![Vec::new(); n_vertices];
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n_vertices) {
                return Err(Error::InvalidMesh(format!("face {fi} references a missing vertex")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!("face {fi} repeats a vertex")));
            }
            for k in 0..3 {
                let e = (f[k], f[(k + 1) % 3]);
                if directed.insert(e, fi).is_some() {
                    return Err(Error::InvalidMesh(format!(
                        "directed edge {:?} used twice: non-manifold or inconsistently oriented",
                        e
                    )));
                }
                vertex_faces[f[k]].push(fi);
            }
        }
        if let Some(v) = vertex_faces.iter().position(|fs| fs.is_empty()) {
            return Err(Error::InvalidMesh(format!("vertex {v} belongs to no face")));
        }

        let mut edge_set: BTreeMap<[usize; 2], ()> = BTreeMap::new();
        let mut boundary_next: HashMap<usize, usize> = HashMap::new();
        for &(a, b) in directed.keys() {
            edge_set.insert([a.min(b), a.max(b)], ());
            if !directed.contains_key(&(b, a)) {
                // boundary edge, oriented as in its face
                if boundary_next.insert(a, b).is_some() {
                    return Err(Error::InvalidMesh(format!("vertex {a} is a non-manifold boundary vertex")));
                }
            }
        }
        let edges: Vec<[usize; 2]> = edge_set.into_keys().collect();

        // Ordered one-rings.
        let mut rings = Vec::with_capacity(n_vertices);
        let mut on_boundary = vec![false; n_vertices];
        for v in 0..n_vertices {
            let mut next: HashMap<usize, usize> = HashMap::new();
            let mut targets = std::collections::HashSet::new();
            for &fi in &vertex_faces[v] {
                let f = faces[fi];
                let k = f.iter().position(|&x| x == v).unwrap();
                let (a, b) = (f[(k + 1) % 3], f[(k + 2) % 3]);
                next.insert(a, b);
                targets.insert(b);
            }
            let starts: Vec<usize> = next.keys().filter(|a| !targets.contains(a)).cloned().collect();
            let (start, is_bdry) = match starts.len() {
                0 => (*next.keys().min().unwrap(), false),
                1 => (starts[0], true),
                _ => return Err(Error::InvalidMesh(format!("vertex {v} link is not a single fan"))),
            };
            let mut ring = vec![start];
            let mut cur = start;
            while let Some(&n) = next.get(&cur) {
                if n == start {
                    break;
                }
                ring.push(n);
                cur = n;
                if ring.len() > next.len() + 1 {
                    return Err(Error::InvalidMesh(format!("vertex {v} link is not a simple cycle")));
                }
            }
            let expected = if is_bdry { next.len() + 1 } else { next.len() };
            if ring.len() != expected {
                return Err(Error::InvalidMesh(format!("vertex {v} link is not connected")));
            }
            on_boundary[v] = is_bdry;
            rings.push(ring);
        }

        // Boundary loops, deterministic start at the smallest unvisited vertex.
        let mut boundary_loops = Vec::new();
        let mut visited = vec![false; n_vertices];
        let mut bverts: Vec<usize> = boundary_next.keys().cloned().collect();
        bverts.sort_unstable();
        for &s in &bverts {
            if visited[s] {
                continue;
            }
            let mut lp = vec![s];
            visited[s] = true;
            let mut cur = boundary_next[&s];
            while cur != s {
                if visited[cur] {
                    return Err(Error::InvalidMesh("boundary loops intersect".into()));
                }
                visited[cur] = true;
                lp.push(cur);
                cur = *boundary_next
                    .get(&cur)
                    .ok_or_else(|| Error::InvalidMesh("open boundary chain".into()))?;
            }
            boundary_loops.push(lp);
        }

        // Connected components via union-find on vertices.
        let mut parent: Vec<usize> = (0..n_vertices).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &edges {
            let (ra, rb) = (find(&mut parent, e[0]), find(&mut parent, e[1]));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let components = (0..n_vertices).filter(|&v| find(&mut parent, v) == v).count();

        let chi = n_vertices as i64 - edges.len() as i64 + faces.len() as i64;
        let b = boundary_loops.len() as i64;
        let twice_genus = 2 * components as i64 - chi - b;
        if twice_genus < 0 || twice_genus % 2 != 0 {
            return Err(Error::InvalidMesh(format!("inconsistent Euler characteristic {chi}")));
        }
        let topology = Topology {
            vertices: n_vertices,
            edges: edges.len(),
            faces: faces.len(),
            euler_characteristic: chi,
            genus: (twice_genus / 2) as usize,
            boundary_components: boundary_loops.len(),
            connected_components: components,
        };

        let stencils = (0..n_vertices)
            .map(|v| build_stencil(v, &rings, &vertex_faces, &faces, on_boundary[v]))
            .collect();

        Ok(SurfaceMesh {
            n_vertices,
            faces,
            edges,
            boundary_loops,
            on_boundary,
            rings,
            vertex_faces,
            stencils,
            reference,
            topology,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }
    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }
    pub fn boundary_loops(&self) -> &[Vec<usize>] {
        &self.boundary_loops
    }
    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.on_boundary[v]
    }
    pub fn ring(&self, v: usize) -> &[usize] {
        &self.rings[v]
    }
    pub fn vertex_faces(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }
    pub fn stencil(&self, v: usize) -> &LocalStencil {
        &self.stencils[v]
    }
    pub fn reference(&self) -> &[[f64; 3]] {
        &self.reference
    }
    pub fn topology(&self) -> Topology {
        self.topology
    }
    pub fn has_boundary(&self) -> bool {
        !self.boundary_loops.is_empty()
    }

    /// Boundary edges in loop order, each oriented along its loop.
    pub fn boundary_edges(&self) -> impl Iterator<Item = [usize; 2]> + '_ {
        self.boundary_loops
            .iter()
            .flat_map(|lp| (0..lp.len()).map(move |i| [lp[i], lp[(i + 1) % lp.len()]]))
    }

    /// The face containing the oriented boundary edge `a -> b`.
    pub fn boundary_face(&self, a: usize, b: usize) -> Option<usize> {
        self.vertex_faces[a].iter().cloned().find(|&fi| {
            let f = self.faces[fi];
            (0..3).any(|k| f[k] == a && f[(k + 1) % 3] == b)
        })
    }
}

fn build_stencil(
    v: usize,
    rings: &[Vec<usize>],
    vertex_faces: &[Vec<usize>],
    faces: &[[usize; 3]],
    boundary: bool,
) -> LocalStencil {
    let ring = &rings[v];
    let mut verts = Vec::with_capacity(1 + 3 * ring.len());
    verts.push(v);
    verts.extend_from_slice(ring);
    for &r in ring {
        for &w in &rings[r] {
            if !verts.contains(&w) {
                verts.push(w);
            }
        }
    }
    let local = |g: usize| verts.iter().position(|&x| x == g).unwrap();
    let lfaces = vertex_faces[v]
        .iter()
        .map(|&fi| {
            let f = faces[fi];
            [local(f[0]), local(f[1]), local(f[2])]
        })
        .collect();
    let n = ring.len();
    let b = if boundary { (n / 2).max(1) } else { (n / 4).max(1) };
    LocalStencil {
        ring_len: n,
        faces: lfaces,
        guide: (1, 1 + b.min(n - 1)),
        prefer_extended: n < 5,
        verts,
    }
}

/// A discrete immersion `Φ: Σ → M ⊂ ℝ^Q` with `Φ(∂Σ) ⊆ N` when a constraint is present.
#[derive(Clone, Debug)]
pub struct Immersion {
    pub mesh: Arc<SurfaceMesh>,
    /// Vertex positions, `Q` consecutive coordinates per vertex.
    pub positions: Vec<f64>,
    pub ambient: AmbientManifold,
    pub constraint: Option<ConstraintSubmanifold>,
}

impl Immersion {
    /// Validating constructor.
    pub fn new(
        mesh: Arc<SurfaceMesh>,
        positions: Vec<f64>,
        ambient: AmbientManifold,
        constraint: Option<ConstraintSubmanifold>,
    ) -> Result<Self> {
        let imm = Self::new_unchecked(mesh, positions, ambient, constraint)?;
        imm.validate()?;
        Ok(imm)
    }

    /// Checks only dimensions; callers project or validate later.
    pub fn new_unchecked(
        mesh: Arc<SurfaceMesh>,
        positions: Vec<f64>,
        ambient: AmbientManifold,
        constraint: Option<ConstraintSubmanifold>,
    ) -> Result<Self> {
        let q = ambient.embedding_dim();
        if positions.len() != q * mesh.n_vertices() {
            return Err(Error::DimensionMismatch { expected: q * mesh.n_vertices(), got: positions.len() });
        }
        if let Some(n) = &constraint {
            if n.embedding_dim() != q {
                return Err(Error::DimensionMismatch { expected: q, got: n.embedding_dim() });
            }
        }
        Ok(Immersion { mesh, positions, ambient, constraint })
    }

    /// Builds an immersion from positions that are first pushed onto `M` and `N`.
    pub fn projected(
        mesh: Arc<SurfaceMesh>,
        positions: Vec<f64>,
        ambient: AmbientManifold,
        constraint: Option<ConstraintSubmanifold>,
    ) -> Result<Self> {
        let mut imm = Self::new_unchecked(mesh, positions, ambient, constraint)?;
        imm.project_in_place()?;
        imm.validate()?;
        Ok(imm)
    }

    pub fn q(&self) -> usize {
        self.ambient.embedding_dim()
    }

    pub fn n_vertices(&self) -> usize {
        self.mesh.n_vertices()
    }

    pub fn point(&self, v: usize) -> &[f64] {
        let q = self.q();
        &self.positions[v * q..(v + 1) * q]
    }

    /// Whether vertex `v` is held on `N`.
    pub fn is_constrained(&self, v: usize) -> bool {
        self.constraint.is_some() && self.mesh.is_boundary_vertex(v)
    }

    /// Composite constraint projection: boundary vertices to `N`, others to `M`.
    pub fn project_in_place(&mut self) -> Result<()> {
        let q = self.q();
        for v in 0..self.n_vertices() {
            let p = &self.positions[v * q..(v + 1) * q];
            let r = match (&self.constraint, self.mesh.is_boundary_vertex(v)) {
                (Some(n), true) => n.project_to_constraint(p)?,
                _ => self.ambient.project_to_ambient(p)?,
            };
            self.positions[v * q..(v + 1) * q].copy_from_slice(&r);
        }
        Ok(())
    }

    /// Projection of a per-vertex vector field onto the admissible tangent spaces.
    pub fn project_variation(&self, w: &mut [f64]) {
        let q = self.q();
        for v in 0..self.n_vertices() {
            let p = self.point(v);
            let wv = &w[v * q..(v + 1) * q];
            let t = match (&self.constraint, self.mesh.is_boundary_vertex(v)) {
                (Some(n), true) => n.tangent_project_at(p, wv),
                _ => self.ambient.tangent_project_at(p, wv),
            };
            w[v * q..(v + 1) * q].copy_from_slice(&t);
        }
    }

    pub fn mean_edge_length(&self) -> f64 {
        let edges = self.mesh.edges();
        let total: f64 = edges.iter().map(|e| dist(self.point(e[0]), self.point(e[1]))).sum();
        total / edges.len() as f64
    }

    /// Largest distance of any vertex to `M`, and of boundary vertices to `N`.
    pub fn constraint_violation(&self) -> f64 {
        (0..self.n_vertices())
            .map(|v| {
                let p = self.point(v);
                let dm = self.ambient.distance_to(p);
                match (&self.constraint, self.mesh.is_boundary_vertex(v)) {
                    (Some(n), true) => dm.max(n.distance_to(p)),
                    _ => dm,
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        for v in 0..self.n_vertices() {
            let p = self.point(v);
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidMesh(format!("vertex {v} has a non-finite position")));
            }
            if !self.ambient.contains(p) {
                return Err(Error::PointOffManifold { distance: self.ambient.distance_to(p) });
            }
            if let (Some(n), true) = (&self.constraint, self.mesh.is_boundary_vertex(v)) {
                if !n.contains(p) {
                    return Err(Error::PointOffManifold { distance: n.distance_to(p) });
                }
            }
        }
        geometry::check_faces(self)
    }

    /// Flat-ambient similarity transform `x ↦ s R x + t` (row-major `R`).
    pub fn transformed(&self, scale: f64, rotation: &[Vec<f64>], translation: &[f64]) -> Self {
        let q = self.q();
        let mut positions = vec![0.0; self.positions.len()];
        for v in 0..self.n_vertices() {
            let p = self.point(v);
            for i in 0..q {
                positions[v * q + i] =
                    scale * rotation[i].iter().zip(p).map(|(r, x)| r * x).sum::<f64>() + translation[i];
            }
        }
        Immersion { positions, ..self.clone() }
    }
}

#[inline]
pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetra() -> SurfaceMesh {
        let faces = vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [2, 0, 3]];
        SurfaceMesh::new(4, faces, vec![[0.0; 3]; 4]).unwrap()
    }

    #[test]
    fn closed_tetrahedron_topology() {
        let t = tetra().topology();
        assert_eq!((t.vertices, t.edges, t.faces), (4, 6, 4));
        assert_eq!(t.euler_characteristic, 2);
        assert_eq!((t.genus, t.boundary_components), (0, 0));
    }

    #[test]
    fn single_triangle_has_one_boundary_loop() {
        let m = SurfaceMesh::new(3, vec![[0, 1, 2]], vec![[0.0; 3]; 3]).unwrap();
        assert_eq!(m.boundary_loops(), &[vec![0, 1, 2]]);
        assert_eq!(m.topology().euler_characteristic, 1);
        assert_eq!(m.boundary_face(1, 2), Some(0));
    }

    #[test]
    fn rejects_inconsistent_orientation() {
        let faces = vec![[0, 1, 2], [0, 1, 3]];
        assert!(matches!(SurfaceMesh::new(4, faces, vec![[0.0; 3]; 4]), Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn rejects_repeated_vertex() {
        assert!(SurfaceMesh::new(3, vec![[0, 1, 1]], vec![[0.0; 3]; 3]).is_err());
    }

    #[test]
    fn rejects_bowtie_vertex() {
        // two triangles sharing only vertex 0
        let faces = vec![[0, 1, 2], [0, 3, 4]];
        assert!(SurfaceMesh::new(5, faces, vec![[0.0; 3]; 5]).is_err());
    }
}
