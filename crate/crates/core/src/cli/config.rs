//! Scenario files: parsing, validation and construction of the initial state.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ambient::{AmbientKind, AmbientManifold, ConstraintKind, ConstraintSubmanifold};
use crate::error::{Error, Result};
use crate::flow::{DescentOptions, Preconditioner, Schedule, StopRule, Sweepout};
use crate::mesh::generators::reference_positions;
use crate::mesh::{Immersion, MeshGenerator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One descent at `sigma`.
    Descend,
    /// Descent along `schedule`.
    Continuation,
    /// Min-max over a horizontal-disk sweepout at `sigma`, optionally
    /// followed by continuation of the refined slice along `schedule`.
    Minmax,
}

/// Pose applied to the reference chart of the domain mesh:
/// `x ↦ scale · R_x(tilt) x + translation`, then a uniform random
/// perturbation of each coordinate by up to `perturbation` mean edge lengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub translation: Option<Vec<f64>>,
    /// Rotation angle about the first axis, in radians.
    #[serde(default)]
    pub tilt: f64,
    #[serde(default)]
    pub perturbation: f64,
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec { scale: 1.0, translation: None, tilt: 0.0, perturbation: 0.0 }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescentSpec {
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub stop: Option<StopRule>,
    #[serde(default)]
    pub preconditioner: Option<Preconditioner>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepoutSpec {
    /// Number of intervals `T`; the family has `T + 1` slices.
    pub intervals: usize,
    /// Slices sit at heights `c ∈ [-c_max, c_max]`.
    #[serde(default = "default_c_max")]
    pub c_max: f64,
    pub rounds: usize,
    pub steps_per_round: usize,
}

fn default_c_max() -> f64 {
    0.9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    pub centers: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeckSpec {
    pub centers: Vec<usize>,
    #[serde(default = "default_depth")]
    pub depth: usize,
}

fn default_depth() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplicitySpec {
    pub points: Vec<Vec<f64>>,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    #[serde(default = "default_samples")]
    pub samples_per_face: usize,
    #[serde(default)]
    pub density: Option<DensitySpec>,
    #[serde(default = "yes")]
    pub stationarity: bool,
    /// Skipped for surfaces without boundary or constraint.
    #[serde(default = "yes")]
    pub orthogonality: bool,
    #[serde(default)]
    pub atoms: bool,
    #[serde(default)]
    pub necks: Option<NeckSpec>,
    #[serde(default)]
    pub multiplicity: Option<MultiplicitySpec>,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        DiagnosticsSpec {
            samples_per_face: default_samples(),
            density: None,
            stationarity: true,
            orthogonality: true,
            atoms: false,
            necks: None,
            multiplicity: None,
        }
    }
}

fn default_samples() -> usize {
    4
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub ambient: AmbientManifold,
    #[serde(default)]
    pub constraint: Option<ConstraintKind>,
    pub domain: MeshGenerator,
    #[serde(default)]
    pub initial: InitialSpec,
    pub mode: Mode,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub schedule: Option<Schedule>,
    #[serde(default)]
    pub descent: DescentSpec,
    #[serde(default)]
    pub sweepout: Option<SweepoutSpec>,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Write an OBJ snapshot with a JSON sidecar after every phase.
    #[serde(default)]
    pub checkpoints: bool,
}

/// Parses a scenario, reporting the JSON path of the offending field.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let location = if path == "." { "scenario".to_string() } else { path };
        Error::ConfigInvalid(vec![format!("{location}: {inner}")])
    })
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

#[derive(Default)]
struct Problems(Vec<String>);

impl Problems {
    fn check(&mut self, ok: bool, msg: &str) {
        if !ok {
            self.0.push(msg.to_string());
        }
    }
}

fn is_perfect_square(n: usize) -> bool {
    let k = (n as f64).sqrt().round() as usize;
    n > 0 && k * k == n
}

impl ScenarioConfig {
    pub fn embedding_dim(&self) -> usize {
        self.ambient.embedding_dim()
    }

    pub fn constraint(&self) -> Result<Option<ConstraintSubmanifold>> {
        self.constraint
            .clone()
            .map(|k| ConstraintSubmanifold::new(k, self.embedding_dim()))
            .transpose()
    }

    /// Semantic checks beyond the schema. All problems are collected.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Problems::default();
        let ambient_ok = self.ambient.validate();
        if let Err(e) = &ambient_ok {
            problems.0.push(format!("ambient: {e}"));
        }
        let q = if ambient_ok.is_ok() { self.embedding_dim() } else { 0 };
        if ambient_ok.is_ok() {
            if let Err(e) = self.constraint() {
                problems.0.push(format!("constraint: {e}"));
            }
        }

        let init = &self.initial;
        problems.check(init.scale > 0.0 && init.scale.is_finite(), "initial.scale: must be positive and finite");
        problems.check(init.tilt.is_finite(), "initial.tilt: must be finite");
        problems.check(init.perturbation >= 0.0 && init.perturbation.is_finite(), "initial.perturbation: must be nonnegative");
        if let Some(t) = &init.translation {
            problems.check(t.len() == q && t.iter().all(|x| x.is_finite()), "initial.translation: needs one finite entry per ambient coordinate");
        }
        if let Some(s) = self.sigma {
            problems.check(s > 0.0 && s < 1.0, "sigma: must lie in (0, 1)");
        }
        if let Some(schedule) = &self.schedule {
            if let Err(e) = schedule.validate() {
                problems.0.push(format!("schedule: {e}"));
            }
        }
        if let Some(Preconditioner::Sobolev { scale, bending }) = self.descent.preconditioner {
            problems.check(scale >= 0.0 && bending >= 0.0, "descent.preconditioner: scale and bending must be nonnegative");
        }
        match self.mode {
            Mode::Descend => problems.check(self.sigma.is_some(), "sigma: required in descend mode"),
            Mode::Continuation => problems.check(self.schedule.is_some(), "schedule: required in continuation mode"),
            Mode::Minmax => {
                problems.check(self.sigma.is_some(), "sigma: required in minmax mode");
                problems.check(matches!(self.domain, MeshGenerator::Disk { .. }), "domain: minmax sweeps horizontal disks, so the domain must be a disk");
                problems.check(
                    self.ambient.kind == AmbientKind::Euclidean { dim: 3 },
                    "ambient: minmax sweeps the unit ball of euclidean 3-space",
                );
                let unit_sphere = matches!(
                    &self.constraint,
                    Some(ConstraintKind::Sphere { dim: 2, radius, center }) if *radius == 1.0 && center.iter().all(|c| *c == 0.0)
                );
                problems.check(unit_sphere, "constraint: minmax needs the unit sphere centered at the origin");
                match &self.sweepout {
                    None => problems.check(false, "sweepout: required in minmax mode"),
                    Some(s) => {
                        problems.check(s.intervals >= 1, "sweepout.intervals: must be at least 1");
                        problems.check(s.c_max > 0.0 && s.c_max < 1.0, "sweepout.c_max: must lie in (0, 1)");
                    }
                }
            }
        }

        let d = &self.diagnostics;
        problems.check(is_perfect_square(d.samples_per_face), "diagnostics.samples_per_face: must be a positive perfect square");
        if let Some(density) = &d.density {
            problems.check(density.centers.iter().all(|c| c.len() == q), "diagnostics.density.centers: points must lie in the ambient coordinates");
            problems.check(
                !density.radii.is_empty()
                    && density.radii.iter().all(|r| *r > 0.0 && r.is_finite())
                    && density.radii.windows(2).all(|w| w[1] > w[0]),
                "diagnostics.density.radii: must be positive and strictly increasing",
            );
        }
        if let Some(necks) = &d.necks {
            problems.check(necks.depth >= 2, "diagnostics.necks.depth: must be at least 2");
        }
        if let Some(m) = &d.multiplicity {
            problems.check(m.points.iter().all(|p| p.len() == q), "diagnostics.multiplicity.points: points must lie in the ambient coordinates");
            problems.check(m.radius > 0.0 && m.radius.is_finite(), "diagnostics.multiplicity.radius: must be positive");
        }
        if let Err(e) = self.domain.build() {
            problems.0.push(format!("domain: {e}"));
        }
        if problems.0.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(problems.0))
        }
    }

    /// Base descent options with the overrides of the `descent` block.
    pub fn descent_options(&self) -> DescentOptions {
        let mut opts = DescentOptions::default();
        if let Some(n) = self.descent.max_iterations {
            opts.max_iterations = n;
        }
        if let Some(stop) = self.descent.stop {
            opts.stop = stop;
        }
        if let Some(p) = self.descent.preconditioner {
            opts.preconditioner = p;
        }
        opts
    }

    /// Posed and perturbed reference immersion of the domain.
    pub fn initial_immersion(&self, seed: u64) -> Result<Immersion> {
        let mesh = Arc::new(self.domain.build()?);
        let q = self.embedding_dim();
        let mut pos = reference_positions(&mesh, q);
        let (s, c) = self.initial.tilt.sin_cos();
        let zero = vec![0.0; q];
        let translation = self.initial.translation.as_deref().unwrap_or(&zero);
        for p in pos.chunks_mut(q) {
            if q >= 3 {
                let (y, z) = (p[1], p[2]);
                p[1] = c * y - s * z;
                p[2] = s * y + c * z;
            }
            for (x, t) in p.iter_mut().zip(translation) {
                *x = self.initial.scale * *x + t;
            }
        }
        if self.initial.perturbation > 0.0 {
            let h = mean_edge(&mesh, &pos, q);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for x in pos.iter_mut() {
                *x += self.initial.perturbation * h * rng.gen_range(-1.0..1.0);
            }
        }
        Immersion::projected(mesh, pos, self.ambient.clone(), self.constraint()?)
    }

    pub fn sweepout(&self) -> Result<Sweepout> {
        let spec = self.sweepout.as_ref().ok_or_else(|| Error::ConfigInvalid(vec!["sweepout: missing".into()]))?;
        let refinement = match self.domain {
            MeshGenerator::Disk { refinement } => refinement,
            _ => return Err(Error::ConfigInvalid(vec!["domain: must be a disk".into()])),
        };
        Sweepout::horizontal_disks(refinement, spec.intervals, spec.c_max)
    }
}

fn mean_edge(mesh: &crate::mesh::SurfaceMesh, pos: &[f64], q: usize) -> f64 {
    let edges = mesh.edges();
    let total: f64 = edges
        .iter()
        .map(|&[a, b]| (0..q).map(|i| (pos[a * q + i] - pos[b * q + i]).powi(2)).sum::<f64>().sqrt())
        .sum();
    total / edges.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "ambient": {"kind": "euclidean", "dim": 3},
        "domain": {"kind": "sphere", "subdivision": 1},
        "mode": "descend",
        "sigma": 0.1
    }"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.initial, InitialSpec::default());
        assert_eq!(c.diagnostics.samples_per_face, 4);
        assert_eq!(c.seed, 0);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_field_is_named() {
        let text = MINIMAL.replace("\"sigma\"", "\"sigmaa\"");
        let msg = parse_config(&text).unwrap_err().to_string();
        assert!(msg.contains("sigmaa"), "{msg}");
    }

    #[test]
    fn nested_error_carries_path() {
        let text = MINIMAL.replace("\"subdivision\": 1", "\"subdivision\": -1");
        let msg = parse_config(&text).unwrap_err().to_string();
        assert!(msg.contains("domain"), "{msg}");
    }

    #[test]
    fn validation_collects_every_problem() {
        let mut c = parse_config(MINIMAL).unwrap();
        c.sigma = None;
        c.diagnostics.samples_per_face = 3;
        match c.validate().unwrap_err() {
            Error::ConfigInvalid(list) => assert_eq!(list.len(), 2, "{list:?}"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn pose_is_applied_before_projection() {
        let mut c = parse_config(MINIMAL).unwrap();
        c.initial.scale = 2.0;
        c.initial.translation = Some(vec![1.0, 0.0, 0.0]);
        let imm = c.initial_immersion(0).unwrap();
        for v in 0..imm.n_vertices() {
            let p = imm.point(v);
            let r = ((p[0] - 1.0).powi(2) + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((r - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn perturbation_is_seeded() {
        let mut c = parse_config(MINIMAL).unwrap();
        c.initial.perturbation = 0.1;
        let a = c.initial_immersion(7).unwrap();
        let b = c.initial_immersion(7).unwrap();
        let d = c.initial_immersion(8).unwrap();
        assert_eq!(a.positions, b.positions);
        assert_ne!(a.positions, d.positions);
    }
}
