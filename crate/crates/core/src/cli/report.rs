//! Run artifacts: the CSV trace and the versioned JSON report.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use jsonschema::JSONSchema;
use serde::Serialize;
use serde_json::Value;

use crate::diagnostics::{
    admissible_fields, density_ratio_curve, detect_atoms, detect_necks, multiplicity_estimate, orthogonality_residual,
    pushforward, Atom, AtomOptions, DensityCurve, Multiplicity, NeckFlag, NeckOptions, OrthogonalityReport,
    StationarityReport,
};
use crate::diagnostics::stationarity_residual;
use crate::energy::EnergyBreakdown;
use crate::error::{Error, Result};
use crate::flow::{bounding_ball, default_dictionary, PhaseSummary, RunTrace};
use crate::mesh::geometry::vertex_areas;
use crate::mesh::io::write_atomic;
use crate::mesh::{area, boundary_length, Immersion};

use super::config::{DiagnosticsSpec, ScenarioConfig};

pub const SCHEMA_VERSION: u32 = 1;
pub const TRACE_HEADER: &str =
    "step,sigma,area_term,boundary_term,bending_term,total,sigma_derivative,entropy,criticality,step_size";

const SCHEMA_TEXT: &str = include_str!("../../schema/report.schema.json");

/// One line per accepted step, floats in shortest round-trip form.
pub fn trace_csv(trace: &RunTrace) -> String {
    let mut out = String::with_capacity(64 * (trace.rows.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.rows {
        let e = &r.energy;
        writeln!(
            out,
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            r.step,
            r.sigma,
            e.area_term,
            e.boundary_term,
            e.bending_term,
            e.total,
            e.sigma_derivative,
            r.entropy,
            r.criticality,
            r.step_size
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn write_trace(path: &Path, trace: &RunTrace) -> Result<()> {
    write_atomic(path, trace_csv(trace).as_bytes())
}

#[derive(Clone, Debug, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

impl Default for ToolInfo {
    fn default() -> Self {
        ToolInfo { name: env!("CARGO_PKG_NAME"), version: env!("CARGO_PKG_VERSION") }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Geometry {
    pub vertices: usize,
    pub faces: usize,
    pub area: f64,
    pub boundary_length: f64,
    pub boundary_loops: usize,
    /// Root mean square distance of the vertices from their centroid.
    pub rms_radius: f64,
    pub mean_edge_length: f64,
    pub constraint_violation: f64,
}

impl Geometry {
    pub fn of(imm: &Immersion) -> Result<Self> {
        let (c, _) = bounding_ball(imm);
        let n = imm.n_vertices();
        let ms: f64 = (0..n)
            .map(|v| imm.point(v).iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum::<f64>()
            / n as f64;
        Ok(Geometry {
            vertices: n,
            faces: imm.mesh.faces().len(),
            area: area(imm)?,
            boundary_length: boundary_length(imm),
            boundary_loops: imm.mesh.boundary_loops().len(),
            rms_radius: ms.sqrt(),
            mean_edge_length: imm.mean_edge_length(),
            constraint_violation: imm.constraint_violation(),
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EntropyPoint {
    pub sigma: f64,
    pub entropy: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MinmaxReport {
    pub beta_estimate: f64,
    pub argmax: usize,
    pub beta_history: Vec<f64>,
    pub slices: usize,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Diagnostics {
    pub density_curves: Vec<DensityCurve>,
    pub stationarity: Option<StationarityReport>,
    pub orthogonality: Option<OrthogonalityReport>,
    pub atoms: Option<Vec<Atom>>,
    pub necks: Option<Vec<NeckFlag>>,
    pub multiplicity: Option<Vec<MultiplicityPoint>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MultiplicityPoint {
    pub point: Vec<f64>,
    pub radius: f64,
    #[serde(flatten)]
    pub estimate: Multiplicity,
}

/// Wall-clock data, the only part of the report that varies between reruns.
#[derive(Clone, Debug, Serialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub threads: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool: ToolInfo,
    pub mode: String,
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub sigma: f64,
    pub final_energy: EnergyBreakdown,
    pub geometry: Geometry,
    pub iterations: usize,
    pub phases: Vec<PhaseSummary>,
    pub entropy_trajectory: Vec<EntropyPoint>,
    pub entropy_violation: bool,
    pub minmax: Option<MinmaxReport>,
    #[serde(flatten)]
    pub diagnostics: Diagnostics,
    pub timing: Timing,
}

impl Report {
    pub fn entropy_trajectory(trace: &RunTrace) -> Vec<EntropyPoint> {
        trace.phases.iter().map(|p| EntropyPoint { sigma: p.sigma, entropy: p.entropy }).collect()
    }
}

/// Runs every requested diagnostic on `imm`.
pub fn run_diagnostics(imm: &Immersion, spec: &DiagnosticsSpec) -> Result<Diagnostics> {
    let varifold = pushforward(imm, spec.samples_per_face)?;
    let mut out = Diagnostics::default();
    if let Some(d) = &spec.density {
        for c in &d.centers {
            out.density_curves.push(density_ratio_curve(&varifold, c, &d.radii)?);
        }
    }
    if spec.stationarity {
        let dictionary = admissible_fields(&varifold, &default_dictionary(imm));
        if !dictionary.is_empty() {
            out.stationarity = Some(stationarity_residual(&varifold, &dictionary)?);
        }
    }
    if spec.orthogonality && imm.constraint.is_some() && imm.mesh.has_boundary() {
        out.orthogonality = Some(orthogonality_residual(imm)?);
    }
    if spec.atoms {
        out.atoms = Some(detect_atoms(&imm.mesh, &vertex_areas(imm), &AtomOptions::for_immersion(imm)?)?);
    }
    if let Some(n) = &spec.necks {
        out.necks = Some(detect_necks(imm, &n.centers, n.depth, &NeckOptions::for_immersion(imm)?)?);
    }
    if let Some(m) = &spec.multiplicity {
        out.multiplicity = Some(
            m.points
                .iter()
                .map(|p| MultiplicityPoint {
                    point: p.clone(),
                    radius: m.radius,
                    estimate: multiplicity_estimate(&varifold, p, m.radius),
                })
                .collect(),
        );
    }
    Ok(out)
}

fn schema() -> &'static JSONSchema {
    static SCHEMA: OnceLock<JSONSchema> = OnceLock::new();
    SCHEMA.get_or_init(|| {
        let value: Value = serde_json::from_str(SCHEMA_TEXT).expect("bundled report schema is valid JSON");
        JSONSchema::compile(&value).expect("bundled report schema compiles")
    })
}

/// Checks `report` against the bundled schema, listing every violation.
pub fn validate_report(report: &Value) -> Result<()> {
    schema().validate(report).map_err(|errors| {
        Error::InvalidParameter(format!(
            "report does not match its schema: {}",
            errors.map(|e| format!("{} at {}", e, e.instance_path)).collect::<Vec<_>>().join("; ")
        ))
    })
}

/// Serializes, validates and atomically writes the report.
pub fn write_report(path: &Path, report: &Report) -> Result<()> {
    let value = serde_json::to_value(report).map_err(|e| Error::Io(e.to_string()))?;
    validate_report(&value)?;
    let mut text = serde_json::to_string_pretty(&value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
