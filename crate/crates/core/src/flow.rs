//! Projected gradient descent to almost-criticality, σ-continuation,
//! one-parameter min-max over sweepouts and Struwe-style σ selection.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ambient::{standard_dictionary, TestVectorField};
use crate::energy::{criticality_with_gradient, energy, energy_and_gradient, EnergyBreakdown, VariationField};
use crate::error::{Error, Result};
use crate::mesh::constructions::horizontal_disk;
use crate::mesh::io::{to_obj, write_atomic};
use crate::mesh::laplace::sobolev_smooth;
use crate::mesh::Immersion;
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopRule {
    /// Stop once the criticality surrogate drops below `σ^exponent`.
    #[serde(default = "default_exponent")]
    pub grad_threshold_exponent: f64,
    /// Lower bound on the threshold, for small `σ`.
    #[serde(default)]
    pub absolute_floor: f64,
}

fn default_exponent() -> f64 {
    5.0
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule { grad_threshold_exponent: 5.0, absolute_floor: 0.0 }
    }
}

impl StopRule {
    pub fn threshold(&self, sigma: f64) -> f64 {
        sigma.powf(self.grad_threshold_exponent).max(self.absolute_floor)
    }
}

#[derive(Clone, Debug)]
pub struct DescentOptions {
    pub stop: StopRule,
    pub max_iterations: usize,
    /// Sufficient-decrease parameter of the Armijo test.
    pub armijo: f64,
    pub backtrack: f64,
    /// Factor applied to the last accepted step to seed the next line search.
    pub growth: f64,
    /// First trial step; by default the step moving the fastest vertex by a
    /// tenth of the mean edge length.
    pub initial_step: Option<f64>,
    /// Multiplies every trial step; 0 freezes the immersion.
    pub step_scale: f64,
    /// Test fields for the criticality surrogate; by default a dictionary
    /// adapted to the constraint over the bounding ball of the immersion.
    pub dictionary: Option<Vec<TestVectorField>>,
    pub preconditioner: Preconditioner,
}

/// Metric in which the descent direction is taken. The gradient itself is
/// always the exact coordinate gradient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Preconditioner {
    /// Plain coordinate gradient.
    Identity,
    /// `(M + α L + β L M⁻¹ L)⁻¹` applied to the gradient, with `M` the lumped
    /// mass, `L` the cotangent Laplacian, `α = scale · R²` for the bounding
    /// radius `R` and `β = bending · σ⁴ / R²`.
    Sobolev { scale: f64, bending: f64 },
}

impl Default for Preconditioner {
    fn default() -> Self {
        Preconditioner::Sobolev { scale: 1.0, bending: 12.0 }
    }
}

impl Preconditioner {
    /// Admissible descent direction for the projected gradient `g`.
    pub fn direction(&self, imm: &Immersion, sigma: f64, g: &VariationField) -> VariationField {
        match *self {
            Preconditioner::Identity => g.clone(),
            Preconditioner::Sobolev { scale, bending } => {
                let (_, r) = bounding_ball(imm);
                let d = sobolev_smooth(imm, scale * r * r, bending * sigma.powi(4) / (r * r), &g.w);
                VariationField::projected(imm, d)
            }
        }
    }
}

impl Default for DescentOptions {
    fn default() -> Self {
        DescentOptions {
            stop: StopRule::default(),
            max_iterations: 200,
            armijo: 0.5,
            backtrack: 0.5,
            growth: 2.0,
            initial_step: None,
            step_scale: 1.0,
            dictionary: None,
            preconditioner: Preconditioner::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub sigma: f64,
    pub energy: EnergyBreakdown,
    pub criticality: f64,
    pub entropy: f64,
    pub step_size: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Critical,
    IterationCap,
    LineSearchStall,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseSummary {
    pub sigma: f64,
    pub accepted_steps: usize,
    pub termination: Termination,
    pub criticality: f64,
    pub energy: EnergyBreakdown,
    pub entropy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub phases: Vec<PhaseSummary>,
    pub entropy_violation: bool,
}

impl RunTrace {
    pub fn entropies(&self) -> Vec<f64> {
        self.phases.iter().map(|p| p.entropy).collect()
    }

    /// Appends `other`, renumbering its steps after the existing rows.
    pub fn append(&mut self, mut other: RunTrace) {
        let offset = self.rows.len();
        for r in &mut other.rows {
            r.step += offset;
        }
        self.rows.extend(other.rows);
        self.phases.extend(other.phases);
        self.entropy_violation |= other.entropy_violation;
    }
}

/// Centroid and enclosing radius of the vertex positions.
pub fn bounding_ball(imm: &Immersion) -> (Vec<f64>, f64) {
    let q = imm.q();
    let n = imm.n_vertices() as f64;
    let mut c = vec![0.0; q];
    for v in 0..imm.n_vertices() {
        for (ci, x) in c.iter_mut().zip(imm.point(v)) {
            *ci += x / n;
        }
    }
    let r = (0..imm.n_vertices())
        .map(|v| imm.point(v).iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    (c, r.max(f64::MIN_POSITIVE))
}

/// Dictionary adapted to the constraint over the bounding ball of `imm`.
pub fn default_dictionary(imm: &Immersion) -> Vec<TestVectorField> {
    let (c, r) = bounding_ball(imm);
    standard_dictionary(&imm.ambient, imm.constraint.as_ref(), (&c, 1.1 * r))
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("flow requires sigma > 0, got {sigma}")));
    }
    Ok(())
}

/// Projected gradient descent with Armijo backtracking at fixed `σ`.
pub fn descend(imm: &Immersion, sigma: f64, options: &DescentOptions) -> Result<(Immersion, RunTrace)> {
    check_sigma(sigma)?;
    let mut x = imm.clone();
    let mut trace = RunTrace::default();
    let threshold = options.stop.threshold(sigma);
    let dictionary = match &options.dictionary {
        Some(d) => d.clone(),
        None => default_dictionary(imm),
    };
    let (mut e, mut g) = energy_and_gradient(&x, sigma)?;
    let mut crit = criticality_with_gradient(&x, &g, &dictionary)?;
    let h = x.mean_edge_length();
    let mut d = options.preconditioner.direction(&x, sigma, &g);
    let mut eta = match options.initial_step {
        Some(s) => s / options.growth,
        None => {
            let gmax = d.max_norm();
            if gmax > 0.0 {
                0.1 * h / gmax / options.growth
            } else {
                h
            }
        }
    };
    let mut termination = Termination::IterationCap;
    let mut accepted = 0;
    for _ in 0..options.max_iterations {
        if crit < threshold {
            termination = Termination::Critical;
            break;
        }
        match line_search(&x, sigma, &e, &g, &d, eta * options.growth, options, h)? {
            Some((trial, e_new, step)) => {
                eta = step;
                x = trial;
                e = e_new;
                let (_, g_new) = energy_and_gradient(&x, sigma)?;
                g = g_new;
                crit = criticality_with_gradient(&x, &g, &dictionary)?;
                d = options.preconditioner.direction(&x, sigma, &g);
                accepted += 1;
                trace.rows.push(TraceRow {
                    step: accepted,
                    sigma,
                    energy: e,
                    criticality: crit,
                    entropy: e.entropy(),
                    step_size: step,
                });
            }
            None => {
                termination = Termination::LineSearchStall;
                break;
            }
        }
    }
    if options.max_iterations > 0 && termination == Termination::IterationCap && crit < threshold {
        termination = Termination::Critical;
    }
    trace.phases.push(PhaseSummary {
        sigma,
        accepted_steps: accepted,
        termination,
        criticality: crit,
        energy: e,
        entropy: e.entropy(),
    });
    Ok((x, trace))
}

/// Backtracking along `-d`; returns the accepted state, its energy and step.
#[allow(clippy::too_many_arguments)]
fn line_search(
    x: &Immersion,
    sigma: f64,
    e: &EnergyBreakdown,
    g: &VariationField,
    d: &VariationField,
    start: f64,
    options: &DescentOptions,
    h: f64,
) -> Result<Option<(Immersion, EnergyBreakdown, f64)>> {
    let gmax = d.max_norm();
    if gmax == 0.0 || options.step_scale == 0.0 {
        return Ok(None);
    }
    let mut eta = start;
    while eta * options.step_scale * gmax > 1e-13 * h {
        let step = eta * options.step_scale;
        let mut trial = x.clone();
        for (p, di) in trial.positions.iter_mut().zip(&d.w) {
            *p -= step * di;
        }
        let ok = trial.project_in_place().is_ok() && trial.validate().is_ok();
        if ok {
            if let Ok(e_t) = energy(&trial, sigma) {
                let moved: f64 = x.positions.iter().zip(&trial.positions).zip(&g.w).map(|((a, b), d)| d * (a - b)).sum();
                if e_t.total < e.total && e_t.total <= e.total - options.armijo * moved {
                    return Ok(Some((trial, e_t, eta)));
                }
            }
        }
        eta *= options.backtrack;
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    /// Strictly decreasing values in `(0, 1)`.
    pub sigmas: Vec<f64>,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub stop: StopRule,
    /// `ℰ` must shrink by at least this factor between consecutive phases.
    #[serde(default = "unit")]
    pub entropy_factor: f64,
}

fn default_iterations() -> usize {
    500
}

fn unit() -> f64 {
    1.0
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::geometric(0.2, 0.5, 0.0125).expect("default schedule is valid")
    }
}

impl Schedule {
    /// `start, start·ratio, …` down to `end` inclusive (up to rounding).
    pub fn geometric(start: f64, ratio: f64, end: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0 && end > 0.0 && start >= end) {
            return Err(Error::InvalidParameter("geometric schedule needs 0 < end <= start and 0 < ratio < 1".into()));
        }
        let mut sigmas = vec![start];
        while *sigmas.last().unwrap() * ratio >= end * (1.0 - 1e-12) {
            let next = sigmas.last().unwrap() * ratio;
            sigmas.push(next);
        }
        let s = Schedule { sigmas, max_iterations: default_iterations(), stop: StopRule::default(), entropy_factor: 1.0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() {
            return Err(Error::InvalidParameter("schedule is empty".into()));
        }
        if self.sigmas.iter().any(|&s| !(s > 0.0 && s < 1.0)) {
            return Err(Error::InvalidParameter("schedule values must lie in (0, 1)".into()));
        }
        if self.sigmas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter("schedule must be strictly decreasing".into()));
        }
        Ok(())
    }

    fn descent_options(&self, base: &DescentOptions) -> DescentOptions {
        DescentOptions { stop: self.stop, max_iterations: self.max_iterations, ..base.clone() }
    }
}

/// Runs [`descend`] at each `σ` of the schedule, warm-starting each phase.
pub fn continuation(imm: &Immersion, schedule: &Schedule) -> Result<(Immersion, RunTrace)> {
    continuation_with(imm, schedule, &DescentOptions::default())
}

pub fn continuation_with(
    imm: &Immersion,
    schedule: &Schedule,
    base: &DescentOptions,
) -> Result<(Immersion, RunTrace)> {
    continuation_observed(imm, schedule, base, &mut |_, _, _| Ok(()))
}

/// [`continuation_with`] calling `observer(phase, σ, state)` after each phase.
pub fn continuation_observed(
    imm: &Immersion,
    schedule: &Schedule,
    base: &DescentOptions,
    observer: &mut dyn FnMut(usize, f64, &Immersion) -> Result<()>,
) -> Result<(Immersion, RunTrace)> {
    schedule.validate()?;
    let options = schedule.descent_options(base);
    let mut x = imm.clone();
    let mut trace = RunTrace::default();
    for (k, &sigma) in schedule.sigmas.iter().enumerate() {
        let (next, phase) = descend(&x, sigma, &options)?;
        x = next;
        trace.append(phase);
        observer(k, sigma, &x)?;
    }
    trace.entropy_violation = entropy_violation(&trace.entropies(), schedule.entropy_factor);
    Ok((x, trace))
}

/// Whether `ℰ` failed to shrink by `factor` at some step among the last three phases.
pub fn entropy_violation(entropies: &[f64], factor: f64) -> bool {
    if entropies.len() < 3 {
        return false;
    }
    let tail = &entropies[entropies.len() - 3..];
    tail.windows(2).any(|w| w[1] > factor * w[0])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointPolicy {
    Fixed,
    Free,
}

/// A one-parameter family `Φ(t_i)`, `t_i = i/T`, on a shared mesh.
#[derive(Clone, Debug)]
pub struct Sweepout {
    pub slices: Vec<Immersion>,
    pub endpoints: EndpointPolicy,
}

impl Sweepout {
    pub fn new(slices: Vec<Immersion>, endpoints: EndpointPolicy) -> Result<Self> {
        if slices.len() < 2 {
            return Err(Error::InvalidParameter("a sweepout needs at least two slices".into()));
        }
        let mesh = &slices[0].mesh;
        for (i, s) in slices.iter().enumerate() {
            if !std::sync::Arc::ptr_eq(&s.mesh, mesh) && s.mesh.faces() != mesh.faces() {
                return Err(Error::InvalidParameter(format!("slice {i} uses a different mesh")));
            }
            s.validate().map_err(|e| Error::NonCompactFamily { slice: i, reason: e.to_string() })?;
        }
        Ok(Sweepout { slices, endpoints })
    }

    /// Slices `z = c` of the unit ball for `T + 1` equally spaced `c ∈ [-c_max, c_max]`.
    /// `c_max` keeps the end slices away from the degenerate poles.
    pub fn horizontal_disks(refinement: u32, intervals: usize, c_max: f64) -> Result<Self> {
        if intervals < 1 || !(c_max > 0.0 && c_max < 1.0) {
            return Err(Error::InvalidParameter("need at least one interval and 0 < c_max < 1".into()));
        }
        let slices = (0..=intervals)
            .map(|i| horizontal_disk(refinement, -c_max + 2.0 * c_max * i as f64 / intervals as f64))
            .collect::<Result<Vec<_>>>()?;
        Sweepout::new(slices, EndpointPolicy::Fixed)
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    /// Step-size taper: zero at fixed endpoints, one in the middle.
    pub fn taper(&self, i: usize) -> f64 {
        match self.endpoints {
            EndpointPolicy::Free => 1.0,
            EndpointPolicy::Fixed => {
                let t = i as f64 / (self.len() - 1) as f64;
                (std::f64::consts::PI * t).sin().max(0.0)
            }
        }
    }

    /// First index of maximal energy, with all slice energies.
    pub fn max_slice(&self, sigma: f64) -> Result<(usize, f64, Vec<EnergyBreakdown>)> {
        let energies = par::map_indexed(self.len(), |i| energy(&self.slices[i], sigma));
        let mut out = Vec::with_capacity(energies.len());
        for (i, e) in energies.into_iter().enumerate() {
            out.push(e.map_err(|e| Error::NonCompactFamily { slice: i, reason: e.to_string() })?);
        }
        let mut best = 0;
        for (i, e) in out.iter().enumerate() {
            if e.total > out[best].total {
                best = i;
            }
        }
        Ok((best, out[best].total, out))
    }
}

#[derive(Clone, Debug)]
pub struct MinmaxOutcome {
    pub beta_estimate: f64,
    pub argmax: usize,
    /// `β` after each round, starting with the initial family.
    pub beta_history: Vec<f64>,
    pub refined: Immersion,
    pub refined_trace: RunTrace,
    pub sweepout: Sweepout,
}

/// Pushes down the maximal slice of the family by tapered descent rounds,
/// then refines the final argmax slice with a full descent.
pub fn minmax_sweep(
    sweepout: &Sweepout,
    sigma: f64,
    rounds: usize,
    steps_per_round: usize,
    options: &DescentOptions,
) -> Result<MinmaxOutcome> {
    check_sigma(sigma)?;
    let mut family = sweepout.clone();
    let (mut argmax, mut beta, _) = family.max_slice(sigma)?;
    let mut history = vec![beta];
    for _ in 0..rounds {
        let next = par::map_indexed(family.len(), |i| {
            let taper = family.taper(i);
            if taper == 0.0 || steps_per_round == 0 {
                return Ok(family.slices[i].clone());
            }
            let opts = DescentOptions { max_iterations: steps_per_round, step_scale: taper, ..options.clone() };
            descend(&family.slices[i], sigma, &opts)
                .map(|(s, _)| s)
                .map_err(|e| Error::NonCompactFamily { slice: i, reason: e.to_string() })
        });
        family.slices = next.into_iter().collect::<Result<Vec<_>>>()?;
        let (a, b, _) = family.max_slice(sigma)?;
        argmax = a;
        beta = b;
        history.push(beta);
    }
    let (refined, refined_trace) = descend(&family.slices[argmax], sigma, options)?;
    Ok(MinmaxOutcome { beta_estimate: beta, argmax, beta_history: history, refined, refined_trace, sweepout: family })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StruweSelection {
    /// One-sided difference quotient `Δβ/Δσ` per sample.
    pub quotients: Vec<f64>,
    /// `σ log(1/σ) Δβ/Δσ` per sample.
    pub scores: Vec<f64>,
    /// Indices with score at most the threshold.
    pub selected: Vec<usize>,
    /// `β` decreased with `σ` by more than the tolerance somewhere.
    pub non_monotone: bool,
}

/// Selects samples `(σ_i, β_i)` (σ strictly decreasing) whose one-sided
/// difference quotient satisfies `σ log(1/σ) Δβ/Δσ ≤ threshold`.
pub fn struwe_select(samples: &[(f64, f64)], threshold: f64, tolerance: f64) -> Result<StruweSelection> {
    if samples.len() < 2 {
        return Err(Error::InvalidParameter("need at least two samples".into()));
    }
    if samples.windows(2).any(|w| !(w[1].0 < w[0].0)) || samples.iter().any(|s| !(s.0 > 0.0)) {
        return Err(Error::InvalidParameter("sigma grid must be positive and strictly decreasing".into()));
    }
    let n = samples.len();
    let quotient = |i: usize, j: usize| (samples[i].1 - samples[j].1) / (samples[i].0 - samples[j].0);
    let quotients: Vec<f64> = (0..n).map(|i| if i + 1 < n { quotient(i, i + 1) } else { quotient(i - 1, i) }).collect();
    let scores: Vec<f64> = samples
        .iter()
        .zip(&quotients)
        .map(|(&(s, _), q)| s * (1.0 / s).ln() * q)
        .collect();
    let selected = (0..n).filter(|&i| scores[i] <= threshold).collect();
    let non_monotone = samples.windows(2).any(|w| w[1].1 > w[0].1 + tolerance);
    Ok(StruweSelection { quotients, scores, selected, non_monotone })
}

#[derive(Serialize)]
struct Sidecar<'a> {
    sigma: f64,
    step: usize,
    energy: &'a EnergyBreakdown,
}

/// Writes `path` (OBJ) and `path.json` with `{sigma, step, energy}`.
pub fn checkpoint(path: &Path, imm: &Immersion, sigma: f64, step: usize) -> Result<()> {
    let e = energy(imm, sigma)?;
    write_atomic(path, to_obj(imm).as_bytes())?;
    let side = serde_json::to_string_pretty(&Sidecar { sigma, step, energy: &e })
        .map_err(|e| Error::Io(e.to_string()))?;
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    write_atomic(Path::new(&name), side.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_halves_down_to_final_value() {
        let s = Schedule::default();
        assert_eq!(s.sigmas, vec![0.2, 0.1, 0.05, 0.025, 0.0125]);
    }

    #[test]
    fn schedule_validation() {
        let mut s = Schedule { sigmas: vec![0.1, 0.2], ..Schedule::default() };
        assert!(s.validate().is_err());
        s.sigmas = vec![1.5];
        assert!(s.validate().is_err());
    }

    #[test]
    fn entropy_violation_looks_at_last_three_phases() {
        assert!(!entropy_violation(&[1.0, 0.5], 1.0));
        assert!(!entropy_violation(&[0.1, 1.0, 0.5, 0.2], 1.0));
        assert!(entropy_violation(&[1.0, 0.5, 0.6], 1.0));
    }
}
