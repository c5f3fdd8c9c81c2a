//! The Gell-Mann–Low ratio `U_int(0,−∞)ψ / ⟨ψ|U_int(0,−∞)ψ⟩`, its ε-sweep,
//! the geometric eigenstate, multistep switching, the permanently degenerate
//! variant and gap diagnostics.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::degeneracy::InitialBasis;
use crate::error::{Error, Result};
use crate::linalg::{align_phase, log_log_slope, rank_one, spectral_norm, CMatrix, CVector, C64};
use crate::operator::{projector_distance, spectral_frame, PerturbationProblem, DEFAULT_CLUSTER_TOL};
use crate::propagation::{evolve_from_past, kato_evolve, EvolutionKind, KATO_STEP};
use crate::switching::{Schedule, SwitchingProfile};

/// Denominators below this magnitude are treated as vanishing.
pub const DENOMINATOR_FLOOR: f64 = 1e-8;
/// Truncation tolerance of the evolution from the far past (scaled by ε).
pub const TRUNCATION_TOL: f64 = 1e-6;
/// Truncation tolerance of the Kato evolution for the geometric eigenstate.
pub const GEOMETRIC_TOL: f64 = 1e-10;
const CONDITION_MARGIN: f64 = 1e-6;
/// Deltas below this are roundoff; a sweep made only of them counts as converged.
const DELTA_NOISE: f64 = 1e-8;

/// `(‖Hψ − ⟨H⟩ψ‖/‖ψ‖, ⟨H⟩)` with `⟨H⟩` the Rayleigh quotient.
pub fn eigen_residual(h: &CMatrix, psi: &CVector) -> (f64, f64) {
    let norm = psi.norm();
    if norm == 0.0 {
        return (0.0, 0.0);
    }
    let hpsi = h * psi;
    let energy = psi.dotc(&hpsi).re / (norm * norm);
    ((hpsi - psi.scale(energy)).norm() / norm, energy)
}

#[derive(Debug, Clone)]
pub struct GmlOutcome {
    pub kind: EvolutionKind,
    pub epsilon: f64,
    pub state: CVector,
    pub denominator: C64,
    pub eigen_residual: f64,
    pub rayleigh_energy: f64,
    /// `‖|ψ⟩⟨ψ| − P_j(1)‖` for the tracked level, when known.
    pub condition_norm: Option<f64>,
    /// Truncation check of the underlying evolution.
    pub cauchy_difference: f64,
    pub t0: f64,
}

#[derive(Debug, Clone)]
pub struct GeometricState {
    pub state: CVector,
    pub energy: f64,
    pub eigen_residual: f64,
    pub t0: f64,
    pub unitarity_defect: f64,
}

/// `A(0, t0) φ_{j,0}`: the initial basis vector transported by the Kato
/// evolution, started where the switching has reached `GEOMETRIC_TOL`.
pub fn geometric_eigenstate(
    problem: &PerturbationProblem,
    profile: &SwitchingProfile,
    basis: &InitialBasis,
    j: usize,
) -> Result<GeometricState> {
    geometric_eigenstate_with(problem, profile, basis.vector(check_level(basis, j)?), GEOMETRIC_TOL, KATO_STEP)
}

pub fn geometric_eigenstate_with(
    problem: &PerturbationProblem,
    profile: &SwitchingProfile,
    psi: CVector,
    tol: f64,
    step: f64,
) -> Result<GeometricState> {
    let schedule = Schedule::full(profile.clone());
    let t0 = profile.truncation_time(tol)?;
    let a = kato_evolve(problem, &schedule, t0, 0.0, step)?;
    let state = &a.unitary * psi;
    let (eigen_residual, energy) = eigen_residual(&problem.hamiltonian(1.0), &state);
    Ok(GeometricState { state, energy, eigen_residual, t0, unitarity_defect: a.unitarity_defect })
}

fn check_level(basis: &InitialBasis, j: usize) -> Result<usize> {
    if j >= basis.len() {
        return Err(Error::InvalidArgument(format!("level {j} outside the basis of size {}", basis.len())));
    }
    Ok(j)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioCondition {
    pub ok: bool,
    pub norm: f64,
}

/// `‖|φ_{j,0}⟩⟨φ_{j,0}| − P_j(1)‖ < 1`: the denominator of the ratio can only
/// stay away from zero when the final projector is not orthogonal to the start.
pub fn check_ratio_condition(problem: &PerturbationProblem, basis: &InitialBasis, j: usize) -> Result<RatioCondition> {
    let j = check_level(basis, j)?;
    let p1 = level_projector(problem, basis, j, 1.0)?;
    let norm = projector_distance(&rank_one(&basis.vector(j)), &p1)?;
    Ok(RatioCondition { ok: norm < 1.0 - CONDITION_MARGIN, norm })
}

/// Ratio `U_int ψ / ⟨φref|U_int ψ⟩` along `schedule`, residual measured against `H(schedule.to)`.
fn ratio_along(
    problem: &PerturbationProblem,
    schedule: &Schedule,
    psi: &CVector,
    reference: &CVector,
    epsilon: f64,
    kind: EvolutionKind,
) -> Result<GmlOutcome> {
    let past = evolve_from_past(problem, schedule, epsilon, kind, TRUNCATION_TOL)?;
    let evolved = &past.unitary * psi;
    let denominator = reference.dotc(&evolved);
    if denominator.norm() < DENOMINATOR_FLOOR {
        return Err(Error::VanishingDenominator { magnitude: denominator.norm() });
    }
    let state = evolved.map(|z| z / denominator);
    let (eigen_residual, rayleigh_energy) = eigen_residual(&problem.hamiltonian(schedule.to), &state);
    Ok(GmlOutcome {
        kind,
        epsilon,
        state,
        denominator,
        eigen_residual,
        rayleigh_energy,
        condition_norm: None,
        cauchy_difference: past.cauchy_difference,
        t0: past.t0,
    })
}

/// Gell-Mann–Low ratio for basis vector `j` at one ε.
pub fn gml_ratio(
    problem: &PerturbationProblem,
    profile: &SwitchingProfile,
    basis: &InitialBasis,
    j: usize,
    epsilon: f64,
    kind: EvolutionKind,
) -> Result<GmlOutcome> {
    let condition = check_ratio_condition(problem, basis, j)?;
    let psi = basis.vector(j);
    let mut out = ratio_along(problem, &Schedule::full(profile.clone()), &psi, &psi, epsilon, kind)?;
    out.condition_norm = Some(condition.norm);
    Ok(out)
}

/// Gell-Mann–Low ratio for an arbitrary initial state.
pub fn gml_ratio_state(
    problem: &PerturbationProblem,
    profile: &SwitchingProfile,
    psi: &CVector,
    epsilon: f64,
    kind: EvolutionKind,
) -> Result<GmlOutcome> {
    ratio_along(problem, &Schedule::full(profile.clone()), psi, psi, epsilon, kind)
}

/// Ratio with denominator `⟨φref|U_int ψ⟩`, for tracked levels that stay degenerate.
pub fn permanent_degeneracy_ratio(
    problem: &PerturbationProblem,
    profile: &SwitchingProfile,
    psi: &CVector,
    reference: &CVector,
    epsilon: f64,
    kind: EvolutionKind,
) -> Result<GmlOutcome> {
    if psi.len() != problem.dim() || reference.len() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), found: psi.len().min(reference.len()) });
    }
    ratio_along(problem, &Schedule::full(profile.clone()), psi, reference, epsilon, kind)
}

/// One ε-sweep of the ratio.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub epsilons: Vec<f64>,
    pub outcomes: Vec<Result<GmlOutcome>>,
    /// `‖Ψ(ε_k) − Ψ(ε_{k+1})‖` of the phase-aligned states (`None` if either failed).
    pub cauchy_deltas: Vec<Option<f64>>,
    /// `‖U^ε(0,−∞) − U_A^ε(0,−∞)‖` per ε, when requested.
    pub adiabatic_errors: Option<Vec<Option<f64>>>,
    /// Log-log slope of the adiabatic errors against ε.
    pub fitted_slope: Option<f64>,
}

impl SweepRecord {
    fn deltas(&self) -> Option<Vec<f64>> {
        self.cauchy_deltas.iter().copied().collect()
    }

    /// Deltas strictly decreasing, or all at roundoff level.
    pub fn converging(&self) -> bool {
        match self.deltas() {
            Some(d) if !d.is_empty() => {
                d.iter().all(|&x| x < DELTA_NOISE) || d.windows(2).all(|w| w[1] < w[0])
            }
            _ => false,
        }
    }

    /// Every delta at least `floor`: the ratio keeps moving as ε shrinks.
    pub fn no_limit(&self, floor: f64) -> bool {
        match self.deltas() {
            Some(d) if !d.is_empty() => d.iter().all(|&x| x >= floor),
            _ => false,
        }
    }

    /// CSV with columns `epsilon, denominator_abs, eigen_residual, cauchy_delta,
    /// adiabatic_error`; the delta on row `k` compares `ε_{k-1}` and `ε_k`.
    /// Missing values are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,denominator_abs,eigen_residual,cauchy_delta,adiabatic_error\n");
        let cell = |x: Option<f64>| x.map(|v| format!("{v:.16e}")).unwrap_or_default();
        for (k, eps) in self.epsilons.iter().enumerate() {
            let o = self.outcomes[k].as_ref().ok();
            let delta = if k == 0 { None } else { self.cauchy_deltas[k - 1] };
            let adiabatic = self.adiabatic_errors.as_ref().and_then(|a| a[k]);
            let _ = writeln!(
                out,
                "{eps:.16e},{},{},{},{}",
                cell(o.map(|o| o.denominator.norm())),
                cell(o.map(|o| o.eigen_residual)),
                cell(delta),
                cell(adiabatic),
            );
        }
        out
    }
}

fn validate_epsilons(epsilons: &[f64]) -> Result<()> {
    if epsilons.len() < 4 {
        return Err(Error::InvalidArgument(format!("a sweep needs at least 4 values of epsilon, got {}", epsilons.len())));
    }
    if epsilons.iter().any(|&e| !(e > 0.0 && e.is_finite())) || epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("epsilons must be positive and strictly decreasing".into()));
    }
    Ok(())
}

/// Sweep the ratio of basis vector `j` over `epsilons` (full evolution),
/// phase-aligning every state to the geometric eigenstate.
pub fn gml_sweep(
    problem: &PerturbationProblem,
    profile: &SwitchingProfile,
    basis: &InitialBasis,
    j: usize,
    epsilons: &[f64],
    adiabatic_errors: bool,
) -> Result<SweepRecord> {
    let j = check_level(basis, j)?;
    let reference = geometric_eigenstate(problem, profile, basis, j)?.state;
    let condition = check_ratio_condition(problem, basis, j)?;
    let mut record = sweep_state(problem, profile, &basis.vector(j), &reference, epsilons, adiabatic_errors)?;
    for o in record.outcomes.iter_mut().flatten() {
        o.condition_norm = Some(condition.norm);
    }
    Ok(record)
}

/// Sweep for an arbitrary initial state `psi`, aligning phases to `reference`.
pub fn sweep_state(
    problem: &PerturbationProblem,
    profile: &SwitchingProfile,
    psi: &CVector,
    reference: &CVector,
    epsilons: &[f64],
    adiabatic_errors: bool,
) -> Result<SweepRecord> {
    validate_epsilons(epsilons)?;
    let schedule = Schedule::full(profile.clone());
    let entries: Vec<(Result<GmlOutcome>, Option<f64>)> = epsilons
        .par_iter()
        .map(|&eps| {
            let outcome = gml_ratio_state(problem, profile, psi, eps, EvolutionKind::Full);
            let error = adiabatic_errors
                .then(|| {
                    let full = evolve_from_past(problem, &schedule, eps, EvolutionKind::Full, TRUNCATION_TOL).ok()?;
                    let adia = evolve_from_past(problem, &schedule, eps, EvolutionKind::Adiabatic, TRUNCATION_TOL).ok()?;
                    Some(spectral_norm(&(full.unitary - adia.unitary)))
                })
                .flatten();
            (outcome, error)
        })
        .collect();
    let (mut outcomes, errors): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
    for o in outcomes.iter_mut().flatten() {
        o.state = align_phase(&o.state, reference);
    }
    let cauchy_deltas = outcomes
        .windows(2)
        .map(|w| match (&w[0], &w[1]) {
            (Ok(a), Ok(b)) => Some((&a.state - &b.state).norm()),
            _ => None,
        })
        .collect();
    let (adiabatic_errors, fitted_slope) = if adiabatic_errors {
        let pts: Vec<(f64, f64)> = epsilons
            .iter()
            .zip(&errors)
            .filter_map(|(&e, err)| err.map(|x| (e, x)))
            .collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        (Some(errors), log_log_slope(&xs, &ys))
    } else {
        (None, None)
    };
    Ok(SweepRecord { epsilons: epsilons.to_vec(), outcomes, cauchy_deltas, adiabatic_errors, fitted_slope })
}

/// One stage of a multistep switching.
#[derive(Debug, Clone)]
pub struct StageRecord {
    pub from: f64,
    pub to: f64,
    /// `‖P_j(to) − P_j(from)‖`.
    pub displacement: f64,
    pub outcome: GmlOutcome,
}

#[derive(Debug, Clone)]
pub struct MultistepOutcome {
    pub stages: Vec<StageRecord>,
    /// Last stage, with the residual taken against `H0 + V`.
    pub outcome: GmlOutcome,
}

/// Tracked projector of level `j` at `λ`. At `λ = 0`, and wherever level `j`
/// still shares its eigenvalue with other tracked levels, the rank-one
/// projector onto the part of `φ_{j,0}` inside that eigenspace is used.
fn level_projector(problem: &PerturbationProblem, basis: &InitialBasis, j: usize, lambda: f64) -> Result<CMatrix> {
    let phi = basis.vector(j);
    if lambda == 0.0 {
        return Ok(rank_one(&phi));
    }
    let frame = spectral_frame(problem, lambda, DEFAULT_CLUSTER_TOL)?;
    let group = frame.projector(j);
    if frame.group_of(j).len() == 1 {
        return Ok(group);
    }
    let inside = &group * phi;
    if inside.norm() < 1e-12 {
        return Ok(group);
    }
    Ok(rank_one(&inside.normalize()))
}

/// Switch on in stages `λ_k → λ_{k+1}`, each with its own ratio, feeding the
/// normalized output of a stage into the next.
pub fn multistep_gml(
    problem: &PerturbationProblem,
    profile: &SwitchingProfile,
    basis: &InitialBasis,
    j: usize,
    breakpoints: &[f64],
    epsilon: f64,
    kind: EvolutionKind,
) -> Result<MultistepOutcome> {
    let j = check_level(basis, j)?;
    if breakpoints.len() < 2
        || breakpoints[0] != 0.0
        || breakpoints[breakpoints.len() - 1] != 1.0
        || breakpoints.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::InvalidArgument("breakpoints must increase strictly from 0 to 1".into()));
    }
    let projectors = breakpoints
        .iter()
        .map(|&l| level_projector(problem, basis, j, l))
        .collect::<Result<Vec<_>>>()?;
    let displacements = projectors
        .windows(2)
        .map(|w| projector_distance(&w[0], &w[1]))
        .collect::<Result<Vec<_>>>()?;
    for (stage, &d) in displacements.iter().enumerate() {
        if d >= 1.0 - CONDITION_MARGIN {
            return Err(Error::StageConditionViolated { stage, distance: d });
        }
    }
    let mut psi = basis.vector(j);
    let mut stages = Vec::with_capacity(displacements.len());
    for (k, w) in breakpoints.windows(2).enumerate() {
        let schedule = Schedule::stage(profile.clone(), w[0], w[1]);
        let mut outcome = ratio_along(problem, &schedule, &psi, &psi, epsilon, kind)?;
        outcome.condition_norm = Some(displacements[k]);
        psi = outcome.state.normalize();
        stages.push(StageRecord { from: w[0], to: w[1], displacement: displacements[k], outcome });
    }
    let outcome = stages.last().expect("at least one stage").outcome.clone();
    Ok(MultistepOutcome { stages, outcome })
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GapRow {
    pub t: f64,
    pub f: f64,
    pub global_gap: f64,
    pub local_gaps: Vec<f64>,
    /// `δ_j(t) / f(t)`.
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GapTable {
    pub rows: Vec<GapRow>,
    /// Empirical bounds of `δ_j(t)/f(t)` over the grid.
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// False when some tracked level never separates from its neighbours.
    pub splitting: bool,
}

impl GapTable {
    /// CSV with columns `t, f, global_gap, local_gap_j…, ratio_j…`.
    pub fn to_csv(&self) -> String {
        let n = self.rows.first().map_or(0, |r| r.local_gaps.len());
        let mut out = String::from("t,f,global_gap");
        for j in 1..=n {
            let _ = write!(out, ",local_gap_{j}");
        }
        for j in 1..=n {
            let _ = write!(out, ",ratio_{j}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{:.16e},{:.16e},{:.16e}", r.t, r.f, r.global_gap);
            for x in r.local_gaps.iter().chain(&r.ratios) {
                let _ = write!(out, ",{x:.16e}");
            }
            out.push('\n');
        }
        out
    }
}

/// Local and global gaps along the switching, with the ratio `δ_j(t)/f(t)`.
pub fn gap_diagnostics(problem: &PerturbationProblem, profile: &SwitchingProfile, t_grid: &[f64]) -> Result<GapTable> {
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let f = profile.eval(t)?.f;
        if !(f > 0.0) {
            return Err(Error::InvalidArgument(format!("switching vanishes at t = {t}")));
        }
        let frame = spectral_frame(problem, f, DEFAULT_CLUSTER_TOL)?;
        let ratios = frame.local_gaps.iter().map(|d| d / f).collect();
        rows.push(GapRow { t, f, global_gap: frame.global_gap, local_gaps: frame.local_gaps, ratios });
    }
    let all = || rows.iter().flat_map(|r| r.ratios.iter().copied());
    let ratio_min = all().fold(f64::INFINITY, f64::min);
    let ratio_max = all().fold(f64::NEG_INFINITY, f64::max);
    let scale = problem.h0_eigen().scale();
    let splitting = rows.iter().all(|r| r.local_gaps.iter().all(|&d| d > DEFAULT_CLUSTER_TOL * scale));
    Ok(GapTable { rows, ratio_min, ratio_max, splitting })
}
