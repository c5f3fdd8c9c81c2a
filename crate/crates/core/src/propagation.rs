//! Unitary propagators in macroscopic time `t = εs`: the full evolution
//! `iε dU/dt = H(t)U`, the adiabatic evolution generated by `H + iεK`, and the
//! Kato evolution `dA/dt = K A`, plus the interaction picture and the
//! truncated evolution from the far past.
//!
//! All three are integrated with classical RK4 on the right-multiplicative
//! equation, projecting back onto the unitary group after every step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    cluster_sorted, hermitian_eigen, hermitian_norm, polar_unitary, spectral_norm, unitarity_defect, CMatrix,
    Eigensystem, C64, I,
};
use crate::operator::{spectral_frame, PerturbationProblem, SpectralFrame, DEFAULT_CLUSTER_TOL};
use crate::switching::Schedule;

/// Step of the fast evolutions in units of `ε/‖H‖`.
pub const C_STEP: f64 = 0.05;
/// Coarsest admissible step in units of `ε/‖H‖`.
pub const C_STEP_MAX: f64 = 0.1;
/// Default step of the Kato evolution.
pub const KATO_STEP: f64 = 0.01;
/// Tracked levels closer than this (relative to the spectral diameter) are
/// transported as one block.
pub const SPLIT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvolutionKind {
    Full,
    Adiabatic,
    Kato,
}

#[derive(Debug, Clone)]
pub struct PropagatorResult {
    pub kind: EvolutionKind,
    pub unitary: CMatrix,
    pub t_start: f64,
    pub t_end: f64,
    /// `None` for the Kato evolution.
    pub epsilon: Option<f64>,
    pub step: f64,
    pub step_count: usize,
    /// `‖U†U − I‖` of the returned matrix.
    pub unitarity_defect: f64,
    /// Largest per-step defect before projection onto the unitary group.
    pub raw_defect: f64,
}

/// Kato generator and Hamiltonian at one time.
#[derive(Debug, Clone)]
pub struct GeneratorSample {
    pub t: f64,
    pub lambda: f64,
    pub h: CMatrix,
    pub k: CMatrix,
    pub local_gaps: Vec<f64>,
    /// `‖K(t)‖ / |dλ/dt|`, i.e. `‖K̃(λ(t))‖`; `None` where the schedule is flat.
    pub bound_ratio: Option<f64>,
}

/// Block label of every eigen-index: tracked clusters first, the rest last.
fn transport_blocks(frame: &SpectralFrame) -> Vec<usize> {
    let n = frame.eigen.dim();
    let tol = SPLIT_TOL * frame.eigen.scale();
    let clusters = cluster_sorted(frame.tracked_values(), tol);
    let rest = clusters.len();
    let mut labels = vec![rest; n];
    for (b, c) in clusters.iter().enumerate() {
        for k in c.clone() {
            labels[frame.tracked.start + k] = b;
        }
    }
    labels
}

/// `K̃(λ) = −Σ P_j dP_j/dλ` from the eigen-decomposition of `H(λ)`:
/// in the eigenbasis `K̃_ik = −V_ik / (e_i − e_k)` between different blocks.
pub fn kato_tilde(problem: &PerturbationProblem, frame: &SpectralFrame) -> CMatrix {
    let q = &frame.eigen.vectors;
    let e = &frame.eigen.values;
    let labels = transport_blocks(frame);
    let mut m = q.adjoint() * problem.v().matrix() * q;
    for i in 0..e.len() {
        for k in 0..e.len() {
            m[(i, k)] = if labels[i] == labels[k] { C64::new(0.0, 0.0) } else { -m[(i, k)] / (e[i] - e[k]) };
        }
    }
    q * m * q.adjoint()
}

/// `K(t) = λ'(t) K̃(λ(t))` with diagnostics.
pub fn kato_generator(problem: &PerturbationProblem, schedule: &Schedule, t: f64) -> Result<GeneratorSample> {
    let (lambda, rate) = schedule.lambda(t)?;
    let frame = spectral_frame(problem, lambda, DEFAULT_CLUSTER_TOL)?;
    let kt = kato_tilde(problem, &frame);
    let bound_ratio = (rate.abs() > 0.0).then(|| spectral_norm(&kt));
    Ok(GeneratorSample {
        t,
        lambda,
        h: problem.hamiltonian(lambda),
        k: kt.scale(rate),
        local_gaps: frame.local_gaps.clone(),
        bound_ratio,
    })
}

/// Finite-difference Kato generator: `dP_j/dλ` by central differences of the
/// tracked projectors at `λ ± dλ` (one-sided at the ends of `[0, 1]`).
pub fn kato_generator_fd(problem: &PerturbationProblem, schedule: &Schedule, t: f64, dlambda: f64) -> Result<CMatrix> {
    if !(dlambda > 0.0 && dlambda < 0.5) {
        return Err(Error::InvalidArgument(format!("coupling increment {dlambda} out of range")));
    }
    let (lambda, rate) = schedule.lambda(t)?;
    let (lo, hi) = if lambda - dlambda < 0.0 {
        (lambda, lambda + dlambda)
    } else if lambda + dlambda > 1.0 {
        (lambda - dlambda, lambda)
    } else {
        (lambda - dlambda, lambda + dlambda)
    };
    let at = spectral_frame(problem, lambda, DEFAULT_CLUSTER_TOL)?;
    let a = spectral_frame(problem, lo, DEFAULT_CLUSTER_TOL)?;
    let b = spectral_frame(problem, hi, DEFAULT_CLUSTER_TOL)?;
    let n = problem.degeneracy();
    let projectors = |f: &SpectralFrame| -> Vec<CMatrix> {
        let mut out: Vec<CMatrix> = (0..n).map(|j| f.eigen.projector(f.tracked.start + j..f.tracked.start + j + 1)).collect();
        out.push(f.rest_projector());
        out
    };
    let (pa, pb, p) = (projectors(&a), projectors(&b), projectors(&at));
    for j in 0..n {
        // the ordinal labels must describe the same level on both sides
        if (&pa[j] * &pb[j]).trace().re < 0.5 {
            return Err(Error::TrackingFailure { lambda });
        }
    }
    let dim = problem.dim();
    let mut kt = CMatrix::zeros(dim, dim);
    for j in 0..=n {
        let dp = (&pb[j] - &pa[j]).unscale(hi - lo);
        kt -= &p[j] * dp;
    }
    Ok(kt.scale(rate))
}

/// Largest `‖H(λ)‖` over the schedule (attained at an end of the coupling range).
fn hamiltonian_bound(problem: &PerturbationProblem, schedule: &Schedule) -> f64 {
    let a = hermitian_norm(&problem.hamiltonian(schedule.from));
    let b = hermitian_norm(&problem.hamiltonian(schedule.to));
    a.max(b).max(f64::MIN_POSITIVE)
}

/// Default step `C_STEP · ε / ‖H‖` of the fast evolutions.
pub fn default_step(problem: &PerturbationProblem, schedule: &Schedule, epsilon: f64) -> f64 {
    C_STEP * epsilon / hamiltonian_bound(problem, schedule)
}

fn check_times(t0: f64, t1: f64) -> Result<()> {
    if t1 > 0.0 {
        return Err(Error::PositiveTime { tau: t1 });
    }
    if !(t0 <= t1) || !t0.is_finite() {
        return Err(Error::InvalidArgument(format!("need t0 <= t1 <= 0, got [{t0}, {t1}]")));
    }
    Ok(())
}

fn check_fast_step(problem: &PerturbationProblem, schedule: &Schedule, epsilon: f64, step: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let limit = C_STEP_MAX * epsilon / hamiltonian_bound(problem, schedule);
    if !(step > 0.0) || step > limit * (1.0 + 1e-12) {
        return Err(Error::StepTooCoarse { step, limit });
    }
    Ok(())
}

struct Integration {
    unitary: CMatrix,
    steps: usize,
    step: f64,
    raw_defect: f64,
}

/// RK4 for `dU/dt = G(t) U` from the identity, re-unitarized each step.
fn integrate(mut generator: impl FnMut(f64) -> Result<CMatrix>, dim: usize, t0: f64, t1: f64, step: f64) -> Result<Integration> {
    let mut u = CMatrix::identity(dim, dim);
    if t1 == t0 {
        return Ok(Integration { unitary: u, steps: 0, step: 0.0, raw_defect: 0.0 });
    }
    let steps = ((t1 - t0) / step).ceil().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    let time = |k: usize| if k == steps { t1 } else { (t0 + k as f64 * h).min(t1) };
    let id = CMatrix::identity(dim, dim);
    let mut raw_defect: f64 = 0.0;
    let mut g_start = generator(t0)?;
    for k in 0..steps {
        let (ta, tb) = (time(k), time(k + 1));
        let hk = tb - ta;
        let g_mid = generator(0.5 * (ta + tb))?;
        let g_end = generator(tb)?;
        let k1 = &g_start * &u;
        let k2 = &g_mid * (&u + &k1 * C64::new(0.5 * hk, 0.0));
        let k3 = &g_mid * (&u + &k2 * C64::new(0.5 * hk, 0.0));
        let k4 = &g_end * (&u + &k3 * C64::new(hk, 0.0));
        let next = &u + (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(hk / 6.0, 0.0);
        let defect = (next.adjoint() * &next - &id).norm();
        if !defect.is_finite() || defect > 0.5 {
            return Err(Error::IntegrationFailure(format!("unitarity lost at t = {tb} (defect {defect:.3e})")));
        }
        raw_defect = raw_defect.max(defect);
        u = polar_unitary(&next);
        g_start = g_end;
    }
    Ok(Integration { unitary: u, steps, step: h, raw_defect })
}

fn finish(kind: EvolutionKind, run: Integration, t0: f64, t1: f64, epsilon: Option<f64>) -> PropagatorResult {
    PropagatorResult {
        kind,
        unitarity_defect: unitarity_defect(&run.unitary),
        unitary: run.unitary,
        t_start: t0,
        t_end: t1,
        epsilon,
        step: run.step,
        step_count: run.steps,
        raw_defect: run.raw_defect,
    }
}

/// Kato evolution `A(s1, s0)`.
pub fn kato_evolve(problem: &PerturbationProblem, schedule: &Schedule, s0: f64, s1: f64, step: f64) -> Result<PropagatorResult> {
    check_times(s0, s1)?;
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let run = integrate(|t| Ok(kato_generator(problem, schedule, t)?.k), problem.dim(), s0, s1, step)?;
    Ok(finish(EvolutionKind::Kato, run, s0, s1, None))
}

fn schroedinger_generator(problem: &PerturbationProblem, schedule: &Schedule, epsilon: f64, t: f64) -> Result<CMatrix> {
    let (lambda, _) = schedule.lambda(t)?;
    Ok(problem.hamiltonian(lambda) * (-I / epsilon))
}

/// Full evolution `U^ε(t1, t0)`; `step` defaults to `C_STEP · ε / ‖H‖`.
pub fn full_evolve(
    problem: &PerturbationProblem,
    schedule: &Schedule,
    epsilon: f64,
    t0: f64,
    t1: f64,
    step: Option<f64>,
) -> Result<PropagatorResult> {
    check_times(t0, t1)?;
    let step = step.unwrap_or_else(|| default_step(problem, schedule, epsilon));
    check_fast_step(problem, schedule, epsilon, step)?;
    let run = integrate(|t| schroedinger_generator(problem, schedule, epsilon, t), problem.dim(), t0, t1, step)?;
    Ok(finish(EvolutionKind::Full, run, t0, t1, Some(epsilon)))
}

/// Adiabatic evolution `U_A^ε(t1, t0)` generated by `H(t) + iεK(t)`.
pub fn adiabatic_evolve(
    problem: &PerturbationProblem,
    schedule: &Schedule,
    epsilon: f64,
    t0: f64,
    t1: f64,
    step: Option<f64>,
) -> Result<PropagatorResult> {
    check_times(t0, t1)?;
    let step = step.unwrap_or_else(|| default_step(problem, schedule, epsilon));
    check_fast_step(problem, schedule, epsilon, step)?;
    let run = integrate(
        |t| {
            let g = kato_generator(problem, schedule, t)?;
            Ok(g.h * (-I / epsilon) + g.k)
        },
        problem.dim(),
        t0,
        t1,
        step,
    )?;
    Ok(finish(EvolutionKind::Adiabatic, run, t0, t1, Some(epsilon)))
}

/// `e^{itH/ε}` from an eigen-decomposition of `H`.
fn free_phase(free: &Eigensystem, t: f64, epsilon: f64) -> CMatrix {
    free.map(|e| (I * (t * e / epsilon)).exp())
}

/// `e^{i t_end H/ε} U e^{−i t_start H/ε}` for a Hermitian free Hamiltonian `H`.
pub fn interaction_picture(u: &PropagatorResult, free: &CMatrix) -> Result<CMatrix> {
    let epsilon = u
        .epsilon
        .ok_or_else(|| Error::InvalidArgument("interaction picture needs an ε-scaled propagator".into()))?;
    if free.shape() != u.unitary.shape() {
        return Err(Error::DimensionMismatch { expected: u.unitary.nrows(), found: free.nrows() });
    }
    let eig = hermitian_eigen(free);
    Ok(free_phase(&eig, u.t_end, epsilon) * &u.unitary * free_phase(&eig, -u.t_start, epsilon))
}

/// Interaction-picture propagator from the far past, integrated directly in
/// the interaction picture so that the free phases never enter the error.
#[derive(Debug, Clone)]
pub struct PastEvolution {
    pub kind: EvolutionKind,
    pub epsilon: f64,
    /// `U_int(0, t0)`.
    pub unitary: CMatrix,
    pub t0: f64,
    /// `‖U_int(t0, t0 − |t0|/2) − I‖`: how much an earlier start would change the result.
    pub cauchy_difference: f64,
    pub step: f64,
    pub step_count: usize,
    pub unitarity_defect: f64,
    pub raw_defect: f64,
}

/// Interaction-picture generator relative to the free Hamiltonian `H(from)`:
/// `e^{itH_a/ε} [−(i/ε)(λ(t) − λ_a)V + K(t)] e^{−itH_a/ε}` (`K` only for the
/// adiabatic kind).
fn interaction_generator<'a>(
    problem: &'a PerturbationProblem,
    schedule: &'a Schedule,
    epsilon: f64,
    kind: EvolutionKind,
    free: &'a Eigensystem,
) -> impl FnMut(f64) -> Result<CMatrix> + 'a {
    move |t| {
        let (lambda, _) = schedule.lambda(t)?;
        let mut g = problem.v().matrix() * (-I * ((lambda - schedule.from) / epsilon));
        if kind == EvolutionKind::Adiabatic {
            g += kato_generator(problem, schedule, t)?.k;
        }
        let phase = free_phase(free, t, epsilon);
        Ok(&phase * g * phase.adjoint())
    }
}

/// Interaction-picture propagator over `[t0, t1]` with the given kind.
pub fn interaction_evolve(
    problem: &PerturbationProblem,
    schedule: &Schedule,
    epsilon: f64,
    kind: EvolutionKind,
    t0: f64,
    t1: f64,
    step: Option<f64>,
) -> Result<PropagatorResult> {
    if kind == EvolutionKind::Kato {
        return Err(Error::InvalidArgument("the Kato evolution has no interaction picture".into()));
    }
    check_times(t0, t1)?;
    let step = step.unwrap_or_else(|| default_step(problem, schedule, epsilon));
    check_fast_step(problem, schedule, epsilon, step)?;
    let free = hermitian_eigen(&problem.hamiltonian(schedule.from));
    let run = integrate(interaction_generator(problem, schedule, epsilon, kind, &free), problem.dim(), t0, t1, step)?;
    Ok(finish(kind, run, t0, t1, Some(epsilon)))
}

/// `U_int(0, −∞)` approximated by starting at `t0 = truncation_time(tol·ε)`,
/// with a Cauchy check against a start `|t0|/2` earlier.
pub fn evolve_from_past(
    problem: &PerturbationProblem,
    schedule: &Schedule,
    epsilon: f64,
    kind: EvolutionKind,
    tol: f64,
) -> Result<PastEvolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let t0 = schedule.profile.truncation_time(tol * epsilon)?;
    let main = interaction_evolve(problem, schedule, epsilon, kind, t0, 0.0, None)?;
    let earlier = t0 - 0.5 * t0.abs();
    let tail = interaction_evolve(problem, schedule, epsilon, kind, earlier, t0, None)?;
    let n = problem.dim();
    let cauchy_difference = spectral_norm(&(&tail.unitary - CMatrix::identity(n, n)));
    let limit = 10.0 * tol;
    if cauchy_difference > limit {
        return Err(Error::NotConverged { difference: cauchy_difference, limit });
    }
    Ok(PastEvolution {
        kind,
        epsilon,
        unitary: main.unitary,
        t0,
        cauchy_difference,
        step: main.step,
        step_count: main.step_count,
        unitarity_defect: main.unitarity_defect,
        raw_defect: main.raw_defect.max(tail.raw_defect),
    })
}
