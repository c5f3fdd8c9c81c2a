//! Acceptance run: one PASS/FAIL line per criterion with the measured values.

mod common;

use std::time::Instant;

use adiaswitch::degeneracy::{build_initial_basis, expansion_check, second_order_lift};
use adiaswitch::gml::{geometric_eigenstate, gml_ratio, gml_sweep, multistep_gml, sweep_state};
use adiaswitch::linalg::{rank_one, simpson, spectral_norm, CMatrix, C64, I};
use adiaswitch::propagation::{adiabatic_evolve, full_evolve, kato_evolve, EvolutionKind, KATO_STEP};
use adiaswitch::switching::Schedule;
use adiaswitch::{Error, PerturbationProblem, SwitchingProfile};
use common::*;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn exp() -> SwitchingProfile {
    SwitchingProfile::exponential()
}

fn basis_correctness() -> Verdict {
    let p = canonical();
    let b = build_initial_basis(&p);
    let alpha = 1.25f64.sqrt();
    let shift_err = (b.first_shifts[0] + alpha).abs().max((b.first_shifts[1] - alpha).abs());
    let m = b.vectors.adjoint() * p.v().matrix() * &b.vectors;
    let off = m[(0, 1)].norm().max(m[(1, 0)].norm());
    verdict(shift_err <= 1e-10 && off <= 1e-10, format!("shift error {shift_err:.2e}, off-diagonal {off:.2e}"))
}

fn first_order_energies() -> Verdict {
    let p = canonical();
    let grid: Vec<f64> = (0..8).map(|k| 1e-3 * 50f64.powf(k as f64 / 7.0)).collect();
    match expansion_check(&p, &build_initial_basis(&p), &grid) {
        Ok(s) => {
            let slopes: Vec<f64> = s.first_slopes.iter().map(|x| x.unwrap_or(f64::NAN)).collect();
            let pass = slopes.iter().all(|&x| x >= 1.9);
            verdict(pass, format!("slopes {slopes:.3?}"))
        }
        Err(e) => verdict(false, e.to_string()),
    }
}

fn kato_intertwining() -> Verdict {
    let p = canonical();
    let s = Schedule::full(exp());
    let t0 = exp().truncation_time(1e-8).unwrap();
    let a = match kato_evolve(&p, &s, t0, 0.0, KATO_STEP) {
        Ok(a) => a.unitary,
        Err(e) => return verdict(false, e.to_string()),
    };
    let (start, end) = (p.frame(s.lambda(t0).unwrap().0).unwrap(), p.frame(1.0).unwrap());
    let defects: Vec<f64> = (0..2)
        .map(|j| spectral_norm(&(&a * start.projector(j) * a.adjoint() - end.projector(j))))
        .collect();
    verdict(defects.iter().all(|&d| d <= 1e-5), format!("defects {}", sci(&defects)))
}

fn geometric_state() -> Verdict {
    let p = canonical();
    let b = build_initial_basis(&p);
    let (_, q) = oracle_real_eigen(&p.hamiltonian(1.0));
    let mut pass = true;
    let mut parts = Vec::new();
    for j in 0..2 {
        match geometric_eigenstate(&p, &exp(), &b, j) {
            Ok(g) => {
                let ov = overlap(&g.state, &q.column(j).into_owned());
                pass &= ov >= 1.0 - 1e-8 && g.eigen_residual <= 1e-5;
                parts.push(format!("level {j}: 1-overlap {:.1e}, residual {:.1e}", 1.0 - ov, g.eigen_residual));
            }
            Err(e) => {
                pass = false;
                parts.push(e.to_string());
            }
        }
    }
    verdict(pass, parts.join("; "))
}

/// Criteria 5 and 6 share one sweep over the ground branch.
fn gml_convergence_and_scaling() -> (Verdict, Verdict, f64) {
    let start = Instant::now();
    let p = canonical();
    let b = build_initial_basis(&p);
    let eps = [0.4, 0.2, 0.1, 0.05, 0.025];
    let sweep = match gml_sweep(&p, &exp(), &b, 0, &eps, true) {
        Ok(s) => s,
        Err(e) => return (verdict(false, e.to_string()), verdict(false, e.to_string()), 0.0),
    };
    let secs = start.elapsed().as_secs_f64();
    let deltas: Vec<f64> = sweep.cauchy_deltas.iter().map(|d| d.unwrap_or(f64::NAN)).collect();
    let decreasing = deltas.windows(2).all(|w| w[1] < w[0]);
    let geometric = geometric_eigenstate(&p, &exp(), &b, 0).unwrap();
    let conv = match sweep.outcomes.last().unwrap() {
        Ok(o) => {
            let ov = overlap(&o.state, &geometric.state);
            verdict(
                decreasing && o.eigen_residual <= 1e-2 && ov >= 0.999,
                format!("deltas {}, residual {:.2e}, overlap {ov:.7}", sci(&deltas), o.eigen_residual),
            )
        }
        Err(e) => verdict(false, e.to_string()),
    };
    let slope = sweep.fitted_slope.unwrap_or(f64::NAN);
    let errors: Vec<f64> = sweep.adiabatic_errors.unwrap().iter().map(|x| x.unwrap_or(f64::NAN)).collect();
    let scaling = verdict(slope >= 0.33, format!("slope {slope:.3}, errors {}", sci(&errors)));
    (conv, scaling, secs)
}

fn divergence_witness() -> Verdict {
    let p = commuting_toy();
    let eps = [0.1, 0.05, 0.025, 0.0125];
    let e1 = basis_vector(2, 0);
    let mixed = (&e1 + basis_vector(2, 1)).normalize();
    let (generic, eigen) = match (
        sweep_state(&p, &exp(), &mixed, &mixed, &eps, false),
        sweep_state(&p, &exp(), &e1, &e1, &eps, false),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return verdict(false, "sweep failed".into()),
    };
    let deltas: Vec<f64> = generic.cauchy_deltas.iter().map(|d| d.unwrap_or(f64::NAN)).collect();
    let eigen_deltas: Vec<f64> = eigen.cauchy_deltas.iter().map(|d| d.unwrap_or(f64::NAN)).collect();
    verdict(
        generic.no_limit(0.1) && eigen.converging(),
        format!("superposition deltas {deltas:.3?}, eigenvector deltas {}", sci(&eigen_deltas)),
    )
}

fn second_order_lift_fit() -> Verdict {
    let p = data("degenerate_lift.json");
    let b = build_initial_basis(&p);
    let lifted = match second_order_lift(&p, &b) {
        Ok(l) => l,
        Err(e) => return verdict(false, e.to_string()),
    };
    let second = lifted.second_shifts.unwrap();
    let alpha = b.first_shifts[0];
    let lambdas = [1e-3, 2e-3, 4e-3];
    let mut worst: f64 = 0.0;
    let mut fits = Vec::new();
    for j in 0..2 {
        // least squares for E − λα = c2 λ² + c3 λ³
        let (mut s22, mut s23, mut s33, mut r2, mut r3) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &l in &lambdas {
            let e = oracle_eigenvalues(&p.hamiltonian(l))[j] - l * alpha;
            let (a, c) = (l * l, l * l * l);
            s22 += a * a;
            s23 += a * c;
            s33 += c * c;
            r2 += a * e;
            r3 += c * e;
        }
        let c2 = (r2 * s33 - r3 * s23) / (s22 * s33 - s23 * s23);
        worst = worst.max((c2 - second[j]).abs() / second[j].abs());
        fits.push(c2);
    }
    verdict(worst <= 0.05, format!("lift {second:.5?}, fit {fits:.5?}, worst relative {worst:.1e}"))
}

fn multistep_rescue() -> Verdict {
    let p = data("large_rotation.json");
    let b = build_initial_basis(&p);
    let bump = SwitchingProfile::bump(-30.0).unwrap();
    let single = match gml_ratio(&p, &bump, &b, 0, 0.05, EvolutionKind::Full) {
        Err(Error::VanishingDenominator { magnitude }) => (true, format!("vanishing denominator {magnitude:.1e}")),
        Ok(o) => (o.denominator.norm() < 1e-3, format!("|denominator| {:.2e}", o.denominator.norm())),
        Err(e) => (false, e.to_string()),
    };
    let multi = match multistep_gml(&p, &bump, &b, 0, &[0.0, 0.5, 1.0], 0.05, EvolutionKind::Full) {
        Ok(m) => {
            let d: Vec<f64> = m.stages.iter().map(|s| s.displacement).collect();
            (m.outcome.eigen_residual <= 1e-2, format!("multistep residual {:.2e}, displacements {d:.3?}", m.outcome.eigen_residual))
        }
        Err(e) => (false, e.to_string()),
    };
    verdict(single.0 && multi.0, format!("single stage {}; {}", single.1, multi.1))
}

/// Worst violation of each structural property over one random problem.
#[derive(Default)]
struct Structural {
    unitarity: f64,
    intertwining: f64,
    phase: f64,
    resolvent: f64,
    invariance: f64,
}

fn structural(p: &PerturbationProblem, seed: u64) -> Structural {
    let mut out = Structural::default();
    let s = Schedule::full(exp());
    let n = p.dim();
    let b = build_initial_basis(p);

    let t0 = exp().truncation_time(1e-8).unwrap();
    let a = kato_evolve(p, &s, t0, 0.0, KATO_STEP).unwrap();
    let u = full_evolve(p, &s, 0.2, -2.0, 0.0, None).unwrap();
    out.unitarity = a.unitarity_defect.max(u.unitarity_defect);
    let end = p.frame(1.0).unwrap();
    for j in 0..b.len() {
        let moved = &a.unitary * rank_one(&b.vector(j)) * a.unitary.adjoint();
        out.intertwining = out.intertwining.max(spectral_norm(&(moved - end.projector(j))));
    }

    // U_A P_j(t0) = exp(−i∫E_j/ε) A P_j(t0)
    let (ta, eps) = (-3.0, 0.2);
    let ua = adiabatic_evolve(p, &s, eps, ta, 0.0, None).unwrap();
    let ak = kato_evolve(p, &s, ta, 0.0, ua.step).unwrap();
    let ts: Vec<f64> = (0..=1500).map(|k| ta - ta * k as f64 / 1500.0).collect();
    let frames: Vec<_> = ts.iter().map(|&t| p.frame(s.lambda(t).unwrap().0).unwrap()).collect();
    for j in 0..b.len() {
        let energies: Vec<f64> = frames.iter().map(|f| f.tracked_values()[j]).collect();
        let phase = (-I * (simpson(&ts, &energies) / eps)).exp();
        let pj = frames[0].projector(j);
        let d = spectral_norm(&(&ua.unitary * &pj - &ak.unitary * &pj * phase));
        out.phase = out.phase.max(d);
    }

    let mut r = rng(seed ^ 0xa5a5);
    let w = random_vector(&mut r, n);
    let shifted = p.h0().matrix() - CMatrix::identity(n, n) * C64::new(p.ground_energy(), 0.0);
    out.resolvent = (shifted * p.reduced_resolvent_apply(&w) - (&w - p.p0() * &w)).norm();

    for _ in 0..3 {
        let q = random_unitary(&mut r, n);
        let moved = problem(&q * p.h0().matrix() * q.adjoint(), &q * p.v().matrix() * q.adjoint());
        let c = build_initial_basis(&moved);
        for j in 0..b.len() {
            out.invariance = out.invariance.max((c.first_shifts[j] - b.first_shifts[j]).abs());
        }
    }
    out
}

fn structural_suite() -> Verdict {
    let mut worst = Structural::default();
    for k in 0..50u64 {
        let seed = 1000 + k;
        let r = structural(&random_problem(seed, 8, 0.3), seed);
        worst.unitarity = worst.unitarity.max(r.unitarity);
        worst.intertwining = worst.intertwining.max(r.intertwining);
        worst.phase = worst.phase.max(r.phase);
        worst.resolvent = worst.resolvent.max(r.resolvent);
        worst.invariance = worst.invariance.max(r.invariance);
    }
    let pass = worst.unitarity <= 1e-8
        && worst.intertwining <= 1e-5
        && worst.phase <= 1e-5
        && worst.resolvent <= 1e-9
        && worst.invariance <= 1e-10;
    verdict(
        pass,
        format!(
            "50 problems; unitarity {:.1e}, intertwining {:.1e}, phase {:.1e}, resolvent {:.1e}, invariance {:.1e}",
            worst.unitarity, worst.intertwining, worst.phase, worst.resolvent, worst.invariance
        ),
    )
}

fn timed(f: impl FnOnce() -> Verdict) -> (Verdict, f64) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64())
}

fn main() {
    let mut rows: Vec<(usize, &str, Verdict, f64, f64)> = Vec::new();
    let (v, t) = timed(basis_correctness);
    rows.push((1, "basis correctness", v, t, 1.0));
    let (v, t) = timed(first_order_energies);
    rows.push((2, "first-order energies", v, t, 5.0));
    let (v, t) = timed(kato_intertwining);
    rows.push((3, "Kato intertwining", v, t, 30.0));
    let (v, t) = timed(geometric_state);
    rows.push((4, "geometric eigenstate", v, t, f64::INFINITY));
    let (conv, scaling, t) = gml_convergence_and_scaling();
    rows.push((5, "ratio convergence", conv, t, 300.0));
    rows.push((6, "adiabatic-limit scaling", scaling, t, 600.0));
    let (v, t) = timed(divergence_witness);
    rows.push((7, "divergence witness", v, t, 60.0));
    let (v, t) = timed(second_order_lift_fit);
    rows.push((8, "second-order lift", v, t, 10.0));
    let (v, t) = timed(multistep_rescue);
    rows.push((9, "multistep rescue", v, t, 300.0));
    let (v, t) = timed(structural_suite);
    rows.push((10, "structural suite", v, t, 600.0));

    let mut failures = 0;
    for (id, name, v, secs, limit) in &rows {
        let pass = v.pass && secs < limit;
        failures += usize::from(!pass);
        println!("{} criterion {id:>2} {name}: {} ({secs:.2} s)", if pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {} of {} criteria pass", rows.len() - failures, rows.len());
    if failures > 0 {
        std::process::exit(1);
    }
}

fn sci(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}
