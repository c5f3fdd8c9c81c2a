mod common;

use adiaswitch::degeneracy::build_initial_basis;
use adiaswitch::gml::{
    check_ratio_condition, gap_diagnostics, geometric_eigenstate, gml_ratio, gml_ratio_state, gml_sweep,
    multistep_gml, permanent_degeneracy_ratio, sweep_state,
};
use adiaswitch::linalg::{align_phase, real_matrix, CMatrix, CVector, C64, I};
use adiaswitch::propagation::{kato_evolve, EvolutionKind, KATO_STEP};
use adiaswitch::switching::Schedule;
use adiaswitch::SwitchingProfile;
use common::*;

const FULL: EvolutionKind = EvolutionKind::Full;
const ADIABATIC: EvolutionKind = EvolutionKind::Adiabatic;

fn exp() -> SwitchingProfile {
    SwitchingProfile::exponential()
}

fn distance_up_to_phase(a: &CVector, b: &CVector) -> f64 {
    let (a, b) = (a.normalize(), b.normalize());
    (align_phase(&a, &b) - b).norm()
}

#[test]
fn zero_perturbation_keeps_the_initial_state() {
    let p = zero_perturbation(&[0.0, 0.0, 1.0]);
    let b = build_initial_basis(&p);
    for j in 0..2 {
        let o = gml_ratio(&p, &exp(), &b, j, 0.1, FULL).unwrap();
        assert!((o.state.clone() - b.vector(j)).norm() < 1e-14);
        assert!(o.condition_norm.unwrap() < 1e-12);
        let g = geometric_eigenstate(&p, &exp(), &b, j).unwrap();
        assert!((g.state - b.vector(j)).norm() < 1e-14);
        assert!(g.energy.abs() < 1e-14);
    }
    // any reference with nonzero overlap only rescales
    let psi = b.vector(0);
    let reference = (b.vector(0) + b.vector(1)).normalize();
    let o = permanent_degeneracy_ratio(&p, &exp(), &psi, &reference, 0.1, FULL).unwrap();
    assert!(o.eigen_residual < 1e-14);
    let sweep = gml_sweep(&p, &exp(), &b, 0, &[0.4, 0.2, 0.1, 0.05], false).unwrap();
    assert!(sweep.cauchy_deltas.iter().all(|d| d.unwrap() < 1e-12));
}

#[test]
fn commuting_toy_closed_form() {
    let p = commuting_toy();
    let e1 = basis_vector(2, 0);
    let e2 = basis_vector(2, 1);
    let psi = (&e1 + &e2).normalize();
    for eps in [0.1, 0.05, 0.025] {
        let o = gml_ratio_state(&p, &exp(), &psi, eps, FULL).unwrap();
        // ∫ f over the integration window
        let area = 1.0 - o.t0.exp();
        let phase = (I * (area / eps)).exp();
        let expected = (e1.clone() * phase.conj() + e2.clone() * phase) / C64::new(2f64.sqrt() * (area / eps).cos(), 0.0);
        assert!((o.state.clone() - expected).norm() < 1e-6 * o.state.norm());
        let eigen = gml_ratio_state(&p, &exp(), &e1, eps, FULL).unwrap();
        assert!((eigen.state - &e1).norm() < 1e-10);
    }
    let b = build_initial_basis(&p);
    let g = geometric_eigenstate(&p, &exp(), &b, 1).unwrap();
    assert!((g.state - b.vector(1)).norm() < 1e-14);
    assert!((g.energy - 1.0).abs() < 1e-14);
    assert_eq!(check_ratio_condition(&p, &b, 0).unwrap().norm, 0.0);
}

#[test]
fn divergence_and_convergence_on_the_toy() {
    let p = commuting_toy();
    let eps = [0.1, 0.05, 0.025, 0.0125];
    let e1 = basis_vector(2, 0);
    let mixed = (&e1 + basis_vector(2, 1)).normalize();
    let generic = sweep_state(&p, &exp(), &mixed, &mixed, &eps, false).unwrap();
    assert!(generic.no_limit(0.1));
    assert!(!generic.converging());
    let eigen = sweep_state(&p, &exp(), &e1, &e1, &eps, false).unwrap();
    assert!(eigen.converging());
}

#[test]
fn rotation_angle_sets_the_condition_norm() {
    for theta in [0.3f64, 0.9, 1.3] {
        let (c, s) = (theta.cos(), theta.sin());
        // H0 + V has its ground state rotated by θ away from e1
        let target = real_matrix(2, &[s * s, -c * s, -c * s, c * c]);
        let h0 = real_matrix(2, &[0.0, 0.0, 0.0, 1.0]);
        let p = problem(h0.clone(), target - h0);
        let b = build_initial_basis(&p);
        let r = check_ratio_condition(&p, &b, 0).unwrap();
        assert!((r.norm - s).abs() < 1e-12);
        assert!(r.ok);
    }
}

#[test]
fn ratio_outputs_are_scale_invariant() {
    let p = canonical();
    let b = build_initial_basis(&p);
    let psi = b.vector(0);
    let base = gml_ratio_state(&p, &exp(), &psi, 0.2, FULL).unwrap();
    for c in [C64::new(3.0, 0.0), C64::new(0.0, -0.5), C64::new(1e-3, 2e-3)] {
        let o = gml_ratio_state(&p, &exp(), &(psi.clone() * c), 0.2, FULL).unwrap();
        assert!((o.eigen_residual - base.eigen_residual).abs() < 1e-10);
        assert!((o.rayleigh_energy - base.rayleigh_energy).abs() < 1e-10);
    }
}

#[test]
fn adiabatic_ratio_is_the_geometric_state() {
    let p = canonical();
    let b = build_initial_basis(&p);
    let g = geometric_eigenstate(&p, &exp(), &b, 0).unwrap();
    let mut gaps = Vec::new();
    for eps in [0.2, 0.1, 0.05] {
        let adiabatic = gml_ratio(&p, &exp(), &b, 0, eps, ADIABATIC).unwrap();
        assert!(distance_up_to_phase(&adiabatic.state, &g.state) < 1e-5);
        let full = gml_ratio(&p, &exp(), &b, 0, eps, FULL).unwrap();
        gaps.push(distance_up_to_phase(&full.state, &adiabatic.state));
    }
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn transported_vector_projects_like_the_eigenprojector() {
    let p = canonical();
    let b = build_initial_basis(&p);
    let s = Schedule::full(exp());
    let t0 = exp().truncation_time(1e-10).unwrap();
    let a = kato_evolve(&p, &s, t0, 0.0, KATO_STEP).unwrap().unitary;
    let end = p.frame(1.0).unwrap();
    for j in 0..2 {
        let psi = b.vector(j);
        let moved = &a * &psi;
        let lhs = &moved * psi.dotc(&(a.adjoint() * &psi));
        let rhs = end.projector(j) * &psi;
        assert!((lhs - rhs).norm() < 1e-5);
    }
}

#[test]
fn residual_shrinks_along_the_sweep() {
    let p = canonical();
    let b = build_initial_basis(&p);
    let sweep = gml_sweep(&p, &exp(), &b, 0, &[0.4, 0.2, 0.1, 0.05], false).unwrap();
    let residuals: Vec<f64> = sweep.outcomes.iter().map(|o| o.as_ref().unwrap().eigen_residual).collect();
    assert!(residuals.windows(2).all(|w| w[1] <= 1.1 * w[0]), "{residuals:?}");
    assert!(sweep.converging());
}

#[test]
fn multistep_reduces_to_single_stage() {
    let p = canonical();
    let b = build_initial_basis(&p);
    let single = gml_ratio(&p, &exp(), &b, 0, 0.1, FULL).unwrap();
    let one = multistep_gml(&p, &exp(), &b, 0, &[0.0, 1.0], 0.1, FULL).unwrap();
    assert!((one.outcome.state.clone() - &single.state).norm() < 1e-10);
    let two = multistep_gml(&p, &exp(), &b, 0, &[0.0, 0.5, 1.0], 0.1, FULL).unwrap();
    assert_eq!(two.stages.len(), 2);
    assert!(two.outcome.eigen_residual <= 2.0 * single.eigen_residual);
    // the dense eigenvector of H0 + V is the target of both
    let (_, q) = oracle_real_eigen(&p.hamiltonian(1.0));
    let target = q.column(0).into_owned();
    assert!(overlap(&two.outcome.state, &target) > 0.999);
}

#[test]
fn permanently_degenerate_block() {
    let p = data("permanent_degeneracy.json");
    let psi = (basis_vector(4, 0) + basis_vector(4, 2) * I).normalize();
    let reference = basis_vector(4, 0);
    let bump = SwitchingProfile::bump(-10.0).unwrap();
    let o = permanent_degeneracy_ratio(&p, &bump, &psi, &reference, 0.05, FULL).unwrap();
    let (_, q) = oracle_real_eigen(&p.hamiltonian(1.0));
    let block = q.columns(0, 2);
    let projector: CMatrix = &block * block.adjoint();
    let outside = (&o.state - &projector * &o.state).norm() / o.state.norm();
    assert!(outside <= 1e-4, "{outside}");
    assert!(o.eigen_residual <= 1e-4);
    assert!((reference.dotc(&o.state) - C64::new(1.0, 0.0)).norm() < 1e-12);
    // with the state itself as reference the ordinary ratio comes back
    let same = permanent_degeneracy_ratio(&p, &bump, &psi, &psi, 0.05, FULL).unwrap();
    let plain = gml_ratio_state(&p, &bump, &psi, 0.05, FULL).unwrap();
    assert!((same.state - plain.state).norm() < 1e-14);
}

#[test]
fn gap_ratio_follows_first_order_splitting() {
    let p = canonical();
    let grid: Vec<f64> = (0..=200).map(|k| -12.0 + 0.06 * k as f64).collect();
    let table = gap_diagnostics(&p, &exp(), &grid).unwrap();
    let spread = 2.0 * 1.25f64.sqrt();
    for row in table.rows.iter().filter(|r| r.f <= 0.05) {
        for &r in &row.ratios {
            assert!(r >= 0.9 * spread && r <= 1.1 * spread, "ratio {r} at f = {}", row.f);
        }
    }
    let last = table.rows.last().unwrap();
    assert_eq!(last.t, 0.0);
    assert!((last.global_gap - p.frame(1.0).unwrap().global_gap).abs() < 1e-14);
    assert!(table.splitting);
}
