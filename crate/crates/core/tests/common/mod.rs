#![allow(dead_code)]

use std::path::Path;

use adiaswitch::io::load_problem;
use adiaswitch::linalg::{diag_matrix, CMatrix, CVector, C64};
use adiaswitch::operator::HermitianOperator;
use adiaswitch::PerturbationProblem;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn data(name: &str) -> PerturbationProblem {
    load_problem(&Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)).unwrap()
}

pub fn canonical() -> PerturbationProblem {
    data("canonical.json")
}

pub const CANONICAL_V: [f64; 16] = [
    1.0, 0.5, 0.3, -0.2, //
    0.5, -1.0, 0.25, 0.4, //
    0.3, 0.25, 0.5, 0.1, //
    -0.2, 0.4, 0.1, 0.5,
];

pub fn problem(h0: CMatrix, v: CMatrix) -> PerturbationProblem {
    PerturbationProblem::new(HermitianOperator::new(h0).unwrap(), HermitianOperator::new(v).unwrap()).unwrap()
}

pub fn zero_perturbation(levels: &[f64]) -> PerturbationProblem {
    let n = levels.len();
    problem(diag_matrix(levels), CMatrix::zeros(n, n))
}

pub fn commuting_toy() -> PerturbationProblem {
    data("commuting_toy.json")
}

pub fn basis_vector(n: usize, k: usize) -> CVector {
    let mut v = CVector::zeros(n);
    v[k] = C64::new(1.0, 0.0);
    v
}

/// Cyclic Jacobi rotations for a real symmetric matrix; eigenvalues ascending,
/// eigenvectors as columns.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut q = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[(i, j)].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for r in p + 1..n {
                if a[(p, r)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(r, r)] - a[(p, p)]) / (2.0 * a[(p, r)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akr) = (a[(k, p)], a[(k, r)]);
                    a[(k, p)] = c * akp - s * akr;
                    a[(k, r)] = s * akp + c * akr;
                }
                for k in 0..n {
                    let (apk, ark) = (a[(p, k)], a[(r, k)]);
                    a[(p, k)] = c * apk - s * ark;
                    a[(r, k)] = s * apk + c * ark;
                }
                for k in 0..n {
                    let (qkp, qkr) = (q[(k, p)], q[(k, r)]);
                    q[(k, p)] = c * qkp - s * qkr;
                    q[(k, r)] = s * qkp + c * qkr;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, k| q[(i, order[k])]);
    (values, vectors)
}

/// Eigenvalues of a Hermitian matrix through the real embedding
/// `[[A, −B], [B, A]]`, whose spectrum is that of `A + iB` doubled.
pub fn oracle_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let n = m.nrows();
    let big = DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = m[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let (values, _) = jacobi_eigen(&big);
    values.iter().step_by(2).copied().collect()
}

/// Eigenpairs of a real symmetric complex-typed matrix via Jacobi.
pub fn oracle_real_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let (values, q) = jacobi_eigen(&m.map(|z| z.re));
    (values, q.map(|x| C64::new(x, 0.0)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_hermitian(rng: &mut impl Rng, n: usize) -> CMatrix {
    let a = CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    (&a + a.adjoint()) * C64::new(0.5, 0.0)
}

pub fn random_unitary(rng: &mut impl Rng, n: usize) -> CMatrix {
    let a = CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    a.qr().q()
}

pub fn random_vector(rng: &mut impl Rng, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

/// A random problem with a degenerate lowest level of multiplicity ≥ 2, a
/// gap ≥ 1 above it, a perturbation of norm `coupling` and well separated
/// first-order shifts.
pub fn random_problem(seed: u64, max_dim: usize, coupling: f64) -> PerturbationProblem {
    let mut rng = rng(seed);
    let n = rng.random_range(3..=max_dim);
    let deg = rng.random_range(2..n);
    let e0 = rng.random_range(-1.0..1.0);
    let mut levels = vec![e0; deg];
    for _ in deg..n {
        levels.push(e0 + rng.random_range(1.0..3.0));
    }
    let q = random_unitary(&mut rng, n);
    let h0 = &q * diag_matrix(&levels) * q.adjoint();
    loop {
        let raw = random_hermitian(&mut rng, n);
        let v = &raw * C64::new(coupling / raw.norm(), 0.0);
        let p = problem(h0.clone(), v);
        let restricted = p.degenerate_frame().adjoint() * p.v().matrix() * p.degenerate_frame();
        let shifts = oracle_eigenvalues(&restricted);
        if shifts.windows(2).all(|w| w[1] - w[0] > 0.05 * coupling) {
            return p;
        }
    }
}

pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// `|⟨a, b⟩|` for unit vectors: 1 when they agree up to phase.
pub fn overlap(a: &CVector, b: &CVector) -> f64 {
    a.dotc(b).norm() / (a.norm() * b.norm())
}

/// Property-test settings without failure files (integration tests have no
/// `lib.rs` next to them to anchor one).
pub fn cases(n: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config { cases: n, failure_persistence: None, ..Default::default() }
}
