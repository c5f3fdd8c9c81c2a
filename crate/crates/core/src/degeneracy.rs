//! Degenerate perturbation theory on the unperturbed eigenspace: the initial
//! basis diagonalizing the restricted perturbation, the second-order lift for
//! residual degeneracy, first-order vectors and a series self-check.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{cluster_sorted, gauge_largest_real, hermitian_eigen, log_log_slope, CMatrix, CVector, C64};
use crate::operator::{spectral_frame, PerturbationProblem, SpectralFrame, DEFAULT_CLUSTER_TOL};

/// Relative tolerance for grouping coincident first (and second) shifts.
pub const SHIFT_GROUP_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct InitialBasis {
    /// Orthonormal vectors of the degenerate eigenspace, one per column.
    pub vectors: CMatrix,
    pub first_shifts: Vec<f64>,
    /// Runs of coincident first shifts (indices into the basis).
    pub residual_groups: Vec<Range<usize>>,
    /// Present once the second-order lift has run.
    pub second_shifts: Option<Vec<f64>>,
    /// Groups the second-order lift could not split.
    pub unresolved: Vec<Range<usize>>,
    /// `c1[j][k]`, `None` where the hierarchy leaves it undetermined.
    cross: Vec<Vec<Option<C64>>>,
}

impl InitialBasis {
    pub fn len(&self) -> usize {
        self.first_shifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_shifts.is_empty()
    }

    pub fn vector(&self, j: usize) -> CVector {
        self.vectors.column(j).into_owned()
    }

    /// Coefficient of `φ_{k,0}` in the first-order vector of level `j`.
    pub fn cross(&self, j: usize, k: usize) -> Option<C64> {
        self.cross[j][k]
    }

    /// True when some group of coincident first shifts has not been lifted yet.
    pub fn needs_lift(&self) -> bool {
        self.second_shifts.is_none() && self.residual_groups.iter().any(|g| g.len() > 1)
    }

    pub fn group_of(&self, j: usize) -> Range<usize> {
        self.residual_groups
            .iter()
            .find(|g| g.contains(&j))
            .cloned()
            .expect("index inside the basis")
    }
}

/// `⟨φ_k, M φ_j⟩` for all basis columns.
fn matrix_elements(vectors: &CMatrix, m: &CMatrix) -> CMatrix {
    vectors.adjoint() * m * vectors
}

/// Deterministic tie-break for degenerate shifts: lexicographic by the
/// magnitude of the components (largest first).
fn natural_order(a: &CVector, b: &CVector) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        let d = y.norm() - x.norm();
        if d.abs() > 1e-12 {
            return d.partial_cmp(&0.0).unwrap_or(Ordering::Equal);
        }
    }
    Ordering::Equal
}

/// Eigenvectors of the perturbation restricted to the degenerate eigenspace,
/// sorted by ascending first shift.
pub fn build_initial_basis(problem: &PerturbationProblem) -> InitialBasis {
    let frame = problem.degenerate_frame();
    let block = matrix_elements(&frame, problem.v().matrix());
    let eig = hermitian_eigen(&block);
    let n = eig.dim();
    let mut columns: Vec<(f64, CVector)> = (0..n)
        .map(|k| {
            let mut v = &frame * eig.vectors.column(k);
            gauge_largest_real(&mut v);
            (eig.values[k], v)
        })
        .collect();
    let tol = SHIFT_GROUP_TOL * eig.scale();
    columns.sort_by(|a, b| {
        if (a.0 - b.0).abs() < tol {
            natural_order(&a.1, &b.1)
        } else {
            a.0.total_cmp(&b.0)
        }
    });
    let first_shifts: Vec<f64> = columns.iter().map(|c| c.0).collect();
    let vectors = CMatrix::from_columns(&columns.iter().map(|c| c.1.clone()).collect::<Vec<_>>());
    let residual_groups = cluster_sorted(&first_shifts, tol);
    let mut basis = InitialBasis {
        vectors,
        first_shifts,
        residual_groups,
        second_shifts: None,
        unresolved: Vec::new(),
        cross: vec![vec![None; n]; n],
    };
    fill_cross_coefficients(problem, &mut basis);
    basis
}

/// `V R0 V`.
fn second_order_operator(problem: &PerturbationProblem) -> CMatrix {
    let v = problem.v().matrix();
    v * problem.reduced_resolvent() * v
}

/// Cross coefficients between distinct groups, and inside groups split by
/// the second-order lift.
fn fill_cross_coefficients(problem: &PerturbationProblem, basis: &mut InitialBasis) {
    let n = basis.len();
    let v = problem.v().matrix();
    let r = problem.reduced_resolvent();
    let g = matrix_elements(&basis.vectors, &(v * r * v));
    let alpha = &basis.first_shifts;
    let mut cross = vec![vec![None; n]; n];
    for j in 0..n {
        cross[j][j] = Some(C64::new(0.0, 0.0));
        let gj = basis.group_of(j);
        for k in 0..n {
            if k != j && !gj.contains(&k) {
                cross[j][k] = Some(-g[(k, j)] / (alpha[j] - alpha[k]));
            }
        }
    }
    if let Some(e2) = &basis.second_shifts {
        // Third-order solvability inside a lifted group:
        // c1[j][k] (E2_j − E2_k) = W_kj − α T_kj − Σ_{l outside} c1[j][l] G_kl
        let t = matrix_elements(&basis.vectors, &(v * r * r * v));
        let w = matrix_elements(&basis.vectors, &(v * r * v * r * v));
        for group in &basis.residual_groups {
            if basis.unresolved.contains(group) {
                continue;
            }
            for j in group.clone() {
                for k in group.clone() {
                    if k == j {
                        continue;
                    }
                    let mut rhs = w[(k, j)] - t[(k, j)] * alpha[j];
                    for l in (0..n).filter(|l| !group.contains(l)) {
                        rhs -= cross[j][l].expect("outside-group coefficient") * g[(k, l)];
                    }
                    cross[j][k] = Some(rhs / (e2[j] - e2[k]));
                }
            }
        }
    }
    basis.cross = cross;
}

/// Split groups of coincident first shifts with the second-order operator
/// `⟨φ_k, V R0 V φ_j⟩`; its negated eigenvalues are the second shifts.
pub fn second_order_lift(problem: &PerturbationProblem, basis: &InitialBasis) -> Result<InitialBasis> {
    if !basis.residual_groups.iter().any(|g| g.len() > 1) {
        return Err(Error::NoDegenerateGroup);
    }
    let vrv = second_order_operator(problem);
    let n = basis.len();
    let mut vectors = basis.vectors.clone();
    let mut second = vec![0.0; n];
    let mut unresolved = Vec::new();
    let full = matrix_elements(&basis.vectors, &vrv);
    let scale = hermitian_eigen(&full).scale();
    for group in &basis.residual_groups {
        let sub = basis.vectors.columns(group.start, group.len()).into_owned();
        let block = matrix_elements(&sub, &vrv);
        let eig = hermitian_eigen(&block);
        let mut cols: Vec<(f64, CVector)> = (0..group.len())
            .map(|k| {
                let mut v = &sub * eig.vectors.column(k);
                gauge_largest_real(&mut v);
                (-eig.values[k], v)
            })
            .collect();
        let tol = SHIFT_GROUP_TOL * scale;
        cols.sort_by(|a, b| {
            if (a.0 - b.0).abs() < tol {
                natural_order(&a.1, &b.1)
            } else {
                a.0.total_cmp(&b.0)
            }
        });
        let shifts: Vec<f64> = cols.iter().map(|c| c.0).collect();
        if group.len() > 1 && cluster_sorted(&shifts, tol).len() < group.len() {
            unresolved.push(group.clone());
        }
        for (i, (e2, v)) in cols.into_iter().enumerate() {
            second[group.start + i] = e2;
            vectors.set_column(group.start + i, &v);
        }
    }
    let mut lifted = InitialBasis {
        vectors,
        first_shifts: basis.first_shifts.clone(),
        residual_groups: basis.residual_groups.clone(),
        second_shifts: Some(second),
        unresolved,
        cross: vec![vec![None; n]; n],
    };
    fill_cross_coefficients(problem, &mut lifted);
    Ok(lifted)
}

/// Build the basis and lift it when the first shifts are degenerate.
pub fn resolved_basis(problem: &PerturbationProblem) -> Result<InitialBasis> {
    let basis = build_initial_basis(problem);
    if basis.needs_lift() {
        second_order_lift(problem, &basis)
    } else {
        Ok(basis)
    }
}

/// `φ_{j,1} = Σ_{k≠j} c1[j][k] φ_{k,0} − R0 V φ_{j,0}`.
pub fn first_order_vector(problem: &PerturbationProblem, basis: &InitialBasis, j: usize) -> Result<CVector> {
    if j >= basis.len() {
        return Err(Error::InvalidArgument(format!("level {j} outside the basis of size {}", basis.len())));
    }
    let phi = basis.vector(j);
    let mut out = -problem.reduced_resolvent_apply(&(problem.v().matrix() * &phi));
    for k in (0..basis.len()).filter(|&k| k != j) {
        let c = basis.cross(j, k).ok_or(Error::UndefinedCrossCoefficients { j, k })?;
        out += basis.vector(k) * c;
    }
    Ok(out)
}

/// Low-order series check of the tracked levels on a small-coupling grid.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SeriesReport {
    pub lambdas: Vec<f64>,
    /// `energies[i][j]`: level `j` at `lambdas[i]`, labelled like the basis.
    pub energies: Vec<Vec<f64>>,
    /// `|E_j(λ) − E0 − λ E_{j,1}|`.
    pub first_residuals: Vec<Vec<f64>>,
    /// `|E_j(λ) − E0 − λ E_{j,1} − λ² E_{j,2}|`, when second shifts exist.
    pub second_residuals: Option<Vec<Vec<f64>>>,
    pub first_slopes: Vec<Option<f64>>,
    pub second_slopes: Option<Vec<Option<f64>>>,
    /// `max_j ‖(I − P_j(λ)) φ̂_j(λ)‖` with `φ̂_j` the normalized first-order vector.
    pub projector_errors: Vec<f64>,
    pub projector_slope: Option<f64>,
    /// Whether `φ̂_j` includes the first-order correction.
    pub projector_first_order: bool,
}

impl SeriesReport {
    /// CSV with columns `lambda, E_1..E_N, residual_1..residual_N` (the
    /// highest-order residual available).
    pub fn to_csv(&self) -> String {
        let n = self.energies.first().map_or(0, Vec::len);
        let mut out = String::from("lambda");
        for j in 1..=n {
            let _ = write!(out, ",energy_{j}");
        }
        for j in 1..=n {
            let _ = write!(out, ",residual_{j}");
        }
        out.push('\n');
        let residuals = self.second_residuals.as_ref().unwrap_or(&self.first_residuals);
        for (i, lambda) in self.lambdas.iter().enumerate() {
            let _ = write!(out, "{lambda:.16e}");
            for e in &self.energies[i] {
                let _ = write!(out, ",{e:.16e}");
            }
            for r in &residuals[i] {
                let _ = write!(out, ",{r:.16e}");
            }
            out.push('\n');
        }
        out
    }
}

/// Assign basis vectors to tracked clusters of the frame by projector overlap.
/// Returns, for each basis index, the absolute eigen-index it is matched to.
pub(crate) fn match_levels(frame: &SpectralFrame, basis: &InitialBasis) -> Result<Vec<usize>> {
    let projectors: Vec<CMatrix> = frame.groups.iter().map(|g| frame.eigen.projector(g.clone())).collect();
    let mut used = vec![0usize; frame.groups.len()];
    let mut out = Vec::with_capacity(basis.len());
    for j in 0..basis.len() {
        let phi = basis.vector(j);
        let (best, weight) = projectors
            .iter()
            .enumerate()
            .map(|(g, p)| (g, phi.dotc(&(p * &phi)).re))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        if weight <= 0.5 || used[best] >= frame.groups[best].len() {
            return Err(Error::TrackingFailure { lambda: frame.lambda });
        }
        out.push(frame.groups[best].start + used[best]);
        used[best] += 1;
    }
    Ok(out)
}

/// Compare the tracked eigenvalues and projectors of `H(λ)` on a small-coupling
/// grid against the first- and (if lifted) second-order expansions.
pub fn expansion_check(problem: &PerturbationProblem, basis: &InitialBasis, grid: &[f64]) -> Result<SeriesReport> {
    if grid.len() < 5 {
        return Err(Error::InvalidArgument("series check needs at least five couplings".into()));
    }
    if grid.iter().any(|&l| !(l > 0.0 && l <= 0.1)) {
        return Err(Error::InvalidArgument("series check couplings must lie in (0, 0.1]".into()));
    }
    let n = basis.len();
    let e0 = problem.ground_energy();
    let corrections: Option<Vec<CVector>> = (0..n).map(|j| first_order_vector(problem, basis, j).ok()).collect();
    let mut energies = Vec::with_capacity(grid.len());
    let mut first = Vec::with_capacity(grid.len());
    let mut second = Vec::with_capacity(grid.len());
    let mut projector_errors = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let frame = spectral_frame(problem, lambda, DEFAULT_CLUSTER_TOL)?;
        let labels = match_levels(&frame, basis)?;
        let e: Vec<f64> = labels.iter().map(|&k| frame.eigen.values[k]).collect();
        first.push((0..n).map(|j| (e[j] - e0 - lambda * basis.first_shifts[j]).abs()).collect::<Vec<_>>());
        if let Some(e2) = &basis.second_shifts {
            second.push(
                (0..n)
                    .map(|j| (e[j] - e0 - lambda * basis.first_shifts[j] - lambda * lambda * e2[j]).abs())
                    .collect::<Vec<_>>(),
            );
        }
        let mut worst: f64 = 0.0;
        for (j, &k) in labels.iter().enumerate() {
            let mut approx = basis.vector(j);
            if let Some(c) = &corrections {
                approx += c[j].scale(lambda);
            }
            let approx = approx.normalize();
            let group = frame.groups.iter().find(|g| g.contains(&k)).expect("matched group").clone();
            let p = frame.eigen.projector(group);
            worst = worst.max((&approx - &p * &approx).norm());
        }
        projector_errors.push(worst);
        energies.push(e);
    }
    let column = |rows: &[Vec<f64>], j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let first_slopes = (0..n).map(|j| log_log_slope(grid, &column(&first, j))).collect();
    let (second_residuals, second_slopes) = if basis.second_shifts.is_some() {
        let slopes = (0..n).map(|j| log_log_slope(grid, &column(&second, j))).collect();
        (Some(second), Some(slopes))
    } else {
        (None, None)
    };
    Ok(SeriesReport {
        lambdas: grid.to_vec(),
        energies,
        first_residuals: first,
        second_residuals,
        first_slopes,
        second_slopes,
        projector_slope: log_log_slope(grid, &projector_errors),
        projector_errors,
        projector_first_order: corrections.is_some(),
    })
}
