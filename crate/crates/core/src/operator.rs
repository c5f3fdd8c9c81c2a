//! Hermitian operators, the perturbation problem `H(λ) = H0 + λV`, spectral
//! frames along the coupling and the structural checks on them.

use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    cluster_sorted, hermitian_eigen, is_projector, max_abs, spectral_norm, CMatrix, CVector, Eigensystem, C64,
};
use crate::switching::{certify_profile, ProfileReport, SwitchingProfile};

/// Relative spacing below which eigenvalues are treated as one level.
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-10;

const ASYMMETRY_LIMIT: f64 = 1e-8;
const PROJECTOR_TOL: f64 = 1e-8;

/// A validated, exactly symmetrized Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
    asymmetry: f64,
}

/// Symmetrize `raw` into `(M + M†)/2`, rejecting matrices whose asymmetry
/// exceeds `1e-8` relative to the largest entry.
pub fn validate_hermitian(raw: &CMatrix) -> Result<HermitianOperator> {
    if raw.nrows() != raw.ncols() || raw.nrows() == 0 {
        return Err(Error::NonSquare { rows: raw.nrows(), cols: raw.ncols() });
    }
    if raw.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidProblem("matrix has non-finite entries".into()));
    }
    let scale = max_abs(raw);
    let diff = max_abs(&(raw - raw.adjoint()));
    let asymmetry = if scale > 0.0 { diff / scale } else { 0.0 };
    if asymmetry > ASYMMETRY_LIMIT {
        return Err(Error::AsymmetryTooLarge { defect: asymmetry });
    }
    Ok(HermitianOperator {
        matrix: (raw + raw.adjoint()).scale(0.5),
        asymmetry,
    })
}

impl HermitianOperator {
    pub fn new(raw: CMatrix) -> Result<Self> {
        validate_hermitian(&raw)
    }

    /// From a real row-major list of `n*n` entries.
    pub fn from_real(n: usize, rows: &[f64]) -> Result<Self> {
        if rows.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: rows.len() });
        }
        Self::new(CMatrix::from_fn(n, n, |i, j| C64::new(rows[i * n + j], 0.0)))
    }

    pub fn zeros(n: usize) -> Self {
        Self { matrix: CMatrix::zeros(n, n), asymmetry: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Relative asymmetry of the matrix before symmetrization.
    pub fn asymmetry(&self) -> f64 {
        self.asymmetry
    }

    pub fn norm(&self) -> f64 {
        spectral_norm(&self.matrix)
    }
}

/// The pair `(H0, V)` together with the degenerate level of `H0` being followed.
#[derive(Debug, Clone)]
pub struct PerturbationProblem {
    h0: HermitianOperator,
    v: HermitianOperator,
    ground_energy: f64,
    degeneracy: usize,
    gap_floor: f64,
    h0_eigen: Eigensystem,
    /// Position of the degenerate level inside the sorted spectrum of `H0`.
    level: Range<usize>,
    p0: CMatrix,
    resolvent: CMatrix,
}

impl PerturbationProblem {
    /// Follow the lowest eigenvalue cluster of `H0`.
    pub fn new(h0: HermitianOperator, v: HermitianOperator) -> Result<Self> {
        Self::with_level(h0, v, None, None)
    }

    /// Follow the cluster of `H0` containing `ground_energy` (lowest if `None`).
    /// A declared `degeneracy` must match the detected cluster size.
    pub fn with_level(
        h0: HermitianOperator,
        v: HermitianOperator,
        ground_energy: Option<f64>,
        degeneracy: Option<usize>,
    ) -> Result<Self> {
        if h0.dim() != v.dim() {
            return Err(Error::DimensionMismatch { expected: h0.dim(), found: v.dim() });
        }
        let h0_eigen = hermitian_eigen(h0.matrix());
        let scale = h0_eigen.scale();
        let groups = cluster_sorted(&h0_eigen.values, DEFAULT_CLUSTER_TOL * scale);
        let level = match ground_energy {
            None => groups[0].clone(),
            Some(e0) => {
                let nearest = groups
                    .iter()
                    .min_by(|a, b| {
                        let da = (h0_eigen.values[a.start] - e0).abs();
                        let db = (h0_eigen.values[b.start] - e0).abs();
                        da.total_cmp(&db)
                    })
                    .cloned()
                    .expect("spectrum is non-empty");
                let miss = (h0_eigen.values[nearest.start] - e0).abs();
                if miss > 1e-8 * scale.max(e0.abs()) {
                    return Err(Error::InvalidProblem(format!("{e0} is not an eigenvalue of H0")));
                }
                nearest
            }
        };
        if let Some(n) = degeneracy {
            if n != level.len() {
                return Err(Error::DegeneracyMismatch { declared: n, detected: level.len() });
            }
        }
        let e0 = ground_energy
            .unwrap_or_else(|| h0_eigen.values[level.clone()].iter().sum::<f64>() / level.len() as f64);
        let p0 = h0_eigen.projector(level.clone());
        let resolvent = h0_eigen.map_indexed(|k, e| {
            if level.contains(&k) {
                C64::new(0.0, 0.0)
            } else {
                C64::new(1.0 / (e - e0), 0.0)
            }
        });
        let gap_floor = 1e-6 * scale;
        Ok(Self {
            h0,
            v,
            ground_energy: e0,
            degeneracy: level.len(),
            gap_floor,
            h0_eigen,
            level,
            p0,
            resolvent,
        })
    }

    /// Declared lower bound for the spectral gap along the coupling.
    pub fn with_gap_floor(mut self, floor: f64) -> Result<Self> {
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(Error::InvalidProblem(format!("gap floor must be positive, got {floor}")));
        }
        self.gap_floor = floor;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    pub fn h0(&self) -> &HermitianOperator {
        &self.h0
    }

    pub fn v(&self) -> &HermitianOperator {
        &self.v
    }

    pub fn ground_energy(&self) -> f64 {
        self.ground_energy
    }

    pub fn degeneracy(&self) -> usize {
        self.degeneracy
    }

    pub fn gap_floor(&self) -> f64 {
        self.gap_floor
    }

    /// Projector onto the degenerate eigenspace of `H0`.
    pub fn p0(&self) -> &CMatrix {
        &self.p0
    }

    pub fn h0_eigen(&self) -> &Eigensystem {
        &self.h0_eigen
    }

    /// Index of the first tracked level in the sorted spectrum.
    pub fn level_offset(&self) -> usize {
        self.level.start
    }

    /// Orthonormal frame (columns) of the degenerate eigenspace.
    pub fn degenerate_frame(&self) -> CMatrix {
        self.h0_eigen.vectors.columns(self.level.start, self.level.len()).into_owned()
    }

    /// `H0 + λV`.
    pub fn hamiltonian(&self, lambda: f64) -> CMatrix {
        self.h0.matrix() + self.v.matrix().scale(lambda)
    }

    /// Reduced resolvent `(I−P0)(H0−E0)^{-1}(I−P0)` as a matrix.
    pub fn reduced_resolvent(&self) -> &CMatrix {
        &self.resolvent
    }

    pub fn reduced_resolvent_apply(&self, w: &CVector) -> CVector {
        &self.resolvent * w
    }

    /// Spectral frame of `H(λ)` with the default clustering tolerance.
    pub fn frame(&self, lambda: f64) -> Result<SpectralFrame> {
        spectral_frame(self, lambda, DEFAULT_CLUSTER_TOL)
    }
}

impl Eigensystem {
    /// `Q g(k, D) Q†` where `g` also sees the eigenvalue index.
    pub(crate) fn map_indexed(&self, g: impl Fn(usize, f64) -> C64) -> CMatrix {
        let mut scaled = self.vectors.clone();
        for (k, &e) in self.values.iter().enumerate() {
            let gk = g(k, e);
            scaled.column_mut(k).iter_mut().for_each(|x| *x *= gk);
        }
        &scaled * self.vectors.adjoint()
    }
}

/// Eigen-decomposition of `H(λ)` with the tracked levels identified.
#[derive(Debug, Clone)]
pub struct SpectralFrame {
    pub lambda: f64,
    pub eigen: Eigensystem,
    /// Indices of the tracked levels in `eigen`.
    pub tracked: Range<usize>,
    /// Clusters of numerically coincident tracked levels (absolute indices).
    pub groups: Vec<Range<usize>>,
    /// Distance between the tracked levels and the rest of the spectrum
    /// (infinite when nothing else exists).
    pub global_gap: f64,
    /// Distance from each tracked level to its nearest other eigenvalue.
    pub local_gaps: Vec<f64>,
}

impl SpectralFrame {
    pub fn tracked_values(&self) -> &[f64] {
        &self.eigen.values[self.tracked.clone()]
    }

    pub fn rest_values(&self) -> Vec<f64> {
        let v = &self.eigen.values;
        v[..self.tracked.start].iter().chain(&v[self.tracked.end..]).copied().collect()
    }

    /// Cluster containing tracked level `j` (0-based within the tracked block).
    pub fn group_of(&self, j: usize) -> Range<usize> {
        let k = self.tracked.start + j;
        self.groups
            .iter()
            .find(|g| g.contains(&k))
            .cloned()
            .expect("level index inside the tracked block")
    }

    /// Projector of tracked level `j`; coincident levels share their cluster projector.
    pub fn projector(&self, j: usize) -> CMatrix {
        self.eigen.projector(self.group_of(j))
    }

    pub fn tracked_projector(&self) -> CMatrix {
        self.eigen.projector(self.tracked.clone())
    }

    pub fn rest_projector(&self) -> CMatrix {
        let n = self.eigen.dim();
        CMatrix::identity(n, n) - self.tracked_projector()
    }

    /// One projector per distinct tracked cluster, followed by the rest projector.
    pub fn projectors(&self) -> Vec<CMatrix> {
        let mut out: Vec<CMatrix> = self.groups.iter().map(|g| self.eigen.projector(g.clone())).collect();
        out.push(self.rest_projector());
        out
    }

    pub fn vector(&self, j: usize) -> CVector {
        self.eigen.vectors.column(self.tracked.start + j).into_owned()
    }

    pub fn is_split(&self) -> bool {
        self.groups.len() == self.tracked.len()
    }
}

/// Eigen-decompose `H(λ)` and identify the levels emanating from the degenerate level.
///
/// Under the gap hypothesis no other eigenvalue crosses the tracked block, so
/// the block keeps its position in the sorted spectrum for every `λ`. A block
/// edge that falls inside a cluster is reported as `ClusterAmbiguity`.
pub fn spectral_frame(problem: &PerturbationProblem, lambda: f64, cluster_tol: f64) -> Result<SpectralFrame> {
    if !(cluster_tol > 0.0) {
        return Err(Error::InvalidArgument(format!("cluster tolerance must be positive, got {cluster_tol}")));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("coupling {lambda} outside [0, 1]")));
    }
    let eigen = hermitian_eigen(&problem.hamiltonian(lambda));
    let tol = cluster_tol * eigen.scale();
    let n = eigen.dim();
    let tracked = problem.level.clone();
    let values = &eigen.values;
    let mut global_gap = f64::INFINITY;
    if tracked.start > 0 {
        global_gap = global_gap.min(values[tracked.start] - values[tracked.start - 1]);
    }
    if tracked.end < n {
        global_gap = global_gap.min(values[tracked.end] - values[tracked.end - 1]);
    }
    if global_gap < tol {
        return Err(Error::ClusterAmbiguity { lambda });
    }
    if global_gap <= 0.0 {
        return Err(Error::GapViolation { lambda, gap: global_gap });
    }
    let groups: Vec<Range<usize>> = cluster_sorted(&values[tracked.clone()], tol)
        .into_iter()
        .map(|g| g.start + tracked.start..g.end + tracked.start)
        .collect();
    let local_gaps = tracked
        .clone()
        .map(|k| {
            let mut d = f64::INFINITY;
            if k > 0 {
                d = d.min(values[k] - values[k - 1]);
            }
            if k + 1 < n {
                d = d.min(values[k + 1] - values[k]);
            }
            d
        })
        .collect();
    Ok(SpectralFrame { lambda, eigen, tracked, groups, global_gap, local_gaps })
}

/// Frames on a `λ` grid, checking that the tracked subspace moves continuously:
/// consecutive tracked projectors must overlap (trace) by more than `N − 1/2`.
pub fn track_frames(problem: &PerturbationProblem, grid: &[f64], cluster_tol: f64) -> Result<Vec<SpectralFrame>> {
    let n = problem.degeneracy() as f64;
    let mut frames: Vec<SpectralFrame> = Vec::with_capacity(grid.len());
    let mut prev = problem.p0().clone();
    for &lambda in grid {
        let frame = spectral_frame(problem, lambda, cluster_tol)?;
        let p = frame.tracked_projector();
        let overlap = (&p * &prev).trace().re;
        if overlap < n - 0.5 {
            return Err(Error::ClusterAmbiguity { lambda });
        }
        prev = p;
        frames.push(frame);
    }
    Ok(frames)
}

/// `‖P − Q‖` in spectral norm, for orthogonal projectors.
pub fn projector_distance(p: &CMatrix, q: &CMatrix) -> Result<f64> {
    if p.shape() != q.shape() {
        return Err(Error::DimensionMismatch { expected: p.nrows(), found: q.nrows() });
    }
    for m in [p, q] {
        let (ok, defect) = is_projector(m, PROJECTOR_TOL);
        if !ok {
            return Err(Error::NotAProjector { defect });
        }
    }
    Ok(spectral_norm(&(p - q)))
}

/// Outcome of checking the standing hypotheses on a `λ` grid.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AssumptionReport {
    pub grid_points: usize,
    pub grid_max_spacing: f64,
    pub grid_covers_unit_interval: bool,
    /// Degenerate level: `‖H0 P0 − E0 P0‖` and multiplicity.
    pub degeneracy: usize,
    pub eigenspace_defect: f64,
    pub degenerate_level_ok: bool,
    /// Minimal gap between tracked levels and the rest over the grid.
    pub min_global_gap: f64,
    pub min_global_gap_at: f64,
    pub gap_floor: f64,
    pub gap_ok: bool,
    /// Eigenvalues of the perturbation restricted to the degenerate eigenspace.
    pub first_shifts: Vec<f64>,
    pub min_shift_spacing: f64,
    /// Smallest grid coupling used for the splitting check.
    pub splitting_from: f64,
    pub min_level_spacing: f64,
    pub splitting_ok: bool,
    pub profile: Option<ProfileReport>,
    pub passed: bool,
}

/// Check degeneracy of the unperturbed level, the spectral gap, and the
/// splitting of the tracked levels on `grid` (optionally certifying a profile).
pub fn check_assumptions(
    problem: &PerturbationProblem,
    grid: &[f64],
    profile: Option<&SwitchingProfile>,
) -> Result<AssumptionReport> {
    let mut grid: Vec<f64> = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty coupling grid".into()));
    }
    let grid_max_spacing = grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let grid_covers_unit_interval = grid[0] <= 0.0 && grid[grid.len() - 1] >= 1.0 && grid_max_spacing <= 0.01 + 1e-12;

    let h0 = problem.h0().matrix();
    let e0 = problem.ground_energy();
    let eigenspace_defect = spectral_norm(&(h0 * problem.p0() - problem.p0().scale(e0)));
    let degenerate_level_ok = eigenspace_defect <= 1e-10 * problem.h0_eigen().scale().max(1.0);

    let frames: Vec<SpectralFrame> = grid
        .iter()
        .map(|&l| spectral_frame(problem, l, DEFAULT_CLUSTER_TOL))
        .collect::<Result<_>>()?;
    let (min_global_gap, min_global_gap_at) = frames
        .iter()
        .map(|f| (f.global_gap, f.lambda))
        .fold((f64::INFINITY, 0.0), |acc, x| if x.0 < acc.0 { x } else { acc });
    let gap_ok = min_global_gap >= problem.gap_floor();

    let frame0 = problem.degenerate_frame();
    let block = frame0.adjoint() * problem.v().matrix() * &frame0;
    let first_shifts = hermitian_eigen(&block).values;
    let spacing = |v: &[f64]| v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let min_shift_spacing = spacing(&first_shifts);
    let shift_scale = {
        let e = hermitian_eigen(&block);
        e.scale()
    };
    let splitting_from = grid.iter().copied().find(|&l| l > 0.0).unwrap_or(0.0);
    let min_level_spacing = frames
        .iter()
        .filter(|f| f.lambda >= splitting_from && f.lambda > 0.0)
        .map(|f| spacing(f.tracked_values()))
        .fold(f64::INFINITY, f64::min);
    let level_tol = DEFAULT_CLUSTER_TOL * frames.last().map(|f| f.eigen.scale()).unwrap_or(1.0);
    let splitting_ok = min_shift_spacing > DEFAULT_CLUSTER_TOL * shift_scale && min_level_spacing > level_tol;

    let profile = match profile {
        Some(p) => {
            let start = p.support_start().unwrap_or(-40.0);
            let pts = 4001;
            let tau: Vec<f64> = (0..pts).map(|k| start * (1.0 - k as f64 / (pts - 1) as f64)).collect();
            Some(certify_profile(p, &tau)?)
        }
        None => None,
    };
    let passed = degenerate_level_ok && gap_ok && splitting_ok && profile.as_ref().is_none_or(|r| r.passed);
    Ok(AssumptionReport {
        grid_points: grid.len(),
        grid_max_spacing,
        grid_covers_unit_interval,
        degeneracy: problem.degeneracy(),
        eigenspace_defect,
        degenerate_level_ok,
        min_global_gap,
        min_global_gap_at,
        gap_floor: problem.gap_floor(),
        gap_ok,
        first_shifts,
        min_shift_spacing,
        splitting_from,
        min_level_spacing,
        splitting_ok,
        profile,
        passed,
    })
}

/// Uniform grid `0, 1/steps, …, 1`.
pub fn unit_grid(steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| k as f64 / steps as f64).collect()
}
