//! Dense complex linear algebra used throughout the crate.
//!
//! Everything here works on `nalgebra` dynamic matrices of `Complex64`.
//! Norms are spectral norms (largest singular value) unless stated otherwise.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

/// Eigen-decomposition of a Hermitian matrix with eigenvalues in ascending order.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, in the order of `values`.
    pub vectors: CMatrix,
}

impl Eigensystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Spectral diameter `max - min`, falling back to the largest magnitude
    /// (or 1) for a scalar spectrum so it can serve as a relative scale.
    pub fn scale(&self) -> f64 {
        let lo = self.values.first().copied().unwrap_or(0.0);
        let hi = self.values.last().copied().unwrap_or(0.0);
        let diameter = hi - lo;
        if diameter > 0.0 {
            diameter
        } else {
            let m = lo.abs().max(hi.abs());
            if m > 0.0 {
                m
            } else {
                1.0
            }
        }
    }

    /// Orthogonal projector onto the span of the eigenvectors in `range`.
    pub fn projector(&self, range: Range<usize>) -> CMatrix {
        let cols = self.vectors.columns(range.start, range.len());
        &cols * cols.adjoint()
    }

    /// `Q f(D) Q†` for a real function of the eigenvalues.
    pub fn map_real(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        self.map(|e| C64::new(f(e), 0.0))
    }

    /// `Q f(D) Q†` for a complex function of the eigenvalues.
    pub fn map(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let mut scaled = self.vectors.clone();
        for (k, &e) in self.values.iter().enumerate() {
            let fk = f(e);
            scaled.column_mut(k).iter_mut().for_each(|x| *x *= fk);
        }
        &scaled * self.vectors.adjoint()
    }
}

/// Hermitian eigen-decomposition. The input is symmetrized first, so
/// roundoff-level asymmetry is tolerated.
pub fn hermitian_eigen(m: &CMatrix) -> Eigensystem {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "hermitian_eigen needs a square matrix");
    if n == 0 {
        return Eigensystem {
            values: Vec::new(),
            vectors: CMatrix::zeros(0, 0),
        };
    }
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Eigensystem { values, vectors }
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Spectral norm of a Hermitian matrix (largest |eigenvalue|); cheaper than an SVD.
pub fn hermitian_norm(m: &CMatrix) -> f64 {
    hermitian_eigen(m)
        .values
        .iter()
        .fold(0.0_f64, |acc, e| acc.max(e.abs()))
}

/// Largest absolute entry.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// `‖U†U − I‖`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.nrows();
    hermitian_norm(&(u.adjoint() * u - CMatrix::identity(n, n)))
}

/// Unitary factor of the polar decomposition `M = W |M|`.
///
/// Near-unitary input converges in one or two Newton–Schulz sweeps;
/// anything further away goes through an SVD.
pub fn polar_unitary(m: &CMatrix) -> CMatrix {
    let n = m.nrows();
    let id = CMatrix::identity(n, n);
    let mut w = m.clone();
    for _ in 0..6 {
        let gram = w.adjoint() * &w;
        let defect = max_abs(&(&gram - &id));
        if defect < 1e-15 {
            return w;
        }
        if defect > 0.1 {
            break;
        }
        // W <- W (3I - W†W) / 2
        w = &w * (id.scale(3.0) - gram).scale(0.5);
    }
    let svd = m.clone().svd(true, true);
    match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => u * v_t,
        _ => w,
    }
}

pub fn is_projector(p: &CMatrix, tol: f64) -> (bool, f64) {
    let herm = max_abs(&(p - p.adjoint()));
    let idem = max_abs(&(p * p - p));
    let defect = herm.max(idem);
    (defect <= tol, defect)
}

pub fn rank_one(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

/// `⟨a, b⟩` with the physics convention (conjugate-linear in `a`).
pub fn inner(a: &CVector, b: &CVector) -> C64 {
    a.dotc(b)
}

/// Multiply `v` by the unit phase making `⟨reference, v⟩` real and non-negative.
pub fn align_phase(v: &CVector, reference: &CVector) -> CVector {
    let overlap = inner(reference, v);
    if overlap.norm() == 0.0 {
        return v.clone();
    }
    v * (overlap.conj() / overlap.norm())
}

/// Rotate `v` so that its largest-magnitude component is real and positive.
pub fn gauge_largest_real(v: &mut CVector) {
    let mut best = 0;
    let mut best_mag = -1.0;
    for (k, z) in v.iter().enumerate() {
        // ties resolved toward the lowest index; 1e-12 keeps the choice stable
        if z.norm() > best_mag + 1e-12 {
            best_mag = z.norm();
            best = k;
        }
    }
    if best_mag > 0.0 {
        let phase = v[best].conj() / v[best].norm();
        *v *= phase;
        v[best] = C64::new(v[best].re, 0.0);
    }
}

/// Group a sorted list into maximal runs whose consecutive spacing is below `tol`.
pub fn cluster_sorted(values: &[f64], tol: f64) -> Vec<Range<usize>> {
    let mut groups = Vec::new();
    if values.is_empty() {
        return groups;
    }
    let mut start = 0;
    for k in 1..values.len() {
        if values[k] - values[k - 1] >= tol {
            groups.push(start..k);
            start = k;
        }
    }
    groups.push(start..values.len());
    groups
}

/// Least-squares slope of `log y` against `log x`. Points with non-positive
/// coordinates are skipped; `None` if fewer than two remain.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Composite Simpson rule on an arbitrary increasing grid.
///
/// Pairs of intervals use the three-point rule for unequal spacing; a
/// trailing odd interval is integrated with the quadratic through the last
/// three nodes.
pub fn simpson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    match n {
        0 | 1 => return 0.0,
        2 => return 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]),
        _ => {}
    }
    let intervals = n - 1;
    let paired = intervals - intervals % 2;
    let mut total = 0.0;
    let mut k = 0;
    while k < paired {
        let h0 = xs[k + 1] - xs[k];
        let h1 = xs[k + 2] - xs[k + 1];
        let hs = h0 + h1;
        total += hs / 6.0
            * ((2.0 - h1 / h0) * ys[k] + hs * hs / (h0 * h1) * ys[k + 1] + (2.0 - h0 / h1) * ys[k + 2]);
        k += 2;
    }
    if intervals % 2 == 1 {
        let h0 = xs[n - 2] - xs[n - 3];
        let h1 = xs[n - 1] - xs[n - 2];
        total += h1 / 6.0
            * ((2.0 * h1 + 3.0 * h0) / (h0 + h1) * ys[n - 1] + (h1 + 3.0 * h0) / h0 * ys[n - 2]
                - h1 * h1 / (h0 * (h0 + h1)) * ys[n - 3]);
    }
    total
}

pub fn real_matrix(n: usize, rows: &[f64]) -> CMatrix {
    assert_eq!(rows.len(), n * n);
    CMatrix::from_fn(n, n, |i, j| C64::new(rows[i * n + j], 0.0))
}

pub fn diag_matrix(values: &[f64]) -> CMatrix {
    let n = values.len();
    CMatrix::from_fn(n, n, |i, j| if i == j { C64::new(values[i], 0.0) } else { C64::new(0.0, 0.0) })
}
