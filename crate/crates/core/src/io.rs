//! File formats: matrices, problems, states and propagator dumps, all JSON.
//!
//! A matrix is `{ "dim": n, "entries": [[re, im], ...] }` in row-major order.
//! A problem is `{ "h0": <matrix>, "v": <matrix> }` with optional
//! `groundEnergy`, `degeneracy` and `gapFloor`; the projector onto the
//! degenerate eigenspace is always derived.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, C64};
use crate::operator::{HermitianOperator, PerturbationProblem};
use crate::propagation::{EvolutionKind, PropagatorResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixData {
    pub dim: usize,
    pub entries: Vec<[f64; 2]>,
}

impl MatrixData {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let n = m.nrows();
        let entries = (0..n)
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| [m[(i, j)].re, m[(i, j)].im])
            .collect();
        Self { dim: n, entries }
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        let n = self.dim;
        if n == 0 {
            return Err(Error::Parse("matrix dimension must be positive".into()));
        }
        if self.entries.len() != n * n {
            return Err(Error::Parse(format!(
                "matrix of dimension {n} needs {} entries, found {}",
                n * n,
                self.entries.len()
            )));
        }
        Ok(CMatrix::from_fn(n, n, |i, j| {
            let [re, im] = self.entries[i * n + j];
            C64::new(re, im)
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ProblemFile {
    pub h0: MatrixData,
    pub v: MatrixData,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_energy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degeneracy: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_floor: Option<f64>,
}

impl ProblemFile {
    pub fn into_problem(self) -> Result<PerturbationProblem> {
        let h0 = HermitianOperator::new(self.h0.to_matrix()?)?;
        let v = HermitianOperator::new(self.v.to_matrix()?)?;
        let problem = PerturbationProblem::with_level(h0, v, self.ground_energy, self.degeneracy)?;
        match self.gap_floor {
            Some(floor) => problem.with_gap_floor(floor),
            None => Ok(problem),
        }
    }

    pub fn from_problem(problem: &PerturbationProblem) -> Self {
        Self {
            h0: MatrixData::from_matrix(problem.h0().matrix()),
            v: MatrixData::from_matrix(problem.v().matrix()),
            ground_energy: Some(problem.ground_energy()),
            degeneracy: Some(problem.degeneracy()),
            gap_floor: Some(problem.gap_floor()),
        }
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn parse_problem(text: &str) -> Result<PerturbationProblem> {
    let file: ProblemFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.into_problem()
}

pub fn load_problem(path: &Path) -> Result<PerturbationProblem> {
    parse_problem(&read_text(path)?)
}

pub fn problem_to_json(problem: &PerturbationProblem) -> String {
    serde_json::to_string_pretty(&ProblemFile::from_problem(problem)).expect("problem serializes")
}

/// A state vector as a list of `[re, im]` pairs.
pub fn vector_data(v: &CVector) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

pub fn vector_from_data(data: &[[f64; 2]]) -> CVector {
    CVector::from_iterator(data.len(), data.iter().map(|&[re, im]| C64::new(re, im)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PropagatorDump {
    pub kind: EvolutionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub t_start: f64,
    pub t_end: f64,
    pub step: f64,
    pub step_count: usize,
    pub unitarity_defect: f64,
    pub raw_defect: f64,
    pub matrix: MatrixData,
}

impl From<&PropagatorResult> for PropagatorDump {
    fn from(u: &PropagatorResult) -> Self {
        Self {
            kind: u.kind,
            epsilon: u.epsilon,
            t_start: u.t_start,
            t_end: u.t_end,
            step: u.step,
            step_count: u.step_count,
            unitarity_defect: u.unitarity_defect,
            raw_defect: u.raw_defect,
            matrix: MatrixData::from_matrix(&u.unitary),
        }
    }
}

impl PropagatorDump {
    pub fn into_result(self) -> Result<PropagatorResult> {
        Ok(PropagatorResult {
            kind: self.kind,
            unitary: self.matrix.to_matrix()?,
            t_start: self.t_start,
            t_end: self.t_end,
            epsilon: self.epsilon,
            step: self.step,
            step_count: self.step_count,
            unitarity_defect: self.unitarity_defect,
            raw_defect: self.raw_defect,
        })
    }
}
