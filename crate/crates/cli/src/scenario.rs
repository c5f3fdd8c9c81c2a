//! Scenario configuration and the experiments it can run.

use std::fmt;
use std::path::{Path, PathBuf};

use adiaswitch::degeneracy::{expansion_check, resolved_basis, InitialBasis};
use adiaswitch::gml::{
    check_ratio_condition, gap_diagnostics, geometric_eigenstate, gml_ratio, gml_sweep, multistep_gml,
    sweep_state, GmlOutcome, SweepRecord,
};
use adiaswitch::io::{load_problem, read_text, vector_data, vector_from_data, write_text};
use adiaswitch::linalg::hermitian_eigen;
use adiaswitch::operator::{check_assumptions, unit_grid};
use adiaswitch::{EvolutionKind, PerturbationProblem, SwitchingProfile};
use serde::Deserialize;
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Assumptions,
    Basis,
    Geometric,
    Gml,
    Sweep,
    Multistep,
    Gaps,
    DivergenceDemo,
}

impl Experiment {
    fn name(self) -> &'static str {
        match self {
            Self::Assumptions => "assumptions",
            Self::Basis => "basis",
            Self::Geometric => "geometric",
            Self::Gml => "gml",
            Self::Sweep => "sweep",
            Self::Multistep => "multistep",
            Self::Gaps => "gaps",
            Self::DivergenceDemo => "divergence-demo",
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Parameters {
    pub level: Option<usize>,
    pub epsilon: Option<f64>,
    pub epsilons: Option<Vec<f64>>,
    pub kind: Option<EvolutionKind>,
    pub breakpoints: Option<Vec<f64>>,
    pub adiabatic_errors: Option<bool>,
    pub grid_steps: Option<usize>,
    pub series_grid: Option<Vec<f64>>,
    pub t_grid: Option<Vec<f64>>,
    pub state: Option<Vec<[f64; 2]>>,
    pub max_residual: Option<f64>,
    pub min_slope: Option<f64>,
    pub delta_floor: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Relative paths are resolved against the directory of the config file.
    pub problem_path: PathBuf,
    pub profile: SwitchingProfile,
    pub experiment: Experiment,
    #[serde(default)]
    pub parameters: Parameters,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub enum ScenarioError {
    ConfigParse(String),
    ProblemLoad(String),
    ExperimentFailure(String),
    Output(String),
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ConfigParse(m) => write!(f, "config error: {m}"),
            Self::ProblemLoad(m) => write!(f, "cannot load problem: {m}"),
            Self::ExperimentFailure(m) => write!(f, "experiment failed: {m}"),
            Self::Output(m) => write!(f, "cannot write output: {m}"),
        }
    }
}

impl ScenarioError {
    /// 2 for bad input, 1 for a failed experiment.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::ConfigParse(_) | Self::ProblemLoad(_) | Self::Output(_) => 2,
            Self::ExperimentFailure(_) => 1,
        }
    }
}

fn failed(e: adiaswitch::Error) -> ScenarioError {
    ScenarioError::ExperimentFailure(e.to_string())
}

pub fn load_config(path: &Path) -> Result<(ScenarioConfig, PathBuf), ScenarioError> {
    let text = read_text(path).map_err(|e| ScenarioError::ConfigParse(e.to_string()))?;
    let mut config: ScenarioConfig =
        serde_json::from_str(&text).map_err(|e| ScenarioError::ConfigParse(e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    if config.problem_path.is_relative() {
        config.problem_path = base.join(&config.problem_path);
    }
    if let Some(out) = &config.output_dir {
        if out.is_relative() {
            config.output_dir = Some(base.join(out));
        }
    }
    validate_parameters(&config)?;
    Ok((config, base.to_path_buf()))
}

fn validate_parameters(config: &ScenarioConfig) -> Result<(), ScenarioError> {
    let p = &config.parameters;
    let need = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(ScenarioError::ConfigParse(msg.into())) };
    match config.experiment {
        Experiment::Sweep => {
            let eps = p.epsilons.as_deref().unwrap_or(&[]);
            need(eps.len() >= 4, "sweep needs an `epsilons` list with at least 4 entries")?;
            need(eps.windows(2).all(|w| w[1] < w[0]) && eps.iter().all(|&e| e > 0.0), "`epsilons` must be positive and strictly decreasing")
        }
        Experiment::DivergenceDemo => {
            let eps = p.epsilons.as_deref().unwrap_or(&DIVERGENCE_EPSILONS);
            need(eps.len() >= 4, "divergence-demo needs at least 4 epsilons")
        }
        Experiment::Gml => need(p.epsilon.is_some_and(|e| e > 0.0), "gml needs a positive `epsilon`"),
        Experiment::Multistep => {
            need(p.epsilon.is_some_and(|e| e > 0.0), "multistep needs a positive `epsilon`")?;
            need(p.breakpoints.as_ref().is_some_and(|b| b.len() >= 2), "multistep needs `breakpoints`")
        }
        _ => Ok(()),
    }
}

const DIVERGENCE_EPSILONS: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

/// Result of one experiment: pass/fail, a JSON summary and named CSV files.
pub struct Report {
    pub passed: bool,
    pub summary: Value,
    pub tolerances: Map<String, Value>,
    pub csv: Vec<(String, String)>,
}

struct Tolerances(Map<String, Value>);

impl Tolerances {
    fn new() -> Self {
        Self(Map::new())
    }

    /// Record a tolerance together with where it came from.
    fn take(&mut self, name: &str, configured: Option<f64>, default: f64) -> f64 {
        let (value, source) = match configured {
            Some(v) => (v, "config"),
            None => (default, "default"),
        };
        self.0.insert(name.into(), json!({ "value": value, "source": source }));
        value
    }
}

pub fn run(config: &ScenarioConfig, verbose: bool) -> Result<Report, ScenarioError> {
    let problem = load_problem(&config.problem_path).map_err(|e| ScenarioError::ProblemLoad(e.to_string()))?;
    if verbose {
        eprintln!(
            "loaded {} (dim {}, level E0 = {}, N = {})",
            config.problem_path.display(),
            problem.dim(),
            problem.ground_energy(),
            problem.degeneracy()
        );
    }
    let mut tol = Tolerances::new();
    tol.0.insert("gapFloor".into(), json!({ "value": problem.gap_floor(), "source": "problem" }));
    let basis = resolved_basis(&problem).map_err(failed)?;
    let p = &config.parameters;
    let profile = &config.profile;
    let level = p.level.unwrap_or(0);
    let (passed, summary, csv) = match config.experiment {
        Experiment::Assumptions => assumptions(&problem, profile, p),
        Experiment::Basis => basis_report(&problem, &basis, p, &mut tol)?,
        Experiment::Geometric => geometric(&problem, profile, &basis, &mut tol, p)?,
        Experiment::Gml => {
            let max = tol.take("maxResidual", p.max_residual, 1e-2);
            let kind = p.kind.unwrap_or(EvolutionKind::Full);
            let o = gml_ratio(&problem, profile, &basis, level, p.epsilon.unwrap_or(0.1), kind).map_err(failed)?;
            (o.eigen_residual <= max, json!({ "level": level, "outcome": outcome_json(&o) }), Vec::new())
        }
        Experiment::Sweep => sweep(&problem, profile, &basis, level, p, &mut tol, verbose)?,
        Experiment::Multistep => {
            let max = tol.take("maxResidual", p.max_residual, 1e-2);
            let kind = p.kind.unwrap_or(EvolutionKind::Full);
            let breakpoints = p.breakpoints.clone().unwrap_or_default();
            let eps = p.epsilon.unwrap_or(0.05);
            let m = multistep_gml(&problem, profile, &basis, level, &breakpoints, eps, kind).map_err(failed)?;
            let single = match gml_ratio(&problem, profile, &basis, level, eps, kind) {
                Ok(o) => json!({ "denominatorAbs": o.denominator.norm(), "eigenResidual": o.eigen_residual }),
                Err(e) => json!({ "error": e.to_string() }),
            };
            let mut rows = String::from("stage,from,to,displacement,denominator_abs,eigen_residual\n");
            for (k, s) in m.stages.iter().enumerate() {
                rows.push_str(&format!(
                    "{k},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                    s.from,
                    s.to,
                    s.displacement,
                    s.outcome.denominator.norm(),
                    s.outcome.eigen_residual
                ));
            }
            let summary = json!({
                "level": level,
                "epsilon": eps,
                "breakpoints": breakpoints,
                "singleStage": single,
                "outcome": outcome_json(&m.outcome),
            });
            (m.outcome.eigen_residual <= max, summary, vec![("stages.csv".into(), rows)])
        }
        Experiment::Gaps => {
            let grid = match &p.t_grid {
                Some(g) => g.clone(),
                None => {
                    let start = profile.truncation_time(1e-3).map_err(failed)?.min(-1.0);
                    (0..=200).map(|k| start * (1.0 - k as f64 / 200.0)).collect()
                }
            };
            let g = gap_diagnostics(&problem, profile, &grid).map_err(failed)?;
            let summary = json!({
                "points": grid.len(),
                "ratioMin": g.ratio_min,
                "ratioMax": g.ratio_max,
                "minGlobalGap": g.rows.iter().map(|r| r.global_gap).fold(f64::INFINITY, f64::min),
                "splitting": g.splitting,
            });
            (g.splitting, summary, vec![("gaps.csv".into(), g.to_csv())])
        }
        Experiment::DivergenceDemo => divergence(&problem, profile, &basis, level, p, &mut tol)?,
    };
    Ok(Report { passed, summary, tolerances: tol.0, csv })
}

fn assumptions(
    problem: &PerturbationProblem,
    profile: &SwitchingProfile,
    p: &Parameters,
) -> (bool, Value, Vec<(String, String)>) {
    let grid = unit_grid(p.grid_steps.unwrap_or(100));
    match check_assumptions(problem, &grid, Some(profile)) {
        Ok(r) => {
            let passed = r.passed;
            let mut rows = String::from("lambda,global_gap\n");
            for &l in &grid {
                if let Ok(f) = problem.frame(l) {
                    rows.push_str(&format!("{l:.16e},{:.16e}\n", f.global_gap));
                }
            }
            let summary = json!({ "gapEstimate": r.min_global_gap, "report": r });
            (passed, summary, vec![("gaps.csv".into(), rows)])
        }
        Err(e) => (false, json!({ "error": e.to_string() }), Vec::new()),
    }
}

fn basis_report(
    problem: &PerturbationProblem,
    basis: &InitialBasis,
    p: &Parameters,
    tol: &mut Tolerances,
) -> Result<(bool, Value, Vec<(String, String)>), ScenarioError> {
    let min_slope = tol.take("minFirstOrderSlope", p.min_slope, 1.9);
    let grid = p
        .series_grid
        .clone()
        .unwrap_or_else(|| (0..8).map(|k| 1e-3 * 50f64.powf(k as f64 / 7.0)).collect());
    let series = expansion_check(problem, basis, &grid).map_err(failed)?;
    let ok_first = series.first_slopes.iter().all(|s| s.is_some_and(|x| x >= min_slope));
    let ok_second = match &series.second_slopes {
        Some(s) => s.iter().all(|s| s.is_some_and(|x| x >= min_slope + 1.0)),
        None => true,
    };
    let vectors: Vec<Vec<[f64; 2]>> = (0..basis.len()).map(|j| vector_data(&basis.vector(j))).collect();
    let summary = json!({
        "firstShifts": basis.first_shifts,
        "residualGroups": basis.residual_groups.iter().map(|g| [g.start, g.end]).collect::<Vec<_>>(),
        "secondShifts": basis.second_shifts,
        "unresolved": basis.unresolved.iter().map(|g| [g.start, g.end]).collect::<Vec<_>>(),
        "vectors": vectors,
        "series": series,
    });
    let passed = ok_first && ok_second && basis.unresolved.is_empty();
    Ok((passed, summary, vec![("series.csv".into(), series.to_csv())]))
}

fn geometric(
    problem: &PerturbationProblem,
    profile: &SwitchingProfile,
    basis: &InitialBasis,
    tol: &mut Tolerances,
    p: &Parameters,
) -> Result<(bool, Value, Vec<(String, String)>), ScenarioError> {
    let max = tol.take("maxResidual", p.max_residual, 1e-5);
    let exact = hermitian_eigen(&problem.hamiltonian(1.0));
    let offset = problem.level_offset();
    let mut rows = String::from("level,energy,eigen_residual,overlap\n");
    let mut levels = Vec::new();
    let mut passed = true;
    for j in 0..basis.len() {
        let g = geometric_eigenstate(problem, profile, basis, j).map_err(failed)?;
        let overlap = g.state.dotc(&exact.vectors.column(offset + j)).norm();
        passed &= g.eigen_residual <= max;
        rows.push_str(&format!("{j},{:.16e},{:.16e},{:.16e}\n", g.energy, g.eigen_residual, overlap));
        levels.push(json!({
            "level": j,
            "energy": g.energy,
            "eigenResidual": g.eigen_residual,
            "overlap": overlap,
            "state": vector_data(&g.state),
        }));
    }
    Ok((passed, json!({ "levels": levels }), vec![("geometric.csv".into(), rows)]))
}

fn sweep(
    problem: &PerturbationProblem,
    profile: &SwitchingProfile,
    basis: &InitialBasis,
    level: usize,
    p: &Parameters,
    tol: &mut Tolerances,
    verbose: bool,
) -> Result<(bool, Value, Vec<(String, String)>), ScenarioError> {
    let epsilons = p.epsilons.clone().unwrap_or_default();
    let with_errors = p.adiabatic_errors.unwrap_or(true);
    let min_slope = tol.take("minAdiabaticSlope", p.min_slope, 1.0 / 3.0);
    if verbose {
        eprintln!("sweeping {} values of epsilon", epsilons.len());
    }
    let record = gml_sweep(problem, profile, basis, level, &epsilons, with_errors).map_err(failed)?;
    let slope_ok = !with_errors || record.fitted_slope.is_some_and(|s| s >= min_slope);
    let condition = check_ratio_condition(problem, basis, level).map_err(failed)?;
    let summary = json!({
        "level": level,
        "conditionNorm": condition.norm,
        "converging": record.converging(),
        "fittedSlope": record.fitted_slope,
        "slopeOk": slope_ok,
        "sweep": sweep_json(&record),
    });
    Ok((record.converging() && slope_ok, summary, vec![("sweep.csv".into(), record.to_csv())]))
}

fn divergence(
    problem: &PerturbationProblem,
    profile: &SwitchingProfile,
    basis: &InitialBasis,
    level: usize,
    p: &Parameters,
    tol: &mut Tolerances,
) -> Result<(bool, Value, Vec<(String, String)>), ScenarioError> {
    let floor = tol.take("deltaFloor", p.delta_floor, 0.1);
    let epsilons = p.epsilons.clone().unwrap_or_else(|| DIVERGENCE_EPSILONS.to_vec());
    let generic = match &p.state {
        Some(s) if s.len() == problem.dim() => vector_from_data(s).normalize(),
        Some(_) => return Err(ScenarioError::ConfigParse("`state` has the wrong dimension".into())),
        None => (0..basis.len()).map(|j| basis.vector(j)).sum::<adiaswitch::linalg::CVector>().normalize(),
    };
    let eigen = basis.vector(level);
    let generic_sweep = sweep_state(problem, profile, &generic, &generic, &epsilons, false).map_err(failed)?;
    let eigen_sweep = sweep_state(problem, profile, &eigen, &eigen, &epsilons, false).map_err(failed)?;
    let no_limit = generic_sweep.no_limit(floor);
    let converging = eigen_sweep.converging();
    let summary = json!({
        "verdict": if no_limit { "no-limit" } else { "limit" },
        "eigenvectorVerdict": if converging { "converging" } else { "not-converging" },
        "generic": sweep_json(&generic_sweep),
        "eigenvector": sweep_json(&eigen_sweep),
    });
    let csv = vec![
        ("divergence_generic.csv".into(), generic_sweep.to_csv()),
        ("divergence_eigenvector.csv".into(), eigen_sweep.to_csv()),
    ];
    Ok((no_limit && converging, summary, csv))
}

fn outcome_json(o: &GmlOutcome) -> Value {
    json!({
        "epsilon": o.epsilon,
        "kind": o.kind,
        "denominator": [o.denominator.re, o.denominator.im],
        "eigenResidual": o.eigen_residual,
        "rayleighEnergy": o.rayleigh_energy,
        "conditionNorm": o.condition_norm,
        "cauchyDifference": o.cauchy_difference,
        "t0": o.t0,
        "state": vector_data(&o.state),
    })
}

fn sweep_json(r: &SweepRecord) -> Value {
    let outcomes: Vec<Value> = r
        .outcomes
        .iter()
        .map(|o| match o {
            Ok(o) => outcome_json(o),
            Err(e) => json!({ "error": e.to_string() }),
        })
        .collect();
    json!({
        "epsilons": r.epsilons,
        "cauchyDeltas": r.cauchy_deltas,
        "adiabaticErrors": r.adiabatic_errors,
        "outcomes": outcomes,
    })
}

/// Write `report.json` and the CSV files into `dir`.
pub fn write_outputs(dir: &Path, experiment: Experiment, problem: &Path, profile: &SwitchingProfile, report: &Report) -> Result<(), ScenarioError> {
    std::fs::create_dir_all(dir).map_err(|e| ScenarioError::Output(format!("{}: {e}", dir.display())))?;
    let json = json!({
        "experiment": experiment.name(),
        "problem": problem.display().to_string(),
        "profile": profile,
        "passed": report.passed,
        "tolerances": report.tolerances,
        "results": report.summary,
    });
    let text = serde_json::to_string_pretty(&json).expect("report serializes");
    write_text(&dir.join("report.json"), &(text + "\n")).map_err(|e| ScenarioError::Output(e.to_string()))?;
    for (name, body) in &report.csv {
        write_text(&dir.join(name), body).map_err(|e| ScenarioError::Output(e.to_string()))?;
    }
    Ok(())
}
