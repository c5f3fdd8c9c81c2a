//! Switching functions `f : (-inf, 0] -> [0, 1]` and the coupling schedules built on them.
//!
//! Three profiles are provided: the exponential ramp `e^tau`, a quintic
//! smoothstep supported on `[rf, 0]`, and a tabulated profile interpolated by
//! a natural cubic spline (so `f''` is continuous and piecewise linear).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::simpson;

/// Value and first two derivatives of a profile at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileValue {
    pub f: f64,
    pub fp: f64,
    pub fpp: f64,
}

/// Serialized form of a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProfileConfig {
    Exponential {},
    Bump { rf: f64 },
    Table { tau: Vec<f64>, f: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileConfig", into = "ProfileConfig")]
pub enum SwitchingProfile {
    Exponential,
    SmoothBump { rf: f64 },
    Tabulated(CubicSpline),
}

/// Natural cubic spline through `(tau[k], f[k])`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    tau: Vec<f64>,
    f: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    fn new(tau: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        let n = tau.len();
        if n < 2 || f.len() != n {
            return Err(Error::InvalidProfile(
                "table needs at least two (tau, f) pairs of equal length".into(),
            ));
        }
        if tau.iter().chain(&f).any(|x| !x.is_finite()) {
            return Err(Error::InvalidProfile("table contains non-finite values".into()));
        }
        if tau.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidProfile("table times must be strictly increasing".into()));
        }
        if tau[n - 1] != 0.0 {
            return Err(Error::InvalidProfile("table must end at tau = 0".into()));
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior second derivatives.
            let h: Vec<f64> = tau.windows(2).map(|w| w[1] - w[0]).collect();
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                rhs[i] = 6.0 * ((f[i + 2] - f[i + 1]) / h[i + 1] - (f[i + 1] - f[i]) / h[i]);
            }
            for i in 1..k {
                let w = h[i] / diag[i - 1];
                diag[i] -= w * h[i];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - h[i + 1] * m[i + 2]) / diag[i];
            }
        }
        Ok(Self { tau, f, m })
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.tau, &self.f)
    }

    fn eval(&self, x: f64) -> ProfileValue {
        let n = self.tau.len();
        if x < self.tau[0] {
            return ProfileValue { f: 0.0, fp: 0.0, fpp: 0.0 };
        }
        let i = match self.tau.partition_point(|&t| t <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.tau[i + 1] - self.tau[i];
        let a = (self.tau[i + 1] - x) / h;
        let b = (x - self.tau[i]) / h;
        let (y0, y1, m0, m1) = (self.f[i], self.f[i + 1], self.m[i], self.m[i + 1]);
        ProfileValue {
            f: a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0,
            fp: (y1 - y0) / h - (3.0 * a * a - 1.0) / 6.0 * h * m0 + (3.0 * b * b - 1.0) / 6.0 * h * m1,
            fpp: a * m0 + b * m1,
        }
    }

    /// Exact spline integral over `[tau[0], tau[k]]` for every knot.
    fn cumulative_integrals(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.tau.len()];
        for i in 0..self.tau.len() - 1 {
            let h = self.tau[i + 1] - self.tau[i];
            acc[i + 1] = acc[i] + h * (self.f[i] + self.f[i + 1]) / 2.0
                - h * h * h * (self.m[i] + self.m[i + 1]) / 24.0;
        }
        acc
    }
}

impl TryFrom<ProfileConfig> for SwitchingProfile {
    type Error = Error;

    fn try_from(c: ProfileConfig) -> Result<Self> {
        match c {
            ProfileConfig::Exponential {} => Ok(Self::Exponential),
            ProfileConfig::Bump { rf } => Self::bump(rf),
            ProfileConfig::Table { tau, f } => Self::table(tau, f),
        }
    }
}

impl From<SwitchingProfile> for ProfileConfig {
    fn from(p: SwitchingProfile) -> Self {
        match p {
            SwitchingProfile::Exponential => ProfileConfig::Exponential {},
            SwitchingProfile::SmoothBump { rf } => ProfileConfig::Bump { rf },
            SwitchingProfile::Tabulated(s) => ProfileConfig::Table { tau: s.tau, f: s.f },
        }
    }
}

impl SwitchingProfile {
    pub fn exponential() -> Self {
        Self::Exponential
    }

    /// Quintic smoothstep ramp from 0 at `rf` to 1 at 0.
    pub fn bump(rf: f64) -> Result<Self> {
        if !(rf < 0.0 && rf.is_finite()) {
            return Err(Error::InvalidProfile(format!("bump support endpoint must be negative, got {rf}")));
        }
        Ok(Self::SmoothBump { rf })
    }

    pub fn table(tau: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        Ok(Self::Tabulated(CubicSpline::new(tau, f)?))
    }

    pub fn eval(&self, tau: f64) -> Result<ProfileValue> {
        if tau > 0.0 || tau.is_nan() {
            return Err(Error::PositiveTime { tau });
        }
        Ok(match self {
            Self::Exponential => {
                let e = tau.exp();
                ProfileValue { f: e, fp: e, fpp: e }
            }
            Self::SmoothBump { rf } => {
                if tau <= *rf {
                    ProfileValue { f: 0.0, fp: 0.0, fpp: 0.0 }
                } else {
                    let len = -rf;
                    let x = (tau - rf) / len;
                    let x2 = x * x;
                    ProfileValue {
                        f: x2 * x * (10.0 - 15.0 * x + 6.0 * x2),
                        fp: 30.0 * x2 * (1.0 - x) * (1.0 - x) / len,
                        fpp: 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x) / (len * len),
                    }
                }
            }
            Self::Tabulated(s) => s.eval(tau),
        })
    }

    /// Largest `tau0 <= 0` whose left tail `∫_{-inf}^{tau0} f` is at most `tol`.
    ///
    /// Exponential: `ln tol`. Bump: the support endpoint. Table: the last knot
    /// whose cumulative integral stays within `tol` (zero left of the table).
    pub fn truncation_time(&self, tol: f64) -> Result<f64> {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("truncation tolerance must be positive, got {tol}")));
        }
        Ok(match self {
            Self::Exponential => tol.ln().min(0.0),
            Self::SmoothBump { rf } => *rf,
            Self::Tabulated(s) => {
                let cum = s.cumulative_integrals();
                let k = cum.partition_point(|&c| c <= tol).max(1) - 1;
                s.tau[k]
            }
        })
    }

    /// Left end of the support, if compact.
    pub fn support_start(&self) -> Option<f64> {
        match self {
            Self::Exponential => None,
            Self::SmoothBump { rf } => Some(*rf),
            Self::Tabulated(s) => Some(s.tau[0]),
        }
    }
}

/// Numerical certificate of the switching-function hypotheses on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ProfileReport {
    pub grid_start: f64,
    pub grid_points: usize,
    pub monotone: bool,
    pub min_derivative: f64,
    pub normalized: bool,
    pub bounded: bool,
    pub integral_f: f64,
    pub integral_abs_fpp: f64,
    pub integral_fp_squared: f64,
    pub passed: bool,
}

const CERT_TOL: f64 = 1e-12;

pub fn certify_profile(profile: &SwitchingProfile, grid: &[f64]) -> Result<ProfileReport> {
    if grid.len() < 3 {
        return Err(Error::InvalidArgument("certification grid needs at least three points".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) || grid[grid.len() - 1] > 0.0 {
        return Err(Error::InvalidArgument("certification grid must be increasing and within (-inf, 0]".into()));
    }
    let vals = grid.iter().map(|&t| profile.eval(t)).collect::<Result<Vec<_>>>()?;
    let min_derivative = vals.iter().map(|v| v.fp).fold(f64::INFINITY, f64::min);
    let mut monotone = min_derivative >= -CERT_TOL && vals.windows(2).all(|w| w[1].f >= w[0].f - CERT_TOL);
    if let SwitchingProfile::Tabulated(s) = profile {
        monotone &= s.f.windows(2).all(|w| w[1] >= w[0] - CERT_TOL);
    }
    let normalized = (profile.eval(0.0)?.f - 1.0).abs() <= CERT_TOL;
    let bounded = vals.iter().all(|v| v.f >= -CERT_TOL && v.f <= 1.0 + CERT_TOL);
    let integrate = |g: &dyn Fn(&ProfileValue) -> f64| {
        let ys: Vec<f64> = vals.iter().map(g).collect();
        simpson(grid, &ys)
    };
    let integral_f = integrate(&|v| v.f.abs());
    let integral_abs_fpp = integrate(&|v| v.fpp.abs());
    let integral_fp_squared = integrate(&|v| v.fp * v.fp);
    let finite = [integral_f, integral_abs_fpp, integral_fp_squared]
        .iter()
        .all(|x| x.is_finite());
    Ok(ProfileReport {
        grid_start: grid[0],
        grid_points: grid.len(),
        monotone,
        min_derivative,
        normalized,
        bounded,
        integral_f,
        integral_abs_fpp,
        integral_fp_squared,
        passed: monotone && normalized && bounded && finite,
    })
}

/// Coupling schedule `lambda(t) = from + (to - from) f(t)`.
///
/// The ordinary switching is `from = 0, to = 1`; multistep stages use
/// sub-intervals of `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub profile: SwitchingProfile,
    pub from: f64,
    pub to: f64,
}

impl Schedule {
    pub fn full(profile: SwitchingProfile) -> Self {
        Self { profile, from: 0.0, to: 1.0 }
    }

    pub fn stage(profile: SwitchingProfile, from: f64, to: f64) -> Self {
        Self { profile, from, to }
    }

    /// `(lambda(t), dlambda/dt)`.
    pub fn lambda(&self, t: f64) -> Result<(f64, f64)> {
        let v = self.profile.eval(t)?;
        let span = self.to - self.from;
        Ok((self.from + span * v.f, span * v.fp))
    }
}
