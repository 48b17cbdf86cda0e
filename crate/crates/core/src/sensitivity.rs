//! One-parameter sweeps of the single-agent and mean-field solutions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::equilibrium::solve_equilibrium;
use crate::error::{Error, Result};
use crate::params::{compute_exponents, ModelParams};
use crate::sim::Execution;
use crate::single_agent::{solve_thresholds, solve_y0};

/// Fixed-point residual every MFG row must meet.
pub const ROW_FIXED_POINT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Lambda,
    Delta,
    Gamma,
    R,
    Alpha,
    /// Exogenous price of the single-agent problem; MFG columns stay empty.
    Rho,
}

impl SweepParam {
    pub const ALL: [SweepParam; 6] = [
        SweepParam::Lambda,
        SweepParam::Delta,
        SweepParam::Gamma,
        SweepParam::R,
        SweepParam::Alpha,
        SweepParam::Rho,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::Delta => "delta",
            SweepParam::Gamma => "gamma",
            SweepParam::R => "r",
            SweepParam::Alpha => "alpha",
            SweepParam::Rho => "rho",
        }
    }

    /// Default grids around the reference point.
    ///
    /// `delta = 1.2` and `alpha = 0.5` make `2δ/γ² = α` and are skipped
    /// by design; they stay in the grid so the gap is visible.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepParam::Lambda => linspace(0.1, 0.9, 17),
            SweepParam::Delta => linspace(0.2, 1.8, 9),
            SweepParam::Gamma => linspace(1.2, 3.0, 10),
            SweepParam::R => linspace(1.5, 6.0, 10),
            SweepParam::Alpha => linspace(0.1, 0.9, 9),
            SweepParam::Rho => linspace(0.25, 4.0, 16),
        }
    }

    fn apply(self, base: &ModelParams, value: f64) -> ModelParams {
        let mut p = *base;
        match self {
            SweepParam::Lambda => p.lambda = value,
            SweepParam::Delta => p.delta = value,
            SweepParam::Gamma => p.gamma = value,
            SweepParam::R => p.r = value,
            SweepParam::Alpha => p.alpha = value,
            SweepParam::Rho => {}
        }
        p
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepParam::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown sweep parameter '{s}' (expected lambda, delta, gamma, r, alpha or rho)"
                ))
            })
    }
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub parameter: SweepParam,
    pub grid: Vec<f64>,
    pub base: ModelParams,
    /// Exogenous price for the single-agent columns.
    pub rho_single: f64,
}

impl SweepSpec {
    pub fn new(parameter: SweepParam, base: ModelParams) -> Self {
        Self {
            parameter,
            grid: parameter.default_grid(),
            base,
            rho_single: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidConfig("sweep grid is empty".into()));
        }
        if !self.grid.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::InvalidConfig(
                "sweep grid must be strictly increasing".into(),
            ));
        }
        if !(self.rho_single > 0.0) {
            return Err(Error::InvalidConfig(
                "single-agent price must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub y0: f64,
    pub xb_single: f64,
    pub xs_single: f64,
    pub rho_star: Option<f64>,
    pub xb_mfg: Option<f64>,
    pub xs_mfg: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<f64>,
}

/// A grid point and either its row or the reason it was skipped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub outcome: std::result::Result<SweepRow, String>,
}

fn sweep_row(spec: &SweepSpec, value: f64) -> Result<SweepRow> {
    let params = spec.parameter.apply(&spec.base, value);
    params.check_ranges()?;
    let exps = compute_exponents(&params)?;
    let y0 = solve_y0(params.lambda, &exps, params.alpha)?;
    let rho_single = if spec.parameter == SweepParam::Rho {
        value
    } else {
        spec.rho_single
    };
    let single = solve_thresholds(rho_single, &params, &exps, y0)?;
    let mut row = SweepRow {
        value,
        y0,
        xb_single: single.x_b,
        xs_single: single.x_s,
        rho_star: None,
        xb_mfg: None,
        xs_mfg: None,
        k: None,
    };
    if spec.parameter != SweepParam::Rho {
        let eq = solve_equilibrium(&params)?;
        let res = eq.fixed_point_residual(&params);
        if !(res < ROW_FIXED_POINT_TOL) {
            return Err(Error::Inconsistent {
                what: "sweep row fixed point",
                gap: res,
            });
        }
        row.rho_star = Some(eq.rho_star);
        row.xb_mfg = Some(eq.policy_star.x_b);
        row.xs_mfg = Some(eq.policy_star.x_s);
        row.k = Some(eq.contraction_k);
    }
    Ok(row)
}

/// One point per grid value, in grid order. Failed points are kept with
/// their reason.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepPoint>> {
    run_sweep_with(spec, Execution::default())
}

pub fn run_sweep_with(spec: &SweepSpec, exec: Execution) -> Result<Vec<SweepPoint>> {
    spec.validate()?;
    Ok(exec.map(spec.grid.len(), |i| {
        let value = spec.grid[i];
        let outcome = sweep_row(spec, value).map_err(|e| {
            log::info!("sweep {}={value}: skipped ({e})", spec.parameter);
            e.to_string()
        });
        SweepPoint { value, outcome }
    }))
}

/// Rows that solved, in grid order.
pub fn solved_rows(points: &[SweepPoint]) -> Vec<SweepRow> {
    points
        .iter()
        .filter_map(|p| p.outcome.as_ref().ok().copied())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    Y0,
    XbSingle,
    XsSingle,
    RhoStar,
    XbMfg,
    XsMfg,
    K,
}

impl Column {
    pub const ALL: [Column; 7] = [
        Column::Y0,
        Column::XbSingle,
        Column::XsSingle,
        Column::RhoStar,
        Column::XbMfg,
        Column::XsMfg,
        Column::K,
    ];

    pub fn get(self, row: &SweepRow) -> Option<f64> {
        match self {
            Column::Y0 => Some(row.y0),
            Column::XbSingle => Some(row.xb_single),
            Column::XsSingle => Some(row.xs_single),
            Column::RhoStar => row.rho_star,
            Column::XbMfg => row.xb_mfg,
            Column::XsMfg => row.xs_mfg,
            Column::K => row.k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Increasing,
    Decreasing,
    /// Neither strictly increasing nor strictly decreasing.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Expectation {
    pub column: Column,
    pub trend: Trend,
}

impl Expectation {
    const fn new(column: Column, trend: Trend) -> Self {
        Self { column, trend }
    }

    /// Trends asserted for each swept parameter at the reference point.
    pub fn standard(parameter: SweepParam) -> Vec<Expectation> {
        use Column::*;
        use Trend::*;
        match parameter {
            SweepParam::Lambda => vec![Self::new(Y0, Increasing), Self::new(RhoStar, Decreasing)],
            SweepParam::Rho => vec![
                Self::new(XbSingle, Increasing),
                Self::new(XsSingle, Increasing),
            ],
            SweepParam::Delta => vec![Self::new(RhoStar, Decreasing)],
            SweepParam::Gamma => vec![Self::new(RhoStar, Increasing)],
            SweepParam::R => vec![Self::new(RhoStar, Increasing)],
            SweepParam::Alpha => vec![Self::new(RhoStar, Decreasing)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendCheck {
    pub expectation: Expectation,
    pub pass: bool,
    /// First adjacent pair `((value, column), (value, column))` that breaks
    /// the trend.
    pub violation: Option<((f64, f64), (f64, f64))>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub checks: Vec<TrendCheck>,
    /// Observed trend of every column, asserted or not.
    pub observed: Vec<(Column, Trend)>,
}

impl MonotonicityReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn series(rows: &[SweepRow], column: Column) -> Vec<(f64, f64)> {
    rows.iter()
        .filter_map(|r| column.get(r).map(|v| (r.value, v)))
        .collect()
}

pub fn observed_trend(rows: &[SweepRow], column: Column) -> Trend {
    let s = series(rows, column);
    if s.len() >= 2 && s.windows(2).all(|w| w[1].1 > w[0].1) {
        Trend::Increasing
    } else if s.len() >= 2 && s.windows(2).all(|w| w[1].1 < w[0].1) {
        Trend::Decreasing
    } else {
        Trend::Mixed
    }
}

pub fn monotonicity_report(
    rows: &[SweepRow],
    expectations: &[Expectation],
) -> Result<MonotonicityReport> {
    if rows.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "monotonicity needs at least 3 rows (got {})",
            rows.len()
        )));
    }
    let checks = expectations
        .iter()
        .map(|&expectation| {
            let s = series(rows, expectation.column);
            let broken = s.windows(2).find(|w| match expectation.trend {
                Trend::Increasing => !(w[1].1 > w[0].1),
                Trend::Decreasing => !(w[1].1 < w[0].1),
                Trend::Mixed => false,
            });
            let too_short = s.len() < 2;
            TrendCheck {
                expectation,
                pass: broken.is_none() && !too_short,
                violation: broken.map(|w| (w[0], w[1])),
            }
        })
        .collect();
    let observed = Column::ALL
        .iter()
        .filter(|c| rows.iter().any(|r| c.get(r).is_some()))
        .map(|&c| (c, observed_trend(rows, c)))
        .collect();
    Ok(MonotonicityReport { checks, observed })
}
