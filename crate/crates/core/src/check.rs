//! The `check` pipeline: every solver and simulator invariant at one
//! parameter point, stopping at the first failure.

use serde::Serialize;

use crate::equilibrium::{gamma_map, gamma_map_via_law, solve_equilibrium, FIXED_POINT_AGREEMENT};
use crate::params::{compute_exponents, validate, CharacteristicExponents, ModelParams};
use crate::sim::path::projection_ks_bias;
use crate::sim::sampling::sample_stationary_with;
use crate::sim::stats::{ks_distance, mean_stderr};
use crate::sim::{simulate_ensemble, Execution, SimConfig};
use crate::single_agent::{solve_thresholds, solve_value_function, solve_y0, Region};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Relative tolerance of the QVI brackets on the check grid.
pub const HJB_TOL: f64 = 1e-8;
/// Smooth-fit tolerance, relative.
pub const SMOOTH_FIT_TOL: f64 = 1e-8;
/// Points on the log grid `[x_b/10, 10·x_s]`.
pub const HJB_GRID: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub version: &'static str,
    pub params: ModelParams,
    pub seed: u64,
    pub passed: bool,
    pub first_failure: Option<String>,
    pub warnings: Vec<String>,
    pub items: Vec<CheckItem>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    /// Run the reduced simulation suite.
    pub simulate: bool,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            simulate: true,
            seed: 42,
            exec: Execution::default(),
        }
    }
}

struct Run {
    items: Vec<CheckItem>,
}

impl Run {
    /// Records an item; returns whether it passed.
    fn item(&mut self, name: &str, pass: bool, detail: impl Into<String>) -> bool {
        self.items.push(CheckItem {
            name: name.into(),
            pass,
            detail: detail.into(),
        });
        pass
    }

    fn result<T>(&mut self, name: &str, r: crate::Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.item(name, false, e.to_string());
                None
            }
        }
    }
}

pub fn run_check(params: &ModelParams, opts: &CheckOptions) -> CheckReport {
    let mut run = Run { items: Vec::new() };
    let mut warnings = Vec::new();
    let _ = stages(params, opts, &mut run, &mut warnings);
    let first_failure = run.items.iter().find(|i| !i.pass).map(|i| i.name.clone());
    CheckReport {
        version: VERSION,
        params: *params,
        seed: opts.seed,
        passed: first_failure.is_none(),
        first_failure,
        warnings,
        items: run.items,
    }
}

fn quadratic_residual(params: &ModelParams, e: &CharacteristicExponents) -> f64 {
    CharacteristicExponents::quadratic(params, e.m)
        .abs()
        .max(CharacteristicExponents::quadratic(params, e.n).abs())
}

// `None` ends the pipeline; the failing item is already recorded.
fn stages(
    params: &ModelParams,
    opts: &CheckOptions,
    run: &mut Run,
    warnings: &mut Vec<String>,
) -> Option<()> {
    // Validity
    let report = validate(params);
    let ranges = params.check_ranges();
    if !run.item(
        "parameter ranges",
        ranges.is_ok(),
        ranges.err().map(|e| e.to_string()).unwrap_or_default(),
    ) {
        return None;
    }
    if !report.strict_ok {
        warnings.extend(
            report
                .messages
                .iter()
                .filter(|m| m.starts_with("warning"))
                .cloned(),
        );
    }
    let degen: Vec<_> = report
        .messages
        .iter()
        .filter(|m| m.contains("non-degeneracy"))
        .cloned()
        .collect();
    if !run.item("non-degeneracy", report.nondegenerate_ok, degen.join("; ")) {
        return None;
    }

    // Single agent
    let exps = run.result("characteristic exponents", compute_exponents(params))?;
    let q = quadratic_residual(params, &exps);
    run.item(
        "characteristic exponents",
        q < 1e-12 * params.r.max(1.0),
        format!("m = {}, n = {}, residual {q:e}", exps.m, exps.n),
    )
    .then_some(())?;
    let y0 = run.result("band ratio", solve_y0(params.lambda, &exps, params.alpha))?;
    let f = crate::single_agent::f_ratio(y0, &exps, params.alpha).unwrap_or(f64::NAN);
    let res = (f - (1.0 - params.lambda)).abs();
    run.item(
        "band ratio",
        res < 1e-12,
        format!("y0 = {y0}, residual {res:e}"),
    )
    .then_some(())?;

    let pol1 = run.result("thresholds", solve_thresholds(1.0, params, &exps, y0))?;
    let vf = run.result(
        "value coefficients",
        solve_value_function(1.0, params, &exps, pol1),
    )?;
    let sf = vf
        .smooth_fit_residuals()
        .iter()
        .fold(0.0f64, |a, b| a.max(b.abs()));
    run.item(
        "smooth fit",
        sf < SMOOTH_FIT_TOL,
        format!("max relative residual {sf:e}"),
    )
    .then_some(())?;

    let (worst_active, worst_other) = hjb_sweep(&vf);
    run.item(
        "HJB/QVI",
        worst_active < HJB_TOL && worst_other > -HJB_TOL,
        format!("active bracket {worst_active:e}, inactive minimum {worst_other:e}"),
    )
    .then_some(())?;

    let mut scale_err = 0.0f64;
    for rho in [0.25, 4.0] {
        let pol = run.result("scaling law", solve_thresholds(rho, params, &exps, y0))?;
        let want = pol1.x_b * rho.powf(1.0 / (1.0 - params.alpha));
        scale_err = scale_err.max((pol.x_b - want).abs() / want);
    }
    run.item(
        "scaling law",
        scale_err < 1e-12,
        format!("relative error {scale_err:e}"),
    )
    .then_some(())?;

    // Equilibrium
    let k = crate::equilibrium::contraction_constant(params, &exps, y0);
    run.item("contraction", k < 1.0, format!("K = {k}"))
        .then_some(())?;
    let eq = run.result("equilibrium", solve_equilibrium(params))?;
    let fp = eq.fixed_point_residual(params);
    let picard = (eq.rho_star - eq.rho_picard).abs();
    run.item(
        "fixed point",
        fp < 1e-12 && picard < FIXED_POINT_AGREEMENT,
        format!(
            "rho* = {}, |Γ(ρ*) − ρ*| = {fp:e}, Picard gap {picard:e}",
            eq.rho_star
        ),
    )
    .then_some(())?;
    let mass = (eq.law_star.total_mass() - 1.0).abs();
    run.item(
        "stationary mass",
        mass < 1e-12,
        format!("|mass − 1| = {mass:e}"),
    )
    .then_some(())?;
    let mut route = 0.0f64;
    for rho in [0.5 * eq.rho_star, eq.rho_star, 2.0 * eq.rho_star] {
        let a = run.result("price map routes", gamma_map(rho, params, &exps, y0))?;
        let b = run.result(
            "price map routes",
            gamma_map_via_law(rho, params, &exps, y0),
        )?;
        route = route.max((a - b).abs() / a.abs().max(1.0));
    }
    run.item(
        "price map routes",
        route < 1e-10,
        format!("max gap {route:e}"),
    )
    .then_some(())?;

    if opts.simulate {
        simulation_stage(params, &eq, opts, run)?;
    }
    Some(())
}

/// Largest active-bracket magnitude and smallest inactive bracket on the
/// log grid, both relative.
fn hjb_sweep(vf: &crate::single_agent::ValueFunction) -> (f64, f64) {
    let lo = vf.policy.x_b / 10.0;
    let hi = vf.policy.x_s * 10.0;
    let step = (hi / lo).ln() / (HJB_GRID - 1) as f64;
    let mut active = 0.0f64;
    let mut other = f64::INFINITY;
    for i in 0..HJB_GRID {
        let x = lo * (step * i as f64).exp();
        let (ode, buy, sell) = vf.hjb_residual(x).relative(vf.params.p);
        let (act, rest) = match vf.region(x) {
            Region::Expand => (buy, ode.min(sell)),
            Region::Continue => (ode, buy.min(sell)),
            Region::Contract => (sell, ode.min(buy)),
        };
        active = active.max(act.abs());
        other = other.min(rest);
    }
    (active, other)
}

/// Sample counts of the reduced simulation suite.
const CHECK_DRAWS: usize = 20_000;
const CHECK_PATHS: usize = 4_000;
const CHECK_DT: f64 = 1e-3;
const CHECK_HORIZON: f64 = 3.0;

fn simulation_stage(
    params: &ModelParams,
    eq: &crate::equilibrium::EquilibriumSolution,
    opts: &CheckOptions,
    run: &mut Run,
) -> Option<()> {
    let law = &eq.law_star;
    let mut xs = sample_stationary_with(law, CHECK_DRAWS, opts.seed, opts.exec);
    let pw: Vec<f64> = xs.iter().map(|x| x.powf(1.0 - params.alpha)).collect();
    let (m, se) = mean_stderr(&pw);
    let want = law.moment(1.0 - params.alpha);
    let d = ks_distance(&mut xs, |x| law.cdf(x));
    let ks_tol = 1.5 * 1.36 / (CHECK_DRAWS as f64).sqrt();
    run.item(
        "stationary sampling",
        (m - want).abs() < 4.0 * se && d < ks_tol,
        format!("moment {m} vs {want} (se {se:e}), K-S {d:.4} < {ks_tol:.4}"),
    )
    .then_some(())?;

    let cfg = SimConfig {
        dt: CHECK_DT,
        horizon: CHECK_HORIZON,
        n_paths: CHECK_PATHS,
        seed: opts.seed,
        price: eq.rho_star,
        ..SimConfig::default()
    };
    let paths = run.result(
        "reflected paths",
        simulate_ensemble(&eq.policy_star, params, &cfg, opts.exec, false),
    )?;
    let (xb, xs_) = (eq.policy_star.x_b, eq.policy_star.x_s);
    let confined = paths.iter().all(|p| {
        p.terminal >= xb - 1e-12
            && p.terminal <= xs_ + 1e-12
            && p.xi_plus >= 0.0
            && p.xi_minus >= 0.0
    });
    run.item(
        "reflected paths",
        confined,
        format!("{} paths inside [{xb}, {xs_}]", paths.len()),
    )
    .then_some(())?;
    let mut term: Vec<f64> = paths.iter().map(|p| p.terminal).collect();
    let d = ks_distance(&mut term, |x| law.cdf(x));
    let bias = run.result(
        "path stationarity",
        projection_ks_bias(&eq.policy_star, params, CHECK_DT),
    )?;
    let tol = 1.25 * bias + 1.63 / (CHECK_PATHS as f64).sqrt();
    run.item(
        "path stationarity",
        d < tol,
        format!("K-S {d:.4} < {tol:.4}"),
    )
    .then_some(())
}
