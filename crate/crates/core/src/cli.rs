//! `mfg-invest` subcommands.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::check::{run_check, CheckOptions, VERSION};
use crate::config::{env_config_path, load_config, ParamArgs, RunConfig};
use crate::equilibrium::{mean_price, solve_equilibrium, stationary_law};
use crate::error::Error;
use crate::params::{compute_exponents, ModelParams};
use crate::sensitivity::{
    linspace, monotonicity_report, run_sweep_with, solved_rows, Expectation, SweepParam, SweepSpec,
};
use crate::sim::nash::{nash_gap_experiment_with, Deviation, NashGapConfig};
use crate::sim::path::DEFAULT_TAIL;
use crate::sim::{simulate_ensemble, Execution, InitialLaw, SimConfig};
use crate::single_agent::{solve_single_agent, ThresholdPolicy};

pub const EXIT_INVARIANT: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "mfg-invest",
    version,
    about = "Capacity expansion and contraction under singular control: single-agent and mean-field solvers"
)]
pub struct Cli {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Run Monte Carlo work on one thread
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

/// `lo:hi:n`, inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        linspace(self.lo, self.hi, self.n)
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || format!("grid must look like lo:hi:n (got '{s}')");
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if !(lo.is_finite() && hi.is_finite() && (n == 1 || hi > lo) && n >= 1) {
            return Err(bad());
        }
        Ok(Grid { lo, hi, n })
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Thresholds and value function at a fixed price
    SolveSingle {
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        /// Also tabulate v, v', v'' and the QVI brackets on lo:hi:n
        #[arg(long, requires = "out")]
        grid: Option<Grid>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean-field equilibrium price and thresholds
    SolveMfg {
        /// Write (x, density, cdf) of the equilibrium law
        #[arg(long)]
        law_csv: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        law_points: usize,
    },
    /// One-parameter comparative statics
    Sweep {
        #[arg(long)]
        param: SweepParam,
        /// Default grid depends on the parameter
        #[arg(long)]
        grid: Option<Grid>,
        #[arg(long, default_value_t = 1.0)]
        single_rho: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reflected paths under a threshold band; one CSV row per path
    Simulate {
        #[arg(long, default_value_t = 1000)]
        paths: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Default: e^{-rT} = 1e-6
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, default_value_t = 0.5)]
        burn_in: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// Use the equilibrium band (default when --xb/--xs are absent)
        #[arg(long, conflicts_with_all = ["xb", "xs"])]
        policy_from_mfg: bool,
        #[arg(long, requires = "xs")]
        xb: Option<f64>,
        #[arg(long, requires = "xb")]
        xs: Option<f64>,
        /// Price in the running revenue (default: rho* or the band's consistent price)
        #[arg(long)]
        price: Option<f64>,
        /// Start every path at x0 instead of the band's geometric midpoint
        #[arg(long)]
        x0: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Opponent-price deviation and deviation gains against N players
    NashGap {
        #[arg(long = "N", value_delimiter = ',', default_value = "10,100,1000,10000")]
        n: Vec<usize>,
        /// Opponent resamples per N
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Player paths for the payoff comparison
        #[arg(long, default_value_t = 2000)]
        paths: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Skip best responses to the perturbed price
        #[arg(long)]
        thresholds_only: bool,
        /// JSON report path (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV of N, deviation_stat, gap, stderr
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run every invariant; exit 0 iff all pass
    Check {
        #[arg(long)]
        seed: Option<u64>,
        /// Skip the reduced simulation suite
        #[arg(long)]
        no_sim: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Why a command stopped.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Invariant(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Invariant(_) => EXIT_INVARIANT,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) | Failure::Invariant(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParam { .. } | Error::InvalidConfig(_) => Failure::Config(e.to_string()),
            _ => Failure::Invariant(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Config(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Config(format!("csv: {e}"))
    }
}

type CmdResult = Result<(), Failure>;

fn sink(out: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(value: &impl Serialize, out: Option<&Path>) -> CmdResult {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Config(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn params_line(p: &ModelParams) -> String {
    format!(
        "delta={} gamma={} r={} alpha={} lambda={} p={} c={} a0={} a1={}",
        p.delta, p.gamma, p.r, p.alpha, p.lambda, p.p, p.c, p.a0, p.a1
    )
}

/// CSV with `#` comment lines carrying the tool version and parameters.
struct CsvOut {
    inner: csv::Writer<Box<dyn Write>>,
}

impl CsvOut {
    fn create(
        out: Option<&Path>,
        run: &RunConfig,
        extra: &[String],
        header: &[&str],
    ) -> Result<Self, Failure> {
        let mut w = sink(out)?;
        writeln!(w, "# mfg-invest {VERSION}")?;
        writeln!(w, "# {}", params_line(&run.params))?;
        writeln!(w, "# seed={}", run.seed)?;
        for line in extra {
            writeln!(w, "# {line}")?;
        }
        let mut inner = csv::Writer::from_writer(w);
        inner.write_record(header)?;
        Ok(Self { inner })
    }

    fn row(&mut self, values: &[f64]) -> CmdResult {
        self.inner
            .write_record(values.iter().map(|v| v.to_string()))?;
        Ok(())
    }

    fn finish(mut self) -> CmdResult {
        self.inner.flush()?;
        Ok(())
    }
}

fn exec_of(cli: &Cli) -> Execution {
    if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn seed_flag(cmd: &Command) -> Option<u64> {
    match cmd {
        Command::Simulate { seed, .. }
        | Command::NashGap { seed, .. }
        | Command::Check { seed, .. } => *seed,
        _ => None,
    }
}

pub fn run(cli: &Cli) -> CmdResult {
    let run = load_config(&cli.params, seed_flag(&cli.command), env_config_path())
        .map_err(|e| Failure::Config(e.to_string()))?;
    let exec = exec_of(cli);
    match &cli.command {
        Command::SolveSingle { rho, grid, out } => solve_single(&run, *rho, *grid, out.as_deref()),
        Command::SolveMfg {
            law_csv,
            law_points,
        } => solve_mfg(&run, law_csv.as_deref(), *law_points),
        Command::Sweep {
            param,
            grid,
            single_rho,
            out,
        } => sweep(&run, *param, *grid, *single_rho, out.as_deref(), exec),
        Command::Simulate {
            paths,
            dt,
            horizon,
            burn_in,
            policy_from_mfg: _,
            xb,
            xs,
            price,
            x0,
            out,
            ..
        } => {
            let band = match (xb, xs) {
                (Some(b), Some(s)) => Some(ThresholdPolicy::new(*b, *s)?),
                _ => None,
            };
            let cfg = SimConfig {
                dt: *dt,
                horizon: horizon
                    .unwrap_or_else(|| SimConfig::horizon_for_tail(run.params.r, DEFAULT_TAIL)),
                burn_in: *burn_in,
                seed: run.seed,
                n_paths: *paths,
                initial_law: x0.map_or(InitialLaw::BandMidpoint, |x0| InitialLaw::PointMass { x0 }),
                price: 0.0,
            };
            simulate(&run, band, *price, cfg, out.as_deref(), exec)
        }
        Command::NashGap {
            n,
            samples,
            paths,
            dt,
            horizon,
            thresholds_only,
            out,
            csv,
            ..
        } => {
            let cfg = NashGapConfig {
                resamples: *samples,
                sim: SimConfig {
                    dt: *dt,
                    horizon: horizon
                        .unwrap_or_else(|| SimConfig::horizon_for_tail(run.params.r, DEFAULT_TAIL)),
                    seed: run.seed,
                    n_paths: *paths,
                    ..SimConfig::default()
                },
                perturbed_best_responses: !thresholds_only,
            };
            nash_gap(&run, n, &cfg, out.as_deref(), csv.as_deref(), exec)
        }
        Command::Check { no_sim, out, .. } => {
            let opts = CheckOptions {
                simulate: !no_sim,
                seed: run.seed,
                exec,
            };
            let report = run_check(&run.params, &opts);
            write_json(&report, out.as_deref())?;
            match &report.first_failure {
                None => Ok(()),
                Some(name) => {
                    let detail = report
                        .items
                        .iter()
                        .find(|i| &i.name == name)
                        .map(|i| i.detail.clone());
                    Err(Failure::Invariant(format!(
                        "check failed at {name}: {}",
                        detail.unwrap_or_default()
                    )))
                }
            }
        }
    }
}

fn solve_single(run: &RunConfig, rho: f64, grid: Option<Grid>, out: Option<&Path>) -> CmdResult {
    let vf = solve_single_agent(rho, &run.params)?;
    let y0 = vf.policy.ratio();
    write_json(
        &json!({
            "version": VERSION,
            "params": run.params,
            "rho": rho,
            "m": vf.exps.m,
            "n": vf.exps.n,
            "y0": y0,
            "x_b": vf.policy.x_b,
            "x_s": vf.policy.x_s,
            "A": vf.a,
            "B": vf.b,
            "H": vf.h,
            "C1": vf.c1,
            "C2": vf.c2,
        }),
        None,
    )?;
    if let Some(g) = grid {
        if !(g.lo > 0.0) {
            return Err(Failure::Config("value grid must start above 0".into()));
        }
        let mut w = CsvOut::create(
            out,
            run,
            &[format!("rho={rho}")],
            &["x", "v", "dv", "d2v", "ode", "buy", "sell"],
        )?;
        for x in g.points() {
            let h = vf.hjb_residual(x);
            w.row(&[
                x,
                vf.value(x),
                vf.derivative(x),
                vf.second_derivative(x),
                h.ode,
                h.buy,
                h.sell,
            ])?;
        }
        w.finish()?;
    }
    Ok(())
}

fn solve_mfg(run: &RunConfig, law_csv: Option<&Path>, points: usize) -> CmdResult {
    let eq = solve_equilibrium(&run.params)?;
    write_json(
        &json!({
            "version": VERSION,
            "params": run.params,
            "rho_star": eq.rho_star,
            "x_b_star": eq.policy_star.x_b,
            "x_s_star": eq.policy_star.x_s,
            "K": eq.contraction_k,
            "iterations": eq.iterations,
            "rho_picard": eq.rho_picard,
            "fixed_point_residual": eq.fixed_point_residual(&run.params),
            "m": eq.exps.m,
            "n": eq.exps.n,
            "y0": eq.y0,
        }),
        None,
    )?;
    if let Some(path) = law_csv {
        if points < 2 {
            return Err(Failure::Config("--law-points must be at least 2".into()));
        }
        let law = eq.law_star;
        let (lo, hi) = law.support();
        let mut w = CsvOut::create(
            Some(path),
            run,
            &[format!("rho_star={}", eq.rho_star)],
            &["x", "density", "cdf"],
        )?;
        for x in linspace(lo, hi, points) {
            let x = x.clamp(lo, hi);
            w.row(&[x, law.density(x), law.cdf(x)])?;
        }
        w.finish()?;
    }
    Ok(())
}

fn sweep(
    run: &RunConfig,
    param: SweepParam,
    grid: Option<Grid>,
    single_rho: f64,
    out: Option<&Path>,
    exec: Execution,
) -> CmdResult {
    let spec = SweepSpec {
        parameter: param,
        grid: grid.map_or_else(|| param.default_grid(), |g| g.points()),
        base: run.params,
        rho_single: single_rho,
    };
    let points = run_sweep_with(&spec, exec)?;
    let rows = solved_rows(&points);
    if rows.is_empty() {
        return Err(Failure::Invariant(format!(
            "no grid point of the {param} sweep could be solved"
        )));
    }
    let skipped: Vec<String> = points
        .iter()
        .filter_map(|p| {
            p.outcome
                .as_ref()
                .err()
                .map(|e| format!("skipped {param}={}: {e}", p.value))
        })
        .collect();
    let mut extra = vec![format!("sweep={param} single_rho={single_rho}")];
    extra.extend(skipped.iter().cloned());
    let mut w = CsvOut::create(
        out,
        run,
        &extra,
        &[
            "value",
            "y0",
            "xb_single",
            "xs_single",
            "rho_star",
            "xb_mfg",
            "xs_mfg",
            "K",
        ],
    )?;
    for r in &rows {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        w.inner.write_record([
            r.value.to_string(),
            r.y0.to_string(),
            r.xb_single.to_string(),
            r.xs_single.to_string(),
            opt(r.rho_star),
            opt(r.xb_mfg),
            opt(r.xs_mfg),
            opt(r.k),
        ])?;
    }
    w.finish()?;
    let mono = (rows.len() >= 3)
        .then(|| monotonicity_report(&rows, &Expectation::standard(param)).ok())
        .flatten();
    let summary = json!({
        "version": VERSION,
        "params": run.params,
        "parameter": param,
        "rows": rows.len(),
        "skipped": skipped,
        "monotonicity": mono,
    });
    if out.is_some() {
        write_json(&summary, None)?;
    } else {
        eprintln!("{}", serde_json::to_string(&summary).unwrap_or_default());
    }
    Ok(())
}

fn simulate(
    run: &RunConfig,
    band: Option<ThresholdPolicy>,
    price: Option<f64>,
    mut cfg: SimConfig,
    out: Option<&Path>,
    exec: Execution,
) -> CmdResult {
    let params = &run.params;
    let (policy, default_price, source) = match band {
        Some(b) => {
            compute_exponents(params)?;
            let law = stationary_law(b, params)?;
            (b, mean_price(&law, params)?, "band")
        }
        None => {
            let eq = solve_equilibrium(params)?;
            (eq.policy_star, eq.rho_star, "mfg")
        }
    };
    cfg.price = price.unwrap_or(default_price);
    let paths = simulate_ensemble(&policy, params, &cfg, exec, true)?;
    let mut w = CsvOut::create(
        out,
        run,
        &[
            format!("policy={source} x_b={} x_s={}", policy.x_b, policy.x_s),
            format!(
                "paths={} dt={} horizon={} burn_in={} price={}",
                cfg.n_paths, cfg.dt, cfg.horizon, cfg.burn_in, cfg.price
            ),
        ],
        &[
            "index",
            "x0_minus",
            "burn_in_state",
            "terminal",
            "mean_after_burn_in",
            "xi_plus",
            "xi_minus",
            "revenue_per_price",
            "buy_pv",
            "sell_pv",
            "discounted_payoff",
        ],
    )?;
    for s in &paths {
        w.row(&[
            s.index as f64,
            s.x0_minus,
            s.burn_in_state,
            s.terminal,
            s.mean_after_burn_in,
            s.xi_plus,
            s.xi_minus,
            s.components.revenue_per_price,
            s.components.buy_pv,
            s.components.sell_pv,
            s.discounted_payoff,
        ])?;
    }
    w.finish()
}

fn nash_gap(
    run: &RunConfig,
    n_values: &[usize],
    cfg: &NashGapConfig,
    out: Option<&Path>,
    csv_out: Option<&Path>,
    exec: Execution,
) -> CmdResult {
    let eq = solve_equilibrium(&run.params)?;
    let devs = Deviation::defaults(&eq.policy_star);
    let report = nash_gap_experiment_with(&run.params, &eq, n_values, &devs, cfg, exec)?;
    let (c, rate) = report.gap_rate_check();
    write_json(
        &json!({
            "version": VERSION,
            "params": run.params,
            "seed": run.seed,
            "config": cfg,
            "report": report,
            "gap_constant": c,
            "gap_rate_check": rate,
        }),
        out,
    )?;
    if let Some(path) = csv_out {
        let mut w = CsvOut::create(
            Some(path),
            run,
            &[],
            &["N", "deviation_stat", "gap", "stderr"],
        )?;
        for r in &report.rows {
            w.row(&[r.n as f64, r.deviation_stat, r.gap, r.gap_stderr])?;
        }
        w.finish()?;
    }
    Ok(())
}

/// Parses `args`, runs the command and maps the outcome to the exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
