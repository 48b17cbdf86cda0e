//! Empirical ε-Nash check of the mean-field policy in the N-player game.
//!
//! Player `i` is paid `c·x^α` times the average of `ρ̃(x^j_∞)` over its
//! `N − 1` opponents. With every opponent on the equilibrium band those
//! limits are i.i.d. draws from the equilibrium stationary law, so the
//! average price deviates from `ρ*` by `O(1/√N)`. The experiment measures
//! that deviation and the payoff gain of a finite family of deviations.

use serde::Serialize;

use super::exec::Execution;
use super::path::{path_rng, InitialLaw, PayoffComponents, SimConfig};
use super::payoff::{payoff_components, price_payoffs};
use super::sampling::PriceSampler;
use super::stats::{mean_stderr, ols_slope};
use crate::equilibrium::EquilibriumSolution;
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::single_agent::{solve_thresholds, ThresholdPolicy};

/// Stream offset for opponent-price resamples.
const OPPONENT_STREAM_BASE: u64 = 1 << 61;

/// Default deviation family: the equilibrium band scaled by these factors.
pub const DEFAULT_DEVIATION_SCALES: [f64; 2] = [0.8, 1.25];

/// A named alternative policy for player `i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Deviation {
    pub label: String,
    pub policy: ThresholdPolicy,
}

impl Deviation {
    pub fn scaled(eq: &ThresholdPolicy, factor: f64) -> Self {
        Self {
            label: format!("scale_{factor}"),
            policy: eq.scaled(factor),
        }
    }

    pub fn defaults(eq: &ThresholdPolicy) -> Vec<Self> {
        DEFAULT_DEVIATION_SCALES
            .iter()
            .map(|&f| Self::scaled(eq, f))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NashGapConfig {
    /// Opponent resamples per `N` for the price-deviation statistic.
    pub resamples: usize,
    /// Player paths for payoff comparisons; `n_paths` is taken from here.
    pub sim: SimConfig,
    /// Also test best responses to `ρ* ± sd(ρ̄_N)`.
    pub perturbed_best_responses: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapEstimate {
    pub label: String,
    /// Mean payoff gain of the deviation over the equilibrium policy.
    pub gain: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NashGapRow {
    pub n: usize,
    /// `E|ρ̄_N − ρ*|`.
    pub deviation_stat: f64,
    pub deviation_stderr: f64,
    /// Standard deviation of `ρ̄_N` across resamples.
    pub price_sd: f64,
    /// Mean payoff of the equilibrium policy against the N-player price.
    pub equilibrium_payoff: f64,
    pub equilibrium_stderr: f64,
    /// Largest deviation gain, clipped below at zero.
    pub gap: f64,
    pub gap_stderr: f64,
    pub deviations: Vec<GapEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NashGapReport {
    pub n_values: Vec<usize>,
    pub rows: Vec<NashGapRow>,
    /// Slope of `ln deviation_stat` against `ln N`.
    pub fitted_slope: f64,
    pub rho_star: f64,
}

/// One line of the `gap ≤ C/√N + 3·stderr` check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateCheck {
    pub n: usize,
    pub gap: f64,
    pub bound: f64,
    pub ok: bool,
}

impl NashGapReport {
    pub fn deviation_stats(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.deviation_stat).collect()
    }

    /// Fits `C = gap·√N` on the smallest `N` and checks every row against
    /// `C/√N + 3·stderr`.
    pub fn gap_rate_check(&self) -> (f64, Vec<RateCheck>) {
        let Some(first) = self.rows.first() else {
            return (0.0, Vec::new());
        };
        let c = first.gap * (first.n as f64).sqrt();
        let checks = self
            .rows
            .iter()
            .map(|row| {
                let bound = c / (row.n as f64).sqrt() + 3.0 * row.gap_stderr;
                RateCheck {
                    n: row.n,
                    gap: row.gap,
                    bound,
                    ok: row.gap <= bound,
                }
            })
            .collect();
        (c, checks)
    }
}

/// Per-resample opponent averages `ρ̄_N`, reproducible from `(seed, N, k)`.
pub fn opponent_price_means(
    sampler: &PriceSampler,
    n_players: usize,
    resamples: usize,
    seed: u64,
    exec: Execution,
) -> Vec<f64> {
    let opponents = n_players.saturating_sub(1).max(1);
    // One stream per (N, resample) pair.
    let base = OPPONENT_STREAM_BASE + ((n_players as u64) << 32);
    exec.map(resamples, |k| {
        let mut rng = path_rng(seed, base + k as u64);
        sampler.mean_of(opponents, &mut rng)
    })
}

fn price_deviation(means: &[f64], rho_star: f64) -> (f64, f64, f64) {
    let abs: Vec<f64> = means.iter().map(|m| (m - rho_star).abs()).collect();
    let (d, se) = mean_stderr(&abs);
    let var = means
        .iter()
        .map(|m| (m - rho_star) * (m - rho_star))
        .sum::<f64>()
        / means.len() as f64;
    (d, se, var.sqrt())
}

pub fn nash_gap_experiment(
    params: &ModelParams,
    eq: &EquilibriumSolution,
    n_values: &[usize],
    deviations: &[Deviation],
    cfg: &NashGapConfig,
) -> Result<NashGapReport> {
    nash_gap_experiment_with(params, eq, n_values, deviations, cfg, Execution::default())
}

pub fn nash_gap_experiment_with(
    params: &ModelParams,
    eq: &EquilibriumSolution,
    n_values: &[usize],
    deviations: &[Deviation],
    cfg: &NashGapConfig,
    exec: Execution,
) -> Result<NashGapReport> {
    if n_values.iter().any(|&n| n < 2) {
        return Err(Error::InvalidConfig("every N must be at least 2".into()));
    }
    if cfg.resamples < 2 {
        return Err(Error::InvalidConfig(
            "need at least 2 opponent resamples".into(),
        ));
    }
    let sampler = PriceSampler::new(&eq.law_star, params);
    let mut sim = cfg.sim;
    // every policy must start from the same state
    if sim.initial_law == InitialLaw::BandMidpoint {
        let pol = eq.policy_star;
        sim.initial_law = InitialLaw::PointMass {
            x0: (pol.x_b * pol.x_s).sqrt(),
        };
    }
    let eq_comps = payoff_components(&eq.policy_star, params, &sim, exec)?;
    let fixed: Vec<(String, Vec<PayoffComponents>)> = deviations
        .iter()
        .map(|d| {
            Ok((
                d.label.clone(),
                payoff_components(&d.policy, params, &sim, exec)?,
            ))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let means = opponent_price_means(&sampler, n, cfg.resamples, sim.seed, exec);
        let (deviation_stat, deviation_stderr, price_sd) = price_deviation(&means, eq.rho_star);

        // Per-path opponent prices for the payoff comparison.
        let path_prices =
            opponent_price_means(&sampler, n, sim.n_paths, sim.seed ^ 0x9e37_79b9, exec);
        let eq_pay = price_payoffs(&eq_comps, &path_prices, params);
        let (equilibrium_payoff, equilibrium_stderr) = mean_stderr(&eq_pay);

        let mut candidates: Vec<(String, Vec<PayoffComponents>)> = Vec::new();
        if cfg.perturbed_best_responses && price_sd > 0.0 {
            for (tag, rho) in [
                ("br_minus", eq.rho_star - price_sd),
                ("br_plus", eq.rho_star + price_sd),
            ] {
                if rho > 0.0 {
                    let pol = solve_thresholds(rho, params, &eq.exps, eq.y0)?;
                    candidates.push((
                        tag.to_string(),
                        payoff_components(&pol, params, &sim, exec)?,
                    ));
                }
            }
        }

        let mut estimates = Vec::new();
        for (label, comps) in fixed.iter().chain(candidates.iter()) {
            let diffs: Vec<f64> = price_payoffs(comps, &path_prices, params)
                .iter()
                .zip(&eq_pay)
                .map(|(d, e)| d - e)
                .collect();
            let (gain, stderr) = mean_stderr(&diffs);
            estimates.push(GapEstimate {
                label: label.clone(),
                gain,
                stderr,
            });
        }
        let best = estimates.iter().max_by(|a, b| a.gain.total_cmp(&b.gain));
        let (gap, gap_stderr) = match best {
            Some(b) => (b.gain.max(0.0), b.stderr),
            None => (0.0, 0.0),
        };
        rows.push(NashGapRow {
            n,
            deviation_stat,
            deviation_stderr,
            price_sd,
            equilibrium_payoff,
            equilibrium_stderr,
            gap,
            gap_stderr,
            deviations: estimates,
        });
    }

    let lx: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.deviation_stat.ln()).collect();
    let fitted_slope = if rows.len() >= 2 {
        ols_slope(&lx, &ly)
    } else {
        f64::NAN
    };
    Ok(NashGapReport {
        n_values: n_values.to_vec(),
        rows,
        fitted_slope,
        rho_star: eq.rho_star,
    })
}
