//! Monte Carlo payoff of a threshold policy facing an opponent-driven price.

use serde::Serialize;

use super::exec::Execution;
use super::path::{simulate_ensemble, PayoffComponents, SimConfig, BARRIER_SHIFT};
use super::stats::mean_stderr;
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::single_agent::ThresholdPolicy;

/// Below this value of `r·T` the truncated discounted integral is flagged.
pub const MIN_DISCOUNT_HORIZON: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PayoffEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    /// Upper bound on the revenue dropped past the horizon.
    pub tail_bound: f64,
    /// Set when `r·T < 5`.
    pub truncation_warning: bool,
    /// Bias budget of the projected scheme: the control cash flows shifted
    /// by the relative overshoot `BARRIER_SHIFT·γ√dt`.
    pub discretization_allowance: f64,
}

/// Discounted payoff components of `cfg.n_paths` paths under `policy`.
///
/// Path `k` always uses stream `k` of `cfg.seed`, so two policies simulated
/// with the same config share their Brownian increments.
pub fn payoff_components(
    policy: &ThresholdPolicy,
    params: &ModelParams,
    cfg: &SimConfig,
    exec: Execution,
) -> Result<Vec<PayoffComponents>> {
    Ok(simulate_ensemble(policy, params, cfg, exec, true)?
        .into_iter()
        .map(|s| s.components)
        .collect())
}

/// Payoff of path `k` when the opponents' average price for that path is
/// `prices[k % prices.len()]`.
pub fn price_payoffs(
    components: &[PayoffComponents],
    prices: &[f64],
    params: &ModelParams,
) -> Vec<f64> {
    components
        .iter()
        .enumerate()
        .map(|(k, c)| c.payoff(prices[k % prices.len()], params))
        .collect()
}

fn tail_bound(
    policy: &ThresholdPolicy,
    prices: &[f64],
    params: &ModelParams,
    cfg: &SimConfig,
) -> f64 {
    let max_price = prices.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    (-params.r * cfg.horizon).exp() * params.c * max_price * policy.x_s.powf(params.alpha)
        / params.r
}

/// Monte Carlo estimate of the player's discounted payoff.
///
/// `opponent_prices` holds per-path draws of the opponents' average
/// inverse-demand price; path `k` uses entry `k` modulo the length.
pub fn estimate_payoff(
    policy: &ThresholdPolicy,
    opponent_prices: &[f64],
    params: &ModelParams,
    cfg: &SimConfig,
) -> Result<PayoffEstimate> {
    if opponent_prices.is_empty() {
        return Err(Error::InvalidConfig(
            "opponent price samples are empty".into(),
        ));
    }
    let truncation_warning = params.r * cfg.horizon < MIN_DISCOUNT_HORIZON;
    if truncation_warning {
        log::warn!(
            "r·T = {} < {MIN_DISCOUNT_HORIZON}: truncated discounted payoff is biased",
            params.r * cfg.horizon
        );
    }
    let paths = simulate_ensemble(policy, params, cfg, Execution::default(), true)?;
    let comps: Vec<PayoffComponents> = paths.iter().map(|s| s.components).collect();
    let (mean, stderr) = mean_stderr(&price_payoffs(&comps, opponent_prices, params));
    // The time-zero jump is exact and carries no scheme bias.
    let control_pv = paths
        .iter()
        .map(|s| {
            let (_, up, down) = policy.project(s.x0_minus);
            params.buy_cost() * (s.components.buy_pv - up)
                + params.sell_price() * (s.components.sell_pv - down)
        })
        .sum::<f64>()
        / paths.len() as f64;
    Ok(PayoffEstimate {
        discretization_allowance: BARRIER_SHIFT * params.gamma * cfg.dt.sqrt() * control_pv,
        mean,
        stderr,
        n_paths: comps.len(),
        tail_bound: tail_bound(policy, opponent_prices, params, cfg),
        truncation_warning,
    })
}
