//! Euler–Maruyama paths of production reflected into a threshold band.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::exec::Execution;
use crate::equilibrium::stationary_law;
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::single_agent::ThresholdPolicy;

/// Default tail tolerance: horizons are chosen so that `e^{−rT}` is below it.
pub const DEFAULT_TAIL: f64 = 1e-6;

/// `−ζ(1/2)/√(2π)`, the discrete-monitoring barrier shift in units of
/// `σ√dt`.
pub const BARRIER_SHIFT: f64 = 0.582_597_157_939_010_6;

/// Initial law `μ₀` of `x₀₋`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialLaw {
    /// Point mass at `√(x_b·x_s)` of whichever band is simulated.
    #[default]
    BandMidpoint,
    PointMass {
        x0: f64,
    },
    LogNormal {
        mu: f64,
        sigma: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
}

impl InitialLaw {
    fn check(&self) -> Result<()> {
        let ok = match *self {
            InitialLaw::BandMidpoint => true,
            InitialLaw::PointMass { x0 } => x0 >= 0.0 && x0.is_finite(),
            InitialLaw::LogNormal { mu, sigma } => {
                mu.is_finite() && sigma >= 0.0 && sigma.is_finite()
            }
            InitialLaw::Uniform { lo, hi } => lo >= 0.0 && hi >= lo && hi.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad initial law {self:?}")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, policy: &ThresholdPolicy, rng: &mut R) -> f64 {
        match *self {
            InitialLaw::BandMidpoint => (policy.x_b * policy.x_s).sqrt(),
            InitialLaw::PointMass { x0 } => x0,
            InitialLaw::LogNormal { mu, sigma } => LogNormal::new(mu, sigma)
                .expect("checked in SimConfig::validate")
                .sample(rng),
            InitialLaw::Uniform { lo, hi } => {
                if hi > lo {
                    rng.random_range(lo..hi)
                } else {
                    lo
                }
            }
        }
    }
}

/// Time grid, ensemble size, RNG seed and initial law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    /// Fraction of the horizon treated as transient.
    pub burn_in: f64,
    pub seed: u64,
    pub n_paths: usize,
    pub initial_law: InitialLaw,
    /// Price `ρ` used for the running revenue `cρx^α` of `discounted_payoff`.
    pub price: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 10.0,
            burn_in: 0.5,
            seed: 42,
            n_paths: 1000,
            initial_law: InitialLaw::BandMidpoint,
            price: 1.0,
        }
    }
}

impl SimConfig {
    /// Horizon `T` with `e^{−rT} = tail`.
    pub fn horizon_for_tail(r: f64, tail: f64) -> f64 {
        -tail.ln() / r
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.horizon.is_finite() && self.dt <= self.horizon / 100.0) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < dt <= horizon/100 (dt = {}, horizon = {})",
                self.dt, self.horizon
            )));
        }
        if self.n_paths < 1 {
            return Err(Error::InvalidConfig("n_paths must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::InvalidConfig(format!(
                "burn_in must lie in [0, 1) (got {})",
                self.burn_in
            )));
        }
        if !self.price.is_finite() {
            return Err(Error::InvalidConfig("price must be finite".into()));
        }
        self.initial_law.check()
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    fn burn_in_step(&self) -> usize {
        ((self.burn_in * self.n_steps() as f64).ceil() as usize).min(self.n_steps())
    }
}

/// Independent generator for path `index` under `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Discounted pieces of the payoff, kept apart so the revenue can be
/// re-priced without re-simulating.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PayoffComponents {
    /// `∫ e^{−rt} c·x_t^α dt`, revenue per unit price.
    pub revenue_per_price: f64,
    /// `∫ e^{−rt} dξ⁺`.
    pub buy_pv: f64,
    /// `∫ e^{−rt} dξ⁻`.
    pub sell_pv: f64,
}

impl PayoffComponents {
    pub fn payoff(&self, price: f64, params: &ModelParams) -> f64 {
        price * self.revenue_per_price - params.buy_cost() * self.buy_pv
            + params.sell_price() * self.sell_pv
    }
}

/// Full record of one simulated path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathResult {
    pub x0_minus: f64,
    pub times: Vec<f64>,
    /// States after the control acted; `states[0]` is `x₀`.
    pub states: Vec<f64>,
    /// Cumulative `ξ⁺` including the initial jump.
    pub xi_plus: Vec<f64>,
    pub xi_minus: Vec<f64>,
    pub components: PayoffComponents,
    pub discounted_payoff: f64,
}

/// Per-path summary used for ensembles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathSummary {
    pub index: u64,
    pub x0_minus: f64,
    /// First state at or after the burn-in time.
    pub burn_in_state: f64,
    pub terminal: f64,
    /// Time average of the state after burn-in.
    pub mean_after_burn_in: f64,
    pub xi_plus: f64,
    pub xi_minus: f64,
    pub components: PayoffComponents,
    pub discounted_payoff: f64,
}

fn check_sim_params(params: &ModelParams) -> Result<()> {
    let ok = params.delta.is_finite()
        && params.gamma >= 0.0
        && params.gamma.is_finite()
        && params.r > 0.0
        && params.alpha > 0.0
        && params.alpha < 1.0;
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "simulation needs finite delta, gamma >= 0, r > 0, alpha in (0,1): {params:?}"
        )))
    }
}

struct Kernel<'a> {
    policy: &'a ThresholdPolicy,
    params: &'a ModelParams,
    cfg: &'a SimConfig,
    payoff: bool,
}

impl Kernel<'_> {
    /// Runs one path, calling `record(step, x, ξ⁺, ξ⁻)` after every
    /// projection including step 0.
    fn run(&self, index: u64, mut record: impl FnMut(usize, f64, f64, f64)) -> Result<PathSummary> {
        let Kernel {
            policy,
            params,
            cfg,
            payoff,
        } = *self;
        let mut rng = path_rng(cfg.seed, index);
        let x0_minus = cfg.initial_law.sample(policy, &mut rng);
        let (mut x, mut xi_p, mut xi_m) = policy.project(x0_minus);

        let steps = cfg.n_steps();
        let burn = cfg.burn_in_step();
        let dt = cfg.dt;
        let drift = 1.0 + params.delta * dt;
        let vol = params.gamma * dt.sqrt();
        let step_discount = (-params.r * dt).exp();
        let rev_scale = params.c * dt;

        let mut comp = PayoffComponents {
            buy_pv: xi_p,
            sell_pv: xi_m,
            ..Default::default()
        };
        let mut disc = 1.0;
        let mut burn_state = x;
        let mut occupation = 0.0;
        record(0, x, xi_p, xi_m);

        for k in 0..steps {
            if k == burn {
                burn_state = x;
            }
            if k >= burn {
                occupation += x;
            }
            if payoff {
                comp.revenue_per_price += disc * rev_scale * x.powf(params.alpha);
            }
            let z: f64 = rng.sample(StandardNormal);
            let pre = x * (drift + vol * z);
            if !(pre > 0.0) {
                return Err(Error::NonPositiveState { step: k + 1 });
            }
            let (next, up, down) = policy.project(pre);
            disc *= step_discount;
            if up > 0.0 {
                xi_p += up;
                comp.buy_pv += disc * up;
            } else if down > 0.0 {
                xi_m += down;
                comp.sell_pv += disc * down;
            }
            x = next;
            record(k + 1, x, xi_p, xi_m);
        }
        if burn >= steps {
            burn_state = x;
        }
        let tail = (steps - burn.min(steps)).max(1) as f64;
        Ok(PathSummary {
            index,
            x0_minus,
            burn_in_state: burn_state,
            terminal: x,
            mean_after_burn_in: if steps > burn { occupation / tail } else { x },
            xi_plus: xi_p,
            xi_minus: xi_m,
            components: comp,
            discounted_payoff: comp.payoff(cfg.price, params),
        })
    }
}

/// K-S distance between the stationary law of `policy` and the law on the
/// band widened by the discrete-monitoring shift `BARRIER_SHIFT·γ√dt` in log
/// space. Predicts most of the bias of projected Euler paths.
pub fn projection_ks_bias(policy: &ThresholdPolicy, params: &ModelParams, dt: f64) -> Result<f64> {
    let law = stationary_law(*policy, params)?;
    let s = (BARRIER_SHIFT * params.gamma * dt.sqrt()).exp();
    let wide = stationary_law(
        ThresholdPolicy::new(policy.x_b / s, policy.x_s * s)?,
        params,
    )?;
    let (lo, hi) = law.support();
    let n = 4096;
    let ratio = (hi / lo).ln() / n as f64;
    Ok((0..=n)
        .map(|i| {
            let x = (lo * (ratio * i as f64).exp()).clamp(lo, hi);
            (law.cdf(x) - wide.cdf(x)).abs()
        })
        .fold(0.0, f64::max))
}

/// One path (stream 0 of `cfg.seed`) with the full trajectory stored.
pub fn simulate_reflected_path(
    policy: &ThresholdPolicy,
    params: &ModelParams,
    cfg: &SimConfig,
) -> Result<PathResult> {
    simulate_indexed_path(policy, params, cfg, 0)
}

/// Path number `index` of the ensemble, with the full trajectory stored.
pub fn simulate_indexed_path(
    policy: &ThresholdPolicy,
    params: &ModelParams,
    cfg: &SimConfig,
    index: u64,
) -> Result<PathResult> {
    cfg.validate()?;
    check_sim_params(params)?;
    let steps = cfg.n_steps();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut xi_plus = Vec::with_capacity(steps + 1);
    let mut xi_minus = Vec::with_capacity(steps + 1);
    let kernel = Kernel {
        policy,
        params,
        cfg,
        payoff: true,
    };
    let summary = kernel.run(index, |k, x, p, m| {
        times.push(k as f64 * cfg.dt);
        states.push(x);
        xi_plus.push(p);
        xi_minus.push(m);
    })?;
    Ok(PathResult {
        x0_minus: summary.x0_minus,
        times,
        states,
        xi_plus,
        xi_minus,
        components: summary.components,
        discounted_payoff: summary.discounted_payoff,
    })
}

/// Summaries of `cfg.n_paths` independent paths, in index order.
///
/// With `track_payoff = false` the discounted revenue is skipped, which
/// saves one `powf` per step.
pub fn simulate_ensemble(
    policy: &ThresholdPolicy,
    params: &ModelParams,
    cfg: &SimConfig,
    exec: Execution,
    track_payoff: bool,
) -> Result<Vec<PathSummary>> {
    cfg.validate()?;
    check_sim_params(params)?;
    let kernel = Kernel {
        policy,
        params,
        cfg,
        payoff: track_payoff,
    };
    exec.map(cfg.n_paths, |i| kernel.run(i as u64, |_, _, _, _| {}))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band() -> ThresholdPolicy {
        ThresholdPolicy::new(0.5, 2.0).unwrap()
    }

    fn cfg() -> SimConfig {
        SimConfig {
            dt: 1e-3,
            horizon: 2.0,
            n_paths: 16,
            ..SimConfig::default()
        }
    }

    #[test]
    fn deterministic_drift_sticks_at_upper_threshold() {
        let params = ModelParams {
            gamma: 0.0,
            ..ModelParams::default()
        };
        let cfg = SimConfig {
            initial_law: InitialLaw::PointMass { x0: 1.0 },
            ..cfg()
        };
        let path = simulate_reflected_path(&band(), &params, &cfg).unwrap();
        assert_eq!(path.xi_plus.last().copied(), Some(0.0));
        // ln 2 / δ ≈ 0.693 to reach x_s, then x_s·δ per unit time.
        let hit = path.states.iter().position(|&x| x == 2.0).unwrap();
        let t_hit = path.times[hit];
        assert!((t_hit - 2f64.ln()).abs() < 2e-3, "{t_hit}");
        let after = path.xi_minus.last().unwrap() - path.xi_minus[hit];
        let want = 2.0 * params.delta * (2.0 - t_hit);
        assert!((after - want).abs() < 1e-2 * want, "{after} vs {want}");
        assert!(path.states[hit..].iter().all(|&x| x == 2.0));
    }

    #[test]
    fn initial_jump_up() {
        let pol = band();
        let cfg = SimConfig {
            initial_law: InitialLaw::PointMass { x0: pol.x_b / 2.0 },
            ..cfg()
        };
        let path = simulate_reflected_path(&pol, &ModelParams::default(), &cfg).unwrap();
        assert_eq!(path.xi_plus[0], pol.x_b - pol.x_b / 2.0);
        assert_eq!(path.xi_minus[0], 0.0);
        assert_eq!(path.states[0], pol.x_b);
    }

    #[test]
    fn confinement_and_minimal_controls() {
        let pol = band();
        let path = simulate_indexed_path(&pol, &ModelParams::default(), &cfg(), 3).unwrap();
        for w in path.states.windows(1) {
            assert!(w[0] >= pol.x_b - 1e-12 && w[0] <= pol.x_s + 1e-12);
        }
        for k in 1..path.states.len() {
            let dp = path.xi_plus[k] - path.xi_plus[k - 1];
            let dm = path.xi_minus[k] - path.xi_minus[k - 1];
            assert!(dp >= 0.0 && dm >= 0.0);
            assert_eq!(dp * dm, 0.0);
            // Strictly inside the band means the step was uncontrolled.
            if path.states[k] > pol.x_b && path.states[k] < pol.x_s {
                assert_eq!(dp + dm, 0.0);
            }
        }
    }

    #[test]
    fn same_seed_same_path() {
        let a = simulate_indexed_path(&band(), &ModelParams::default(), &cfg(), 7).unwrap();
        let b = simulate_indexed_path(&band(), &ModelParams::default(), &cfg(), 7).unwrap();
        assert_eq!(a, b);
        let c = simulate_indexed_path(&band(), &ModelParams::default(), &cfg(), 8).unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn ensemble_matches_single_paths_in_both_modes() {
        let p = ModelParams::default();
        let seq = simulate_ensemble(&band(), &p, &cfg(), Execution::Sequential, true).unwrap();
        let par = simulate_ensemble(&band(), &p, &cfg(), Execution::Parallel, true).unwrap();
        assert_eq!(seq, par);
        let single = simulate_indexed_path(&band(), &p, &cfg(), 5).unwrap();
        assert_eq!(seq[5].terminal, *single.states.last().unwrap());
        assert_eq!(seq[5].discounted_payoff, single.discounted_payoff);
    }

    #[test]
    fn config_validation() {
        let bad_dt = SimConfig {
            dt: 0.1,
            horizon: 1.0,
            ..SimConfig::default()
        };
        assert!(bad_dt.validate().is_err());
        let no_paths = SimConfig {
            n_paths: 0,
            ..SimConfig::default()
        };
        assert!(no_paths.validate().is_err());
        let burn = SimConfig {
            burn_in: 1.0,
            ..SimConfig::default()
        };
        assert!(burn.validate().is_err());
        assert!(SimConfig::default().validate().is_ok());
        assert!((SimConfig::horizon_for_tail(3.0, 1e-6) * 3.0 - 1e6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn initial_laws_stay_in_range() {
        let pol = band();
        let mut rng = path_rng(1, 0);
        let ln = InitialLaw::LogNormal {
            mu: 0.0,
            sigma: 0.5,
        };
        let un = InitialLaw::Uniform { lo: 0.1, hi: 3.0 };
        for _ in 0..100 {
            assert!(ln.sample(&pol, &mut rng) > 0.0);
            let u = un.sample(&pol, &mut rng);
            assert!((0.1..3.0).contains(&u));
        }
        assert_eq!(InitialLaw::BandMidpoint.sample(&pol, &mut rng), 1.0);
    }
}
