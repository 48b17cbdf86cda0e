//! Stationary law of the reflected process, the price map `Γ` and the
//! mean-field equilibrium.
//!
//! Under a band `[x_b, x_s]` the controlled process is a geometric Brownian
//! motion reflected at both ends. With `ν = 2δ/γ²` the scale density is
//! `s(x) ∝ x^{−ν}` and the speed density `m(x) ∝ x^{ν−2}`, so the limiting
//! law has density
//!
//! ```text
//! f(x) = (ν − 1)·x^{ν−2} / (x_s^{ν−1} − x_b^{ν−1}),   x ∈ [x_b, x_s].
//! ```
//!
//! The arbitrary reference point of the scale density cancels and is never
//! materialised. Numerator and denominator change sign together when
//! `ν < 1`, so the same expression serves both sides of `ν = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{compute_exponents, CharacteristicExponents, ModelParams, NONDEGENERACY_TOL};
use crate::single_agent::{
    solve_thresholds, solve_value_function, solve_y0, threshold_base, ThresholdPolicy,
    ValueFunction,
};

/// Stop criterion for the Picard iteration of `Γ`.
pub const PICARD_TOL: f64 = 1e-13;
/// Required agreement between the closed-form and iterated fixed points.
pub const FIXED_POINT_AGREEMENT: f64 = 1e-12;
const PICARD_MAX_ITER: usize = 10_000;

/// `(b^e − a^e) / e`, continuous through `e = 0`.
fn pow_span(a: f64, b: f64, e: f64) -> f64 {
    let (la, lb) = (a.ln(), b.ln());
    (e * la).exp() * (e * (lb - la)).exp_m1() / e
}

/// Limiting law of production under a threshold policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryLaw {
    pub policy: ThresholdPolicy,
    /// `ν = 2δ/γ²`.
    pub nu: f64,
    /// `(ν − 1) / (x_s^{ν−1} − x_b^{ν−1})`; positive for either sign of `ν − 1`.
    pub norm: f64,
}

pub fn stationary_law(policy: ThresholdPolicy, params: &ModelParams) -> Result<StationaryLaw> {
    if !(policy.x_b > 0.0 && policy.x_s.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "stationary law needs 0 < x_b < x_s < inf (got [{}, {}])",
            policy.x_b, policy.x_s
        )));
    }
    if !(policy.x_s > policy.x_b) {
        return Err(Error::Degenerate(format!(
            "x_b = x_s = {} collapses the stationary law to a point mass",
            policy.x_b
        )));
    }
    let nu = params.nu();
    if (nu - 1.0).abs() <= NONDEGENERACY_TOL {
        return Err(Error::Degenerate(format!(
            "2·delta/gamma² = {nu} is within {NONDEGENERACY_TOL:e} of 1"
        )));
    }
    let norm = 1.0 / pow_span(policy.x_b, policy.x_s, nu - 1.0);
    Ok(StationaryLaw { policy, nu, norm })
}

impl StationaryLaw {
    pub fn support(&self) -> (f64, f64) {
        (self.policy.x_b, self.policy.x_s)
    }

    /// Density; zero off the support.
    pub fn density(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            0.0
        } else {
            self.norm * x.powf(self.nu - 2.0)
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo {
            0.0
        } else if x >= hi {
            1.0
        } else {
            (self.norm * pow_span(lo, x, self.nu - 1.0)).clamp(0.0, 1.0)
        }
    }

    /// Inverse CDF for `u ∈ [0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        let (lo, hi) = self.support();
        let e = self.nu - 1.0;
        // lo^e + u·(hi^e − lo^e), then back through the power
        let t = lo.powf(e) + u * e / self.norm;
        t.powf(1.0 / e).clamp(lo, hi)
    }

    /// Closed-form `E[X^k]` under the law.
    pub fn moment(&self, k: f64) -> f64 {
        let (lo, hi) = self.support();
        self.norm * pow_span(lo, hi, self.nu - 1.0 + k)
    }

    /// Closed-form mass; 1 up to rounding.
    pub fn total_mass(&self) -> f64 {
        self.moment(0.0)
    }
}

/// Inverse demand `ρ̃(x) = a₀ − a₁·x^{1−α}`.
#[inline]
pub fn inverse_demand(x: f64, params: &ModelParams) -> f64 {
    params.a0 - params.a1 * x.powf(1.0 - params.alpha)
}

/// Expected inverse-demand price under the law.
pub fn mean_price(law: &StationaryLaw, params: &ModelParams) -> Result<f64> {
    if (law.nu - params.alpha).abs() <= NONDEGENERACY_TOL {
        return Err(Error::Degenerate(format!(
            "2·delta/gamma² = {} is within {NONDEGENERACY_TOL:e} of alpha = {}",
            law.nu, params.alpha
        )));
    }
    if params.a1 == 0.0 {
        return Ok(params.a0);
    }
    // (ν−1)/(ν−α)·(x_s^{ν−α} − x_b^{ν−α})/(x_s^{ν−1} − x_b^{ν−1})
    Ok(params.a0 - params.a1 * law.moment(1.0 - params.alpha))
}

/// `ρ`-free slope `K` of the affine price map `Γ(ρ) = a₀ − K·ρ`.
pub fn contraction_constant(params: &ModelParams, exps: &CharacteristicExponents, y0: f64) -> f64 {
    if params.a1 == 0.0 {
        return 0.0;
    }
    let nu = params.nu();
    let a = params.alpha;
    let g2 = params.gamma * params.gamma;
    let ratio = (2.0 * params.delta - g2) / (2.0 * params.delta - a * g2);
    let l = y0.ln();
    let span = ((nu - a) * l).exp_m1() / ((nu - 1.0) * l).exp_m1();
    let kb = threshold_base(params, exps, y0).powf(1.0 - a);
    params.a1 * ratio * span * kb
}

/// `Γ(ρ) = a₀ − K·ρ`.
pub fn gamma_map(
    rho: f64,
    params: &ModelParams,
    exps: &CharacteristicExponents,
    y0: f64,
) -> Result<f64> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidParam {
            name: "rho",
            constraint: "rho > 0",
            value: rho,
        });
    }
    params.check_solvable()?;
    Ok(params.a0 - contraction_constant(params, exps, y0) * rho)
}

/// `Γ` computed the long way: thresholds at `ρ`, their stationary law, then
/// the expected inverse-demand price.
pub fn gamma_map_via_law(
    rho: f64,
    params: &ModelParams,
    exps: &CharacteristicExponents,
    y0: f64,
) -> Result<f64> {
    let policy = solve_thresholds(rho, params, exps, y0)?;
    let law = stationary_law(policy, params)?;
    mean_price(&law, params)
}

/// Mean-field equilibrium at the fixed point of `Γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumSolution {
    pub rho_star: f64,
    /// Last Picard iterate, kept for the cross-check.
    pub rho_picard: f64,
    pub policy_star: ThresholdPolicy,
    pub value_star: ValueFunction,
    pub law_star: StationaryLaw,
    pub contraction_k: f64,
    pub iterations: usize,
    /// Largest observed ratio of successive Picard errors.
    pub picard_ratio: f64,
    pub exps: CharacteristicExponents,
    pub y0: f64,
}

impl EquilibriumSolution {
    /// `|Γ(ρ*) − ρ*|`.
    pub fn fixed_point_residual(&self, params: &ModelParams) -> f64 {
        let g = params.a0 - self.contraction_k * self.rho_star;
        (g - self.rho_star).abs()
    }

    /// The price recomputed from the equilibrium stationary law.
    pub fn consistency_price(&self, params: &ModelParams) -> Result<f64> {
        mean_price(&self.law_star, params)
    }
}

pub fn solve_equilibrium(params: &ModelParams) -> Result<EquilibriumSolution> {
    params.check_solvable()?;
    let exps = compute_exponents(params)?;
    let y0 = solve_y0(params.lambda, &exps, params.alpha)?;
    let k = contraction_constant(params, &exps, y0);
    if !(k < 1.0) {
        return Err(Error::NotContraction(k));
    }
    let closed = params.a0 / (1.0 + k);

    let mut rho = params.a0;
    let mut iterations = 0;
    let mut prev_err = (rho - closed).abs();
    let mut picard_ratio: f64 = 0.0;
    loop {
        let next = gamma_map(rho, params, &exps, y0)?;
        iterations += 1;
        let step = (next - rho).abs();
        let err = (next - closed).abs();
        // Ratios below the rounding floor carry no information.
        if prev_err > 1e-10 * closed.abs() {
            picard_ratio = picard_ratio.max(err / prev_err);
        }
        prev_err = err;
        rho = next;
        if step < PICARD_TOL || iterations >= PICARD_MAX_ITER {
            break;
        }
    }
    let gap = (rho - closed).abs();
    if !(gap <= FIXED_POINT_AGREEMENT * closed.abs().max(1.0)) {
        return Err(Error::Inconsistent {
            what: "closed-form and Picard fixed points",
            gap,
        });
    }

    let policy_star = solve_thresholds(closed, params, &exps, y0)?;
    let value_star = solve_value_function(closed, params, &exps, policy_star)?;
    let law_star = stationary_law(policy_star, params)?;
    Ok(EquilibriumSolution {
        rho_star: closed,
        rho_picard: rho,
        policy_star,
        value_star,
        law_star,
        contraction_k: k,
        iterations,
        picard_ratio,
        exps,
        y0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = if n % 2 == 1 { n + 1 } else { n };
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    /// Simpson in log coordinates: ∫ g(x) dx = ∫ g(eᵘ) eᵘ du.
    fn simpson_log(g: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        // exp(ln a) can round outside [a, b]
        simpson(|u| g(u.exp().clamp(a, b)) * u.exp(), a.ln(), b.ln(), n)
    }

    fn base_law() -> (ModelParams, StationaryLaw) {
        let p = ModelParams::default();
        let eq = solve_equilibrium(&p).unwrap();
        (p, eq.law_star)
    }

    #[test]
    fn cdf_endpoints_and_mass() {
        let (_, law) = base_law();
        assert_eq!(law.cdf(law.policy.x_b), 0.0);
        assert_eq!(law.cdf(law.policy.x_s), 1.0);
        assert!((law.total_mass() - 1.0).abs() < 1e-12);
        assert_eq!(law.nu, 0.5);
        assert!(law.norm > 0.0);
    }

    #[test]
    fn density_integrates_to_one_by_quadrature() {
        for delta in [1.0, 2.5] {
            // ν = 0.5 and ν = 1.25
            let p = ModelParams {
                delta,
                ..ModelParams::default()
            };
            let law = solve_equilibrium(&p).unwrap().law_star;
            let (lo, hi) = law.support();
            let mass = simpson_log(|x| law.density(x), lo, hi, 10_000);
            assert!((mass - 1.0).abs() < 1e-9, "ν = {}: {mass}", law.nu);
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        let (_, law) = base_law();
        for k in 0..=20 {
            let u = k as f64 / 20.0;
            assert!((law.cdf(law.quantile(u)) - u).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_price_with_flat_demand() {
        let p = ModelParams {
            a1: 0.0,
            ..ModelParams::default()
        };
        let law = stationary_law(ThresholdPolicy::new(0.1, 0.7).unwrap(), &p).unwrap();
        assert_eq!(mean_price(&law, &p).unwrap(), p.a0);
    }

    #[test]
    fn mean_price_matches_quadrature() {
        let (p, law) = base_law();
        let (lo, hi) = law.support();
        let quad = simpson_log(|x| inverse_demand(x, &p) * law.density(x), lo, hi, 10_000);
        let closed = mean_price(&law, &p).unwrap();
        assert!((quad - closed).abs() < 1e-9, "{quad} vs {closed}");
    }

    #[test]
    fn mean_price_printed_form() {
        // a₀ − a₁·(2δ−γ²)/(2δ−αγ²)·(x_s^{ν−α}−x_b^{ν−α})/(x_s^{ν−1}−x_b^{ν−1})
        let (p, law) = base_law();
        let (xb, xs) = law.support();
        let nu = p.nu();
        let g2 = p.gamma * p.gamma;
        let printed = p.a0
            - p.a1 * (2.0 * p.delta - g2) / (2.0 * p.delta - p.alpha * g2)
                * (xs.powf(nu - p.alpha) - xb.powf(nu - p.alpha))
                / (xs.powf(nu - 1.0) - xb.powf(nu - 1.0));
        assert!((printed - mean_price(&law, &p).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn gamma_map_is_affine_and_matches_law_route() {
        let p = ModelParams::default();
        let e = compute_exponents(&p).unwrap();
        let y0 = solve_y0(p.lambda, &e, p.alpha).unwrap();
        let g = |r: f64| gamma_map(r, &p, &e, y0).unwrap();
        assert!(((g(2.0) - g(1.0)) - (g(3.0) - g(2.0))).abs() < 1e-10);
        for k in 0..20 {
            let rho = 0.1 + 0.37 * k as f64;
            let direct = g(rho);
            let via = gamma_map_via_law(rho, &p, &e, y0).unwrap();
            assert!((direct - via).abs() < 1e-10, "rho = {rho}");
        }
    }

    #[test]
    fn contraction_constant_properties() {
        let p = ModelParams::default();
        let e = compute_exponents(&p).unwrap();
        let y0 = solve_y0(p.lambda, &e, p.alpha).unwrap();
        let k = contraction_constant(&p, &e, y0);
        assert!(k > 0.0 && k < 1.0);
        let p2 = ModelParams {
            a1: 2.0 * p.a1,
            ..p
        };
        assert!((contraction_constant(&p2, &e, y0) - 2.0 * k).abs() < 1e-12 * k);
        let p0 = ModelParams { a1: 0.0, ..p };
        assert_eq!(contraction_constant(&p0, &e, y0), 0.0);
    }

    #[test]
    fn equilibrium_fixed_point_and_consistency() {
        let p = ModelParams::default();
        let eq = solve_equilibrium(&p).unwrap();
        assert!(eq.fixed_point_residual(&p) < 1e-12);
        assert!((eq.rho_picard - eq.rho_star).abs() < 1e-12);
        assert!((eq.consistency_price(&p).unwrap() - eq.rho_star).abs() < 1e-10);
        assert!(eq.picard_ratio <= eq.contraction_k + 1e-6);
        let one = solve_thresholds(1.0, &p, &eq.exps, eq.y0).unwrap();
        let want = eq.rho_star.powf(1.0 / (1.0 - p.alpha));
        assert!((eq.policy_star.x_b / one.x_b - want).abs() < 1e-10);
    }

    #[test]
    fn no_interaction_reduces_to_single_agent() {
        let p = ModelParams {
            a1: 0.0,
            ..ModelParams::default()
        };
        let eq = solve_equilibrium(&p).unwrap();
        assert_eq!(eq.rho_star, p.a0);
        let single = crate::single_agent::solve_single_agent(p.a0, &p).unwrap();
        assert_eq!(eq.policy_star, single.policy);
    }

    #[test]
    fn rejects_non_contraction() {
        let p = ModelParams {
            a1: 10.0,
            ..ModelParams::default()
        };
        assert!(matches!(
            solve_equilibrium(&p),
            Err(Error::NotContraction(_))
        ));
    }

    #[test]
    fn rejects_point_mass_and_nu_one() {
        let p = ModelParams::default();
        let pol = ThresholdPolicy::new(0.3, 0.3).unwrap();
        assert!(stationary_law(pol, &p).is_err());
        let p1 = ModelParams { delta: 2.0, ..p };
        let pol = ThresholdPolicy::new(0.1, 0.3).unwrap();
        assert!(stationary_law(pol, &p1).is_err());
    }
}
