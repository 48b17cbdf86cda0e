//! Model constants, standing-assumption checks and the characteristic
//! exponents of the HJB ODE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum distance between `2δ/γ²` and the excluded values `{α, 1}`.
///
/// The stationary density normaliser and the price map have removable
/// singularities at those points.
pub const NONDEGENERACY_TOL: f64 = 1e-9;

/// Exogenous constants of the investment model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Drift of production.
    pub delta: f64,
    /// Volatility of production.
    pub gamma: f64,
    /// Discount rate.
    pub r: f64,
    /// Cobb-Douglas elasticity.
    pub alpha: f64,
    /// Irreversibility: contraction refunds `p(1 - lambda)` per unit.
    pub lambda: f64,
    /// Unit expansion cost.
    pub p: f64,
    /// Revenue scale.
    pub c: f64,
    /// Inverse-demand intercept.
    pub a0: f64,
    /// Inverse-demand slope.
    pub a1: f64,
}

impl Default for ModelParams {
    /// The reference parameter point used throughout the sensitivity study.
    fn default() -> Self {
        Self {
            delta: 1.0,
            gamma: 2.0,
            r: 3.0,
            alpha: 0.6,
            lambda: 0.6,
            p: 0.5,
            c: 1.0,
            a0: 1.0,
            a1: 0.1,
        }
    }
}

impl ModelParams {
    /// `ν = 2δ/γ²`, the exponent that drives the stationary law.
    pub fn nu(&self) -> f64 {
        2.0 * self.delta / (self.gamma * self.gamma)
    }

    /// Unit cost of expanding production.
    pub fn buy_cost(&self) -> f64 {
        self.p
    }

    /// Unit refund for contracting production.
    pub fn sell_price(&self) -> f64 {
        self.p * (1.0 - self.lambda)
    }

    /// Field-by-field range check. Returns the first violated invariant.
    pub fn check_ranges(&self) -> Result<()> {
        let fields = [
            ("delta", self.delta),
            ("gamma", self.gamma),
            ("r", self.r),
            ("alpha", self.alpha),
            ("lambda", self.lambda),
            ("p", self.p),
            ("c", self.c),
            ("a0", self.a0),
            ("a1", self.a1),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(Error::InvalidParam {
                    name,
                    constraint: "finite",
                    value,
                });
            }
        }
        let positive = [
            ("delta", self.delta, "delta > 0"),
            ("gamma", self.gamma, "gamma > 0"),
            ("r", self.r, "r > 0"),
            ("p", self.p, "p > 0"),
            ("c", self.c, "c > 0"),
            ("a0", self.a0, "a0 > 0"),
        ];
        for (name, value, constraint) in positive {
            if value <= 0.0 {
                return Err(Error::InvalidParam {
                    name,
                    constraint,
                    value,
                });
            }
        }
        if self.a1 < 0.0 {
            return Err(Error::InvalidParam {
                name: "a1",
                constraint: "a1 >= 0",
                value: self.a1,
            });
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParam {
                name: "alpha",
                constraint: "alpha ∈ (0,1)",
                value: self.alpha,
            });
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::InvalidParam {
                name: "lambda",
                constraint: "lambda ∈ (0,1)",
                value: self.lambda,
            });
        }
        Ok(())
    }

    /// Everything the closed-form machinery needs: ranges, `δ < r` and
    /// `2δ/γ² ∉ {α, 1}`. The stricter `2δ + γ² < r` is only reported by
    /// [`validate`].
    pub fn check_solvable(&self) -> Result<()> {
        self.check_ranges()?;
        if self.delta >= self.r {
            return Err(Error::InvalidParam {
                name: "delta",
                constraint: "delta < r",
                value: self.delta,
            });
        }
        let nu = self.nu();
        if (nu - 1.0).abs() <= NONDEGENERACY_TOL {
            return Err(Error::Degenerate(format!(
                "2·delta/gamma² = {nu} is within {NONDEGENERACY_TOL:e} of 1"
            )));
        }
        if (nu - self.alpha).abs() <= NONDEGENERACY_TOL {
            return Err(Error::Degenerate(format!(
                "2·delta/gamma² = {nu} is within {NONDEGENERACY_TOL:e} of alpha = {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Roots `m < 0` and `n > 1` of `(γ²/2)k(k−1) + δk − r = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicExponents {
    pub m: f64,
    pub n: f64,
}

impl CharacteristicExponents {
    /// Value of the characteristic quadratic at `k`.
    pub fn quadratic(params: &ModelParams, k: f64) -> f64 {
        0.5 * params.gamma * params.gamma * k * (k - 1.0) + params.delta * k - params.r
    }
}

pub fn compute_exponents(params: &ModelParams) -> Result<CharacteristicExponents> {
    params.check_ranges()?;
    if params.delta >= params.r {
        return Err(Error::InvalidParam {
            name: "delta",
            constraint: "delta < r",
            value: params.delta,
        });
    }
    let g2 = params.gamma * params.gamma;
    let shift = params.delta / g2 - 0.5;
    let disc = (shift * shift + 2.0 * params.r / g2).sqrt();
    // The root with the larger magnitude is computed directly; the other
    // comes from the product of roots, -2r/γ², which avoids cancellation.
    let product = -2.0 * params.r / g2;
    let (m, n) = if shift >= 0.0 {
        let m = -shift - disc;
        (m, product / m)
    } else {
        let n = -shift + disc;
        (product / n, n)
    };
    if !(m < 0.0 && n > 1.0) {
        return Err(Error::Degenerate(format!(
            "characteristic exponents (m, n) = ({m}, {n}) violate m < 0 < 1 < n"
        )));
    }
    Ok(CharacteristicExponents { m, n })
}

/// Standing-assumption diagnostics. Never fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    /// `2δ + γ² < r`.
    pub strict_ok: bool,
    /// `2δ/γ² ∉ {α, 1}` up to [`NONDEGENERACY_TOL`].
    pub nondegenerate_ok: bool,
    /// `Some(K < 1)` once the contraction constant is known.
    pub contraction_ok: Option<bool>,
    pub messages: Vec<String>,
}

impl ValidityReport {
    /// Record the contraction constant of the price map.
    pub fn set_contraction(&mut self, k: f64) {
        let ok = k < 1.0;
        self.contraction_ok = Some(ok);
        if !ok {
            self.messages
                .push(format!("price map is not a contraction: K = {k} >= 1"));
        }
    }

    /// True when nothing blocks the closed-form solution.
    /// `strict_ok` is advisory and not included.
    pub fn solvable(&self) -> bool {
        self.nondegenerate_ok && self.contraction_ok != Some(false)
    }
}

pub fn validate(params: &ModelParams) -> ValidityReport {
    let mut messages = Vec::new();
    if let Err(e) = params.check_ranges() {
        messages.push(e.to_string());
    }
    let lhs = 2.0 * params.delta + params.gamma * params.gamma;
    let strict_ok = lhs < params.r;
    if !strict_ok {
        messages.push(format!(
            "warning: 2·delta + gamma² = {lhs} is not below r = {}; closed forms remain defined while delta < r",
            params.r
        ));
    }
    if params.delta >= params.r {
        messages.push(format!(
            "delta = {} >= r = {}: exponent n would not exceed 1",
            params.delta, params.r
        ));
    }
    let nu = params.nu();
    let near_one = (nu - 1.0).abs() <= NONDEGENERACY_TOL;
    let near_alpha = (nu - params.alpha).abs() <= NONDEGENERACY_TOL;
    let nondegenerate_ok = nu.is_finite() && !near_one && !near_alpha;
    if near_one {
        messages.push(format!(
            "non-degeneracy violated: 2·delta/gamma² = {nu} equals 1"
        ));
    }
    if near_alpha {
        messages.push(format!(
            "non-degeneracy violated: 2·delta/gamma² = {nu} equals alpha = {}",
            params.alpha
        ));
    }
    ValidityReport {
        strict_ok,
        nondegenerate_ok,
        contraction_ok: None,
        messages,
    }
}
