//! Fixed-price singular control problem: free boundaries, value function and
//! the HJB quasi-variational inequality.
//!
//! For a fixed price `ρ` the optimal policy keeps production inside a band
//! `[x_b, x_s]`. The band ratio `y₀ = x_s / x_b` solves `F(y₀) = 1 − λ` and
//! does not depend on `ρ`; the band itself scales as `ρ^{1/(1−α)}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{compute_exponents, CharacteristicExponents, ModelParams};

/// First point of the bracketing scan for `y₀`.
pub const Y0_SCAN_START: f64 = 1.0 + 1e-6;
/// Upper cap of the bracketing scan for `y₀`.
pub const Y0_SCAN_CAP: f64 = 1e9;
/// Target bisection interval width.
pub const Y0_BISECT_WIDTH: f64 = 1e-13;
/// Agreement required between the `x_b`- and `x_s`-based coefficient forms.
pub const COEFF_AGREEMENT_TOL: f64 = 1e-8;
/// Rounding multiple allowed on top of the cancellation factor.
pub const CANCELLATION_SLACK: f64 = 64.0;

/// `y^a − y^b` without cancellation for `y` near 1.
fn pow_diff(ln_y: f64, a: f64, b: f64) -> f64 {
    (b * ln_y).exp() * ((a - b) * ln_y).exp_m1()
}

/// Numerator and denominator of `F(y)`, both divided by `y^n`.
fn f_parts(y: f64, exps: &CharacteristicExponents, alpha: f64) -> (f64, f64) {
    let CharacteristicExponents { m, n } = *exps;
    let l = y.ln();
    // (y^α − y^n) / y^n and (y^m − y^α) / y^n
    let hi = ((alpha - n) * l).exp_m1();
    let lo = ((alpha - n) * l).exp() * ((m - alpha) * l).exp_m1();
    let k1 = (n - 1.0) * (alpha - m);
    let k2 = (1.0 - m) * (n - alpha);
    let num = k1 * ((m - 1.0) * l).exp() * hi + k2 * ((n - 1.0) * l).exp() * lo;
    let den = k1 * hi + k2 * lo;
    (num, den)
}

/// The ratio function whose level set `F(y) = 1 − λ` defines the band ratio.
pub fn f_ratio(y: f64, exps: &CharacteristicExponents, alpha: f64) -> Result<f64> {
    if !(y > 1.0) {
        return Err(Error::InvalidParam {
            name: "y",
            constraint: "y > 1",
            value: y,
        });
    }
    let (num, den) = f_parts(y, exps, alpha);
    if !(den.abs() >= 1e-300) {
        return Err(Error::Degenerate(format!(
            "F denominator vanishes at y = {y} (m = {}, n = {}, alpha = {alpha})",
            exps.m, exps.n
        )));
    }
    Ok(num / den)
}

/// Sign changes of `F(y) − (1 − λ)` on the geometric scan
/// `y = 1 + 10⁻⁶·2ᵏ`, capped at [`Y0_SCAN_CAP`].
pub fn scan_y0_brackets(
    lambda: f64,
    exps: &CharacteristicExponents,
    alpha: f64,
) -> Result<Vec<(f64, f64)>> {
    let target = 1.0 - lambda;
    let mut brackets = Vec::new();
    let mut step = Y0_SCAN_START - 1.0;
    let mut prev_y = Y0_SCAN_START;
    let mut prev_g = f_ratio(prev_y, exps, alpha)? - target;
    loop {
        step *= 2.0;
        let y = (1.0 + step).min(Y0_SCAN_CAP);
        let g = f_ratio(y, exps, alpha)? - target;
        if (prev_g > 0.0) != (g > 0.0) {
            brackets.push((prev_y, y));
        }
        if y >= Y0_SCAN_CAP {
            break;
        }
        prev_y = y;
        prev_g = g;
    }
    Ok(brackets)
}

/// Band ratio `y₀ > 1` with `F(y₀) = 1 − λ`.
///
/// Scans for a sign change, bisects to [`Y0_BISECT_WIDTH`] and applies one
/// Newton step. If the scan sees several sign changes the smallest root is
/// returned and a warning is logged.
pub fn solve_y0(lambda: f64, exps: &CharacteristicExponents, alpha: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidParam {
            name: "lambda",
            constraint: "lambda ∈ (0,1)",
            value: lambda,
        });
    }
    let brackets = scan_y0_brackets(lambda, exps, alpha)?;
    let &(mut lo, mut hi) = brackets.first().ok_or_else(|| {
        Error::NoBracket(format!(
            "F(y) − (1 − lambda) has no sign change on (1, {Y0_SCAN_CAP:e}] for m = {}, n = {}, alpha = {alpha}",
            exps.m, exps.n
        ))
    })?;
    if brackets.len() > 1 {
        log::warn!(
            "F(y) = 1 - lambda has {} bracketed roots; taking the smallest",
            brackets.len()
        );
    }
    let target = 1.0 - lambda;
    let g = |y: f64| f_ratio(y, exps, alpha).map(|f| f - target);
    let g_lo = g(lo)?;
    while hi - lo > Y0_BISECT_WIDTH {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g_mid = g(mid)?;
        if g_mid == 0.0 {
            return Ok(mid);
        }
        if (g_mid > 0.0) == (g_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let y = 0.5 * (lo + hi);
    let gy = g(y)?;
    // Newton polish with a central-difference slope; kept only if it helps.
    let h = 1e-6 * (y - 1.0);
    let slope = (g(y + h)? - g(y - h)?) / (2.0 * h);
    if slope.is_finite() && slope != 0.0 {
        let cand = y - gy / slope;
        if cand > 1.0 && cand.is_finite() {
            if let Ok(gc) = g(cand) {
                if gc.abs() < gy.abs() {
                    return Ok(cand);
                }
            }
        }
    }
    Ok(y)
}

/// `ρ`-free constant `K_b` with `x_b = K_b·ρ^{1/(1−α)}`.
pub fn threshold_base(params: &ModelParams, exps: &CharacteristicExponents, y0: f64) -> f64 {
    let CharacteristicExponents { m, n } = *exps;
    let a = params.alpha;
    let l = y0.ln();
    // (y₀ⁿ − y₀^α) / (y₀ⁿ − (1−λ)y₀), both divided by y₀ⁿ
    let num = -pow_diff(l, a - n, 0.0);
    let den = 1.0 - (1.0 - params.lambda) * ((1.0 - n) * l).exp();
    let inner = 2.0 * params.c * a * num
        / (params.gamma * params.gamma * params.p * (1.0 - m) * (n - a) * den);
    inner.powf(1.0 / (1.0 - a))
}

/// Reflection band `[x_b, x_s]` of the bang-bang policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub x_b: f64,
    pub x_s: f64,
}

impl ThresholdPolicy {
    pub fn new(x_b: f64, x_s: f64) -> Result<Self> {
        if !(x_b > 0.0 && x_b <= x_s && x_s.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "threshold band must satisfy 0 < x_b <= x_s < inf (got [{x_b}, {x_s}])"
            )));
        }
        Ok(Self { x_b, x_s })
    }

    pub fn ratio(&self) -> f64 {
        self.x_s / self.x_b
    }

    /// Both thresholds multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            x_b: self.x_b * factor,
            x_s: self.x_s * factor,
        }
    }

    /// Minimal push into the band: `(new state, dξ⁺, dξ⁻)`.
    #[inline]
    pub fn project(&self, x: f64) -> (f64, f64, f64) {
        if x < self.x_b {
            (self.x_b, self.x_b - x, 0.0)
        } else if x > self.x_s {
            (self.x_s, 0.0, x - self.x_s)
        } else {
            (x, 0.0, 0.0)
        }
    }
}

pub fn solve_thresholds(
    rho: f64,
    params: &ModelParams,
    exps: &CharacteristicExponents,
    y0: f64,
) -> Result<ThresholdPolicy> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidParam {
            name: "rho",
            constraint: "rho > 0",
            value: rho,
        });
    }
    let x_b = threshold_base(params, exps, y0) * rho.powf(1.0 / (1.0 - params.alpha));
    if !(x_b > 0.0 && x_b.is_finite()) {
        return Err(Error::Degenerate(format!(
            "expansion threshold is not a positive finite number ({x_b})"
        )));
    }
    Ok(ThresholdPolicy { x_b, x_s: x_b * y0 })
}

/// Piecewise closed-form value function of the fixed-price problem.
///
/// ```text
/// v(x) = p·x + C₁                  on [0, x_b)
///        A·x^m + B·x^n + H·x^α      on [x_b, x_s]
///        p(1−λ)·x + C₂              on (x_s, ∞)
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub policy: ThresholdPolicy,
    pub a: f64,
    pub b: f64,
    pub h: f64,
    pub c1: f64,
    pub c2: f64,
    pub rho: f64,
    pub params: ModelParams,
    pub exps: CharacteristicExponents,
}

/// The three brackets of the HJB/QVI at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HjbResidual {
    /// `r·v − cρx^α − δx·v′ − ½γ²x²·v″`
    pub ode: f64,
    /// `p − v′`
    pub buy: f64,
    /// `v′ − p(1−λ)`
    pub sell: f64,
    /// Sum of the magnitudes of the four terms of `ode`.
    pub ode_scale: f64,
}

impl HjbResidual {
    /// `(ode, buy, sell)` normalised by their natural magnitudes.
    pub fn relative(&self, p: f64) -> (f64, f64, f64) {
        let s = if self.ode_scale > 0.0 {
            self.ode_scale
        } else {
            1.0
        };
        (self.ode / s, self.buy / p, self.sell / p)
    }

    pub fn min(&self) -> f64 {
        self.ode.min(self.buy).min(self.sell)
    }
}

/// Which branch of the value function applies at `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Expand,
    Continue,
    Contract,
}

/// `(A, B)` from the first- and second-derivative matching at a knot with
/// target slope `q`, plus the cancellation factor `(|t₁|+|t₂|)/|t₁−t₂|` of
/// the worse of the two numerators.
fn coefficients_at(
    x: f64,
    q: f64,
    h: f64,
    alpha: f64,
    exps: &CharacteristicExponents,
) -> (f64, f64, f64) {
    let CharacteristicExponents { m, n } = *exps;
    let hx = alpha * h * x.powf(alpha);
    let cancel = |t1: f64, t2: f64| (t1.abs() + t2.abs()) / (t1 - t2).abs();
    let (a1, a2) = (q * (n - 1.0) * x, (n - alpha) * hx);
    let (b1, b2) = (q * (m - 1.0) * x, (m - alpha) * hx);
    let a = (a1 - a2) / (m * (n - m) * x.powf(m));
    let b = (b1 - b2) / (n * (m - n) * x.powf(n));
    (a, b, cancel(a1, a2).max(cancel(b1, b2)))
}

pub fn solve_value_function(
    rho: f64,
    params: &ModelParams,
    exps: &CharacteristicExponents,
    policy: ThresholdPolicy,
) -> Result<ValueFunction> {
    let CharacteristicExponents { m, n } = *exps;
    let alpha = params.alpha;
    let h = 2.0 * params.c * rho / (params.gamma * params.gamma * (n - alpha) * (alpha - m));
    let (a, b, kb) = coefficients_at(policy.x_b, params.buy_cost(), h, alpha, exps);
    let (a_s, b_s, ks) = coefficients_at(policy.x_s, params.sell_price(), h, alpha, exps);
    let gap_a = (a - a_s).abs() / a.abs().max(f64::MIN_POSITIVE);
    let gap_b = (b - b_s).abs() / b.abs().max(f64::MIN_POSITIVE);
    // Wide bands make the knot forms cancel badly; never ask for more than
    // they can carry.
    let tol = COEFF_AGREEMENT_TOL.max(CANCELLATION_SLACK * f64::EPSILON * kb.max(ks));
    if !(gap_a <= tol) {
        return Err(Error::Inconsistent {
            what: "coefficient A at x_b vs x_s",
            gap: gap_a,
        });
    }
    if !(gap_b <= tol) {
        return Err(Error::Inconsistent {
            what: "coefficient B at x_b vs x_s",
            gap: gap_b,
        });
    }
    let mid = |x: f64| a * x.powf(m) + b * x.powf(n) + h * x.powf(alpha);
    let c1 = mid(policy.x_b) - params.buy_cost() * policy.x_b;
    let c2 = mid(policy.x_s) - params.sell_price() * policy.x_s;
    Ok(ValueFunction {
        policy,
        a,
        b,
        h,
        c1,
        c2,
        rho,
        params: *params,
        exps: *exps,
    })
}

impl ValueFunction {
    /// Branch selection; the knots belong to the middle branch.
    pub fn region(&self, x: f64) -> Region {
        if x < self.policy.x_b {
            Region::Expand
        } else if x > self.policy.x_s {
            Region::Contract
        } else {
            Region::Continue
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self.region(x) {
            Region::Expand => self.params.buy_cost() * x + self.c1,
            Region::Contract => self.params.sell_price() * x + self.c2,
            Region::Continue => self.middle(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self.region(x) {
            Region::Expand => self.params.buy_cost(),
            Region::Contract => self.params.sell_price(),
            Region::Continue => self.middle_d1(x),
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match self.region(x) {
            Region::Expand | Region::Contract => 0.0,
            Region::Continue => self.middle_d2(x),
        }
    }

    /// Middle branch `A·x^m + B·x^n + H·x^α`, usable off the band.
    pub fn middle(&self, x: f64) -> f64 {
        let CharacteristicExponents { m, n } = self.exps;
        self.a * x.powf(m) + self.b * x.powf(n) + self.h * x.powf(self.params.alpha)
    }

    pub fn middle_d1(&self, x: f64) -> f64 {
        let CharacteristicExponents { m, n } = self.exps;
        let al = self.params.alpha;
        m * self.a * x.powf(m - 1.0) + n * self.b * x.powf(n - 1.0) + al * self.h * x.powf(al - 1.0)
    }

    pub fn middle_d2(&self, x: f64) -> f64 {
        let CharacteristicExponents { m, n } = self.exps;
        let al = self.params.alpha;
        m * (m - 1.0) * self.a * x.powf(m - 2.0)
            + n * (n - 1.0) * self.b * x.powf(n - 2.0)
            + al * (al - 1.0) * self.h * x.powf(al - 2.0)
    }

    /// Residuals of the six smooth-fit equations, each divided by the
    /// magnitude of its largest term.
    pub fn smooth_fit_residuals(&self) -> [f64; 6] {
        let (xb, xs) = (self.policy.x_b, self.policy.x_s);
        let p = self.params.buy_cost();
        let q = self.params.sell_price();
        let rel = |lhs: f64, rhs: f64| {
            (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE)
        };
        let d2_rel = |x: f64| {
            let CharacteristicExponents { m, n } = self.exps;
            let al = self.params.alpha;
            let terms = [
                m * (m - 1.0) * self.a * x.powf(m - 2.0),
                n * (n - 1.0) * self.b * x.powf(n - 2.0),
                al * (al - 1.0) * self.h * x.powf(al - 2.0),
            ];
            let scale = terms.iter().map(|t| t.abs()).fold(0.0, f64::max);
            terms.iter().sum::<f64>().abs() / scale
        };
        [
            rel(self.middle(xb), p * xb + self.c1),
            rel(self.middle_d1(xb), p),
            d2_rel(xb),
            rel(self.middle(xs), q * xs + self.c2),
            rel(self.middle_d1(xs), q),
            d2_rel(xs),
        ]
    }

    /// The three QVI brackets at `x > 0`, with closed-form derivatives.
    pub fn hjb_residual(&self, x: f64) -> HjbResidual {
        let pr = &self.params;
        let v = self.value(x);
        let d1 = self.derivative(x);
        let d2 = self.second_derivative(x);
        let terms = [
            pr.r * v,
            -pr.c * self.rho * x.powf(pr.alpha),
            -pr.delta * x * d1,
            -0.5 * pr.gamma * pr.gamma * x * x * d2,
        ];
        HjbResidual {
            ode: terms.iter().sum(),
            buy: pr.buy_cost() - d1,
            sell: d1 - pr.sell_price(),
            ode_scale: terms.iter().map(|t| t.abs()).sum(),
        }
    }
}

/// Exponents, band ratio, thresholds and value function at price `rho`.
pub fn solve_single_agent(rho: f64, params: &ModelParams) -> Result<ValueFunction> {
    params.check_ranges()?;
    let exps = compute_exponents(params)?;
    let y0 = solve_y0(params.lambda, &exps, params.alpha)?;
    let policy = solve_thresholds(rho, params, &exps, y0)?;
    solve_value_function(rho, params, &exps, policy)
}
