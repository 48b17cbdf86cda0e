//! Direct draws from the stationary law by inverse CDF.

use rand::Rng;

use super::exec::Execution;
use super::path::path_rng;
use crate::equilibrium::StationaryLaw;
use crate::params::ModelParams;

/// Draws per RNG stream. Fixing the block size makes the output independent
/// of how blocks are spread over threads.
pub const SAMPLE_BLOCK: usize = 4096;

/// Stream offset separating stationary draws from path streams.
const SAMPLE_STREAM_BASE: u64 = 1 << 62;

/// Open-interval uniform on (0, 1).
#[inline]
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

fn block_of(law: &StationaryLaw, seed: u64, block: usize, len: usize) -> Vec<f64> {
    let mut rng = path_rng(seed, SAMPLE_STREAM_BASE + block as u64);
    (0..len)
        .map(|_| law.quantile(open_unit(&mut rng)))
        .collect()
}

/// `n` i.i.d. draws from `law`.
pub fn sample_stationary(law: &StationaryLaw, n: usize, seed: u64) -> Vec<f64> {
    sample_stationary_with(law, n, seed, Execution::default())
}

pub fn sample_stationary_with(
    law: &StationaryLaw,
    n: usize,
    seed: u64,
    exec: Execution,
) -> Vec<f64> {
    let blocks = n.div_ceil(SAMPLE_BLOCK);
    exec.map(blocks, |b| {
        let len = SAMPLE_BLOCK.min(n - b * SAMPLE_BLOCK);
        block_of(law, seed, b, len)
    })
    .concat()
}

/// Draws of `ρ̃(X) = a₀ − a₁X^{1−α}` under the law, fused into one power.
#[derive(Debug, Clone, Copy)]
pub struct PriceSampler {
    lo_pow: f64,
    span: f64,
    exponent: f64,
    a0: f64,
    a1: f64,
    lo: f64,
    hi: f64,
}

impl PriceSampler {
    pub fn new(law: &StationaryLaw, params: &ModelParams) -> Self {
        let (lo, hi) = law.support();
        let e = law.nu - 1.0;
        let lo_pow = lo.powf(e);
        Self {
            lo_pow,
            span: hi.powf(e) - lo_pow,
            exponent: (1.0 - params.alpha) / e,
            a0: params.a0,
            a1: params.a1,
            lo: lo.powf(1.0 - params.alpha),
            hi: hi.powf(1.0 - params.alpha),
        }
    }

    /// `ρ̃(CDF⁻¹(u))`.
    #[inline]
    pub fn price_at(&self, u: f64) -> f64 {
        let t = self.lo_pow + u * self.span;
        let x_pow = t
            .powf(self.exponent)
            .clamp(self.lo.min(self.hi), self.hi.max(self.lo));
        self.a0 - self.a1 * x_pow
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.price_at(open_unit(rng))
    }

    /// Mean of `count` draws.
    pub fn mean_of<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> f64 {
        let mut s = 0.0;
        for _ in 0..count {
            s += self.draw(rng);
        }
        s / count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{inverse_demand, solve_equilibrium, StationaryLaw};
    use crate::sim::stats::{ks_distance, mean_stderr};

    fn law() -> (ModelParams, StationaryLaw) {
        let p = ModelParams::default();
        (p, solve_equilibrium(&p).unwrap().law_star)
    }

    #[test]
    fn empty_request() {
        let (_, law) = law();
        assert!(sample_stationary(&law, 0, 1).is_empty());
    }

    #[test]
    fn draws_in_support_and_reproducible() {
        let (_, law) = law();
        let a = sample_stationary(&law, 10_000, 3);
        let b = sample_stationary_with(&law, 10_000, 3, Execution::Sequential);
        assert_eq!(a, b);
        let (lo, hi) = law.support();
        assert!(a.iter().all(|&x| x >= lo && x <= hi));
    }

    #[test]
    fn moment_within_four_stderr() {
        let (p, law) = law();
        let xs = sample_stationary(&law, 200_000, 11);
        let pw: Vec<f64> = xs.iter().map(|x| x.powf(1.0 - p.alpha)).collect();
        let (m, se) = mean_stderr(&pw);
        let want = law.moment(1.0 - p.alpha);
        assert!((m - want).abs() < 4.0 * se, "{m} vs {want} (se {se})");
    }

    #[test]
    fn ks_against_analytic_cdf() {
        let (_, law) = law();
        let n = 100_000;
        let mut xs = sample_stationary(&law, n, 5);
        let d = ks_distance(&mut xs, |x| law.cdf(x));
        assert!(d < 1.36 / (n as f64).sqrt() * 1.5, "{d}");
    }

    #[test]
    fn fused_price_matches_two_step() {
        let (p, law) = law();
        let s = PriceSampler::new(&law, &p);
        for k in 1..100 {
            let u = k as f64 / 100.0;
            let two = inverse_demand(law.quantile(u), &p);
            assert!((s.price_at(u) - two).abs() < 1e-13);
        }
    }
}
