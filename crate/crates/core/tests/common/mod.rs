//! Oracles shared by the integration tests.
#![allow(dead_code)]

use mfg_invest::{solve_single_agent, ModelParams};
use nalgebra::{Matrix6, Vector6};

/// Roots of the characteristic quadratic by the textbook formula.
pub fn roots(p: &ModelParams) -> (f64, f64) {
    let a = 0.5 * p.gamma * p.gamma;
    let b = p.delta - a;
    let disc = (b * b + 4.0 * a * p.r).sqrt();
    ((-b - disc) / (2.0 * a), (-b + disc) / (2.0 * a))
}

/// Largest relative gap between the LU solution and the closed forms,
/// with the name of the worst entry.
pub fn smooth_fit_oracle_gap(p: ModelParams, rho: f64) -> (f64, &'static str) {
    let vf = solve_single_agent(rho, &p).unwrap();
    let (m, n) = roots(&p);
    let al = p.alpha;
    let q = |k: f64| 0.5 * p.gamma * p.gamma * k * (k - 1.0) + p.delta * k - p.r;
    // particular solution H·x^α of the inhomogeneous ODE
    let h = -p.c * rho / q(al);
    let mut worst = ((h - vf.h).abs() / h.abs(), "H");

    let (xb, xs) = (vf.policy.x_b, vf.policy.x_s);
    let mut mat = Matrix6::<f64>::zeros();
    let mut rhs = Vector6::<f64>::zeros();
    // rows scaled so every entry is O(x^k) with the same k per row
    for (i, &x) in [xb, xs].iter().enumerate() {
        let (c_col, q_col) = (2 + i, 4 + i);
        mat[(i, 0)] = x.powf(m);
        mat[(i, 1)] = x.powf(n);
        mat[(i, c_col)] = -1.0;
        mat[(i, q_col)] = -x;
        rhs[i] = -h * x.powf(al);

        mat[(2 + i, 0)] = m * x.powf(m);
        mat[(2 + i, 1)] = n * x.powf(n);
        mat[(2 + i, q_col)] = -x;
        rhs[2 + i] = -h * al * x.powf(al);

        mat[(4 + i, 0)] = m * (m - 1.0) * x.powf(m);
        mat[(4 + i, 1)] = n * (n - 1.0) * x.powf(n);
        rhs[4 + i] = -h * al * (al - 1.0) * x.powf(al);
    }
    let sol = mat.lu().solve(&rhs).expect("smooth-fit system is singular");
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    let want = [vf.a, vf.b, vf.c1, vf.c2, p.p, p.p * (1.0 - p.lambda)];
    let names = ["A", "B", "C1", "C2", "q_b", "q_s"];
    for k in 0..6 {
        let g = rel(sol[k], want[k]);
        if g > worst.0 {
            worst = (g, names[k]);
        }
    }
    worst
}
