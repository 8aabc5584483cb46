//! Special functions and constants used by the oracle and the zero statistics.

use std::f64::consts::PI;

/// Real dilogarithm `Li2(x) = -∫_0^x log(1-s)/s ds` for `x ≤ 1`.
///
/// Direct power series on `[0, 1/2]`, reflection `Li2(x) + Li2(1-x) = π²/6 - log x log(1-x)` above,
/// Landen's identity `Li2(x) = -Li2(x/(x-1)) - ½ log²(1-x)` for negative `x`.
pub fn dilog(x: f64) -> f64 {
    assert!(x <= 1.0, "dilog argument {x} outside (-∞, 1]");
    if x < 0.0 {
        let l = (-x).ln_1p();
        -dilog(x / (x - 1.0)) - 0.5 * l * l
    } else if x <= 0.5 {
        dilog_series(x)
    } else if x == 1.0 {
        PI * PI / 6.0
    } else {
        let y = 1.0 - x;
        PI * PI / 6.0 - x.ln() * y.ln() - dilog_series(y)
    }
}

fn dilog_series(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut power = x;
    let mut n = 1.0_f64;
    loop {
        let term = power / (n * n);
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
        power *= x;
        n += 1.0;
    }
    sum
}

// B_{2j} / (2j)! for j = 1..=7
const BERNOULLI_OVER_FACTORIAL: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30240.0,
    -1.0 / 1209600.0,
    1.0 / 47900160.0,
    -691.0 / 1307674368000.0,
    1.0 / 74724249600.0,
];

/// Riemann zeta for real `s > 1` by Euler–Maclaurin summation.
pub fn zeta(s: f64) -> f64 {
    assert!(s > 1.0, "zeta needs s > 1");
    let cutoff = 12usize;
    let big_n = cutoff as f64;
    let mut sum: f64 = (1..cutoff).map(|n| (n as f64).powf(-s)).sum();
    sum += big_n.powf(1.0 - s) / (s - 1.0) + 0.5 * big_n.powf(-s);
    // rising product s (s+1) ... (s+2j-2)
    let mut rising = s;
    let mut power = big_n.powf(-s - 1.0);
    for (j, coeff) in BERNOULLI_OVER_FACTORIAL.iter().enumerate() {
        sum += coeff * rising * power;
        let m = 2.0 * j as f64;
        rising *= (s + m + 1.0) * (s + m + 2.0);
        power /= big_n * big_n;
    }
    sum
}

/// `ν₁ = ζ(3/2) / (8 π^{3/2})`, the number-variance constant for zeros of random sections.
pub fn number_variance_constant() -> f64 {
    zeta(1.5) / (8.0 * PI.powf(1.5))
}

/// `ζ(3) / (16π)`, the smooth linear statistic constant.
pub fn smooth_variance_constant() -> f64 {
    zeta(3.0) / (16.0 * PI)
}

/// Table of `ln n!` for `n = 0..=max`.
pub fn log_factorials(max: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(max + 1);
    let mut acc = 0.0;
    table.push(0.0);
    for n in 1..=max {
        acc += (n as f64).ln();
        table.push(acc);
    }
    table
}

/// `ln |e^a - e^b|` without overflow; `-inf` when `a == b`.
pub fn log_abs_exp_diff(a: f64, b: f64) -> f64 {
    let gap = (a - b).abs();
    if gap == 0.0 {
        return f64::NEG_INFINITY;
    }
    a.max(b) + (-(-gap).exp_m1()).ln()
}

/// `ln sinh x` for `x > 0`.
pub fn log_sinh(x: f64) -> f64 {
    if x < 1.0 {
        x.sinh().ln()
    } else {
        x - std::f64::consts::LN_2 + (-(-2.0 * x).exp()).ln_1p()
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}
