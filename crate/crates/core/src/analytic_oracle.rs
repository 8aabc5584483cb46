//! Closed-form and quadrature evaluations: the ρ-derivative of the variance bi-potential,
//! its limits, the HCIZ integral, a Gaussian–Vandermonde identity and the energy-entropy exponent.

use crate::error::{Error, Result};
use crate::heat_sampler::{eigen_log_density, HeatParams};
use crate::quadrature::{box_integral, integrate, integrate_with_breaks, QuadratureReport, Tolerance};
use crate::special::log_sinh;
use nalgebra::DMatrix;
use serde::Serialize;
use std::f64::consts::PI;

pub use crate::special::dilog;

/// Below this ρ the cancellation-free expanded form is used.
pub const RHO_SWITCH: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiPotentialQuery {
    pub t: f64,
    pub rho: f64,
    /// relative tolerance on the returned value
    pub tolerance: f64,
}

impl BiPotentialQuery {
    pub fn new(t: f64, rho: f64, tolerance: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::invalid(format!("t must be positive, got {t}")));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::invalid(format!("rho must lie strictly inside (0, 1), got {rho}")));
        }
        if !(tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        Ok(BiPotentialQuery { t, rho, tolerance })
    }
}

/// `e^{-t/2} e^{-λ²/2t} cosh λ / sqrt(2πt)`, written without overflow.
pub fn weight(lambda: f64, t: f64) -> f64 {
    let a = -(lambda - t).powi(2) / (2.0 * t);
    let b = -(lambda + t).powi(2) / (2.0 * t);
    (a.exp() + b.exp()) / (2.0 * (2.0 * PI * t).sqrt())
}

fn inv_sinh_sq(lambda: f64) -> f64 {
    if lambda < 20.0 {
        1.0 / lambda.sinh().powi(2)
    } else {
        let e = (-2.0 * lambda).exp();
        4.0 * e / (1.0 - e).powi(2)
    }
}

/// `artanh q` for `q² = (1-ρ)/(c-ρ)`, `c = coth² λ`, stable as `q → 1`.
fn artanh_q(lambda: f64, q: f64, c_minus_rho: f64) -> f64 {
    q.ln_1p() + 0.5 * c_minus_rho.ln() + log_sinh(lambda)
}

/// `sqrt(1-ρ) A(λ, ρ) = 2 q artanh q` for `λ > 0`.
fn g_term(lambda: f64, rho: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    let c_minus_rho = 1.0 - rho + inv_sinh_sq(lambda);
    let q = ((1.0 - rho) / c_minus_rho).sqrt();
    2.0 * q * artanh_q(lambda, q, c_minus_rho)
}

/// The amplitude `A(λ, ρ) = (coth²λ - ρ)^{-1/2} log[(sqrt(coth²λ-ρ) + sqrt(1-ρ)) / (sqrt(coth²λ-ρ) - sqrt(1-ρ))]`,
/// extended evenly in `λ` and by zero at `λ = 0`.
pub fn amplitude(lambda: f64, rho: f64) -> f64 {
    let l = lambda.abs();
    if l == 0.0 {
        return 0.0;
    }
    let c_minus_rho = 1.0 - rho + inv_sinh_sq(l);
    let q = ((1.0 - rho) / c_minus_rho).sqrt();
    2.0 * artanh_q(l, q, c_minus_rho) / c_minus_rho.sqrt()
}

/// `log1p(ρ a) / ρ`, with its limit `a` at `ρ = 0`.
fn log1p_ratio(a: f64, rho: f64) -> f64 {
    let x = rho * a;
    if x.abs() < 1e-300 {
        a
    } else {
        x.ln_1p() / rho
    }
}

/// `-(g(λ, ρ) - g(λ, 0)) / ρ` without subtracting nearly equal numbers.
fn expanded_term(lambda: f64, rho: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    let s = inv_sinh_sq(lambda);
    let c = 1.0 + s;
    let c_minus_rho = 1.0 - rho + s;
    let q = ((1.0 - rho) / c_minus_rho).sqrt();
    let q0 = lambda.tanh();
    // (q - q0) / ρ
    let r = -s / (c * c_minus_rho * (q + q0));
    let at = artanh_q(lambda, q, c_minus_rho);
    let at_diff = log1p_ratio(r / (1.0 + q0), rho) + 0.5 * log1p_ratio(-1.0 / c, rho);
    -2.0 * (r * at + q0 * at_diff)
}

fn lambda_breaks(t: f64) -> Vec<f64> {
    let s = t.sqrt();
    let upper = t + 60.0 * s + 60.0;
    let mut pts = vec![0.0];
    for p in [t - 10.0 * s, t - 3.0 * s, t, t + 3.0 * s, t + 10.0 * s] {
        if p > *pts.last().unwrap() * (1.0 + 1e-12) + 1e-12 && p < upper {
            pts.push(p);
        }
    }
    pts.push(upper);
    pts
}

fn half_line(t: f64, f: impl FnMut(f64) -> f64, tol: Tolerance) -> Result<QuadratureReport> {
    integrate_with_breaks(f, &lambda_breaks(t), tol)
}

/// `∂_ρ I(t, ρ) = 2t/ρ − (e^{-t/2}/sqrt(2πt)) (sqrt(1-ρ)/ρ) ∫ e^{-λ²/2t} cosh λ A(λ, ρ) dλ`.
///
/// For `ρ < RHO_SWITCH` the `2t/ρ` term is cancelled analytically before integrating.
pub fn d_rho_bipotential(q: &BiPotentialQuery) -> Result<QuadratureReport> {
    if q.rho < RHO_SWITCH {
        d_rho_expanded(q)
    } else {
        d_rho_direct(q)
    }
}

/// The literal formula; loses `log10(2t/ρ)` digits to cancellation.
pub fn d_rho_direct(q: &BiPotentialQuery) -> Result<QuadratureReport> {
    let (t, rho) = (q.t, q.rho);
    // crude size of the answer, used only to set the absolute target
    let scale = (-(-rho).ln_1p() / rho).max(0.5 * t.min(1.0));
    let run = |scale: f64| -> Result<(f64, f64, usize)> {
        let tol = Tolerance::new(0.25 * q.tolerance * rho * scale, 1e-15);
        let j = half_line(t, |l| weight(l, t) * g_term(l, rho), tol)?;
        Ok(((2.0 * t - 2.0 * j.value) / rho, 2.0 * j.abs_error_estimate / rho, j.evaluations))
    };
    let (mut value, mut error, mut evaluations) = run(scale)?;
    if error > q.tolerance * value.abs() && value.abs() < scale {
        // the guess overshot; retarget on the value found
        let (v, e, n) = run(value.abs())?;
        (value, error, evaluations) = (v, e, evaluations + n);
    }
    check(value, error, q.tolerance, evaluations)
}

/// `2 ∫_0^∞ w(λ) (-(g(λ,ρ) - g(λ,0))/ρ) dλ`, valid for every ρ in `[0, 1)`.
pub fn d_rho_expanded(q: &BiPotentialQuery) -> Result<QuadratureReport> {
    let (t, rho) = (q.t, q.rho);
    let tol = Tolerance::new(1e-300, 0.25 * q.tolerance);
    let r = half_line(t, |l| weight(l, t) * expanded_term(l, rho), tol)?;
    check(2.0 * r.value, 2.0 * r.abs_error_estimate, q.tolerance, r.evaluations)
}

fn check(value: f64, error: f64, rel: f64, evaluations: usize) -> Result<QuadratureReport> {
    if !value.is_finite() || error > rel * value.abs() {
        return Err(Error::Quadrature { value, error, tolerance: rel * value.abs() });
    }
    Ok(QuadratureReport { value, abs_error_estimate: error, evaluations })
}

/// `(e^{-t/2}/sqrt(2πt)) ∫ e^{-λ²/2t} cosh λ A(λ, 0) dλ`, which equals `2t`.
pub fn small_rho_integral(t: f64, tolerance: f64) -> Result<QuadratureReport> {
    if !(t > 0.0) {
        return Err(Error::invalid("t must be positive"));
    }
    let tol = Tolerance::new(1e-300, 0.25 * tolerance);
    let r = half_line(t, |l| weight(l, t) * g_term(l, 0.0), tol)?;
    check(2.0 * r.value, 2.0 * r.abs_error_estimate, tolerance, r.evaluations)
}

/// `∫_{ρ₁}^{ρ₂} ∂_ρ I(t, ρ) dρ`, the bi-potential up to its undetermined constant.
pub fn bipotential_difference(t: f64, rho1: f64, rho2: f64, tolerance: f64) -> Result<QuadratureReport> {
    let (lo, hi, sign) = if rho1 <= rho2 { (rho1, rho2, 1.0) } else { (rho2, rho1, -1.0) };
    if !(lo > 0.0 && hi < 1.0) {
        return Err(Error::invalid("rho bounds must lie in (0, 1)"));
    }
    if lo == hi {
        return Ok(QuadratureReport { value: 0.0, abs_error_estimate: 0.0, evaluations: 0 });
    }
    let mut failure = None;
    let mut evaluations = 0;
    let r = integrate(
        |rho| match BiPotentialQuery::new(t, rho, 0.1 * tolerance).and_then(|q| d_rho_bipotential(&q)) {
            Ok(v) => {
                evaluations += v.evaluations;
                v.value
            }
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        lo,
        hi,
        Tolerance::new(1e-300, tolerance),
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let r = r?;
    Ok(QuadratureReport { value: sign * r.value, abs_error_estimate: r.abs_error_estimate, evaluations })
}

/// `Li₂(ρ₂) − Li₂(ρ₁)`, the `t = ∞` bi-potential difference.
pub fn dilog_difference(rho1: f64, rho2: f64) -> f64 {
    dilog(rho2) - dilog(rho1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HcizMode {
    /// divided differences when entries nearly coincide or `|μ|·spread(a)·spread(b)` is small, direct otherwise
    Auto,
    Direct,
    Confluent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HcizValue {
    pub value: f64,
    pub confluent: bool,
    pub warning: Option<String>,
}

const CONFLUENT_GAP: f64 = 1e-6;
/// Below this `|μ|·spread(a)·spread(b)` the determinant ratio cancels badly and divided differences win.
const DIRECT_SPREAD: f64 = 6.0;

fn spread(x: &[f64]) -> f64 {
    x.iter().fold(f64::MIN, |m, v| m.max(*v)) - x.iter().fold(f64::MAX, |m, v| m.min(*v))
}

fn min_relative_gap(x: &[f64]) -> f64 {
    let scale = x.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut gap = f64::INFINITY;
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            gap = gap.min((x[i] - x[j]).abs() / scale);
        }
    }
    gap
}

fn vandermonde(x: &[f64]) -> f64 {
    let mut v = 1.0;
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            v *= x[j] - x[i];
        }
    }
    v
}

fn superfactorial(n: usize) -> f64 {
    (1..n).fold(1.0, |acc, p| acc * (1..=p).map(|q| q as f64).product::<f64>())
}

/// `∫_{U(N)} exp(μ Tr(A U B U^†)) dU` for `A = diag(a)`, `B = diag(b)`.
pub fn hciz(a: &[f64], b: &[f64], mu: f64) -> Result<f64> {
    Ok(hciz_with(a, b, mu, HcizMode::Auto)?.value)
}

pub fn hciz_with(a: &[f64], b: &[f64], mu: f64, mode: HcizMode) -> Result<HcizValue> {
    let n = a.len();
    if n == 0 || b.len() != n {
        return Err(Error::invalid("hciz needs two nonempty vectors of equal length"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) || !mu.is_finite() {
        return Err(Error::invalid("hciz arguments must be finite"));
    }
    if mu == 0.0 {
        return Ok(HcizValue { value: 1.0, confluent: false, warning: None });
    }
    let near = min_relative_gap(a).min(min_relative_gap(b)) < CONFLUENT_GAP;
    let confluent = match mode {
        HcizMode::Auto => near || mu.abs() * spread(a) * spread(b) < DIRECT_SPREAD,
        HcizMode::Direct => false,
        HcizMode::Confluent => true,
    };
    let prefactor = superfactorial(n) * mu.powi(-((n * (n - 1) / 2) as i32));
    if confluent {
        let value = prefactor * confluent_determinant(a, b, mu);
        return Ok(HcizValue { value, confluent, warning: None });
    }
    let m = DMatrix::from_fn(n, n, |j, l| (mu * a[j] * b[l]).exp());
    let value = prefactor * m.determinant() / (vandermonde(a) * vandermonde(b));
    let warning = near.then(|| "nearly coincident entries: the direct determinant is ill-conditioned".to_string());
    Ok(HcizValue { value, confluent, warning })
}

/// `det[F[a_1..a_j; b_1..b_l]]` for `F(x, y) = e^{μxy}`, with the bivariate divided differences read
/// off `exp(μ J_a ⊗ J_b)`, where `J_x` is lower bidiagonal with the nodes on its diagonal.
fn confluent_determinant(a: &[f64], b: &[f64], mu: f64) -> f64 {
    let n = a.len();
    let bidiagonal = |x: &[f64]| DMatrix::from_fn(n, n, |i, j| if i == j { x[i] } else if i == j + 1 { 1.0 } else { 0.0 });
    let kron = bidiagonal(a).kronecker(&bidiagonal(b)) * mu;
    let e = kron.exp();
    let d = DMatrix::from_fn(n, n, |j, l| e[(j * n + l, 0)]);
    d.determinant()
}

/// Both sides of `∫ Δ(λ) e^{Σ(-λ_j²/4t + μ_j λ_j)} dλ = (2π)^{N/2} (2t)^{N²/2} Δ(μ) e^{t|μ|²}`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdentitySides {
    pub lhs: f64,
    pub rhs: f64,
}

pub fn gaussian_vandermonde_identity(mu: &[f64], t: f64) -> Result<IdentitySides> {
    let n = mu.len();
    if !(2..=3).contains(&n) {
        return Err(Error::invalid("the quadrature side is available for N = 2 and 3"));
    }
    if !(t > 0.0) {
        return Err(Error::invalid("t must be positive"));
    }
    let sd = (2.0 * t).sqrt();
    let bounds: Vec<(f64, f64)> = mu.iter().map(|m| (2.0 * t * m - 12.0 * sd, 2.0 * t * m + 12.0 * sd)).collect();
    let shift: f64 = t * mu.iter().map(|m| m * m).sum::<f64>();
    // integrate e^{-shift} times the integrand, restore afterwards
    let f = |x: &[f64]| {
        let e: f64 = x.iter().zip(mu).map(|(l, m)| -l * l / (4.0 * t) + m * l).sum::<f64>() - shift;
        vandermonde(x) * e.exp()
    };
    let scale = (2.0 * PI * 2.0 * t).powf(n as f64 / 2.0) * sd.powi((n * (n - 1) / 2) as i32);
    let r = box_integral(&f, &bounds, Tolerance::new(1e-11 * scale, 1e-10))?;
    let lhs = r.value * shift.exp();
    let rhs = (2.0 * PI).powf(n as f64 / 2.0) * (2.0 * t).powf((n * n) as f64 / 2.0) * vandermonde(mu) * shift.exp();
    Ok(IdentitySides { lhs, rhs })
}

/// `(N²/2) ∬_{x≠y} [log|x−y| + log|e^x−e^y|] dμ_λ dμ_λ − (N/4t) ∫ x² dμ_λ` for the empirical measure
/// `μ_λ = (1/N) Σ δ_{λ_j}`; equal to the log radial heat density.
pub fn energy_entropy_exponent(lambda: &[f64], t: f64, k: usize) -> Result<f64> {
    let n = lambda.len();
    if n != k + 1 {
        return Err(Error::invalid(format!("expected {} eigenvalues for k = {k}", k + 1)));
    }
    let nf = n as f64;
    let mut pair = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = (lambda[i] - lambda[j]).abs();
                if d == 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                pair += d.ln() + crate::special::log_abs_exp_diff(lambda[i], lambda[j]);
            }
        }
    }
    let pair = pair / (nf * nf);
    let second_moment = lambda.iter().map(|l| l * l).sum::<f64>() / nf;
    Ok(0.5 * nf * nf * pair - nf / (4.0 * t) * second_moment)
}

/// The exponent at the rescaled time `t / N`, where every term is of order `N²`.
pub fn energy_entropy_exponent_rescaled(lambda: &[f64], t: f64, k: usize) -> Result<f64> {
    energy_entropy_exponent(lambda, t / (k + 1) as f64, k)
}

/// The log radial heat density the exponent is compared with.
pub fn log_radial_density(lambda: &[f64], t: f64) -> Result<f64> {
    Ok(eigen_log_density(lambda, &HeatParams::raw(lambda.len(), t)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drho(t: f64, rho: f64) -> f64 {
        d_rho_bipotential(&BiPotentialQuery::new(t, rho, 1e-9).unwrap()).unwrap().value
    }

    #[test]
    fn query_validation() {
        assert!(BiPotentialQuery::new(1.0, 0.0, 1e-8).is_err());
        assert!(BiPotentialQuery::new(1.0, 1.0, 1e-8).is_err());
        assert!(BiPotentialQuery::new(-1.0, 0.5, 1e-8).is_err());
    }

    #[test]
    fn small_rho_integral_is_2t() {
        for &t in &[0.1, 1.0, 5.0, 20.0] {
            let r = small_rho_integral(t, 1e-10).unwrap();
            assert!((r.value / (2.0 * t) - 1.0).abs() < 1e-9, "t={t}: {}", r.value);
        }
    }

    #[test]
    fn amplitude_at_zero_rho() {
        for &l in &[0.01, 0.5, 3.0, 40.0] {
            assert!((amplitude(l, 0.0) - 2.0 * l * l.tanh()).abs() < 1e-12 * (1.0 + l));
        }
        assert_eq!(amplitude(0.0, 0.3), 0.0);
        assert_eq!(amplitude(-1.3, 0.3), amplitude(1.3, 0.3));
    }

    #[test]
    fn direct_and_expanded_agree() {
        for &t in &[0.5, 1.0, 10.0] {
            for &rho in &[1e-3, 0.05, 0.5, 0.95] {
                let q = BiPotentialQuery::new(t, rho, 1e-9).unwrap();
                let a = d_rho_direct(&q).unwrap().value;
                let b = d_rho_expanded(&q).unwrap().value;
                assert!((a - b).abs() < 1e-8 * b.abs(), "t={t} rho={rho}: {a} {b}");
            }
        }
    }

    #[test]
    fn large_time_limit() {
        for &rho in &[0.1, 0.5, 0.9] {
            let limit = -(-rho as f64).ln_1p() / rho;
            assert!((drho(200.0, rho) - limit).abs() < 1e-6 * limit);
        }
        assert!((drho(100.0, 0.5) - 2.0 * 2f64.ln()).abs() < 2e-2);
    }

    #[test]
    fn small_rho_is_finite() {
        let v = drho(1.0, 1e-6);
        assert!(v.abs() < 10.0 && v > 0.0);
    }

    #[test]
    fn increasing_in_rho() {
        for &t in &[0.5, 1.0, 10.0] {
            let vals: Vec<f64> = (1..20).map(|i| drho(t, i as f64 / 20.0)).collect();
            assert!(vals.windows(2).all(|w| w[1] > w[0]), "t={t}: {vals:?}");
            assert!(vals.iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn difference_matches_dilog_at_large_t() {
        let d = bipotential_difference(200.0, 0.3, 0.6, 1e-8).unwrap().value;
        let li = dilog_difference(0.3, 0.6);
        assert!((d - li).abs() < 2e-2 * li.abs());
        let back = bipotential_difference(200.0, 0.6, 0.3, 1e-8).unwrap().value;
        assert!((d + back).abs() < 1e-12);
    }

    #[test]
    fn hciz_examples() {
        assert!((hciz(&[0.7], &[-1.2], 0.5).unwrap() - (0.5f64 * 0.7 * -1.2).exp()).abs() < 1e-15);
        let e = std::f64::consts::E;
        assert!((hciz(&[1.0, 0.0], &[1.0, 0.0], 1.0).unwrap() - (e - 1.0)).abs() < 1e-14);
        assert_eq!(hciz(&[1.0, 2.0], &[3.0, 4.0], 0.0).unwrap(), 1.0);
    }

    #[test]
    fn hciz_symmetries_and_confluence() {
        let a = [0.9, -0.2, 0.4];
        let b = [0.3, 1.1, -0.7];
        let v = hciz(&a, &b, 0.8).unwrap();
        assert!((hciz(&b, &a, 0.8).unwrap() - v).abs() < 1e-12 * v);
        assert!((hciz(&[a[2], a[0], a[1]], &b, 0.8).unwrap() - v).abs() < 1e-12 * v);
        let c = hciz_with(&a, &b, 0.8, HcizMode::Confluent).unwrap().value;
        assert!((c - v).abs() < 1e-10 * v, "{c} {v}");
        // fully degenerate a: integral is exp(μ a Σb)
        let deg = hciz(&[0.5, 0.5, 0.5], &b, 0.8).unwrap();
        let exact = (0.8 * 0.5 * b.iter().sum::<f64>()).exp();
        assert!((deg - exact).abs() < 1e-12 * exact);
        // near-degenerate: continuous across the switch
        let near = hciz(&[0.5 + 1e-8, 0.5, -0.1], &b, 0.8).unwrap();
        let split = hciz(&[0.5 + 1e-4, 0.5, -0.1], &b, 0.8).unwrap();
        assert!((near - split).abs() < 1e-3 * split);
        let warned = hciz_with(&[0.5 + 1e-9, 0.5], &[0.0, 1.0], 1.0, HcizMode::Direct).unwrap();
        assert!(warned.warning.is_some());
    }

    #[test]
    fn gaussian_vandermonde() {
        let s = gaussian_vandermonde_identity(&[1.0, -1.0], 1.0).unwrap();
        assert!((s.lhs / s.rhs - 1.0).abs() < 1e-6);
        let s = gaussian_vandermonde_identity(&[0.0, 0.0], 1.0).unwrap();
        assert_eq!(s.rhs, 0.0);
        assert!(s.lhs.abs() < 1e-8);
    }

    #[test]
    fn energy_entropy_matches_density() {
        let lambda = [1.0, -1.0];
        let direct = (2.0f64).ln() + (1f64.exp() - (-1f64).exp()).ln() - 2.0 / 4.0;
        assert!((energy_entropy_exponent(&lambda, 1.0, 1).unwrap() - direct).abs() < 1e-13);
        let l3 = [0.8, 0.1, -0.9];
        let t = 0.7;
        let e = energy_entropy_exponent(&l3, t, 2).unwrap();
        assert!((e - log_radial_density(&l3, t).unwrap()).abs() < 1e-12);
        let r = energy_entropy_exponent_rescaled(&l3, t, 2).unwrap();
        assert!((r - log_radial_density(&l3, t / 3.0).unwrap()).abs() < 1e-12);
        assert_eq!(energy_entropy_exponent(&[0.0, 0.0], 1.0, 1).unwrap(), f64::NEG_INFINITY);
        assert!(energy_entropy_exponent(&[0.0, 0.0], 1.0, 2).is_err());
    }
}
