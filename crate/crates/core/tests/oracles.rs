//! Cross-checks against independent computations written here from first principles.

use bergman_heat::analytic_oracle::{bipotential_difference, d_rho_bipotential, hciz, BiPotentialQuery};
use bergman_heat::boundary_zeros::{sample_section, zeros_of, GaussianSection};
use bergman_heat::geometry::{bergman_kernel, build_basis, ChartPoint, PointPair};
use bergman_heat::heat_sampler::{mcmc_eigenvalues, HeatParams, McmcConfig};
use bergman_heat::linalg::c64;
use bergman_heat::special::{number_variance_constant, smooth_variance_constant};
use bergman_heat::statistics::{batch_means, ZonalFunction};
use bergman_heat::quadrature::Tolerance;
use nalgebra::DVector;
use std::f64::consts::PI;

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `∂_ρ I = (2t - J)/ρ` with `J` integrated over `λ > 0` in plain floating point.
fn d_rho_naive(t: f64, rho: f64) -> f64 {
    let g = |l: f64| {
        let c = 1.0 / l.tanh().powi(2);
        let q = ((1.0 - rho) / (c - rho)).sqrt();
        2.0 * q * ((1.0 + q) * (c - rho).sqrt() * l.sinh()).ln()
    };
    let w = |l: f64| {
        (-(l - t).powi(2) / (2.0 * t)).exp() * (1.0 + (-2.0 * l).exp()) / 2.0 / (2.0 * PI * t).sqrt()
    };
    let bound = t + 40.0 * t.sqrt() + 20.0;
    let j = 2.0 * simpson(|l| if l == 0.0 { 0.0 } else { w(l) * g(l) }, 0.0, bound, 400_000);
    (2.0 * t - j) / rho
}

#[test]
fn d_rho_matches_plain_simpson() {
    for &(t, rho) in &[(0.5, 0.3), (1.0, 0.5), (2.0, 0.8), (3.0, 0.1)] {
        let v = d_rho_bipotential(&BiPotentialQuery::new(t, rho, 1e-10).unwrap()).unwrap().value;
        let naive = d_rho_naive(t, rho);
        assert!((v - naive).abs() < 1e-7 * naive.abs(), "t={t} rho={rho}: {v} vs {naive}");
    }
}

#[test]
fn bipotential_difference_is_the_integral_of_d_rho() {
    let (t, a, b) = (1.0, 0.3, 0.6);
    let v = bipotential_difference(t, a, b, 1e-9).unwrap().value;
    let s = simpson(|r| d_rho_naive(t, r), a, b, 40);
    assert!((v - s).abs() < 1e-6, "{v} {s}");
}

#[test]
fn hciz_two_by_two_from_the_unitary_parametrization() {
    // for U(2), |U₁₁|² = |U₂₂|² = u is uniform on [0, 1]
    let (a, b, mu) = ([0.9, -0.2], [0.4, -0.7], 1.3);
    let diag = a[0] * b[0] + a[1] * b[1];
    let off = a[0] * b[1] + a[1] * b[0];
    let expected = simpson(|u| (mu * (diag * u + off * (1.0 - u))).exp(), 0.0, 1.0, 2000);
    assert!((hciz(&a, &b, mu).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn bergman_kernel_closed_form() {
    let basis = build_basis(5).unwrap();
    let (z, w) = (c64(0.3, -0.8), c64(-1.1, 0.4));
    let kernel = bergman_kernel(&basis, &PointPair::new(ChartPoint::finite(z), ChartPoint::finite(w))).unwrap();
    let expected = (c64(1.0, 0.0) + z * w.conj()).powu(5) * 6.0;
    assert!((kernel - expected).norm() < 1e-12 * expected.norm());
}

#[test]
fn heat_measure_mean_for_n2() {
    let params = HeatParams::raw(2, 1.0).unwrap();
    // E[λ_max] from the density on λ = (x, -x)
    let density = |x: f64| 2.0 * x * 2.0 * x.sinh() * (-x * x / 2.0).exp();
    let norm = simpson(density, 0.0, 20.0, 20_000);
    let mean = simpson(|x| x * density(x), 0.0, 20.0, 20_000) / norm;
    let run = mcmc_eigenvalues(&params, 40_000, 3, &McmcConfig::default()).unwrap();
    let lmax: Vec<f64> = run.samples.iter().map(|l| l.iter().cloned().fold(f64::MIN, f64::max)).collect();
    assert!(batch_means(&lmax).z_score(mean).abs() < 3.5);
}

#[test]
fn universal_constants_from_direct_sums() {
    // ζ(s) by partial sums with an integral tail correction
    let zeta = |s: f64| {
        let m = 200_000;
        let partial: f64 = (1..=m).map(|n| (n as f64).powf(-s)).sum();
        partial + (m as f64).powf(1.0 - s) / (s - 1.0) - 0.5 * (m as f64).powf(-s)
    };
    let nu = zeta(1.5) / (8.0 * PI.powf(1.5));
    assert!((number_variance_constant() - nu).abs() < 1e-10);
    assert!((smooth_variance_constant() - zeta(3.0) / (16.0 * PI)).abs() < 1e-12);
}

#[test]
fn bump_laplacian_norm_by_simpson() {
    let a = 2.0;
    let f = ZonalFunction::bump(a);
    // Δ e^{a(x-1)} = ((1-x²) a² - 2 x a) e^{a(x-1)}
    let lap = |x: f64| ((1.0 - x * x) * a * a - 2.0 * x * a) * (a * (x - 1.0)).exp();
    let expected = 4.0 * 2.0 * PI * simpson(|x| lap(x).powi(2), -1.0, 1.0, 2000);
    let v = f.laplacian_norm_sq(Tolerance::new(1e-14, 1e-12)).unwrap();
    assert!((v - expected).abs() < 1e-10 * expected);
}

#[test]
fn zeros_satisfy_the_section() {
    let k = 20;
    let basis = build_basis(k).unwrap();
    let section = sample_section(k, 11);
    let zeros = zeros_of(&section, &basis).unwrap();
    assert_eq!(zeros.len(), k);
    for p in &zeros.roots {
        let values = basis.values_at(p);
        let s: bergman_heat::linalg::C64 = section.c.iter().zip(values.iter()).map(|(c, v)| c * v).sum();
        let scale: f64 = section.c.iter().zip(values.iter()).map(|(c, v)| (c * v).norm()).sum();
        assert!(s.norm() < 1e-9 * scale);
    }
    // the linear case by hand: s = c₀√2 + c₁√2 z vanishes at -c₀/c₁
    let b1 = build_basis(1).unwrap();
    let lin = GaussianSection::new(DVector::from_vec(vec![c64(0.5, 1.0), c64(2.0, -1.0)])).unwrap();
    let z = zeros_of(&lin, &b1).unwrap();
    assert!((z.roots[0].z + c64(0.5, 1.0) / c64(2.0, -1.0)).norm() < 1e-14);
}

#[test]
fn hciz_with_small_spread() {
    // 50-digit evaluation of the determinant formula
    let a = [0.5395592316561093, 0.5854007281405028, 0.4336229852904248];
    let b = [0.7601349193598067, 0.5384720770111042, 0.7651483302205425];
    let mu = -0.12737977826094343;
    let expected = 0.872_342_307_302_018_1;
    assert!((hciz(&a, &b, mu).unwrap() - expected).abs() < 1e-13);
    assert!((hciz(&b, &a, mu).unwrap() - expected).abs() < 1e-13);
}
