use bergman_heat::analytic_oracle::{d_rho_bipotential, hciz, BiPotentialQuery};
use bergman_heat::geometry::{berezin_rho, build_basis, rotate, ChartPoint, PointPair, SectionBasis};
use bergman_heat::heat_sampler::{eigen_log_density, haar_unitary, HeatParams};
use bergman_heat::linalg::{c64, unitarity_defect, C64};
use bergman_heat::matrix_metric::{polar_decompose, KahlerPotentialSample, PolarCoords};
use bergman_heat::quadrature::{sphere_integral, Tolerance};
use bergman_heat::roots::{polynomial_roots, RootSolver};
use bergman_heat::special::dilog;
use bergman_heat::statistics::ks_two_sample;
use proptest::prelude::*;
use std::f64::consts::PI;

fn point() -> impl Strategy<Value = ChartPoint> {
    (-1.0f64..1.0, 0.0f64..(2.0 * PI)).prop_map(|(x, phi)| ChartPoint::from_polar(x, phi))
}

fn centered(raw: Vec<f64>) -> Vec<f64> {
    let m = raw.iter().sum::<f64>() / raw.len() as f64;
    raw.into_iter().map(|v| v - m).collect()
}

fn polar(n: usize, raw: Vec<f64>, seed: u64) -> PolarCoords {
    PolarCoords::new(centered(raw[..n].to_vec()), haar_unitary(n, seed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rho_is_symmetric_and_bounded(k in 1usize..12, a in point(), b in point()) {
        let basis = build_basis(k).unwrap();
        let r = berezin_rho(&basis, &PointPair::new(a, b));
        let s = berezin_rho(&basis, &PointPair::new(b, a));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&r));
        prop_assert!((r - s).abs() < 1e-12);
        prop_assert!((berezin_rho(&basis, &PointPair::new(a, a)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rho_is_rotation_invariant(k in 1usize..10, a in point(), b in point(), re in -1.0f64..1.0, im in -1.0f64..1.0, br in -1.0f64..1.0) {
        let basis = build_basis(k).unwrap();
        let (p, q) = (c64(re, im), c64(br, 0.3));
        prop_assume!(p.norm() + q.norm() > 1e-3);
        let before = berezin_rho(&basis, &PointPair::new(a, b));
        let after = berezin_rho(&basis, &PointPair::new(rotate(&a, p, q), rotate(&b, p, q)));
        prop_assert!((before - after).abs() < 1e-10, "{before} {after}");
    }

    #[test]
    fn rho_ignores_unitary_change_of_basis(k in 1usize..8, seed in 0u64..1000, a in point(), b in point()) {
        let basis = build_basis(k).unwrap();
        let w = haar_unitary(k + 1, seed);
        let rotated = SectionBasis { k, coeffs: &w * &basis.coeffs };
        let pair = PointPair::new(a, b);
        prop_assert!((berezin_rho(&basis, &pair) - berezin_rho(&rotated, &pair)).abs() < 1e-12);
    }

    #[test]
    fn polar_round_trip(n in 2usize..6, raw in prop::collection::vec(-3.0f64..3.0, 6), seed in 0u64..1000) {
        let p = polar(n, raw, seed);
        let back = polar_decompose(&p.to_matrix().unwrap()).unwrap();
        for (x, y) in p.lambda.iter().zip(&back.lambda) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        prop_assert!(unitarity_defect(&back.unitary) < 1e-10);
        let m1 = p.to_matrix().unwrap();
        let m2 = back.to_matrix().unwrap();
        let diff = (m1.entries() - m2.entries()).norm() / m1.entries().norm();
        prop_assert!(diff < 1e-9);
    }

    #[test]
    fn heat_density_is_symmetric(raw in prop::collection::vec(-4.0f64..4.0, 4), t in 0.1f64..10.0) {
        let lambda = centered(raw);
        let params = HeatParams::raw(4, t).unwrap();
        let base = eigen_log_density(&lambda, &params);
        let mut permuted = lambda.clone();
        permuted.rotate_left(1);
        let negated: Vec<f64> = lambda.iter().map(|v| -v).collect();
        prop_assert!((eigen_log_density(&permuted, &params) - base).abs() < 1e-10 * (1.0 + base.abs()));
        prop_assert!((eigen_log_density(&negated, &params) - base).abs() < 1e-10 * (1.0 + base.abs()));
    }

    #[test]
    fn dilog_identities(x in 1e-6f64..(1.0 - 1e-6)) {
        let reflection = dilog(x) + dilog(1.0 - x) - (PI * PI / 6.0 - x.ln() * (1.0 - x).ln());
        prop_assert!(reflection.abs() < 1e-12);
        // duplication: Li2(x²) = 2 (Li2(x) + Li2(-x))
        let duplication = dilog(x * x) - 2.0 * (dilog(x) + dilog(-x));
        prop_assert!(duplication.abs() < 1e-12);
    }

    #[test]
    fn d_rho_increases_with_rho(t in 0.2f64..5.0, r1 in 0.01f64..0.98, gap in 0.005f64..0.5) {
        let r2 = (r1 + gap).min(0.99);
        prop_assume!(r2 > r1);
        let a = d_rho_bipotential(&BiPotentialQuery::new(t, r1, 1e-9).unwrap()).unwrap().value;
        let b = d_rho_bipotential(&BiPotentialQuery::new(t, r2, 1e-9).unwrap()).unwrap().value;
        prop_assert!(b > a);
    }

    #[test]
    fn hciz_symmetries(a in prop::collection::vec(-1.0f64..1.0, 3), b in prop::collection::vec(-1.0f64..1.0, 3), mu in -2.0f64..2.0, shift in -1.0f64..1.0) {
        prop_assume!(mu.abs() > 1e-3);
        let v = hciz(&a, &b, mu).unwrap();
        let swapped = hciz(&b, &a, mu).unwrap();
        let permuted = hciz(&[a[2], a[0], a[1]], &b, mu).unwrap();
        let shifted: Vec<f64> = a.iter().map(|x| x + shift).collect();
        let expected_shift = v * (mu * shift * b.iter().sum::<f64>()).exp();
        prop_assert!((v - swapped).abs() < 1e-6 * v.abs());
        prop_assert!((v - permuted).abs() < 1e-6 * v.abs());
        prop_assert!((hciz(&shifted, &b, mu).unwrap() - expected_shift).abs() < 1e-6 * expected_shift.abs());
    }

    #[test]
    fn roots_are_recovered(raw in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 2..12)) {
        let roots: Vec<C64> = raw.iter().map(|(a, b)| c64(*a, *b)).collect();
        // well separated roots only
        for i in 0..roots.len() {
            for j in 0..i {
                prop_assume!((roots[i] - roots[j]).norm() > 0.05);
            }
        }
        let mut coeffs = vec![c64(1.0, 0.0)];
        for r in &roots {
            let mut next = vec![c64(0.0, 0.0); coeffs.len() + 1];
            for (i, c) in coeffs.iter().enumerate() {
                next[i + 1] += c;
                next[i] -= c * r;
            }
            coeffs = next;
        }
        for solver in [RootSolver::Companion, RootSolver::Aberth] {
            let found = polynomial_roots(&coeffs, solver).unwrap();
            prop_assert_eq!(found.finite.len(), roots.len());
            for r in &roots {
                let nearest = found.finite.iter().map(|z| (z - r).norm()).fold(f64::INFINITY, f64::min);
                prop_assert!(nearest < 1e-6, "{:?} missed {}", solver, r);
            }
        }
    }

    #[test]
    fn ks_is_zero_on_itself_and_bounded(a in prop::collection::vec(-5.0f64..5.0, 1..200), b in prop::collection::vec(-5.0f64..5.0, 1..200)) {
        prop_assert_eq!(ks_two_sample(&a, &a), 0.0);
        let d = ks_two_sample(&a, &b);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!((d - ks_two_sample(&b, &a)).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn metric_keeps_total_area(k in 1usize..5, raw in prop::collection::vec(-1.5f64..1.5, 5), seed in 0u64..1000) {
        let basis = build_basis(k).unwrap();
        let sample = KahlerPotentialSample::from_polar(polar(k + 1, raw, seed), k).unwrap();
        let r = sphere_integral(
            |x, phi| 0.5 * sample.density_ratio(&basis, &ChartPoint::from_polar(x, phi)).unwrap(),
            &[],
            &[],
            Tolerance::new(1e-10, 1e-10),
        )
        .unwrap();
        prop_assert!((r.value - 2.0 * PI).abs() < 1e-7, "{}", r.value);
    }

    #[test]
    fn relative_potential_does_not_depend_on_chart(k in 1usize..6, raw in prop::collection::vec(-2.0f64..2.0, 6), seed in 0u64..1000, re in 0.5f64..2.0, im in -1.0f64..1.0) {
        let basis = build_basis(k).unwrap();
        let sample = KahlerPotentialSample::from_polar(polar(k + 1, raw, seed), k).unwrap();
        let z = ChartPoint::new(re, im);
        let relative = sample.relative_potential(&basis, &z).unwrap();
        // the chart-z potentials differ by the same log weight
        let identity = KahlerPotentialSample::identity(k);
        let direct = sample.potential(&basis, &z).unwrap() - identity.potential(&basis, &z).unwrap();
        prop_assert!((relative - direct).abs() < 1e-10);
    }
}
