use proptest::prelude::*;

use levyma::bounds::{gamma12_proxy, theoretical_rate, Rational};
use levyma::kernels::{arima_coefficients, rho_k, KernelSpec};
use levyma::rng::{sample_symmetric_stable, RngStream};
use levyma::stats::{fit_rate, kolmogorov_distance, Metric};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rates_never_beat_root_n(p in 41i64..400, q in 1i64..20) {
        let ab = Rational::new(p, q);
        prop_assume!(ab > Rational::from_integer(2));
        for m in [Metric::Kolmogorov, Metric::Wasserstein1] {
            let rate = theoretical_rate(ab, m).unwrap();
            prop_assert!(rate.exponent >= Rational::new(-1, 2));
            prop_assert!(rate.exponent < Rational::from_integer(0));
        }
        let k = theoretical_rate(ab, Metric::Kolmogorov).unwrap();
        let w = theoretical_rate(ab, Metric::Wasserstein1).unwrap();
        prop_assert!(k.exponent >= w.exponent);
    }

    #[test]
    fn streams_are_reproducible(seed in any::<u64>(), stream in any::<u64>(), beta in 0.3f64..2.0) {
        let mut a = RngStream::new(seed, stream);
        let mut b = RngStream::new(seed, stream);
        for _ in 0..16 {
            let x = sample_symmetric_stable(&mut a, beta, 1.0).unwrap();
            prop_assert_eq!(x.to_bits(), sample_symmetric_stable(&mut b, beta, 1.0).unwrap().to_bits());
        }
    }

    #[test]
    fn fit_recovers_exact_power_laws(slope in -2.0f64..0.5, c in 0.01f64..100.0) {
        let ns: Vec<f64> = (4..12).map(|e| f64::from(1u32 << e)).collect();
        let vs: Vec<f64> = ns.iter().map(|n| c * n.powf(slope)).collect();
        let fit = fit_rate(&ns, &vs, None).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-10);
        prop_assert!((fit.intercept - c.ln()).abs() < 1e-9);
    }

    #[test]
    fn kolmogorov_distance_is_a_probability(xs in prop::collection::vec(-50.0f64..50.0, 1..200)) {
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        let d = kolmogorov_distance(&xs, |x| 0.5 + x.atan() / std::f64::consts::PI).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn pure_ar_coefficients_are_geometric(phi in -0.95f64..0.95) {
        let b = arima_coefficients(&[phi], &[], 0.0, 40).unwrap();
        for (j, bj) in b.iter().enumerate() {
            prop_assert!((bj - phi.powi(j as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn ou_overlap_matches_closed_form(lambda in 0.1f64..5.0, beta in 0.5f64..2.0, k in 0u64..50) {
        let got = rho_k(&KernelSpec::OuExponential { lambda }, beta, k, 1e-10).unwrap();
        let want = (-lambda * beta * k as f64 / 2.0).exp() / (lambda * beta);
        prop_assert!((got - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn gamma_proxy_is_scale_covariant(n in 2usize..40, c in 0.1f64..10.0) {
        let rho: Vec<f64> = (0..n).map(|k| 1.0 / (1.0 + k as f64).powf(1.3)).collect();
        let scaled: Vec<f64> = rho.iter().map(|v| c * v).collect();
        let a = gamma12_proxy(n, &rho).unwrap();
        let b = gamma12_proxy(n, &scaled).unwrap();
        let want = c.powi(3) * a.gamma1_sq;
        prop_assert!((b.gamma1_sq - want).abs() <= 1e-12 * want);
    }
}
