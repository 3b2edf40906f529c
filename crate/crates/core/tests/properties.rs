use fracdens::bridge::{endpoint_functional, BridgeMethod, ExactBridgeSampler, SdeBridgeSampler};
use fracdens::density::{conditional_density_many, ConditioningPath};
use fracdens::frac_calc::{rl_derivative, rl_integral};
use fracdens::grid::{Grid, SampledFunction};
use fracdens::noise::{fou_stationary_scalar, fou_variance, HurstConstants};
use fracdens::rng::stream_rng;
use fracdens::sde::{DriftSpec, ModelSpec};
use fracdens::stats::normal_pdf;
use fracdens::validate::fit_sandwich;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn integral_then_derivative_recovers_smooth_inputs(
        alpha in 0.05f64..0.95, c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, w in 0.5f64..4.0,
    ) {
        let g = Grid::uniform(1.0, 800).unwrap();
        let f = SampledFunction::from_fn(g, |t| c1 * t + c2 * (w * t).sin());
        let back = rl_derivative(&rl_integral(&f, alpha).unwrap(), alpha).unwrap();
        let scale = 1.0 + c1.abs() + c2.abs() * w;
        for (x, y) in back.values().iter().zip(f.values()) {
            prop_assert!((x - y).abs() <= 5e-3 * scale, "{x} vs {y}");
        }
    }

    #[test]
    fn integrals_compose(a in 0.05f64..0.45, b in 0.05f64..0.45) {
        // inputs vanishing at 0; a jump at 0 converges only like dt^(a + b)
        let g = Grid::uniform(1.0, 400).unwrap();
        let f = SampledFunction::from_fn(g, |t| (2.0 * t).sin());
        let ab = rl_integral(&rl_integral(&f, a).unwrap(), b).unwrap();
        let direct = rl_integral(&f, a + b).unwrap();
        for (x, y) in ab.values().iter().zip(direct.values()) {
            prop_assert!((x - y).abs() < 1e-3, "{x} vs {y}");
        }
    }

    #[test]
    fn sde_bridge_is_pinned(h in 0.05f64..0.95, x in -5.0f64..5.0, n in 4usize..120, seed in 0u64..1000) {
        let g = Grid::uniform(1.3, n).unwrap();
        let s = SdeBridgeSampler::new(g, h).unwrap();
        let p = s.sample(&[x], &mut stream_rng(seed, 0));
        let e = endpoint_functional(&p, h).unwrap()[0];
        prop_assert!((e - x).abs() <= 1e-11 * (1.0 + x.abs()), "{e} vs {x}");
        prop_assert_eq!(p.x_values.at(0)[0], 0.0);
    }

    #[test]
    fn exact_bridge_is_equivariant_in_the_endpoint(h in 0.1f64..0.9, x in -3.0f64..3.0, seed in 0u64..1000) {
        // X^x = X^0 + mean^x for the same free draw
        let g = Grid::uniform(1.0, 40).unwrap();
        let s = ExactBridgeSampler::new(g, h).unwrap();
        let free = s.draw_free(1, &mut stream_rng(seed, 3));
        let p0 = s.condition(&free, &[0.0]);
        let px = s.condition(&free, &[x]);
        let m = s.mean(&[x]);
        for k in 0..=40 {
            prop_assert!((px.x_values.at(k)[0] - p0.x_values.at(k)[0] - m.at(k)[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_drift_gives_the_liouville_gaussian(
        h in 0.1f64..0.9, sigma in 0.2f64..3.0, t in 0.2f64..3.0, y0 in -2.0f64..2.0, y in -4.0f64..4.0,
    ) {
        let m = ModelSpec::scalar(DriftSpec::zero(1), sigma, h).unwrap();
        let ell = ConditioningPath::constant(Grid::uniform(t, 20).unwrap(), &[y0]);
        let e = conditional_density_many(&m, None, &ell, &[vec![y]], t, 8, BridgeMethod::Sde, 1).unwrap();
        let var = sigma * sigma * HurstConstants::new(h).unwrap().liouville_variance(t);
        let exact = normal_pdf(y, y0, var);
        prop_assert!((e[0].value - exact).abs() <= 1e-12 * exact.max(1e-300));
        prop_assert_eq!(e[0].stderr, 0.0);
    }

    #[test]
    fn estimates_are_positive_and_finite(h in 0.2f64..0.8, y in -3.0f64..3.0, a in 0.5f64..3.0) {
        let m = ModelSpec::scalar(DriftSpec::tanh_well(a, 1), 1.0, h).unwrap();
        let ell = ConditioningPath::constant(Grid::uniform(1.0, 50).unwrap(), &[0.3]);
        for method in [BridgeMethod::ExactConditioning, BridgeMethod::Sde] {
            let e = conditional_density_many(&m, None, &ell, &[vec![y]], 1.0, 64, method, 5).unwrap();
            prop_assert!(e[0].value > 0.0 && e[0].value.is_finite());
            prop_assert!(e[0].stderr.is_finite());
        }
    }

    #[test]
    fn fou_variance_matches_ou_at_half(lambda in 0.1f64..5.0, t in 0.05f64..5.0) {
        let v = fou_variance(lambda, 0.5, t).unwrap();
        let ou = -(-2.0 * lambda * t).exp_m1() / (2.0 * lambda);
        prop_assert!((v - ou).abs() < 1e-8 * (1.0 + ou), "{v} vs {ou}");
    }

    #[test]
    fn sandwich_recovers_gaussian_rates(c in 0.05f64..3.0, a in -2.0f64..2.0) {
        let r: Vec<f64> = (0..11).map(|k| (k as f64 * 0.4 - 2.0).powi(2)).collect();
        let lp: Vec<f64> = r.iter().map(|x| a - c * x).collect();
        let s = fit_sandwich(&r, &lp, &lp, 1e-3).unwrap();
        prop_assert!((s.c_lower - c).abs() < 1e-9 && (s.c_upper - c).abs() < 1e-9);
        for (x, l) in r.iter().zip(&lp) {
            prop_assert!(s.a_lower - s.c_lower * x <= l + 1e-9);
            prop_assert!(s.a_upper - s.c_upper * x >= l - 1e-9);
        }
    }
}

#[test]
fn stationary_fou_variance_matches_closed_form() {
    // lambda^(-2H) Gamma(2H + 1) / 2
    for h in [0.3, 0.5, 0.7] {
        for lambda in [0.5, 1.0, 2.0] {
            let v = fou_stationary_scalar(lambda, h).unwrap();
            let exact = lambda.powf(-2.0 * h) * lanczos_gamma(2.0 * h + 1.0) / 2.0;
            assert!((v - exact).abs() < 1e-6 * exact, "H={h} lambda={lambda}: {v} vs {exact}");
        }
    }
}

/// Lanczos gamma, independent of the crate's own.
fn lanczos_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}
