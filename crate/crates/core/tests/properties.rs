use proptest::prelude::*;
use torusflux::fields::{random_smooth_field, random_smooth_scalar};
use torusflux::flux::{
    energy_flux_lp_direct, gamma_bound, helicity_flux_forms, Advection, FluxKind, FluxSeries, GammaKernel,
};
use torusflux::mollify::{mollify, Mollifier};
use torusflux::norms::interpolation_ratios;
use torusflux::partition::{dyadic_block, varphi, varrho, DyadicDecomposition};
use torusflux::solver::{run, RunOptions, SimState, CFL_SAFETY};
use torusflux::{tfld, TorusGrid};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn profiles_sum_to_one(r in 0.0f64..5000.0) {
        let total: f64 = varrho(r) + (0..20).map(|j| varphi(r / 2f64.powi(j))).sum::<f64>();
        prop_assert!((total - 1.0).abs() < 1e-12, "{total}");
        prop_assert!((0.0..=1.0).contains(&varrho(r)));
    }

    #[test]
    fn gamma_kernel_two_sided_decay(alpha in 0.05f64..0.95, j in 1i64..40) {
        let k = GammaKernel::new(alpha).unwrap();
        prop_assert!((k.value(-j) - 2f64.powf(-(j as f64) * alpha)).abs() < 1e-15);
        prop_assert!((k.value(j) - 2f64.powf(-(1.0 - alpha) * j as f64)).abs() < 1e-15);
        prop_assert_eq!(k.value(0), 1.0);
        // partial sums stay below the closed-form l1 norm
        let partial: f64 = (-j..=j).map(|i| k.value(i)).sum();
        prop_assert!(partial < k.l1_norm());
    }

    #[test]
    fn gamma_bound_homogeneity(c in 0.1f64..10.0, theta in 0.5f64..2.0, n in 0i64..20) {
        let d: Vec<f64> = (0..30).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let cd: Vec<f64> = d.iter().map(|x| c * x).collect();
        let a = gamma_bound(&d, &d, 0.4, None, theta, n).unwrap().value;
        let b = gamma_bound(&cd, &d, 0.4, None, theta, n).unwrap().value;
        let e = gamma_bound(&d, &cd, 0.4, None, theta, n).unwrap().value;
        prop_assert!((b / a - c.powf(theta)).abs() < 1e-10 * c.powf(theta));
        prop_assert!((e / a - c).abs() < 1e-10 * c);
    }

    #[test]
    fn gamma_bound_monotone_in_sequences(bump in 0usize..30, n in 0i64..20) {
        let d = vec![0.5; 30];
        let mut up = d.clone();
        up[bump] += 1.0;
        let a = gamma_bound(&d, &d, 0.3, Some(0.5), 2.0, n).unwrap().value;
        let b = gamma_bound(&up, &up, 0.3, Some(0.5), 2.0, n).unwrap().value;
        prop_assert!(b > a);
    }

    #[test]
    fn flux_series_slope_ignores_scale(c in 1e-6f64..1e6, s in -2.0f64..2.0) {
        let idx: Vec<f64> = (1..7).map(f64::from).collect();
        let vals: Vec<f64> = idx.iter().map(|n| c * 2f64.powf(s * n)).collect();
        let series = FluxSeries::new(FluxKind::EnergyLp, idx, vals).unwrap();
        prop_assert!((series.slope() - s).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn blocks_reconstruct(seed in any::<u64>(), decay in 0.0f64..3.0) {
        let g = TorusGrid::new(2, 32).unwrap();
        let f = random_smooth_scalar(&g, decay + 0.1, seed).unwrap();
        let r = DyadicDecomposition::new(&f).unwrap().reconstruct().unwrap();
        prop_assert!(r.rel_l2_diff(&f) < 1e-12);
    }

    #[test]
    fn interpolation_never_exceeds_one(seed in any::<u64>(), j in -1i32..=3) {
        let g = TorusGrid::new(2, 32).unwrap();
        let f = random_smooth_scalar(&g, 0.5, seed).unwrap();
        let b = dyadic_block(&f, j).unwrap();
        for r in interpolation_ratios(&b, &[1.25, 2.0, 3.0]).unwrap().into_iter().flatten() {
            prop_assert!(r <= 1.0 + 1e-12, "{r}");
        }
    }

    #[test]
    fn mollifier_is_a_contraction(eps in 0.4f64..0.78, seed in any::<u64>()) {
        let g = TorusGrid::new(2, 64).unwrap();
        let m = Mollifier::new(&g, eps).unwrap();
        prop_assert!((m.mass() - 1.0).abs() < 1e-12);
        prop_assert!(m.kernel_hat.iter().all(|&x| x.abs() <= 1.0 + 1e-12));
        let f = random_smooth_scalar(&g, 1.0, seed).unwrap();
        prop_assert!(mollify(&f, &m).unwrap().norm2_sq() <= f.norm2_sq() * (1.0 + 1e-12));
    }

    #[test]
    fn tfld_round_trip(seed in any::<u64>(), dim in 2usize..=3) {
        let g = TorusGrid::new(dim, 16).unwrap();
        let (v, _) = random_smooth_field(&g, 2.0, seed).unwrap();
        let back = tfld::from_bytes(&tfld::to_bytes(&v)).unwrap();
        prop_assert_eq!(tfld::to_bytes(&back), tfld::to_bytes(&v));
    }

    #[test]
    fn energy_flux_forms_agree(seed in any::<u64>(), n in 1i32..=3) {
        let g = TorusGrid::new(2, 32).unwrap();
        let (v, _) = random_smooth_field(&g, 1.5, seed).unwrap();
        let fast = Advection::new(&v).unwrap().energy_lp(n).unwrap();
        let direct = energy_flux_lp_direct(&v, n).unwrap();
        prop_assert!((fast - direct).abs() <= 1e-10 * (1.0 + direct.abs()), "{fast} {direct}");
    }

    #[test]
    fn helicity_forms_agree(seed in any::<u64>(), n in 0i32..=2) {
        let g = TorusGrid::new(3, 16).unwrap();
        let (v, _) = random_smooth_field(&g, 2.0, seed).unwrap();
        let h = helicity_flux_forms(&v, n).unwrap();
        prop_assert!(h.rel_diff <= 1e-8, "{h:?}");
    }
}

/// Energy drift of RK4 falls by roughly 2^4 when the step halves.
#[test]
fn energy_drift_is_fourth_order() {
    let g = TorusGrid::new(2, 32).unwrap();
    let (v, _) = random_smooth_field(&g, 1.5, 5).unwrap();
    let bound = CFL_SAFETY * g.spacing() / SimState::from_velocity(&v).unwrap().max_speed();
    let drift = |dt: f64| {
        let opts = RunOptions { t_final: 1.0, dt, snapshot_every: None, probes: vec![] };
        run(&v, &opts, |_| Ok(())).unwrap().energy_drift()
    };
    let (coarse, fine) = (drift(0.9 * bound), drift(0.45 * bound));
    assert!(fine > 1e-11, "drift {fine} too close to roundoff for an order estimate");
    let order = (coarse / fine).log2();
    assert!((3.5..=5.5).contains(&order), "order {order}, drifts {coarse} {fine}");
}
