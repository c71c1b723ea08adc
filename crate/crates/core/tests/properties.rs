use proptest::prelude::*;

use nvdeer::analysis::biexp::{biexp_external, biexp_internal};
use nvdeer::analysis::{
    biexp_value_and_gradient, extract_min, fit_lorentzian, lorentzian_value_and_gradient, AxisKind, CurvePoint, DeerCurve,
};
use nvdeer::analytic::{eq1_floor, FloorParams};
use nvdeer::bloch::{bloch_evolve, BlochIntegrator, BlochState, RelaxationParams};
use nvdeer::geometry::DetuningShape;
use nvdeer::quantum::{deer_signal_quantum, InitialState, QuantumOptions};
use nvdeer::sequence::{NvAction, RadicalAction, Segment};
use nvdeer::{build_deer_timeline, sample_configuration, DriveParams, NvSite, SamplingParams};

fn sampling(density: f64, rmax: f64, min_sep: f64, max_targets: Option<usize>) -> SamplingParams {
    SamplingParams {
        density_per_nm2: density,
        rmax_factor: rmax,
        min_separation_nm: min_sep,
        detuning_fwhm_mhz: 20.0,
        detuning_shape: DetuningShape::Lorentzian,
        max_targets,
    }
}

fn central_difference<const N: usize>(f: impl Fn(&[f64; N]) -> f64, p: &[f64; N], i: usize) -> f64 {
    let h = 1e-6 * p[i].abs().max(1.0);
    let (mut a, mut b) = (*p, *p);
    a[i] += h;
    b[i] -= h;
    (f(&a) - f(&b)) / (2.0 * h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn density_estimate_inverts_the_floor(sigma in 0.001f64..1.0, d in 3.0f64..20.0, tau in 100.0f64..2000.0) {
        let floor = eq1_floor(&FloorParams { density_per_nm2: sigma, depth_nm: d, tau_ns: tau }).unwrap();
        prop_assume!(floor > 1e-300);
        let est = nvdeer::analysis::estimate_density(floor, d, tau).unwrap();
        prop_assert!((est.sigma_hat_per_nm2 - sigma).abs() <= 1e-9 * sigma);
    }

    #[test]
    fn density_estimate_scaling(s in 0.01f64..0.99, d in 3.0f64..20.0, tau in 100.0f64..2000.0, k in 1.1f64..3.0) {
        let base = nvdeer::analysis::estimate_density(s, d, tau).unwrap().sigma_hat_per_nm2;
        let lower = nvdeer::analysis::estimate_density(s * 0.9, d, tau).unwrap().sigma_hat_per_nm2;
        prop_assert!(lower > base);
        let deeper = nvdeer::analysis::estimate_density(s, d * k, tau).unwrap().sigma_hat_per_nm2;
        prop_assert!((deeper / base - k.powi(4)).abs() < 1e-9 * k.powi(4));
        let longer = nvdeer::analysis::estimate_density(s, d, tau * k).unwrap().sigma_hat_per_nm2;
        prop_assert!((longer / base - k.powi(-2)).abs() < 1e-9);
    }

    #[test]
    fn extract_min_follows_shifts(
        ys in prop::collection::vec(0.0f64..1.0, 7..40),
        shift in -0.5f64..0.5,
        dx in -300.0f64..300.0,
        half in 0usize..4,
    ) {
        let window = 2 * half + 1;
        let x: Vec<f64> = (0..ys.len()).map(|i| 10.0 * i as f64).collect();
        let base = extract_min(&DeerCurve::from_xy(AxisKind::TsNs, &x, &ys).unwrap(), window).unwrap();
        let y2: Vec<f64> = ys.iter().map(|y| y + shift).collect();
        let x2: Vec<f64> = x.iter().map(|x| x + dx).collect();
        let moved = extract_min(&DeerCurve::from_xy(AxisKind::TsNs, &x2, &y2).unwrap(), window).unwrap();
        prop_assert!((moved.min_signal - base.min_signal - shift).abs() < 1e-12);
        // Rounding in the shift can break exact ties between smoothed values.
        if moved.index == base.index {
            prop_assert!((moved.x_at_min - base.x_at_min - dx).abs() < 1e-9);
        }
    }

    #[test]
    fn lorentzian_fit_ignores_input_order(seed in any::<u64>(), center in 640.0f64..660.0, fwhm in 10.0f64..30.0) {
        let x: Vec<f64> = (0..31).map(|i| 610.0 + 3.0 * i as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &f)| {
                let noise = 0.004 * (((i as u64).wrapping_mul(2654435761) ^ seed) % 1000) as f64 / 1000.0;
                0.95 - 0.4 / (1.0 + (2.0 * (f - center) / fwhm).powi(2)) + noise
            })
            .collect();
        let points: Vec<CurvePoint> =
            x.iter().zip(&y).map(|(&x, &s)| CurvePoint { x, signal_mean: s, signal_sem: 0.0, n: 1 }).collect();
        let mut shuffled = points.clone();
        let n = shuffled.len();
        for i in 0..n {
            let j = (seed.rotate_left(i as u32) as usize) % n;
            shuffled.swap(i, j);
        }
        let a = fit_lorentzian(&DeerCurve::new(AxisKind::FrequencyMhz, points).unwrap()).unwrap();
        let b = fit_lorentzian(&DeerCurve::from_unsorted(AxisKind::FrequencyMhz, shuffled).unwrap()).unwrap();
        prop_assert_eq!(a.values, b.values);
    }

    #[test]
    fn lorentzian_gradient_matches_differences(
        c in 600.0f64..700.0, w in 1.0f64..50.0, a in -1.0f64..1.0, b in 0.0f64..1.0, x in 580.0f64..720.0,
    ) {
        let p = [c, w, a, b];
        let (_, g) = lorentzian_value_and_gradient(&p, x);
        for i in 0..4 {
            let fd = central_difference(|q| lorentzian_value_and_gradient(q, x).0, &p, i);
            prop_assert!((g[i] - fd).abs() < 1e-6 * (1.0 + fd.abs()), "param {}: {} vs {}", i, g[i], fd);
        }
    }

    #[test]
    fn biexp_gradient_matches_differences(
        a1 in -1.0f64..1.0, ta in 0.05f64..2.0, a2 in -1.0f64..1.0, extra in 0.05f64..5.0, c in -0.5f64..0.5, t in 0.0f64..5.0,
    ) {
        let q = biexp_internal(&[a1, ta, a2, ta + extra, c]).unwrap();
        let ext = biexp_external(&q);
        prop_assert!((ext[1] - ta).abs() < 1e-12 && (ext[3] - ta - extra).abs() < 1e-9);
        let (_, g) = biexp_value_and_gradient(&q, t);
        for i in 0..5 {
            let fd = central_difference(|p| biexp_value_and_gradient(p, t).0, &q, i);
            prop_assert!((g[i] - fd).abs() < 1e-6 * (1.0 + fd.abs()), "param {}: {} vs {}", i, g[i], fd);
        }
    }

    #[test]
    fn bloch_without_relaxation_keeps_length(
        rabi in 0.0f64..25.0, detuning in -30.0f64..30.0, duration in 0.0f64..900.0,
        theta in 0.0f64..3.14159, phi in 0.0f64..6.28318, len in 0.1f64..1.0, rk4 in any::<bool>(),
    ) {
        let m0 = [len * theta.sin() * phi.cos(), len * theta.sin() * phi.sin(), len * theta.cos()];
        let seg = Segment { duration_ns: duration, nv_action: NvAction::None, radical: RadicalAction::Drive };
        let drive = DriveParams { rabi_mhz: rabi, ..Default::default() };
        let integrator = if rk4 { BlochIntegrator::Rk4 } else { BlochIntegrator::Exact };
        let step = bloch_evolve(BlochState { m: m0, time_ns: 0.0 }, &seg, detuning, &drive, &RelaxationParams::default(), integrator)
            .unwrap();
        prop_assert!((step.state.norm() - len).abs() < 1e-9);
        prop_assert!(step.mz_integral_us.abs() <= len * duration / 1000.0 + 1e-12);
    }

    #[test]
    fn bloch_relaxation_never_grows_transverse(
        rabi in 0.0f64..25.0, detuning in -30.0f64..30.0, duration in 0.0f64..900.0, t2 in 0.01f64..5.0,
    ) {
        let relax = RelaxationParams::new(None, Some(t2)).unwrap();
        let seg = Segment { duration_ns: duration, nv_action: NvAction::None, radical: RadicalAction::Drive };
        let drive = DriveParams { rabi_mhz: rabi, ..Default::default() };
        let step = bloch_evolve(BlochState::along_z(1.0), &seg, detuning, &drive, &relax, BlochIntegrator::Exact).unwrap();
        prop_assert!(step.state.norm() <= 1.0 + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sampled_geometry_respects_its_constraints(
        seed in any::<u64>(), density in 0.01f64..0.5, depth in 3.0f64..15.0, rmax in 1.0f64..3.0, min_sep in 0.0f64..0.8,
        cap in prop::option::of(1usize..20),
    ) {
        let params = sampling(density, rmax, min_sep, cap);
        let nv = NvSite::with_depth(depth);
        let config = match sample_configuration(&params, &nv, seed) {
            Ok(c) => c,
            Err(nvdeer::DeerError::Sampling(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let radius = params.disk_radius_nm(&nv);
        for t in &config.targets {
            prop_assert!(t.position_nm[0].hypot(t.position_nm[1]) <= radius);
            prop_assert_eq!(t.position_nm[2], 0.0);
            prop_assert!(t.detuning_mhz.abs() <= 5.0 * 20.0);
        }
        for j in 0..config.len() {
            for k in 0..j {
                let (a, b) = (config.targets[j].position_nm, config.targets[k].position_nm);
                prop_assert!((a[0] - b[0]).hypot(a[1] - b[1]) >= min_sep);
                prop_assert_eq!(config.pair_coupling(j, k).unwrap(), config.pair_coupling(k, j).unwrap());
            }
        }
        if let Some(cap) = cap {
            prop_assert!(config.len() <= cap);
            prop_assert_eq!(config.clamped, config.sampled_count > cap);
        } else {
            prop_assert_eq!(config.len(), config.sampled_count);
        }
        let again = sample_configuration(&params, &nv, seed).unwrap();
        prop_assert_eq!(again.targets, config.targets);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn quantum_signal_ignores_target_labels(seed in 0u64..1000, rabi in 0.0f64..20.0, ts in 0.0f64..800.0, rot in 1usize..5) {
        let config = sample_configuration(&sampling(0.3, 1.5, 0.5, Some(5)), &NvSite::with_depth(5.0), seed).unwrap();
        prop_assume!(config.len() >= 2);
        let n = config.len();
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).rev().collect();
        let drive = DriveParams { rabi_mhz: rabi, duration_ns: ts, offset_after_nv_pulse_ns: 50.0, ..Default::default() };
        let timeline = build_deer_timeline(900.0, &drive, 0.0).unwrap();
        let opts = QuantumOptions::default();
        let a = deer_signal_quantum(&config, &timeline, &drive, InitialState::MaximallyMixed, &opts).unwrap().signal;
        let b = deer_signal_quantum(&config.permuted(&perm), &timeline, &drive, InitialState::MaximallyMixed, &opts).unwrap().signal;
        prop_assert!((a - b).abs() < 1e-10, "{} vs {}", a, b);
        prop_assert!(a.abs() <= 1.0 + 1e-10);
    }
}
