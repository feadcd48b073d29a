use coldcav::dsp::{
    db_to_power, first_order_lowpass, harmonic_amplitudes, modulated_noise, power_to_db,
    reconstruct,
};
use coldcav::model::{atomic_phase, pump_steady};
use coldcav::noise::{
    apply_detection, invert_detection, linearize, spectrum_extrema, DetectionChain,
};
use coldcav::steady::{bistability_threshold, scan_detuning, solve_steady, ThetaRange};
use coldcav::{ModelParams, Stability, Trace, Unit};
use proptest::prelude::*;
use std::f64::consts::PI;

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig::with_cases(cases)
}

/// Random model with absorption and pumping toggled.
fn any_params() -> impl Strategy<Value = ModelParams> {
    (
        0.0..400.0f64,
        2.0..60.0f64,
        any::<bool>(),
        any::<bool>(),
        any::<bool>(),
        0.0..0.03f64,
    )
        .prop_map(|(coop, delta, negative, pumping, absorption, loss)| {
            let mut p = ModelParams::default()
                .with_coop(coop)
                .with_detuning(if negative { -delta } else { delta })
                .with_pumping(pumping)
                .with_loss(loss);
            p.absorption_on = absorption;
            p
        })
}

proptest! {
    #![proptest_config(cfg(64))]

    #[test]
    fn phase_falls_with_intensity_and_rises_with_orientation(
        coop in 1.0..400.0f64, delta in 0.5..60.0f64, i in 0.0..1e4f64, p in 0.0..0.99f64,
    ) {
        let params = ModelParams::default().with_coop(coop).with_detuning(delta);
        let here = atomic_phase(i, p, &params).unwrap();
        prop_assert!(atomic_phase(i * 1.01 + 1e-3, p, &params).unwrap() < here);
        prop_assert!(atomic_phase(i, p + 0.01, &params).unwrap() > here);
    }

    #[test]
    fn orientation_adds_linear_phase(coop in 0.0..400.0f64, delta in -60.0..60.0f64, i in 0.0..1e4f64, p in 0.0..1.0f64) {
        let params = ModelParams::default().with_coop(coop).with_detuning(delta);
        let split = atomic_phase(i, p, &params).unwrap() - atomic_phase(i, 0.0, &params).unwrap();
        let expected = p * params.phi_linear();
        prop_assert!((split - expected).abs() <= 1e-14 * params.phi_linear().abs().max(1e-300) + 1e-15);
    }

    #[test]
    fn pumped_orientation_is_a_fraction(i in 0.0..1e6f64, gamma_p in 0.0..1e6f64, beta in 0.0..1e6f64) {
        let params = ModelParams { gamma_p, beta, ..ModelParams::default() };
        let p = pump_steady(i, &params).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn empty_cavity_is_lorentzian(theta in -50.0..50.0f64, input in 1e-3..1e3f64) {
        let p = ModelParams::default().with_coop(0.0).with_loss(0.0);
        let phi_0 = theta * p.gamma_cav;
        let roots = solve_steady(input, phi_0, &p).unwrap();
        prop_assert_eq!(roots.len(), 1);
        let expected = p.t_mirror * p.t_mirror * input / (p.gamma_cav * p.gamma_cav + phi_0 * phi_0);
        prop_assert!((roots[0].intensity / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mirrored_detuning_conjugates_the_field(params in any_params(), theta in -40.0..40.0f64, input in 1e-2..1e2f64) {
        let phi_0 = theta * params.gamma_cav;
        let a = solve_steady(input, phi_0, &params).unwrap();
        let b = solve_steady(input, -phi_0, &params.with_detuning(-params.delta_a)).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.intensity / y.intensity - 1.0).abs() < 1e-12);
            prop_assert!((x.alpha - y.alpha.conj()).norm() <= 1e-9 * x.alpha.norm());
            prop_assert_eq!(x.stability, y.stability);
        }
    }

    #[test]
    fn root_count_is_odd(params in any_params(), theta in -40.0..40.0f64, input in 1e-2..1e2f64) {
        let n = solve_steady(input, theta * params.gamma_cav, &params).unwrap().len();
        prop_assert_eq!(n % 2, 1);
    }

    #[test]
    fn stability_label_follows_eigenvalues(params in any_params(), theta in -40.0..40.0f64, input in 1e-2..1e2f64) {
        for s in solve_steady(input, theta * params.gamma_cav, &params).unwrap() {
            let scale = s.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let unstable: Vec<_> = s.eigenvalues.iter().filter(|z| z.re > 1e-10 * scale).collect();
            let expected = if unstable.is_empty() {
                Stability::Stable
            } else if unstable.iter().any(|z| z.im.abs() > 1e-10 * scale) {
                Stability::Oscillatory
            } else {
                Stability::Saddle
            };
            prop_assert_eq!(s.stability, expected);
        }
    }
}

proptest! {
    #![proptest_config(cfg(12))]

    /// The up sweep leaves the upper branch at a larger detuning than the
    /// down sweep reaches it; the mirrored model mirrors both points.
    #[test]
    fn hysteresis_orientation_and_mirror(coop in 150.0..400.0f64, factor in 1.3..3.0f64) {
        let p = ModelParams::default().with_coop(coop).with_pumping(false);
        let th = bistability_threshold(&p).unwrap().unwrap();
        let input = factor * th.input_intensity;
        let half = 0.6 * th.theta.abs() + 5.0;
        let range = ThetaRange::new(th.theta - half, th.theta + half, 4001).unwrap();
        let trace = scan_detuning(input, &range, &p).unwrap();
        let (up, down) = (trace.up_switches(), trace.down_switches());
        prop_assert_eq!((up.len(), down.len()), (1, 1));
        prop_assert!(up[0] >= down[0]);

        let mirrored_range = ThetaRange::new(-(th.theta + half), -(th.theta - half), 4001).unwrap();
        let mirrored = scan_detuning(input, &mirrored_range, &p.with_detuning(-p.delta_a)).unwrap();
        let (mu, md) = (mirrored.up_switches(), mirrored.down_switches());
        prop_assert_eq!((mu.len(), md.len()), (1, 1));
        prop_assert!((mu[0] + down[0]).abs() < 1e-9 && (md[0] + up[0]).abs() < 1e-9, "{:?} {:?} {:?} {:?}", up, down, mu, md);
    }
}

/// Stable states of a random model together with an analysis frequency.
fn stable_points() -> impl Strategy<Value = (coldcav::SteadyState, ModelParams, f64)> {
    (any_params(), -40.0..40.0f64, -2.0..2.0f64, 5.0..8.0f64).prop_filter_map(
        "needs a stable state with a stable frozen-orientation block",
        |(p, theta, log_input, log_omega)| {
            let roots = solve_steady(10f64.powf(log_input), theta * p.gamma_cav, &p).ok()?;
            let ss = roots
                .into_iter()
                .find(|s| s.stability == Stability::Stable)?;
            linearize(&ss, &p).ok()?;
            Some((ss, p, 2.0 * PI * 10f64.powf(log_omega)))
        },
    )
}

/// Grid search over a 1 degree lattice, refined by a parabola through the
/// best node and its neighbours.
fn grid_extremum(f: impl Fn(f64) -> f64, sign: f64) -> (f64, f64) {
    let step = PI / 180.0;
    let vals: Vec<f64> = (0..180).map(|k| sign * f(k as f64 * step)).collect();
    let k = (0..180)
        .min_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap())
        .unwrap();
    let (l, c, r) = (vals[(k + 179) % 180], vals[k], vals[(k + 1) % 180]);
    let curvature = l - 2.0 * c + r;
    let shift = if curvature.abs() > 1e-300 {
        0.5 * (l - r) / curvature
    } else {
        0.0
    };
    let theta = (k as f64 + shift) * step;
    (f(theta), theta.rem_euclid(PI))
}

proptest! {
    #![proptest_config(cfg(64))]

    #[test]
    fn empty_cavity_returns_vacuum(theta in -30.0..30.0f64, input in 1e-2..1e2f64, omega in 0.0..1e9f64, lo in 0.0..PI) {
        let p = ModelParams::default().with_coop(0.0);
        let ss = solve_steady(input, theta * p.gamma_cav, &p).unwrap()[0];
        let spec = linearize(&ss, &p).unwrap().spectrum(omega).unwrap();
        prop_assert!((spec.at(lo) - 1.0).abs() < 1e-9);
        prop_assert!((spec.s_min - 1.0).abs() < 1e-9 && (spec.s_max - 1.0).abs() < 1e-9);
    }

    #[test]
    fn spectra_respect_uncertainty((ss, p, omega) in stable_points(), lo in 0.0..PI) {
        let spec = linearize(&ss, &p).unwrap().spectrum(omega).unwrap();
        prop_assert!(spec.s_min * spec.s_max >= 1.0 - 1e-9, "{} {}", spec.s_min, spec.s_max);
        prop_assert!(spec.s_min >= 0.0);
        prop_assert!((spec.at(lo) - spec.at(lo + PI)).abs() < 1e-9 * spec.s_max);
        prop_assert!(spec.at(lo) >= spec.s_min - 1e-12 && spec.at(lo) <= spec.s_max + 1e-12);
    }

    /// A thousand times above the fastest drift rate, which for far-detuned
    /// draws is the detuning rather than the linewidth.
    #[test]
    fn fast_fluctuations_are_vacuum((ss, p, _) in stable_points()) {
        let lin = linearize(&ss, &p).unwrap();
        let fastest = lin.drift[0][0].norm() + lin.drift[0][1].norm();
        let omega = 1e3 * fastest.max(p.gamma_cav / p.tau);
        let spec = lin.spectrum(omega).unwrap();
        prop_assert!((spec.s_min - 1.0).abs() < 1e-6 && (spec.s_max - 1.0).abs() < 1e-6);
    }

    #[test]
    fn analytic_extrema_match_grid_search((ss, p, omega) in stable_points()) {
        let lin = linearize(&ss, &p).unwrap();
        let spec = lin.spectrum(omega).unwrap();
        let (s_min, s_max, theta_min) = spectrum_extrema(&lin, omega).unwrap();
        let (grid_min, grid_theta) = grid_extremum(|t| spec.at(t), 1.0);
        let (grid_max, _) = grid_extremum(|t| spec.at(t), -1.0);
        prop_assert!((s_min - grid_min).abs() < 1e-6 && (s_max - grid_max).abs() < 1e-6, "{} {} {} {}", s_min, grid_min, s_max, grid_max);
        if s_max - s_min > 1e-6 {
            let gap = (theta_min - grid_theta).abs();
            prop_assert!(gap.min(PI - gap) < PI / 180.0);
        }
        prop_assert!((spec.at(theta_min + PI / 2.0) - s_max).abs() < 1e-9 * s_max);
    }

    #[test]
    fn detection_is_passive_and_invertible(s in 0.0..20.0f64, eta_pd in 0.01..1.0f64, eta_hom in 0.01..1.0f64) {
        let chain = DetectionChain::new(eta_pd, eta_hom).unwrap();
        let measured = apply_detection(s, &chain).unwrap();
        prop_assert!((measured - 1.0).abs() <= (s - 1.0).abs() + 1e-15);
        let back = invert_detection(measured, &chain).unwrap();
        prop_assert!((back - s).abs() < 1e-12 * s.max(1.0) / chain.efficiency());
    }
}

fn noise_trace(seed: u64, n: usize) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

proptest! {
    #![proptest_config(cfg(32))]

    #[test]
    fn lowpass_is_linear(seed in any::<u64>(), a in -5.0..5.0f64, b in -5.0..5.0f64, f_c in 10.0..4e3f64) {
        let dt = 1e-5;
        let x = Trace::new(0.0, dt, noise_trace(seed, 2000), Unit::NoisePowerLinear).unwrap();
        let y = Trace::new(0.0, dt, noise_trace(seed ^ 1, 2000), Unit::NoisePowerLinear).unwrap();
        let mix = Trace::new(0.0, dt, x.samples.iter().zip(&y.samples).map(|(u, v)| a * u + b * v).collect(), x.unit).unwrap();
        let (fx, fy, fm) = (first_order_lowpass(&x, f_c).unwrap(), first_order_lowpass(&y, f_c).unwrap(), first_order_lowpass(&mix, f_c).unwrap());
        for k in 0..2000 {
            prop_assert!((fm.samples[k] - (a * fx.samples[k] + b * fy.samples[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn db_round_trip(seed in any::<u64>()) {
        let samples: Vec<f64> = noise_trace(seed, 1000).iter().map(|v| 10f64.powf(3.0 * v)).collect();
        let t = Trace::new(0.0, 1.0, samples.clone(), Unit::NoisePowerLinear).unwrap();
        let back = db_to_power(&power_to_db(&t).unwrap()).unwrap();
        for (a, b) in back.samples.iter().zip(&samples) {
            prop_assert!((a / b - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn filters_preserve_the_mean() {
    let dt = 1e-5;
    let samples: Vec<f64> = noise_trace(3, 200_000)
        .iter()
        .map(|v| 2.0 + 0.3 * v)
        .collect();
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let t = Trace::new(0.0, dt, samples, Unit::NoisePowerLinear).unwrap();
    let filtered = first_order_lowpass(&t, 300.0).unwrap();
    assert!((filtered.mean() / mean - 1.0).abs() < 1e-3);
    let restored = reconstruct(&filtered, 300.0, 100.0).unwrap();
    assert!((restored.mean() / mean - 1.0).abs() < 1e-3);
}

#[test]
fn band_limited_noise_survives_reconstruction() {
    use rustfft::{num_complex::Complex64, FftPlanner};
    let (dt, n, f_c, cap) = (1e-5, 1 << 15, 300.0, 100.0);
    // white noise restricted to below f_c cap / 4
    let mut spectrum: Vec<Complex64> = noise_trace(11, n)
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut spectrum);
    let limit = (f_c * cap / 4.0 * n as f64 * dt) as usize;
    for (k, z) in spectrum.iter_mut().enumerate() {
        if k.min(n - k) > limit {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut spectrum);
    let x: Vec<f64> = spectrum.iter().map(|z| z.re / n as f64).collect();
    let t = Trace::new(0.0, dt, x.clone(), Unit::NoisePowerLinear).unwrap();
    let restored = reconstruct(&first_order_lowpass(&t, f_c).unwrap(), f_c, cap).unwrap();
    let err: f64 = restored
        .samples
        .iter()
        .zip(&x)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let norm: f64 = x.iter().map(|b| b * b).sum();
    assert!(
        (err / norm).sqrt() < 0.01,
        "relative rms {}",
        (err / norm).sqrt()
    );
}

#[test]
fn harmonics_grow_with_squeezing() {
    let (f, dt, n) = (1e3, 1e-6, 100_000);
    let mut last = 0.0;
    for depth in [0.9, 0.7, 0.5, 0.3] {
        let db = power_to_db(&modulated_noise(depth, f, dt, n).unwrap()).unwrap();
        let h = harmonic_amplitudes(&db, f, 3).unwrap();
        let power = h[1] * h[1] + h[2] * h[2];
        assert!(power > last, "depth {depth}: {power} after {last}");
        last = power;
    }
}
