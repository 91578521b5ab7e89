//! Closed-form solutions for coherent-state trajectories.
//!
//! All amplitudes are in the interaction picture. These functions double as
//! fast paths inside the trajectory engine and as oracles in tests.

use crate::{CavityParams, DriveMode, C64};

/// Driven, damped amplitude `α(t) = e^{-κt/2} α0 − (iΩ/κ)(1 − e^{-κt/2})`.
#[inline]
pub fn laser_alpha(t: f64, alpha0: C64, params: &CavityParams) -> C64 {
    let k = params.kappa;
    let x = (-0.5 * k * t).exp();
    let drive = -(params.omega / k) * (-(-0.5 * k * t).exp_m1());
    C64::new(x * alpha0.re, x * alpha0.im + drive)
}

/// `I(t) = κ |α(t)|²` for the laser-driven cavity.
pub fn laser_emission_rate(t: f64, alpha0: C64, params: &CavityParams) -> f64 {
    params.kappa * laser_alpha(t, alpha0, params).norm_sqr()
}

/// Three-term expansion of [`laser_emission_rate`]:
/// `κ e^{-κt}|α0|² + (Ω²/κ)(1−e^{-κt/2})² − 2Ω e^{-κt/2}(1−e^{-κt/2}) Im α0`.
pub fn laser_emission_rate_expanded(t: f64, alpha0: C64, params: &CavityParams) -> f64 {
    let (k, w) = (params.kappa, params.omega);
    let x = (-0.5 * k * t).exp();
    let one_minus_x = -(-0.5 * k * t).exp_m1();
    k * x * x * alpha0.norm_sqr() + w * w / k * one_minus_x * one_minus_x
        - 2.0 * w * x * one_minus_x * alpha0.im
}

/// Exact `∫_{t0}^{t1} I(t) dt` of the laser-driven emission rate; the mean
/// number of emissions per trajectory in that window.
pub fn laser_emission_integral(t0: f64, t1: f64, alpha0: C64, params: &CavityParams) -> f64 {
    let (k, w) = (params.kappa, params.omega);
    let n0 = alpha0.norm_sqr();
    let im0 = alpha0.im;
    // antiderivative in terms of x = e^{-κt/2}
    let f = |t: f64| {
        let x = (-0.5 * k * t).exp();
        -n0 * x * x + w * w / k * (t + 4.0 / k * x - x * x / k)
            - 2.0 * w * im0 * (-2.0 / k * x + x * x / k)
    };
    f(t1) - f(t0)
}

/// Large-time limit `α_ss = -iΩ/κ`.
pub fn stationary_laser_alpha(params: &CavityParams) -> C64 {
    C64::new(0.0, -params.omega / params.kappa)
}

/// Large-time limit `I_ss = Ω²/κ`.
pub fn stationary_emission_rate(params: &CavityParams) -> f64 {
    params.omega * params.omega / params.kappa
}

/// Undriven no-emission evolution `α(t) = e^{-κt/2} α0`.
#[inline]
pub fn decay_alpha(t: f64, alpha0: C64, kappa: f64) -> C64 {
    alpha0 * (-0.5 * kappa * t).exp()
}

/// Probability of no emission in a window of length `dt` starting from `|α⟩`:
/// `exp[−|α|²(1 − e^{-κΔt})]`.
///
/// Exact at any `dt` for undriven decay; a short-window approximation when
/// the cavity is driven.
#[inline]
pub fn survival_probability(alpha: C64, dt: f64, kappa: f64) -> f64 {
    (alpha.norm_sqr() * (-kappa * dt).exp_m1()).exp()
}

/// Effect of a feedback pulse: `|α⟩ → |α + β⟩`.
#[inline]
pub fn feedback_jump_map(alpha: C64, beta: C64) -> C64 {
    alpha + beta
}

/// `η|β|² − 1`. Positive means the vacuum is repulsive.
pub fn stability_margin(eta: f64, beta: C64) -> f64 {
    eta * beta.norm_sqr() - 1.0
}

/// Weighted estimate of `dI/dt` over a coherent-state mixture.
///
/// Feedback mode evaluates `−κ² Σ wᵢ [1 − η(|αᵢ+β|² − |αᵢ|²)] |αᵢ|²`.
/// Laser mode uses `κ d|α|²/dt = −κ²|α|² − κΩ Im α` per component.
pub fn mean_photon_drift(samples: &[(C64, f64)], params: &CavityParams) -> f64 {
    let k = params.kappa;
    samples
        .iter()
        .map(|&(a, w)| {
            let n = a.norm_sqr();
            let term = match params.mode {
                DriveMode::Feedback => {
                    -k * k * (1.0 - params.eta * ((a + params.beta).norm_sqr() - n)) * n
                }
                DriveMode::LaserDriven => -k * k * n - k * params.omega * a.im,
            };
            w * term
        })
        .sum()
}

/// Linearised drift near the vacuum, `−κ²(1 − η|β|²)|α|²`.
pub fn small_alpha_drift(alpha: C64, params: &CavityParams) -> f64 {
    let k = params.kappa;
    k * k * stability_margin(params.eta, params.beta) * alpha.norm_sqr()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{LN_2, PI};

    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;

    fn laser(omega: f64) -> CavityParams {
        CavityParams::laser(1.0, omega)
    }

    /// Classical RK4 on dα/dt = −κα/2 − iΩ/2; independent of the closed form.
    fn rk4_alpha(t: f64, alpha0: C64, p: &CavityParams, steps: usize) -> C64 {
        let f = |a: C64| -0.5 * p.kappa * a - C64::new(0.0, 0.5 * p.omega);
        let h = t / steps as f64;
        let mut a = alpha0;
        for _ in 0..steps {
            let k1 = f(a);
            let k2 = f(a + 0.5 * h * k1);
            let k3 = f(a + 0.5 * h * k2);
            let k4 = f(a + h * k3);
            a += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        a
    }

    #[test]
    fn laser_alpha_initial_and_stationary_values() {
        let p = laser(8.0);
        assert_eq!(laser_alpha(0.0, C64::new(2.0, 0.0), &p), C64::new(2.0, 0.0));
        let late = laser_alpha(200.0, C64::new(2.0, -1.0), &p);
        assert!((late - C64::new(0.0, -8.0)).norm() < 1e-12);
        assert_eq!(stationary_laser_alpha(&p), C64::new(0.0, -8.0));
    }

    #[test]
    fn laser_alpha_matches_rk4_at_one_decay_time() {
        let p = laser(8.0);
        let exact = C64::new(0.0, -8.0 * (1.0 - (-0.5f64).exp()));
        let ode = rk4_alpha(1.0, C64::new(0.0, 0.0), &p, 2000);
        assert!((ode - exact).norm() < 1e-12);
        assert!((laser_alpha(1.0, C64::new(0.0, 0.0), &p) - exact).norm() < 1e-14);
        // complex start, other time
        let a0 = C64::new(0.7, -1.3);
        let ode = rk4_alpha(3.7, a0, &p, 5000);
        assert!((ode - laser_alpha(3.7, a0, &p)).norm() < 1e-11);
    }

    #[test]
    fn emission_rate_limits() {
        let p = laser(8.0);
        assert_eq!(laser_emission_rate(0.0, C64::new(0.0, 0.0), &p), 0.0);
        assert_relative_eq!(laser_emission_rate(100.0, C64::new(0.0, 0.0), &p), 64.0, max_relative = 1e-12);
        assert_eq!(stationary_emission_rate(&p), 64.0);
        let expected = 64.0 * (1.0 - (-2.5f64).exp()).powi(2);
        let t = 5.0;
        assert_relative_eq!(laser_emission_rate(t, C64::new(0.0, 0.0), &p), expected, max_relative = 1e-12);
        assert_relative_eq!(laser_emission_rate_expanded(t, C64::new(0.0, 0.0), &p), expected, max_relative = 1e-12);
    }

    #[test]
    fn expanded_rate_on_grid() {
        let p = laser(8.0);
        for a0 in [C64::new(0.0, 0.0), C64::new(2.0, 0.0), C64::new(1.0, 3.0), C64::new(-0.5, -2.0)] {
            for i in 0..=100 {
                let t = 0.1 * i as f64;
                let d = laser_emission_rate(t, a0, &p);
                let e = laser_emission_rate_expanded(t, a0, &p);
                assert!((d - e).abs() <= 1e-12 * d.max(1e-3), "t={t} α0={a0}: {d} vs {e}");
            }
        }
    }

    #[test]
    fn emission_integral_matches_simpson() {
        let p = CavityParams::laser(1.3, 5.0);
        for a0 in [C64::new(0.0, 0.0), C64::new(1.0, 2.0), C64::new(-2.0, -0.5)] {
            let (t0, t1) = (0.2, 4.7);
            let n = 20_000;
            let h = (t1 - t0) / n as f64;
            let mut s = laser_emission_rate(t0, a0, &p) + laser_emission_rate(t1, a0, &p);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * laser_emission_rate(t0 + i as f64 * h, a0, &p);
            }
            s *= h / 3.0;
            assert_relative_eq!(laser_emission_integral(t0, t1, a0, &p), s, max_relative = 1e-11);
        }
    }

    #[test]
    fn decay_values() {
        let a0 = C64::new(2.0, 0.0);
        assert_eq!(decay_alpha(0.0, a0, 1.0), a0);
        assert_eq!(decay_alpha(f64::INFINITY, a0, 1.0), C64::new(0.0, 0.0));
        assert_relative_eq!(decay_alpha(2.0, a0, 1.0).re, 2.0 * (-1.0f64).exp(), max_relative = 1e-15);
        let via_laser = laser_alpha(2.0, a0, &laser(0.0));
        assert!((via_laser - decay_alpha(2.0, a0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn decay_magnitude_strictly_decreases_and_keeps_phase() {
        let a0 = C64::from_polar(1.5, 0.8);
        let mut prev = a0.norm();
        for i in 1..50 {
            let a = decay_alpha(i as f64 * 0.3, a0, 1.0);
            assert!(a.norm() < prev);
            assert!((a.arg() - 0.8).abs() < 1e-14);
            prev = a.norm();
        }
    }

    #[test]
    fn survival_probability_values() {
        assert_eq!(survival_probability(C64::new(0.0, 0.0), 3.0, 1.0), 1.0);
        let a = C64::new(2.0, 0.0);
        assert_relative_eq!(survival_probability(a, f64::INFINITY, 1.0), (-4.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!((-4.0f64).exp(), 0.018315638888734, max_relative = 1e-12);
        assert_relative_eq!(survival_probability(a, LN_2, 1.0), (-2.0f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn feedback_jump_examples() {
        let b = C64::new(2.0, 0.0);
        assert_eq!(feedback_jump_map(C64::new(2.0, 0.0), b), C64::new(4.0, 0.0));
        let a = C64::new(0.3, -0.2);
        assert_eq!(feedback_jump_map(a, C64::new(0.0, 0.0)), a);
        assert_eq!(feedback_jump_map(C64::new(-2.0, 0.0), b), C64::new(0.0, 0.0));
    }

    #[test]
    fn stability_margin_examples() {
        assert_eq!(stability_margin(0.5, C64::new(2.0, 0.0)), 1.0);
        assert_eq!(stability_margin(0.0, C64::new(3.0, 1.0)), -1.0);
        assert_eq!(stability_margin(1.0, C64::new(1.0, 0.0)), 0.0);
    }

    #[test]
    fn drift_examples() {
        let a = C64::new(1.3, -0.4);
        let p0 = CavityParams::feedback(1.7, 0.0, C64::new(2.0, 0.0));
        assert_relative_eq!(mean_photon_drift(&[(a, 1.0)], &p0), -1.7 * 1.7 * a.norm_sqr(), max_relative = 1e-14);
        let p = CavityParams::feedback(1.0, 0.5, C64::new(2.0, 0.0));
        assert_eq!(mean_photon_drift(&[(C64::new(0.0, 0.0), 1.0)], &p), 0.0);
        let small = C64::new(0.01, 0.0);
        assert_relative_eq!(small_alpha_drift(small, &p), 1e-4, max_relative = 1e-12);
        // the full integrand differs from the linearisation by O(|α|³)
        let full = mean_photon_drift(&[(small, 1.0)], &p);
        assert!((full - 1e-4).abs() < 5e-6, "{full}");
    }

    #[test]
    fn drift_with_eta_zero_is_minus_kappa_times_rate() {
        let p = CavityParams::feedback(2.0, 0.0, C64::new(1.0, 1.0));
        let samples = [(C64::new(1.0, 0.0), 0.25), (C64::new(0.0, 2.0), 0.5), (C64::new(-1.0, 1.0), 0.25)];
        let rate: f64 = p.kappa * samples.iter().map(|(a, w)| w * a.norm_sqr()).sum::<f64>();
        assert_relative_eq!(mean_photon_drift(&samples, &p), -p.kappa * rate, max_relative = 1e-14);
    }

    #[test]
    fn laser_drift_matches_derivative_of_rate() {
        let p = laser(8.0);
        let a0 = C64::new(0.5, 1.0);
        let t = 0.8;
        let h = 1e-5;
        let fd = (laser_emission_rate(t + h, a0, &p) - laser_emission_rate(t - h, a0, &p)) / (2.0 * h);
        let a = laser_alpha(t, a0, &p);
        assert_relative_eq!(mean_photon_drift(&[(a, 1.0)], &p), fd, max_relative = 1e-8);
    }

    proptest! {
        #[test]
        fn expanded_rate_agrees(t in 0.0..30.0f64, re in -5.0..5.0f64, im in -5.0..5.0f64,
                                k in 0.1..3.0f64, w in 0.0..10.0f64) {
            let p = CavityParams::laser(k, w);
            let a0 = C64::new(re, im);
            let direct = laser_emission_rate(t, a0, &p);
            let expanded = laser_emission_rate_expanded(t, a0, &p);
            // size of the largest individual term, so cancellation near α_ss is not penalised
            let x = (-0.5 * k * t).exp();
            let scale = k * x * x * a0.norm_sqr() + w * w / k * (1.0 - x).powi(2)
                + 2.0 * w * x * (1.0 - x) * im.abs();
            prop_assert!((direct - expanded).abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE),
                "t={} direct={} expanded={}", t, direct, expanded);
        }

        #[test]
        fn laser_without_drive_is_decay(t in 0.0..50.0f64, re in -10.0..10.0f64, im in -10.0..10.0f64, k in 0.01..5.0f64) {
            let a0 = C64::new(re, im);
            let p = CavityParams::laser(k, 0.0);
            prop_assert_eq!(laser_alpha(t, a0, &p), decay_alpha(t, a0, k));
        }

        #[test]
        fn survival_semigroup(re in -4.0..4.0f64, im in -4.0..4.0f64,
                              t1 in 0.0..5.0f64, t2 in 0.0..5.0f64, k in 0.1..3.0f64) {
            let a = C64::new(re, im);
            let lhs = survival_probability(a, t1, k) * survival_probability(decay_alpha(t1, a, k), t2, k);
            let rhs = survival_probability(a, t1 + t2, k);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
        }

        #[test]
        fn survival_is_monotone(re in -4.0..4.0f64, dt in 0.0..5.0f64, extra in 0.0..5.0f64) {
            let a = C64::new(re, 0.5);
            let p1 = survival_probability(a, dt, 1.0);
            let p2 = survival_probability(a, dt + extra, 1.0);
            prop_assert!(p2 <= p1 && p1 <= 1.0 && p2 > 0.0);
        }

        #[test]
        fn margin_is_phase_invariant(eta in 0.0..1.0f64, mag in 0.0..5.0f64, phi in 0.0..(2.0 * PI)) {
            let m0 = stability_margin(eta, C64::new(mag, 0.0));
            let m = stability_margin(eta, C64::from_polar(mag, phi));
            prop_assert!((m - m0).abs() <= 1e-12 * (1.0 + m0.abs()));
        }
    }
}
