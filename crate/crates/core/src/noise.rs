//! Analytic noise budget and signal-to-noise ratios.
//!
//! A single determination uses one signal and one background measurement.
//! Their difference has variance
//!
//! ```text
//! sigma^2 = sigma_delta^2 + P (1 - P) / N + P_bck (1 - P_bck) / N
//! ```
//!
//! where `sigma_delta^2` is the trial-to-trial spread of the population
//! caused by the random drive phase. Propagating through the inverse of
//! `G(theta^2)` gives the SNR for theta^2 (equivalently Z_c^2).

use serde::{Deserialize, Serialize};

use crate::physical::ExperimentConfig;
use crate::signal::{contrast_loss_slope, p_up_background, p_up_bessel, theta_max_from_config};
use crate::special::{bessel_j0, bessel_jn_series};

/// Rounded prefactor of the small-amplitude limiting SNR.
pub const LIMITING_PREFACTOR: f64 = 0.097;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Random drive phase each trial; measures Z_c^2.
    Incoherent,
    /// Drive phase stable across trials; measures Z_c.
    Coherent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseBudget {
    pub var_proj_bck: f64,
    pub var_proj_sig: f64,
    pub var_delta: f64,
    pub var_total_diff: f64,
}

impl NoiseBudget {
    /// Standard deviation of one signal-minus-background difference.
    pub fn sigma_diff(&self) -> f64 {
        self.var_total_diff.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnrEstimate {
    /// Z_c^2 / dZ_c^2 (incoherent) or Z_c / dZ_c (coherent).
    pub snr: f64,
    pub theta_max: f64,
    pub u_tau: f64,
    pub mode: Protocol,
}

/// Parameters the closed-form limits depend on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitParams {
    pub n_ions: u32,
    pub dwf: f64,
    pub delta_k: f64,
    pub xi_decay: f64,
}

impl LimitParams {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            n_ions: cfg.trap.n_ions,
            dwf: cfg.odf.dwf,
            delta_k: cfg.odf.delta_k,
            xi_decay: cfg.odf.xi_decay,
        }
    }

    fn sqrt_n(&self) -> f64 {
        f64::from(self.n_ions).sqrt()
    }
}

/// Binomial variance p (1 - p) / N of the measured spin-up fraction.
pub fn projection_variance(p: f64, n_ions: u32) -> f64 {
    p * (1.0 - p) / f64::from(n_ions)
}

/// Variance of the single-trial population over a uniformly random drive
/// phase, exp(-2 Gamma tau) / 8 * (1 + J0(2 theta) - 2 J0(theta)^2).
pub fn delta_phase_variance(theta_max: f64, gamma_tau: f64) -> f64 {
    (-2.0 * gamma_tau).exp() / 8.0 * phase_spread(theta_max)
}

/// 1 + J0(2x) - 2 J0(x)^2, which equals 4 * sum_{k>=1} J_2k(x)^2. The sum is
/// used for small x where the direct form cancels to O(x^4).
fn phase_spread(x: f64) -> f64 {
    let x = x.abs();
    if x < 2.0 {
        let mut sum = 0.0;
        for k in 1..40 {
            let j = bessel_jn_series(2 * k, x);
            sum += j * j;
            if j * j < 1e-20 * sum {
                break;
            }
        }
        4.0 * sum
    } else {
        let j0 = bessel_j0(x);
        1.0 + bessel_j0(2.0 * x) - 2.0 * j0 * j0
    }
}

/// Noise of one (signal, background) pair. Projection terms are divided by
/// `projection_divisor` (1 for an unsqueezed readout).
pub fn noise_budget(
    theta_max: f64,
    gamma_tau: f64,
    n_ions: u32,
    projection_divisor: f64,
) -> NoiseBudget {
    let p_sig = p_up_bessel(theta_max, gamma_tau);
    let p_bck = p_up_background(gamma_tau);
    let var_proj_bck = projection_variance(p_bck, n_ions) / projection_divisor;
    let var_proj_sig = projection_variance(p_sig, n_ions) / projection_divisor;
    let var_delta = delta_phase_variance(theta_max, gamma_tau);
    NoiseBudget {
        var_proj_bck,
        var_proj_sig,
        var_delta,
        var_total_diff: var_proj_bck + var_proj_sig + var_delta,
    }
}

/// Single-pair SNR for theta^2 by error propagation through G.
pub fn snr_incoherent_at(
    theta_max: f64,
    gamma_tau: f64,
    n_ions: u32,
    projection_divisor: f64,
) -> f64 {
    if theta_max == 0.0 {
        return 0.0;
    }
    let budget = noise_budget(theta_max, gamma_tau, n_ions, projection_divisor);
    // |G'|: past the first J0 zero the signal falls with theta^2, and the
    // propagated uncertainty depends only on the magnitude of the slope
    theta_max * theta_max * contrast_loss_slope(theta_max).abs()
        / (gamma_tau.exp() * budget.sigma_diff())
}

pub fn snr_incoherent(cfg: &ExperimentConfig) -> SnrEstimate {
    let theta_max = theta_max_from_config(cfg);
    SnrEstimate {
        snr: snr_incoherent_at(
            theta_max,
            cfg.gamma_tau(),
            cfg.trap.n_ions,
            cfg.readout.projection_variance_divisor,
        ),
        theta_max,
        u_tau: cfg.u_tau(),
        mode: Protocol::Incoherent,
    }
}

/// (P - P_bck) / sigma, the ratio estimated directly from paired data.
pub fn snr_difference_ratio(cfg: &ExperimentConfig) -> f64 {
    let theta_max = theta_max_from_config(cfg);
    let gt = cfg.gamma_tau();
    let budget = noise_budget(
        theta_max,
        gt,
        cfg.trap.n_ions,
        cfg.readout.projection_variance_divisor,
    );
    (p_up_bessel(theta_max, gt) - p_up_background(gt)) / budget.sigma_diff()
}

/// Small-amplitude limit at the optimal dose, with the rounded prefactor:
/// 0.097 sqrt(N) DWF^2 delta_k^2 Z_c^2 / xi^2.
pub fn snr_incoherent_limiting(z_c: f64, params: &LimitParams) -> f64 {
    LIMITING_PREFACTOR
        * params.sqrt_n()
        * (params.dwf * params.delta_k * z_c / params.xi_decay).powi(2)
}

/// Small-amplitude SNR as a function of the dose u_tau = U tau / hbar,
/// projection noise only.
pub fn snr_incoherent_smallzc(z_c: f64, u_tau: f64, params: &LimitParams) -> f64 {
    if u_tau <= 0.0 {
        return 0.0;
    }
    let eta = params.dwf * params.delta_k * z_c * u_tau;
    params.sqrt_n() / (4.0 * std::f64::consts::SQRT_2) * eta * eta
        / (2.0 * params.xi_decay * u_tau).exp_m1().sqrt()
}

/// Phase-coherent SNR for Z_c:
/// DWF delta_k Z_c sqrt(N/2) u_tau exp(-xi u_tau).
pub fn snr_coherent(z_c: f64, u_tau: f64, params: &LimitParams) -> f64 {
    if u_tau <= 0.0 {
        return 0.0;
    }
    params.dwf
        * params.delta_k
        * z_c
        * (0.5 * f64::from(params.n_ions)).sqrt()
        * u_tau
        * (-params.xi_decay * u_tau).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::bessel_j0;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn reference_params(n: u32) -> LimitParams {
        LimitParams {
            n_ions: n,
            dwf: 0.86,
            delta_k: 2.0 * std::f64::consts::PI / 0.9e-6,
            xi_decay: 1.156e-3,
        }
    }

    #[test]
    fn projection_variance_values() {
        assert_eq!(projection_variance(0.5, 100), 0.0025);
        assert_eq!(projection_variance(0.0, 100), 0.0);
        let gt: f64 = 0.3;
        let p = 0.5 * (1.0 - (-gt).exp());
        let closed = (1.0 - (-2.0 * gt).exp()) / (4.0 * 85.0);
        assert!((projection_variance(p, 85) - closed).abs() < 1e-12 * closed);
    }

    #[test]
    fn phase_spread_forms_agree() {
        let mut x = 0.3;
        while x < 3.0 {
            let j0 = bessel_j0(x);
            let direct = 1.0 + bessel_j0(2.0 * x) - 2.0 * j0 * j0;
            assert!((phase_spread(x) - direct).abs() < 1e-14, "x {x}");
            x += 0.05;
        }
        // leading order x^4 / 16
        let x = 1e-3;
        assert!(rel(phase_spread(x), x.powi(4) / 16.0) < 1e-5);
    }

    #[test]
    fn delta_variance_limits() {
        assert_eq!(delta_phase_variance(0.0, 0.4), 0.0);
        assert!(delta_phase_variance(1.4, 40.0) < 1e-30);
        assert!(delta_phase_variance(1.4, 0.2) > 0.0);
    }

    #[test]
    fn budget_adds_up() {
        let b = noise_budget(1.41, 0.4, 75, 1.0);
        assert_eq!(
            b.var_total_diff,
            b.var_proj_bck + b.var_proj_sig + b.var_delta
        );
        let squeezed = noise_budget(1.41, 0.4, 75, 2.0);
        assert_eq!(squeezed.var_proj_bck, 0.5 * b.var_proj_bck);
        assert_eq!(squeezed.var_delta, b.var_delta);
    }

    #[test]
    fn zero_amplitude_zero_snr() {
        let cfg = ExperimentConfig::default();
        assert_eq!(snr_incoherent(&cfg).snr, 0.0);
        assert_eq!(snr_incoherent_limiting(0.0, &reference_params(85)), 0.0);
        assert_eq!(snr_coherent(0.0, 100.0, &reference_params(100)), 0.0);
        assert_eq!(
            snr_incoherent_smallzc(1e-10, 0.0, &reference_params(85)),
            0.0
        );
    }

    #[test]
    fn limiting_value_and_scaling() {
        let p = reference_params(85);
        // evaluated independently: 0.097 * sqrt(85) * 0.86^2 * (2pi/0.9um)^2 / xi^2 * (0.2 nm)^2
        assert!(rel(snr_incoherent_limiting(0.2e-9, &p), 0.964_933) < 1e-5);
        let four = reference_params(340);
        assert!(
            rel(
                snr_incoherent_limiting(0.2e-9, &four),
                2.0 * snr_incoherent_limiting(0.2e-9, &p)
            ) < 1e-14
        );
        let half_xi = LimitParams {
            xi_decay: 0.5 * p.xi_decay,
            ..p
        };
        assert!(
            rel(
                snr_incoherent_limiting(1e-10, &half_xi),
                4.0 * snr_incoherent_limiting(1e-10, &p)
            ) < 1e-14
        );
        assert!(
            rel(
                snr_incoherent_limiting(2e-10, &p),
                4.0 * snr_incoherent_limiting(1e-10, &p)
            ) < 1e-14
        );
        let dwf = LimitParams { dwf: 0.43, ..p };
        assert!(
            rel(
                snr_incoherent_limiting(1e-10, &dwf),
                0.25 * snr_incoherent_limiting(1e-10, &p)
            ) < 1e-14
        );
    }

    #[test]
    fn small_zc_at_reference_optimum() {
        let p = reference_params(85);
        let z = 0.15e-9;
        let at_opt = snr_incoherent_smallzc(z, 1.9603 / p.xi_decay, &p);
        assert!(rel(at_opt, snr_incoherent_limiting(z, &p)) < 0.005);
        let doubled = snr_incoherent_smallzc(z, 2.0 * 1.9603 / p.xi_decay, &p);
        assert!(doubled < at_opt);
        // dense scan: the grid maximum sits next to xi u = 1.9603
        let (best_x, _) = (1..4000)
            .map(|i| i as f64 * 1e-3)
            .map(|x| (x, snr_incoherent_smallzc(z, x / p.xi_decay, &p)))
            .fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        assert!((best_x - 1.9603).abs() < 1.5e-3, "{best_x}");
    }

    #[test]
    fn coherent_limit() {
        let p = reference_params(100);
        let s = snr_coherent(74e-12, 1.0 / p.xi_decay, &p);
        assert!((s - 1.0).abs() < 0.02, "{s}");
        let scan_best = (1..3000)
            .map(|i| i as f64 * 1e-3 / p.xi_decay)
            .max_by(|a, b| snr_coherent(74e-12, *a, &p).total_cmp(&snr_coherent(74e-12, *b, &p)))
            .unwrap();
        assert!((scan_best * p.xi_decay - 1.0).abs() < 1.5e-3);
        let four = reference_params(400);
        assert!(rel(snr_coherent(74e-12, 1.0 / p.xi_decay, &four), 2.0 * s) < 1e-14);
    }

    #[test]
    fn small_angle_agreement() {
        let mut cfg = ExperimentConfig::default().with_z_c(1e-12);
        cfg.trap.n_ions = 85;
        let est = snr_incoherent(&cfg);
        assert!(est.theta_max < 0.05);
        let ratio = snr_difference_ratio(&cfg);
        assert!(((est.snr - ratio) / est.snr).abs() < 1e-3);
    }
}
