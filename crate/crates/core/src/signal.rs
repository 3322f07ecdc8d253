//! Measured spin-up populations and their inversion.
//!
//! With the drive phase random from trial to trial the mean population is
//! `(1 - exp(-Gamma tau) J0(theta_max)) / 2`. The difference to the
//! background, scaled by `exp(Gamma tau)`, is the contrast loss
//! `G(theta^2) = (1 - J0(theta)) / 2`, which is monotone up to the first
//! zero of J0 and is inverted there to recover `theta_max^2`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physical::ExperimentConfig;
use crate::special::{bessel_j0, bessel_j1_over_x, one_minus_j0, J0_FIRST_ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalMode {
    /// Random drive phase, averaged: Bessel dephasing signal.
    IncoherentBessel,
    /// Fixed drive phase read out with a pi/2-shifted Ramsey sequence.
    CoherentRamsey,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    pub gamma_tau: f64,
    pub theta_max: f64,
    pub mode: SignalMode,
}

impl SignalModel {
    pub fn p_up(&self) -> f64 {
        match self.mode {
            SignalMode::IncoherentBessel => p_up_bessel(self.theta_max, self.gamma_tau),
            SignalMode::CoherentRamsey => p_up_coherent(self.theta_max, self.gamma_tau),
        }
    }

    pub fn p_background(&self) -> f64 {
        match self.mode {
            SignalMode::IncoherentBessel => p_up_background(self.gamma_tau),
            SignalMode::CoherentRamsey => 0.5,
        }
    }
}

pub fn p_up_background(gamma_tau: f64) -> f64 {
    0.5 * (1.0 - (-gamma_tau).exp())
}

pub fn p_up_bessel(theta_max: f64, gamma_tau: f64) -> f64 {
    0.5 * (1.0 - (-gamma_tau).exp() * bessel_j0(theta_max))
}

/// Averages the single-trial population over `n_quad` equally spaced drive
/// phases. Independent of any Bessel evaluation.
pub fn quadrature_average_oracle(theta_max: f64, gamma_tau: f64, n_quad: usize) -> f64 {
    assert!(n_quad >= 16, "n_quad must be at least 16, got {n_quad}");
    let mean_cos = (0..n_quad)
        .map(|k| {
            let delta = 2.0 * PI * k as f64 / n_quad as f64;
            (theta_max * delta.cos()).cos()
        })
        .sum::<f64>()
        / n_quad as f64;
    0.5 * (1.0 - (-gamma_tau).exp() * mean_cos)
}

/// (F0 / hbar) Z_c tau.
pub fn theta_max_from_config(cfg: &ExperimentConfig) -> f64 {
    cfg.f0() / cfg.constants.hbar * cfg.drive.z_c * cfg.tau()
}

/// G(theta^2) = (1 - J0(theta)) / 2.
pub fn contrast_loss(theta: f64) -> f64 {
    0.5 * one_minus_j0(theta)
}

/// dG/d(theta^2) = J1(theta) / (4 theta); 1/8 at the origin.
pub fn contrast_loss_slope(theta: f64) -> f64 {
    0.25 * bessel_j1_over_x(theta)
}

/// Largest contrast loss that can be inverted uniquely.
pub fn max_invertible_contrast_loss() -> f64 {
    contrast_loss(J0_FIRST_ZERO)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    /// Root of G(theta^2) = exp(Gamma tau) (P - P_bck).
    Exact,
    /// theta^2 = 8 exp(Gamma tau) (P - P_bck).
    SmallAngle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theta2Estimate {
    pub theta2: f64,
    /// Set when P < P_bck and the estimate was clamped to zero.
    pub clamped: bool,
}

pub fn estimate_theta2_incoherent(
    p_up: f64,
    p_bck: f64,
    gamma_tau: f64,
    mode: EstimatorMode,
) -> Result<Theta2Estimate> {
    let scaled = gamma_tau.exp() * (p_up - p_bck);
    if scaled <= 0.0 {
        return Ok(Theta2Estimate {
            theta2: 0.0,
            clamped: scaled < 0.0,
        });
    }
    let theta2 = match mode {
        EstimatorMode::SmallAngle => 8.0 * scaled,
        EstimatorMode::Exact => invert_contrast_loss(scaled)?,
    };
    Ok(Theta2Estimate {
        theta2,
        clamped: false,
    })
}

/// Solves G(s) = target for s = theta^2 in [0, j01^2].
pub fn invert_contrast_loss(target: f64) -> Result<f64> {
    let g_max = max_invertible_contrast_loss();
    if target > g_max {
        return Err(Error::OutOfInvertibleRange {
            value: target,
            max: g_max,
        });
    }
    if target <= 0.0 {
        return Ok(0.0);
    }
    // Newton in s with a bisection fallback. G is increasing and concave in
    // s on this interval, so Newton from the left never overshoots the root.
    let (mut lo, mut hi) = (0.0, J0_FIRST_ZERO * J0_FIRST_ZERO);
    let mut s = (8.0 * target).min(hi);
    for _ in 0..200 {
        let theta = s.sqrt();
        let f = contrast_loss(theta) - target;
        if f > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let slope = contrast_loss_slope(theta);
        let mut next = s - f / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - s).abs() <= 1e-15 * s.max(1e-300) {
            return Ok(next);
        }
        s = next;
    }
    Ok(s)
}

/// Population after a pi/2-shifted Ramsey readout of a fixed-phase
/// precession; the background is exactly 1/2.
pub fn p_up_coherent(theta_max: f64, gamma_tau: f64) -> f64 {
    0.5 * (1.0 - (-gamma_tau).exp() * theta_max.sin())
}

/// First-order inversion of [`p_up_coherent`].
pub fn estimate_theta_coherent(p_up: f64, gamma_tau: f64) -> f64 {
    2.0 * gamma_tau.exp() * (0.5 - p_up)
}
