//! CPMG quantum lock-in sequence and its lineshape.
//!
//! A sequence of `m` segments has `2m` ODF windows of length `T`. Each
//! segment is ODF-pi-ODF and consecutive segments abut, so window `j`
//! (segment `s = j / 2`, half `h = j % 2`) starts at
//! `s (2T + t_pi) + h (T + t_pi)`. The spin sign flips at every pi pulse,
//! giving `+ - - + + - - + ...`, and with phase advance enabled the ODF
//! phase is stepped by `mu (T + t_pi)` at every pi pulse.
//!
//! Integrating `cos((omega - mu) t + delta - phi + phi_j)` over the windows
//! and summing the segments as a geometric series gives, for even `m`,
//!
//! ```text
//! theta(mu) = -theta_max(mu) cos(m xi + delta - phi)
//! theta_max(mu) = theta_max sinc(T (omega - mu) / 2) sin(omega (T + t_pi) / 2)
//!                 sin(m xi) / (m cos xi)
//! xi = (omega (T + t_pi) + T (omega - mu)) / 2
//! ```
//!
//! which reduces to `sin xi` for m = 2 and `sin xi cos 2xi cos 4xi` for
//! m = 8. Only those two closed forms are exposed; every other case goes
//! through the window sum in [`theta_of_mu_oracle`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physical::{positive, ExperimentConfig};
use crate::signal::p_up_bessel;
use crate::special::sinc;

/// Default lineshape scan: points and half-width (rad/s) around the drive.
pub const LINESHAPE_POINTS: usize = 801;
pub const LINESHAPE_HALF_SPAN: f64 = 2.0 * PI * 1.5e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modulation {
    /// Advance the ODF phase by mu (T + t_pi) at each pi pulse.
    PhaseAdvance,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    pub m_segments: u32,
    /// ODF window length T.
    pub t_arm: f64,
    pub t_pi: f64,
    pub modulation: Modulation,
}

impl Default for SequenceConfig {
    /// m = 8 with tau = 20 ms. t_pi puts 400 kHz on a lock-in frequency:
    /// 400 kHz * (T + t_pi) = 520.5.
    fn default() -> Self {
        Self {
            m_segments: 8,
            t_arm: 1.25e-3,
            t_pi: 51.25e-6,
            modulation: Modulation::PhaseAdvance,
        }
    }
}

impl SequenceConfig {
    /// Total ODF interaction time; pi pulses are excluded.
    pub fn tau(&self) -> f64 {
        2.0 * f64::from(self.m_segments) * self.t_arm
    }

    /// T + t_pi, the spacing of pi pulses.
    pub fn period(&self) -> f64 {
        self.t_arm + self.t_pi
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_segments < 1 {
            return Err(Error::config("sequence.m_segments", "must be at least 1"));
        }
        positive("sequence.t_arm", self.t_arm)?;
        if !(self.t_pi.is_finite() && self.t_pi >= 0.0) {
            return Err(Error::config(
                "sequence.t_pi",
                format!("must be non-negative and finite, got {}", self.t_pi),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdfWindow {
    pub start: f64,
    pub duration: f64,
    pub spin_sign: i8,
    /// Accumulated ODF phase advance, rad.
    pub odf_phase_offset: f64,
}

impl OdfWindow {
    pub fn midpoint(&self) -> f64 {
        self.start + 0.5 * self.duration
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceTimeline {
    pub windows: Vec<OdfWindow>,
}

impl SequenceTimeline {
    pub fn total_odf_time(&self) -> f64 {
        self.windows.iter().map(|w| w.duration).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignalPoint {
    pub mu: f64,
    pub theta_max_mu: f64,
    pub p_up: f64,
}

pub fn build_timeline(seq: &SequenceConfig, mu: f64) -> SequenceTimeline {
    let t = seq.t_arm;
    let step = match seq.modulation {
        Modulation::PhaseAdvance => mu * seq.period(),
        Modulation::None => 0.0,
    };
    let windows = (0..2 * seq.m_segments)
        .map(|j| {
            let (s, h) = (f64::from(j / 2), f64::from(j % 2));
            // pi pulses preceding this window
            let pulses = j / 2 + j % 2;
            OdfWindow {
                start: s * (2.0 * t + seq.t_pi) + h * seq.period(),
                duration: t,
                spin_sign: if pulses % 2 == 0 { 1 } else { -1 },
                odf_phase_offset: f64::from(pulses) * step,
            }
        })
        .collect();
    SequenceTimeline { windows }
}

/// Lock-in ODF frequency mu / 2pi = (2n + 1) / (2 (T + t_pi)).
pub fn lockin_mu(seq: &SequenceConfig, n: u32) -> f64 {
    PI * f64::from(2 * n + 1) / seq.period()
}

/// Lineshape phase variable (omega (T + t_pi) + T (omega - mu)) / 2.
pub fn xi_line(seq: &SequenceConfig, omega: f64, mu: f64) -> f64 {
    0.5 * (omega * seq.period() + seq.t_arm * (omega - mu))
}

/// Resonant precession amplitude (F0 / hbar) Z_c tau.
fn theta_max_resonant(cfg: &ExperimentConfig) -> f64 {
    cfg.f0() / cfg.constants.hbar * cfg.drive.z_c * cfg.tau()
}

/// Signed theta_max(mu) from the closed-form lineshape (m = 2 or 8).
pub fn theta_of_mu_closed(cfg: &ExperimentConfig, mu: f64) -> Result<f64> {
    let seq = &cfg.sequence;
    if seq.modulation != Modulation::PhaseAdvance {
        return Err(Error::UnsupportedSequence {
            m_segments: seq.m_segments,
            detail: "phase advance disabled",
        });
    }
    let omega = cfg.drive.omega_drive;
    let xi = xi_line(seq, omega, mu);
    let chain = match seq.m_segments {
        2 => xi.sin(),
        8 => xi.sin() * (2.0 * xi).cos() * (4.0 * xi).cos(),
        _ => {
            return Err(Error::UnsupportedSequence {
                m_segments: seq.m_segments,
                detail: "closed forms exist for m = 2 and m = 8",
            })
        }
    };
    Ok(theta_max_resonant(cfg)
        * sinc(0.5 * seq.t_arm * (omega - mu))
        * (0.5 * omega * seq.period()).sin()
        * chain)
}

/// Phase `m xi - phi` such that the precession for quadrature `delta` is
/// `-theta_of_mu_closed * cos(quadrature_phase + delta)`.
pub fn quadrature_phase(cfg: &ExperimentConfig, mu: f64) -> f64 {
    let xi = xi_line(&cfg.sequence, cfg.drive.omega_drive, mu);
    f64::from(cfg.sequence.m_segments) * xi - cfg.odf.odf_phase
}

/// Precession accumulated over the explicit timeline for drive phase
/// `delta`, each window integrated exactly.
pub fn theta_of_mu_oracle(cfg: &ExperimentConfig, mu: f64, delta: f64) -> f64 {
    let timeline = build_timeline(&cfg.sequence, mu);
    let detuning = cfg.drive.omega_drive - mu;
    let phase0 = delta - cfg.odf.odf_phase;
    let sum: f64 = timeline
        .windows
        .iter()
        .map(|w| {
            f64::from(w.spin_sign)
                * window_integral(detuning, w.start, w.duration, phase0 + w.odf_phase_offset)
        })
        .sum();
    cfg.f0() / cfg.constants.hbar * cfg.drive.z_c * sum
}

/// Integral of cos(detuning * t + phase) over [start, start + duration].
pub(crate) fn window_integral(detuning: f64, start: f64, duration: f64, phase: f64) -> f64 {
    duration * sinc(0.5 * detuning * duration) * (detuning * (start + 0.5 * duration) + phase).cos()
}

/// Amplitude of the oracle precession over all drive phases. The oracle is
/// a pure sinusoid in delta, so two quadratures determine it.
pub fn theta_max_of_mu_oracle(cfg: &ExperimentConfig, mu: f64) -> f64 {
    theta_of_mu_oracle(cfg, mu, 0.0).hypot(theta_of_mu_oracle(cfg, mu, 0.5 * PI))
}

/// theta_max(mu) for lineshape output: the closed form where one exists,
/// otherwise the oracle amplitude.
pub fn theta_max_of_mu(cfg: &ExperimentConfig, mu: f64) -> f64 {
    theta_of_mu_closed(cfg, mu).unwrap_or_else(|_| theta_max_of_mu_oracle(cfg, mu))
}

/// Uniform grid of `points` ODF frequencies centred on `center`.
pub fn mu_grid(center: f64, half_span: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![center],
        _ => (0..points)
            .map(|i| center - half_span + 2.0 * half_span * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

pub fn lineshape(cfg: &ExperimentConfig, mus: &[f64]) -> Vec<SignalPoint> {
    let gamma_tau = cfg.gamma_tau();
    mus.iter()
        .map(|&mu| {
            let theta = theta_max_of_mu(cfg, mu);
            SignalPoint {
                mu,
                theta_max_mu: theta,
                p_up: p_up_bessel(theta.abs(), gamma_tau),
            }
        })
        .collect()
}
