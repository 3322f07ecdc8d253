//! Physical constants, the experiment configuration, and the derived
//! quantities everything else is computed from.
//!
//! All values are SI. Angular frequencies are in rad/s.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::SequenceConfig;

/// Unified atomic mass unit, CODATA 2018.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

/// Relative distance between drive and trap frequency below which the
/// off-resonant response is treated as divergent.
pub const RESONANCE_GUARD: f64 = 1e-6;

/// Above this Lamb-Dicke parameter of the drive the linearization in
/// `delta_k * z_c` is rejected outright.
pub const MAX_DRIVE_LAMB_DICKE: f64 = 0.1;
/// Above this value a warning is produced but the configuration is accepted.
pub const WARN_DRIVE_LAMB_DICKE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub k_b: f64,
    pub q_e: f64,
    pub m_ion: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            hbar: 1.054_571_817e-34,
            k_b: 1.380_649e-23,
            q_e: 1.602_176_634e-19,
            // 9Be+, electron mass neglected
            m_ion: 9.0 * ATOMIC_MASS_UNIT,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        positive("constants.hbar", self.hbar)?;
        positive("constants.k_b", self.k_b)?;
        positive("constants.q_e", self.q_e)?;
        positive("constants.m_ion", self.m_ion)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapConfig {
    /// Axial COM frequency.
    pub omega_z: f64,
    pub n_ions: u32,
    /// Informational only.
    pub b_field: f64,
}

impl Default for TrapConfig {
    fn default() -> Self {
        Self {
            omega_z: 2.0 * PI * 1.57e6,
            n_ions: 85,
            b_field: 4.45,
        }
    }
}

impl TrapConfig {
    pub fn validate(&self) -> Result<()> {
        positive("trap.omega_z", self.omega_z)?;
        if self.n_ions < 1 {
            return Err(Error::config("trap.n_ions", "must be at least 1"));
        }
        Ok(())
    }
}

/// Optical-dipole force parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdfConfig {
    /// Zero-to-peak optical potential U/hbar.
    pub u_over_hbar: f64,
    /// Wavevector difference of the ODF beams.
    pub delta_k: f64,
    /// Debye-Waller factor.
    pub dwf: f64,
    /// Spontaneous-emission rate per unit U/hbar.
    pub xi_decay: f64,
    /// Global phase of the ODF beatnote.
    pub odf_phase: f64,
    /// ODF difference frequency. `None` means locked to the drive frequency.
    pub mu: Option<f64>,
}

impl Default for OdfConfig {
    fn default() -> Self {
        Self {
            u_over_hbar: 2.0 * PI * 10.4e3,
            delta_k: 2.0 * PI / 0.9e-6,
            dwf: 0.86,
            xi_decay: 1.156e-3,
            odf_phase: 0.0,
            mu: None,
        }
    }
}

impl OdfConfig {
    /// Decoherence rate from off-resonant scattering.
    pub fn gamma(&self) -> f64 {
        self.xi_decay * self.u_over_hbar
    }

    pub fn validate(&self) -> Result<()> {
        non_negative("odf.u_over_hbar", self.u_over_hbar)?;
        positive("odf.delta_k", self.delta_k)?;
        if !(self.dwf > 0.0 && self.dwf <= 1.0) {
            return Err(Error::config(
                "odf.dwf",
                format!("must be in (0, 1], got {}", self.dwf),
            ));
        }
        non_negative("odf.xi_decay", self.xi_decay)?;
        finite("odf.odf_phase", self.odf_phase)?;
        if let Some(mu) = self.mu {
            positive("odf.mu", mu)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaPolicy {
    /// A fresh uniform phase on [0, 2pi) for every trial.
    RandomUniform,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    /// Zero-to-peak COM amplitude.
    pub z_c: f64,
    pub omega_drive: f64,
    pub delta_policy: DeltaPolicy,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            z_c: 0.0,
            omega_drive: 2.0 * PI * 400e3,
            delta_policy: DeltaPolicy::RandomUniform,
        }
    }
}

impl DriveConfig {
    pub fn validate(&self) -> Result<()> {
        non_negative("drive.z_c", self.z_c)?;
        positive("drive.omega_drive", self.omega_drive)?;
        if let DeltaPolicy::Fixed(d) = self.delta_policy {
            finite("drive.delta_policy", d)?;
        }
        Ok(())
    }
}

/// Spin readout. The divisor models a metrological gain (e.g. from spin
/// squeezing) applied to every projection-noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutConfig {
    pub projection_variance_divisor: f64,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        Self {
            projection_variance_divisor: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub constants: PhysicalConstants,
    pub trap: TrapConfig,
    pub odf: OdfConfig,
    pub drive: DriveConfig,
    pub sequence: SequenceConfig,
    pub readout: ReadoutConfig,
}

impl ExperimentConfig {
    /// Checks every member invariant. Returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        self.constants.validate()?;
        self.trap.validate()?;
        self.odf.validate()?;
        self.drive.validate()?;
        self.sequence.validate()?;
        positive(
            "readout.projection_variance_divisor",
            self.readout.projection_variance_divisor,
        )?;

        let mut warnings = Vec::new();
        let eta = self.odf.delta_k * self.drive.z_c;
        if eta >= MAX_DRIVE_LAMB_DICKE {
            return Err(Error::config(
                "drive.z_c",
                format!("delta_k * z_c = {eta:.4} must stay below {MAX_DRIVE_LAMB_DICKE}"),
            ));
        }
        if eta > WARN_DRIVE_LAMB_DICKE {
            warnings.push(format!(
                "drive.z_c: delta_k * z_c = {eta:.4}; linear response becomes approximate"
            ));
        }
        Ok(warnings)
    }

    /// Total ODF interaction time 2 m T.
    pub fn tau(&self) -> f64 {
        self.sequence.tau()
    }

    pub fn f0(&self) -> f64 {
        derive_f0(&self.odf, &self.constants)
    }

    pub fn gamma_tau(&self) -> f64 {
        self.odf.gamma() * self.tau()
    }

    /// (U/hbar) * tau, the dimensionless ODF dose.
    pub fn u_tau(&self) -> f64 {
        self.odf.u_over_hbar * self.tau()
    }

    /// ODF difference frequency actually used: the configured value or the
    /// drive frequency.
    pub fn mu(&self) -> f64 {
        self.odf.mu.unwrap_or(self.drive.omega_drive)
    }

    pub fn z_zpt(&self) -> f64 {
        zero_point_amplitude(&self.trap, &self.constants)
    }

    /// Same configuration with U rescaled so that (U/hbar) * tau = `u_tau`,
    /// keeping the sequence timing fixed.
    pub fn with_u_tau(&self, u_tau: f64) -> Self {
        let mut cfg = *self;
        cfg.odf.u_over_hbar = u_tau / self.tau();
        cfg
    }

    pub fn with_z_c(&self, z_c: f64) -> Self {
        let mut cfg = *self;
        cfg.drive.z_c = z_c;
        cfg
    }

    /// Same configuration with U chosen so that F0 equals `f0`.
    pub fn with_f0(&self, f0: f64) -> Self {
        let mut cfg = *self;
        cfg.odf.u_over_hbar = u_over_hbar_for_f0(f0, &self.odf, &self.constants);
        cfg
    }
}

/// F0 = U * delta_k * DWF.
pub fn derive_f0(odf: &OdfConfig, constants: &PhysicalConstants) -> f64 {
    constants.hbar * odf.u_over_hbar * odf.delta_k * odf.dwf
}

/// Inverse of [`derive_f0`] for the potential.
pub fn u_over_hbar_for_f0(f0: f64, odf: &OdfConfig, constants: &PhysicalConstants) -> f64 {
    f0 / (constants.hbar * odf.delta_k * odf.dwf)
}

/// COM zero-point amplitude sqrt(hbar / (2 m omega_z)) / sqrt(N).
pub fn zero_point_amplitude(trap: &TrapConfig, constants: &PhysicalConstants) -> f64 {
    (constants.hbar / (2.0 * constants.m_ion * trap.omega_z)).sqrt() / f64::from(trap.n_ions).sqrt()
}

/// exp(-delta_k^2 <z^2> / 2)
pub fn dwf_from_msd(delta_k: f64, msd: f64) -> f64 {
    (-0.5 * delta_k * delta_k * msd).exp()
}

pub fn msd_from_dwf(delta_k: f64, dwf: f64) -> f64 {
    -2.0 * dwf.ln() / (delta_k * delta_k)
}

/// Classical thermal mean-square displacement of the COM mode alone,
/// k_B T / (m omega_z^2).
pub fn thermal_com_msd(temperature: f64, trap: &TrapConfig, constants: &PhysicalConstants) -> f64 {
    constants.k_b * temperature / (constants.m_ion * trap.omega_z * trap.omega_z)
}

fn check_off_resonant(omega_drive: f64, trap: &TrapConfig) -> Result<f64> {
    if (omega_drive - trap.omega_z).abs() / trap.omega_z < RESONANCE_GUARD {
        return Err(Error::ResonantDrive {
            omega_drive,
            omega_z: trap.omega_z,
        });
    }
    Ok((trap.omega_z * trap.omega_z - omega_drive * omega_drive).abs())
}

/// Steady-state amplitude of an undamped oscillator driven off resonance
/// by a uniform field: (qE/m) / |omega_z^2 - omega^2|.
pub fn offres_amplitude_from_field(
    e_field: f64,
    omega_drive: f64,
    trap: &TrapConfig,
    constants: &PhysicalConstants,
) -> Result<f64> {
    let detuning = check_off_resonant(omega_drive, trap)?;
    Ok(constants.q_e * e_field / constants.m_ion / detuning)
}

pub fn offres_field_from_amplitude(
    z: f64,
    omega_drive: f64,
    trap: &TrapConfig,
    constants: &PhysicalConstants,
) -> Result<f64> {
    let detuning = check_off_resonant(omega_drive, trap)?;
    Ok(z * detuning * constants.m_ion / constants.q_e)
}

pub fn force_per_ion(e_field: f64, constants: &PhysicalConstants) -> f64 {
    constants.q_e * e_field
}

/// Amplitude after driving the COM mode on resonance for `drive_time`,
/// with damping neglected: F t / (2 m omega_z).
pub fn resonant_ringup_amplitude(
    force_per_ion: f64,
    drive_time: f64,
    trap: &TrapConfig,
    constants: &PhysicalConstants,
) -> f64 {
    force_per_ion * drive_time / (2.0 * constants.m_ion * trap.omega_z)
}

/// Force per ion needed to ring the COM mode up to `amplitude` in `drive_time`.
pub fn resonant_force_for_amplitude(
    amplitude: f64,
    drive_time: f64,
    trap: &TrapConfig,
    constants: &PhysicalConstants,
) -> f64 {
    amplitude * 2.0 * constants.m_ion * trap.omega_z / drive_time
}

pub(crate) fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(
            field,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

pub(crate) fn non_negative(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(
            field,
            format!("must be non-negative and finite, got {v}"),
        ))
    }
}

pub(crate) fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be finite, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const YN: f64 = 1e-24;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn f0_typical_maximum() {
        let c = PhysicalConstants::default();
        let odf = OdfConfig::default();
        assert!(rel(derive_f0(&odf, &c), 41.3 * YN) < 0.01);
    }

    #[test]
    fn f0_zero_potential() {
        let odf = OdfConfig {
            u_over_hbar: 0.0,
            ..OdfConfig::default()
        };
        assert_eq!(derive_f0(&odf, &PhysicalConstants::default()), 0.0);
    }

    #[test]
    fn f0_without_debye_waller() {
        let c = PhysicalConstants::default();
        let odf = OdfConfig {
            dwf: 1.0,
            ..OdfConfig::default()
        };
        // hand arithmetic: 1.054571817e-34 * 65345.127 * 6981317.0 = 4.81090e-23
        let by_hand = 1.054_571_817e-34 * (2.0 * PI * 10.4e3) * (2.0 * PI / 0.9e-6);
        assert!(rel(derive_f0(&odf, &c), by_hand) < 1e-15);
        assert!(rel(by_hand, 48.109e-24) < 1e-4);
    }

    #[test]
    fn f0_is_linear_in_each_factor() {
        let c = PhysicalConstants::default();
        let base = OdfConfig::default();
        let f = derive_f0(&base, &c);
        let u2 = OdfConfig {
            u_over_hbar: 3.0 * base.u_over_hbar,
            ..base
        };
        let k2 = OdfConfig {
            delta_k: 0.5 * base.delta_k,
            ..base
        };
        let d2 = OdfConfig { dwf: 0.43, ..base };
        assert!(rel(derive_f0(&u2, &c), 3.0 * f) < 1e-15);
        assert!(rel(derive_f0(&k2, &c), 0.5 * f) < 1e-15);
        assert!(rel(derive_f0(&d2, &c), 0.5 * f) < 1e-15);
    }

    #[test]
    fn zero_point_amplitude_values() {
        let c = PhysicalConstants::default();
        let trap = TrapConfig::default();
        let z = zero_point_amplitude(&trap, &c);
        assert!(rel(z, 2e-9) < 0.10, "{z}");

        let with_n = |n| zero_point_amplitude(&TrapConfig { n_ions: n, ..trap }, &c);
        assert!(rel(with_n(1) / with_n(100), 10.0) < 1e-14);
        assert!(rel(with_n(340), 0.5 * with_n(85)) < 1e-14);
        for n in [1, 7, 85, 1000] {
            assert!(rel(with_n(n) * f64::from(n).sqrt(), with_n(1)) < 1e-14);
        }
    }

    #[test]
    fn debye_waller() {
        let dk = 2.0 * PI / 0.9e-6;
        assert_eq!(dwf_from_msd(dk, 0.0), 1.0);
        let msd = 2.0 * (1.0 / 0.86f64).ln() / (dk * dk);
        assert!((dwf_from_msd(dk, msd) - 0.86).abs() < 1e-15);
        assert!(rel(msd_from_dwf(dk, 0.86), msd) < 1e-12);
    }

    #[test]
    fn debye_waller_from_com_thermal_motion() {
        let c = PhysicalConstants::default();
        let trap = TrapConfig::default();
        let msd = thermal_com_msd(0.5e-3, &trap, &c);
        // k_B (0.5 mK) / (m omega_z^2), evaluated independently: 4.7468e-15 m^2
        assert!(rel(msd, 4.7468e-15) < 1e-4);
        let dwf = dwf_from_msd(OdfConfig::default().delta_k, msd);
        assert!((dwf - 0.89).abs() < 0.005, "{dwf}");
    }

    #[test]
    fn off_resonant_field_cross_check() {
        let c = PhysicalConstants::default();
        let trap = TrapConfig::default();
        let w = 2.0 * PI * 400e3;
        let e = 0.46e-3;
        let z = offres_amplitude_from_field(e, w, &trap, &c).unwrap();
        assert!(rel(z, 50e-12) < 0.15, "{z}");
        assert!(rel(force_per_ion(e, &c), 73.7e-24) < 0.02);
        assert_eq!(offres_amplitude_from_field(0.0, w, &trap, &c).unwrap(), 0.0);
        let back = offres_field_from_amplitude(z, w, &trap, &c).unwrap();
        assert!(rel(back, e) < 1e-12);
    }

    #[test]
    fn resonant_drive_is_rejected() {
        let c = PhysicalConstants::default();
        let trap = TrapConfig::default();
        let err = offres_amplitude_from_field(1e-3, trap.omega_z * (1.0 + 1e-7), &trap, &c);
        assert!(matches!(err, Err(Error::ResonantDrive { .. })));
        assert!(offres_amplitude_from_field(1e-3, trap.omega_z * (1.0 + 1e-5), &trap, &c).is_ok());
    }

    #[test]
    fn ringup() {
        let c = PhysicalConstants::default();
        let trap = TrapConfig::default();
        let z = resonant_ringup_amplitude(5e-29, 0.1, &trap, &c);
        assert!(rel(z, 20e-12) < 0.20, "{z}");
        assert_eq!(resonant_ringup_amplitude(5e-29, 0.0, &trap, &c), 0.0);
        assert_eq!(resonant_ringup_amplitude(5e-29, 0.2, &trap, &c), 2.0 * z);
        let f = resonant_force_for_amplitude(z, 0.1, &trap, &c);
        assert!(rel(f, 5e-29) < 1e-14);
    }

    #[test]
    fn validation_names_the_field() {
        let mut cfg = ExperimentConfig::default();
        cfg.odf.dwf = 1.2;
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.starts_with("odf.dwf"), "{msg}");

        let mut cfg = ExperimentConfig::default();
        cfg.trap.n_ions = 0;
        assert!(cfg
            .validate()
            .unwrap_err()
            .to_string()
            .starts_with("trap.n_ions"));
    }

    #[test]
    fn lamb_dicke_guard_on_drive() {
        let dk = OdfConfig::default().delta_k;
        let cfg = ExperimentConfig::default().with_z_c(0.2 / dk);
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::default().with_z_c(0.07 / dk);
        assert_eq!(cfg.validate().unwrap().len(), 1);
        let cfg = ExperimentConfig::default().with_z_c(5e-9);
        assert!(cfg.validate().unwrap().is_empty());
    }

    #[test]
    fn rescaling_helpers() {
        let cfg = ExperimentConfig::default();
        let scaled = cfg.with_u_tau(1000.0);
        assert!(rel(scaled.u_tau(), 1000.0) < 1e-15);
        assert_eq!(scaled.tau(), cfg.tau());
        let f = cfg.with_f0(7.9e-24);
        assert!(rel(f.f0(), 7.9e-24) < 1e-15);
    }
}
