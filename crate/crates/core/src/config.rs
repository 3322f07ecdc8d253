//! JSON configuration files.
//!
//! Every section and field is optional; missing values take the defaults of
//! [`ExperimentConfig`]. A few quantities can be given in an alternative
//! form:
//!
//! * `odf.f0` (N) instead of `odf.u_over_hbar`
//! * `odf.msd` (mean-square ion displacement, m^2) instead of `odf.dwf`
//! * `sequence.tau` (total ODF time, s) instead of `sequence.t_arm`
//!
//! The serialized form of a resolved [`ExperimentConfig`] is itself a valid
//! config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physical::{
    dwf_from_msd, u_over_hbar_for_f0, zero_point_amplitude, DeltaPolicy, ExperimentConfig,
};
use crate::sequence::Modulation;
use crate::signal::theta_max_from_config;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    /// Free text, carried into run manifests.
    pub description: Option<String>,
    pub constants: Option<ConstantsSection>,
    pub trap: Option<TrapSection>,
    pub odf: Option<OdfSection>,
    pub drive: Option<DriveSection>,
    pub sequence: Option<SequenceSection>,
    pub readout: Option<ReadoutSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    pub hbar: Option<f64>,
    pub k_b: Option<f64>,
    pub q_e: Option<f64>,
    pub m_ion: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapSection {
    pub omega_z: Option<f64>,
    pub n_ions: Option<u32>,
    pub b_field: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdfSection {
    pub u_over_hbar: Option<f64>,
    pub f0: Option<f64>,
    pub delta_k: Option<f64>,
    pub dwf: Option<f64>,
    pub msd: Option<f64>,
    pub xi_decay: Option<f64>,
    pub odf_phase: Option<f64>,
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    pub z_c: Option<f64>,
    pub omega_drive: Option<f64>,
    pub delta_policy: Option<DeltaPolicy>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSection {
    pub m_segments: Option<u32>,
    pub t_arm: Option<f64>,
    pub tau: Option<f64>,
    pub t_pi: Option<f64>,
    pub modulation: Option<Modulation>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutSection {
    pub projection_variance_divisor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub config: ExperimentConfig,
    pub description: Option<String>,
    pub warnings: Vec<String>,
}

fn exclusive<T: Copy>(a: Option<T>, a_name: &str, b: Option<T>, b_name: &str) -> Result<()> {
    if a.is_some() && b.is_some() {
        return Err(Error::config(
            b_name,
            format!("conflicts with {a_name}; give only one"),
        ));
    }
    Ok(())
}

impl ConfigFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::ConfigParse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Applies the file over the defaults and validates the result.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let mut cfg = ExperimentConfig::default();

        if let Some(c) = &self.constants {
            let k = &mut cfg.constants;
            k.hbar = c.hbar.unwrap_or(k.hbar);
            k.k_b = c.k_b.unwrap_or(k.k_b);
            k.q_e = c.q_e.unwrap_or(k.q_e);
            k.m_ion = c.m_ion.unwrap_or(k.m_ion);
        }
        if let Some(t) = &self.trap {
            cfg.trap.omega_z = t.omega_z.unwrap_or(cfg.trap.omega_z);
            cfg.trap.n_ions = t.n_ions.unwrap_or(cfg.trap.n_ions);
            cfg.trap.b_field = t.b_field.unwrap_or(cfg.trap.b_field);
        }
        if let Some(s) = &self.sequence {
            exclusive(s.t_arm, "sequence.t_arm", s.tau, "sequence.tau")?;
            let q = &mut cfg.sequence;
            q.m_segments = s.m_segments.unwrap_or(q.m_segments);
            q.t_pi = s.t_pi.unwrap_or(q.t_pi);
            q.modulation = s.modulation.unwrap_or(q.modulation);
            if let Some(t_arm) = s.t_arm {
                q.t_arm = t_arm;
            }
            if let Some(tau) = s.tau {
                if q.m_segments == 0 {
                    return Err(Error::config("sequence.m_segments", "must be at least 1"));
                }
                q.t_arm = tau / (2.0 * f64::from(q.m_segments));
            }
        }
        if let Some(o) = &self.odf {
            exclusive(o.u_over_hbar, "odf.u_over_hbar", o.f0, "odf.f0")?;
            exclusive(o.dwf, "odf.dwf", o.msd, "odf.msd")?;
            let d = &mut cfg.odf;
            d.delta_k = o.delta_k.unwrap_or(d.delta_k);
            d.xi_decay = o.xi_decay.unwrap_or(d.xi_decay);
            d.odf_phase = o.odf_phase.unwrap_or(d.odf_phase);
            d.u_over_hbar = o.u_over_hbar.unwrap_or(d.u_over_hbar);
            if o.mu.is_some() {
                d.mu = o.mu;
            }
            if let Some(dwf) = o.dwf {
                d.dwf = dwf;
            }
            if let Some(msd) = o.msd {
                if !(msd >= 0.0 && msd.is_finite()) {
                    return Err(Error::config(
                        "odf.msd",
                        format!("must be non-negative, got {msd}"),
                    ));
                }
                d.dwf = dwf_from_msd(d.delta_k, msd);
            }
            if let Some(f0) = o.f0 {
                if !(f0 >= 0.0 && f0.is_finite()) {
                    return Err(Error::config(
                        "odf.f0",
                        format!("must be non-negative, got {f0}"),
                    ));
                }
                d.u_over_hbar = u_over_hbar_for_f0(f0, d, &cfg.constants);
            }
        }
        if let Some(dr) = &self.drive {
            cfg.drive.z_c = dr.z_c.unwrap_or(cfg.drive.z_c);
            cfg.drive.omega_drive = dr.omega_drive.unwrap_or(cfg.drive.omega_drive);
            cfg.drive.delta_policy = dr.delta_policy.unwrap_or(cfg.drive.delta_policy);
        }
        if let Some(r) = &self.readout {
            cfg.readout.projection_variance_divisor = r
                .projection_variance_divisor
                .unwrap_or(cfg.readout.projection_variance_divisor);
        }

        let warnings = cfg.validate()?;
        Ok(ResolvedConfig {
            config: cfg,
            description: self.description.clone(),
            warnings,
        })
    }
}

pub fn load_config(path: &Path) -> Result<ResolvedConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::ConfigIo {
        path: PathBuf::from(path),
        source,
    })?;
    ConfigFile::parse(&text, path)?.resolve()
}

/// Quantities derived from a configuration, for display.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedQuantities {
    pub f0: f64,
    pub gamma: f64,
    pub tau: f64,
    pub gamma_tau: f64,
    pub u_tau: f64,
    pub theta_max: f64,
    pub z_zpt: f64,
    pub mu: f64,
}

impl DerivedQuantities {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        Self {
            f0: cfg.f0(),
            gamma: cfg.odf.gamma(),
            tau: cfg.tau(),
            gamma_tau: cfg.gamma_tau(),
            u_tau: cfg.u_tau(),
            theta_max: theta_max_from_config(cfg),
            z_zpt: zero_point_amplitude(&cfg.trap, &cfg.constants),
            mu: cfg.mu(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigDump {
    pub config: ExperimentConfig,
    pub derived: DerivedQuantities,
}
