use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field violates its invariant. `field` uses the
    /// dotted JSON path, e.g. `odf.dwf`.
    #[error("{field}: {reason}")]
    Config { field: String, reason: String },

    #[error("cannot read config file {}: {source}", path.display())]
    ConfigIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot parse config file {}: {source}", path.display())]
    ConfigParse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    /// The off-resonant response formula diverges when the drive sits on
    /// the trap frequency.
    #[error(
        "drive frequency {omega_drive} rad/s is within 1e-6 of the trap frequency {omega_z} rad/s"
    )]
    ResonantDrive { omega_drive: f64, omega_z: f64 },

    /// Closed-form lineshapes exist only for m = 2 and m = 8 with phase
    /// advance enabled; use the segment-integration path otherwise.
    #[error("no closed-form lineshape for m = {m_segments} ({detail})")]
    UnsupportedSequence {
        m_segments: u32,
        detail: &'static str,
    },

    /// The Bessel signal turns over at the first zero of J0, beyond which
    /// theta^2 is not uniquely determined by the population difference.
    #[error("scaled population difference {value} exceeds the invertible maximum {max}")]
    OutOfInvertibleRange { value: f64, max: f64 },

    #[error("objective still rising at u_tau = {u_tau}; no bracket found")]
    NoBracket { u_tau: f64 },

    #[error("invalid argument {name}: {reason}")]
    InvalidArgument { name: &'static str, reason: String },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}
