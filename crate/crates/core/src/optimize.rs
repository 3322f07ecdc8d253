//! Choice of the ODF dose u_tau = (U / hbar) tau that maximizes the
//! single-pair SNR.
//!
//! The search expands a bracket geometrically from u_tau = 0.1 / xi and then
//! runs golden-section on it. The sequence timing is held fixed; only U
//! changes, so Gamma tau = xi u_tau moves along with theta_max.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::noise::{snr_coherent, snr_incoherent, snr_incoherent_smallzc, LimitParams, Protocol};
use crate::physical::ExperimentConfig;
use crate::special::J0_FIRST_ZERO;

const START: f64 = 0.1;
const CAP: f64 = 1e3;
const FLOOR: f64 = 1e-9;
const EXPANSION: f64 = 2.0;
const MAX_ITERATIONS: usize = 500;
// 1 / golden ratio
const INV_PHI: f64 = 0.618_033_988_749_894_9;

pub const DEFAULT_MEASUREMENT_RATE: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Full noise budget including the drive phase spread.
    IncoherentExact,
    /// Projection noise only, small-amplitude closed form.
    IncoherentSmallZc,
    Coherent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub objective: Objective,
    pub argmax_u_tau: f64,
    pub snr_at_optimum: f64,
    /// Every evaluated (u_tau, snr), sorted by u_tau.
    pub scan_trace: Vec<(f64, f64)>,
    pub converged: bool,
    pub iterations: usize,
}

/// Objective value at dose `u_tau` for the amplitude in `cfg`.
pub fn objective_value(cfg: &ExperimentConfig, objective: Objective, u_tau: f64) -> f64 {
    let params = LimitParams::from_config(cfg);
    match objective {
        Objective::IncoherentExact => snr_incoherent(&cfg.with_u_tau(u_tau)).snr,
        Objective::IncoherentSmallZc => snr_incoherent_smallzc(cfg.drive.z_c, u_tau, &params),
        Objective::Coherent => snr_coherent(cfg.drive.z_c, u_tau, &params),
    }
}

// Amplitude-free shapes with the same argmax, so a zero amplitude still has
// a well-defined optimum.
fn shape(cfg: &ExperimentConfig, objective: Objective, u_tau: f64) -> f64 {
    let xi = cfg.odf.xi_decay;
    match objective {
        Objective::IncoherentExact => objective_value(cfg, objective, u_tau),
        Objective::IncoherentSmallZc => u_tau * u_tau / (2.0 * xi * u_tau).exp_m1().sqrt(),
        Objective::Coherent => u_tau * (-xi * u_tau).exp(),
    }
}

/// Largest admissible dose. The exact estimator cannot be inverted past the
/// first zero of J0, so theta_max is kept below it.
fn upper_limit(cfg: &ExperimentConfig, objective: Objective) -> f64 {
    let cap = CAP / cfg.odf.xi_decay;
    if objective != Objective::IncoherentExact {
        return cap;
    }
    let per_dose = cfg.odf.dwf * cfg.odf.delta_k * cfg.drive.z_c;
    if per_dose > 0.0 {
        cap.min(J0_FIRST_ZERO / per_dose)
    } else {
        cap
    }
}

pub fn optimize_u_tau(
    cfg: &ExperimentConfig,
    objective: Objective,
    tol: f64,
) -> Result<OptimizationResult> {
    if !(1e-10..=1e-2).contains(&tol) {
        return Err(Error::invalid(
            "tol",
            format!("{tol} outside [1e-10, 1e-2]"),
        ));
    }
    let xi = cfg.odf.xi_decay;
    if xi.is_nan() || xi <= 0.0 {
        return Err(Error::NoBracket {
            u_tau: f64::INFINITY,
        });
    }
    if objective == Objective::IncoherentExact && (cfg.drive.z_c.is_nan() || cfg.drive.z_c <= 0.0) {
        return Err(Error::invalid(
            "z_c",
            "the exact incoherent objective needs a positive amplitude",
        ));
    }
    let hi_limit = upper_limit(cfg, objective);
    let mut evals: Vec<(f64, f64)> = Vec::new();
    let mut f = |u: f64| {
        let v = shape(cfg, objective, u);
        evals.push((u, v));
        v
    };

    // bracket (a, b, c) with f(b) >= f(a), f(c)
    let mut b = (START / xi).min(0.5 * hi_limit);
    let mut fb = f(b);
    let mut c = (b * EXPANSION).min(hi_limit);
    let mut fc = f(c);
    let (a, c) = if fc > fb {
        let mut a;
        loop {
            if c >= hi_limit {
                if objective == Objective::IncoherentExact && hi_limit < CAP / xi {
                    // maximum sits on the invertibility edge
                    break (b, c);
                }
                return Err(Error::NoBracket { u_tau: c });
            }
            a = b;
            b = c;
            fb = fc;
            c = (c * EXPANSION).min(hi_limit);
            fc = f(c);
            if fc <= fb {
                break (a, c);
            }
        }
    } else {
        let mut a = b / EXPANSION;
        let mut fa = f(a);
        while fa > fb {
            if a < FLOOR / xi {
                return Err(Error::NoBracket { u_tau: a });
            }
            c = b;
            b = a;
            fb = fa;
            a /= EXPANSION;
            fa = f(a);
        }
        (a, c)
    };

    let (mut lo, mut hi) = (a, c);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iterations = 0;
    while hi - lo > tol * 0.5 * (lo + hi) && iterations < MAX_ITERATIONS {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
        iterations += 1;
    }
    let converged = hi - lo <= tol * 0.5 * (lo + hi);
    let argmax = if f1 >= f2 { x1 } else { x2 };

    let mut scan_trace: Vec<(f64, f64)> = evals
        .iter()
        .map(|&(u, _)| (u, objective_value(cfg, objective, u)))
        .collect();
    scan_trace.sort_by(|p, q| p.0.total_cmp(&q.0));
    scan_trace.dedup_by(|p, q| p.0 == q.0);
    Ok(OptimizationResult {
        objective,
        argmax_u_tau: argmax,
        snr_at_optimum: objective_value(cfg, objective, argmax),
        scan_trace,
        converged,
        iterations,
    })
}

/// Uniform scan of `points` doses on [lo, hi]; returns the best point,
/// ties going to the smaller dose.
pub fn dense_scan_argmax(
    cfg: &ExperimentConfig,
    objective: Objective,
    lo: f64,
    hi: f64,
    points: usize,
) -> (f64, f64) {
    let values: Vec<(f64, f64)> = (0..points)
        .into_par_iter()
        .map(|i| {
            let u = lo + (hi - lo) * i as f64 / (points - 1).max(1) as f64;
            (u, objective_value(cfg, objective, u))
        })
        .collect();
    values
        .into_iter()
        .fold((f64::NAN, f64::NEG_INFINITY), |best, p| {
            if p.1 > best.1 {
                p
            } else {
                best
            }
        })
}

/// True when the trace rises and then falls, allowing wiggles below `tol`
/// relative to the peak.
pub fn is_unimodal(trace: &[(f64, f64)], tol: f64) -> bool {
    let peak = trace.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let slack = tol * peak.abs();
    let mut falling = false;
    for w in trace.windows(2) {
        let step = w[1].1 - w[0].1;
        if step < -slack {
            falling = true;
        } else if falling && step > slack {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub protocol: Protocol,
    pub measurement_rate: f64,
    pub argmax_u_tau: f64,
    /// Amplitude Z_c at which the single-pair SNR is 1, at the optimal dose.
    pub unit_snr_amplitude: f64,
    /// Long-averaging density: Z_c^2 per sqrt(Hz) (m^2 Hz^-1/2) for the
    /// incoherent protocol, Z_c per sqrt(Hz) (m Hz^-1/2) for the coherent one.
    pub density: f64,
}

/// Converts the optimal single-pair SNR into a sensitivity for averaging at
/// `measurement_rate` pairs per second. Uses the small-amplitude limits,
/// which are exact powers of Z_c.
pub fn sensitivity_summary(
    cfg: &ExperimentConfig,
    protocol: Protocol,
    measurement_rate: f64,
) -> Result<SensitivityReport> {
    if measurement_rate.is_nan() || measurement_rate <= 0.0 {
        return Err(Error::invalid(
            "measurement_rate",
            format!("{measurement_rate} must be positive"),
        ));
    }
    let reference = 1e-10;
    let cfg = cfg.with_z_c(reference);
    let objective = match protocol {
        Protocol::Incoherent => Objective::IncoherentSmallZc,
        Protocol::Coherent => Objective::Coherent,
    };
    let opt = optimize_u_tau(&cfg, objective, 1e-10)?;
    let root_rate = measurement_rate.sqrt();
    let (unit, density) = match protocol {
        Protocol::Incoherent => {
            let unit = reference / opt.snr_at_optimum.sqrt();
            (unit, unit * unit / root_rate)
        }
        Protocol::Coherent => {
            let unit = reference / opt.snr_at_optimum;
            (unit, unit / root_rate)
        }
    };
    Ok(SensitivityReport {
        protocol,
        measurement_rate,
        argmax_u_tau: opt.argmax_u_tau,
        unit_snr_amplitude: unit,
        density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_zc(z: f64, n: u32) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default().with_z_c(z);
        cfg.trap.n_ions = n;
        cfg
    }

    #[test]
    fn small_zc_optimum() {
        let cfg = ExperimentConfig::default();
        let r = optimize_u_tau(&cfg, Objective::IncoherentSmallZc, 1e-9).unwrap();
        let x = r.argmax_u_tau * cfg.odf.xi_decay;
        assert!((x - 1.9603).abs() < 1.9603e-3, "{x}");
        // the unrounded root of tanh-type stationarity condition
        assert!((x - 1.960_35).abs() < 1e-4, "{x}");
        assert!(r.converged);
    }

    #[test]
    fn coherent_optimum() {
        let cfg = cfg_zc(74e-12, 100);
        let r = optimize_u_tau(&cfg, Objective::Coherent, 1e-9).unwrap();
        assert!((r.argmax_u_tau * cfg.odf.xi_decay - 1.0).abs() < 1e-3);
        assert!((r.snr_at_optimum - 1.0).abs() < 0.02);
    }

    #[test]
    fn optimum_independent_of_scale_parameters() {
        let mut a = cfg_zc(30e-12, 85);
        let mut b = cfg_zc(90e-12, 300);
        b.odf.dwf = 0.5;
        b.odf.delta_k *= 1.3;
        let ra = optimize_u_tau(&a, Objective::IncoherentSmallZc, 1e-10).unwrap();
        let rb = optimize_u_tau(&b, Objective::IncoherentSmallZc, 1e-10).unwrap();
        assert_eq!(ra.argmax_u_tau, rb.argmax_u_tau);
        a.odf.xi_decay *= 2.0;
        let rc = optimize_u_tau(&a, Objective::IncoherentSmallZc, 1e-10).unwrap();
        assert!((rc.argmax_u_tau * 2.0 - ra.argmax_u_tau).abs() < 1e-8 * ra.argmax_u_tau);
    }

    #[test]
    fn matches_dense_scan() {
        for (obj, z) in [
            (Objective::IncoherentSmallZc, 0.1e-9),
            (Objective::Coherent, 0.1e-9),
            (Objective::IncoherentExact, 0.05e-9),
            (Objective::IncoherentExact, 0.5e-9),
            (Objective::IncoherentExact, 5e-9),
        ] {
            let cfg = cfg_zc(z, 85);
            let r = optimize_u_tau(&cfg, obj, 1e-9).unwrap();
            let hi = upper_limit(&cfg, obj).min(4.0 / cfg.odf.xi_decay);
            let n = 10_000;
            let (u, _) = dense_scan_argmax(&cfg, obj, 0.0, hi, n);
            let step = hi / (n - 1) as f64;
            assert!((u - r.argmax_u_tau).abs() <= 2.0 * step, "{obj:?} at {z}");
            assert!(r
                .scan_trace
                .iter()
                .all(|p| p.1 <= r.snr_at_optimum * (1.0 + 1e-9)));
            assert!(is_unimodal(&r.scan_trace, 1e-9), "{obj:?} at {z}");
        }
    }

    #[test]
    fn exact_objective_stays_invertible() {
        for z in [0.025e-9, 0.5e-9, 10e-9] {
            let cfg = cfg_zc(z, 85);
            let r = optimize_u_tau(&cfg, Objective::IncoherentExact, 1e-8).unwrap();
            let theta = cfg.odf.dwf * cfg.odf.delta_k * z * r.argmax_u_tau;
            assert!(theta < J0_FIRST_ZERO);
        }
    }

    #[test]
    fn fig3_optimum_fraction() {
        let mut cfg = ExperimentConfig::default();
        cfg.trap.n_ions = 75;
        cfg.sequence.t_arm = 1.5e-3;
        cfg.drive.z_c = 485e-12;
        let f0m = 41.3e-24;
        let full = cfg.with_f0(f0m);
        let r = optimize_u_tau(&full, Objective::IncoherentExact, 1e-8).unwrap();
        let fraction = r.argmax_u_tau / full.u_tau();
        assert!(fraction > 0.1 && fraction < 0.77, "{fraction}");
        // dense scan in F0/F0M up to the invertible limit: one interior maximum
        let f_limit = upper_limit(&full, Objective::IncoherentExact) / full.u_tau();
        assert!(f_limit < 1.0);
        let scan: Vec<(f64, f64)> = (1..=2000)
            .map(|i| i as f64 / 2000.0)
            .filter(|&f| f <= f_limit)
            .map(|f| {
                (
                    f,
                    objective_value(&full, Objective::IncoherentExact, f * full.u_tau()),
                )
            })
            .collect();
        assert!(is_unimodal(&scan, 1e-12));
        let best = scan
            .iter()
            .fold((0.0, 0.0), |b, p| if p.1 > b.1 { *p } else { b });
        assert!(best.0 > 0.1 && best.0 < 0.77);
        assert!((best.0 - fraction).abs() < 1e-3);
    }

    #[test]
    fn bad_inputs() {
        let cfg = ExperimentConfig::default();
        assert!(matches!(
            optimize_u_tau(&cfg, Objective::Coherent, 0.1),
            Err(Error::InvalidArgument { name: "tol", .. })
        ));
        let mut no_decay = cfg;
        no_decay.odf.xi_decay = 0.0;
        assert!(matches!(
            optimize_u_tau(&no_decay, Objective::Coherent, 1e-6),
            Err(Error::NoBracket { .. })
        ));
        assert!(optimize_u_tau(&cfg, Objective::IncoherentExact, 1e-6).is_err());
        assert!(sensitivity_summary(&cfg, Protocol::Coherent, 0.0).is_err());
    }

    #[test]
    fn zero_amplitude_small_zc_still_finds_argmax() {
        let cfg = ExperimentConfig::default();
        let r = optimize_u_tau(&cfg, Objective::Coherent, 1e-8).unwrap();
        assert_eq!(r.snr_at_optimum, 0.0);
        assert!((r.argmax_u_tau * cfg.odf.xi_decay - 1.0).abs() < 1e-6);
    }

    #[test]
    fn sensitivities() {
        let inc = sensitivity_summary(&cfg_zc(0.0, 85), Protocol::Incoherent, 16.0).unwrap();
        let target = (100e-12f64).powi(2);
        assert!(
            ((inc.density - target) / target).abs() < 0.05,
            "{}",
            inc.density
        );
        let coh = sensitivity_summary(&cfg_zc(0.0, 100), Protocol::Coherent, 16.0).unwrap();
        assert!(
            coh.density > 17.5e-12 && coh.density < 20.5e-12,
            "{}",
            coh.density
        );
        let fast = sensitivity_summary(&cfg_zc(0.0, 100), Protocol::Coherent, 64.0).unwrap();
        assert!((fast.density - 0.5 * coh.density).abs() < 1e-12 * coh.density);
    }

    #[test]
    fn exact_approaches_small_amplitude_limit() {
        let ratio = |z: f64| {
            let cfg = cfg_zc(z, 85);
            let exact = optimize_u_tau(&cfg, Objective::IncoherentExact, 1e-9).unwrap();
            let small = optimize_u_tau(&cfg, Objective::IncoherentSmallZc, 1e-9).unwrap();
            exact.snr_at_optimum / small.snr_at_optimum
        };
        let (r50, r25, r5) = (ratio(50e-12), ratio(25e-12), ratio(5e-12));
        assert!(r50 < r25 && r25 < r5 && r5 <= 1.0 + 1e-9);
        assert!(r25 > 0.99, "{r25}");
        assert!(r5 > 0.999, "{r5}");
    }

    #[test]
    fn coherent_scales_inverse_with_xi_at_optimum() {
        let a = cfg_zc(50e-12, 100);
        let mut b = a;
        b.odf.xi_decay *= 0.5;
        let ra = optimize_u_tau(&a, Objective::Coherent, 1e-10).unwrap();
        let rb = optimize_u_tau(&b, Objective::Coherent, 1e-10).unwrap();
        assert!((rb.snr_at_optimum / ra.snr_at_optimum - 2.0).abs() < 1e-8);
    }
}
