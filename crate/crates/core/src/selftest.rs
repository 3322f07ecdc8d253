//! Built-in oracle checks, run by the `selftest` command.

use std::f64::consts::PI;

use serde::Serialize;

use crate::montecarlo::{
    operating_point, run_pairs, sample_variance, simulate_trials, PairRunOptions, Readout, RngSpec,
};
use crate::noise::{
    delta_phase_variance, noise_budget, projection_variance, snr_incoherent_limiting, LimitParams,
};
use crate::optimize::{optimize_u_tau, Objective};
use crate::physical::ExperimentConfig;
use crate::sequence::{
    mu_grid, theta_max_of_mu_oracle, theta_of_mu_closed, LINESHAPE_HALF_SPAN, LINESHAPE_POINTS,
};
use crate::signal::{
    contrast_loss, contrast_loss_slope, p_up_background, p_up_bessel, quadrature_average_oracle,
};
use crate::special::{bessel_j0, J0_FIRST_ZERO};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

/// Largest |closed - oracle| amplitude over the standard grid, relative to
/// the resonant theta_max.
pub fn lineshape_max_error(m_segments: u32) -> f64 {
    let mut cfg = ExperimentConfig::default().with_z_c(1e-9);
    cfg.sequence.m_segments = m_segments;
    cfg.sequence.t_arm = 20e-3 / (2.0 * f64::from(m_segments));
    let peak = cfg.f0() / cfg.constants.hbar * cfg.drive.z_c * cfg.tau();
    mu_grid(cfg.drive.omega_drive, LINESHAPE_HALF_SPAN, LINESHAPE_POINTS)
        .into_iter()
        .map(|mu| {
            let closed = theta_of_mu_closed(&cfg, mu).expect("m = 2 or 8").abs();
            (closed - theta_max_of_mu_oracle(&cfg, mu)).abs() / peak
        })
        .fold(0.0, f64::max)
}

/// Largest |Bessel signal - 4096-point phase average| for theta in [0, 20].
pub fn quadrature_max_error() -> f64 {
    (0..=400)
        .map(|i| {
            let theta = 0.05 * i as f64;
            (p_up_bessel(theta, 0.2) - quadrature_average_oracle(theta, 0.2, 4096)).abs()
        })
        .fold(0.0, f64::max)
}

/// (measured - expected) / standard error for the background variance at
/// decay `gamma_tau`.
pub fn background_variance_z(gamma_tau: f64, trials: usize, rng: RngSpec) -> f64 {
    let cfg =
        operating_point(&ExperimentConfig::default(), 0.0, gamma_tau).expect("positive decay");
    let fr: Vec<f64> = simulate_trials(&cfg, rng, trials, Readout::Binomial)
        .iter()
        .map(|t| t.frac_background)
        .collect();
    let v = sample_variance(&fr);
    (v.variance - projection_variance(p_up_background(gamma_tau), cfg.trap.n_ions)) / v.std_error
}

/// Same for the phase-spread variance with projection noise switched off.
pub fn phase_variance_z(theta_max: f64, gamma_tau: f64, trials: usize, rng: RngSpec) -> f64 {
    let cfg = operating_point(&ExperimentConfig::default(), theta_max, gamma_tau)
        .expect("positive decay");
    let fr: Vec<f64> = simulate_trials(&cfg, rng, trials, Readout::AnalyticProbability)
        .iter()
        .map(|t| t.frac_signal)
        .collect();
    let v = sample_variance(&fr);
    (v.variance - delta_phase_variance(theta_max, gamma_tau)) / v.std_error
}

pub fn run_selftest() -> Vec<Check> {
    let mut out = Vec::new();

    for m in [2, 8] {
        let err = lineshape_max_error(m);
        out.push(check(
            if m == 2 {
                "lineshape closed form m=2"
            } else {
                "lineshape closed form m=8"
            },
            err < 1e-9,
            format!("max error {err:.3e} of peak"),
        ));
    }

    let err = quadrature_max_error();
    out.push(check(
        "bessel phase average",
        err < 1e-10,
        format!("max error {err:.3e}"),
    ));

    let worst_slope = (1..=239)
        .map(|i| {
            let theta = 0.01 * i as f64;
            let s = theta * theta;
            let h = 1e-5 * s;
            let fd = (contrast_loss((s + h).sqrt()) - contrast_loss((s - h).sqrt())) / (2.0 * h);
            (fd / contrast_loss_slope(theta) - 1.0).abs()
        })
        .fold(0.0, f64::max);
    out.push(check(
        "contrast slope",
        worst_slope < 1e-6,
        format!("max rel error {worst_slope:.3e}"),
    ));

    let b = noise_budget(1.41, 0.35, 75, 1.0);
    let j0 = bessel_j0(1.41);
    let direct = (-0.7f64).exp() / 8.0 * (1.0 + bessel_j0(2.82) - 2.0 * j0 * j0);
    out.push(check(
        "noise budget",
        b.var_total_diff == b.var_proj_bck + b.var_proj_sig + b.var_delta
            && (b.var_delta - direct).abs() < 1e-15,
        format!("total {:.6e}", b.var_total_diff),
    ));

    let p = LimitParams::from_config(&ExperimentConfig::default());
    let quad = LimitParams {
        n_ions: 4 * p.n_ions,
        ..p
    };
    let ratio = snr_incoherent_limiting(1e-10, &quad) / snr_incoherent_limiting(1e-10, &p);
    out.push(check(
        "limiting snr scaling",
        (ratio - 2.0).abs() < 1e-12,
        format!("4N ratio {ratio}"),
    ));

    let cfg = ExperimentConfig::default();
    let xi = cfg.odf.xi_decay;
    let inc = optimize_u_tau(&cfg, Objective::IncoherentSmallZc, 1e-9).map(|r| r.argmax_u_tau * xi);
    let coh = optimize_u_tau(&cfg, Objective::Coherent, 1e-9).map(|r| r.argmax_u_tau * xi);
    match (inc, coh) {
        (Ok(a), Ok(b)) => out.push(check(
            "optimal dose",
            (a / 1.9603 - 1.0).abs() < 1e-3 && (b - 1.0).abs() < 1e-3,
            format!("incoherent {a:.5}, coherent {b:.5}"),
        )),
        (a, b) => out.push(check("optimal dose", false, format!("{a:?} {b:?}"))),
    }

    let cfg = ExperimentConfig::default().with_z_c(0.5e-9);
    let exact = optimize_u_tau(&cfg, Objective::IncoherentExact, 1e-8);
    out.push(check(
        "exact optimum invertible",
        exact
            .as_ref()
            .map(|r| cfg.odf.dwf * cfg.odf.delta_k * cfg.drive.z_c * r.argmax_u_tau < J0_FIRST_ZERO)
            .unwrap_or(false),
        format!("{:?}", exact.map(|r| r.argmax_u_tau * xi)),
    ));

    let rng = RngSpec::new(0x5e1f_7e57, 0);
    let zs: Vec<f64> = [0.1, 0.5, 1.0, 2.0]
        .iter()
        .enumerate()
        .map(|(i, &gt)| background_variance_z(gt, 20_000, rng.with_stream(i as u64)))
        .collect();
    out.push(check(
        "background variance",
        zs.iter().all(|z| z.abs() < 5.0),
        format!("z-scores {zs:.2?}"),
    ));
    let zs: Vec<f64> = [0.3, 1.0, 2.0]
        .iter()
        .enumerate()
        .map(|(i, &th)| phase_variance_z(th, 0.3, 20_000, rng.with_stream(10 + i as u64)))
        .collect();
    out.push(check(
        "phase spread variance",
        zs.iter().all(|z| z.abs() < 5.0),
        format!("z-scores {zs:.2?}"),
    ));

    let mut cfg = ExperimentConfig::default().with_z_c(0.3e-9);
    cfg.odf.mu = Some(cfg.drive.omega_drive + 2.0 * PI * 100.0);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())
            .and_then(|pool| {
                pool.install(|| {
                    run_pairs(&cfg, rng.with_stream(99), 400, PairRunOptions::default())
                })
                .map_err(|e| e.to_string())
            })
    };
    let (one, three) = (run(1), run(3));
    out.push(check(
        "thread-count determinism",
        one.is_ok() && one == three,
        "1 vs 3 threads".to_string(),
    ));

    out
}
