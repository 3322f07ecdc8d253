//! Trial-by-trial simulation of paired signal/background measurements.
//!
//! Every trial draws from its own ChaCha8 stream keyed by `(seed,
//! stream_id)` and selected by the trial index, so a run gives the same
//! numbers whatever the thread count. Trials are generated in parallel,
//! collected in index order and reduced sequentially.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::snr_incoherent_at;
use crate::optimize::{optimize_u_tau, Objective};
use crate::physical::{DeltaPolicy, ExperimentConfig};
use crate::sequence::theta_of_mu_oracle;
use crate::signal::{
    contrast_loss_slope, estimate_theta2_incoherent, theta_max_from_config, EstimatorMode,
};

/// Operating points with theta_max below this use the x8 small-angle
/// estimator; above it the contrast loss is inverted exactly.
pub const SMALL_ANGLE_THRESHOLD: f64 = 0.5;

pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 400;

// xored into stream_id for the bootstrap draws
const BOOTSTRAP_STREAM_TAG: u64 = 0xb007_57a9_0000_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngSpec {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn with_stream(self, stream_id: u64) -> Self {
        Self { stream_id, ..self }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for one trial: key from (seed, stream_id), ChaCha stream
/// number from the trial index.
pub fn trial_rng(spec: RngSpec, trial_index: u64) -> ChaCha8Rng {
    let mut stream = spec.stream_id;
    let mut state = spec.seed ^ splitmix64(&mut stream);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(trial_index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// k ~ Binomial(N, p) spin-up ions per measurement.
    Binomial,
    /// Record p itself (the N -> infinity limit), leaving only the drive
    /// phase spread.
    AnalyticProbability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub delta: f64,
    pub theta: f64,
    pub k_up_signal: u32,
    pub k_up_background: u32,
    /// Measured spin-up fraction: k / N, or p in analytic mode.
    pub frac_signal: f64,
    pub frac_background: f64,
}

impl TrialOutcome {
    pub fn difference(&self) -> f64 {
        self.frac_signal - self.frac_background
    }
}

fn draw_fraction<R: Rng>(rng: &mut R, n: u32, p: f64, readout: Readout) -> (u32, f64) {
    match readout {
        Readout::Binomial => {
            let k = Binomial::new(u64::from(n), p.clamp(0.0, 1.0))
                .expect("probability clamped to [0, 1]")
                .sample(rng) as u32;
            (k, f64::from(k) / f64::from(n))
        }
        Readout::AnalyticProbability => (0, p),
    }
}

/// One signal measurement and one background measurement.
pub fn simulate_pair(
    cfg: &ExperimentConfig,
    rng: RngSpec,
    trial_index: u64,
    readout: Readout,
) -> TrialOutcome {
    let mut r = trial_rng(rng, trial_index);
    let delta = match cfg.drive.delta_policy {
        DeltaPolicy::RandomUniform => r.gen_range(0.0..2.0 * PI),
        DeltaPolicy::Fixed(d) => d,
    };
    let mu = cfg.mu();
    let theta = if mu == cfg.drive.omega_drive {
        theta_max_from_config(cfg) * delta.cos()
    } else {
        theta_of_mu_oracle(cfg, mu, delta)
    };
    let decay = (-cfg.gamma_tau()).exp();
    let p_sig = 0.5 * (1.0 - decay * theta.cos());
    let p_bck = 0.5 * (1.0 - decay);
    let n = cfg.trap.n_ions;
    let (k_up_signal, frac_signal) = draw_fraction(&mut r, n, p_sig, readout);
    let (k_up_background, frac_background) = draw_fraction(&mut r, n, p_bck, readout);
    TrialOutcome {
        delta,
        theta,
        k_up_signal,
        k_up_background,
        frac_signal,
        frac_background,
    }
}

/// Trials `0..n` in index order.
pub fn simulate_trials(
    cfg: &ExperimentConfig,
    rng: RngSpec,
    n: usize,
    readout: Readout,
) -> Vec<TrialOutcome> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| simulate_pair(cfg, rng, i, readout))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairStatistics {
    pub n_pairs: usize,
    pub mean_signal: f64,
    pub mean_background: f64,
    pub mean_diff: f64,
    pub std_diff: f64,
    /// Single-pair SNR for Z_c^2 estimated from the data.
    pub snr_empirical: f64,
    /// Bootstrap standard error of `snr_empirical`.
    pub snr_err: f64,
    pub zc2_estimate: f64,
    /// Fraction of pairs whose own estimate would be clamped (P < P_bck).
    pub clamped_fraction: f64,
    pub estimator: EstimatorMode,
    pub theta_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairRunOptions {
    pub readout: Readout,
    pub bootstrap_resamples: usize,
}

impl Default for PairRunOptions {
    fn default() -> Self {
        Self {
            readout: Readout::Binomial,
            bootstrap_resamples: DEFAULT_BOOTSTRAP_RESAMPLES,
        }
    }
}

pub fn estimator_for(theta_max: f64) -> EstimatorMode {
    if theta_max < SMALL_ANGLE_THRESHOLD {
        EstimatorMode::SmallAngle
    } else {
        EstimatorMode::Exact
    }
}

/// Mean and unbiased sample variance, summed in slice order.
fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, ss / (n - 1.0))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let (mean, var) = mean_var(xs);
    (mean, var.sqrt())
}

struct Summary {
    mean_signal: f64,
    mean_background: f64,
    mean_diff: f64,
    std_diff: f64,
    theta2: f64,
    snr: f64,
}

fn summarize(
    sig: &[f64],
    bck: &[f64],
    gamma_tau: f64,
    estimator: EstimatorMode,
) -> Result<Summary> {
    let mean_signal = sig.iter().sum::<f64>() / sig.len() as f64;
    let mean_background = bck.iter().sum::<f64>() / bck.len() as f64;
    let diffs: Vec<f64> = sig.iter().zip(bck).map(|(s, b)| s - b).collect();
    let (mean_diff, std_diff) = mean_std(&diffs);
    let theta2 =
        estimate_theta2_incoherent(mean_signal, mean_background, gamma_tau, estimator)?.theta2;
    // Propagate the single-pair spread through G: the SNR of theta^2 is
    // theta^2 G'(theta^2) / (exp(Gamma tau) sigma). With G' = 1/8 this is
    // mean / std, which is also used for a non-positive mean so that the
    // value keeps its sign.
    let snr = if estimator == EstimatorMode::SmallAngle || mean_diff <= 0.0 {
        mean_diff / std_diff
    } else {
        theta2 * contrast_loss_slope(theta2.sqrt()) / (gamma_tau.exp() * std_diff)
    };
    Ok(Summary {
        mean_signal,
        mean_background,
        mean_diff,
        std_diff,
        theta2,
        snr,
    })
}

/// Simulates `n_pairs` pairs and estimates Z_c^2 and its single-pair SNR.
pub fn run_pairs(
    cfg: &ExperimentConfig,
    rng: RngSpec,
    n_pairs: usize,
    opts: PairRunOptions,
) -> Result<PairStatistics> {
    if n_pairs < 2 {
        return Err(Error::invalid(
            "n_pairs",
            format!("need at least 2 pairs, got {n_pairs}"),
        ));
    }
    let trials = simulate_trials(cfg, rng, n_pairs, opts.readout);
    let sig: Vec<f64> = trials.iter().map(|t| t.frac_signal).collect();
    let bck: Vec<f64> = trials.iter().map(|t| t.frac_background).collect();
    let theta_max = theta_max_from_config(cfg);
    let estimator = estimator_for(theta_max);
    let gamma_tau = cfg.gamma_tau();
    let s = summarize(&sig, &bck, gamma_tau, estimator)?;
    let clamped = trials.iter().filter(|t| t.difference() < 0.0).count();
    let snr_err = bootstrap_snr_error(
        &sig,
        &bck,
        gamma_tau,
        estimator,
        rng,
        opts.bootstrap_resamples,
    )?;
    let scale = cfg.f0() / cfg.constants.hbar * cfg.tau();
    Ok(PairStatistics {
        n_pairs,
        mean_signal: s.mean_signal,
        mean_background: s.mean_background,
        mean_diff: s.mean_diff,
        std_diff: s.std_diff,
        snr_empirical: s.snr,
        snr_err,
        zc2_estimate: if scale > 0.0 {
            s.theta2 / (scale * scale)
        } else {
            0.0
        },
        clamped_fraction: clamped as f64 / n_pairs as f64,
        estimator,
        theta_max,
    })
}

/// Nonparametric bootstrap of the SNR statistic over pairs.
fn bootstrap_snr_error(
    sig: &[f64],
    bck: &[f64],
    gamma_tau: f64,
    estimator: EstimatorMode,
    rng: RngSpec,
    resamples: usize,
) -> Result<f64> {
    if resamples < 2 {
        return Ok(f64::NAN);
    }
    let n = sig.len();
    let boot = rng.with_stream(rng.stream_id ^ BOOTSTRAP_STREAM_TAG);
    let stats: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .map(|b| {
            let mut r = trial_rng(boot, b);
            let (mut s, mut k) = (Vec::with_capacity(n), Vec::with_capacity(n));
            for _ in 0..n {
                let i = r.gen_range(0..n);
                s.push(sig[i]);
                k.push(bck[i]);
            }
            summarize(&s, &k, gamma_tau, estimator).map(|x| x.snr)
        })
        .collect::<Result<_>>()?;
    Ok(mean_std(&stats).1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fig4Row {
    pub z_c: f64,
    pub u_tau: f64,
    pub stats: PairStatistics,
    pub snr_analytic: f64,
}

/// Runs `n_pairs` pairs at each amplitude, each at its own optimal dose.
/// Amplitude `i` uses stream `rng.stream_id + i`.
pub fn sweep_fig4(
    cfg_base: &ExperimentConfig,
    zc_list: &[f64],
    rng: RngSpec,
    n_pairs: usize,
    opts: PairRunOptions,
) -> Result<Vec<Fig4Row>> {
    zc_list
        .iter()
        .enumerate()
        .map(|(i, &z_c)| {
            let cfg = cfg_base.with_z_c(z_c);
            cfg.validate()?;
            let u_tau = optimize_u_tau(&cfg, Objective::IncoherentExact, 1e-8)?.argmax_u_tau;
            let cfg = cfg.with_u_tau(u_tau);
            let stats = run_pairs(
                &cfg,
                rng.with_stream(rng.stream_id.wrapping_add(i as u64)),
                n_pairs,
                opts,
            )?;
            let divisor = match opts.readout {
                Readout::Binomial => cfg.readout.projection_variance_divisor,
                Readout::AnalyticProbability => f64::INFINITY,
            };
            let snr_analytic =
                snr_incoherent_at(stats.theta_max, cfg.gamma_tau(), cfg.trap.n_ions, divisor);
            Ok(Fig4Row {
                z_c,
                u_tau,
                stats,
                snr_analytic,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceSample {
    pub n: usize,
    pub variance: f64,
    /// Large-sample standard error sqrt((m4 - s^4) / n).
    pub std_error: f64,
}

pub fn sample_variance(xs: &[f64]) -> VarianceSample {
    let n = xs.len() as f64;
    let (mean, variance) = mean_var(xs);
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    VarianceSample {
        n: xs.len(),
        variance,
        std_error: ((m4 - variance * variance).max(0.0) / n).sqrt(),
    }
}

/// Copy of `base` on resonance with the dose and amplitude chosen so that
/// Gamma tau and theta_max take the requested values.
pub fn operating_point(
    base: &ExperimentConfig,
    theta_max: f64,
    gamma_tau: f64,
) -> Result<ExperimentConfig> {
    if base.odf.xi_decay.is_nan()
        || base.odf.xi_decay <= 0.0
        || gamma_tau.is_nan()
        || gamma_tau <= 0.0
    {
        return Err(Error::invalid(
            "gamma_tau",
            "operating point needs positive xi_decay and gamma_tau",
        ));
    }
    let mut cfg = base.with_u_tau(gamma_tau / base.odf.xi_decay);
    cfg.odf.mu = None;
    let scale = cfg.f0() / cfg.constants.hbar * cfg.tau();
    Ok(cfg.with_z_c(theta_max / scale))
}
