//! Command-line front end.
//!
//! Tabular results are CSV with a header row and 12 significant digits;
//! structured results and run manifests are JSON. Without `--out` the main
//! output goes to stdout and the manifest to stderr as one line prefixed
//! with `manifest: `.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{load_config, ConfigDump, DerivedQuantities, ResolvedConfig};
use crate::error::{Error, Result};
use crate::montecarlo::{sweep_fig4, PairRunOptions, Readout, RngSpec};
use crate::noise::{snr_incoherent, snr_incoherent_limiting, LimitParams, Protocol};
use crate::optimize::{optimize_u_tau, sensitivity_summary, Objective, DEFAULT_MEASUREMENT_RATE};
use crate::physical::ExperimentConfig;
use crate::selftest::run_selftest;
use crate::sequence::{lineshape, mu_grid, LINESHAPE_POINTS};
use crate::signal::{
    estimate_theta2_incoherent, p_up_background, p_up_bessel, theta_max_from_config, EstimatorMode,
};

pub const DEFAULT_SEED: u64 = 20_160_301;
pub const SEED_ENV: &str = "IONLOCKIN_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

/// Amplitude grid of the sensing-limit figure, in metres.
pub const FIG4_GRID: [f64; 9] = [
    0.025e-9, 0.05e-9, 0.1e-9, 0.25e-9, 0.5e-9, 1e-9, 2e-9, 5e-9, 10e-9,
];

#[derive(Debug, Parser)]
#[command(
    name = "ionlockin",
    version,
    about = "Quantum lock-in amplitude sensing: signals, noise and optimal operating points"
)]
struct Cli {
    /// JSON configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output files. Without it results go to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed for Monte Carlo streams.
    #[arg(long, global = true, env = SEED_ENV, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Incoherent,
    Coherent,
}

impl From<Mode> for Protocol {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Incoherent => Protocol::Incoherent,
            Mode::Coherent => Protocol::Coherent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Figure {
    Fig2,
    Fig3,
    Fig4,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Signal versus ODF frequency around the drive frequency.
    Lineshape {
        /// Centre frequency (default: the drive frequency), e.g. 400kHz.
        #[arg(long, value_parser = parse_frequency)]
        center: Option<f64>,
        /// Half width of the scan, e.g. 1.5kHz.
        #[arg(long, value_parser = parse_frequency, default_value = "1.5kHz")]
        half_span: f64,
        #[arg(long, default_value_t = LINESHAPE_POINTS)]
        points: usize,
        /// Override the drive amplitude, e.g. 2nm.
        #[arg(long, value_parser = parse_length)]
        zc: Option<f64>,
    },
    /// Resonant signal and background versus ODF strength F0 / F0max.
    SignalScan {
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// Exact and limiting single-pair SNR versus amplitude.
    Snr {
        /// Comma separated amplitudes, e.g. 25pm,0.2nm,1nm.
        #[arg(long, value_parser = parse_length_list)]
        zc_list: Option<LengthList>,
    },
    /// Simulated pairs at each amplitude, each at its optimal dose.
    Montecarlo {
        #[arg(long, default_value_t = 3000)]
        pairs: usize,
        #[arg(long, value_parser = parse_length_list)]
        zc_list: Option<LengthList>,
        /// Record probabilities instead of binomial counts.
        #[arg(long)]
        analytic_n_infinite: bool,
        #[arg(long, default_value_t = 0)]
        stream: u64,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Optimal ODF dose (U / hbar) tau.
    Optimize {
        #[arg(long, value_enum, default_value = "incoherent")]
        mode: Mode,
        #[arg(long, value_parser = parse_length)]
        zc: Option<f64>,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Incoherent only: optimize the projection-noise-limited form.
        #[arg(long)]
        small_zc: bool,
        /// Also write the evaluated points as CSV to this path.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Long-averaging sensitivity at the optimal dose.
    Sensitivity {
        #[arg(long, value_enum, default_value = "incoherent")]
        mode: Mode,
        /// Measurement pairs per second.
        #[arg(long, default_value_t = DEFAULT_MEASUREMENT_RATE)]
        rate: f64,
    },
    /// Resolved configuration and derived quantities as JSON.
    DumpConfig,
    /// Run the built-in oracle checks.
    Selftest,
    /// Write the data files for one figure into --out (default: current directory).
    Figures {
        #[arg(long, value_enum)]
        figure: Figure,
        #[arg(long, default_value_t = 3000)]
        pairs: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LengthList(pub Vec<f64>);

/// Splits "485pm" into ("485", "pm").
fn split_number(s: &str) -> (&str, &str) {
    let s = s.trim();
    let bytes = s.as_bytes();
    let mut end = 0;
    while end < bytes.len() {
        let c = bytes[end] as char;
        let exponent = (c == 'e' || c == 'E')
            && bytes
                .get(end + 1)
                .is_some_and(|&d| (d as char).is_ascii_digit() || d == b'-' || d == b'+');
        if c.is_ascii_digit() || c == '.' || c == '+' || c == '-' || exponent {
            end += 1;
        } else {
            break;
        }
    }
    (&s[..end], s[end..].trim())
}

/// Parses `number` scaled by 10^`decimal_exponent` without an inexact
/// multiplication, so "0.2nm" is the double nearest 2e-10.
fn parse_scaled(
    number: &str,
    decimal_exponent: i32,
    original: &str,
) -> std::result::Result<f64, String> {
    let (mantissa, exp) = match number.find(['e', 'E']) {
        Some(i) => (
            &number[..i],
            number[i + 1..]
                .parse::<i32>()
                .map_err(|_| format!("cannot parse '{original}'"))?,
        ),
        None => (number, 0),
    };
    let v: f64 = format!("{mantissa}e{}", exp + decimal_exponent)
        .parse()
        .map_err(|_| format!("cannot parse '{original}'"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("cannot parse '{original}'"))
    }
}

/// Parses a length with optional unit suffix (m, mm, um, nm, pm); a bare
/// number is in metres.
pub fn parse_length(s: &str) -> std::result::Result<f64, String> {
    let (number, unit) = split_number(s);
    let exponent = match unit {
        "" | "m" => 0,
        "mm" => -3,
        "um" | "µm" => -6,
        "nm" => -9,
        "pm" => -12,
        _ => return Err(format!("unknown length unit '{unit}' in '{s}'")),
    };
    parse_scaled(number, exponent, s)
}

/// Parses a frequency in Hz (optional suffix Hz, kHz, MHz) and returns the
/// angular frequency in rad/s.
pub fn parse_frequency(s: &str) -> std::result::Result<f64, String> {
    let (number, unit) = split_number(s);
    let exponent = match unit {
        "" | "Hz" => 0,
        "kHz" => 3,
        "MHz" => 6,
        _ => return Err(format!("unknown frequency unit '{unit}' in '{s}'")),
    };
    Ok(2.0 * std::f64::consts::PI * parse_scaled(number, exponent, s)?)
}

fn parse_length_list(s: &str) -> std::result::Result<LengthList, String> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(parse_length)
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(LengthList)
}

/// CSV number formatting: 12 significant digits, scientific notation.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.11e}")
}

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            text: header.join(",") + "\n",
        }
    }

    pub fn row(&mut self, values: &[f64]) {
        let line: Vec<String> = values.iter().map(|&v| fmt_num(v)).collect();
        let _ = writeln!(self.text, "{}", line.join(","));
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub seed: u64,
    pub tool_version: &'static str,
    pub config_path: Option<PathBuf>,
    pub description: Option<String>,
    pub resolved_config: ExperimentConfig,
    pub warnings: Vec<String>,
    pub output_paths: Vec<PathBuf>,
    pub wall_time: f64,
}

fn log_grid(lo: f64, hi: f64, per_octave: u32) -> Vec<f64> {
    let steps = ((hi / lo).log2() * f64::from(per_octave)).floor() as i32;
    (0..=steps)
        .map(|k| lo * 2f64.powf(f64::from(k) / f64::from(per_octave)))
        .collect()
}

/// Default amplitude grid: 25 pm to 10 nm, four points per octave. Contains
/// 0.2 nm and the decade points of the sensing-limit figure where they fall on it.
pub fn default_zc_grid() -> Vec<f64> {
    log_grid(0.025e-9, 10e-9, 4)
}

struct Output {
    dir: Option<PathBuf>,
    written: Vec<PathBuf>,
}

impl Output {
    fn emit(&mut self, name: &str, content: &str, stdout: &mut dyn Write) -> Result<()> {
        match &self.dir {
            Some(dir) => {
                let path = dir.join(name);
                std::fs::write(&path, content)
                    .map_err(|e| Error::invalid("out", format!("{}: {e}", path.display())))?;
                self.written.push(path);
            }
            None => {
                stdout
                    .write_all(content.as_bytes())
                    .map_err(|e| Error::invalid("out", e.to_string()))?;
            }
        }
        Ok(())
    }
}

fn snr_rows(cfg: &ExperimentConfig, zcs: &[f64]) -> Result<Vec<(f64, f64, f64, f64)>> {
    let params = LimitParams::from_config(cfg);
    zcs.iter()
        .map(|&z| {
            let c = cfg.with_z_c(z);
            c.validate()?;
            let opt = optimize_u_tau(&c, Objective::IncoherentExact, 1e-8)?;
            Ok((
                z,
                opt.snr_at_optimum,
                snr_incoherent_limiting(z, &params),
                opt.argmax_u_tau,
            ))
        })
        .collect()
}

fn lineshape_csv(cfg: &ExperimentConfig, center: f64, half_span: f64, points: usize) -> String {
    let mut csv = Csv::new(&["mu_over_2pi_hz", "theta_max_mu", "p_up"]);
    for p in lineshape(cfg, &mu_grid(center, half_span, points)) {
        csv.row(&[p.mu / (2.0 * std::f64::consts::PI), p.theta_max_mu, p.p_up]);
    }
    csv.into_string()
}

fn signal_scan_csv(cfg: &ExperimentConfig, points: usize) -> String {
    let full = cfg.u_tau();
    let mut csv = Csv::new(&[
        "f0_fraction",
        "theta_max",
        "gamma_tau",
        "p_up",
        "p_background",
        "snr_zc2",
    ]);
    for i in 0..points {
        let f = if points > 1 {
            i as f64 / (points - 1) as f64
        } else {
            1.0
        };
        let c = cfg.with_u_tau(f * full);
        let th = theta_max_from_config(&c);
        let gt = c.gamma_tau();
        csv.row(&[
            f,
            th,
            gt,
            p_up_bessel(th, gt),
            p_up_background(gt),
            snr_incoherent(&c).snr,
        ]);
    }
    csv.into_string()
}

/// Noise-free recovery of Z_c^2 along the ODF-strength scan, with the
/// single-pair uncertainty. Beyond the first J0 zero the recovery is
/// undefined and written as NaN.
fn fig3_inset_csv(cfg: &ExperimentConfig, points: usize) -> String {
    let full = cfg.u_tau();
    let z2 = cfg.drive.z_c * cfg.drive.z_c;
    let mut csv = Csv::new(&[
        "f0_fraction",
        "zc2_true_m2",
        "zc2_recovered_m2",
        "zc2_err_m2",
    ]);
    for i in 1..points {
        let f = i as f64 / (points - 1) as f64;
        let c = cfg.with_u_tau(f * full);
        let th = theta_max_from_config(&c);
        let gt = c.gamma_tau();
        let scale = c.f0() / c.constants.hbar * c.tau();
        let recovered = estimate_theta2_incoherent(
            p_up_bessel(th, gt),
            p_up_background(gt),
            gt,
            EstimatorMode::Exact,
        )
        .map(|e| e.theta2 / (scale * scale))
        .unwrap_or(f64::NAN);
        let snr = snr_incoherent(&c).snr;
        let err = if recovered.is_nan() {
            f64::NAN
        } else {
            z2 / snr
        };
        csv.row(&[f, z2, recovered, err]);
    }
    csv.into_string()
}

fn montecarlo_csv(
    cfg: &ExperimentConfig,
    zcs: &[f64],
    rng: RngSpec,
    pairs: usize,
    readout: Readout,
) -> Result<String> {
    let opts = PairRunOptions {
        readout,
        ..PairRunOptions::default()
    };
    let rows = sweep_fig4(cfg, zcs, rng, pairs, opts)?;
    let mut csv = Csv::new(&["zc_m", "snr_empirical", "snr_err", "snr_analytic"]);
    for r in rows {
        csv.row(&[
            r.z_c,
            r.stats.snr_empirical,
            r.stats.snr_err,
            r.snr_analytic,
        ]);
    }
    Ok(csv.into_string())
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes") + "\n"
}

enum Failure {
    Usage(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn run(
    cli: Cli,
    args: &[String],
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> std::result::Result<(), Failure> {
    let started = Instant::now();
    let resolved = match &cli.config {
        Some(path) => load_config(path)?,
        None => ResolvedConfig {
            config: ExperimentConfig::default(),
            description: None,
            warnings: Vec::new(),
        },
    };
    for w in &resolved.warnings {
        let _ = writeln!(stderr, "warning: {w}");
    }
    let cfg = resolved.config;
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::Usage(format!("out: {}: {e}", dir.display())))?;
    }
    let mut out = Output {
        dir: cli.out.clone(),
        written: Vec::new(),
    };
    let rng = RngSpec::new(cli.seed, 0);
    let command_name;

    match cli.command {
        Command::Lineshape {
            center,
            half_span,
            points,
            zc,
        } => {
            command_name = "lineshape";
            let c = match zc {
                Some(z) => {
                    let c = cfg.with_z_c(z);
                    c.validate()?;
                    c
                }
                None => cfg,
            };
            let center = center.unwrap_or(c.drive.omega_drive);
            out.emit(
                "lineshape.csv",
                &lineshape_csv(&c, center, half_span, points),
                stdout,
            )?;
        }
        Command::SignalScan { points } => {
            command_name = "signal-scan";
            out.emit("signal_scan.csv", &signal_scan_csv(&cfg, points), stdout)?;
        }
        Command::Snr { zc_list } => {
            command_name = "snr";
            let zcs = zc_list.map_or_else(default_zc_grid, |l| l.0);
            let mut csv = Csv::new(&["zc_m", "snr_exact", "snr_limiting"]);
            for (z, exact, limiting, _) in snr_rows(&cfg, &zcs)? {
                csv.row(&[z, exact, limiting]);
            }
            out.emit("snr.csv", &csv.into_string(), stdout)?;
        }
        Command::Montecarlo {
            pairs,
            zc_list,
            analytic_n_infinite,
            stream,
            threads,
        } => {
            command_name = "montecarlo";
            let zcs = zc_list.map_or_else(|| FIG4_GRID.to_vec(), |l| l.0);
            let readout = if analytic_n_infinite {
                Readout::AnalyticProbability
            } else {
                Readout::Binomial
            };
            let rng = rng.with_stream(stream);
            let csv = match threads {
                Some(n) => {
                    let pool = rayon::ThreadPoolBuilder::new()
                        .num_threads(n)
                        .build()
                        .map_err(|e| Failure::Usage(format!("threads: {e}")))?;
                    pool.install(|| montecarlo_csv(&cfg, &zcs, rng, pairs, readout))?
                }
                None => montecarlo_csv(&cfg, &zcs, rng, pairs, readout)?,
            };
            out.emit("montecarlo.csv", &csv, stdout)?;
        }
        Command::Optimize {
            mode,
            zc,
            tol,
            small_zc,
            trace,
        } => {
            command_name = "optimize";
            let c = match zc {
                Some(z) => cfg.with_z_c(z),
                None => cfg,
            };
            c.validate()?;
            let objective = match (mode, small_zc) {
                (Mode::Coherent, _) => Objective::Coherent,
                (Mode::Incoherent, true) => Objective::IncoherentSmallZc,
                (Mode::Incoherent, false) => Objective::IncoherentExact,
            };
            let r = optimize_u_tau(&c, objective, tol)?;
            if let Some(path) = trace {
                let mut csv = Csv::new(&["u_tau", "snr"]);
                for &(u, s) in &r.scan_trace {
                    csv.row(&[u, s]);
                }
                std::fs::write(&path, csv.into_string())
                    .map_err(|e| Failure::Usage(format!("trace: {}: {e}", path.display())))?;
                out.written.push(path);
            }
            out.emit("optimize.json", &to_json(&r), stdout)?;
        }
        Command::Sensitivity { mode, rate } => {
            command_name = "sensitivity";
            let r = sensitivity_summary(&cfg, mode.into(), rate)?;
            out.emit("sensitivity.json", &to_json(&r), stdout)?;
        }
        Command::DumpConfig => {
            command_name = "dump-config";
            let dump = ConfigDump {
                config: cfg,
                derived: DerivedQuantities::of(&cfg),
            };
            out.emit("config.json", &to_json(&dump), stdout)?;
        }
        Command::Selftest => {
            command_name = "selftest";
            let checks = run_selftest();
            let mut text = String::new();
            for c in &checks {
                let _ = writeln!(
                    text,
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            out.emit("selftest.txt", &text, stdout)?;
            if checks.iter().any(|c| !c.passed) {
                write_manifest(
                    &cli.out,
                    command_name,
                    args,
                    cli.seed,
                    &cli.config,
                    &resolved,
                    out.written,
                    started,
                    stderr,
                )?;
                return Err(Failure::Internal("selftest failed".into()));
            }
        }
        Command::Figures { figure, pairs } => {
            command_name = "figures";
            if out.dir.is_none() {
                out.dir = Some(PathBuf::from("."));
            }
            match figure {
                Figure::Fig2 => {
                    for (z, tag) in [
                        (0.0, "0pm"),
                        (0.5e-9, "500pm"),
                        (1e-9, "1000pm"),
                        (2e-9, "2000pm"),
                        (5e-9, "5000pm"),
                    ] {
                        let c = cfg.with_z_c(z);
                        c.validate()?;
                        let csv = lineshape_csv(
                            &c,
                            c.drive.omega_drive,
                            crate::sequence::LINESHAPE_HALF_SPAN,
                            LINESHAPE_POINTS,
                        );
                        out.emit(&format!("fig2_zc_{tag}.csv"), &csv, stdout)?;
                    }
                }
                Figure::Fig3 => {
                    out.emit("fig3_signal.csv", &signal_scan_csv(&cfg, 101), stdout)?;
                    out.emit("fig3_inset.csv", &fig3_inset_csv(&cfg, 101), stdout)?;
                }
                Figure::Fig4 => {
                    let mut csv = Csv::new(&["zc_m", "snr_exact", "snr_limiting", "u_tau_opt"]);
                    for (z, exact, limiting, u) in snr_rows(&cfg, &log_grid(0.025e-9, 10e-9, 8))? {
                        csv.row(&[z, exact, limiting, u]);
                    }
                    out.emit("fig4_theory.csv", &csv.into_string(), stdout)?;
                    out.emit(
                        "fig4_mc.csv",
                        &montecarlo_csv(&cfg, &FIG4_GRID, rng, pairs, Readout::Binomial)?,
                        stdout,
                    )?;
                }
            }
        }
    }
    write_manifest(
        &cli.out,
        command_name,
        args,
        cli.seed,
        &cli.config,
        &resolved,
        out.written,
        started,
        stderr,
    )
}

#[allow(clippy::too_many_arguments)]
fn write_manifest(
    out_dir: &Option<PathBuf>,
    command: &str,
    args: &[String],
    seed: u64,
    config_path: &Option<PathBuf>,
    resolved: &ResolvedConfig,
    written: Vec<PathBuf>,
    started: Instant,
    stderr: &mut dyn Write,
) -> std::result::Result<(), Failure> {
    let manifest = RunManifest {
        command: command.to_string(),
        arguments: args.to_vec(),
        seed,
        tool_version: env!("CARGO_PKG_VERSION"),
        config_path: config_path.clone(),
        description: resolved.description.clone(),
        resolved_config: resolved.config,
        warnings: resolved.warnings.clone(),
        output_paths: written,
        wall_time: started.elapsed().as_secs_f64(),
    };
    match out_dir {
        Some(dir) => {
            let path = dir.join(format!("{command}.manifest.json"));
            std::fs::write(&path, to_json(&manifest))
                .map_err(|e| Failure::Usage(format!("out: {}: {e}", path.display())))?;
        }
        None => {
            let line = serde_json::to_string(&manifest).expect("plain data serializes");
            let _ = writeln!(stderr, "manifest: {line}");
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 success, 1 usage or validation error, 2 internal
/// failure.
pub fn dispatch<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let printable: Vec<String> = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{rendered}");
            } else {
                let _ = write!(stdout, "{rendered}");
            }
            return code;
        }
    };
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        run(cli, &printable, stdout, stderr)
    }));
    match outcome {
        Ok(Ok(())) => EXIT_OK,
        Ok(Err(Failure::Usage(msg))) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Ok(Err(Failure::Internal(msg))) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_INTERNAL
        }
        Err(_) => {
            let _ = writeln!(stderr, "error: internal failure");
            EXIT_INTERNAL
        }
    }
}

/// Reads a CSV written by this tool back into (header, rows).
pub fn read_csv(path: &Path) -> std::io::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_csv(&text))
}

pub fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines();
    let header = lines
        .next()
        .map(|h| h.split(',').map(str::to_string).collect())
        .unwrap_or_default();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(',')
                .map(|v| v.parse().unwrap_or(f64::NAN))
                .collect()
        })
        .collect();
    (header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_cli(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = dispatch(
            std::iter::once("ionlockin").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn units() {
        assert_eq!(parse_length("0.2nm").unwrap(), 0.2e-9);
        assert_eq!(parse_length("485pm").unwrap(), 485e-12);
        assert_eq!(parse_length("1e-9").unwrap(), 1e-9);
        assert_eq!(parse_length("2.5e-3 m").unwrap(), 2.5e-3);
        assert_eq!(parse_length("3um").unwrap(), 3e-6);
        assert!(parse_length("3 furlongs").is_err());
        assert!(parse_length("nm").is_err());
        let w = parse_frequency("400kHz").unwrap();
        assert!((w - 2.0 * std::f64::consts::PI * 4e5).abs() < 1e-6);
        assert!(parse_frequency("1.5e3Hz").is_ok());
        assert!(parse_frequency("1.5GHz").is_err());
        assert_eq!(
            parse_length_list("25pm, 0.2nm").unwrap().0,
            vec![25e-12, 0.2e-9]
        );
    }

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(0.2e-9), "2.00000000000e-10");
        assert_eq!(fmt_num(-1.0 / 3.0), "-3.33333333333e-1");
    }

    #[test]
    fn default_grid_contains_reference_points() {
        let g = default_zc_grid();
        assert!(g.iter().any(|&z| (z - 0.2e-9).abs() < 1e-24));
        assert!(g.iter().any(|&z| (z - 0.1e-9).abs() < 1e-24));
        assert!(*g.last().unwrap() <= 10e-9 && g[0] == 0.025e-9);
    }

    #[test]
    fn unknown_command_exits_1() {
        let (code, _, err) = run_cli(&["frobnicate"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("frobnicate"));
    }

    #[test]
    fn help_exits_0() {
        let (code, out, _) = run_cli(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("lineshape"));
    }

    #[test]
    fn missing_config_names_path() {
        let (code, _, err) = run_cli(&["dump-config", "--config", "/no/such/fig4.json"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("/no/such/fig4.json"), "{err}");
    }

    #[test]
    fn dump_config_has_derived_values() {
        let (code, out, err) = run_cli(&["dump-config"]);
        assert_eq!(code, EXIT_OK);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        let f0 = v["derived"]["f0"].as_f64().unwrap();
        assert!((f0 / 41.3e-24 - 1.0).abs() < 0.01);
        assert!(err.starts_with("manifest: "));
    }

    #[test]
    fn snr_csv_shape() {
        let (code, out, _) = run_cli(&["snr", "--zc-list", "25pm,0.2nm"]);
        assert_eq!(code, EXIT_OK);
        let (header, rows) = parse_csv(&out);
        assert_eq!(header, ["zc_m", "snr_exact", "snr_limiting"]);
        assert_eq!(rows.len(), 2);
        assert!(rows[1][2] > 0.95 && rows[1][2] < 0.98);
    }

    #[test]
    fn invalid_tolerance_is_usage_error() {
        let (code, _, err) = run_cli(&["optimize", "--zc", "1nm", "--tol", "0.5"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("tol"));
    }
}
