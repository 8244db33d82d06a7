//! Command surface: sweeps, ensemble runs, wave studies, verification and reports.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainGeometry, CoarseGrainingSpec};
use crate::continuum::{convergence_study, measure_dispersion};
use crate::decoherence::{predictability_report, string_preset, trace_measure};
use crate::ensemble::{
    compare_routes, residual_statistics, EnsembleConfig, InitialCondition, LangevinRoute,
};
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::noise::{asymptotic_estimates, noise_strength};
use crate::verify::{run_verification_suite, SuiteOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERIFICATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Domain(_) | Error::Contract(_) | Error::Config(_) => EXIT_USAGE,
        Error::Verification(_) => EXIT_VERIFICATION,
        Error::Numerical(_) => EXIT_NUMERICAL,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Natural,
    Si,
}

#[derive(Debug, Parser)]
#[command(
    name = "hchain",
    version,
    about = "Coarse-grained harmonic chain: noise, decoherence and verification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output CSV path (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub units: Option<Units>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Noise strength S² against d.
    Fig3 {
        /// Also emit the unit-factor and exact-average variants.
        #[arg(long)]
        all_variants: bool,
    },
    /// Decoherence trace 𝒦_I against d.
    Fig4,
    /// Monte Carlo residual statistics on a small chain.
    Ensemble,
    /// Lattice against continuum convergence and dispersion.
    Wave,
    /// Reduction identities and noise-form equivalence.
    Verify {
        /// Perturb one coefficient to exercise the failure path.
        #[arg(long)]
        corrupt: bool,
    },
    /// Order-of-magnitude predictability estimates.
    Report,
}

/// Every knob of every command; unused fields are ignored by the others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub groups: usize,
    pub modes: Vec<usize>,
    /// Explicit d grid; empty means log-spaced from 1 to `max_clump`.
    pub clumps: Vec<usize>,
    pub max_clump: usize,
    pub points_per_decade: usize,
    pub seed: u64,
    pub units: Units,
    pub ensemble: EnsembleSection,
    pub wave: WaveSection,
    pub report: ReportSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub groups: usize,
    pub group_size: usize,
    pub clump_size: usize,
    pub mode: usize,
    pub samples: usize,
    pub temperature: f64,
    pub cutoff_mode: usize,
    /// (ℓ, Re ā, Im ā, Re π̄, Im π̄) for excited low modes.
    pub means: Vec<[f64; 5]>,
    /// Lags in units π/ω.
    pub lags: Vec<f64>,
    pub langevin_step: f64,
    pub langevin_steps: usize,
    /// Standard error above this fraction of the expected value flags the run as undersampled.
    pub undersampled_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveSection {
    pub mode: usize,
    pub groups: Vec<usize>,
    pub clump_size: usize,
    pub time_samples: usize,
    pub dispersion_groups: usize,
    /// Ω_L·dt for the dispersion runs.
    pub dispersion_phase_step: f64,
    pub dispersion_periods: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub modes: Vec<usize>,
    pub clumps: Vec<usize>,
    pub excitation_scale: f64,
    /// Natural-unit chain used with `--units natural`.
    pub groups: usize,
    pub group_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            groups: 630,
            modes: vec![30, 65, 100],
            clumps: Vec::new(),
            max_clump: 10_000,
            points_per_decade: 8,
            seed: 2024,
            units: Units::Natural,
            ensemble: EnsembleSection::default(),
            wave: WaveSection::default(),
            report: ReportSection::default(),
        }
    }
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            groups: 16,
            group_size: 8,
            clump_size: 8,
            mode: 2,
            samples: 10_000,
            temperature: 1.0,
            cutoff_mode: 4,
            means: Vec::new(),
            lags: vec![0.0, 1.0, 2.0],
            langevin_step: 0.05,
            langevin_steps: 100,
            undersampled_fraction: 0.1,
        }
    }
}

impl Default for WaveSection {
    fn default() -> Self {
        Self {
            mode: 2,
            groups: vec![16, 32, 64, 128],
            clump_size: 8,
            time_samples: 33,
            dispersion_groups: 32,
            dispersion_phase_step: 0.005,
            dispersion_periods: 5.0,
        }
    }
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            modes: vec![10],
            clumps: vec![2, 10, 100, 1_000, 10_000, 1_000_000],
            excitation_scale: 1e-9,
            groups: 1000,
            group_size: 1_000_000,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn clump_grid(&self) -> Result<Vec<usize>> {
        if !self.clumps.is_empty() {
            if self.clumps.contains(&0) {
                return Err(Error::Config("d grid contains 0".into()));
            }
            return Ok(self.clumps.clone());
        }
        if self.max_clump == 0 || self.points_per_decade == 0 {
            return Err(Error::Config(
                "max_clump and points_per_decade must be positive".into(),
            ));
        }
        Ok(log_grid(self.max_clump, self.points_per_decade))
    }

    fn validate_sweep(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::Config("L grid is empty".into()));
        }
        if self.groups < 2 || !self.groups.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "ℳ = {} must be even and ≥ 2",
                self.groups
            )));
        }
        for l in &self.modes {
            if *l > self.groups / 2 {
                return Err(Error::Config(format!("L = {l} exceeds ℳ/2")));
            }
        }
        Ok(())
    }
}

/// Distinct rounded values of 10^(k/ppd) from 1 up to and including `max`.
pub fn log_grid(max: usize, per_decade: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    let top = (max as f64).log10();
    let steps = (top * per_decade as f64).round() as usize;
    for k in 0..=steps {
        let v = (10f64.powf(k as f64 / per_decade as f64).round() as usize).min(max);
        if out.last() != Some(&v) {
            out.push(v);
        }
    }
    if out.last() != Some(&max) {
        out.push(max);
    }
    out
}

/// Applies flag overrides to a loaded or default configuration.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match (cli.units, cli.command) {
        (Some(u), _) => cfg.units = u,
        (None, Command::Report) if cli.config.is_none() => cfg.units = Units::Si,
        _ => {}
    }
    if cfg.units == Units::Si && cli.command != Command::Report {
        return Err(Error::Config(
            "SI units are only available for the report command".into(),
        ));
    }
    if cli.workers == Some(0) {
        return Err(Error::Config("--workers must be positive".into()));
    }
    Ok(cfg)
}

fn header(out: &mut dyn Write, command: &str, units: &str, cfg: &RunConfig) -> io::Result<()> {
    writeln!(out, "# hchain {} {command}", env!("CARGO_PKG_VERSION"))?;
    writeln!(out, "# units: {units}")?;
    let echo = toml::to_string(cfg).unwrap_or_default();
    for line in echo.lines().filter(|l| !l.is_empty()) {
        writeln!(out, "# {line}")?;
    }
    Ok(())
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Config(format!("output: {e}"))
}

fn write_csv<T: Serialize>(out: &mut dyn Write, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// A CSV destination: a file, or stdout.
pub fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            File::create(p).map_err(|e| io_err(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig3Row {
    #[serde(rename = "L")]
    pub mode: usize,
    pub d: usize,
    #[serde(rename = "S2_units")]
    pub s2: f64,
    pub d2_asymptote: f64,
    pub large_d_asymptote: f64,
    #[serde(rename = "S2_unit_factor", skip_serializing_if = "Option::is_none")]
    pub s2_unit_factor: Option<f64>,
    #[serde(rename = "S2_exact_average", skip_serializing_if = "Option::is_none")]
    pub s2_exact_average: Option<f64>,
}

fn sweep_points(cfg: &RunConfig) -> Result<Vec<(usize, usize)>> {
    cfg.validate_sweep()?;
    let ds = cfg.clump_grid()?;
    Ok(cfg
        .modes
        .iter()
        .flat_map(|l| ds.iter().map(move |d| (*l, *d)))
        .collect())
}

pub fn fig3_rows(cfg: &RunConfig, all_variants: bool) -> Result<Vec<Fig3Row>> {
    let points = sweep_points(cfg)?;
    points
        .par_iter()
        .map(|&(l, d)| {
            let s = noise_strength(l, d, cfg.groups)?;
            let (a2, ad) = asymptotic_estimates(l, d, cfg.groups);
            Ok(Fig3Row {
                mode: l,
                d,
                s2: s.s2,
                d2_asymptote: a2,
                large_d_asymptote: ad,
                s2_unit_factor: all_variants.then_some(s.s2_unit_factor),
                s2_exact_average: all_variants.then_some(s.s2_exact_average),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig4Row {
    #[serde(rename = "L")]
    pub mode: usize,
    pub d: usize,
    #[serde(rename = "K_I_units")]
    pub kernel: f64,
    /// Empty where S² vanishes.
    #[serde(rename = "ratio_to_S2")]
    pub ratio: Option<f64>,
}

pub fn fig4_rows(cfg: &RunConfig) -> Result<Vec<Fig4Row>> {
    let points = sweep_points(cfg)?;
    points
        .par_iter()
        .map(|&(l, d)| {
            let k = trace_measure(l, d, cfg.groups)?;
            let s = noise_strength(l, d, cfg.groups)?.s2;
            Ok(Fig4Row {
                mode: l,
                d,
                kernel: k,
                ratio: (s > 0.0).then(|| k / s),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleRow {
    pub t: f64,
    pub observable: String,
    pub mean: f64,
    pub variance: Option<f64>,
    pub standard_error: f64,
    pub expected: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub rows: Vec<EnsembleRow>,
    pub failures: Vec<String>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
}

pub fn ensemble_config(cfg: &RunConfig) -> Result<EnsembleConfig> {
    let e = &cfg.ensemble;
    let geometry = ChainGeometry::natural(e.groups, e.group_size, e.clump_size)?;
    let means = e
        .means
        .iter()
        .map(|m| {
            if m[0] < 0.0 || m[0].fract() != 0.0 {
                return Err(Error::Config(format!(
                    "mean index {} is not a mode number",
                    m[0]
                )));
            }
            Ok((m[0] as usize, C64::new(m[1], m[2]), C64::new(m[3], m[4])))
        })
        .collect::<Result<Vec<_>>>()?;
    if e.lags.is_empty() {
        return Err(Error::Config("ensemble lag list is empty".into()));
    }
    let unit = std::f64::consts::PI / geometry.spring_frequency;
    let times: Vec<f64> = e.lags.iter().map(|l| l * unit).collect();
    Ok(EnsembleConfig {
        geometry,
        initial: InitialCondition {
            cutoff_mode: e.cutoff_mode,
            means,
            temperature: e.temperature,
        },
        mode: e.mode,
        samples: e.samples,
        seed: cfg.seed,
        times,
    })
}

pub fn run_ensemble_summary(cfg: &RunConfig) -> Result<EnsembleSummary> {
    let ec = ensemble_config(cfg)?;
    let checks = residual_statistics(&ec)?;
    let mut summary = EnsembleSummary {
        rows: Vec::new(),
        failures: Vec::new(),
        warnings: Vec::new(),
        notes: Vec::new(),
    };
    for r in &checks {
        summary.rows.push(EnsembleRow {
            t: r.time,
            observable: "residual".into(),
            mean: r.mean.mean().norm(),
            variance: Some(r.mean.variance),
            standard_error: r.mean.standard_error,
            expected: r.mean_force,
            z: r.mean_z,
        });
        summary.rows.push(EnsembleRow {
            t: r.time,
            observable: "residual_autocorrelation".into(),
            mean: r.autocorrelation,
            variance: Some(r.autocorrelation_se.powi(2) * ec.samples as f64),
            standard_error: r.autocorrelation_se,
            expected: r.expected,
            z: r.z,
        });
        if r.z.abs() > 3.0 {
            summary.failures.push(format!(
                "autocorrelation at t={:.4}: z = {:.2}",
                r.time, r.z
            ));
        }
        let excess = (r.mean.mean().norm() - r.mean_force).max(0.0);
        if excess > 3.0 * r.mean.standard_error {
            summary.warnings.push(format!(
                "mean residual at t={:.4} exceeds F_L by {:.2} SE",
                r.time,
                excess / r.mean.standard_error
            ));
        }
        let scale = r.expected.abs().max(checks[0].expected.abs() * 1e-3);
        if r.autocorrelation_se > cfg.ensemble.undersampled_fraction * scale {
            summary.warnings.push(format!(
                "undersampled at t={:.4}: SE/expected = {:.3}",
                r.time,
                r.autocorrelation_se / scale
            ));
        }
    }
    let e = &cfg.ensemble;
    if e.clump_size >= 2 && e.mode > 0 && 2 * e.mode < e.groups {
        for route in [LangevinRoute::Simple, LangevinRoute::Transformed] {
            let c = compare_routes(&ec, e.langevin_step, e.langevin_steps, route)?;
            summary.rows.push(EnsembleRow {
                t: c.time,
                observable: format!("langevin_{route:?}_variance").to_lowercase(),
                mean: c.langevin_variance,
                variance: None,
                standard_error: c.langevin_se,
                expected: c.exact_variance,
                z: c.z,
            });
            if c.z.abs() > 3.0 {
                summary.failures.push(format!(
                    "{route:?} Langevin variance at t={:.3}: z = {:.2}",
                    c.time, c.z
                ));
            }
        }
    } else {
        summary
            .notes
            .push("Langevin comparison skipped: needs d ≥ 2 and 0 < L < ℳ/2".into());
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaveRow {
    #[serde(rename = "M")]
    pub groups: usize,
    pub sup_error: f64,
    pub fitted_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionRow {
    #[serde(rename = "L")]
    pub mode: usize,
    pub measured: f64,
    pub lattice: f64,
    pub small_gradient: f64,
    pub relative_error: f64,
    pub scheme_order: f64,
}

pub fn wave_rows(cfg: &RunConfig) -> Result<(Vec<WaveRow>, Vec<DispersionRow>)> {
    let w = &cfg.wave;
    let study = convergence_study(w.mode, &w.groups, w.clump_size, w.time_samples)?;
    let rows = study
        .rows
        .iter()
        .map(|r| WaveRow {
            groups: r.groups,
            sup_error: r.sup_error,
            fitted_slope: study.fitted_slope,
        })
        .collect();
    let geometry = ChainGeometry::natural(w.dispersion_groups, w.clump_size, w.clump_size)?;
    let disp = (1..=w.dispersion_groups / 2)
        .into_par_iter()
        .map(|l| {
            let p = measure_dispersion(
                l,
                w.dispersion_groups,
                &geometry,
                w.clump_size,
                w.dispersion_phase_step,
                w.dispersion_periods,
            )?;
            Ok(DispersionRow {
                mode: l,
                measured: p.measured,
                lattice: p.lattice,
                small_gradient: p.small_gradient,
                relative_error: p.relative_error,
                scheme_order: p.scheme_order,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, disp))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    #[serde(rename = "L")]
    pub mode: usize,
    pub d: usize,
    pub kernel_trace_units: f64,
    pub classical_ratio: f64,
    pub t_dyn: f64,
    pub t_decoh: f64,
    pub ratio_decoh_dyn: f64,
    pub lambda_db: f64,
    pub f_noise: f64,
    pub f_dyn: f64,
    pub noise_force_ratio: f64,
    pub thermal_scale: f64,
    pub op_count: f64,
    pub order_of_magnitude: bool,
}

pub fn report_rows(cfg: &RunConfig) -> Result<Vec<ReportRow>> {
    let r = &cfg.report;
    let (geometry, spec) = match cfg.units {
        Units::Si => string_preset(),
        Units::Natural => (
            ChainGeometry::natural(r.groups, r.group_size, 1)?,
            CoarseGrainingSpec {
                range_width: 1.0,
                time_step: 0.1,
                cutoff_mode: 0,
                horizon: 1.0,
            },
        ),
    };
    let points: Vec<(usize, usize)> = r
        .modes
        .iter()
        .flat_map(|l| r.clumps.iter().map(move |d| (*l, *d)))
        .collect();
    if points.is_empty() {
        return Err(Error::Config("report grid is empty".into()));
    }
    points
        .par_iter()
        .map(|&(l, d)| {
            let p = predictability_report(&geometry, &spec, l, d, r.excitation_scale)?;
            Ok(ReportRow {
                mode: l,
                d,
                kernel_trace_units: p.kernel_trace,
                classical_ratio: p.classical_ratio,
                t_dyn: p.t_dyn,
                t_decoh: p.t_decoh,
                ratio_decoh_dyn: p.ratio_decoh_dyn,
                lambda_db: p.lambda_db,
                f_noise: p.f_noise,
                f_dyn: p.f_dyn,
                noise_force_ratio: p.noise_force_ratio,
                thermal_scale: p.thermal_scale,
                op_count: p.op_count,
                order_of_magnitude: p.order_of_magnitude,
            })
        })
        .collect()
}

/// Runs one command; human-readable progress goes to `log`, tables to `--out` or stdout.
pub fn run(cli: &Cli, log: &mut (dyn Write + Send)) -> Result<i32> {
    let cfg = resolve_config(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| dispatch(cli, &cfg, log))
}

fn dispatch(cli: &Cli, cfg: &RunConfig, log: &mut (dyn Write + Send)) -> Result<i32> {
    let out_path = cli.out.as_deref();
    match cli.command {
        Command::Fig3 { all_variants } => {
            let rows = fig3_rows(cfg, all_variants)?;
            let mut out = open_output(out_path)?;
            header(
                &mut *out,
                "fig3",
                "S2 in k_BT ω²/(Nμ); k_BT = μ = ω = 1",
                cfg,
            )
            .map_err(io_err)?;
            write_csv(&mut *out, &rows)?;
            Ok(EXIT_OK)
        }
        Command::Fig4 => {
            let rows = fig4_rows(cfg)?;
            let mut out = open_output(out_path)?;
            header(
                &mut *out,
                "fig4",
                "K_I in N k_BT μ ω²/(4ħ²); S2 in k_BT ω²/(Nμ)",
                cfg,
            )
            .map_err(io_err)?;
            write_csv(&mut *out, &rows)?;
            Ok(EXIT_OK)
        }
        Command::Ensemble => {
            let s = run_ensemble_summary(cfg)?;
            let mut out = open_output(out_path)?;
            header(&mut *out, "ensemble", "k_BT = μ = ω = 1; t in 1/ω", cfg).map_err(io_err)?;
            for w in &s.warnings {
                writeln!(out, "# warning: {w}").map_err(io_err)?;
            }
            write_csv(&mut *out, &s.rows)?;
            for n in &s.notes {
                writeln!(log, "note: {n}").map_err(io_err)?;
            }
            for w in &s.warnings {
                writeln!(log, "warning: {w}").map_err(io_err)?;
            }
            for f in &s.failures {
                writeln!(log, "FAIL {f}").map_err(io_err)?;
            }
            Ok(if s.failures.is_empty() {
                EXIT_OK
            } else {
                EXIT_VERIFICATION
            })
        }
        Command::Wave => {
            let (rows, disp) = wave_rows(cfg)?;
            let mut out = open_output(out_path)?;
            header(&mut *out, "wave", "k_BT = μ = ω = Δx = 1", cfg).map_err(io_err)?;
            write_csv(&mut *out, &rows)?;
            drop(out);
            let disp_path = out_path.map(|p| {
                p.with_file_name(format!(
                    "{}_dispersion.csv",
                    p.file_stem().and_then(|s| s.to_str()).unwrap_or("wave")
                ))
            });
            let mut out = open_output(disp_path.as_deref())?;
            header(&mut *out, "wave dispersion", "frequencies in ω", cfg).map_err(io_err)?;
            write_csv(&mut *out, &disp)?;
            Ok(EXIT_OK)
        }
        Command::Verify { corrupt } => {
            let opts = SuiteOptions {
                seed: cfg.seed,
                corrupt_coefficient: corrupt,
                ..SuiteOptions::default()
            };
            let suite = run_verification_suite(&opts)?;
            let mut out = open_output(out_path)?;
            writeln!(out, "# hchain {} verify", env!("CARGO_PKG_VERSION")).map_err(io_err)?;
            writeln!(out, "# seed = {}, corrupt = {corrupt}", cfg.seed).map_err(io_err)?;
            write_csv(&mut *out, &suite.report.entries)?;
            for c in &suite.convergence {
                let r: Vec<String> = c
                    .refinements
                    .iter()
                    .map(|r| format!("{}:{:.3e}", r.points, r.residual))
                    .collect();
                writeln!(
                    log,
                    "refinement L={} d={} [{}] orders {:?} stabilized={}",
                    c.mode,
                    c.clump_size,
                    r.join(" "),
                    c.observed_orders,
                    c.stabilized
                )
                .map_err(io_err)?;
            }
            if let Some(q) = &suite.quadratic_form {
                writeln!(
                    log,
                    "{} quadratic form Q={:.10e} Q'={:.10e} rel={:.2e} rank={}/{} cutoff={:.0e} inconclusive={}",
                    if q.pass { "PASS" } else { "FAIL" },
                    q.q_simple,
                    q.q_lagrangian,
                    q.relative_difference,
                    q.rank_simple,
                    q.rank_lagrangian,
                    q.cutoff,
                    q.inconclusive
                )
                .map_err(io_err)?;
            }
            for f in suite.report.failures() {
                writeln!(log, "{f}").map_err(io_err)?;
            }
            Ok(if suite.all_pass() {
                EXIT_OK
            } else {
                EXIT_VERIFICATION
            })
        }
        Command::Report => {
            let rows = report_rows(cfg)?;
            let mut out = open_output(out_path)?;
            let units = match cfg.units {
                Units::Si => "SI (s, m, N); order-of-magnitude estimates",
                Units::Natural => "k_BT = μ = ω = ħ = Δx = 1; order-of-magnitude estimates",
            };
            header(&mut *out, "report", units, cfg).map_err(io_err)?;
            write_csv(&mut *out, &rows)?;
            Ok(EXIT_OK)
        }
    }
}
