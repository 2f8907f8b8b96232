//! Command-line front end: `flow`, `oracle`, `compare`, `scan`, `fit`, `surface`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use crate::config::{OutputFormat, ResolvedConfig, RunConfig, OUT_DIR_ENV};
use crate::error::{Error, Result};
use crate::flow::{run_flow, FlowOutcome, SpinodalTrigger, StopReason};
use crate::io;
use crate::model::{bare_potential, PotentialGrid};
use crate::observables::{effective_couplings, Observables};
use crate::scan::{
    critical_surface, eta_sweep, instanton_baseline, power_law_fit, refined_scan, window_shift,
    FitResult, ScanRecord, ScanTable, SurfaceRow, SurfaceSettings, WINDOW_SHIFT_LIMIT,
};
use crate::spectral::{analyze, SpectralResult};

#[derive(Debug, Parser)]
#[command(
    name = "nprg-flow",
    version,
    about = "Dissipative double-well flow solver"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the flow at one (lambda0, eta) point.
    Flow(Common),
    /// Exact diagonalization at zero dissipation.
    Oracle(Common),
    /// Flow versus exact diagonalization at zero dissipation.
    Compare(Common),
    /// Dissipation sweep at fixed coupling, with a critical power-law fit.
    Scan {
        /// Explicit comma-separated eta grid instead of the refined sweep.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        etas: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Power-law fit of an existing scan CSV.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Critical dissipation and exponent across couplings.
    Surface {
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        lambdas: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML configuration file; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub eta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub cutoff: Option<f64>,
    #[arg(long)]
    pub grid_n: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub qmax: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub dt: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub tmax: Option<f64>,
    /// Maximum concurrent flow solves.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory (default: $NPRG_FLOW_OUT, else the current directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
}

impl Common {
    fn overlay(&self) -> RunConfig {
        let mut c = RunConfig::default();
        c.model.lambda0 = self.lambda0;
        c.model.eta = self.eta;
        c.model.cutoff = self.cutoff;
        c.grid.n = self.grid_n;
        c.grid.qmax = self.qmax;
        c.flow.dt = self.dt;
        c.flow.tmax = self.tmax;
        c.scan.jobs = self.jobs;
        c.output.dir = self.out.clone();
        c.output.format = self.format;
        c
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(&self, extra: &RunConfig) -> Result<ResolvedConfig> {
        let file = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let env_out = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
        file.overlay(extra)
            .overlay(&self.overlay())
            .resolve(env_out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowReport {
    pub lam: f64,
    pub etabar: f64,
    pub cutbar: f64,
    pub stop_reason: StopReason,
    pub final_scale: f64,
    pub final_time: f64,
    pub min_log_argument: f64,
    pub spinodal_position: Option<f64>,
    pub spinodal_trigger: Option<SpinodalTrigger>,
    pub substeps: usize,
    pub omega_eff_sq: f64,
    pub omega_eff: Option<f64>,
    pub lambda_eff: f64,
    pub chi: Option<f64>,
    /// Present when the unit scales were configured explicitly.
    pub chi_physical: Option<f64>,
    pub valid: bool,
    pub near_critical: bool,
    pub fit_stencil_deviation: f64,
    pub warnings: Vec<String>,
}

pub struct FlowRun {
    pub report: FlowReport,
    pub initial: PotentialGrid,
    pub outcome: FlowOutcome,
    pub observables: Observables,
}

pub fn flow_report(cfg: &ResolvedConfig) -> Result<FlowRun> {
    let params = cfg.dimensionless()?;
    let initial = bare_potential(params.lam, cfg.grid)?;
    let outcome = run_flow(&params, &cfg.flow, &initial)?;
    let obs = effective_couplings(&outcome, cfg.scan.fit_window)?;
    let mut warnings = obs.warnings.clone();
    warnings.extend(cfg.model.cutoff_warning());
    let report = FlowReport {
        lam: params.lam,
        etabar: params.etabar,
        cutbar: params.cutbar,
        stop_reason: outcome.stop_reason,
        final_scale: outcome.final_scale,
        final_time: outcome.final_time,
        min_log_argument: outcome.min_log_argument,
        spinodal_position: outcome.spinodal_position,
        spinodal_trigger: outcome.spinodal_trigger,
        substeps: outcome.substeps,
        omega_eff_sq: obs.omega_eff_sq,
        omega_eff: obs.omega_eff(),
        lambda_eff: obs.lambda_eff,
        chi: obs.chi,
        chi_physical: obs
            .chi
            .filter(|_| cfg.physical_units)
            .map(|c| cfg.model.susceptibility_from_dimensionless(c)),
        valid: obs.valid,
        near_critical: obs.near_critical,
        fit_stencil_deviation: obs.fit_stencil_deviation,
        warnings,
    };
    Ok(FlowRun {
        report,
        initial,
        outcome,
        observables: obs,
    })
}

fn require_zero_dissipation(cfg: &ResolvedConfig) -> Result<()> {
    if cfg.model.eta != 0.0 {
        return Err(Error::param(
            "eta",
            "exact diagonalization covers only the dissipationless case eta = 0",
        ));
    }
    Ok(())
}

pub fn oracle_report(cfg: &ResolvedConfig) -> Result<SpectralResult> {
    require_zero_dissipation(cfg)?;
    analyze(cfg.dimensionless()?.lam, &cfg.spectral)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub lam: f64,
    pub nprg_omega_eff: f64,
    pub oracle_gap: f64,
    /// `|ω̄_eff − ΔE|/ΔE`.
    pub relative_deviation: f64,
    pub nprg_chi: f64,
    pub oracle_chi: Option<f64>,
    pub chi_relative_deviation: Option<f64>,
    pub stop_reason: StopReason,
}

pub fn compare_report(cfg: &ResolvedConfig) -> Result<CompareReport> {
    require_zero_dissipation(cfg)?;
    let run = flow_report(cfg)?;
    run.observables.require_valid()?;
    let omega = run
        .report
        .omega_eff
        .expect("valid observables have positive curvature");
    let chi = run.report.chi.expect("valid observables carry chi");
    let oracle = oracle_report(cfg)?;
    Ok(CompareReport {
        lam: run.report.lam,
        nprg_omega_eff: omega,
        oracle_gap: oracle.gap,
        relative_deviation: (omega - oracle.gap).abs() / oracle.gap,
        nprg_chi: chi,
        oracle_chi: oracle.chi_exact,
        chi_relative_deviation: oracle.chi_exact.map(|x| (chi - x).abs() / x),
        stop_reason: run.report.stop_reason,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub lam: f64,
    pub baseline: f64,
    pub fit: Option<FitResult>,
    pub fit_error: Option<String>,
    pub window_shift: Option<f64>,
    pub unstable: bool,
}

pub fn fit_report(table: &ScanTable, cfg: &ResolvedConfig) -> FitReport {
    let (fit, fit_error) = match power_law_fit(table, &cfg.scan.window) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let window_shift = fit
        .as_ref()
        .and_then(|f| window_shift(table, &cfg.scan.window, f).ok());
    FitReport {
        lam: table.lam,
        baseline: instanton_baseline(table.lam),
        unstable: fit.is_some() && window_shift.map_or(true, |s| s >= WINDOW_SHIFT_LIMIT),
        fit,
        fit_error,
        window_shift,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub lam: f64,
    pub refined: bool,
    pub records: Vec<ScanRecord>,
    pub censored_bracket: Option<(f64, f64)>,
    pub fit: FitReport,
}

pub fn scan_report(cfg: &ResolvedConfig) -> Result<(ScanReport, ScanTable)> {
    let lam = cfg.dimensionless()?.lam;
    let sweep = cfg.sweep()?;
    let table = match &cfg.scan.etas {
        Some(etas) => eta_sweep(lam, etas, &sweep)?,
        None => refined_scan(lam, &cfg.scan.refine, &sweep)?,
    };
    let report = ScanReport {
        lam,
        refined: cfg.scan.etas.is_none(),
        records: table.records.clone(),
        censored_bracket: table.censoring_bracket(),
        fit: fit_report(&table, cfg),
    };
    Ok((report, table))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfaceReport {
    pub rows: Vec<SurfaceRow>,
}

pub fn surface_report(cfg: &ResolvedConfig) -> Result<SurfaceReport> {
    let settings = SurfaceSettings {
        sweep: cfg.sweep()?,
        refine: cfg.scan.refine,
        window: cfg.scan.window,
    };
    Ok(SurfaceReport {
        rows: critical_surface(&cfg.scan.lambdas, &settings)?,
    })
}

/// Files written by one command, in write order.
#[derive(Debug, Clone, Default)]
pub struct Written {
    pub document: Value,
    pub paths: Vec<PathBuf>,
}

struct Emitter<'a> {
    command: &'static str,
    cfg: &'a ResolvedConfig,
    written: Written,
}

impl Emitter<'_> {
    fn table(&mut self, name: &str, bytes: Result<Vec<u8>>) -> Result<()> {
        if self.cfg.output.format == OutputFormat::Csv {
            let path = self.cfg.output.dir.join(name);
            io::write_atomic(&path, &bytes?)?;
            self.written.paths.push(path);
        }
        Ok(())
    }

    fn finish(mut self, result: impl Serialize) -> Result<Written> {
        let doc = io::result_document(self.command, self.cfg, result)?;
        let dir: &Path = &self.cfg.output.dir;
        let path = dir.join(format!("{}.json", self.command));
        io::write_json(&path, &doc)?;
        let meta = dir.join(format!("{}.meta.json", self.command));
        io::write_json(&meta, &io::metadata_document(self.command, self.cfg))?;
        self.written.paths.insert(0, path);
        self.written.paths.push(meta);
        self.written.document = doc;
        Ok(self.written)
    }
}

pub fn run(cli: &Cli) -> Result<Written> {
    let (command, common, extra): (&'static str, &Common, RunConfig) = match &cli.command {
        Command::Flow(c) => ("flow", c, RunConfig::default()),
        Command::Oracle(c) => ("oracle", c, RunConfig::default()),
        Command::Compare(c) => ("compare", c, RunConfig::default()),
        Command::Scan { etas, common } => {
            let mut extra = RunConfig::default();
            extra.scan.etas = etas.clone();
            ("scan", common, extra)
        }
        Command::Fit { common, .. } => ("fit", common, RunConfig::default()),
        Command::Surface { lambdas, common } => {
            let mut extra = RunConfig::default();
            extra.scan.lambdas = lambdas.clone();
            ("surface", common, extra)
        }
    };
    let cfg = common.resolve(&extra)?;
    let mut out = Emitter {
        command,
        cfg: &cfg,
        written: Written::default(),
    };
    match &cli.command {
        Command::Flow(_) => {
            let run = flow_report(&cfg)?;
            out.table(
                "flow_potential.csv",
                io::potential_csv(&run.initial, &run.outcome),
            )?;
            out.table("flow_trace.csv", io::trace_csv(&run.outcome))?;
            out.finish(&run.report)
        }
        Command::Oracle(_) => {
            let report = oracle_report(&cfg)?;
            out.finish(&report)
        }
        Command::Compare(_) => {
            let report = compare_report(&cfg)?;
            out.finish(&report)
        }
        Command::Scan { .. } => {
            let (report, table) = scan_report(&cfg)?;
            let units = cfg.physical_units.then_some(&cfg.model);
            out.table("scan.csv", io::scan_csv(&table, units))?;
            out.finish(&report)
        }
        Command::Fit { input, .. } => {
            let text = std::fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
            let lam = cfg.dimensionless()?.lam;
            let table = io::read_scan_csv(&text, &input.display().to_string(), lam)?;
            let report = fit_report(&table, &cfg);
            out.finish(&report)
        }
        Command::Surface { .. } => {
            let report = surface_report(&cfg)?;
            out.table("surface.csv", io::surface_csv(&report.rows))?;
            out.finish(&report)
        }
    }
}

/// Exit status for an error: 2 for bad input, 1 for runtime failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidParameter { .. } | Error::InvalidGrid(_) | Error::Parse { .. } => 2,
        _ => 1,
    }
}
