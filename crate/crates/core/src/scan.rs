//! Dissipation sweeps, the critical power-law fit `χ̄ = C·|η̄ − η̄_c|^(−γ)`, and the
//! coupling dependence of the fitted critical point.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{run_flow, FlowSettings, StopReason};
use crate::model::{bare_potential, DimensionlessParams, GridSpec, DEFAULT_CUTOFF};
use crate::observables::{effective_couplings, DEFAULT_FIT_WINDOW};

pub const DEFAULT_CHI_RATIO: f64 = 5.0;
pub const DEFAULT_BISECTIONS: usize = 8;
pub const MIN_FIT_POINTS: usize = 6;
/// Couplings below this are outside the regime where the flow is trusted.
pub const LOW_CONFIDENCE_LAMBDA: f64 = 0.2;
/// Relative shift of `η̄_c` on dropping the farthest point above which a fit is unstable.
pub const WINDOW_SHIFT_LIMIT: f64 = 0.01;
/// Coarse sweeps give up after this many points without a censored record.
const MAX_COARSE_POINTS: usize = 64;

/// Couplings where the wells are too shallow for the truncated flow to be trusted.
pub fn is_low_confidence(lam: f64) -> bool {
    lam < LOW_CONFIDENCE_LAMBDA
}

/// Dilute instanton gas estimate `η̄_c = 2πλ̄`.
pub fn instanton_baseline(lam: f64) -> f64 {
    2.0 * PI * lam
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub flow: FlowSettings,
    pub grid: GridSpec,
    pub cutbar: f64,
    pub fit_window: usize,
    /// Concurrent flow solves; `0` uses the global pool.
    pub jobs: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            flow: FlowSettings::default(),
            grid: GridSpec::default(),
            cutbar: DEFAULT_CUTOFF,
            fit_window: DEFAULT_FIT_WINDOW,
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub eta: f64,
    /// Origin curvature of the final potential (also for censored runs).
    pub omega_eff_sq: f64,
    pub chi: Option<f64>,
    pub stop_reason: StopReason,
}

impl ScanRecord {
    pub fn is_converged(&self) -> bool {
        self.chi.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTable {
    pub lam: f64,
    pub records: Vec<ScanRecord>,
    pub provenance: SweepSettings,
}

impl ScanTable {
    pub fn new(lam: f64, mut records: Vec<ScanRecord>, provenance: SweepSettings) -> Result<Self> {
        records.sort_by(|a, b| a.eta.total_cmp(&b.eta));
        if records.windows(2).any(|w| w[0].eta == w[1].eta) {
            return Err(Error::param(
                "eta",
                "scan contains duplicate dissipation values",
            ));
        }
        Ok(ScanTable {
            lam,
            records,
            provenance,
        })
    }

    pub fn converged(&self) -> impl Iterator<Item = &ScanRecord> {
        self.records.iter().filter(|r| r.is_converged())
    }

    fn merge(&mut self, extra: Vec<ScanRecord>) {
        self.records.extend(extra);
        self.records.sort_by(|a, b| a.eta.total_cmp(&b.eta));
        self.records.dedup_by(|a, b| a.eta == b.eta);
    }

    /// Last converged and first censored dissipation, when the scan crosses the boundary.
    pub fn censoring_bracket(&self) -> Option<(f64, f64)> {
        let first_censored = self.records.iter().position(|r| !r.is_converged())?;
        let below = self.records[..first_censored].last()?;
        Some((below.eta, self.records[first_censored].eta))
    }
}

fn solve_point(lam: f64, eta: f64, settings: &SweepSettings) -> Result<ScanRecord> {
    let params = DimensionlessParams::new(lam, eta, settings.cutbar)?;
    let initial = bare_potential(lam, settings.grid)?;
    let outcome = run_flow(&params, &settings.flow, &initial)?;
    let obs = effective_couplings(&outcome, settings.fit_window)?;
    Ok(ScanRecord {
        eta,
        omega_eff_sq: obs.omega_eff_sq,
        chi: obs.chi,
        stop_reason: outcome.stop_reason,
    })
}

fn solve_points(lam: f64, etas: &[f64], settings: &SweepSettings) -> Result<Vec<ScanRecord>> {
    let work = || {
        etas.par_iter()
            .map(|&eta| solve_point(lam, eta, settings))
            .collect::<Result<Vec<_>>>()
    };
    if settings.jobs == 0 {
        return work();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(settings.jobs)
        .build()
        .map_err(|e| Error::param("jobs", e.to_string()))?
        .install(work)
}

/// Flow plus observables for every `η̄` in `etas` (strictly increasing, non-negative).
/// Output order follows `etas` regardless of completion order.
pub fn eta_sweep(lam: f64, etas: &[f64], settings: &SweepSettings) -> Result<ScanTable> {
    if etas.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::param("eta", "sweep values must be finite and >= 0"));
    }
    if etas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param(
            "eta",
            "sweep values must be strictly increasing",
        ));
    }
    let records = solve_points(lam, etas, settings)?;
    ScanTable::new(lam, records, *settings)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinePolicy {
    /// Spacing of the coarse uniform grid; defaults to half the instanton estimate.
    pub coarse_step: Option<f64>,
    pub bisections: usize,
}

impl Default for RefinePolicy {
    fn default() -> Self {
        RefinePolicy {
            coarse_step: None,
            bisections: DEFAULT_BISECTIONS,
        }
    }
}

/// Coarse uniform sweep from `η̄ = 0` until the first censored point, followed by
/// repeated bisection of the last converged/censored gap.
pub fn refined_scan(
    lam: f64,
    policy: &RefinePolicy,
    settings: &SweepSettings,
) -> Result<ScanTable> {
    let step = policy
        .coarse_step
        .unwrap_or_else(|| 0.5 * instanton_baseline(lam));
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::param(
            "coarse_step",
            format!("must be > 0, got {step}"),
        ));
    }
    let batch = match settings.jobs {
        0 => rayon::current_num_threads(),
        j => j,
    }
    .max(1);
    let mut table = ScanTable::new(lam, Vec::new(), *settings)?;
    let mut next = 0usize;
    while table.censoring_bracket().is_none() {
        if next >= MAX_COARSE_POINTS {
            return Ok(table);
        }
        let etas: Vec<f64> = (next..(next + batch).min(MAX_COARSE_POINTS))
            .map(|k| k as f64 * step)
            .collect();
        next += etas.len();
        let records = solve_points(lam, &etas, settings)?;
        table.merge(records);
        if table.records.first().is_some_and(|r| !r.is_converged()) {
            // censored already at zero dissipation: nothing to refine
            return Ok(table);
        }
    }
    for _ in 0..policy.bisections {
        let (lo, hi) = table.censoring_bracket().expect("bracket exists");
        let mid = 0.5 * (lo + hi);
        let record = solve_point(lam, mid, settings)?;
        table.merge(vec![record]);
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPolicy {
    /// Keep records with `χ̄ ≥ ratio·χ̄(lowest η̄)`; `None` keeps every converged record.
    pub min_chi_ratio: Option<f64>,
    /// Upper end of the `η̄_c` search above the largest fitted `η̄`; defaults to the
    /// window's own `η̄` range.
    pub span: Option<f64>,
    pub min_points: usize,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        WindowPolicy {
            min_chi_ratio: Some(DEFAULT_CHI_RATIO),
            span: None,
            min_points: MIN_FIT_POINTS,
        }
    }
}

impl WindowPolicy {
    pub fn all_points() -> Self {
        WindowPolicy {
            min_chi_ratio: None,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub eta_min: f64,
    pub eta_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub eta_c: f64,
    pub gamma: f64,
    pub amplitude: f64,
    /// RMS residual of `ln χ̄` against the fitted line.
    pub residual: f64,
    pub window: FitWindow,
}

/// Converged `(η̄, χ̄)` pairs selected by the window policy.
pub fn fit_window_points(table: &ScanTable, policy: &WindowPolicy) -> Vec<(f64, f64)> {
    let converged: Vec<(f64, f64)> = table
        .converged()
        .map(|r| (r.eta, r.chi.expect("converged records carry chi")))
        .collect();
    let Some(&(_, reference)) = converged.first() else {
        return Vec::new();
    };
    converged
        .into_iter()
        .filter(|&(_, chi)| {
            policy
                .min_chi_ratio
                .map_or(true, |ratio| chi >= ratio * reference)
        })
        .collect()
}

/// Ordinary least squares of `y` on `x`; returns `(slope, intercept, rms residual)`.
fn linear_regression(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    (slope, intercept, (ss / n).sqrt())
}

struct Profile<'a> {
    etas: &'a [f64],
    log_chi: Vec<f64>,
    buffer: std::cell::RefCell<Vec<f64>>,
}

impl Profile<'_> {
    fn at(&self, eta_c: f64) -> (f64, f64, f64) {
        let mut x = self.buffer.borrow_mut();
        x.clear();
        x.extend(self.etas.iter().map(|e| (eta_c - e).ln()));
        linear_regression(&x, &self.log_chi)
    }

    fn residual(&self, eta_c: f64) -> f64 {
        self.at(eta_c).2
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const BRACKET_SAMPLES: usize = 96;
/// Smallest offset of `η̄_c` above the largest fitted `η̄`, relative to the span.
const MIN_OFFSET: f64 = 1e-9;

/// Profiled fit of `ln χ̄ = ln C − γ·ln(η̄_c − η̄)`.
///
/// The outer search runs over `η̄_c ∈ (η̄_max, η̄_max + span]`: a log-spaced sweep of
/// offsets brackets the best residual, then golden-section search refines it. For
/// each trial `η̄_c` the inner problem is a closed-form linear regression.
pub fn power_law_fit(table: &ScanTable, policy: &WindowPolicy) -> Result<FitResult> {
    let points = fit_window_points(table, policy);
    fit_points(&points, policy)
}

pub fn fit_points(points: &[(f64, f64)], policy: &WindowPolicy) -> Result<FitResult> {
    let needed = policy.min_points.max(3);
    if points.len() < needed {
        return Err(Error::InsufficientData(format!(
            "{} records in the fit window, need at least {needed}",
            points.len()
        )));
    }
    let etas: Vec<f64> = points.iter().map(|p| p.0).collect();
    let eta_min = etas.iter().copied().fold(f64::INFINITY, f64::min);
    let eta_max = etas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = policy.span.unwrap_or(eta_max - eta_min);
    if !(span.is_finite() && span > 0.0) {
        return Err(Error::DegenerateFit(format!(
            "search span {span} is not positive"
        )));
    }
    let profile = Profile {
        etas: &etas,
        log_chi: points.iter().map(|p| p.1.ln()).collect(),
        buffer: std::cell::RefCell::new(Vec::with_capacity(etas.len())),
    };

    // offsets u ∈ [MIN_OFFSET, 1] of η̄_c = η̄_max + u·span, log-spaced
    let offset = |k: usize| {
        let t = k as f64 / (BRACKET_SAMPLES - 1) as f64;
        MIN_OFFSET.powf(1.0 - t)
    };
    let residual_at = |u: f64| profile.residual(eta_max + u * span);
    let (best, _) = (0..BRACKET_SAMPLES)
        .map(|k| (k, residual_at(offset(k))))
        .fold(
            (0, f64::INFINITY),
            |acc, (k, r)| if r < acc.1 { (k, r) } else { acc },
        );
    if best == 0 || best == BRACKET_SAMPLES - 1 {
        return Err(Error::DegenerateFit(format!(
            "residual is minimal at the {} end of the eta_c search range",
            if best == 0 { "lower" } else { "upper" }
        )));
    }
    let (mut a, mut b) = (offset(best - 1), offset(best + 1));
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (residual_at(c), residual_at(d));
    for _ in 0..200 {
        if (b - a) <= 4.0 * f64::EPSILON * a.abs().max(b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = residual_at(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = residual_at(d);
        }
    }
    let u = 0.5 * (a + b);
    let eta_c = eta_max + u * span;
    let (slope, intercept, residual) = profile.at(eta_c);
    let gamma = -slope;
    if !(gamma > 0.0) || !residual.is_finite() {
        return Err(Error::DegenerateFit(format!(
            "fitted exponent {gamma} is not positive"
        )));
    }
    Ok(FitResult {
        eta_c,
        gamma,
        amplitude: intercept.exp(),
        residual,
        window: FitWindow {
            eta_min,
            eta_max,
            points: points.len(),
        },
    })
}

/// Relative change of `η̄_c` when the record farthest from the transition is dropped.
pub fn window_shift(table: &ScanTable, policy: &WindowPolicy, fit: &FitResult) -> Result<f64> {
    let points = fit_window_points(table, policy);
    let refit = fit_points(&points[1..], policy)?;
    Ok((refit.eta_c - fit.eta_c).abs() / fit.eta_c.abs())
}

/// `χ̄(η̄) = C·(η̄_c − η̄)^(−γ)` sampled at `etas`, as a table of converged records.
pub fn synthetic_table(amplitude: f64, eta_c: f64, gamma: f64, etas: &[f64]) -> Result<ScanTable> {
    let records = etas
        .iter()
        .map(|&eta| {
            let chi = amplitude * (eta_c - eta).powf(-gamma);
            ScanRecord {
                eta,
                omega_eff_sq: 1.0 / chi,
                chi: Some(chi),
                stop_reason: StopReason::Converged,
            }
        })
        .collect();
    ScanTable::new(1.0, records, SweepSettings::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSettings {
    pub sweep: SweepSettings,
    pub refine: RefinePolicy,
    pub window: WindowPolicy,
}

impl Default for SurfaceSettings {
    fn default() -> Self {
        SurfaceSettings {
            sweep: SweepSettings::default(),
            refine: RefinePolicy::default(),
            window: WindowPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub lam: f64,
    pub baseline: f64,
    pub fit: Option<FitResult>,
    /// Relative `η̄_c` shift when the farthest window point is dropped.
    pub window_shift: Option<f64>,
    pub unstable: bool,
    pub low_confidence: bool,
    pub censored_bracket: Option<(f64, f64)>,
    pub error: Option<String>,
    pub table: ScanTable,
}

/// Refined scan and power-law fit for each coupling.
pub fn critical_surface(lams: &[f64], settings: &SurfaceSettings) -> Result<Vec<SurfaceRow>> {
    lams.iter()
        .map(|&lam| {
            if !(lam.is_finite() && lam > 0.0) {
                return Err(Error::param("lambda0", format!("must be > 0, got {lam}")));
            }
            let table = refined_scan(lam, &settings.refine, &settings.sweep)?;
            let fit = power_law_fit(&table, &settings.window);
            let (fit, error) = match fit {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let window_shift = fit
                .as_ref()
                .and_then(|f| window_shift(&table, &settings.window, f).ok());
            Ok(SurfaceRow {
                lam,
                baseline: instanton_baseline(lam),
                unstable: window_shift.map_or(fit.is_some(), |s| s >= WINDOW_SHIFT_LIMIT),
                low_confidence: is_low_confidence(lam),
                censored_bracket: table.censoring_bracket(),
                fit,
                window_shift,
                error,
                table,
            })
        })
        .collect()
}
