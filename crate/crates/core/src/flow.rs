//! Dimensionless dissipative Wegner-Houghton flow of the local potential.
//!
//! In flow time `t = ln(Λ̄₀/Λ̄)` the potential obeys, pointwise on the grid,
//!
//! ```text
//! ∂V̄/∂t = (Λ̄/2π) · ln(1 + η̄/Λ̄ + V̄″/Λ̄²)
//! ```
//!
//! which is integrated by the method of lines: a 4th-order finite-difference
//! curvature and classical RK4 in `t`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DimensionlessParams, PotentialGrid};
use crate::quad;

pub const DEFAULT_T_MAX: f64 = 60.0;
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_SPINODAL_EPS: f64 = 1e-8;
pub const DEFAULT_CONVERGENCE_TOL: f64 = 1e-10;

/// Flow time over which the convergence test must hold uninterrupted.
const CONVERGENCE_SPAN: f64 = 1.0;
/// Flow-time spacing of the recorded curvature trace.
const TRACE_INTERVAL: f64 = 0.1;
/// RK4 reaches −2.785 on the negative real axis; substeps use half of that.
const RK4_STABLE_FRACTION: f64 = 0.5 * 2.785;
/// Spectral radius of the 4th-order second-difference stencil times h².
const STENCIL_RADIUS: f64 = 16.0 / 3.0;
pub const DEFAULT_MAX_DIFFUSIVITY: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSettings {
    pub t_max: f64,
    pub dt: f64,
    pub spinodal_eps: f64,
    pub convergence_tol: f64,
    /// Bound on the flow diffusivity `1/(2πΛ̄A)`; exceeding it marks the flow as singular.
    pub max_diffusivity: f64,
}

impl Default for FlowSettings {
    fn default() -> Self {
        FlowSettings {
            t_max: DEFAULT_T_MAX,
            dt: DEFAULT_DT,
            spinodal_eps: DEFAULT_SPINODAL_EPS,
            convergence_tol: DEFAULT_CONVERGENCE_TOL,
            max_diffusivity: DEFAULT_MAX_DIFFUSIVITY,
        }
    }
}

impl FlowSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(Error::param(
                "tmax",
                format!("must be > 0, got {}", self.t_max),
            ));
        }
        if !(self.dt > 0.0 && self.dt < 0.1) {
            return Err(Error::param(
                "dt",
                format!("must lie in (0, 0.1), got {}", self.dt),
            ));
        }
        if !(self.spinodal_eps.is_finite() && self.spinodal_eps > 0.0) {
            return Err(Error::param(
                "spinodal_eps",
                format!("must be > 0, got {}", self.spinodal_eps),
            ));
        }
        if !(self.convergence_tol.is_finite() && self.convergence_tol > 0.0) {
            return Err(Error::param(
                "convergence_tol",
                format!("must be > 0, got {}", self.convergence_tol),
            ));
        }
        if !(self.max_diffusivity.is_finite() && self.max_diffusivity > 0.0) {
            return Err(Error::param(
                "max_diffusivity",
                format!("must be > 0, got {}", self.max_diffusivity),
            ));
        }
        Ok(())
    }
}

/// Which test flagged the spinodal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinodalTrigger {
    /// `A ≤ spinodal_eps` at a stage evaluation.
    LogArgument,
    /// `1/(2πΛ̄A) > max_diffusivity`: the log argument is collapsing toward zero.
    Diffusivity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    ReachedTMax,
    Spinodal,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::ReachedTMax => "reached_t_max",
            StopReason::Spinodal => "spinodal",
        }
    }
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub scale: f64,
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowOutcome {
    /// Last finite potential; for a spinodal stop this is the state before the failing step.
    pub potential: PotentialGrid,
    pub final_scale: f64,
    pub final_time: f64,
    pub stop_reason: StopReason,
    pub min_log_argument: f64,
    /// Position and scale of the spinodal hit, if any.
    pub spinodal_position: Option<f64>,
    pub spinodal_trigger: Option<SpinodalTrigger>,
    pub curvature_trace: Vec<TracePoint>,
    /// Total RK4 substeps taken.
    pub substeps: usize,
}

impl FlowOutcome {
    pub fn origin_curvature(&self) -> f64 {
        origin_curvature(&self.potential)
    }
}

/// Argument of the flow logarithm, `1 + η̄/Λ̄ + V̄″/Λ̄²`, returned as `(A − 1, A)`.
#[inline]
fn log_argument(scale: f64, etabar: f64, curvature: f64) -> (f64, f64) {
    let shift = etabar / scale + curvature / (scale * scale);
    (shift, 1.0 + shift)
}

/// `∂V̄/∂t` at one grid point.
pub fn rhs(scale: f64, etabar: f64, curvature: f64, spinodal_eps: f64) -> Result<f64> {
    let (shift, argument) = log_argument(scale, etabar, curvature);
    if !(argument > spinodal_eps) {
        return Err(Error::Spinodal {
            position: None,
            scale,
            argument,
        });
    }
    Ok(scale / (2.0 * PI) * shift.ln_1p())
}

fn curvature_into(values: &[f64], h: f64, out: &mut [f64]) {
    let n = values.len();
    let inv = 1.0 / (12.0 * h * h);
    let v = |i: isize| values[i.unsigned_abs()];
    for (i, slot) in out.iter_mut().enumerate().take(n - 2) {
        let i = i as isize;
        *slot = (-v(i - 2) + 16.0 * v(i - 1) - 30.0 * v(i) + 16.0 * v(i + 1) - v(i + 2)) * inv;
    }
    let f = |k: usize| values[n - 1 - k];
    out[n - 2] = (10.0 * f(0) - 15.0 * f(1) - 4.0 * f(2) + 14.0 * f(3) - 6.0 * f(4) + f(5)) * inv;
    out[n - 1] = (45.0 * f(0) - 154.0 * f(1) + 214.0 * f(2) - 156.0 * f(3) + 61.0 * f(4)
        - 10.0 * f(5))
        * inv;
}

/// `V̄″` on the half grid: central 4th-order stencil with mirrored ghost points
/// at the origin and one-sided 4th-order stencils at `qmax`.
pub fn curvature_field(grid: &PotentialGrid) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    curvature_into(grid.values(), grid.spacing(), &mut out);
    out
}

pub fn origin_curvature(grid: &PotentialGrid) -> f64 {
    let v = grid.values();
    let h = grid.spacing();
    (-2.0 * v[2] + 32.0 * v[1] - 30.0 * v[0]) / (12.0 * h * h)
}

/// The flow equation at fixed dissipation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowEquation {
    pub etabar: f64,
    /// Multiplies the one-loop term; `1` is the physical flow, `0` switches it off.
    pub loop_weight: f64,
    pub spinodal_eps: f64,
}

impl FlowEquation {
    pub fn new(etabar: f64) -> Self {
        FlowEquation {
            etabar,
            loop_weight: 1.0,
            spinodal_eps: DEFAULT_SPINODAL_EPS,
        }
    }

    pub fn with_spinodal_eps(mut self, eps: f64) -> Self {
        self.spinodal_eps = eps;
        self
    }

    pub fn with_loop_weight(mut self, weight: f64) -> Self {
        self.loop_weight = weight;
        self
    }

    /// One RK4 step of size `dt` in flow time starting at `scale`.
    pub fn step(&self, state: &PotentialGrid, scale: f64, dt: f64) -> Result<PotentialGrid> {
        let mut work = Workspace::new(state.len());
        let mut values = state.values().to_vec();
        self.advance(&mut work, &mut values, state.spacing(), scale, dt)?;
        Ok(PotentialGrid::from_parts_unchecked(state.qmax(), values))
    }

    /// Integrates out the shell `[scale − width, scale]` at frozen curvature by quadrature.
    pub fn shell_step(
        &self,
        state: &PotentialGrid,
        scale: f64,
        width: f64,
    ) -> Result<PotentialGrid> {
        if !(width > 0.0 && width < scale) {
            return Err(Error::param(
                "width",
                format!("shell width must lie in (0, {scale}), got {width}"),
            ));
        }
        let lower = scale - width;
        let curvature = curvature_field(state);
        let positions = state.positions();
        let mut values = state.values().to_vec();
        for ((value, &c), &q) in values.iter_mut().zip(&curvature).zip(&positions) {
            // ω² + η̄ω + V̄″ increases with ω, so the lower edge bounds the argument
            let (_, argument) = log_argument(lower, self.etabar, c);
            if !(argument > self.spinodal_eps) {
                return Err(Error::Spinodal {
                    position: Some(q),
                    scale: lower,
                    argument,
                });
            }
            let eta = self.etabar;
            let integral = quad::integrate(
                |w| (eta / w + c / (w * w)).ln_1p(),
                lower,
                scale,
                1e-15,
                1e-13,
            );
            *value += self.loop_weight * integral / (2.0 * PI);
        }
        Ok(PotentialGrid::from_parts_unchecked(state.qmax(), values))
    }

    /// Evaluates `∂V̄/∂t` into `work.rate`; returns the smallest log argument.
    fn rates(&self, work: &mut Workspace, values: &[f64], h: f64, scale: f64) -> Result<f64> {
        curvature_into(values, h, &mut work.curvature);
        let mut min_argument = f64::INFINITY;
        let prefactor = self.loop_weight * scale / (2.0 * PI);
        for (i, (rate, &c)) in work.rate.iter_mut().zip(&work.curvature).enumerate() {
            let (shift, argument) = log_argument(scale, self.etabar, c);
            if !(argument > self.spinodal_eps) {
                return Err(Error::Spinodal {
                    position: Some(h * i as f64),
                    scale,
                    argument,
                });
            }
            min_argument = min_argument.min(argument);
            *rate = prefactor * shift.ln_1p();
        }
        Ok(min_argument)
    }

    /// In-place RK4 step; returns the smallest log argument seen across the stages.
    fn advance(
        &self,
        work: &mut Workspace,
        values: &mut [f64],
        h: f64,
        scale: f64,
        dt: f64,
    ) -> Result<f64> {
        let mid_scale = scale * (-0.5 * dt).exp();
        let end_scale = scale * (-dt).exp();
        let n = values.len();
        let mut min_argument = self.rates(work, values, h, scale)?;
        work.accum.copy_from_slice(&work.rate);
        for i in 0..n {
            work.stage[i] = values[i] + 0.5 * dt * work.rate[i];
        }
        let stage = std::mem::take(&mut work.stage);
        min_argument = min_argument.min(self.rates(work, &stage, h, mid_scale)?);
        work.stage = stage;
        for i in 0..n {
            work.accum[i] += 2.0 * work.rate[i];
            work.stage[i] = values[i] + 0.5 * dt * work.rate[i];
        }
        let stage = std::mem::take(&mut work.stage);
        min_argument = min_argument.min(self.rates(work, &stage, h, mid_scale)?);
        work.stage = stage;
        for i in 0..n {
            work.accum[i] += 2.0 * work.rate[i];
            work.stage[i] = values[i] + dt * work.rate[i];
        }
        let stage = std::mem::take(&mut work.stage);
        min_argument = min_argument.min(self.rates(work, &stage, h, end_scale)?);
        work.stage = stage;
        for i in 0..n {
            work.accum[i] += work.rate[i];
            values[i] += dt / 6.0 * work.accum[i];
        }
        Ok(min_argument)
    }

    /// Largest diffusivity `∂(∂V̄/∂t)/∂V̄″ = 1/(2πΛ̄A)` over the grid, at the start and
    /// end scale of a step, with the index where it occurs.
    fn peak_diffusivity(&self, curvature: &[f64], scale: f64, dt: f64) -> (f64, usize) {
        let end_scale = scale * (-dt).exp();
        let mut peak = (0.0, 0);
        for s in [scale, end_scale] {
            for (i, &c) in curvature.iter().enumerate() {
                let (_, argument) = log_argument(s, self.etabar, c);
                let d = self.loop_weight.abs() / (2.0 * PI * s * argument.max(self.spinodal_eps));
                if d > peak.0 {
                    peak = (d, i);
                }
            }
        }
        peak
    }
}

struct Workspace {
    curvature: Vec<f64>,
    rate: Vec<f64>,
    accum: Vec<f64>,
    stage: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            curvature: vec![0.0; n],
            rate: vec![0.0; n],
            accum: vec![0.0; n],
            stage: vec![0.0; n],
        }
    }
}

/// Integrates the flow from `Λ̄₀` toward the infrared.
///
/// Each nominal step of size `settings.dt` is split into as many equal RK4
/// substeps as the local diffusivity `1/(2πΛ̄A)` requires for stability.
/// Stops when the origin curvature has been stationary (relative rate below
/// `convergence_tol`) for a full unit of flow time, at `t_max`, or when the
/// log argument drops to `spinodal_eps`.
pub fn run_flow(
    params: &DimensionlessParams,
    settings: &FlowSettings,
    initial: &PotentialGrid,
) -> Result<FlowOutcome> {
    params.validate()?;
    settings.validate()?;
    if !initial.is_finite() {
        return Err(Error::InvalidGrid("initial potential is not finite".into()));
    }
    let equation = FlowEquation::new(params.etabar).with_spinodal_eps(settings.spinodal_eps);
    Ok(integrate(&equation, params.cutbar, settings, initial))
}

/// The stepping loop behind [`run_flow`], for an arbitrary flow equation.
pub fn integrate(
    equation: &FlowEquation,
    initial_scale: f64,
    settings: &FlowSettings,
    initial: &PotentialGrid,
) -> FlowOutcome {
    let h = initial.spacing();
    let n = initial.len();
    let mut work = Workspace::new(n);
    let mut values = initial.values().to_vec();
    let mut trial = values.clone();

    let nominal_steps = (settings.t_max / settings.dt).round().max(1.0) as usize;
    let trace_every = ((TRACE_INTERVAL / settings.dt).round() as usize).max(1);
    let quiet_needed = ((CONVERGENCE_SPAN / settings.dt).round() as usize).max(1);

    let mut curvature = origin_curvature(initial);
    let mut trace = vec![TracePoint {
        scale: initial_scale,
        curvature,
    }];
    let mut min_log_argument = f64::INFINITY;
    let mut quiet_steps = 0usize;
    let mut substeps_total = 0usize;
    let mut stop_reason = StopReason::ReachedTMax;
    let mut spinodal_position = None;
    let mut spinodal_trigger = None;
    let mut time = 0.0;

    'outer: for k in 0..nominal_steps {
        let scale = initial_scale * (-(k as f64) * settings.dt).exp();
        curvature_into(&values, h, &mut work.curvature);
        let (diffusivity, peak_at) = equation.peak_diffusivity(&work.curvature, scale, settings.dt);
        if diffusivity > settings.max_diffusivity {
            let (_, argument) = log_argument(scale, equation.etabar, work.curvature[peak_at]);
            min_log_argument = min_log_argument.min(argument);
            spinodal_position = Some(h * peak_at as f64);
            spinodal_trigger = Some(SpinodalTrigger::Diffusivity);
            stop_reason = StopReason::Spinodal;
            break;
        }
        let needed = settings.dt * diffusivity * STENCIL_RADIUS / (h * h * RK4_STABLE_FRACTION);
        let m = (needed.ceil() as usize).max(1);
        let sub_dt = settings.dt / m as f64;
        trial.copy_from_slice(&values);
        for j in 0..m {
            let sub_time = k as f64 * settings.dt + j as f64 * sub_dt;
            let sub_scale = initial_scale * (-sub_time).exp();
            match equation.advance(&mut work, &mut trial, h, sub_scale, sub_dt) {
                Ok(a) => min_log_argument = min_log_argument.min(a),
                Err(Error::Spinodal {
                    position, argument, ..
                }) => {
                    min_log_argument = min_log_argument.min(argument);
                    spinodal_position = position;
                    spinodal_trigger = Some(SpinodalTrigger::LogArgument);
                    stop_reason = StopReason::Spinodal;
                    substeps_total += j;
                    break 'outer;
                }
                Err(other) => unreachable!("advance only reports spinodal hits: {other}"),
            }
        }
        substeps_total += m;
        if trial.iter().any(|v| !v.is_finite()) {
            // treated like a spinodal hit; the argument bound is what failed in practice
            min_log_argument = min_log_argument.min(0.0);
            spinodal_trigger = Some(SpinodalTrigger::LogArgument);
            stop_reason = StopReason::Spinodal;
            break;
        }
        std::mem::swap(&mut values, &mut trial);
        let steps_done = k + 1;
        time = steps_done as f64 * settings.dt;

        let v = &values;
        let next = (-2.0 * v[2] + 32.0 * v[1] - 30.0 * v[0]) / (12.0 * h * h);
        let relative_rate =
            (next - curvature).abs() / (next.abs().max(f64::MIN_POSITIVE) * settings.dt);
        curvature = next;
        if steps_done % trace_every == 0 {
            trace.push(TracePoint {
                scale: initial_scale * (-time).exp(),
                curvature,
            });
        }
        if relative_rate < settings.convergence_tol {
            quiet_steps += 1;
            if quiet_steps >= quiet_needed {
                stop_reason = StopReason::Converged;
                break;
            }
        } else {
            quiet_steps = 0;
        }
    }

    let final_scale = initial_scale * (-time).exp();
    if trace.last().map(|p| p.scale) != Some(final_scale) {
        trace.push(TracePoint {
            scale: final_scale,
            curvature,
        });
    }
    FlowOutcome {
        potential: PotentialGrid::from_parts_unchecked(initial.qmax(), values),
        final_scale,
        final_time: time,
        stop_reason,
        min_log_argument,
        spinodal_position,
        spinodal_trigger,
        curvature_trace: trace,
        substeps: substeps_total,
    }
}
