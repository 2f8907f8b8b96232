//! Effective frequency, quartic coupling, and localization susceptibility of the
//! infrared potential.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{origin_curvature, FlowOutcome, StopReason};
use crate::model::{ModelParams, PotentialGrid};

pub const DEFAULT_FIT_WINDOW: usize = 9;
/// Relative agreement required between the polynomial fit and the stencil curvature.
pub const FIT_STENCIL_TOLERANCE: f64 = 1e-4;
/// Below this origin curvature the fit–stencil comparison is not meaningful.
pub const NEAR_CRITICAL_CURVATURE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub omega_eff_sq: f64,
    pub lambda_eff: f64,
    /// `1/ω̄²_eff`, present only for valid observables.
    pub chi: Option<f64>,
    pub valid: bool,
    pub stop_reason: StopReason,
    pub stencil_curvature: f64,
    /// `|2b − V̄″(0)|/|V̄″(0)|`.
    pub fit_stencil_deviation: f64,
    pub near_critical: bool,
    pub warnings: Vec<String>,
}

impl Observables {
    pub fn omega_eff(&self) -> Option<f64> {
        (self.omega_eff_sq > 0.0).then(|| self.omega_eff_sq.sqrt())
    }

    pub fn require_valid(&self) -> Result<&Self> {
        if self.stop_reason != StopReason::Converged {
            return Err(Error::NotConverged(self.stop_reason.to_string()));
        }
        if !self.valid {
            return Err(Error::InvalidObservables(format!(
                "omega_eff_sq = {} is not positive",
                self.omega_eff_sq
            )));
        }
        Ok(self)
    }
}

/// Least-squares fit of `a + b·q̄² + c·q̄⁴` to the innermost `window` points of the
/// even-extended grid. Returns `(a, b, c)`.
pub fn even_quartic_fit(grid: &PotentialGrid, window: usize) -> Result<(f64, f64, f64)> {
    if window < 5 || window % 2 == 0 {
        return Err(Error::param(
            "fit_window",
            format!("must be odd and >= 5, got {window}"),
        ));
    }
    let half = window / 2;
    if half >= grid.len() {
        return Err(Error::param(
            "fit_window",
            format!("window {window} exceeds the grid"),
        ));
    }
    // work in u = q/q_edge so the normal equations stay well conditioned
    let h = grid.spacing();
    let edge = h * half as f64;
    let mut normal = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for i in -(half as isize)..=(half as isize) {
        let u = i as f64 / half as f64;
        let u2 = u * u;
        let basis = [1.0, u2, u2 * u2];
        let v = grid.extended(i);
        for r in 0..3 {
            rhs[r] += basis[r] * v;
            for c in 0..3 {
                normal[r][c] += basis[r] * basis[c];
            }
        }
    }
    let [a, b, c] = solve3(normal, rhs)
        .ok_or_else(|| Error::InvalidObservables("singular normal equations".into()))?;
    Ok((a, b / (edge * edge), c / edge.powi(4)))
}

fn solve3(mut m: [[f64; 3]; 3], mut y: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col] == 0.0 {
            return None;
        }
        m.swap(col, pivot);
        y.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            y[row] -= f * y[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (y[row] - tail) / m[row][row];
    }
    Some(x)
}

/// Observables of an arbitrary potential, treated as the end point of a flow that stopped
/// for `stop_reason`.
pub fn couplings_of(
    potential: &PotentialGrid,
    stop_reason: StopReason,
    fit_window: usize,
) -> Result<Observables> {
    let (_, b, c) = even_quartic_fit(potential, fit_window)?;
    let omega_eff_sq = 2.0 * b;
    let stencil = origin_curvature(potential);
    let deviation = if stencil != 0.0 {
        (omega_eff_sq - stencil).abs() / stencil.abs()
    } else {
        (omega_eff_sq - stencil).abs()
    };
    let near_critical = stencil.abs() <= NEAR_CRITICAL_CURVATURE;
    let valid = stop_reason == StopReason::Converged && omega_eff_sq > 0.0;
    let mut warnings = Vec::new();
    if near_critical {
        warnings.push(format!(
            "near-critical: origin curvature {stencil:e} is below {NEAR_CRITICAL_CURVATURE:e}"
        ));
    } else if deviation >= FIT_STENCIL_TOLERANCE {
        warnings.push(format!(
            "quartic fit and stencil curvature differ by {deviation:e} relative"
        ));
    }
    Ok(Observables {
        omega_eff_sq,
        lambda_eff: c,
        chi: valid.then(|| 1.0 / omega_eff_sq),
        valid,
        stop_reason,
        stencil_curvature: stencil,
        fit_stencil_deviation: deviation,
        near_critical,
        warnings,
    })
}

/// Reads `ω̄²_eff = 2b` and `λ̄_eff = c` off the infrared potential. Flows that did
/// not converge yield observables flagged invalid with no susceptibility.
pub fn effective_couplings(outcome: &FlowOutcome, fit_window: usize) -> Result<Observables> {
    couplings_of(&outcome.potential, outcome.stop_reason, fit_window)
}

/// Physical `χ = χ̄/(Mω₀²)` with `χ̄ = 1/ω̄²_eff`.
pub fn susceptibility(obs: &Observables, params: &ModelParams) -> Result<f64> {
    if !(obs.omega_eff_sq > 0.0) {
        return Err(Error::InvalidObservables(format!(
            "omega_eff_sq = {} must be positive",
            obs.omega_eff_sq
        )));
    }
    obs.require_valid()?;
    Ok(params.susceptibility_from_dimensionless(1.0 / obs.omega_eff_sq))
}
