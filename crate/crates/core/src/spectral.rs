//! Exact-diagonalization oracle for the undamped problem.
//!
//! The dimensionless Hamiltonian `−½ d²/dq̄² + V̄(q̄) + J·q̄` is discretized with the
//! three-point kinetic stencil on `[−L, L]` with hard walls. Eigenvalues come from
//! Sturm-sequence bisection; the ground state is polished by inverse iteration and
//! a Rayleigh quotient. Results on spacings `h` and `h/2` are Richardson-combined,
//! which cancels the `O(h²)` stencil error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::bare_potential_value;

pub const DEFAULT_HALF_WIDTH: f64 = 8.0;
pub const DEFAULT_POINTS: usize = 2048;
pub const DEFAULT_TILT: f64 = 1e-3;
pub const DEFAULT_EIGENCOUNT: usize = 4;
pub const MIN_POINTS: usize = 256;
/// Largest allowed normalized ground-state density at the walls.
pub const WALL_DENSITY_LIMIT: f64 = 1e-10;
/// Largest allowed relative gap between the `δJ` and `δJ/2` susceptibility estimates.
pub const DIFFERENCE_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralSettings {
    pub half_width: f64,
    pub points: usize,
    pub tilt: f64,
    pub eigencount: usize,
}

impl Default for SpectralSettings {
    fn default() -> Self {
        SpectralSettings {
            half_width: DEFAULT_HALF_WIDTH,
            points: DEFAULT_POINTS,
            tilt: DEFAULT_TILT,
            eigencount: DEFAULT_EIGENCOUNT,
        }
    }
}

impl SpectralSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.half_width.is_finite() && self.half_width > 0.0) {
            return Err(Error::param(
                "half_width",
                format!("must be > 0, got {}", self.half_width),
            ));
        }
        if self.points < MIN_POINTS {
            return Err(Error::param(
                "points",
                format!("must be >= {MIN_POINTS}, got {}", self.points),
            ));
        }
        if !(self.tilt.is_finite() && self.tilt > 0.0) {
            return Err(Error::param(
                "tilt",
                format!("must be > 0, got {}", self.tilt),
            ));
        }
        if self.eigencount < 2 {
            return Err(Error::param(
                "eigencount",
                format!("must be >= 2, got {}", self.eigencount),
            ));
        }
        Ok(())
    }

    /// Checks the box against the classical minimum `q̄ = 1/(2√λ̄)` of the double well.
    pub fn validate_for(&self, lam: f64) -> Result<()> {
        self.validate()?;
        let minimum = 0.5 / lam.sqrt();
        if self.half_width <= 2.0 * minimum {
            return Err(Error::param(
                "half_width",
                format!(
                    "must exceed twice the classical minimum {minimum}, got {}",
                    self.half_width
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    /// Lowest eigenvalues in units of `ħω₀`, ascending.
    pub eigenvalues: Vec<f64>,
    pub gap: f64,
    /// `−d²E₀/dJ²` when it was computed.
    pub chi_exact: Option<f64>,
    pub wall_density: f64,
}

/// Symmetric tridiagonal matrix with constant off-diagonal.
struct Tridiagonal {
    diag: Vec<f64>,
    off: f64,
    spacing: f64,
    potential: Vec<f64>,
}

impl Tridiagonal {
    fn hamiltonian(potential: &dyn Fn(f64) -> f64, tilt: f64, half_width: f64, n: usize) -> Self {
        let h = 2.0 * half_width / (n + 1) as f64;
        let kinetic = 1.0 / (h * h);
        let potential: Vec<f64> = (1..=n)
            .map(|i| {
                let q = -half_width + h * i as f64;
                potential(q) + tilt * q
            })
            .collect();
        Tridiagonal {
            diag: potential.iter().map(|v| v + kinetic).collect(),
            off: -0.5 * kinetic,
            spacing: h,
            potential,
        }
    }

    /// Number of eigenvalues strictly below `x`.
    fn count_below(&self, x: f64) -> usize {
        let off2 = self.off * self.off;
        let floor = f64::EPSILON * self.off.abs();
        let mut count = 0;
        let mut d = 1.0;
        for (i, &a) in self.diag.iter().enumerate() {
            d = if i == 0 { a - x } else { (a - x) - off2 / d };
            if d.abs() < floor {
                d = -floor;
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn bounds(&self) -> (f64, f64) {
        let r = 2.0 * self.off.abs();
        let lo = self.diag.iter().copied().fold(f64::INFINITY, f64::min) - r;
        let hi = self.diag.iter().copied().fold(f64::NEG_INFINITY, f64::max) + r;
        (lo, hi)
    }

    /// The `index`-th smallest eigenvalue (0-based) by bisection.
    fn eigenvalue(&self, index: usize) -> Result<f64> {
        let (mut lo, mut hi) = self.bounds();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                return Ok(mid);
            }
            if self.count_below(mid) > index {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
                return Ok(0.5 * (lo + hi));
            }
        }
        Err(Error::NoConvergence(format!(
            "bisection for eigenvalue {index} did not reach machine precision"
        )))
    }

    /// Solves `(T − σ)x = b` for `σ` below the spectrum (the matrix is then SPD).
    fn solve_shifted(&self, shift: f64, b: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut denom = self.diag[0] - shift;
        c[0] = self.off / denom;
        x[0] = b[0] / denom;
        for i in 1..n {
            denom = (self.diag[i] - shift) - self.off * c[i - 1];
            c[i] = self.off / denom;
            x[i] = (b[i] - self.off * x[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        x
    }

    /// `xᵀTx/xᵀx` with the kinetic part written as squared differences.
    fn rayleigh_quotient(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let norm: f64 = x.iter().map(|v| v * v).sum();
        let potential: f64 = x.iter().zip(&self.potential).map(|(v, p)| p * v * v).sum();
        let mut kinetic = x[0] * x[0] + x[n - 1] * x[n - 1];
        kinetic += x.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>();
        (potential + 0.5 * kinetic / (self.spacing * self.spacing)) / norm
    }

    /// Polished ground state energy, normalized wave function and residual norm.
    fn ground_state(&self, estimate: f64, next: f64) -> Result<(f64, Vec<f64>)> {
        let n = self.diag.len();
        let shift = estimate - 1e-6 * (next - estimate).abs().max(1e-12);
        let mut x = vec![1.0; n];
        for _ in 0..3 {
            x = self.solve_shifted(shift, &x);
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v /= norm);
        }
        let energy = self.rayleigh_quotient(&x);
        let mut residual = 0.0f64;
        for i in 0..n {
            let mut tx = self.diag[i] * x[i];
            if i > 0 {
                tx += self.off * x[i - 1];
            }
            if i + 1 < n {
                tx += self.off * x[i + 1];
            }
            residual += (tx - energy * x[i]).powi(2);
        }
        let scale = self.off.abs() * 4.0;
        if !(residual.sqrt() <= 1e-8 * scale) {
            return Err(Error::NoConvergence(format!(
                "inverse iteration residual {:e} too large",
                residual.sqrt()
            )));
        }
        // continuum normalization ∫ψ² dq = 1
        let h = self.spacing;
        x.iter_mut().for_each(|v| *v /= h.sqrt());
        Ok((energy, x))
    }
}

struct GridSpectrum {
    eigenvalues: Vec<f64>,
    wall_density: f64,
}

fn spectrum_on(
    potential: &dyn Fn(f64) -> f64,
    tilt: f64,
    half_width: f64,
    n: usize,
    count: usize,
) -> Result<GridSpectrum> {
    let t = Tridiagonal::hamiltonian(potential, tilt, half_width, n);
    let mut eigenvalues = (0..count)
        .map(|k| t.eigenvalue(k))
        .collect::<Result<Vec<_>>>()?;
    let (e0, psi) = t.ground_state(eigenvalues[0], eigenvalues[1])?;
    eigenvalues[0] = e0;
    let wall_density = (psi[0] * psi[0]).max(psi[n - 1] * psi[n - 1]);
    Ok(GridSpectrum {
        eigenvalues,
        wall_density,
    })
}

/// Lowest `settings.eigencount` levels of `−½ d²/dq̄² + potential(q̄) + tilt·q̄`.
pub fn diagonalize_with(
    potential: &dyn Fn(f64) -> f64,
    tilt: f64,
    settings: &SpectralSettings,
) -> Result<SpectralResult> {
    settings.validate()?;
    let n = settings.points;
    let k = settings.eigencount;
    let coarse = spectrum_on(potential, tilt, settings.half_width, n, k)?;
    let fine = spectrum_on(potential, tilt, settings.half_width, 2 * n + 1, k)?;
    let wall_density = fine.wall_density;
    if wall_density > WALL_DENSITY_LIMIT {
        return Err(Error::BoxTooSmall {
            density: wall_density,
        });
    }
    let eigenvalues: Vec<f64> = coarse
        .eigenvalues
        .iter()
        .zip(&fine.eigenvalues)
        .map(|(c, f)| (4.0 * f - c) / 3.0)
        .collect();
    Ok(SpectralResult {
        gap: eigenvalues[1] - eigenvalues[0],
        eigenvalues,
        chi_exact: None,
        wall_density,
    })
}

pub fn diagonalize(lam: f64, tilt: f64, settings: &SpectralSettings) -> Result<SpectralResult> {
    settings.validate_for(lam)?;
    diagonalize_with(&|q| bare_potential_value(lam, q), tilt, settings)
}

/// `−d²E₀/dJ²` by a central difference of step `δ`.
fn curvature_in_tilt(
    potential: &dyn Fn(f64) -> f64,
    e0: f64,
    delta: f64,
    settings: &SpectralSettings,
) -> Result<f64> {
    let plus = diagonalize_with(potential, delta, settings)?.eigenvalues[0];
    let minus = diagonalize_with(potential, -delta, settings)?.eigenvalues[0];
    Ok(-(plus - 2.0 * e0 + minus) / (delta * delta))
}

/// Localization susceptibility `χ = −d²E₀/dJ²` of an arbitrary potential, checked by
/// repeating the difference at half the step.
pub fn exact_susceptibility_with(
    potential: &dyn Fn(f64) -> f64,
    settings: &SpectralSettings,
) -> Result<f64> {
    let e0 = diagonalize_with(potential, 0.0, settings)?.eigenvalues[0];
    let coarse = curvature_in_tilt(potential, e0, settings.tilt, settings)?;
    let fine = curvature_in_tilt(potential, e0, 0.5 * settings.tilt, settings)?;
    let relative = (coarse - fine).abs() / fine.abs();
    if !(relative <= DIFFERENCE_TOLERANCE) {
        return Err(Error::UnstableDifference {
            coarse,
            fine,
            relative,
        });
    }
    Ok(coarse)
}

pub fn exact_susceptibility(lam: f64, settings: &SpectralSettings) -> Result<f64> {
    settings.validate_for(lam)?;
    exact_susceptibility_with(&|q| bare_potential_value(lam, q), settings)
}

/// Spectrum at zero tilt together with the exact susceptibility.
pub fn analyze(lam: f64, settings: &SpectralSettings) -> Result<SpectralResult> {
    let mut result = diagonalize(lam, 0.0, settings)?;
    result.chi_exact = Some(exact_susceptibility(lam, settings)?);
    Ok(result)
}
