//! Physical parameters, the dimensionless reduction, and the bare double-well potential.
//!
//! Everything downstream works in units where `M = ħ = ω₀ = 1`:
//! `q̄ = q·√(Mω₀/ħ)`, `V̄ = V/(ħω₀)`, `Λ̄ = Λ/ω₀`. The flow equation is exactly
//! invariant under this rescaling, so physical units only appear at the API boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest `Λ₀/ω₀` that is considered a physical (ultraviolet) starting scale.
pub const CUTOFF_WARNING_RATIO: f64 = 1e2;

pub const DEFAULT_QMAX: f64 = 3.0;
pub const DEFAULT_GRID_POINTS: usize = 301;
pub const DEFAULT_CUTOFF: f64 = 1e4;
pub const MIN_GRID_POINTS: usize = 32;

/// Physical inputs of the dissipative double-well problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub mass: f64,
    pub hbar: f64,
    pub omega0: f64,
    pub lambda0: f64,
    pub eta: f64,
    pub cutoff: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            mass: 1.0,
            hbar: 1.0,
            omega0: 1.0,
            lambda0: 1.0,
            eta: 0.0,
            cutoff: DEFAULT_CUTOFF,
        }
    }
}

fn check_positive(field: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::param(
            field,
            format!("must be finite and > 0, got {value}"),
        ))
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("mass", self.mass)?;
        check_positive("hbar", self.hbar)?;
        check_positive("omega0", self.omega0)?;
        check_positive("lambda0", self.lambda0)?;
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::param(
                "eta",
                format!("must be finite and >= 0, got {}", self.eta),
            ));
        }
        check_positive("cutoff", self.cutoff)
    }

    /// A warning when the starting cutoff is not far above the oscillator frequency.
    pub fn cutoff_warning(&self) -> Option<String> {
        let ratio = self.cutoff / self.omega0;
        (ratio < CUTOFF_WARNING_RATIO).then(|| {
            format!("cutoff/omega0 = {ratio} is below {CUTOFF_WARNING_RATIO}; results are cutoff dependent")
        })
    }

    /// Natural position unit `√(ħ/(Mω₀))`.
    pub fn length_unit(&self) -> f64 {
        (self.hbar / (self.mass * self.omega0)).sqrt()
    }

    /// Converts a dimensionless susceptibility into physical units, `χ = χ̄/(Mω₀²)`.
    pub fn susceptibility_from_dimensionless(&self, chi_bar: f64) -> f64 {
        chi_bar / (self.mass * self.omega0 * self.omega0)
    }
}

/// `λ̄ = ħλ₀/(M²ω₀³)`, `η̄ = η/(Mω₀)`, `Λ̄₀ = Λ₀/ω₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessParams {
    pub lam: f64,
    pub etabar: f64,
    pub cutbar: f64,
}

impl DimensionlessParams {
    pub fn new(lam: f64, etabar: f64, cutbar: f64) -> Result<Self> {
        let p = DimensionlessParams {
            lam,
            etabar,
            cutbar,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("lambda0", self.lam)?;
        if !(self.etabar.is_finite() && self.etabar >= 0.0) {
            return Err(Error::param(
                "eta",
                format!("must be finite and >= 0, got {}", self.etabar),
            ));
        }
        check_positive("cutoff", self.cutbar)
    }

    /// Inverse of [`reduce`] for a chosen set of units.
    pub fn expand(&self, mass: f64, hbar: f64, omega0: f64) -> ModelParams {
        ModelParams {
            mass,
            hbar,
            omega0,
            lambda0: self.lam * mass * mass * omega0.powi(3) / hbar,
            eta: self.etabar * mass * omega0,
            cutoff: self.cutbar * omega0,
        }
    }
}

pub fn reduce(params: &ModelParams) -> Result<DimensionlessParams> {
    params.validate()?;
    let ModelParams {
        mass,
        hbar,
        omega0,
        lambda0,
        eta,
        cutoff,
    } = *params;
    Ok(DimensionlessParams {
        lam: hbar * lambda0 / (mass * mass * omega0.powi(3)),
        etabar: eta / (mass * omega0),
        cutbar: cutoff / omega0,
    })
}

/// Half-grid geometry `q̄ᵢ = i·qmax/(n−1)`, `i = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub qmax: f64,
    pub n: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            qmax: DEFAULT_QMAX,
            n: DEFAULT_GRID_POINTS,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < MIN_GRID_POINTS {
            return Err(Error::InvalidGrid(format!(
                "n = {} is below the minimum of {MIN_GRID_POINTS}",
                self.n
            )));
        }
        if !(self.qmax.is_finite() && self.qmax > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "qmax must be finite and > 0, got {}",
                self.qmax
            )));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.qmax / (self.n - 1) as f64
    }

    pub fn position(&self, i: usize) -> f64 {
        // multiply-then-divide keeps the last node exactly at qmax
        self.qmax * i as f64 / (self.n - 1) as f64
    }
}

/// Effective potential `V̄(q̄)` stored on `q̄ ≥ 0`; the negative half is the mirror image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialGrid {
    qmax: f64,
    values: Vec<f64>,
}

impl PotentialGrid {
    pub fn new(qmax: f64, values: Vec<f64>) -> Result<Self> {
        GridSpec {
            qmax,
            n: values.len(),
        }
        .validate()?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "non-finite value {} at index {i}",
                values[i]
            )));
        }
        Ok(PotentialGrid { qmax, values })
    }

    /// Samples `f` on the half grid.
    pub fn from_fn(spec: GridSpec, f: impl Fn(f64) -> f64) -> Result<Self> {
        spec.validate()?;
        let values = (0..spec.n).map(|i| f(spec.position(i))).collect();
        PotentialGrid::new(spec.qmax, values)
    }

    /// Used by the integrator, which has already checked finiteness of its stages.
    pub(crate) fn from_parts_unchecked(qmax: f64, values: Vec<f64>) -> Self {
        PotentialGrid { qmax, values }
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            qmax: self.qmax,
            n: self.values.len(),
        }
    }

    pub fn qmax(&self) -> f64 {
        self.qmax
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spec().spacing()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn positions(&self) -> Vec<f64> {
        let spec = self.spec();
        (0..spec.n).map(|i| spec.position(i)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Value at signed grid index `i ∈ (−n, n)` using the even extension.
    pub fn extended(&self, i: isize) -> f64 {
        self.values[i.unsigned_abs()]
    }
}

/// `V̄₀(q̄) = −½q̄² + λ̄q̄⁴`.
pub fn bare_potential_value(lam: f64, q: f64) -> f64 {
    let q2 = q * q;
    -0.5 * q2 + lam * q2 * q2
}

pub fn bare_potential(lam: f64, spec: GridSpec) -> Result<PotentialGrid> {
    check_positive("lambda0", lam)?;
    PotentialGrid::from_fn(spec, |q| bare_potential_value(lam, q))
}

/// Zero-point energy of one well over the barrier height, `r = 8√2·λ̄`.
pub fn r_ratio(lam: f64) -> f64 {
    8.0 * std::f64::consts::SQRT_2 * lam
}
