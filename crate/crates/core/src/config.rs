//! Run configuration: a TOML file overlaid by command-line flags, resolved against
//! the library defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flow::FlowSettings;
use crate::model::{reduce, DimensionlessParams, GridSpec, ModelParams};
use crate::observables::DEFAULT_FIT_WINDOW;
use crate::scan::{
    RefinePolicy, SweepSettings, WindowPolicy, DEFAULT_BISECTIONS, DEFAULT_CHI_RATIO,
    MIN_FIT_POINTS,
};
use crate::spectral::SpectralSettings;

/// Default output directory when neither a flag nor the config file names one.
pub const OUT_DIR_ENV: &str = "NPRG_FLOW_OUT";
pub const DEFAULT_SURFACE_LAMBDAS: [f64; 3] = [0.3, 0.5, 1.0];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    /// Result document only.
    #[default]
    Json,
    /// Result document plus CSV tables.
    Csv,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hbar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega0: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qmax: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tmax: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spinodal_eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_diffusivity: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tilt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eigencount: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    /// Explicit sweep grid; without it `scan` runs the refined sweep.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub etas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coarse_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bisections: Option<usize>,
    /// Scaling window threshold relative to the lowest-dissipation susceptibility;
    /// `0` keeps every converged record.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub span: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<OutputFormat>,
}

/// Everything a run can be told; unset fields fall back to defaults on [`resolve`](RunConfig::resolve).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    pub flow: FlowSection,
    pub spectral: SpectralSection,
    pub scan: ScanSection,
    pub output: OutputSection,
}

macro_rules! overlay {
    ($base:expr, $top:expr; $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )*
    };
}

impl RunConfig {
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: &RunConfig) -> Self {
        overlay!(self.model, top.model; lambda0, eta, cutoff, mass, hbar, omega0);
        overlay!(self.grid, top.grid; n, qmax);
        overlay!(self.flow, top.flow; tmax, dt, spinodal_eps, convergence_tol, max_diffusivity);
        overlay!(self.spectral, top.spectral; half_width, points, tilt, eigencount);
        overlay!(self.scan, top.scan;
            etas, lambdas, coarse_step, bisections, chi_ratio, span, min_points, fit_window, jobs);
        overlay!(self.output, top.output; dir, format);
        self
    }

    /// Applies defaults and validates. `env_out` is the fallback output directory.
    pub fn resolve(&self, env_out: Option<PathBuf>) -> Result<ResolvedConfig> {
        let d = ModelParams::default();
        let m = &self.model;
        let model = ModelParams {
            mass: m.mass.unwrap_or(d.mass),
            hbar: m.hbar.unwrap_or(d.hbar),
            omega0: m.omega0.unwrap_or(d.omega0),
            lambda0: m.lambda0.unwrap_or(d.lambda0),
            eta: m.eta.unwrap_or(d.eta),
            cutoff: m.cutoff.unwrap_or(d.cutoff),
        };
        model.validate()?;
        let physical_units = m.mass.is_some() || m.hbar.is_some() || m.omega0.is_some();

        let g = GridSpec::default();
        let grid = GridSpec {
            n: self.grid.n.unwrap_or(g.n),
            qmax: self.grid.qmax.unwrap_or(g.qmax),
        };
        grid.validate()?;

        let f = FlowSettings::default();
        let flow = FlowSettings {
            t_max: self.flow.tmax.unwrap_or(f.t_max),
            dt: self.flow.dt.unwrap_or(f.dt),
            spinodal_eps: self.flow.spinodal_eps.unwrap_or(f.spinodal_eps),
            convergence_tol: self.flow.convergence_tol.unwrap_or(f.convergence_tol),
            max_diffusivity: self.flow.max_diffusivity.unwrap_or(f.max_diffusivity),
        };
        flow.validate()?;

        let s = SpectralSettings::default();
        let spectral = SpectralSettings {
            half_width: self.spectral.half_width.unwrap_or(s.half_width),
            points: self.spectral.points.unwrap_or(s.points),
            tilt: self.spectral.tilt.unwrap_or(s.tilt),
            eigencount: self.spectral.eigencount.unwrap_or(s.eigencount),
        };
        spectral.validate()?;

        let sc = &self.scan;
        if let Some(etas) = &sc.etas {
            if etas.is_empty() {
                return Err(Error::param("etas", "must not be empty"));
            }
            if etas.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
                return Err(Error::param("etas", "values must be finite and >= 0"));
            }
            if etas.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::param("etas", "values must be strictly increasing"));
            }
        }
        let lambdas = sc
            .lambdas
            .clone()
            .unwrap_or_else(|| DEFAULT_SURFACE_LAMBDAS.to_vec());
        if lambdas.is_empty() || lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::param(
                "lambdas",
                "must be a non-empty list of values > 0",
            ));
        }
        if let Some(step) = sc.coarse_step {
            if !(step.is_finite() && step > 0.0) {
                return Err(Error::param(
                    "coarse_step",
                    format!("must be > 0, got {step}"),
                ));
            }
        }
        let chi_ratio = sc.chi_ratio.unwrap_or(DEFAULT_CHI_RATIO);
        if !(chi_ratio.is_finite() && chi_ratio >= 0.0) {
            return Err(Error::param(
                "chi_ratio",
                format!("must be >= 0, got {chi_ratio}"),
            ));
        }
        if let Some(span) = sc.span {
            if !(span.is_finite() && span > 0.0) {
                return Err(Error::param("span", format!("must be > 0, got {span}")));
            }
        }
        let min_points = sc.min_points.unwrap_or(MIN_FIT_POINTS);
        if min_points < 3 {
            return Err(Error::param(
                "min_points",
                format!("must be >= 3, got {min_points}"),
            ));
        }
        let fit_window = sc.fit_window.unwrap_or(DEFAULT_FIT_WINDOW);
        if fit_window < 5 || fit_window % 2 == 0 || fit_window / 2 >= grid.n {
            return Err(Error::param(
                "fit_window",
                format!("must be odd, >= 5 and inside the grid, got {fit_window}"),
            ));
        }
        let scan = ScanConfig {
            etas: sc.etas.clone(),
            lambdas,
            refine: RefinePolicy {
                coarse_step: sc.coarse_step,
                bisections: sc.bisections.unwrap_or(DEFAULT_BISECTIONS),
            },
            window: WindowPolicy {
                min_chi_ratio: Some(chi_ratio),
                span: sc.span,
                min_points,
            },
            fit_window,
            jobs: sc.jobs.unwrap_or(0),
        };

        let output = OutputConfig {
            dir: self
                .output
                .dir
                .clone()
                .or(env_out)
                .unwrap_or_else(|| PathBuf::from(".")),
            format: self.output.format.unwrap_or_default(),
        };

        Ok(ResolvedConfig {
            model,
            physical_units,
            grid,
            flow,
            spectral,
            scan,
            output,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub etas: Option<Vec<f64>>,
    pub lambdas: Vec<f64>,
    pub refine: RefinePolicy,
    pub window: WindowPolicy,
    pub fit_window: usize,
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

/// Fully specified run inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub model: ModelParams,
    /// Whether `M`, `ħ` or `ω₀` were given explicitly, which adds physical-unit outputs.
    pub physical_units: bool,
    pub grid: GridSpec,
    pub flow: FlowSettings,
    pub spectral: SpectralSettings,
    pub scan: ScanConfig,
    #[serde(skip)]
    pub output: OutputConfig,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("."),
            format: OutputFormat::Json,
        }
    }
}

impl ResolvedConfig {
    pub fn dimensionless(&self) -> Result<DimensionlessParams> {
        reduce(&self.model)
    }

    pub fn sweep(&self) -> Result<SweepSettings> {
        Ok(SweepSettings {
            flow: self.flow,
            grid: self.grid,
            cutbar: self.dimensionless()?.cutbar,
            fit_window: self.scan.fit_window,
            jobs: self.scan.jobs,
        })
    }

    /// SHA-256 of the canonical JSON form of the computational inputs (the output
    /// location is not part of it).
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&canonical)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let cfg = RunConfig::parse("", "empty").unwrap();
        let r = cfg.resolve(None).unwrap();
        assert_eq!(r.model, ModelParams::default());
        assert_eq!(r.grid, GridSpec::default());
        assert_eq!(r.flow, FlowSettings::default());
        assert_eq!(r.spectral, SpectralSettings::default());
        assert!(!r.physical_units);
        assert_eq!(r.output.dir, PathBuf::from("."));
        let d = r.dimensionless().unwrap();
        assert_eq!((d.lam, d.etabar, d.cutbar), (1.0, 0.0, 1e4));
    }

    #[test]
    fn flags_override_file() {
        let file = RunConfig::parse("[model]\nlambda0 = 0.5\neta = 2.0\n", "file").unwrap();
        let mut flags = RunConfig::default();
        flags.model.lambda0 = Some(1.0);
        let r = file.overlay(&flags).resolve(None).unwrap();
        assert_eq!(r.model.lambda0, 1.0);
        assert_eq!(r.model.eta, 2.0);
    }

    #[test]
    fn negative_eta_names_the_field() {
        let cfg = RunConfig::parse("[model]\neta = -1.0\n", "file").unwrap();
        let err = cfg.resolve(None).unwrap_err();
        assert!(
            matches!(err, Error::InvalidParameter { field: "eta", .. }),
            "{err}"
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse("[model]\nlambda = 1.0\n", "cfg.toml").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("cfg.toml") && msg.contains("lambda"), "{msg}");
        assert!(RunConfig::parse("[extra]\n", "cfg.toml").is_err());
    }

    #[test]
    fn output_dir_precedence() {
        let env = Some(PathBuf::from("/env"));
        let r = RunConfig::default().resolve(env.clone()).unwrap();
        assert_eq!(r.output.dir, PathBuf::from("/env"));
        let cfg = RunConfig::parse("[output]\ndir = \"/file\"\n", "f").unwrap();
        assert_eq!(cfg.resolve(env).unwrap().output.dir, PathBuf::from("/file"));
    }

    #[test]
    fn round_trip() {
        let text = "[model]\nlambda0 = 0.3\nmass = 2.0\n\n[flow]\ndt = 0.0005\n\n\
                    [scan]\netas = [0.0, 1.5, 3.0]\njobs = 2\n\n[output]\nformat = \"csv\"\n";
        let cfg = RunConfig::parse(text, "t").unwrap();
        let again = RunConfig::parse(&cfg.to_toml().unwrap(), "t").unwrap();
        assert_eq!(cfg, again);
        assert!(cfg.resolve(None).unwrap().physical_units);
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = RunConfig::default().resolve(Some("/a".into())).unwrap();
        let b = RunConfig::default().resolve(Some("/b".into())).unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut c = RunConfig::default();
        c.model.eta = Some(1.0);
        assert_ne!(a.hash(), c.resolve(None).unwrap().hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn scan_validation_names_fields() {
        for (text, field) in [
            ("[scan]\netas = [1.0, 0.5]\n", "etas"),
            ("[scan]\nlambdas = []\n", "lambdas"),
            ("[scan]\nfit_window = 8\n", "fit_window"),
            ("[flow]\ndt = 0.5\n", "dt"),
        ] {
            let err = RunConfig::parse(text, "t")
                .unwrap()
                .resolve(None)
                .unwrap_err();
            match err {
                Error::InvalidParameter { field: f, .. } => assert_eq!(f, field),
                other => panic!("{other}"),
            }
        }
    }
}
