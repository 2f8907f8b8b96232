//! Result documents (JSON) and plot tables (CSV), written atomically.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ResolvedConfig;
use crate::error::{Error, Result};
use crate::flow::{FlowOutcome, StopReason};
use crate::model::{ModelParams, PotentialGrid};
use crate::scan::{ScanRecord, ScanTable, SurfaceRow, SweepSettings};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const POTENTIAL_HEADER: [&str; 3] = ["q", "v_initial", "v_eff"];
pub const TRACE_HEADER: [&str; 2] = ["scale", "curvature"];
pub const SCAN_HEADER: [&str; 5] = ["eta", "omega_eff_sq", "omega_eff", "chi", "status"];
pub const SCAN_PHYSICAL_HEADER: [&str; 2] = ["eta_physical", "chi_physical"];
pub const SURFACE_HEADER: [&str; 9] = [
    "lambda",
    "eta_c",
    "gamma",
    "residual",
    "baseline_2pi_lambda",
    "window_points",
    "window_shift",
    "unstable",
    "low_confidence",
];

/// Writes through a temporary file in the target directory and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Versioned result document. Contains no wall-clock data, so identical inputs give
/// byte-identical output.
pub fn result_document(
    command: &str,
    config: &ResolvedConfig,
    result: impl Serialize,
) -> Result<Value> {
    let result = serde_json::to_value(result).map_err(|e| Error::Serialize(e.to_string()))?;
    Ok(json!({
        "schema": SCHEMA_VERSION,
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "command": command,
        "config": config,
        "config_hash": config.hash(),
        "result": result,
    }))
}

/// Run metadata kept apart from the result document.
pub fn metadata_document(command: &str, config: &ResolvedConfig) -> Value {
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    json!({
        "schema": SCHEMA_VERSION,
        "command": command,
        "config_hash": config.hash(),
        "timestamp_unix": now,
    })
}

pub fn to_json_bytes(doc: &Value) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(doc).map_err(|e| Error::Serialize(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_json(path: &Path, doc: &Value) -> Result<()> {
    write_atomic(path, &to_json_bytes(doc)?)
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let ser = |e: csv::Error| Error::Serialize(e.to_string());
    w.write_record(header).map_err(ser)?;
    for row in rows {
        w.write_record(&row).map_err(ser)?;
    }
    w.into_inner().map_err(|e| Error::Serialize(e.to_string()))
}

pub fn potential_csv(initial: &PotentialGrid, outcome: &FlowOutcome) -> Result<Vec<u8>> {
    let rows = initial
        .positions()
        .into_iter()
        .zip(initial.values())
        .zip(outcome.potential.values())
        .map(|((q, v0), v)| vec![num(q), num(*v0), num(*v)]);
    csv_bytes(&POTENTIAL_HEADER, rows)
}

pub fn trace_csv(outcome: &FlowOutcome) -> Result<Vec<u8>> {
    let rows = outcome
        .curvature_trace
        .iter()
        .map(|p| vec![num(p.scale), num(p.curvature)]);
    csv_bytes(&TRACE_HEADER, rows)
}

/// Scan table; `units` appends physical `η` and `χ` columns.
pub fn scan_csv(table: &ScanTable, units: Option<&ModelParams>) -> Result<Vec<u8>> {
    let mut header = SCAN_HEADER.to_vec();
    if units.is_some() {
        header.extend(SCAN_PHYSICAL_HEADER);
    }
    let rows = table.records.iter().map(|r| {
        let omega = (r.omega_eff_sq > 0.0).then(|| r.omega_eff_sq.sqrt());
        let mut row = vec![
            num(r.eta),
            num(r.omega_eff_sq),
            opt(omega),
            opt(r.chi),
            r.stop_reason.as_str().to_string(),
        ];
        if let Some(p) = units {
            row.push(num(r.eta * p.mass * p.omega0));
            row.push(opt(r.chi.map(|c| p.susceptibility_from_dimensionless(c))));
        }
        row
    });
    csv_bytes(&header, rows)
}

pub fn surface_csv(rows: &[SurfaceRow]) -> Result<Vec<u8>> {
    let rows = rows.iter().map(|r| {
        let fit = r.fit.as_ref();
        vec![
            num(r.lam),
            opt(fit.map(|f| f.eta_c)),
            opt(fit.map(|f| f.gamma)),
            opt(fit.map(|f| f.residual)),
            num(r.baseline),
            fit.map(|f| f.window.points.to_string()).unwrap_or_default(),
            opt(r.window_shift),
            r.unstable.to_string(),
            r.low_confidence.to_string(),
        ]
    });
    csv_bytes(&SURFACE_HEADER, rows)
}

fn parse_status(s: &str) -> Option<StopReason> {
    match s {
        "converged" => Some(StopReason::Converged),
        "reached_t_max" => Some(StopReason::ReachedTMax),
        "spinodal" => Some(StopReason::Spinodal),
        _ => None,
    }
}

/// Reads a scan table written by [`scan_csv`]. Only `eta`, `chi` and `status` are
/// required; `omega_eff_sq` is filled from `chi` when absent.
pub fn read_scan_csv(text: &str, source_name: &str, lam: f64) -> Result<ScanTable> {
    let parse_err = |line: u64, message: String| Error::Parse {
        source_name: format!("{source_name}:{line}"),
        message,
    };
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let eta_col = column("eta").ok_or_else(|| parse_err(1, "missing `eta` column".into()))?;
    let chi_col = column("chi").ok_or_else(|| parse_err(1, "missing `chi` column".into()))?;
    let status_col = column("status");
    let omega_col = column("omega_eff_sq");
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| parse_err(0, e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |col: usize| row.get(col).unwrap_or("").trim();
        let number = |col: usize, name: &str| -> Result<Option<f64>> {
            let s = field(col);
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>()
                .map(Some)
                .map_err(|_| parse_err(line, format!("`{name}` value {s:?} is not a number")))
        };
        let eta =
            number(eta_col, "eta")?.ok_or_else(|| parse_err(line, "missing `eta` value".into()))?;
        let chi = number(chi_col, "chi")?;
        let stop_reason = match status_col {
            Some(c) => parse_status(field(c))
                .ok_or_else(|| parse_err(line, format!("unknown status {:?}", field(c))))?,
            None if chi.is_some() => StopReason::Converged,
            None => StopReason::Spinodal,
        };
        let chi = chi.filter(|c| stop_reason == StopReason::Converged && *c > 0.0);
        let omega_eff_sq = match omega_col {
            Some(c) => number(c, "omega_eff_sq")?,
            None => None,
        }
        .or(chi.map(|c| 1.0 / c))
        .unwrap_or(f64::NAN);
        records.push(ScanRecord {
            eta,
            omega_eff_sq,
            chi,
            stop_reason,
        });
    }
    ScanTable::new(lam, records, SweepSettings::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scan::synthetic_table;

    #[test]
    fn scan_csv_round_trip() {
        let mut table = synthetic_table(2.0, 7.0, 1.5, &[1.0, 2.5, 4.0]).unwrap();
        table.records.push(ScanRecord {
            eta: 8.0,
            omega_eff_sq: -0.25,
            chi: None,
            stop_reason: StopReason::Spinodal,
        });
        let bytes = scan_csv(&table, None).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("eta,omega_eff_sq,omega_eff,chi,status\n"));
        assert!(text.ends_with("8,-0.25,,,spinodal\n"));
        assert!(!text.contains('\r'));
        let back = read_scan_csv(&text, "t", 1.0).unwrap();
        assert_eq!(back.records, table.records);
    }

    #[test]
    fn physical_columns() {
        let table = synthetic_table(1.0, 10.0, 1.0, &[0.0, 6.0]).unwrap();
        let units = ModelParams {
            mass: 2.0,
            omega0: 0.5,
            ..ModelParams::default()
        };
        let text = String::from_utf8(scan_csv(&table, Some(&units)).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "eta,omega_eff_sq,omega_eff,chi,status,eta_physical,chi_physical"
        );
        // χ̄ = 0.25 at η̄ = 6, and Mω₀² = 0.5
        assert_eq!(lines[2], "6,4,2,0.25,converged,6,0.5");
    }

    #[test]
    fn minimal_scan_csv() {
        let back = read_scan_csv("eta,chi\n0,1\n1,2\n2,\n", "m", 1.0).unwrap();
        assert_eq!(back.records.len(), 3);
        assert_eq!(back.records[2].stop_reason, StopReason::Spinodal);
        assert_eq!(back.records[1].omega_eff_sq, 0.5);
    }

    #[test]
    fn bad_csv_reports_location() {
        let err = read_scan_csv("eta,chi\n0,1\nx,2\n", "scan.csv", 1.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("scan.csv:3") && msg.contains("eta"), "{msg}");
        assert!(read_scan_csv("q,chi\n", "s", 1.0).is_err());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("a.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert_eq!(
            std::fs::read_dir(path.parent().unwrap()).unwrap().count(),
            1
        );
    }
}
