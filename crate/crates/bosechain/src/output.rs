//! Data-file emission: CSV tables with `#` metadata lines and JSON summaries.

use std::io::Write;

use bosechain_core::model::SystemSpec;
use serde::Serialize;

use crate::analysis::SpectrumRecord;
use crate::config::{Config, Method};
use crate::error::AppError;
use crate::runner::{Curve, PointResult};

/// Fixed 12-significant-digit rendering used in every table.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else {
        x.to_string()
    }
}

/// Parameter columns of grid tables, in order.
pub const PARAM_COLUMNS: &[&str] = &[
    "chain.L",
    "chain.Js",
    "chain.delta",
    "chain.U",
    "left.M",
    "left.Jr",
    "left.gamma",
    "left.beta",
    "left.nbar",
    "right.M",
    "right.Jr",
    "right.gamma",
    "right.beta",
    "right.nbar",
    "epsilon",
];

/// Parameter values matching [`PARAM_COLUMNS`].
pub fn param_values(s: &SystemSpec) -> Vec<f64> {
    vec![
        s.chain.sites as f64,
        s.chain.hopping,
        s.chain.gate,
        s.chain.interaction,
        s.left.modes as f64,
        s.left.hopping,
        s.left.relaxation,
        s.left.beta,
        s.left.density,
        s.right.modes as f64,
        s.right.hopping,
        s.right.relaxation,
        s.right.beta,
        s.right.density,
        s.coupling,
    ]
}

fn param_cells(s: &SystemSpec) -> Vec<String> {
    param_values(s)
        .into_iter()
        .zip(PARAM_COLUMNS)
        .map(|(v, k)| {
            if matches!(*k, "chain.L" | "left.M" | "right.M") {
                format!("{}", v as u64)
            } else {
                fmt_num(v)
            }
        })
        .collect()
}

/// Header of a grid table.
pub fn grid_header(timing: bool) -> Vec<String> {
    let mut h = vec!["hash".to_string(), "method".to_string()];
    h.extend(PARAM_COLUMNS.iter().map(|s| s.to_string()));
    h.extend(["current", "stderr", "n_realizations"].map(String::from));
    if timing {
        h.push("wall_s".into());
    }
    h.push("status".into());
    h
}

/// One grid row; `result` carries the solver outcome or its error text.
pub fn grid_row(hash: &str, method: Method, s: &SystemSpec, result: &Result<PointResult, String>, wall_s: Option<f64>) -> Vec<String> {
    let mut row = vec![hash.to_string(), method.to_string()];
    row.extend(param_cells(s));
    match result {
        Ok(r) => {
            row.push(fmt_num(r.current));
            row.push(r.stderr.map(fmt_num).unwrap_or_default());
            row.push(r.n_realizations.map(|n| n.to_string()).unwrap_or_default());
        }
        Err(_) => row.extend([String::new(), String::new(), String::new()]),
    }
    if let Some(w) = wall_s {
        row.push(format!("{w:.3}"));
    }
    row.push(match result {
        Ok(_) => "ok".to_string(),
        Err(e) => format!("error: {e}"),
    });
    row
}

#[derive(Serialize)]
struct RunJson<'a> {
    method: &'a str,
    params: serde_json::Map<String, serde_json::Value>,
    current: f64,
    stderr: Option<f64>,
    n_realizations: Option<u64>,
    residual: Option<f64>,
    chain_occupations: &'a [f64],
}

/// JSON summary of a single run.
pub fn run_json(cfg: &Config, r: &PointResult) -> String {
    let params = PARAM_COLUMNS
        .iter()
        .zip(param_values(&cfg.system))
        .map(|(k, v)| (k.to_string(), serde_json::json!(v)))
        .collect();
    let doc = RunJson {
        method: cfg.plan.method.name(),
        params,
        current: r.current,
        stderr: r.stderr,
        n_realizations: r.n_realizations,
        residual: r.residual,
        chain_occupations: &r.chain_occupations,
    };
    serde_json::to_string_pretty(&doc).expect("plain numbers serialize") + "\n"
}

fn csv_err(e: impl std::fmt::Display) -> AppError {
    AppError::io("output", e)
}

/// Resonance curves: columns `g, delta, j_mean, j_stderr, expected_peak`;
/// the expected peaks also appear as `#` lines and fill the last column of
/// the first rows of each curve.
pub fn write_resonance<W: Write>(mut out: W, cfg: &Config, expected: &[f64], curves: &[Curve]) -> Result<(), AppError> {
    let list = expected.iter().map(|p| fmt_num(*p)).collect::<Vec<_>>().join(", ");
    writeln!(out, "# method = {}", cfg.plan.method).map_err(csv_err)?;
    writeln!(out, "# expected_peaks = {list}").map_err(csv_err)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["g", "delta", "j_mean", "j_stderr", "expected_peak"])
        .map_err(csv_err)?;
    for c in curves {
        for (i, p) in c.points.iter().enumerate() {
            let peak = expected.get(i).map(|x| fmt_num(*x)).unwrap_or_default();
            w.write_record([fmt_num(c.g), fmt_num(p.delta), fmt_num(p.j_mean), fmt_num(p.j_stderr), peak])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(csv_err)
}

/// Spectra sharing one frequency grid: columns `nu` then one power column
/// per label.
pub fn write_spectra<W: Write>(mut out: W, labels: &[String], spectra: &[SpectrumRecord]) -> Result<(), AppError> {
    let first = spectra.first().ok_or_else(|| AppError::Usage("no spectra to write".into()))?;
    writeln!(out, "# dt = {}", first.dt).map_err(csv_err)?;
    writeln!(out, "# t_total = {}", first.t_total).map_err(csv_err)?;
    writeln!(out, "# segments = {}", first.n_segments).map_err(csv_err)?;
    writeln!(out, "# resolution = {}", fmt_num(first.resolution())).map_err(csv_err)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["nu".to_string()];
    header.extend(labels.iter().map(|l| format!("P_{l}")));
    w.write_record(&header).map_err(csv_err)?;
    for (k, nu) in first.nu_grid.iter().enumerate() {
        let mut row = vec![fmt_num(*nu)];
        row.extend(spectra.iter().map(|s| fmt_num(s.power[k])));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(0.1), "1.00000000000e-1");
        assert_eq!(fmt_num(-123456.789), "-1.23456789000e5");
    }
}
