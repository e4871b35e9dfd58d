//! CSV and JSON writers. Every artifact carries the config echo, the crate
//! version, the grid resolutions and the largest solver residual.

use std::collections::BTreeMap;
use std::io::Write;

use anyhow::Result;
use serde_json::{json, Map, Value};

use crate::config::{Format, RunConfig};
use crate::run::{Outcome, Subcommand};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn fmt_num(x: Option<f64>) -> String {
    match x {
        Some(v) if !v.is_finite() => String::new(),
        Some(v) if v != 0.0 && (v.abs() < 1e-4 || v.abs() >= 1e9) => format!("{v:e}"),
        Some(v) => v.to_string(),
        None => String::new(),
    }
}

fn metadata(cmd: Subcommand, cfg: &RunConfig, outcome: &Outcome) -> Vec<(String, String)> {
    let mut m = vec![
        ("command".to_string(), cmd.name().to_string()),
        ("version".to_string(), VERSION.to_string()),
        (
            "spectral_resolution".to_string(),
            cfg.spectral_resolution.to_string(),
        ),
        ("bz_resolution".to_string(), cfg.bz_resolution.to_string()),
        ("max_residual".to_string(), fmt_num(outcome.max_residual())),
    ];
    m.extend(
        cfg.emit()
            .into_iter()
            .map(|(k, v)| (format!("config.{k}"), v)),
    );
    m
}

pub fn write<W: Write>(
    out: &mut W,
    format: Format,
    cmd: Subcommand,
    cfg: &RunConfig,
    outcome: &Outcome,
) -> Result<()> {
    match format {
        Format::Csv => write_csv(out, cmd, cfg, outcome),
        Format::Json => write_json(out, cmd, cfg, outcome),
    }
}

fn write_csv<W: Write>(
    out: &mut W,
    cmd: Subcommand,
    cfg: &RunConfig,
    outcome: &Outcome,
) -> Result<()> {
    for (k, v) in metadata(cmd, cfg, outcome) {
        writeln!(out, "# {k} = {v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    match outcome {
        Outcome::Table(t) => {
            let fit_cols = t.fit.is_some() || !t.extra_fits.is_empty();
            let mut header = t.columns.clone();
            if fit_cols {
                header.extend(["fit_slope".to_string(), "fit_intercept".to_string()]);
            }
            w.write_record(&header)?;
            for row in &t.rows {
                let mut rec: Vec<String> = row.iter().map(|x| fmt_num(*x)).collect();
                if fit_cols {
                    rec.extend([String::new(), String::new()]);
                }
                w.write_record(&rec)?;
            }
            let fits = t
                .fit
                .iter()
                .map(|f| ("fit", f))
                .chain(t.extra_fits.iter().map(|(l, f)| (l.as_str(), f)));
            for (label, f) in fits {
                let mut rec = vec![String::new(); header.len()];
                rec[0] = label.into();
                let n = header.len();
                rec[n - 2] = f.slope.to_string();
                rec[n - 1] = f.intercept.to_string();
                w.write_record(&rec)?;
            }
        }
        Outcome::Single { result, .. } => {
            // one row: scalar fields, then diagnostics
            let mut header = Vec::new();
            let mut rec = Vec::new();
            if let Value::Object(map) = result {
                for (k, v) in map {
                    if k == "diagnostics" {
                        continue;
                    }
                    header.push(k.clone());
                    rec.push(scalar(v));
                }
                if let Some(Value::Object(d)) = map.get("diagnostics") {
                    for (k, v) in d {
                        header.push(k.clone());
                        rec.push(scalar(v));
                    }
                }
            }
            w.write_record(&header)?;
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn write_json<W: Write>(
    out: &mut W,
    cmd: Subcommand,
    cfg: &RunConfig,
    outcome: &Outcome,
) -> Result<()> {
    let meta: Map<String, Value> = metadata(cmd, cfg, outcome)
        .into_iter()
        .filter(|(k, _)| !k.starts_with("config."))
        .map(|(k, v)| (k, Value::String(v)))
        .collect();
    let config: Map<String, Value> = cfg
        .emit()
        .into_iter()
        .map(|(k, v)| (k, Value::String(v)))
        .collect();
    let doc = match outcome {
        Outcome::Single { result, .. } => {
            let mut v = result.clone();
            v["metadata"] = Value::Object(meta);
            v["config"] = Value::Object(config);
            v
        }
        Outcome::Table(t) => json!({
            "rows": t.json_rows,
            "fit": t.fit,
            "extra_fits": t.extra_fits.iter().cloned().collect::<BTreeMap<_, _>>(),
            "metadata": meta,
            "config": config,
        }),
    };
    serde_json::to_writer_pretty(&mut *out, &doc)?;
    writeln!(out)?;
    Ok(())
}

/// Machine-readable error document.
pub fn error_json(kind: &str, message: &str) -> Value {
    json!({ "error": { "kind": kind, "message": message } })
}
