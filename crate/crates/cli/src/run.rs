//! Subcommand execution: maps a validated [`RunConfig`] onto library calls and
//! collects the results as a table or a single JSON object.

use std::collections::{BTreeMap, BTreeSet};

use anyhow::Result;
use multibeam::diffraction::{first_shell, r0_infinite, OrderSet};
use multibeam::experiments::{
    self, beating_period, optimize_waist_with, resonant_r0, DetuningPolicy, LinearFit, StudyKind,
    SweepRow, SweepSpec, WaistPolicy,
};
use multibeam::finite_theory::{
    gamma_r_and_0, r0_finite_theory, BzQuadrature, GaussianCollectiveMode,
};
use multibeam::lattice::build_patch;
use multibeam::metrics::{Reflectometer, ResonanceWindow, ScatteringSettings};
use multibeam::optimize::try_golden_section_max;
use multibeam::{AtomArray, InterfaceResult, Lattice, LatticeKind};
use nalgebra::Vector3;
use serde_json::{json, Value};

use crate::config::{tidy, Detuning, Format, RunConfig, Waist};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    InfiniteR0,
    TheoryR0,
    ScatterR0,
    OptimizeWaist,
    SweepSpacing,
    SweepNa,
    ScaleN,
    ScanShift,
    Disorder,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::InfiniteR0 => "infinite-r0",
            Subcommand::TheoryR0 => "theory-r0",
            Subcommand::ScatterR0 => "scatter-r0",
            Subcommand::OptimizeWaist => "optimize-waist",
            Subcommand::SweepSpacing => "sweep-spacing",
            Subcommand::SweepNa => "sweep-na",
            Subcommand::ScaleN => "scale-n",
            Subcommand::ScanShift => "scan-shift",
            Subcommand::Disorder => "disorder",
        }
    }

    pub fn default_format(self) -> Format {
        match self {
            Subcommand::InfiniteR0
            | Subcommand::TheoryR0
            | Subcommand::ScatterR0
            | Subcommand::OptimizeWaist => Format::Json,
            _ => Format::Csv,
        }
    }
}

/// Result of one run, before formatting.
#[derive(Clone, Debug)]
pub enum Outcome {
    Single { result: Value, summary: String },
    Table(Table),
}

#[derive(Clone, Debug, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
    /// Trailing fit row, written with `fit` in the first column.
    pub fit: Option<LinearFit>,
    /// Further labelled fits, each written as its own trailing row.
    pub extra_fits: Vec<(String, LinearFit)>,
    pub summary: String,
    pub json_rows: Vec<Value>,
}

impl Outcome {
    /// Largest solver residual found in the results.
    pub fn max_residual(&self) -> Option<f64> {
        match self {
            Outcome::Single { result, .. } => result["diagnostics"]["residual"].as_f64(),
            Outcome::Table(t) => {
                let i = t.columns.iter().position(|c| c == "residual")?;
                t.rows.iter().filter_map(|r| r[i]).reduce(f64::max)
            }
        }
    }

    pub fn summary(&self) -> &str {
        match self {
            Outcome::Single { summary, .. } => summary,
            Outcome::Table(t) => &t.summary,
        }
    }
}

fn lattice(cfg: &RunConfig) -> Result<Lattice> {
    Ok(Lattice::new(cfg.lattice, cfg.spacing)?)
}

fn array(cfg: &RunConfig) -> Result<AtomArray> {
    let mut a = build_patch(lattice(cfg)?, cfg.atoms)?;
    if cfg.disorder > 0.0 {
        let seed = cfg.seeds.first().copied().unwrap_or(0);
        a = a.disordered(cfg.disorder * cfg.spacing, seed)?;
    }
    Ok(a)
}

fn settings(cfg: &RunConfig) -> Result<ScatteringSettings> {
    let mut s = ScatteringSettings::new(cfg.spectral_resolution, cfg.na)?;
    s.projection = cfg.projection;
    Ok(s)
}

fn spec(cfg: &RunConfig, kind: StudyKind, grid: Vec<f64>) -> SweepSpec {
    SweepSpec {
        kind,
        grid,
        lattice: cfg.lattice,
        spacing: cfg.spacing,
        atoms: cfg.atoms,
        na: cfg.na,
        apertures: cfg.apertures.clone(),
        waist: match cfg.waist {
            Waist::Optimize => WaistPolicy::Optimize,
            Waist::Ratio(r) => WaistPolicy::Fixed(r),
        },
        detuning: match cfg.detuning {
            Detuning::Resonant => DetuningPolicy::Resonant,
            Detuning::Value(d) => DetuningPolicy::Fixed(d),
        },
        seeds: cfg.seeds.clone(),
        spectral_resolution: cfg.spectral_resolution,
        bz_resolution: cfg.bz_resolution,
        projection: cfg.projection,
        spacing_range: cfg.spacing_range(),
    }
}

fn result_json(res: &InterfaceResult, extra: &[(&str, Value)]) -> Value {
    let mut v = serde_json::to_value(res).expect("results serialise");
    for (k, x) in extra {
        v[*k] = x.clone();
    }
    v
}

fn range(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| tidy(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect()
}

pub fn run(cmd: Subcommand, cfg: &RunConfig) -> Result<Outcome> {
    match cmd {
        Subcommand::InfiniteR0 => {
            let lat = lattice(cfg)?;
            let res = r0_infinite(&lat, &first_shell(&lat))?;
            Ok(Outcome::Single {
                summary: format!(
                    "infinite-r0: r0 = {:.6} ({} lattice, a = {})",
                    res.r0, cfg.lattice, cfg.spacing
                ),
                result: result_json(&res, &[]),
            })
        }
        Subcommand::TheoryR0 => theory_r0(cfg),
        Subcommand::ScatterR0 | Subcommand::OptimizeWaist => scatter_r0(cmd, cfg),
        Subcommand::SweepSpacing => {
            let grid = cfg.grid.clone().unwrap_or_else(|| match cfg.lattice {
                LatticeKind::Triangular => range(1.2, 1.96, 20),
                LatticeKind::Square => range(1.04, 1.40, 19),
            });
            let rows = experiments::sweep_spacing(&spec(cfg, StudyKind::Spacing, grid))?;
            Ok(Outcome::Table(table("sweep-spacing", &rows, None)))
        }
        Subcommand::SweepNa => {
            let grid = cfg.grid.clone().unwrap_or_else(|| range(0.5, 1.0, 6));
            let rows = experiments::sweep_na(&spec(cfg, StudyKind::Na, grid))?;
            Ok(Outcome::Table(table("sweep-na", &rows, None)))
        }
        Subcommand::ScaleN => {
            let grid = cfg
                .grid
                .clone()
                .unwrap_or_else(|| vec![61.0, 101.0, 149.0, 203.0, 305.0, 537.0, 800.0, 1100.0]);
            let res = experiments::scale_n(&spec(cfg, StudyKind::NScaling, grid))?;
            Ok(Outcome::Table(table("scale-n", &res.rows, res.fit)))
        }
        Subcommand::ScanShift => {
            let kind = match cfg.study {
                Some(StudyKind::ShiftAxial) => StudyKind::ShiftAxial,
                _ => StudyKind::ShiftLateral,
            };
            let lat = lattice(cfg)?;
            let grid = match (&cfg.grid, kind) {
                (Some(g), _) => g.clone(),
                (None, StudyKind::ShiftAxial) => range(0.0, 3.0 * beating_period(&lat)?, 61),
                (None, _) => range(0.0, 3.0 * cfg.spacing, 61),
            };
            let mut s = spec(cfg, kind, grid);
            if s.waist == WaistPolicy::Optimize {
                s.waist = WaistPolicy::Fixed(0.25);
            }
            let rows = experiments::scan_shift(&s)?;
            let xs: Vec<f64> = rows.iter().filter_map(|r| r.value("shift")).collect();
            let ys: Vec<f64> = rows.iter().map(|r| r.r0).collect();
            let mut t = table("scan-shift", &rows, None);
            if let Some(p) = experiments::extract_period(&xs, &ys) {
                t.summary
                    .push_str(&format!(", oscillation period {p:.4} λ"));
            }
            Ok(Outcome::Table(t))
        }
        Subcommand::Disorder => {
            let grid = cfg.grid.clone().unwrap_or_else(|| range(0.0, 0.12, 7));
            let res = experiments::disorder_study(&spec(cfg, StudyKind::Disorder, grid))?;
            let mut t = table("disorder", &res.rows, res.fit);
            if let Some(f) = res.loss_rate_fit {
                t.summary
                    .push_str(&format!(", loss-rate slope {:.3}", f.slope));
                t.extra_fits.push(("fit_loss_rate".into(), f));
            }
            Ok(Outcome::Table(t))
        }
    }
}

fn window(cfg: &RunConfig) -> ResonanceWindow {
    match cfg.detuning {
        Detuning::Resonant => ResonanceWindow::default(),
        Detuning::Value(d) => ResonanceWindow {
            half_width: 0.0,
            points: 3,
            tolerance: 0.0,
            center: Some(d),
        },
    }
}

fn scatter_r0(cmd: Subcommand, cfg: &RunConfig) -> Result<Outcome> {
    let arr = array(cfg)?;
    let lat = *arr.lattice();
    let target: OrderSet = first_shell(&lat);
    let meter = Reflectometer::new(arr, settings(cfg)?)?;
    let [x, y, z] = cfg.shift;
    let view = meter.view().translated(Vector3::new(x, y, z));
    let optimize = cmd == Subcommand::OptimizeWaist || cfg.waist == Waist::Optimize;
    let (res, ratio, extra) = if optimize {
        let opt = optimize_waist_with(&view, &target, window(cfg))?;
        let extra = vec![
            ("certificate", json!(opt.certificate)),
            ("local_max", json!(opt.is_local_max())),
            ("at_boundary", json!(opt.at_boundary)),
        ];
        (opt.result, opt.ratio, extra)
    } else {
        let Waist::Ratio(r) = cfg.waist else {
            unreachable!()
        };
        let res = resonant_r0(&view, &target, r * meter.array().linear_size(), window(cfg))?;
        (res, r, Vec::new())
    };
    let mut all = vec![("w_opt", json!(ratio))];
    all.extend(extra);
    Ok(Outcome::Single {
        summary: format!(
            "{}: r0 = {:.6} at δ = {:.4} γ, w/L_a = {:.3}",
            cmd.name(),
            res.r0,
            res.delta_res,
            ratio
        ),
        result: result_json(&res, &all),
    })
}

fn theory_r0(cfg: &RunConfig) -> Result<Outcome> {
    let arr = build_patch(lattice(cfg)?, cfg.atoms)?;
    let lat = *arr.lattice();
    let target = first_shell(&lat);
    let quad = BzQuadrature::new(&lat, cfg.bz_resolution)?;
    let l = arr.linear_size();
    let ratio = match cfg.waist {
        Waist::Ratio(r) => r,
        Waist::Optimize => {
            let f = |r: f64| -> multibeam::Result<f64> {
                let mode = GaussianCollectiveMode::new(&arr, r * l)?;
                let rates = gamma_r_and_0(&mode, &lat, &target, &quad)?;
                Ok(mode.eta() * rates.gamma_r / rates.gamma_prime0)
            };
            try_golden_section_max(
                f,
                experiments::WAIST_RANGE.0,
                experiments::WAIST_RANGE.1,
                experiments::WAIST_TOLERANCE,
            )?
            .0
        }
    };
    let mode = GaussianCollectiveMode::new(&arr, ratio * l)?;
    let res = r0_finite_theory(&mode, &lat, &target, &quad, &arr)?;
    Ok(Outcome::Single {
        summary: format!("theory-r0: r0 = {:.6}, w/L_a = {:.3}", res.r0, ratio),
        result: result_json(&res, &[("w_opt", json!(ratio))]),
    })
}

const FIXED: [&str; 5] = ["r0", "gamma", "gamma_loss", "delta_res", "w_opt"];

fn table(name: &str, rows: &[SweepRow], fit: Option<LinearFit>) -> Table {
    let value_cols: Vec<String> = rows
        .first()
        .map(|r| r.values.iter().map(|(k, _)| k.clone()).collect())
        .unwrap_or_default();
    // diagnostics that repeat a value or fixed column are dropped
    let diag: BTreeSet<String> = rows
        .iter()
        .flat_map(|r| r.diagnostics.keys().cloned())
        .filter(|k| !value_cols.contains(k) && !FIXED.contains(&k.as_str()))
        .collect();
    let mut columns = value_cols.clone();
    columns.extend(FIXED.iter().map(|s| s.to_string()));
    columns.extend(diag.iter().cloned());
    let data = rows
        .iter()
        .map(|r| {
            let mut v: Vec<Option<f64>> = r.values.iter().map(|(_, x)| Some(*x)).collect();
            v.extend([
                Some(r.r0),
                Some(r.gamma),
                Some(r.gamma_loss),
                Some(r.delta_res),
                r.w_opt,
            ]);
            v.extend(diag.iter().map(|k| r.diagnostics.get(k).copied()));
            v
        })
        .collect();
    let best = rows.iter().max_by(|a, b| a.r0.total_cmp(&b.r0));
    let mut summary = format!("{name}: {} rows", rows.len());
    if let Some(b) = best {
        let at: Vec<String> = b.values.iter().map(|(k, v)| format!("{k} = {v}")).collect();
        summary.push_str(&format!(", best r0 = {:.6} at {}", b.r0, at.join(", ")));
    }
    if let Some(f) = fit {
        summary.push_str(&format!(", log-log slope {:.3}", f.slope));
    }
    Table {
        columns,
        rows: data,
        fit,
        extra_fits: Vec::new(),
        summary,
        json_rows: rows.iter().map(row_json).collect(),
    }
}

fn row_json(r: &SweepRow) -> Value {
    let values: BTreeMap<&str, f64> = r.values.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    json!({
        "values": values,
        "r0": r.r0,
        "gamma": r.gamma,
        "gamma_loss": r.gamma_loss,
        "delta_res": r.delta_res,
        "w_opt": r.w_opt,
        "diagnostics": r.diagnostics,
    })
}
