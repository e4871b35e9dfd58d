//! Figure-level studies: waist and spacing optimisation, aperture and
//! spacing sweeps, atom-number scaling, shift scans and position disorder.
//!
//! Every study is a pure function of its [`SweepSpec`]; rows are computed in
//! parallel and returned in grid order.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffraction::{first_shell, r0_infinite, Direction, OrderSet};
use crate::finite_theory::{
    r0_finite_theory, BzQuadrature, GaussianCollectiveMode, DEFAULT_BZ_RESOLUTION,
};
use crate::lattice::{build_patch, AtomArray, Lattice, LatticeKind, WAVENUMBER};
use crate::metrics::{
    InterfaceResult, Projection, Reflectometer, ReflectometerView, ResonanceWindow,
    ScatteringSettings,
};
use crate::optimize::{parabolic_vertex, try_golden_section_max};
use crate::target_mode::{assemble_mode, DEFAULT_RESOLUTION};
use crate::{Error, Result};

/// Search range of w/L_a.
pub const WAIST_RANGE: (f64, f64) = (0.08, 0.6);
pub const WAIST_TOLERANCE: f64 = 0.005;
/// Offset (in units of L_a) of the local-maximum certificate points.
pub const CERTIFICATE_STEP: f64 = 0.02;
pub const SPACING_TOLERANCE: f64 = 0.01;
/// Smallest N included in the scaling fit.
pub const SCALING_FIT_MIN_N: usize = 203;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Spacing,
    Na,
    NScaling,
    Waist,
    ShiftLateral,
    ShiftAxial,
    Disorder,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaistPolicy {
    /// Fixed w/L_a.
    Fixed(f64),
    Optimize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetuningPolicy {
    Fixed(f64),
    Resonant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub kind: StudyKind,
    /// Swept values: a/λ, NA, N, w/L_a, shift (λ) or δr/a depending on `kind`.
    pub grid: Vec<f64>,
    pub lattice: LatticeKind,
    pub spacing: f64,
    pub atoms: usize,
    pub na: f64,
    /// Extra apertures evaluated per spacing in a spacing sweep.
    pub apertures: Vec<f64>,
    pub waist: WaistPolicy,
    pub detuning: DetuningPolicy,
    pub seeds: Vec<u64>,
    pub spectral_resolution: usize,
    pub bz_resolution: usize,
    pub projection: Projection,
    /// Outer search range of a/λ in the scaling study.
    pub spacing_range: (f64, f64),
}

impl SweepSpec {
    pub fn new(kind: StudyKind, grid: Vec<f64>) -> Self {
        SweepSpec {
            kind,
            grid,
            lattice: LatticeKind::Triangular,
            spacing: 1.76,
            atoms: 149,
            na: 1.0,
            apertures: Vec::new(),
            waist: WaistPolicy::Optimize,
            detuning: DetuningPolicy::Resonant,
            seeds: (0..20).collect(),
            spectral_resolution: DEFAULT_RESOLUTION,
            bz_resolution: DEFAULT_BZ_RESOLUTION,
            projection: Projection::FilteredMirror,
            spacing_range: default_spacing_range(LatticeKind::Triangular),
        }
    }

    /// The shift-scan configuration N = 537, w/L_a = 0.25, a/λ = 1.76.
    pub fn shift_preset(kind: StudyKind, grid: Vec<f64>) -> Self {
        SweepSpec {
            atoms: 537,
            spacing: 1.76,
            waist: WaistPolicy::Fixed(0.25),
            ..SweepSpec::new(kind, grid)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::invalid("grid", "needs at least one value"));
        }
        if self.grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("grid", "values must be strictly increasing"));
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid", "values must be finite"));
        }
        if self.atoms == 0 {
            return Err(Error::invalid("atoms", "N must be at least 1"));
        }
        for na in std::iter::once(&self.na).chain(&self.apertures) {
            if !(*na > 0.0 && *na <= 1.0) {
                return Err(Error::invalid(
                    "na",
                    format!("must lie in (0, 1], got {na}"),
                ));
            }
        }
        if let WaistPolicy::Fixed(r) = self.waist {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::invalid(
                    "waist",
                    format!("w/L_a must be positive, got {r}"),
                ));
            }
        }
        let (lo, hi) = self.spacing_range;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::invalid("spacing_range", "needs 0 < lo < hi"));
        }
        match self.kind {
            StudyKind::Spacing => {
                let (wlo, whi) = self.lattice.single_shell_window();
                if let Some(a) = self.grid.iter().find(|a| **a <= wlo || **a >= whi) {
                    return Err(Error::invalid(
                        "grid",
                        format!("spacing {a} outside the single-shell window ({wlo:.4}, {whi:.4})"),
                    ));
                }
            }
            StudyKind::Na => {
                if let Some(na) = self.grid.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
                    return Err(Error::invalid("grid", format!("NA {na} outside (0, 1]")));
                }
            }
            StudyKind::NScaling => {
                if self.grid.iter().any(|n| *n < 1.0 || n.fract() != 0.0) {
                    return Err(Error::invalid(
                        "grid",
                        "atom numbers must be positive integers",
                    ));
                }
            }
            StudyKind::Waist => {
                if self.grid.iter().any(|w| *w <= 0.0) {
                    return Err(Error::invalid("grid", "w/L_a must be positive"));
                }
            }
            StudyKind::Disorder => {
                if self.grid.iter().any(|d| *d < 0.0) {
                    return Err(Error::invalid(
                        "grid",
                        "disorder strengths must be non-negative",
                    ));
                }
                if self.seeds.is_empty() {
                    return Err(Error::invalid("seeds", "disorder averaging needs seeds"));
                }
            }
            StudyKind::ShiftLateral | StudyKind::ShiftAxial => {}
        }
        Ok(())
    }

    pub fn lattice(&self) -> Result<Lattice> {
        Lattice::new(self.lattice, self.spacing)
    }

    pub fn settings(&self, na: f64) -> Result<ScatteringSettings> {
        let mut s = ScatteringSettings::new(self.spectral_resolution, na)?;
        s.projection = self.projection;
        Ok(s)
    }

    fn window(&self) -> ResonanceWindow {
        match self.detuning {
            DetuningPolicy::Resonant => ResonanceWindow::default(),
            DetuningPolicy::Fixed(d) => ResonanceWindow {
                half_width: 0.0,
                points: 3,
                tolerance: 0.0,
                center: Some(d),
            },
        }
    }
}

/// Interior of the single-shell window used as the default outer range when
/// optimising the spacing.
pub fn default_spacing_range(kind: LatticeKind) -> (f64, f64) {
    match kind {
        LatticeKind::Triangular => (1.2, 1.98),
        LatticeKind::Square => (1.05, 1.40),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    /// Swept parameters in column order.
    pub values: Vec<(String, f64)>,
    pub r0: f64,
    pub gamma: f64,
    pub gamma_loss: f64,
    pub delta_res: f64,
    /// Optimal w/L_a when the waist was optimised.
    pub w_opt: Option<f64>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl SweepRow {
    fn new(values: Vec<(&str, f64)>, res: &InterfaceResult, w_opt: Option<f64>) -> Self {
        SweepRow {
            values: values
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            r0: res.r0,
            gamma: res.gamma,
            gamma_loss: res.gamma_loss,
            delta_res: res.delta_res,
            w_opt,
            diagnostics: res.diagnostics.clone(),
        }
    }

    pub fn value(&self, key: &str) -> Option<f64> {
        self.values.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

/// Outcome of a waist optimisation.
#[derive(Clone, Debug, PartialEq)]
pub struct WaistOptimum {
    /// Optimal waist in units of λ.
    pub waist: f64,
    /// Optimal w/L_a.
    pub ratio: f64,
    pub result: InterfaceResult,
    /// r0 at w_opt ∓ 0.02 L_a.
    pub certificate: [f64; 2],
    pub at_boundary: bool,
}

impl WaistOptimum {
    pub fn is_local_max(&self) -> bool {
        self.certificate.iter().all(|c| *c <= self.result.r0 + 1e-9)
    }
}

/// Resonant efficiency for the target mode of waist `w` (in λ).
pub fn resonant_r0(
    view: &ReflectometerView<'_>,
    target: &OrderSet,
    w: f64,
    window: ResonanceWindow,
) -> Result<InterfaceResult> {
    let mode = assemble_mode(view.array().lattice(), target, w, Direction::Forward)?;
    view.find_resonance(&mode, window)
}

/// Golden-section search of w/L_a over [`WAIST_RANGE`], each evaluation at
/// its own resonance, followed by a ±0.02 L_a local-maximum certificate.
pub fn optimize_waist_with(
    view: &ReflectometerView<'_>,
    target: &OrderSet,
    window: ResonanceWindow,
) -> Result<WaistOptimum> {
    let l = view.array().linear_size();
    let eval = |ratio: f64| resonant_r0(view, target, ratio * l, window);
    let (ratio, _) = try_golden_section_max(
        |x| Ok(eval(x)?.r0),
        WAIST_RANGE.0,
        WAIST_RANGE.1,
        WAIST_TOLERANCE,
    )?;
    let mut result = eval(ratio)?;
    let certificate = [
        eval((ratio - CERTIFICATE_STEP).max(1e-3))?.r0,
        eval(ratio + CERTIFICATE_STEP)?.r0,
    ];
    let at_boundary = ratio - WAIST_RANGE.0 < 2.0 * WAIST_TOLERANCE
        || WAIST_RANGE.1 - ratio < 2.0 * WAIST_TOLERANCE;
    if at_boundary {
        log::warn!("optimal waist {ratio:.3} L_a sits at the edge of the search range");
    }
    let d = &mut result.diagnostics;
    d.insert("w_over_la".into(), ratio);
    d.insert("cert_minus".into(), certificate[0]);
    d.insert("cert_plus".into(), certificate[1]);
    Ok(WaistOptimum {
        waist: ratio * l,
        ratio,
        result,
        certificate,
        at_boundary,
    })
}

/// One-shot waist optimisation for a given array and aperture.
pub fn optimize_waist(
    array: &AtomArray,
    target: &OrderSet,
    settings: &ScatteringSettings,
) -> Result<WaistOptimum> {
    let meter = Reflectometer::new(array.clone(), settings.clone())?;
    optimize_waist_with(&meter.view(), target, ResonanceWindow::default())
}

/// Resonant scattering result under the sweep's waist policy.
fn scatter(
    view: &ReflectometerView<'_>,
    target: &OrderSet,
    spec: &SweepSpec,
) -> Result<(InterfaceResult, Option<f64>)> {
    match spec.waist {
        WaistPolicy::Optimize => {
            let opt = optimize_waist_with(view, target, spec.window())?;
            Ok((opt.result, Some(opt.ratio)))
        }
        WaistPolicy::Fixed(r) => Ok((
            resonant_r0(view, target, r * view.array().linear_size(), spec.window())?,
            None,
        )),
    }
}

fn add_theory(
    row: &mut SweepRow,
    array: &AtomArray,
    target: &OrderSet,
    quad: &BzQuadrature,
    ratio: f64,
) -> Result<()> {
    let lattice = *array.lattice();
    let inf = r0_infinite(&lattice, target)?;
    let mode = GaussianCollectiveMode::new(array, ratio * array.linear_size())?;
    let th = r0_finite_theory(&mode, &lattice, target, quad, array)?;
    let d = &mut row.diagnostics;
    d.insert("r0_infinite".into(), inf.r0);
    d.insert("r0_theory".into(), th.r0);
    d.insert("theory_gap".into(), th.r0 - row.r0);
    d.insert("delta_theory".into(), th.delta_res);
    d.insert(
        "gamma_prime0".into(),
        th.diagnostic("gamma_prime0").unwrap_or(f64::NAN),
    );
    d.insert("eta".into(), mode.eta());
    d.insert("eta_discrete".into(), mode.eta_discrete());
    Ok(())
}

fn waist_ratio(spec: &SweepSpec, w_opt: Option<f64>) -> f64 {
    match (spec.waist, w_opt) {
        (_, Some(r)) => r,
        (WaistPolicy::Fixed(r), None) => r,
        (WaistPolicy::Optimize, None) => 0.25,
    }
}

/// Per spacing: infinite theory, finite theory (at the scattering waist) and
/// resonant scattering for `na` and each extra aperture.
pub fn sweep_spacing(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut apertures = vec![spec.na];
    apertures.extend(spec.apertures.iter().copied().filter(|na| *na != spec.na));
    let base = spec.settings(spec.na)?;
    let rows: Result<Vec<Vec<SweepRow>>> = spec
        .grid
        .par_iter()
        .map(|&a| {
            let lattice = Lattice::new(spec.lattice, a)?;
            let array = build_patch(lattice, spec.atoms)?;
            let target = first_shell(&lattice);
            let quad = BzQuadrature::new(&lattice, spec.bz_resolution)?;
            let meter = Reflectometer::new(array.clone(), base.clone())?;
            let mut out = Vec::new();
            for &na in &apertures {
                let view = meter.with_settings(base.with_na(na)?);
                let (res, w_opt) = scatter(&view, &target, spec)?;
                let mut row = SweepRow::new(vec![("a", a), ("na", na)], &res, w_opt);
                add_theory(&mut row, &array, &target, &quad, waist_ratio(spec, w_opt))?;
                out.push(row);
            }
            Ok(out)
        })
        .collect();
    Ok(rows?.into_iter().flatten().collect())
}

/// Resonant scattering at fixed spacing for each aperture in the grid.
pub fn sweep_na(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let lattice = spec.lattice()?;
    let array = build_patch(lattice, spec.atoms)?;
    let target = first_shell(&lattice);
    let base = spec.settings(spec.grid[0])?;
    let meter = Reflectometer::new(array, base.clone())?;
    spec.grid
        .par_iter()
        .map(|&na| {
            let view = meter.with_settings(base.with_na(na)?);
            let (res, w_opt) = scatter(&view, &target, spec)?;
            Ok(SweepRow::new(
                vec![("a", spec.spacing), ("na", na)],
                &res,
                w_opt,
            ))
        })
        .collect()
}

/// r0 as a function of w/L_a at fixed spacing.
pub fn sweep_waist(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let lattice = spec.lattice()?;
    let array = build_patch(lattice, spec.atoms)?;
    let target = first_shell(&lattice);
    let meter = Reflectometer::new(array, spec.settings(spec.na)?)?;
    let view = meter.view();
    let l = view.array().linear_size();
    spec.grid
        .par_iter()
        .map(|&ratio| {
            let res = resonant_r0(&view, &target, ratio * l, spec.window())?;
            Ok(SweepRow::new(vec![("w_over_la", ratio)], &res, None))
        })
        .collect()
}

/// Least-squares line y = slope·x + intercept.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs[..n].iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs[..n]
        .iter()
        .zip(&ys[..n])
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let slope = sxy / sxx;
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        points: n,
    })
}

/// Fit of log y against log x over the pairs with x, y > 0.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .unzip();
    linear_fit(&lx, &ly)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingResult {
    pub rows: Vec<SweepRow>,
    /// log(1 − r0) against log N over N ≥ [`SCALING_FIT_MIN_N`].
    pub fit: Option<LinearFit>,
}

/// Jointly optimised spacing and waist for one atom number.
pub fn optimize_spacing_and_waist(spec: &SweepSpec, atoms: usize) -> Result<(f64, WaistOptimum)> {
    let settings = spec.settings(spec.na)?;
    let window = spec.window();
    let run = |a: f64| -> Result<WaistOptimum> {
        let lattice = Lattice::new(spec.lattice, a)?;
        let array = build_patch(lattice, atoms)?;
        let meter = Reflectometer::new(array, settings.clone())?;
        optimize_waist_with(&meter.view(), &first_shell(&lattice), window)
    };
    let (lo, hi) = spec.spacing_range;
    let (a, _) = try_golden_section_max(|a| Ok(run(a)?.result.r0), lo, hi, SPACING_TOLERANCE)?;
    Ok((a, run(a)?))
}

pub fn scale_n(spec: &SweepSpec) -> Result<ScalingResult> {
    spec.validate()?;
    let rows: Result<Vec<SweepRow>> = spec
        .grid
        .par_iter()
        .map(|&n| {
            let atoms = n as usize;
            let (a, opt) = optimize_spacing_and_waist(spec, atoms)?;
            let mut row = SweepRow::new(vec![("atoms", n)], &opt.result, Some(opt.ratio));
            row.diagnostics.insert("a_opt".into(), a);
            row.diagnostics
                .insert("inefficiency".into(), 1.0 - opt.result.r0);
            Ok(row)
        })
        .collect();
    let rows = rows?;
    let (ns, loss): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| {
            let n = r.value("atoms")?;
            (n >= SCALING_FIT_MIN_N as f64).then_some((n, 1.0 - r.r0))
        })
        .unzip();
    Ok(ScalingResult {
        fit: fit_loglog(&ns, &loss),
        rows,
    })
}

/// Axial beating period 2π/(k − k_z) between the normal beam and the first
/// shell.
pub fn beating_period(lattice: &Lattice) -> Result<f64> {
    let shell = first_shell(lattice);
    let o = shell
        .iter()
        .find(|o| o.m != (0, 0))
        .ok_or_else(|| Error::invalid("lattice", "first shell is not radiative"))?;
    Ok(2.0 * std::f64::consts::PI / (WAVENUMBER - o.kz()))
}

/// Resonant r0 while the array is rigidly shifted along x (lateral) or z
/// (axial) relative to the fixed target mode. Grid values are in units of λ.
pub fn scan_shift(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let unit = match spec.kind {
        StudyKind::ShiftLateral => Vector3::x(),
        StudyKind::ShiftAxial => Vector3::z(),
        _ => {
            return Err(Error::invalid(
                "kind",
                "scan_shift needs a lateral or axial study",
            ))
        }
    };
    let lattice = spec.lattice()?;
    let array = build_patch(lattice, spec.atoms)?;
    let target = first_shell(&lattice);
    let meter = Reflectometer::new(array, spec.settings(spec.na)?)?;
    let ratio = waist_ratio(spec, None);
    let mode = assemble_mode(
        &lattice,
        &target,
        ratio * meter.array().linear_size(),
        Direction::Forward,
    )?;
    let scale = match spec.kind {
        StudyKind::ShiftLateral => lattice.spacing(),
        _ => beating_period(&lattice)?,
    };
    spec.grid
        .par_iter()
        .map(|&d| {
            let view = meter.view().translated(unit * d);
            let res = view.find_resonance(&mode, spec.window())?;
            Ok(SweepRow::new(
                vec![("shift", d), ("shift_scaled", d / scale)],
                &res,
                None,
            ))
        })
        .collect()
}

/// Positions of the local maxima of a sampled curve whose prominence (height
/// above the higher of the two bases) reaches `min_prominence`, refined by a
/// parabola through each peak and its neighbours. A maximum at the first
/// sample is kept as is when `left_edge_is_symmetric` (the curve is even
/// about it).
pub fn find_peaks(
    xs: &[f64],
    ys: &[f64],
    min_prominence: f64,
    left_edge_is_symmetric: bool,
) -> Vec<f64> {
    let n = xs.len().min(ys.len());
    let ys = &ys[..n];
    // lowest point between i and the nearest higher sample on one side
    let base = |i: usize, step: isize| -> Option<f64> {
        let mut j = i as isize;
        let mut low = ys[i];
        loop {
            j += step;
            if j < 0 || j >= n as isize {
                return if step < 0 { None } else { Some(low) };
            }
            if ys[j as usize] > ys[i] {
                return Some(low);
            }
            low = low.min(ys[j as usize]);
        }
    };
    let mut peaks = Vec::new();
    if n >= 2 && left_edge_is_symmetric && ys[0] >= ys[1] {
        let right = base(0, 1).unwrap_or(ys[0]);
        if ys[0] - right >= min_prominence {
            peaks.push(xs[0]);
        }
    }
    for i in 1..n.saturating_sub(1) {
        if !(ys[i] > ys[i - 1] && ys[i] >= ys[i + 1]) {
            continue;
        }
        let right = base(i, 1).unwrap_or(ys[i]);
        // running off the left edge of an even curve mirrors the right side
        let left = match base(i, -1) {
            Some(l) => l,
            None if left_edge_is_symmetric => {
                right.min(ys[..i].iter().cloned().fold(f64::INFINITY, f64::min))
            }
            None => ys[..i].iter().cloned().fold(f64::INFINITY, f64::min),
        };
        if ys[i] - left.max(right) >= min_prominence {
            let x = parabolic_vertex([xs[i - 1], xs[i], xs[i + 1]], [ys[i - 1], ys[i], ys[i + 1]])
                .unwrap_or(xs[i]);
            peaks.push(x);
        }
    }
    peaks
}

/// Mean spacing between consecutive peaks with a prominence of at least 5%
/// of the curve's range, so shallow side lobes are ignored.
pub fn extract_period(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let p = find_peaks(xs, ys, 0.05 * (hi - lo), true);
    if p.len() < 2 {
        return None;
    }
    Some((p[p.len() - 1] - p[0]) / (p.len() - 1) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DisorderResult {
    /// One row per δr/a with the seed mean of r0 and its standard error.
    pub rows: Vec<SweepRow>,
    /// log Δ(1 − r0) against log(δr/a), excluding δr = 0.
    pub fit: Option<LinearFit>,
    /// log Δγ_loss against log(δr/a); unlike Δ(1 − r0) it does not saturate
    /// once the loss rate becomes comparable to Γ.
    pub loss_rate_fit: Option<LinearFit>,
    /// Clean-array efficiency used as the reference.
    pub clean_r0: f64,
}

/// Seed-averaged resonant r0 under Gaussian position disorder of standard
/// deviation δr per Cartesian component, at fixed waist; the detuning is
/// re-optimised for every realisation.
pub fn disorder_study(spec: &SweepSpec) -> Result<DisorderResult> {
    spec.validate()?;
    let lattice = spec.lattice()?;
    let array = build_patch(lattice, spec.atoms)?;
    let target = first_shell(&lattice);
    let settings = spec.settings(spec.na)?;
    let clean_meter = Reflectometer::new(array.clone(), settings.clone())?;
    let w = match spec.waist {
        WaistPolicy::Fixed(r) => r * array.linear_size(),
        WaistPolicy::Optimize => {
            optimize_waist_with(&clean_meter.view(), &target, spec.window())?.waist
        }
    };
    let mode = assemble_mode(&lattice, &target, w, Direction::Forward)?;
    let clean = clean_meter.find_resonance(&mode, spec.window())?;
    let jobs: Vec<(usize, u64)> = (0..spec.grid.len())
        .flat_map(|i| spec.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let samples: Result<Vec<(usize, f64, f64)>> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let dr = spec.grid[i];
            if dr == 0.0 {
                return Ok((i, clean.r0, clean.gamma_loss));
            }
            let disordered = array.disordered(dr * lattice.spacing(), seed)?;
            let meter = Reflectometer::new(disordered, settings.clone())?;
            let res = meter.find_resonance(&mode, spec.window())?;
            Ok((i, res.r0, res.gamma_loss))
        })
        .collect();
    let samples = samples?;
    let mut rows = Vec::new();
    let mut xs = Vec::new();
    let mut excess = Vec::new();
    let mut excess_loss = Vec::new();
    for (i, &dr) in spec.grid.iter().enumerate() {
        let v: Vec<f64> = samples.iter().filter(|s| s.0 == i).map(|s| s.1).collect();
        let loss = samples
            .iter()
            .filter(|s| s.0 == i)
            .map(|s| s.2)
            .sum::<f64>()
            / v.len() as f64;
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 {
            v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let mut res = InterfaceResult::from_rates(
            f64::NAN,
            f64::NAN,
            f64::NAN,
            crate::ResultSource::Scattering,
        );
        res.r0 = mean;
        res.gamma_loss = loss;
        let mut row = SweepRow::new(vec![("disorder", dr)], &res, None);
        row.diagnostics.insert("std_error".into(), (var / n).sqrt());
        row.diagnostics.insert("seeds".into(), n);
        row.diagnostics
            .insert("excess_inefficiency".into(), clean.r0 - mean);
        row.diagnostics
            .insert("excess_loss_rate".into(), loss - clean.gamma_loss);
        row.diagnostics.insert("waist".into(), w);
        rows.push(row);
        if dr > 0.0 {
            xs.push(dr);
            excess.push(clean.r0 - mean);
            excess_loss.push(loss - clean.gamma_loss);
        }
    }
    Ok(DisorderResult {
        fit: fit_loglog(&xs, &excess),
        loss_rate_fit: fit_loglog(&xs, &excess_loss),
        rows,
        clean_r0: clean.r0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn spec_validation() {
        let mut s = SweepSpec::new(StudyKind::Spacing, vec![1.5, 1.7]);
        assert!(s.validate().is_ok());
        s.grid = vec![1.7, 1.5];
        assert!(s.validate().is_err());
        s.grid = vec![1.5, 2.5];
        assert!(s.validate().is_err());
        s.grid = vec![1.5];
        s.na = 1.2;
        assert!(s.validate().is_err());
        s.na = 1.0;
        s.atoms = 0;
        assert!(s.validate().is_err());
    }

    proptest! {
        #[test]
        fn loglog_recovers_power_law(p in -3.0f64..3.0, c in 0.1f64..10.0) {
            let xs: Vec<f64> = (1..8).map(|i| i as f64 * 0.7).collect();
            let ys: Vec<f64> = xs.iter().map(|x| c * x.powf(p)).collect();
            let f = fit_loglog(&xs, &ys).unwrap();
            prop_assert!((f.slope - p).abs() < 1e-10);
            prop_assert!((f.intercept - c.ln()).abs() < 1e-10);
        }

        #[test]
        fn period_of_cosine(period in 0.5f64..3.0, phase_pts in 150usize..400) {
            let xs: Vec<f64> = (0..phase_pts).map(|i| 3.2 * period * i as f64 / (phase_pts - 1) as f64).collect();
            let ys: Vec<f64> = xs.iter().map(|x| (2.0 * std::f64::consts::PI * x / period).cos()).collect();
            let p = extract_period(&xs, &ys).unwrap();
            prop_assert!((p / period - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn side_lobes_do_not_halve_the_period() {
        let p = 1.76;
        let xs: Vec<f64> = (0..241).map(|i| 3.0 * p * i as f64 / 240.0).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| {
                let t = std::f64::consts::PI * x / p;
                t.cos().powi(8) + 0.01 * (4.0 * t).cos()
            })
            .collect();
        assert!(find_peaks(&xs, &ys, 0.0, true).len() > 4);
        assert_abs_diff_eq!(extract_period(&xs, &ys).unwrap(), p, epsilon = 1e-3);
    }

    #[test]
    fn decaying_beats_keep_their_peaks() {
        let xs: Vec<f64> = (0..301).map(|i| 3.0 * i as f64 / 300.0).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| (-x).exp() * (1.0 + (2.0 * std::f64::consts::PI * x).cos()))
            .collect();
        let p = find_peaks(&xs, &ys, 0.02, true);
        assert_eq!(p.len(), 3, "{p:?}");
    }

    #[test]
    fn beating_period_of_triangular_lattice() {
        let lat = Lattice::triangular(1.76).unwrap();
        let s = 2.0 / (3f64.sqrt() * 1.76);
        assert_abs_diff_eq!(
            beating_period(&lat).unwrap(),
            1.0 / (1.0 - (1.0 - s * s).sqrt()),
            epsilon = 1e-12
        );
    }

    #[test]
    fn waist_optimum_is_certified() {
        let lat = Lattice::triangular(1.76).unwrap();
        let arr = build_patch(lat, 61).unwrap();
        let s = ScatteringSettings::new(128, 1.0).unwrap();
        let opt = optimize_waist(&arr, &first_shell(&lat), &s).unwrap();
        assert!(
            opt.is_local_max(),
            "{:?} vs {}",
            opt.certificate,
            opt.result.r0
        );
        assert!(opt.ratio > WAIST_RANGE.0 && opt.ratio < WAIST_RANGE.1);
    }

    #[test]
    fn shift_scan_rejects_other_kinds() {
        let s = SweepSpec::shift_preset(StudyKind::Spacing, vec![0.0, 0.1]);
        assert!(scan_shift(&s).is_err());
    }
}
