//! Interface efficiency from theory and from scattering.
//!
//! The scattering efficiency is the magnitude of the reflection amplitude
//! into the mirror image of the incident target mode,
//! ρ = ⟨mirror, scattered⟩ with both spectra flux-normalised. On resonance
//! the single-mode model gives |ρ| = Γ/(Γ + γ_loss), so this is directly
//! comparable with the theory values.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diffraction::Direction;
use crate::dipole::{
    self, CoupledDipoleSystem, InteractionMatrix, PoleExpansion, Resolvent, COUPLING,
};
use crate::finite_theory;
use crate::lattice::{AtomArray, WAVENUMBER};
use crate::optimize::golden_section_max;
use crate::target_mode::{AngularSpectrum, SpectralGrid, TargetMode, DEFAULT_RESOLUTION};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultSource {
    InfiniteTheory,
    FiniteTheory,
    Scattering,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InterfaceResult {
    /// Coupling rate to the target mode.
    pub gamma: f64,
    /// Rate into all other channels.
    pub gamma_loss: f64,
    pub r0: f64,
    /// Detuning at which `r0` is reached (or the collective shift for theory).
    pub delta_res: f64,
    pub source: ResultSource,
    pub diagnostics: BTreeMap<String, f64>,
}

impl InterfaceResult {
    pub fn from_rates(gamma: f64, gamma_loss: f64, delta_res: f64, source: ResultSource) -> Self {
        let total = gamma + gamma_loss;
        let r0 = if total > 0.0 { gamma / total } else { 0.0 };
        InterfaceResult {
            gamma,
            gamma_loss,
            r0,
            delta_res,
            source,
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn diagnostic(&self, key: &str) -> Option<f64> {
        self.diagnostics.get(key).copied()
    }
}

/// Flux inner product ⟨a, b⟩ = ∫_{|k_⊥|<k} d²k_⊥ (k_z/k) a*·b.
pub fn flux_inner(a: &AngularSpectrum, b: &AngularSpectrum) -> Result<Complex64> {
    a.inner(b)
}

/// Steady-state reflection amplitude of the one-sided driven single-mode
/// model, ρ(δ) = −(Γ/2)/(−i(δ − Δ) + (Γ + γ_loss)/2).
pub fn oracle_1d(gamma: f64, gamma_loss: f64, shift: f64, detuning: f64) -> Complex64 {
    let den = Complex64::new((gamma + gamma_loss) / 2.0, -(detuning - shift));
    -(gamma / 2.0) / den
}

/// Which mirror mode the reflected light is projected on when an aperture
/// is present.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// Aperture-filtered and renormalised mirror mode.
    #[default]
    FilteredMirror,
    /// Unfiltered mirror mode; the aperture then only removes scattered light.
    OriginalMirror,
}

/// Grid, aperture and projection choice shared by scattering runs.
#[derive(Clone, Debug)]
pub struct ScatteringSettings {
    pub grid: Arc<SpectralGrid>,
    pub na: f64,
    pub projection: Projection,
}

impl ScatteringSettings {
    pub fn new(resolution: usize, na: f64) -> Result<Self> {
        if !(na > 0.0 && na <= 1.0) {
            return Err(Error::invalid(
                "na",
                format!("numerical aperture must lie in (0, 1], got {na}"),
            ));
        }
        Ok(ScatteringSettings {
            grid: SpectralGrid::new(resolution)?,
            na,
            projection: Projection::FilteredMirror,
        })
    }

    pub fn with_na(&self, na: f64) -> Result<Self> {
        if !(na > 0.0 && na <= 1.0) {
            return Err(Error::invalid(
                "na",
                format!("numerical aperture must lie in (0, 1], got {na}"),
            ));
        }
        Ok(ScatteringSettings {
            grid: self.grid.clone(),
            na,
            projection: self.projection,
        })
    }

    pub fn default_grid(na: f64) -> Result<Self> {
        Self::new(DEFAULT_RESOLUTION, na)
    }
}

/// Incident and projection spectra of a mode under the given settings.
pub fn prepared_spectra(
    mode: &TargetMode,
    settings: &ScatteringSettings,
) -> Result<(AngularSpectrum, AngularSpectrum)> {
    if mode.direction() != Direction::Forward {
        return Err(Error::invalid(
            "mode",
            "the incident mode must propagate towards +z",
        ));
    }
    let incident = mode
        .spectrum(&settings.grid)?
        .na_filter(settings.na, true)?;
    let mirror = mode.mirror().spectrum(&settings.grid)?;
    let mirror = match settings.projection {
        Projection::FilteredMirror => mirror.na_filter(settings.na, true)?,
        Projection::OriginalMirror => mirror.na_filter(settings.na, false)?,
    };
    Ok((incident, mirror))
}

/// Drive e_d†·E_inc(r_n) and projection weights of every atom.
///
/// `probe_n` is the overlap of the mirror mode with the backward light
/// radiated by a unit dipole at r_n, so ρ = Σ_n probe_n σ_n.
#[derive(Clone, Debug)]
pub struct ModeCoupling {
    pub drive: Vec<Complex64>,
    pub probe: Vec<Complex64>,
}

impl ModeCoupling {
    pub fn reflection(&self, sigma: &[Complex64]) -> Complex64 {
        self.probe
            .iter()
            .zip(sigma.iter())
            .map(|(p, s)| p * s)
            .sum()
    }
}

fn active_nodes(spec: &AngularSpectrum) -> Vec<(f64, f64, f64, Complex64)> {
    let proj = spec.dipole_projection();
    let max = proj.iter().map(|p| p.norm()).fold(0.0, f64::max);
    // amplitudes this far down change ρ by far less than the grid error
    let floor = 1e-12 * max;
    spec.grid()
        .nodes()
        .iter()
        .zip(proj)
        .filter(|(_, p)| p.norm() > floor)
        .map(|(n, p)| (n.kx, n.ky, n.kz, p * n.weight))
        .collect()
}

pub fn mode_coupling(
    positions: &[Vector3<f64>],
    incident: &AngularSpectrum,
    mirror: &AngularSpectrum,
) -> ModeCoupling {
    let inc = active_nodes(incident);
    let mir = active_nodes(mirror);
    let pre = Complex64::new(0.0, COUPLING / (2.0 * WAVENUMBER));
    let drive = positions
        .iter()
        .map(|r| {
            inc.iter()
                .map(|(kx, ky, kz, p)| {
                    p * Complex64::from_polar(1.0, kx * r.x + ky * r.y + kz * r.z)
                })
                .sum()
        })
        .collect();
    let probe = positions
        .iter()
        .map(|r| {
            let s: Complex64 = mir
                .iter()
                .map(|(kx, ky, kz, p)| {
                    p.conj() * Complex64::from_polar(1.0, -(kx * r.x + ky * r.y) + kz * r.z)
                })
                .sum();
            pre * s
        })
        .collect();
    ModeCoupling { drive, probe }
}

/// Reference pipeline at a fixed detuning: filtered incident spectrum,
/// drive synthesised from it, direct solve, backward scattered spectrum
/// through the aperture, and projection on the mirror mode.
pub fn reflectivity(
    array: &AtomArray,
    mode: &TargetMode,
    detuning: f64,
    settings: &ScatteringSettings,
) -> Result<InterfaceResult> {
    let (incident, mirror) = prepared_spectra(mode, settings)?;
    let positions = array.positions();
    let drive: Vec<Complex64> = incident
        .field_at(positions)
        .iter()
        .map(|e| crate::lattice::dipole_orientation().dotc(e))
        .collect();
    let interaction = InteractionMatrix::new(positions)?;
    let state = dipole::solve_steady_state(&CoupledDipoleSystem {
        interaction: &interaction,
        detuning,
        drive: &drive,
    })?;
    let scattered =
        dipole::scattered_spectrum(&state.sigma, positions, Direction::Backward, &settings.grid)
            .na_filter(settings.na, false)?;
    let rho = flux_inner(&mirror, &scattered)?;
    let mut res = InterfaceResult {
        gamma: f64::NAN,
        gamma_loss: f64::NAN,
        r0: rho.norm(),
        delta_res: detuning,
        source: ResultSource::Scattering,
        diagnostics: BTreeMap::new(),
    };
    res.diagnostics.insert("residual".into(), state.residual);
    res.diagnostics
        .insert("grid".into(), settings.grid.resolution() as f64);
    res.diagnostics.insert("na".into(), settings.na);
    res.diagnostics.insert("waist".into(), mode.waist());
    res.diagnostics.insert("rho_re".into(), rho.re);
    res.diagnostics.insert("rho_im".into(), rho.im);
    Ok(res)
}

/// Default coarse-scan settings of the resonance search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResonanceWindow {
    /// Half-width of the scanned interval around its centre.
    pub half_width: f64,
    pub points: usize,
    /// Target bracket width of the refinement.
    pub tolerance: f64,
    /// Scan centre; `None` uses the collective shift of the Gaussian mode.
    pub center: Option<f64>,
}

impl Default for ResonanceWindow {
    fn default() -> Self {
        ResonanceWindow {
            half_width: 5.0,
            points: 41,
            tolerance: 1e-4,
            center: None,
        }
    }
}

/// One array geometry with its interaction matrix factorised once, so that
/// many modes and detunings can be evaluated cheaply.
pub struct Reflectometer {
    array: AtomArray,
    settings: ScatteringSettings,
    interaction: InteractionMatrix,
    resolvent: Resolvent,
}

impl Reflectometer {
    pub fn new(array: AtomArray, settings: ScatteringSettings) -> Result<Self> {
        let interaction = InteractionMatrix::new(array.positions())?;
        let resolvent = Resolvent::new(&interaction)?;
        Ok(Reflectometer {
            array,
            settings,
            interaction,
            resolvent,
        })
    }

    pub fn array(&self) -> &AtomArray {
        &self.array
    }

    pub fn settings(&self) -> &ScatteringSettings {
        &self.settings
    }

    pub fn interaction(&self) -> &InteractionMatrix {
        &self.interaction
    }

    /// Same geometry and factorisation under a different aperture.
    pub fn with_settings(&self, settings: ScatteringSettings) -> ReflectometerView<'_> {
        ReflectometerView {
            base: self,
            settings,
            offset: Vector3::zeros(),
        }
    }

    pub fn coupling(&self, mode: &TargetMode) -> Result<ModeCoupling> {
        self.view().coupling(mode)
    }

    pub fn find_resonance(
        &self,
        mode: &TargetMode,
        window: ResonanceWindow,
    ) -> Result<InterfaceResult> {
        self.view().find_resonance(mode, window)
    }

    pub fn reflection_at(&self, mode: &TargetMode, detuning: f64) -> Result<(Complex64, f64)> {
        self.view().reflection_at(mode, detuning)
    }

    pub fn view(&self) -> ReflectometerView<'_> {
        self.with_settings(self.settings.clone())
    }
}

/// A [`Reflectometer`] seen through a particular set of scattering settings,
/// optionally with the whole array rigidly translated. Translations leave the
/// interaction matrix unchanged, so they reuse the same factorisation.
pub struct ReflectometerView<'a> {
    base: &'a Reflectometer,
    settings: ScatteringSettings,
    offset: Vector3<f64>,
}

impl ReflectometerView<'_> {
    pub fn translated(mut self, d: Vector3<f64>) -> Self {
        self.offset = d;
        self
    }

    pub fn array(&self) -> &AtomArray {
        &self.base.array
    }

    pub fn settings(&self) -> &ScatteringSettings {
        &self.settings
    }

    fn positions(&self) -> Vec<Vector3<f64>> {
        self.base
            .array
            .positions()
            .iter()
            .map(|r| r + self.offset)
            .collect()
    }

    pub fn coupling(&self, mode: &TargetMode) -> Result<ModeCoupling> {
        let (incident, mirror) = prepared_spectra(mode, &self.settings)?;
        Ok(mode_coupling(&self.positions(), &incident, &mirror))
    }

    pub fn expansion(&self, coupling: &ModeCoupling) -> PoleExpansion {
        self.base
            .resolvent
            .expansion(&coupling.probe, &coupling.drive)
    }

    /// Reflection amplitude at one detuning from a direct solve, with the
    /// solver residual.
    pub fn reflection_at(&self, mode: &TargetMode, detuning: f64) -> Result<(Complex64, f64)> {
        let c = self.coupling(mode)?;
        self.solve_with(&c, detuning)
    }

    fn solve_with(&self, c: &ModeCoupling, detuning: f64) -> Result<(Complex64, f64)> {
        let state = dipole::solve_steady_state(&CoupledDipoleSystem {
            interaction: &self.base.interaction,
            detuning,
            drive: &c.drive,
        })?;
        Ok((c.reflection(&state.sigma), state.residual))
    }

    /// Scan centre: collective shift of the Gaussian mode with the mode's
    /// waist, taken over the actual atom positions.
    fn scan_center(&self, mode: &TargetMode) -> f64 {
        if self.base.array.is_empty() {
            return 0.0;
        }
        finite_theory::d_matrix_00_for(&self.base.interaction, &self.positions(), mode.waist()).im
    }

    /// Maximises |ρ(δ)|: coarse scan, golden-section refinement on the pole
    /// expansion, then a direct solve at the optimum.
    pub fn find_resonance(
        &self,
        mode: &TargetMode,
        window: ResonanceWindow,
    ) -> Result<InterfaceResult> {
        let coupling = self.coupling(mode)?;
        let poles = self.expansion(&coupling);
        let center = window.center.unwrap_or_else(|| self.scan_center(mode));
        let n = window.points.max(3);
        let lo = center - window.half_width;
        let step = 2.0 * window.half_width / (n - 1) as f64;
        let grid: Vec<f64> = (0..n).map(|i| lo + i as f64 * step).collect();
        let vals: Vec<f64> = grid.iter().map(|&d| poles.eval(d).norm()).collect();
        let best = vals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let on_edge = best == 0 || best == n - 1;
        if on_edge && !self.base.array.is_empty() {
            log::warn!(
                "reflectivity maximum at the edge of the detuning window [{lo}, {}]",
                lo + 2.0 * window.half_width
            );
        }
        let a = grid[best.saturating_sub(1)];
        let b = grid[(best + 1).min(n - 1)];
        let (delta, rho_eig) = golden_section_max(|d| poles.eval(d).norm(), a, b, window.tolerance);
        let (rho, residual) = self.solve_with(&coupling, delta)?;
        let r0 = rho.norm();
        let width = half_max_width(&poles, delta, rho_eig, window.half_width.max(1.0) * 4.0);
        let mut res = InterfaceResult {
            gamma: r0 * width,
            gamma_loss: (1.0 - r0) * width,
            r0,
            delta_res: delta,
            source: ResultSource::Scattering,
            diagnostics: BTreeMap::new(),
        };
        let d = &mut res.diagnostics;
        d.insert("residual".into(), residual);
        d.insert("pole_mismatch".into(), (rho_eig - r0).abs());
        d.insert("linewidth".into(), width);
        d.insert("scan_center".into(), center);
        d.insert("window_edge".into(), if on_edge { 1.0 } else { 0.0 });
        d.insert("grid".into(), self.settings.grid.resolution() as f64);
        d.insert("na".into(), self.settings.na);
        d.insert("waist".into(), mode.waist());
        d.insert("atoms".into(), self.base.array.len() as f64);
        Ok(res)
    }
}

/// Full width of |ρ(δ)|² at half its peak value around `peak`.
fn half_max_width(p: &PoleExpansion, peak: f64, peak_val: f64, reach: f64) -> f64 {
    let target = peak_val / 2f64.sqrt();
    if !(target > 0.0) {
        return f64::NAN;
    }
    let edge = |sign: f64| -> Option<f64> {
        let mut inner = peak;
        let mut step = 1e-3;
        let mut outer = peak + sign * step;
        while p.eval(outer).norm() > target {
            inner = outer;
            step *= 1.5;
            outer = peak + sign * step;
            if step > reach {
                return None;
            }
        }
        for _ in 0..60 {
            let mid = 0.5 * (inner + outer);
            if p.eval(mid).norm() > target {
                inner = mid;
            } else {
                outer = mid;
            }
        }
        Some(0.5 * (inner + outer))
    };
    match (edge(1.0), edge(-1.0)) {
        (Some(hi), Some(lo)) => hi - lo,
        _ => f64::NAN,
    }
}

/// Resonant reflectivity of `mode` off `array` (one-shot convenience).
pub fn find_resonance(
    array: &AtomArray,
    mode: &TargetMode,
    settings: &ScatteringSettings,
    window: ResonanceWindow,
) -> Result<InterfaceResult> {
    Reflectometer::new(array.clone(), settings.clone())?.find_resonance(mode, window)
}
