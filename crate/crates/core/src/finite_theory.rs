//! Finite-array theory built on a Gaussian-weighted collective dipole.
//!
//! The collective dipole P ∝ Σ_n u(r_n) σ_n with a circular Gaussian
//! u(r) = √(2/πw²) e^{−r²/w²} decays into the target orders at ηΓ_R and into
//! everything at Γ′₀, where the rates are Brillouin-zone averages of the
//! infinite-lattice Γ_m(k_⊥) weighted by the lattice Fourier transform
//! ũ(k_⊥) = A_cell Σ_n u(r_n) e^{−ik_⊥·r_n}.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::diffraction::{enumeration_bound, gamma_of, DiffractionOrder, OrderSet};
use crate::dipole::InteractionMatrix;
use crate::lattice::{AtomArray, Lattice, WAVENUMBER};
use crate::metrics::{InterfaceResult, ResultSource};
use crate::{Error, Result};

pub const DEFAULT_BZ_RESOLUTION: usize = 201;
/// Sub-cells per axis used where some order is close to grazing.
const REFINE: usize = 4;
/// Cells are refined when some order has k_z below this fraction of k.
const RIM_KZ: f64 = 0.05;

/// u(r) = √(2/πw²) e^{−r²/w²}, normalised to ∫|u|² d²r = 1.
pub fn gaussian_profile(w: f64, r: Vector2<f64>) -> f64 {
    (2.0 / (PI * w * w)).sqrt() * (-r.norm_squared() / (w * w)).exp()
}

/// η = erf²(L_a/(√2 w)), the weight of |u|² inside a square of side L_a.
pub fn overlap_eta(linear_size: f64, w: f64) -> f64 {
    libm::erf(linear_size / (2f64.sqrt() * w)).powi(2)
}

/// Gaussian collective mode of a finite patch, evaluated on its ideal sites.
#[derive(Clone, Debug)]
pub struct GaussianCollectiveMode {
    waist: f64,
    lattice: Lattice,
    sites: Vec<(i32, i32)>,
    values: Vec<f64>,
    eta: f64,
    eta_discrete: f64,
    linear_size: f64,
}

impl GaussianCollectiveMode {
    pub fn new(array: &AtomArray, waist: f64) -> Result<Self> {
        if !(waist > 0.0 && waist.is_finite()) {
            return Err(Error::invalid(
                "waist",
                format!("must be positive and finite, got {waist}"),
            ));
        }
        if array.is_empty() {
            return Err(Error::invalid(
                "array",
                "the collective mode needs at least one atom",
            ));
        }
        let lattice = *array.lattice();
        let sites = array.sites().to_vec();
        let values: Vec<f64> = sites
            .iter()
            .map(|&n| gaussian_profile(waist, lattice.site(n)))
            .collect();
        let eta_discrete = lattice.cell_area() * values.iter().map(|u| u * u).sum::<f64>();
        let linear_size = array.linear_size();
        Ok(GaussianCollectiveMode {
            waist,
            lattice,
            sites,
            values,
            eta: overlap_eta(linear_size, waist),
            eta_discrete,
            linear_size,
        })
    }

    pub fn waist(&self) -> f64 {
        self.waist
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    /// Closed-form overlap erf²(L_a/√2w).
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Discrete norm A_cell Σ_n |u(r_n)|².
    pub fn eta_discrete(&self) -> f64 {
        self.eta_discrete
    }

    pub fn linear_size(&self) -> f64 {
        self.linear_size
    }

    /// u(r_n) on the ideal sites, in array order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// ũ(k_⊥) = A_cell Σ_n u(r_n) e^{−ik_⊥·r_n}.
    pub fn u_tilde(&self, k: Vector2<f64>) -> Complex64 {
        // r_n = n1 a1 + n2 a2, so the phase factorises per lattice direction
        let a1 = self.lattice.site((1, 0));
        let a2 = self.lattice.site((0, 1));
        let (lo1, hi1) = bounds(self.sites.iter().map(|s| s.0));
        let (lo2, hi2) = bounds(self.sites.iter().map(|s| s.1));
        let p1 = -k.dot(&a1);
        let p2 = -k.dot(&a2);
        let e1: Vec<Complex64> = (lo1..=hi1)
            .map(|n| Complex64::from_polar(1.0, p1 * n as f64))
            .collect();
        let e2: Vec<Complex64> = (lo2..=hi2)
            .map(|n| Complex64::from_polar(1.0, p2 * n as f64))
            .collect();
        let s: Complex64 = self
            .sites
            .iter()
            .zip(&self.values)
            .map(|(&(n1, n2), &u)| e1[(n1 - lo1) as usize] * e2[(n2 - lo2) as usize] * u)
            .sum();
        s * self.lattice.cell_area()
    }
}

fn bounds(it: impl Iterator<Item = i32>) -> (i32, i32) {
    it.fold((i32::MAX, i32::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Quadrature over the first Brillouin zone: a uniform grid on the primitive
/// reciprocal cell, folded into the zone, refined near grazing orders.
#[derive(Clone, Debug)]
pub struct BzQuadrature {
    lattice: Lattice,
    resolution: usize,
    nodes: Vec<Vector2<f64>>,
    weights: Vec<f64>,
    refined: Vec<bool>,
    candidates: Vec<(i32, i32)>,
}

impl BzQuadrature {
    pub fn new(lattice: &Lattice, resolution: usize) -> Result<Self> {
        if resolution < 8 {
            return Err(Error::invalid(
                "bz_resolution",
                format!("need at least 8 points per axis, got {resolution}"),
            ));
        }
        let b1 = lattice.reciprocal_vector((1, 0));
        let b2 = lattice.reciprocal_vector((0, 1));
        let cell_weight = lattice.brillouin_zone_area() / (resolution * resolution) as f64;
        let h = 1.0 / resolution as f64;
        let diam = (b1 * h).norm() + (b2 * h).norm();
        let zone_radius = b1.norm() + b2.norm();
        let bound = enumeration_bound(lattice, Vector2::new(zone_radius, 0.0));
        let mut candidates = Vec::new();
        for m1 in -bound..=bound {
            for m2 in -bound..=bound {
                if lattice.reciprocal_vector((m1, m2)).norm() < WAVENUMBER + zone_radius {
                    candidates.push((m1, m2));
                }
            }
        }
        let near_rim = |k: Vector2<f64>| {
            candidates.iter().any(|&m| {
                let q = (lattice.reciprocal_vector(m) + k).norm();
                let kz2 = WAVENUMBER * WAVENUMBER - q * q;
                q < WAVENUMBER + diam && kz2 < (RIM_KZ * WAVENUMBER).powi(2)
            })
        };
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut refined = Vec::new();
        for i in 0..resolution {
            for j in 0..resolution {
                let s1 = (i as f64 + 0.5) * h - 0.5;
                let s2 = (j as f64 + 0.5) * h - 0.5;
                let center = b1 * s1 + b2 * s2;
                if near_rim(center) {
                    let hs = h / REFINE as f64;
                    for a in 0..REFINE {
                        for b in 0..REFINE {
                            let t1 = s1 - h / 2.0 + (a as f64 + 0.5) * hs;
                            let t2 = s2 - h / 2.0 + (b as f64 + 0.5) * hs;
                            nodes.push(lattice.reduce_to_brillouin_zone(b1 * t1 + b2 * t2));
                            weights.push(cell_weight / (REFINE * REFINE) as f64);
                            refined.push(true);
                        }
                    }
                } else {
                    nodes.push(lattice.reduce_to_brillouin_zone(center));
                    weights.push(cell_weight);
                    refined.push(false);
                }
            }
        }
        Ok(BzQuadrature {
            lattice: *lattice,
            resolution,
            nodes,
            weights,
            refined,
            candidates,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn nodes(&self) -> &[Vector2<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn refined_count(&self) -> usize {
        self.refined.iter().filter(|r| **r).count()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// (Σ_target Γ_m(k), Σ_all Γ_m(k)) over orders radiative at k.
    fn rates_at(&self, k: Vector2<f64>, target: &[(i32, i32)]) -> (f64, f64) {
        let mut in_target = 0.0;
        let mut all = 0.0;
        for &m in &self.candidates {
            let o = DiffractionOrder::new(&self.lattice, m, k);
            if !o.radiative || o.cos_theta <= 0.0 {
                continue;
            }
            let g = gamma_of(&self.lattice, &o);
            all += g;
            if target.contains(&m) {
                in_target += g;
            }
        }
        (in_target, all)
    }

    fn check_lattice(&self, lattice: &Lattice) -> Result<()> {
        if self.lattice != *lattice {
            return Err(Error::invalid(
                "quadrature",
                "built for a different lattice",
            ));
        }
        Ok(())
    }

    /// |ũ(k)|²/(2π)² w_k for every node.
    fn spectral_weights(&self, mode: &GaussianCollectiveMode) -> Vec<f64> {
        let norm = 1.0 / (4.0 * PI * PI);
        self.nodes
            .par_iter()
            .zip(self.weights.par_iter())
            .map(|(k, w)| mode.u_tilde(*k).norm_sqr() * w * norm)
            .collect()
    }
}

/// Brillouin-zone averaged rates of the Gaussian collective mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiniteRates {
    /// Γ_R: decay into the target orders, before the η factor.
    pub gamma_r: f64,
    /// Γ′₀: decay into every radiative order.
    pub gamma_prime0: f64,
    /// (2π)⁻² ∫_BZ |ũ|², equal to the discrete norm by Parseval.
    pub spectral_norm: f64,
    /// Share of Γ′₀ collected on refined (near-grazing) cells.
    pub rim_fraction: f64,
}

/// Γ_R and Γ′₀ of Eq.-style BZ integrals, normalised by the discrete norm so
/// that they are weighted averages of the lattice rates.
pub fn gamma_r_and_0(
    mode: &GaussianCollectiveMode,
    lattice: &Lattice,
    target: &OrderSet,
    quad: &BzQuadrature,
) -> Result<FiniteRates> {
    quad.check_lattice(lattice)?;
    let target_ms = target.indices();
    let sw = quad.spectral_weights(mode);
    let per_node: Vec<(f64, f64)> = quad
        .nodes
        .par_iter()
        .map(|k| quad.rates_at(*k, &target_ms))
        .collect();
    let mut gr = 0.0;
    let mut g0 = 0.0;
    let mut rim = 0.0;
    let mut norm = 0.0;
    for ((w, (t, a)), refined) in sw.iter().zip(&per_node).zip(&quad.refined) {
        gr += w * t;
        g0 += w * a;
        norm += w;
        if *refined {
            rim += w * a;
        }
    }
    let eta_d = mode.eta_discrete();
    let rim_fraction = if g0 > 0.0 { rim / g0 } else { 0.0 };
    if rim_fraction > 1e-2 {
        log::warn!(
            "{:.1}% of the loss rate comes from near-grazing cells; raise the BZ resolution",
            100.0 * rim_fraction
        );
    }
    Ok(FiniteRates {
        gamma_r: gr / eta_d,
        gamma_prime0: g0 / eta_d,
        spectral_norm: norm,
        rim_fraction,
    })
}

/// Finite-array efficiency Γ = ηΓ_R, γ_loss = Γ′₀ − ηΓ_R.
///
/// `delta_res` carries the collective shift Δ′ = Im D₀₀ of the same mode.
pub fn r0_finite_theory(
    mode: &GaussianCollectiveMode,
    lattice: &Lattice,
    target: &OrderSet,
    quad: &BzQuadrature,
    array: &AtomArray,
) -> Result<InterfaceResult> {
    let rates = gamma_r_and_0(mode, lattice, target, quad)?;
    let interaction = InteractionMatrix::new(&array.ideal_positions())?;
    let d00 = d_matrix_00(mode, &interaction)?;
    let gamma = mode.eta() * rates.gamma_r;
    let mut res = InterfaceResult::from_rates(
        gamma,
        rates.gamma_prime0 - gamma,
        d00.im,
        ResultSource::FiniteTheory,
    );
    let d: &mut BTreeMap<String, f64> = &mut res.diagnostics;
    d.insert("waist".into(), mode.waist());
    d.insert("eta".into(), mode.eta());
    d.insert("eta_discrete".into(), mode.eta_discrete());
    d.insert("eta_gap".into(), mode.eta() - mode.eta_discrete());
    d.insert("gamma_r".into(), rates.gamma_r);
    d.insert("gamma_prime0".into(), rates.gamma_prime0);
    d.insert("gamma_prime0_dmatrix".into(), 2.0 * d00.re);
    d.insert("parseval".into(), rates.spectral_norm / mode.eta_discrete());
    d.insert("rim_fraction".into(), rates.rim_fraction);
    d.insert("bz_resolution".into(), quad.resolution() as f64);
    Ok(res)
}

/// Finite-waist replacement of cos θ_m:
/// B_m = [∫_BZ d²k/(2π)² (|ũ|²/η_d) / √(1 − |q_m + k|²/k²)]⁻¹.
pub fn b_m(mode: &GaussianCollectiveMode, quad: &BzQuadrature, m: (i32, i32)) -> Result<f64> {
    quad.check_lattice(mode.lattice())?;
    let o = DiffractionOrder::new(mode.lattice(), m, Vector2::zeros());
    if !o.radiative {
        return Err(Error::EvanescentOrder { m });
    }
    let sw = quad.spectral_weights(mode);
    let q = o.q;
    let acc: f64 = quad
        .nodes
        .iter()
        .zip(&sw)
        .map(|(k, w)| {
            let s2 = (q + k).norm_squared() / (WAVENUMBER * WAVENUMBER);
            if s2 < 1.0 {
                w / (1.0 - s2).sqrt()
            } else {
                0.0
            }
        })
        .sum();
    Ok(mode.eta_discrete() / acc)
}

/// D₀₀ = −i vᵀ M v for the normalised Gaussian weights v_n ∝ u(r_n) on the
/// mode's ideal sites, so that Γ′₀ = 2 Re D₀₀ and Δ′ = Im D₀₀.
pub fn d_matrix_00(
    mode: &GaussianCollectiveMode,
    interaction: &InteractionMatrix,
) -> Result<Complex64> {
    if interaction.len() != mode.values().len() {
        return Err(Error::invalid(
            "interaction",
            "matrix size differs from the number of sites",
        ));
    }
    Ok(project(interaction, mode.values()))
}

/// D₀₀ for an arbitrary configuration, weighting each atom by the Gaussian
/// at its actual in-plane position.
pub fn d_matrix_00_for(
    interaction: &InteractionMatrix,
    positions: &[Vector3<f64>],
    waist: f64,
) -> Complex64 {
    let u: Vec<f64> = positions
        .iter()
        .map(|r| gaussian_profile(waist, r.xy()))
        .collect();
    project(interaction, &u)
}

fn project(interaction: &InteractionMatrix, u: &[f64]) -> Complex64 {
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Complex64::default();
    }
    let v: Vec<Complex64> = u.iter().map(|x| Complex64::new(x / norm, 0.0)).collect();
    Complex64::new(0.0, -1.0) * interaction.bilinear(&v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffraction::{first_shell, gamma_sum};
    use crate::lattice::build_patch;
    use approx::assert_abs_diff_eq;

    fn patch(a: f64, n: usize) -> AtomArray {
        build_patch(Lattice::triangular(a).unwrap(), n).unwrap()
    }

    #[test]
    fn erf_and_discrete_overlap_agree() {
        for (a, n) in [(1.5, 149), (1.8, 537)] {
            let arr = patch(a, n);
            let l = arr.linear_size();
            for w in [a, 0.25 * l, 0.5 * l] {
                let m = GaussianCollectiveMode::new(&arr, w).unwrap();
                assert!(
                    (m.eta() - m.eta_discrete()).abs() / m.eta() < 0.05,
                    "a={a} w={w}"
                );
            }
        }
    }

    #[test]
    fn u_tilde_is_lattice_periodic() {
        let arr = patch(1.7, 61);
        let m = GaussianCollectiveMode::new(&arr, 3.0).unwrap();
        let k = Vector2::new(0.37, -0.81);
        for g in [(1, 0), (0, 1), (-2, 1)] {
            let q = arr.lattice().reciprocal_vector(g);
            assert_abs_diff_eq!(
                (m.u_tilde(k) - m.u_tilde(k + q)).norm(),
                0.0,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn u_tilde_matches_direct_sum() {
        let arr = patch(1.4, 37);
        let m = GaussianCollectiveMode::new(&arr, 2.0).unwrap();
        let k = Vector2::new(1.1, 0.4);
        let direct: Complex64 = arr
            .ideal_positions()
            .iter()
            .map(|r| gaussian_profile(2.0, r.xy()) * Complex64::from_polar(1.0, -k.dot(&r.xy())))
            .sum::<Complex64>()
            * arr.lattice().cell_area();
        assert_abs_diff_eq!((m.u_tilde(k) - direct).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn u_tilde_at_zero_is_the_continuum_integral() {
        // ∫ u d²r = √(2/π)/w · πw² = w√(2π)
        let arr = patch(1.0, 1100);
        for w in [4.0, 6.0] {
            let m = GaussianCollectiveMode::new(&arr, w).unwrap();
            let cont = w * (2.0 * PI).sqrt();
            assert!((m.u_tilde(Vector2::zeros()).re / cont - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn weights_cover_the_zone() {
        for lat in [
            Lattice::triangular(1.76).unwrap(),
            Lattice::square(1.2).unwrap(),
        ] {
            let q = BzQuadrature::new(&lat, 41).unwrap();
            assert_abs_diff_eq!(
                q.total_weight() / lat.brillouin_zone_area(),
                1.0,
                epsilon = 1e-12
            );
            for k in q.nodes() {
                assert!(k.norm() <= lat.reduce_to_brillouin_zone(*k).norm() + 1e-9);
            }
        }
    }

    #[test]
    fn parseval_holds_with_discrete_norm() {
        let arr = patch(1.6, 149);
        let lat = *arr.lattice();
        let q = BzQuadrature::new(&lat, 101).unwrap();
        let m = GaussianCollectiveMode::new(&arr, 0.25 * arr.linear_size()).unwrap();
        let r = gamma_r_and_0(&m, &lat, &first_shell(&lat), &q).unwrap();
        assert_abs_diff_eq!(r.spectral_norm / m.eta_discrete(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn single_atom_d_matrix() {
        let arr = patch(1.6, 1);
        let m = GaussianCollectiveMode::new(&arr, 2.0).unwrap();
        let im = InteractionMatrix::new(arr.positions()).unwrap();
        let d = d_matrix_00(&m, &im).unwrap();
        assert_abs_diff_eq!(d.re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn wide_mode_recovers_lattice_rates() {
        let arr = patch(1.5, 800);
        let lat = *arr.lattice();
        let target = first_shell(&lat);
        let q = BzQuadrature::new(&lat, 101).unwrap();
        let m = GaussianCollectiveMode::new(&arr, 0.3 * arr.linear_size()).unwrap();
        let r = gamma_r_and_0(&m, &lat, &target, &q).unwrap();
        let inf = gamma_sum(&lat, &target);
        assert!(
            (r.gamma_r / inf - 1.0).abs() < 0.03,
            "{} vs {inf}",
            r.gamma_r
        );
        assert!(r.gamma_prime0 >= r.gamma_r);
        assert!((r.gamma_prime0 - r.gamma_r) / inf < 0.01);
        for o in target.iter() {
            let b = b_m(&m, &q, o.m).unwrap();
            assert!(
                (b / o.cos_theta - 1.0).abs() < 0.02,
                "{:?}: {b} vs {}",
                o.m,
                o.cos_theta
            );
        }
    }

    #[test]
    fn near_edge_order_has_reduced_b() {
        // first shell close to grazing: averaging 1/k_z over a finite spread
        // exceeds 1/k_z at the centre
        for (a, n) in [(1.25, 301), (1.3, 800), (1.25, 1100)] {
            let arr = patch(a, n);
            let lat = *arr.lattice();
            let q = BzQuadrature::new(&lat, 101).unwrap();
            let m = GaussianCollectiveMode::new(&arr, 0.25 * arr.linear_size()).unwrap();
            let o = DiffractionOrder::new(&lat, (1, 0), Vector2::zeros());
            assert!(b_m(&m, &q, (1, 0)).unwrap() < o.cos_theta);
            assert!(b_m(&m, &q, (3, 0)).is_err());
        }
    }

    #[test]
    fn spread_across_the_rim_raises_b() {
        // once a sizeable part of the spread is evanescent the truncation
        // outweighs the 1/k_z growth
        let arr = patch(1.18, 301);
        let lat = *arr.lattice();
        let q = BzQuadrature::new(&lat, 101).unwrap();
        let m = GaussianCollectiveMode::new(&arr, 0.25 * arr.linear_size()).unwrap();
        let o = DiffractionOrder::new(&lat, (1, 0), Vector2::zeros());
        assert!(b_m(&m, &q, (1, 0)).unwrap() > o.cos_theta);
    }

    #[test]
    fn tiny_waist_degrades_efficiency() {
        let arr = patch(1.76, 149);
        let lat = *arr.lattice();
        let target = first_shell(&lat);
        let q = BzQuadrature::new(&lat, 101).unwrap();
        let good = GaussianCollectiveMode::new(&arr, 0.25 * arr.linear_size()).unwrap();
        let bad = GaussianCollectiveMode::new(&arr, 0.5).unwrap();
        let r_good = r0_finite_theory(&good, &lat, &target, &q, &arr).unwrap();
        let r_bad = r0_finite_theory(&bad, &lat, &target, &q, &arr).unwrap();
        assert!(r_bad.gamma_loss > 0.0 && r_good.gamma_loss > 0.0);
        assert!(r_bad.r0 < r_good.r0 - 0.1, "{} vs {}", r_bad.r0, r_good.r0);
    }
}
