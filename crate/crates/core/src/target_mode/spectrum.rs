//! Sampled plane-wave decompositions over one propagation half-space.
//!
//! A field in the half-space is written E(r) = ∫ d²k_⊥/(2π)² A(k_⊥) e^{ik·r}.
//! [`AngularSpectrum`] stores the far-field amplitude per solid angle
//! `ã = (k_z/k)·A` at the nodes of a uniform Cartesian k_⊥ grid. With node
//! weights W = ∫_cell d²k_⊥/(2π)² · k/k_z both the field synthesis and the
//! flux inner product become plain weighted sums,
//!
//! ```text
//! E(r)   = Σ W ã e^{ik·r}
//! ⟨a, b⟩ = ∫ d²k_⊥/(2π)² (k_z/k) A_a*·A_b = Σ W ã_a*·ã_b
//! ```
//!
//! and the 1/k_z edge singularity of dipole radiation is integrated exactly
//! inside every cell.

use std::f64::consts::PI;
use std::num::NonZeroUsize;
use std::sync::Arc;

use gauss_quad::GaussLegendre;
use nalgebra::Vector3;
use num_complex::Complex64;

use crate::diffraction::Direction;
use crate::lattice::{dipole_orientation, WAVENUMBER};
use crate::{Error, Result};

/// Default number of grid cells per axis over [−k, k].
pub const DEFAULT_RESOLUTION: usize = 256;

const QUAD_ORDER: usize = 12;

/// k_z/k at a cell's outer corner below which the cell is integrated exactly.
pub const RIM_KZ: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralNode {
    pub kx: f64,
    pub ky: f64,
    /// k_z = √(k² − k_⊥²) ≥ 0.
    pub kz: f64,
    pub weight: f64,
}

impl SpectralNode {
    /// Unit wave vector in the given half-space.
    pub fn unit(&self, dir: Direction) -> Vector3<f64> {
        Vector3::new(self.kx, self.ky, dir.sign() * self.kz) / WAVENUMBER
    }

    pub fn transverse_norm(&self) -> f64 {
        self.kx.hypot(self.ky)
    }
}

/// Cartesian sampling of the radiative disk |k_⊥| < k.
///
/// Away from the rim each cell is a plain midpoint node, which keeps the
/// spectral accuracy of the uniform rule for smooth beams. Cells reaching
/// k_z < [`RIM_KZ`]·k carry the exact solid angle of their radiative part,
/// with k_z set to the cell's harmonic mean so that cos θ moments stay exact
/// where 1/k_z is steep.
#[derive(Debug)]
pub struct SpectralGrid {
    resolution: usize,
    step: f64,
    nodes: Vec<SpectralNode>,
}

impl SpectralGrid {
    pub fn new(resolution: usize) -> Result<Arc<Self>> {
        if resolution < 8 {
            return Err(Error::invalid(
                "resolution",
                format!("need at least 8 cells per axis, got {resolution}"),
            ));
        }
        let k = WAVENUMBER;
        let step = 2.0 * k / resolution as f64;
        let gl = GaussLegendre::new(NonZeroUsize::new(QUAD_ORDER).expect("nonzero"));
        let norm = 1.0 / (4.0 * PI * PI);
        let mut nodes = Vec::with_capacity(resolution * resolution * 4 / 5);
        for ix in 0..resolution {
            let x0 = -k + ix as f64 * step;
            let x1 = x0 + step;
            for iy in 0..resolution {
                let y0 = -k + iy as f64 * step;
                let y1 = y0 + step;
                let near = nearest(x0, x1).hypot(nearest(y0, y1));
                if near >= k {
                    continue;
                }
                let far = x0.abs().max(x1.abs()).hypot(y0.abs().max(y1.abs()));
                if far < k * (1.0 - RIM_KZ * RIM_KZ).sqrt() {
                    let (kx, ky) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
                    let kz = (k * k - kx * kx - ky * ky).sqrt();
                    nodes.push(SpectralNode {
                        kx,
                        ky,
                        kz,
                        weight: step * step * k / kz * norm,
                    });
                    continue;
                }
                let m = cell_moments(&gl, x0, x1, y0, y1);
                if m.0 <= 0.0 {
                    continue;
                }
                // k_z is the cell's harmonic mean, so that both Σ W and
                // Σ W cos θ are exact; the azimuth follows the weighted centroid
                let kz = (k * m.3 / m.0).min(k);
                let rho = (k * k - kz * kz).max(0.0).sqrt();
                let (cx, cy) = (m.1 / m.0, m.2 / m.0);
                let c = cx.hypot(cy);
                let (kx, ky) = if c > 0.0 {
                    (rho * cx / c, rho * cy / c)
                } else {
                    (0.0, 0.0)
                };
                if kz <= 0.0 {
                    continue;
                }
                nodes.push(SpectralNode {
                    kx,
                    ky,
                    kz,
                    weight: m.0 * norm,
                });
            }
        }
        Ok(Arc::new(SpectralGrid {
            resolution,
            step,
            nodes,
        }))
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn nodes(&self) -> &[SpectralNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Total weight, equal to k²·2π/(2π)² = k²/2π for the full hemisphere.
    pub fn total_weight(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }
}

fn nearest(a: f64, b: f64) -> f64 {
    if a <= 0.0 && b >= 0.0 {
        0.0
    } else {
        a.abs().min(b.abs())
    }
}

/// ∫∫ k/√(k² − x² − y²) over the radiative part of a cell, together with its
/// first moments in x and y and the plain area. The y integral is done in closed form and x by
/// Gauss–Legendre on pieces split where the disk boundary crosses y0 or y1.
fn cell_moments(gl: &GaussLegendre, x0: f64, x1: f64, y0: f64, y1: f64) -> (f64, f64, f64, f64) {
    let k = WAVENUMBER;
    let lo = x0.max(-k);
    let hi = x1.min(k);
    if lo >= hi {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let mut cuts = vec![lo, hi];
    for y in [y0, y1] {
        if y.abs() < k {
            let xc = (k * k - y * y).sqrt();
            for c in [-xc, xc] {
                if c > lo && c < hi {
                    cuts.push(c);
                }
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    let inner = |x: f64| -> (f64, f64, f64) {
        let r2 = k * k - x * x;
        if r2 <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let r = r2.sqrt();
        let a = y0.max(-r);
        let b = y1.min(r);
        if a >= b {
            return (0.0, 0.0, 0.0);
        }
        let w = k * ((b / r).clamp(-1.0, 1.0).asin() - (a / r).clamp(-1.0, 1.0).asin());
        let my = k * ((r2 - a * a).max(0.0).sqrt() - (r2 - b * b).max(0.0).sqrt());
        (w, my, b - a)
    };
    let mut out = (0.0, 0.0, 0.0, 0.0);
    for pair in cuts.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b - a <= 0.0 {
            continue;
        }
        // x = a + (b−a)(1−cos πs)/2 smooths the √ endpoint behaviour
        let h = 0.5 * (b - a);
        let jac = |s: f64| h * PI * (PI * s).sin();
        let at = |s: f64| a + h * (1.0 - (PI * s).cos());
        out.0 += gl.integrate(0.0, 1.0, |s| jac(s) * inner(at(s)).0);
        out.1 += gl.integrate(0.0, 1.0, |s| jac(s) * at(s) * inner(at(s)).0);
        out.2 += gl.integrate(0.0, 1.0, |s| jac(s) * inner(at(s)).1);
        out.3 += gl.integrate(0.0, 1.0, |s| jac(s) * inner(at(s)).2);
    }
    out
}

/// Far-field amplitudes of a field on one half-space.
#[derive(Clone, Debug)]
pub struct AngularSpectrum {
    grid: Arc<SpectralGrid>,
    direction: Direction,
    amplitudes: Vec<Vector3<Complex64>>,
}

impl AngularSpectrum {
    pub fn zeros(grid: Arc<SpectralGrid>, direction: Direction) -> Self {
        let n = grid.len();
        AngularSpectrum {
            grid,
            direction,
            amplitudes: vec![Vector3::zeros(); n],
        }
    }

    pub fn from_amplitudes(
        grid: Arc<SpectralGrid>,
        direction: Direction,
        amplitudes: Vec<Vector3<Complex64>>,
    ) -> Result<Self> {
        if amplitudes.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(AngularSpectrum {
            grid,
            direction,
            amplitudes,
        })
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn amplitudes(&self) -> &[Vector3<Complex64>] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Vector3<Complex64>] {
        &mut self.amplitudes
    }

    fn check_compatible(&self, other: &AngularSpectrum) -> Result<()> {
        let same_grid = Arc::ptr_eq(&self.grid, &other.grid)
            || self.grid.resolution() == other.grid.resolution();
        if !same_grid || self.direction != other.direction {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Flux inner product ⟨self, other⟩ over the radiative disk.
    pub fn inner(&self, other: &AngularSpectrum) -> Result<Complex64> {
        self.check_compatible(other)?;
        Ok(self
            .grid
            .nodes()
            .iter()
            .zip(self.amplitudes.iter().zip(other.amplitudes.iter()))
            .map(|(n, (a, b))| a.dotc(b) * n.weight)
            .sum())
    }

    /// Power carried through a plane of constant z.
    pub fn flux(&self) -> f64 {
        self.grid
            .nodes()
            .iter()
            .zip(self.amplitudes.iter())
            .map(|(n, a)| a.norm_squared() * n.weight)
            .sum()
    }

    pub fn scale(&mut self, s: Complex64) {
        for a in &mut self.amplitudes {
            *a *= s;
        }
    }

    /// Rescales to unit flux; a zero spectrum is left untouched.
    pub fn normalize(&mut self) -> f64 {
        let f = self.flux();
        if f > 0.0 {
            self.scale(Complex64::from(1.0 / f.sqrt()));
        }
        f
    }

    pub fn add(&mut self, other: &AngularSpectrum) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.amplitudes.iter_mut().zip(other.amplitudes.iter()) {
            *a += b;
        }
        Ok(())
    }

    /// Sharp aperture: removes every node with |k_⊥| > NA·k.
    ///
    /// With `renormalize` the surviving field is rescaled to the flux it had
    /// before filtering (used for incident and projection modes); without it
    /// the removed power is simply lost (used for scattered light).
    pub fn na_filter(&self, na: f64, renormalize: bool) -> Result<AngularSpectrum> {
        if !(na > 0.0 && na <= 1.0) {
            return Err(Error::invalid(
                "na",
                format!("numerical aperture must lie in (0, 1], got {na}"),
            ));
        }
        let mut out = self.clone();
        if na < 1.0 {
            let cut = na * WAVENUMBER;
            for (n, a) in self.grid.nodes().iter().zip(out.amplitudes.iter_mut()) {
                if n.transverse_norm() > cut {
                    *a = Vector3::zeros();
                }
            }
        }
        if renormalize {
            let before = self.flux();
            let after = out.flux();
            if after > 0.0 {
                out.scale(Complex64::from((before / after).sqrt()));
            }
        }
        Ok(out)
    }

    /// Scalar e_d†·ã at each node.
    pub fn dipole_projection(&self) -> Vec<Complex64> {
        let ed = dipole_orientation();
        self.amplitudes.iter().map(|a| ed.dotc(a)).collect()
    }

    /// Synthesises the field E(r) = Σ W ã e^{ik·r} at the given points.
    pub fn field_at(&self, points: &[Vector3<f64>]) -> Vec<Vector3<Complex64>> {
        let s = self.direction.sign();
        let active: Vec<(SpectralNode, Vector3<Complex64>)> = self
            .grid
            .nodes()
            .iter()
            .zip(self.amplitudes.iter())
            .filter(|(_, a)| a.norm_squared() > 0.0)
            .map(|(n, a)| (*n, a * Complex64::from(n.weight)))
            .collect();
        points
            .iter()
            .map(|r| {
                active
                    .iter()
                    .map(|(n, a)| {
                        a * Complex64::from_polar(1.0, n.kx * r.x + n.ky * r.y + s * n.kz * r.z)
                    })
                    .sum()
            })
            .collect()
    }

    /// Largest |ã·k̂| relative to the largest |ã|.
    pub fn transversality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for (n, a) in self.grid.nodes().iter().zip(self.amplitudes.iter()) {
            let u = n.unit(self.direction).map(Complex64::from);
            worst = worst.max(u.dotc(a).norm());
            scale = scale.max(a.norm());
        }
        if scale > 0.0 {
            worst / scale
        } else {
            0.0
        }
    }
}

/// Projects a vector onto the plane transverse to the unit vector `u`.
pub(crate) fn transverse(u: &Vector3<f64>, v: &Vector3<Complex64>) -> Vector3<Complex64> {
    let uc = u.map(Complex64::from);
    let along: Complex64 = uc.dot(v);
    v - uc * along
}
