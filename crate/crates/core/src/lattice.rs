//! Lattice geometry, reciprocal vectors and finite atom patches.
//!
//! Units: λ = 1 and γ = 1 throughout the crate, so the wavenumber is
//! [`WAVENUMBER`] = 2π. Atom positions are 3-vectors with the ideal array in
//! the plane z = 0.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Resonant wavelength; the unit of length.
pub const WAVELENGTH: f64 = 1.0;
/// k = 2π/λ.
pub const WAVENUMBER: f64 = TAU;
/// Single-atom linewidth; the unit of rate.
pub const LINEWIDTH: f64 = 1.0;

/// Circular dipole orientation `(e_x + i e_y)/√2` shared by every atom.
pub fn dipole_orientation() -> Vector3<Complex64> {
    Vector3::new(
        Complex64::new(FRAC_1_SQRT_2, 0.0),
        Complex64::new(0.0, FRAC_1_SQRT_2),
        Complex64::new(0.0, 0.0),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeKind {
    Triangular,
    Square,
}

impl LatticeKind {
    /// Angle ψ between the two primitive vectors.
    pub fn angle(self) -> f64 {
        match self {
            LatticeKind::Triangular => PI / 3.0,
            LatticeKind::Square => PI / 2.0,
        }
    }

    /// Spacing window `(lo, hi)` in which exactly the zeroth order and the
    /// first shell of diffraction orders are radiative.
    pub fn single_shell_window(self) -> (f64, f64) {
        match self {
            LatticeKind::Triangular => (2.0 / 3f64.sqrt(), 2.0),
            LatticeKind::Square => (1.0, 2f64.sqrt()),
        }
    }

    /// |n|² in units of a² for the site n = (n1, n2); exact in integers.
    fn norm2_units(self, n: (i32, i32)) -> i64 {
        let (a, b) = (n.0 as i64, n.1 as i64);
        match self {
            LatticeKind::Triangular => a * a + a * b + b * b,
            LatticeKind::Square => a * a + b * b,
        }
    }
}

impl fmt::Display for LatticeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LatticeKind::Triangular => f.write_str("triangular"),
            LatticeKind::Square => f.write_str("square"),
        }
    }
}

impl FromStr for LatticeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "triangular" | "tri" | "hexagonal" => Ok(LatticeKind::Triangular),
            "square" | "sq" => Ok(LatticeKind::Square),
            other => Err(Error::invalid(
                "lattice",
                format!("unknown lattice kind `{other}` (expected triangular or square)"),
            )),
        }
    }
}

/// A 2D Bravais lattice in the z = 0 plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    kind: LatticeKind,
    spacing: f64,
}

impl Lattice {
    pub fn new(kind: LatticeKind, spacing: f64) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::invalid(
                "spacing",
                format!("must be positive, got {spacing}"),
            ));
        }
        Ok(Lattice { kind, spacing })
    }

    pub fn triangular(spacing: f64) -> Result<Self> {
        Lattice::new(LatticeKind::Triangular, spacing)
    }

    pub fn square(spacing: f64) -> Result<Self> {
        Lattice::new(LatticeKind::Square, spacing)
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn angle(&self) -> f64 {
        self.kind.angle()
    }

    /// Area of the primitive cell, a² sin ψ.
    pub fn cell_area(&self) -> f64 {
        self.spacing * self.spacing * self.angle().sin()
    }

    /// Area of the first Brillouin zone, (2π)²/A_cell.
    pub fn brillouin_zone_area(&self) -> f64 {
        TAU * TAU / self.cell_area()
    }

    /// In-plane position of the site n = (n1, n2).
    pub fn site(&self, n: (i32, i32)) -> Vector2<f64> {
        let (s, c) = self.angle().sin_cos();
        let a = self.spacing;
        Vector2::new(n.0 as f64 * a + n.1 as f64 * a * c, n.1 as f64 * a * s)
    }

    /// Reciprocal vector q_m = (2π/a)(m1, −m1 cot ψ + m2 / sin ψ).
    pub fn reciprocal_vector(&self, m: (i32, i32)) -> Vector2<f64> {
        let (s, c) = self.angle().sin_cos();
        let scale = TAU / self.spacing;
        let (m1, m2) = (m.0 as f64, m.1 as f64);
        Vector2::new(scale * m1, scale * (-m1 * c / s + m2 / s))
    }

    /// Maps a transverse momentum into the first Brillouin zone by
    /// subtracting the nearest reciprocal-lattice vector.
    pub fn reduce_to_brillouin_zone(&self, k: Vector2<f64>) -> Vector2<f64> {
        // fractional coordinates in the reciprocal basis
        let b1 = self.reciprocal_vector((1, 0));
        let b2 = self.reciprocal_vector((0, 1));
        let det = b1.x * b2.y - b1.y * b2.x;
        let f1 = (k.x * b2.y - k.y * b2.x) / det;
        let f2 = (b1.x * k.y - b1.y * k.x) / det;
        let (c1, c2) = (f1.round() as i32, f2.round() as i32);
        let mut best = k;
        let mut best_norm = f64::INFINITY;
        for d1 in -1..=1 {
            for d2 in -1..=1 {
                let cand = k - self.reciprocal_vector((c1 + d1, c2 + d2));
                let n = cand.norm_squared();
                if n < best_norm {
                    best_norm = n;
                    best = cand;
                }
            }
        }
        best
    }
}

/// A finite set of atoms, each tagged with the lattice site it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomArray {
    lattice: Lattice,
    sites: Vec<(i32, i32)>,
    positions: Vec<Vector3<f64>>,
    seed: Option<u64>,
}

impl AtomArray {
    /// An array without atoms (useful as a null scatterer).
    pub fn empty(lattice: Lattice) -> Self {
        AtomArray {
            lattice,
            sites: Vec::new(),
            positions: Vec::new(),
            seed: None,
        }
    }

    /// Ideal array occupying the given sites.
    pub fn from_sites(lattice: Lattice, sites: Vec<(i32, i32)>) -> Self {
        let positions = sites
            .iter()
            .map(|&n| {
                let r = lattice.site(n);
                Vector3::new(r.x, r.y, 0.0)
            })
            .collect();
        AtomArray {
            lattice,
            sites,
            positions,
            seed: None,
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn sites(&self) -> &[(i32, i32)] {
        &self.sites
    }

    /// Seed of the last disorder realisation applied, if any.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Side of the square with the same area as the patch, √(N a² sin ψ).
    pub fn linear_size(&self) -> f64 {
        (self.len() as f64 * self.lattice.cell_area()).sqrt()
    }

    /// Largest in-plane distance of an ideal site from the origin.
    pub fn max_site_radius(&self) -> f64 {
        self.sites
            .iter()
            .map(|&n| self.lattice.site(n).norm())
            .fold(0.0, f64::max)
    }

    /// Ideal (unshifted, undisordered) positions of the occupied sites.
    pub fn ideal_positions(&self) -> Vec<Vector3<f64>> {
        AtomArray::from_sites(self.lattice, self.sites.clone()).positions
    }

    /// Rigid translation of every atom by `d`; the beam focus stays at the origin.
    pub fn shifted(&self, d: Vector3<f64>) -> AtomArray {
        let mut out = self.clone();
        for p in &mut out.positions {
            *p += d;
        }
        out
    }

    /// Independent zero-mean Gaussian displacement with per-axis standard
    /// deviation `sigma` for every atom. Deterministic in `seed`.
    pub fn disordered(&self, sigma: f64, seed: u64) -> Result<AtomArray> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid(
                "disorder",
                format!("must be non-negative, got {sigma}"),
            ));
        }
        let mut out = self.clone();
        out.seed = Some(seed);
        if sigma == 0.0 {
            return Ok(out);
        }
        let normal = Normal::new(0.0, sigma).expect("finite positive std");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in &mut out.positions {
            p.x += normal.sample(&mut rng);
            p.y += normal.sample(&mut rng);
            p.z += normal.sample(&mut rng);
        }
        Ok(out)
    }
}

/// The `n_target` sites closest to the origin (a disk cut centred on a site).
///
/// Ties are broken by (radius, polar angle, n1, n2), which makes the patch a
/// pure function of its inputs.
pub fn build_patch(lattice: Lattice, n_target: usize) -> Result<AtomArray> {
    if n_target == 0 {
        return Err(Error::invalid("atoms", "a patch needs at least one atom"));
    }
    let kind = lattice.kind();
    let sin_psi = lattice.angle().sin();
    let mut radius_units = (n_target as f64 * sin_psi / PI).sqrt() + 2.0;
    loop {
        let r2_max = radius_units * radius_units;
        let bound = (2.0 * radius_units / sin_psi).ceil() as i32 + 1;
        let mut candidates: Vec<((i32, i32), i64, f64)> = Vec::new();
        for n1 in -bound..=bound {
            for n2 in -bound..=bound {
                let r2 = kind.norm2_units((n1, n2));
                if (r2 as f64) <= r2_max {
                    let p = lattice.site((n1, n2));
                    let angle = p.y.atan2(p.x).rem_euclid(TAU);
                    candidates.push(((n1, n2), r2, angle));
                }
            }
        }
        if candidates.len() >= n_target {
            candidates.sort_by(|a, b| {
                a.1.cmp(&b.1)
                    .then(a.2.total_cmp(&b.2))
                    .then(a.0 .0.cmp(&b.0 .0))
                    .then(a.0 .1.cmp(&b.0 .1))
            });
            candidates.truncate(n_target);
            let sites = candidates.into_iter().map(|c| c.0).collect();
            return Ok(AtomArray::from_sites(lattice, sites));
        }
        radius_units *= 1.5;
    }
}

/// Free-function form of [`AtomArray::shifted`].
pub fn apply_shift(array: &AtomArray, d: Vector3<f64>) -> AtomArray {
    array.shifted(d)
}

/// Free-function form of [`AtomArray::disordered`].
pub fn apply_disorder(array: &AtomArray, sigma: f64, seed: u64) -> Result<AtomArray> {
    array.disordered(sigma, seed)
}
