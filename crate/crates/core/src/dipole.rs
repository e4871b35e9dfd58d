//! Classical coupled-dipole steady state of a driven atom array.
//!
//! With every dipole along e_d the problem reduces to the scalar system
//!
//! ```text
//! (δ + M) σ = −E,    M_nn = iγ/2,    M_nm = (3/2) γ λ G(r_n − r_m),
//! ```
//!
//! where G is the e_d-projected free-space Green's tensor and E_n = e_d†·E(r_n)
//! is the incident drive (d/ħ = 1). The scattered field in the same units is
//! (3/2)γλ Σ_n Ḡ(r − r_n)·e_d σ_n.

use std::f64::consts::PI;

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

use crate::diffraction::Direction;
use crate::lattice::{dipole_orientation, LINEWIDTH, WAVELENGTH, WAVENUMBER};
use crate::target_mode::{transverse, AngularSpectrum, SpectralGrid};
use crate::{Error, Result};
use std::sync::Arc;

/// (3/2) γ λ.
pub const COUPLING: f64 = 1.5 * LINEWIDTH * WAVELENGTH;

/// Condition estimate above which a solve is reported as singular.
const SINGULAR_CONDITION: f64 = 1e13;

fn radial_terms(r: f64) -> (Complex64, Complex64, Complex64) {
    let kr = WAVENUMBER * r;
    let i = Complex64::i();
    let pre = Complex64::from_polar(1.0 / (4.0 * PI * r), kr);
    let a = 1.0 + i / kr - 1.0 / (kr * kr);
    let b = -1.0 - 3.0 * i / kr + 3.0 / (kr * kr);
    (pre, a, b)
}

/// Outgoing dyadic Green's tensor
/// Ḡ(r) = e^{ikr}/(4πr) [(1 + i/kr − 1/(kr)²) I + (−1 − 3i/kr + 3/(kr)²) r̂r̂].
pub fn greens_dyadic(r: &Vector3<f64>) -> Result<Matrix3<Complex64>> {
    let d = r.norm();
    if d == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    let (pre, a, b) = radial_terms(d);
    let u = r / d;
    let rr = (u * u.transpose()).map(Complex64::from);
    Ok((Matrix3::identity() * a + rr * b) * pre)
}

/// e_d†·Ḡ(r)·e_d for the circular dipole, using |r̂·e_d|² = (x² + y²)/(2r²).
pub fn greens_projected(r: &Vector3<f64>) -> Result<Complex64> {
    let d2 = r.norm_squared();
    if d2 == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    let (pre, a, b) = radial_terms(d2.sqrt());
    let proj = (r.x * r.x + r.y * r.y) / (2.0 * d2);
    Ok(pre * (a + b * proj))
}

/// Dense interaction matrix M of an atom configuration.
#[derive(Clone, Debug)]
pub struct InteractionMatrix {
    matrix: Mat<Complex64>,
}

impl InteractionMatrix {
    pub fn new(positions: &[Vector3<f64>]) -> Result<Self> {
        let n = positions.len();
        let mut matrix = Mat::<Complex64>::zeros(n, n);
        for i in 0..n {
            matrix[(i, i)] = Complex64::new(0.0, 0.5 * LINEWIDTH);
            for j in 0..i {
                let g = COUPLING * greens_projected(&(positions[i] - positions[j]))?;
                matrix[(i, j)] = g;
                matrix[(j, i)] = g;
            }
        }
        Ok(InteractionMatrix { matrix })
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.matrix[(i, j)]
    }

    pub fn matrix(&self) -> &Mat<Complex64> {
        &self.matrix
    }

    /// Eigenvalues of the collective decay matrix 2·Im M (M is complex
    /// symmetric, so Im M is its anti-Hermitian part). A passive array has
    /// no negative entries.
    pub fn decay_rates(&self) -> Result<Vec<f64>> {
        let n = self.len();
        let im = Mat::<f64>::from_fn(n, n, |i, j| 2.0 * self.matrix[(i, j)].im);
        im.self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Eigen(format!("{e:?}")))
    }

    /// v^T M v for a real or complex weight vector.
    pub fn bilinear(&self, v: &[Complex64]) -> Complex64 {
        let n = self.len();
        let mut acc = Complex64::default();
        for j in 0..n {
            let mut col = Complex64::default();
            for i in 0..n {
                col += v[i] * self.matrix[(i, j)];
            }
            acc += col * v[j];
        }
        acc
    }
}

/// Drive, detuning and interactions of one steady-state problem.
#[derive(Clone, Copy, Debug)]
pub struct CoupledDipoleSystem<'a> {
    pub interaction: &'a InteractionMatrix,
    pub detuning: f64,
    pub drive: &'a [Complex64],
}

#[derive(Clone, Debug)]
pub struct SteadyState {
    pub sigma: Vec<Complex64>,
    pub detuning: f64,
    /// ‖(δ + M)σ + E‖ / ‖E‖.
    pub residual: f64,
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Solves (δ + M) σ = −E by LU with partial pivoting.
pub fn solve_steady_state(sys: &CoupledDipoleSystem<'_>) -> Result<SteadyState> {
    let n = sys.interaction.len();
    if sys.drive.len() != n {
        return Err(Error::invalid(
            "drive",
            format!("expected {n} entries, got {}", sys.drive.len()),
        ));
    }
    if !sys.detuning.is_finite()
        || sys
            .drive
            .iter()
            .any(|d| !(d.re.is_finite() && d.im.is_finite()))
    {
        return Err(Error::invalid("drive", "detuning and drive must be finite"));
    }
    if n == 0 {
        return Ok(SteadyState {
            sigma: Vec::new(),
            detuning: sys.detuning,
            residual: 0.0,
        });
    }
    let mut a = sys.interaction.matrix.clone();
    for i in 0..n {
        a[(i, i)] += sys.detuning;
    }
    let lu = a.partial_piv_lu();
    let condition = {
        let u = lu.U();
        let d: Vec<f64> = (0..n).map(|i| u[(i, i)].norm()).collect();
        let max = d.iter().cloned().fold(0.0, f64::max);
        let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    };
    if condition > SINGULAR_CONDITION {
        return Err(Error::SingularSystem { condition });
    }
    let rhs = Mat::<Complex64>::from_fn(n, 1, |i, _| -sys.drive[i]);
    let x = lu.solve(&rhs);
    let sigma: Vec<Complex64> = (0..n).map(|i| x[(i, 0)]).collect();
    if sigma
        .iter()
        .any(|s| !(s.re.is_finite() && s.im.is_finite()))
    {
        return Err(Error::SingularSystem { condition });
    }
    let residual = residual(sys, &sigma);
    Ok(SteadyState {
        sigma,
        detuning: sys.detuning,
        residual,
    })
}

fn residual(sys: &CoupledDipoleSystem<'_>, sigma: &[Complex64]) -> f64 {
    let n = sigma.len();
    let m = &sys.interaction.matrix;
    let mut r = vec![Complex64::default(); n];
    for j in 0..n {
        let s = sigma[j];
        for i in 0..n {
            r[i] += m[(i, j)] * s;
        }
    }
    for i in 0..n {
        r[i] += sys.detuning * sigma[i] + sys.drive[i];
    }
    let e = norm(sys.drive);
    if e > 0.0 {
        norm(&r) / e
    } else {
        norm(&r)
    }
}

/// Far-field amplitude of the light scattered by dipoles `sigma` at
/// `positions` into the half-space `dir`:
/// ã(k) = (3γλ/2)(i/2k)(I − k̂k̂)·e_d Σ_n σ_n e^{−ik·r_n}.
pub fn scattered_spectrum(
    sigma: &[Complex64],
    positions: &[Vector3<f64>],
    dir: Direction,
    grid: &Arc<SpectralGrid>,
) -> AngularSpectrum {
    let s = dir.sign();
    let ed = dipole_orientation();
    let pre = Complex64::new(0.0, COUPLING / (2.0 * WAVENUMBER));
    let amps = grid
        .nodes()
        .iter()
        .map(|n| {
            let sum: Complex64 = sigma
                .iter()
                .zip(positions.iter())
                .map(|(sg, r)| {
                    sg * Complex64::from_polar(1.0, -(n.kx * r.x + n.ky * r.y + s * n.kz * r.z))
                })
                .sum();
            let u = n.unit(dir);
            transverse(&u, &ed) * (pre * sum)
        })
        .collect();
    AngularSpectrum::from_amplitudes(grid.clone(), dir, amps).expect("one amplitude per node")
}

/// Eigendecomposition M = U Λ U⁻¹, used to evaluate the response at many
/// detunings for the cost of one factorisation.
pub struct Resolvent {
    poles: Vec<Complex64>,
    vectors: Mat<Complex64>,
    lu: faer::linalg::solvers::PartialPivLu<Complex64>,
}

impl Resolvent {
    pub fn new(interaction: &InteractionMatrix) -> Result<Self> {
        let n = interaction.len();
        if n == 0 {
            return Ok(Resolvent {
                poles: Vec::new(),
                vectors: Mat::zeros(0, 0),
                lu: Mat::<Complex64>::zeros(0, 0).partial_piv_lu(),
            });
        }
        let evd = interaction
            .matrix
            .eigen()
            .map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let s = evd.S();
        let poles: Vec<Complex64> = (0..n).map(|i| s[i]).collect();
        let vectors = evd.U().to_owned();
        let lu = vectors.partial_piv_lu();
        Ok(Resolvent { poles, vectors, lu })
    }

    pub fn poles(&self) -> &[Complex64] {
        &self.poles
    }

    /// Pole expansion of ρ(δ) = probeᵀ σ(δ) with (δ + M) σ = −drive.
    pub fn expansion(&self, probe: &[Complex64], drive: &[Complex64]) -> PoleExpansion {
        let n = self.poles.len();
        if n == 0 {
            return PoleExpansion {
                poles: Vec::new(),
                residues: Vec::new(),
            };
        }
        let rhs = Mat::<Complex64>::from_fn(n, 1, |i, _| drive[i]);
        let y = self.lu.solve(&rhs);
        let mut residues = Vec::with_capacity(n);
        for j in 0..n {
            let mut left = Complex64::default();
            for i in 0..n {
                left += probe[i] * self.vectors[(i, j)];
            }
            residues.push(-left * y[(j, 0)]);
        }
        PoleExpansion {
            poles: self.poles.clone(),
            residues,
        }
    }
}

/// ρ(δ) = Σ_j α_j / (λ_j + δ).
#[derive(Clone, Debug)]
pub struct PoleExpansion {
    poles: Vec<Complex64>,
    residues: Vec<Complex64>,
}

impl PoleExpansion {
    pub fn eval(&self, detuning: f64) -> Complex64 {
        self.poles
            .iter()
            .zip(self.residues.iter())
            .map(|(l, a)| a / (l + detuning))
            .sum()
    }

    pub fn poles(&self) -> &[Complex64] {
        &self.poles
    }

    pub fn residues(&self) -> &[Complex64] {
        &self.residues
    }
}
