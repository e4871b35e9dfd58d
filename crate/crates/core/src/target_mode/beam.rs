//! Single tilted Gaussian beams: frames and paraxial profiles.

use std::f64::consts::PI;

use nalgebra::{Rotation3, Vector3};
use num_complex::Complex64;

use crate::diffraction::{Direction, Polarization};
use crate::lattice::{WAVELENGTH, WAVENUMBER};

/// Rotation taking lab coordinates to the frame of a beam travelling along
/// polar angle `theta` and azimuth `phi`: r' = R_y(−θ) R_z(−φ) r.
///
/// Forward beams use θ ∈ [0, π/2); a backward beam along the mirrored
/// direction is described by π − θ.
pub fn beam_frame(theta: f64, phi: f64) -> Rotation3<f64> {
    let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), -theta);
    let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), -phi);
    ry * rz
}

/// Normalised one-dimensional Gaussian profile with waist `w0` at distance
/// `z` from the focus, written with the `e^{+iωt}` phase convention
/// (curvature term −ikξ²/2R, Gouy term +iψ/2).
///
/// |f|² integrates to one over ξ at every z.
pub fn gaussian_1d(xi: f64, z: f64, w0: f64) -> Complex64 {
    let zr = PI * w0 * w0 / WAVELENGTH;
    let w = w0 * (1.0 + (z / zr).powi(2)).sqrt();
    // 1/R written so that z → 0 gives a flat wavefront without dividing by z
    let inv_r = z / (z * z + zr * zr);
    let gouy = (z / zr).atan();
    let amp = ((2.0 / PI).sqrt() / w).sqrt();
    let phase = -WAVENUMBER * xi * xi * inv_r / 2.0 + gouy / 2.0;
    Complex64::from_polar(amp * (-(xi / w).powi(2)).exp(), phase)
}

/// One Gaussian beam of the target mode.
#[derive(Clone, Debug)]
pub struct GaussianBeam {
    pub m: (i32, i32),
    pub theta: f64,
    pub phi: f64,
    pub direction: Direction,
    /// Waists along the beam-frame x′ (in the plane of incidence) and y′ axes.
    pub waist_x: f64,
    pub waist_y: f64,
    pub polarization: Polarization,
    pub unit: Vector3<f64>,
    /// c^α_{mμ} = (e^α_{mμ}·e_d†)/√cos θ_m.
    pub coefficient: Complex64,
    pub frame: Rotation3<f64>,
}

impl GaussianBeam {
    /// Unit propagation vector in the lab frame.
    pub fn axis(&self) -> Vector3<f64> {
        self.frame.inverse() * Vector3::z()
    }

    /// Scalar profile e^{+ikz′} f*(x′) f*(y′) in the `e^{−iωt}` convention,
    /// i.e. the complex conjugate of the `e^{+iωt}` expression.
    pub fn profile(&self, r: &Vector3<f64>) -> Complex64 {
        let p = self.frame * r;
        let fx = gaussian_1d(p.x, p.z, self.waist_x);
        let fy = gaussian_1d(p.y, p.z, self.waist_y);
        (Complex64::from_polar(1.0, -WAVENUMBER * p.z) * fx * fy).conj()
    }
}
