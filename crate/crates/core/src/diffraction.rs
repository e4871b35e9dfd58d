//! Infinite-array diffraction analytics: radiative orders, their decay rates,
//! target-mode coefficients and the ideal interface efficiency.

use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::lattice::{dipole_orientation, Lattice, WAVENUMBER};
use crate::metrics::{InterfaceResult, ResultSource};
use crate::{Error, Result};

/// Orders with cos θ below this are treated as grazing and left out.
pub const GRAZING_COS: f64 = 1e-6;

/// Propagation half-space of a beam: α = + (towards +z) or α = − (towards −z).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    /// +1 for forward, −1 for backward.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }

    pub fn reversed(self) -> Direction {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    S,
    P,
}

impl Polarization {
    pub const BOTH: [Polarization; 2] = [Polarization::S, Polarization::P];
}

/// A reciprocal-lattice beam direction, possibly offset by an in-plane
/// momentum `k_shift`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffractionOrder {
    pub m: (i32, i32),
    /// In-plane momentum q_m + k_shift.
    pub q: Vector2<f64>,
    /// cos θ_m; zero for evanescent orders.
    pub cos_theta: f64,
    pub theta: f64,
    pub phi: f64,
    pub radiative: bool,
}

impl DiffractionOrder {
    pub fn new(lattice: &Lattice, m: (i32, i32), k_shift: Vector2<f64>) -> Self {
        let q = lattice.reciprocal_vector(m) + k_shift;
        let s = q.norm() / WAVENUMBER;
        let radiative = s < 1.0;
        let cos_theta = if radiative { (1.0 - s * s).sqrt() } else { 0.0 };
        let theta = if radiative { s.asin() } else { PI / 2.0 };
        let phi = if q.norm() == 0.0 { 0.0 } else { q.y.atan2(q.x) };
        DiffractionOrder {
            m,
            q,
            cos_theta,
            theta,
            phi,
            radiative,
        }
    }

    /// k_z^m = k cos θ_m.
    pub fn kz(&self) -> f64 {
        WAVENUMBER * self.cos_theta
    }

    /// Unit propagation vector in the given half-space.
    pub fn propagation(&self, dir: Direction) -> Vector3<f64> {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        Vector3::new(st * cp, st * sp, dir.sign() * ct)
    }

    /// Polarization unit vectors e^±_{mμ}. The backward basis is the z-mirror
    /// of the forward one: e_s is unchanged and the z component of e_p flips.
    pub fn polarization(&self, pol: Polarization, dir: Direction) -> Vector3<f64> {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        match pol {
            Polarization::S => Vector3::new(-sp, cp, 0.0),
            Polarization::P => Vector3::new(ct * cp, ct * sp, -dir.sign() * st),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderSetLabel {
    /// Every radiative order, R ∪ {0}.
    AllRadiative,
    /// The zeroth order plus the first reciprocal shell, R1 ∪ {0}.
    FirstShell,
    Custom,
}

/// A set of distinct radiative diffraction orders.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderSet {
    orders: Vec<DiffractionOrder>,
    label: OrderSetLabel,
    grazing: Vec<(i32, i32)>,
    k_shift: Vector2<f64>,
}

impl OrderSet {
    /// Builds a custom set; every listed order must be radiative at `k_shift`.
    pub fn custom(lattice: &Lattice, ms: &[(i32, i32)], k_shift: Vector2<f64>) -> Result<Self> {
        let mut orders: Vec<DiffractionOrder> = Vec::with_capacity(ms.len());
        for &m in ms {
            if orders.iter().any(|o| o.m == m) {
                continue;
            }
            let o = DiffractionOrder::new(lattice, m, k_shift);
            if !o.radiative || o.cos_theta < GRAZING_COS {
                return Err(Error::EvanescentOrder { m });
            }
            orders.push(o);
        }
        Ok(OrderSet {
            orders,
            label: OrderSetLabel::Custom,
            grazing: Vec::new(),
            k_shift,
        })
    }

    pub fn orders(&self) -> &[DiffractionOrder] {
        &self.orders
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DiffractionOrder> {
        self.orders.iter()
    }

    pub fn len(&self) -> usize {
        self.orders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }

    pub fn label(&self) -> OrderSetLabel {
        self.label
    }

    pub fn k_shift(&self) -> Vector2<f64> {
        self.k_shift
    }

    /// Orders that sit at the radiative edge and were excluded.
    pub fn grazing(&self) -> &[(i32, i32)] {
        &self.grazing
    }

    pub fn includes_zero(&self) -> bool {
        self.contains((0, 0))
    }

    pub fn contains(&self, m: (i32, i32)) -> bool {
        self.orders.iter().any(|o| o.m == m)
    }

    pub fn indices(&self) -> Vec<(i32, i32)> {
        self.orders.iter().map(|o| o.m).collect()
    }

    pub fn is_subset_of(&self, other: &OrderSet) -> bool {
        self.orders.iter().all(|o| other.contains(o.m))
    }
}

pub(crate) fn enumeration_bound(lattice: &Lattice, k_shift: Vector2<f64>) -> i32 {
    // |m1| ≤ a(k + |k_shift|)/2π and |m2| ≤ |m1| |cos ψ| + a sin ψ (k + |k_shift|)/2π
    let reach = lattice.spacing() * (WAVENUMBER + k_shift.norm()) / WAVENUMBER;
    (2.0 * reach).ceil() as i32 + 1
}

/// All orders m with |q_m + k_shift| < k, ordered by (|q|, m).
pub fn radiative_orders(lattice: &Lattice, k_shift: Vector2<f64>) -> OrderSet {
    let bound = enumeration_bound(lattice, k_shift);
    let mut orders = Vec::new();
    let mut grazing = Vec::new();
    for m1 in -bound..=bound {
        for m2 in -bound..=bound {
            let o = DiffractionOrder::new(lattice, (m1, m2), k_shift);
            if !o.radiative {
                continue;
            }
            if o.cos_theta < GRAZING_COS {
                grazing.push(o.m);
            } else {
                orders.push(o);
            }
        }
    }
    orders.sort_by(|a, b| a.q.norm().total_cmp(&b.q.norm()).then(a.m.cmp(&b.m)));
    if !grazing.is_empty() {
        log::warn!("grazing diffraction orders excluded: {grazing:?}");
    }
    OrderSet {
        orders,
        label: OrderSetLabel::AllRadiative,
        grazing,
        k_shift,
    }
}

/// The zeroth order plus the first reciprocal shell (those of its members
/// that are radiative at k_⊥ = 0).
pub fn first_shell(lattice: &Lattice) -> OrderSet {
    let shell = match lattice.kind() {
        crate::LatticeKind::Triangular => vec![(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1)],
        crate::LatticeKind::Square => vec![(1, 0), (-1, 0), (0, 1), (0, -1)],
    };
    let mut orders = vec![DiffractionOrder::new(lattice, (0, 0), Vector2::zeros())];
    let mut grazing = Vec::new();
    for m in shell {
        let o = DiffractionOrder::new(lattice, m, Vector2::zeros());
        if o.radiative && o.cos_theta >= GRAZING_COS {
            orders.push(o);
        } else if o.radiative {
            grazing.push(m);
        }
    }
    OrderSet {
        orders,
        label: OrderSetLabel::FirstShell,
        grazing,
        k_shift: Vector2::zeros(),
    }
}

/// Zeroth-order decay rate of the uniform collective dipole, (3/4π) λ²/A_cell.
///
/// For the square lattice A_cell = a², the familiar (3/4π)(λ/a)².
pub fn gamma0(lattice: &Lattice) -> f64 {
    3.0 / (4.0 * PI) / lattice.cell_area()
}

pub(crate) fn gamma_of(lattice: &Lattice, order: &DiffractionOrder) -> f64 {
    // circular dipole: |v·e_d|² = |v|²/2 for a real in-plane v
    let proj = order.q.norm_squared() / (2.0 * WAVENUMBER * WAVENUMBER);
    gamma0(lattice) * (1.0 - proj) / order.cos_theta
}

/// Decay rate Γ_m(k_⊥) of the collective dipole into order m.
pub fn gamma_order(lattice: &Lattice, m: (i32, i32), k_shift: Vector2<f64>) -> Result<f64> {
    let o = DiffractionOrder::new(lattice, m, k_shift);
    if !o.radiative || o.cos_theta < GRAZING_COS {
        return Err(Error::EvanescentOrder { m });
    }
    Ok(gamma_of(lattice, &o))
}

/// Total decay rate into a set of orders.
pub fn gamma_sum(lattice: &Lattice, orders: &OrderSet) -> f64 {
    orders.iter().map(|o| gamma_of(lattice, o)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeCoefficient {
    pub m: (i32, i32),
    pub polarization: Polarization,
    pub direction: Direction,
    pub value: Complex64,
}

/// Coefficient c^α_{mμ} = (e^α_{mμ} · e_d†)/√cos θ_m of one plane-wave component.
pub fn coefficient(order: &DiffractionOrder, pol: Polarization, dir: Direction) -> Complex64 {
    let e = order.polarization(pol, dir);
    let ed = dipole_orientation();
    let dot: Complex64 = (0..3).map(|i| e[i] * ed[i].conj()).sum();
    dot / order.cos_theta.sqrt()
}

pub fn mode_coefficients(orders: &OrderSet, dir: Direction) -> Vec<ModeCoefficient> {
    orders
        .iter()
        .flat_map(|o| {
            Polarization::BOTH
                .into_iter()
                .map(move |pol| ModeCoefficient {
                    m: o.m,
                    polarization: pol,
                    direction: dir,
                    value: coefficient(o, pol, dir),
                })
        })
        .collect()
}

/// Ideal efficiency of an infinite array whose target mode spans `target`:
/// Γ = Σ_target Γ_m, γ_loss = Σ_R∪0 Γ_m − Γ.
pub fn r0_infinite(lattice: &Lattice, target: &OrderSet) -> Result<InterfaceResult> {
    let all = radiative_orders(lattice, Vector2::zeros());
    if let Some(o) = target.iter().find(|o| !all.contains(o.m)) {
        return Err(Error::EvanescentOrder { m: o.m });
    }
    let gamma = gamma_sum(lattice, target);
    let total = gamma_sum(lattice, &all);
    let gamma_loss = (total - gamma).max(0.0);
    let mut res = InterfaceResult::from_rates(gamma, gamma_loss, 0.0, ResultSource::InfiniteTheory);
    res.diagnostics
        .insert("radiative_orders".into(), all.len() as f64);
    res.diagnostics
        .insert("target_orders".into(), target.len() as f64);
    res.diagnostics.insert("gamma0".into(), gamma0(lattice));
    Ok(res)
}
