//! Space grid, central finite-difference operators and density vectors.
//!
//! The grid has `d + 2` nodes `x_i = a + i dx`, `dx = (b - a) / (d + 1)`;
//! densities live on the `d` interior nodes and vanish at both ends.

use crate::error::{Error, Result};
use crate::linalg::TridiagOperator;
use crate::params::ModelParams;

/// Tolerance for small negative density values produced by non-monotone
/// schemes.
pub const NEGATIVE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceGrid {
    a: f64,
    b: f64,
    d: usize,
    dx: f64,
}

impl SpaceGrid {
    pub fn new(a: f64, b: f64, d: usize) -> Result<Self> {
        if !(a < 0.0 && 0.0 < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::invalid(format!("grid needs a < 0 < b, got [{a}, {b}]")));
        }
        if d < 3 {
            return Err(Error::invalid(format!("grid needs at least 3 interior points, got {d}")));
        }
        Ok(SpaceGrid {
            a,
            b,
            d,
            dx: (b - a) / (d + 1) as f64,
        })
    }

    /// `[-10, 20]` with 201 interior points.
    pub fn standard() -> Self {
        Self::new(-10.0, 20.0, 201).expect("static grid")
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Node `x_i`, `i = 0..=d+1`.
    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.a + i as f64 * self.dx
    }

    /// Interior node for storage index `k = 0..d` (grid index `k + 1`).
    #[inline]
    pub fn interior(&self, k: usize) -> f64 {
        self.node(k + 1)
    }

    pub fn interior_nodes(&self) -> Vec<f64> {
        (0..self.d).map(|k| self.interior(k)).collect()
    }

    /// `D^x = tridiag(-1, 0, 1) / (2 dx)`.
    pub fn first_derivative(&self) -> TridiagOperator {
        let h = 0.5 / self.dx;
        TridiagOperator::new(self.d, -h, 0.0, h)
    }

    /// `D^xx = tridiag(1, -2, 1) / dx^2`.
    pub fn second_derivative(&self) -> TridiagOperator {
        let h = 1.0 / (self.dx * self.dx);
        TridiagOperator::new(self.d, h, -2.0 * h, h)
    }
}

/// The three generators of the discretized dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Operators {
    /// Noise generator of the SPDE, `-sqrt(rho) D^x`.
    pub a: TridiagOperator,
    /// Drift generator of the SPDE, `D^xx / 2 - beta D^x`.
    pub b: TridiagOperator,
    /// Generator of the shifted PDE, `(1 - rho)/2 D^xx - beta D^x`.
    pub c: TridiagOperator,
}

pub fn build_operators(grid: &SpaceGrid, params: &ModelParams) -> Operators {
    let dx1 = grid.first_derivative();
    let dx2 = grid.second_derivative();
    let beta = params.beta();
    let rho = params.rho();
    Operators {
        a: dx1.scale(-rho.sqrt()),
        b: dx2.scale(0.5).add(&dx1.scale(-beta)),
        c: dx2.scale(0.5 * (1.0 - rho)).add(&dx1.scale(-beta)),
    }
}

/// Density values on the interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityVector(pub Vec<f64>);

impl DensityVector {
    pub fn zeros(d: usize) -> Self {
        DensityVector(vec![0.0; d])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Most negative entry beyond [`NEGATIVE_TOLERANCE`], if any.
    pub fn negative_excess(&self) -> Option<f64> {
        let m = self.0.iter().cloned().fold(0.0, f64::min);
        (m < -NEGATIVE_TOLERANCE).then_some(m)
    }
}

/// Smoothed initial datum and how much mass fell outside the interior.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialDatum {
    pub density: DensityVector,
    pub clamped_mass: f64,
}

/// Projects the empirical measure of `x0` onto nodal hat functions:
/// `u_i = (1 / (K dx)) sum_k hat_i(x0_k)` with `hat_i` peaking at 1 on `x_i`.
/// Mass landing on the two boundary nodes (or beyond) is dropped and
/// reported.
pub fn smooth_initial_datum(x0: &[f64], grid: &SpaceGrid) -> Result<InitialDatum> {
    if x0.is_empty() {
        return Err(Error::invalid("empty x0 vector"));
    }
    if let Some(x) = x0.iter().find(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("non-finite x0 entry {x}")));
    }
    let d = grid.d();
    let dx = grid.dx();
    let weight = 1.0 / (x0.len() as f64 * dx);
    let mut u = vec![0.0; d];
    let mut kept = 0.0;
    for &x in x0 {
        let s = (x - grid.a()) / dx;
        if s < 0.0 || s > (d + 1) as f64 {
            continue;
        }
        let left = (s.floor() as usize).min(d);
        let frac = s - left as f64;
        // hats on node `left` and `left + 1`
        for (node, w) in [(left, 1.0 - frac), (left + 1, frac)] {
            if (1..=d).contains(&node) && w > 0.0 {
                u[node - 1] += weight * w;
                kept += w;
            }
        }
    }
    let clamped_mass = 1.0 - kept / x0.len() as f64;
    Ok(InitialDatum {
        density: DensityVector(u),
        clamped_mass: if clamped_mass.abs() < 1e-15 { 0.0 } else { clamped_mass },
    })
}

/// Trapezoidal integral with zero boundary values.
pub fn mass(v: &[f64], grid: &SpaceGrid) -> f64 {
    grid.dx() * v.iter().sum::<f64>()
}

/// Trapezoidal integral of the positive part.
pub fn mass_clipped(v: &[f64], grid: &SpaceGrid) -> f64 {
    grid.dx() * v.iter().map(|x| x.max(0.0)).sum::<f64>()
}

/// Zeroes the density at nodes `x_i <= 0`.
pub fn truncate_at_barrier(v: &mut [f64], grid: &SpaceGrid) {
    for (k, x) in v.iter_mut().enumerate() {
        if grid.interior(k) > 0.0 {
            break;
        }
        *x = 0.0;
    }
}

/// Column-major collection of one density vector per common-factor path.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEnsemble {
    d: usize,
    data: Vec<f64>,
}

impl DensityEnsemble {
    /// `paths` copies of `v`.
    pub fn replicate(v: &DensityVector, paths: usize) -> Self {
        let d = v.len();
        let mut data = Vec::with_capacity(d * paths);
        for _ in 0..paths {
            data.extend_from_slice(v.values());
        }
        DensityEnsemble { d, data }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn paths(&self) -> usize {
        self.data.len().checked_div(self.d).unwrap_or(0)
    }

    pub fn path(&self, m: usize) -> &[f64] {
        &self.data[m * self.d..(m + 1) * self.d]
    }

    pub fn path_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.data[m * self.d..(m + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}
