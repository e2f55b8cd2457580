//! Differential approximation of the four-wave collision integral.
//!
//! The carrier kinetics are written as ∂N/∂t = ∂²K/∂ω² with the flux
//! functional
//!
//! ```text
//! K = -I ω^s ( n⁴ (1/n)'' + n² (ln n)'' )
//!   = -I ω^s ( n(1-n) n'' + (2n-1) (n')² )
//! ```
//!
//! The expanded second line has no singular intermediates and is what the
//! stencils use. The carrier flux is Q = K' and the energy flux is
//! P = K - ωK'.

use serde::{Deserialize, Serialize};

use crate::banded::BandedMatrix;
use crate::error::{Error, Result};
use crate::model::{MaterialParams, SpectralGrid};

/// Occupations are clamped to `[OCCUPATION_CLAMP, 1 - OCCUPATION_CLAMP]`
/// before logs and reciprocals.
pub const OCCUPATION_CLAMP: f64 = 1e-12;

#[inline]
pub fn clamp_occupation(n: f64) -> f64 {
    n.clamp(OCCUPATION_CLAMP, 1.0 - OCCUPATION_CLAMP)
}

/// Carrier flux Q and energy flux P imposed at the two window edges.
///
/// With these conventions the window totals obey
/// `d/dt ∫N = q_right - q_left` and `d/dt ∫ωN = p_left - p_right`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryFluxes {
    pub q_left: f64,
    pub p_left: f64,
    pub q_right: f64,
    pub p_right: f64,
}

impl BoundaryFluxes {
    pub const fn zero() -> Self {
        BoundaryFluxes {
            q_left: 0.0,
            p_left: 0.0,
            q_right: 0.0,
            p_right: 0.0,
        }
    }

    pub const fn uniform(q: f64, p: f64) -> Self {
        BoundaryFluxes {
            q_left: q,
            p_left: p,
            q_right: q,
            p_right: p,
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::zero()
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("bc.q_left", self.q_left),
            ("bc.p_left", self.p_left),
            ("bc.q_right", self.q_right),
            ("bc.p_right", self.p_right),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(key, "boundary fluxes must be finite"));
            }
        }
        Ok(())
    }

    /// K at the left edge implied by K = Qω + P.
    pub fn k_left(&self, omega: f64) -> f64 {
        self.q_left * omega + self.p_left
    }

    pub fn k_right(&self, omega: f64) -> f64 {
        self.q_right * omega + self.p_right
    }

    pub fn scaled(&self, c: f64) -> Self {
        BoundaryFluxes {
            q_left: c * self.q_left,
            p_left: c * self.p_left,
            q_right: c * self.q_right,
            p_right: c * self.p_right,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluxField {
    pub k: Vec<f64>,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

/// Algebraic form used for K at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KForm {
    /// `n(1-n) n'' + (2n-1) n'²`.
    Expanded,
    /// `n⁴ (1/n)'' + n² (ln n)''` with the derivatives of 1/n and ln n
    /// expanded by the chain rule. Kept as a cross-check.
    Literal,
    /// `n²(1-n)² y''` with `y = ln(n / (1-n))`.
    Logit,
}

/// The bracket of K (without the `-I ω^s` prefactor) from local derivatives.
#[inline]
pub fn k_bracket(n: f64, dn: f64, d2n: f64, form: KForm) -> f64 {
    match form {
        KForm::Expanded => n * (1.0 - n) * d2n + (2.0 * n - 1.0) * dn * dn,
        KForm::Literal => {
            let inv_dd = 2.0 * dn * dn / (n * n * n) - d2n / (n * n);
            let log_dd = d2n / n - dn * dn / (n * n);
            n.powi(4) * inv_dd + n * n * log_dd
        }
        KForm::Logit => {
            let g = n * (1.0 - n);
            let y_dd = d2n / g - (1.0 - 2.0 * n) * dn * dn / (g * g);
            g * g * y_dd
        }
    }
}

/// K at a single point from the occupation and its first two derivatives.
#[inline]
pub fn k_pointwise(n: f64, dn: f64, d2n: f64, omega: f64, params: &MaterialParams, form: KForm) -> f64 {
    -params.collision_strength * omega.powf(params.s) * k_bracket(clamp_occupation(n), dn, d2n, form)
}

/// Finite-difference discretization of K on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stencil {
    /// `K = -I ω^s g² y''` with `g = n(1-n)` and the second difference
    /// taken on `y = logit(n)`. Fermi-Dirac states have linear `y`, so the
    /// discrete K of any Fermi-Dirac state vanishes to rounding.
    #[default]
    Logit,
    /// Differences taken on n itself, evaluated with the given form.
    Occupation(KForm),
}

/// Intrinsic magnitude of K on a window: `I ω_max^s / (ω_max - ω_min)²`,
/// i.e. the size of K for an occupation that varies by O(1) across the
/// window at the upper edge.
pub fn k_scale(grid: &SpectralGrid, params: &MaterialParams) -> f64 {
    params.collision_strength * grid.omega_max.powf(params.s) / (grid.width() * grid.width())
}

fn check_occupations(n: &[f64], grid: &SpectralGrid) -> Result<()> {
    grid.check_len(n.len())?;
    for (index, &value) in n.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::PauliViolation { index, value });
        }
    }
    Ok(())
}

#[inline]
pub fn logit(n: f64) -> f64 {
    let n = clamp_occupation(n);
    (n / (1.0 - n)).ln()
}

/// First and second derivative of nodal data: centered in the interior,
/// one-sided second order at the edges.
pub fn derivatives(values: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let m = values.len();
    let v = values;
    let mut d1 = vec![0.0; m];
    let mut d2 = vec![0.0; m];
    for i in 1..m - 1 {
        d1[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
        d2[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h);
    }
    d1[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    d2[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / (h * h);
    let l = m - 1;
    d1[l] = (3.0 * v[l] - 4.0 * v[l - 1] + v[l - 2]) / (2.0 * h);
    d2[l] = (2.0 * v[l] - 5.0 * v[l - 1] + 4.0 * v[l - 2] - v[l - 3]) / (h * h);
    (d1, d2)
}

/// K at every node (one-sided differences at the two edges).
pub fn flux_k(n: &[f64], grid: &SpectralGrid, params: &MaterialParams) -> Result<Vec<f64>> {
    flux_k_with(n, grid, params, Stencil::Logit)
}

pub fn flux_k_with(n: &[f64], grid: &SpectralGrid, params: &MaterialParams, stencil: Stencil) -> Result<Vec<f64>> {
    check_occupations(n, grid)?;
    let clamped: Vec<f64> = n.iter().map(|&v| clamp_occupation(v)).collect();
    let h = grid.delta();
    let k = match stencil {
        Stencil::Logit => {
            let y: Vec<f64> = clamped.iter().map(|&v| logit(v)).collect();
            let (_, y_dd) = derivatives(&y, h);
            (0..grid.m)
                .map(|i| {
                    let g = clamped[i] * (1.0 - clamped[i]);
                    prefactor(grid.omega(i), params) * g * g * y_dd[i]
                })
                .collect()
        }
        Stencil::Occupation(form) => {
            let (d1, d2) = derivatives(&clamped, h);
            (0..grid.m)
                .map(|i| k_pointwise(clamped[i], d1[i], d2[i], grid.omega(i), params, form))
                .collect()
        }
    };
    Ok(k)
}

#[inline]
fn prefactor(omega: f64, params: &MaterialParams) -> f64 {
    -params.collision_strength * omega.powf(params.s)
}

/// Q = ∂K/∂ω.
pub fn flux_q(k: &[f64], grid: &SpectralGrid) -> Result<Vec<f64>> {
    grid.check_len(k.len())?;
    Ok(derivatives(k, grid.delta()).0)
}

/// P = K - ω ∂K/∂ω.
pub fn flux_p(k: &[f64], grid: &SpectralGrid) -> Result<Vec<f64>> {
    let q = flux_q(k, grid)?;
    Ok(k.iter()
        .zip(&q)
        .enumerate()
        .map(|(i, (k, q))| k - grid.omega(i) * q)
        .collect())
}

pub fn flux_field(n: &[f64], grid: &SpectralGrid, params: &MaterialParams) -> Result<FluxField> {
    let k = flux_k(n, grid, params)?;
    let q = flux_q(&k, grid)?;
    let p = k
        .iter()
        .zip(&q)
        .enumerate()
        .map(|(i, (k, q))| k - grid.omega(i) * q)
        .collect();
    Ok(FluxField { k, q, p })
}

/// ω-dependent factor `-I ω^s` at every node.
pub(crate) fn prefactors(grid: &SpectralGrid, params: &MaterialParams) -> Vec<f64> {
    grid.nodes().into_iter().map(|w| prefactor(w, params)).collect()
}

/// Interior K from the logit stencil with the edge values set by the
/// boundary condition, together with the partials of each interior K_l with
/// respect to `(n_{l-1}, n_l, n_{l+1})`.
pub(crate) struct Linearization {
    pub k: Vec<f64>,
    pub partials: Vec<[f64; 3]>,
}

pub(crate) fn linearize(
    n: &[f64],
    grid: &SpectralGrid,
    prefactor: &[f64],
    bc: &BoundaryFluxes,
    with_partials: bool,
) -> Linearization {
    let m = grid.m;
    let h2 = grid.delta() * grid.delta();
    let clamped: Vec<f64> = n.iter().map(|&v| clamp_occupation(v)).collect();
    let g: Vec<f64> = clamped.iter().map(|v| v * (1.0 - v)).collect();
    let y: Vec<f64> = clamped.iter().map(|v| (v / (1.0 - v)).ln()).collect();
    let mut k = vec![0.0; m];
    let mut partials = if with_partials { vec![[0.0; 3]; m] } else { Vec::new() };
    for i in 1..m - 1 {
        let y_dd = (y[i + 1] - 2.0 * y[i] + y[i - 1]) / h2;
        let c = prefactor[i];
        let gi = g[i];
        k[i] = c * gi * gi * y_dd;
        if with_partials {
            partials[i] = [
                c * gi * gi / (h2 * g[i - 1]),
                c * (2.0 * gi * (1.0 - 2.0 * clamped[i]) * y_dd - 2.0 * gi / h2),
                c * gi * gi / (h2 * g[i + 1]),
            ];
        }
    }
    k[0] = bc.k_left(grid.omega_min);
    k[m - 1] = bc.k_right(grid.omega(m - 1));
    Linearization { k, partials }
}

pub(crate) fn k_with_boundary(
    n: &[f64],
    grid: &SpectralGrid,
    params: &MaterialParams,
    bc: &BoundaryFluxes,
) -> Vec<f64> {
    linearize(n, grid, &prefactors(grid, params), bc, false).k
}

/// ∂²K/∂ω² = dN/dt at every node under flux boundary conditions.
///
/// The edge value of K is fixed to `Qω + P` and one ghost value beyond each
/// edge is chosen so that the centered derivative there equals the imposed
/// Q. With trapezoid weights `w` this gives, exactly up to rounding,
/// `Σ w·dN/dt = q_right - q_left` and `Σ w·ω·dN/dt = p_left - p_right`.
pub fn collision_rhs(n: &[f64], grid: &SpectralGrid, params: &MaterialParams, bc: &BoundaryFluxes) -> Result<Vec<f64>> {
    check_occupations(n, grid)?;
    bc.validate()?;
    Ok(collision_rhs_unchecked(n, grid, params, bc))
}

pub(crate) fn collision_rhs_unchecked(
    n: &[f64],
    grid: &SpectralGrid,
    params: &MaterialParams,
    bc: &BoundaryFluxes,
) -> Vec<f64> {
    let k = k_with_boundary(n, grid, params, bc);
    closed_second_difference(&k, grid.delta(), bc)
}

/// ∂²K/∂ω² with the ghost-node closure that imposes Q at both edges.
pub(crate) fn closed_second_difference(k: &[f64], h: f64, bc: &BoundaryFluxes) -> Vec<f64> {
    let m = k.len();
    let mut out = vec![0.0; m];
    out[0] = 2.0 / h * ((k[1] - k[0]) / h - bc.q_left);
    for i in 1..m - 1 {
        out[i] = (k[i + 1] - 2.0 * k[i] + k[i - 1]) / (h * h);
    }
    out[m - 1] = 2.0 / h * (bc.q_right - (k[m - 1] - k[m - 2]) / h);
    out
}

/// Jacobian ∂(dN/dt)/∂n of [`collision_rhs`]. It is pentadiagonal and does
/// not depend on the boundary fluxes.
pub fn collision_jacobian(n: &[f64], grid: &SpectralGrid, params: &MaterialParams) -> Result<BandedMatrix> {
    check_occupations(n, grid)?;
    let lin = linearize(n, grid, &prefactors(grid, params), &BoundaryFluxes::zero(), true);
    Ok(assemble_jacobian(&lin.partials, grid.delta()))
}

/// dN_r/dt = Σ_l L[r][l] K_l with only the interior K_l depending on n, so
/// the Jacobian is L times the tridiagonal matrix of K partials.
pub(crate) fn assemble_jacobian(partials: &[[f64; 3]], h: f64) -> BandedMatrix {
    let m = partials.len();
    let h2 = h * h;
    let mut jac = BandedMatrix::pentadiagonal(m);
    for l in 1..m - 1 {
        // Rows r that reference K_l, with the stencil coefficient L[r][l].
        let mut rows: [(usize, f64); 3] = [(l - 1, 1.0 / h2), (l, -2.0 / h2), (l + 1, 1.0 / h2)];
        if l == 1 {
            rows[0].1 = 2.0 / h2;
        }
        if l == m - 2 {
            rows[2].1 = 2.0 / h2;
        }
        for (r, coeff) in rows {
            for (offset, dk) in partials[l].iter().enumerate() {
                jac.add(r, l + offset - 1, coeff * dk);
            }
        }
    }
    jac
}
