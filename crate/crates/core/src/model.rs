//! Material constants, the quadratic dispersion relation and the spectral grid.
//!
//! Energies are in meV and times in fs throughout. The "frequency" variable
//! `omega` is stored as an energy (ℏω in meV); it is divided by ℏ only where a
//! true angular frequency is needed.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ℏ in meV·fs.
pub const HBAR_MEV_FS: f64 = 658.211_956_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialParams {
    /// Band offset of the dispersion (meV).
    pub alpha: f64,
    /// Dispersion curvature (meV·nm²).
    pub beta: f64,
    /// Exponent of ω in the flux functional.
    pub s: f64,
    /// Collision strength.
    #[serde(rename = "I")]
    pub collision_strength: f64,
    pub mu0: f64,
    /// Gap energy used by the dipole model (meV).
    pub eps_gap: f64,
    /// Cavity frequency, stored as an energy (meV).
    #[serde(rename = "Omega")]
    pub omega_cavity: f64,
    #[serde(rename = "gamma_E")]
    pub gamma_e: f64,
    #[serde(rename = "gamma_P")]
    pub gamma_p: f64,
    pub gamma_k: f64,
    #[serde(rename = "Lambda")]
    pub pump_rate: f64,
    pub hbar: f64,
    pub eps0: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams {
            alpha: 0.0,
            beta: 1.0,
            s: 7.0,
            collision_strength: 1.0,
            mu0: 1.0,
            eps_gap: 1424.0,
            omega_cavity: 1.0,
            gamma_e: 1e-3,
            gamma_p: 1e-2,
            gamma_k: 1e-5,
            pump_rate: 0.0,
            hbar: HBAR_MEV_FS,
            eps0: 1.0,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("s", self.s),
            ("I", self.collision_strength),
            ("mu0", self.mu0),
            ("eps_gap", self.eps_gap),
            ("Omega", self.omega_cavity),
            ("gamma_E", self.gamma_e),
            ("gamma_P", self.gamma_p),
            ("gamma_k", self.gamma_k),
            ("Lambda", self.pump_rate),
            ("hbar", self.hbar),
            ("eps0", self.eps0),
        ];
        for (key, v) in finite {
            if !v.is_finite() {
                return Err(Error::invalid(key, "must be finite"));
            }
        }
        if self.beta <= 0.0 {
            return Err(Error::invalid("beta", "must be positive"));
        }
        if self.s <= 0.0 {
            return Err(Error::invalid("s", "must be positive"));
        }
        if self.collision_strength <= 0.0 {
            return Err(Error::invalid("I", "must be positive"));
        }
        if self.hbar <= 0.0 {
            return Err(Error::invalid("hbar", "must be positive"));
        }
        if self.eps_gap <= 0.0 {
            return Err(Error::invalid("eps_gap", "must be positive"));
        }
        if self.eps0 <= 0.0 {
            return Err(Error::invalid("eps0", "must be positive"));
        }
        for (key, v) in [
            ("gamma_E", self.gamma_e),
            ("gamma_P", self.gamma_p),
            ("gamma_k", self.gamma_k),
            ("Lambda", self.pump_rate),
        ] {
            if v < 0.0 {
                return Err(Error::invalid(key, "rates must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn with_collision_strength(mut self, i: f64) -> Self {
        self.collision_strength = i;
        self
    }
}

/// Uniform grid over `[omega_min, omega_max]` with `m` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralGrid {
    pub omega_min: f64,
    pub omega_max: f64,
    pub m: usize,
}

impl SpectralGrid {
    pub const MIN_POINTS: usize = 8;

    pub fn new(omega_min: f64, omega_max: f64, m: usize) -> Result<Self> {
        let grid = SpectralGrid {
            omega_min,
            omega_max,
            m,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.omega_min.is_finite() || !self.omega_max.is_finite() {
            return Err(Error::invalid("grid.omega_min", "window bounds must be finite"));
        }
        if self.omega_max <= self.omega_min {
            return Err(Error::invalid(
                "grid.omega_min",
                format!(
                    "omega_min ({}) must be below omega_max ({})",
                    self.omega_min, self.omega_max
                ),
            ));
        }
        if self.m < Self::MIN_POINTS {
            return Err(Error::invalid(
                "grid.m",
                format!("need at least {} nodes, got {}", Self::MIN_POINTS, self.m),
            ));
        }
        Ok(())
    }

    /// Grid must not reach below the band edge.
    pub fn validate_against(&self, params: &MaterialParams) -> Result<()> {
        self.validate()?;
        if self.omega_min < params.alpha {
            return Err(Error::invalid(
                "grid.omega_min",
                format!("window starts below the band edge alpha = {}", params.alpha),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn delta(&self) -> f64 {
        (self.omega_max - self.omega_min) / (self.m - 1) as f64
    }

    #[inline]
    pub fn omega(&self, i: usize) -> f64 {
        self.omega_min + i as f64 * self.delta()
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.delta();
        (0..self.m).map(|i| self.omega_min + i as f64 * h).collect()
    }

    pub fn width(&self) -> f64 {
        self.omega_max - self.omega_min
    }

    /// Same window with twice the resolution (`2m - 1` nodes).
    pub fn refined(&self) -> Self {
        SpectralGrid {
            m: 2 * self.m - 1,
            ..*self
        }
    }

    /// Composite trapezoid weights.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.delta();
        let mut w = vec![h; self.m];
        w[0] = 0.5 * h;
        w[self.m - 1] = 0.5 * h;
        w
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.m {
            return Err(Error::LengthMismatch {
                expected: self.m,
                got: len,
            });
        }
        Ok(())
    }
}

/// Occupation numbers n_ω ∈ [0, 1] on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CarrierDistribution {
    values: Vec<f64>,
}

impl CarrierDistribution {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (index, &value) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::PauliViolation { index, value });
            }
        }
        Ok(CarrierDistribution { values })
    }

    /// Clamps every value into `[lo, hi]`; NaN is left for the caller to catch.
    pub fn clamped(mut values: Vec<f64>, lo: f64, hi: f64) -> Self {
        for v in values.iter_mut() {
            *v = v.clamp(lo, hi);
        }
        CarrierDistribution { values }
    }

    pub fn from_fn(grid: &SpectralGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid.nodes().into_iter().map(f).collect())
    }

    pub fn uniform(grid: &SpectralGrid, value: f64) -> Result<Self> {
        Self::new(vec![value; grid.m])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs_diff(&self, other: &CarrierDistribution) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl AsRef<[f64]> for CarrierDistribution {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// ω(k) = α + βk².
pub fn omega_of_k(k: f64, params: &MaterialParams) -> Result<f64> {
    if !(k >= 0.0) {
        return Err(Error::Domain {
            quantity: "k",
            value: k,
            reason: "wavenumber must be non-negative",
        });
    }
    Ok(params.alpha + params.beta * k * k)
}

pub fn k_of_omega(omega: f64, params: &MaterialParams) -> Result<f64> {
    if !(omega >= params.alpha) {
        return Err(Error::Domain {
            quantity: "omega",
            value: omega,
            reason: "below the band edge",
        });
    }
    Ok(((omega - params.alpha) / params.beta).sqrt())
}

/// J(ω) = 4πk² dk/dω = 2πk/β, so that N_ω = J(ω) n_ω.
pub fn density_jacobian(omega: f64, params: &MaterialParams) -> Result<f64> {
    let k = k_of_omega(omega, params)?;
    Ok(2.0 * PI * k / params.beta)
}

pub fn jacobian_on_grid(grid: &SpectralGrid, params: &MaterialParams) -> Result<Vec<f64>> {
    grid.nodes().into_iter().map(|w| density_jacobian(w, params)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityDirection {
    /// Occupation n to spectral density N.
    ToSpectral,
    /// Spectral density N to occupation n.
    ToOccupation,
}

/// Nodewise N = J n, or its inverse.
pub fn convert_density(
    values: &[f64],
    grid: &SpectralGrid,
    params: &MaterialParams,
    direction: DensityDirection,
) -> Result<Vec<f64>> {
    grid.check_len(values.len())?;
    let jac = jacobian_on_grid(grid, params)?;
    match direction {
        DensityDirection::ToSpectral => Ok(values.iter().zip(&jac).map(|(n, j)| n * j).collect()),
        DensityDirection::ToOccupation => values
            .iter()
            .zip(&jac)
            .enumerate()
            .map(|(index, (big_n, j))| {
                if *j > 0.0 {
                    Ok(big_n / j)
                } else {
                    Err(Error::DegenerateNode { index })
                }
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralTotals {
    pub carriers: f64,
    pub energy: f64,
}

/// Trapezoid integrals of N and ωN for a spectral density given directly.
pub fn density_totals(density: &[f64], grid: &SpectralGrid) -> Result<SpectralTotals> {
    grid.check_len(density.len())?;
    let w = grid.trapezoid_weights();
    let mut carriers = 0.0;
    let mut energy = 0.0;
    for (i, (&big_n, &wi)) in density.iter().zip(&w).enumerate() {
        carriers += wi * big_n;
        energy += wi * grid.omega(i) * big_n;
    }
    Ok(SpectralTotals { carriers, energy })
}

pub fn spectral_totals(
    dist: &CarrierDistribution,
    grid: &SpectralGrid,
    params: &MaterialParams,
) -> Result<SpectralTotals> {
    let density = convert_density(dist.values(), grid, params, DensityDirection::ToSpectral)?;
    density_totals(&density, grid)
}

/// Trapezoid rule on the grid.
pub fn trapezoid(values: &[f64], grid: &SpectralGrid) -> f64 {
    let h = grid.delta();
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    h * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(alpha: f64, beta: f64) -> MaterialParams {
        MaterialParams {
            alpha,
            beta,
            ..Default::default()
        }
    }

    #[test]
    fn dispersion_examples() {
        let p = params(5.0, 2.0);
        assert_eq!(omega_of_k(0.0, &p).unwrap(), 5.0);
        assert_eq!(omega_of_k(2.0, &params(0.0, 1.0)).unwrap(), 4.0);
        for k in [0.1, 1.0, 10.0] {
            let back = k_of_omega(omega_of_k(k, &p).unwrap(), &p).unwrap();
            assert_relative_eq!(back, k, max_relative = 1e-12);
        }
        assert!(omega_of_k(-1.0, &p).is_err());
    }

    #[test]
    fn inverse_dispersion_examples() {
        let p = params(5.0, 2.0);
        assert_eq!(k_of_omega(5.0, &p).unwrap(), 0.0);
        assert_eq!(k_of_omega(9.0, &params(0.0, 1.0)).unwrap(), 3.0);
        assert_eq!(k_of_omega(17.0, &params(1.0, 4.0)).unwrap(), 2.0);
        assert!(matches!(
            k_of_omega(4.0, &p),
            Err(Error::Domain { quantity: "omega", .. })
        ));
    }

    #[test]
    fn jacobian_examples() {
        let p = params(0.0, 1.0);
        assert_eq!(density_jacobian(0.0, &p).unwrap(), 0.0);
        assert_relative_eq!(density_jacobian(1.0, &p).unwrap(), 2.0 * PI, max_relative = 1e-15);
        let q = params(3.0, 0.7);
        let ratio = density_jacobian(7.0, &q).unwrap() / density_jacobian(4.0, &q).unwrap();
        assert_relative_eq!(ratio, 2.0, max_relative = 1e-14);
        assert!(density_jacobian(-0.5, &p).is_err());
    }

    #[test]
    fn jacobian_matches_definition() {
        // 4πk² dk/dω with dk/dω by central difference of k(ω).
        let p = params(2.0, 3.0);
        let omega = 5.5;
        let h = 1e-6;
        let k = k_of_omega(omega, &p).unwrap();
        let dk = (k_of_omega(omega + h, &p).unwrap() - k_of_omega(omega - h, &p).unwrap()) / (2.0 * h);
        assert_relative_eq!(
            density_jacobian(omega, &p).unwrap(),
            4.0 * PI * k * k * dk,
            max_relative = 1e-8
        );
    }

    #[test]
    fn convert_density_examples() {
        let p = params(0.0, 1.0);
        let grid = SpectralGrid::new(1.0, 2.0, 9).unwrap();
        let zero = convert_density(&[0.0; 9], &grid, &p, DensityDirection::ToSpectral).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        let ones = convert_density(&[1.0; 9], &grid, &p, DensityDirection::ToSpectral).unwrap();
        assert_relative_eq!(ones[0], 2.0 * PI, max_relative = 1e-15);
    }

    #[test]
    fn convert_density_rejects_band_edge_node() {
        let p = params(0.0, 1.0);
        let grid = SpectralGrid::new(0.0, 1.0, 9).unwrap();
        let err = convert_density(&[1.0; 9], &grid, &p, DensityDirection::ToOccupation).unwrap_err();
        assert!(matches!(err, Error::DegenerateNode { index: 0 }));
        assert!(convert_density(&[1.0; 8], &grid, &p, DensityDirection::ToSpectral).is_err());
    }

    #[test]
    fn totals_examples() {
        let p = params(0.0, 1.0);
        let grid = SpectralGrid::new(1.0, 2.0, 33).unwrap();
        let zero = CarrierDistribution::uniform(&grid, 0.0).unwrap();
        let t = spectral_totals(&zero, &grid, &p).unwrap();
        assert_eq!((t.carriers, t.energy), (0.0, 0.0));

        let t = density_totals(&[1.0; 33], &grid).unwrap();
        assert_relative_eq!(t.carriers, 1.0, max_relative = 1e-14);
        assert_relative_eq!(t.energy, 1.5, max_relative = 1e-14);
    }

    #[test]
    fn grid_validation() {
        assert!(SpectralGrid::new(2.0, 1.0, 16).is_err());
        assert!(SpectralGrid::new(1.0, 2.0, 7).is_err());
        let grid = SpectralGrid::new(1.0, 2.0, 11).unwrap();
        assert_eq!(grid.omega(10), 2.0);
        assert!(grid.validate_against(&params(1.5, 1.0)).is_err());
        let err = SpectralGrid::new(3.0, 1.0, 16).unwrap_err();
        assert!(err.to_string().contains("grid.omega_min"));
    }

    #[test]
    fn params_validation() {
        assert!(MaterialParams::default().validate().is_ok());
        let bad = MaterialParams {
            beta: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = MaterialParams {
            gamma_k: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn pauli_bound_enforced() {
        assert!(CarrierDistribution::new(vec![0.0, 0.5, 1.0]).is_ok());
        assert!(matches!(
            CarrierDistribution::new(vec![0.2, 1.1]),
            Err(Error::PauliViolation { index: 1, .. })
        ));
        assert!(CarrierDistribution::new(vec![f64::NAN]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn dispersion_round_trip(alpha in -50.0f64..50.0, beta in 0.1f64..100.0, dw in 1e-6f64..1e3) {
                let p = params(alpha, beta);
                let omega = alpha + dw;
                let k = k_of_omega(omega, &p).unwrap();
                let back = omega_of_k(k, &p).unwrap();
                prop_assert!((back - omega).abs() <= 1e-12 * omega.abs().max(1.0));
            }

            #[test]
            fn density_round_trip(values in proptest::collection::vec(0.0f64..=1.0, 16)) {
                let p = params(0.5, 2.0);
                let grid = SpectralGrid::new(1.0, 3.0, 16).unwrap();
                let big_n = convert_density(&values, &grid, &p, DensityDirection::ToSpectral).unwrap();
                let n = convert_density(&big_n, &grid, &p, DensityDirection::ToOccupation).unwrap();
                let again = convert_density(&n, &grid, &p, DensityDirection::ToSpectral).unwrap();
                for (a, b) in big_n.iter().zip(&again) {
                    prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1e-300));
                }
            }

            #[test]
            fn totals_linear_and_bounded(
                n1 in proptest::collection::vec(0.0f64..=0.5, 20),
                n2 in proptest::collection::vec(0.0f64..=0.5, 20),
                a in 0.0f64..1.0,
                b in 0.0f64..1.0,
            ) {
                let p = params(0.0, 1.0);
                let grid = SpectralGrid::new(1.0, 2.0, 20).unwrap();
                let d1 = CarrierDistribution::new(n1.clone()).unwrap();
                let d2 = CarrierDistribution::new(n2.clone()).unwrap();
                let mix: Vec<f64> = n1.iter().zip(&n2).map(|(x, y)| a * x + b * y).collect();
                let dm = CarrierDistribution::new(mix).unwrap();
                let t1 = spectral_totals(&d1, &grid, &p).unwrap();
                let t2 = spectral_totals(&d2, &grid, &p).unwrap();
                let tm = spectral_totals(&dm, &grid, &p).unwrap();
                let scale = t1.energy + t2.energy + 1.0;
                prop_assert!((tm.carriers - (a * t1.carriers + b * t2.carriers)).abs() <= 1e-12 * scale);
                prop_assert!((tm.energy - (a * t1.energy + b * t2.energy)).abs() <= 1e-12 * scale);
                prop_assert!(tm.energy >= grid.omega_min * tm.carriers - 1e-14);
                prop_assert!(tm.energy <= grid.omega_max * tm.carriers + 1e-14);
            }
        }
    }
}
