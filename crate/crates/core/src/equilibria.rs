//! Zero-flux (Fermi-Dirac) and finite-flux stationary states, and the flux
//! budget for injection between a lasing edge and a dissipation edge.

use serde::{Deserialize, Serialize};

use crate::banded::BandedMatrix;
use crate::collision::{clamp_occupation, k_scale, logit, OCCUPATION_CLAMP};
use crate::error::{Error, Result};
use crate::model::{CarrierDistribution, MaterialParams, SpectralGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FermiDiracParams {
    /// Inverse energy scale (1/meV).
    pub a: f64,
    pub b: f64,
    /// RMS deviation of logit(n) from the fitted line.
    pub residual: f64,
}

/// n = 1/(exp(aω + b) + 1), evaluated without overflow and saturated to the
/// occupation clamp.
#[inline]
pub fn fermi_dirac_value(a: f64, b: f64, omega: f64) -> f64 {
    let x = a * omega + b;
    let n = if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    };
    clamp_occupation(n)
}

pub fn fermi_dirac(a: f64, b: f64, grid: &SpectralGrid) -> Result<CarrierDistribution> {
    if !a.is_finite() {
        return Err(Error::invalid("a", "must be finite"));
    }
    if !b.is_finite() {
        return Err(Error::invalid("b", "must be finite"));
    }
    CarrierDistribution::from_fn(grid, |w| fermi_dirac_value(a, b, w))
}

/// Least-squares line through logit(n) = -(aω + b).
pub fn fit_fermi_dirac(n: &[f64], grid: &SpectralGrid) -> Result<FermiDiracParams> {
    grid.check_len(n.len())?;
    let y: Vec<f64> = n.iter().map(|&v| logit(v)).collect();
    if n.iter().all(|&v| {
        let c = clamp_occupation(v);
        c <= OCCUPATION_CLAMP || c >= 1.0 - OCCUPATION_CLAMP
    }) {
        return Err(Error::DegenerateFit("every node sits at the occupation clamp"));
    }
    let xs = grid.nodes();
    let len = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / len;
    let y_mean = y.iter().sum::<f64>() / len;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, v) in xs.iter().zip(&y) {
        sxx += (x - x_mean) * (x - x_mean);
        sxy += (x - x_mean) * (v - y_mean);
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss: f64 = xs
        .iter()
        .zip(&y)
        .map(|(x, v)| {
            let r = v - (intercept + slope * x);
            r * r
        })
        .sum();
    Ok(FermiDiracParams {
        a: -slope,
        b: -intercept,
        residual: (ss / len).sqrt(),
    })
}

/// Fermi-Dirac parameters passing through two boundary occupations.
pub fn fermi_dirac_through(n_left: f64, n_right: f64, grid: &SpectralGrid) -> (f64, f64) {
    let yl = logit(n_left);
    let yr = logit(n_right);
    let a = -(yr - yl) / grid.width();
    let b = -yl - a * grid.omega_min;
    (a, b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryOptions {
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Relative to `max(|qω + p|, K-scale)`.
    pub tolerance: f64,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        StationaryOptions {
            max_iterations: 200,
            max_halvings: 30,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StationarySolution {
    pub distribution: CarrierDistribution,
    pub iterations: usize,
    /// L2 norm of K - (qω + p) for the initial guess and each accepted
    /// iterate.
    pub residual_history: Vec<f64>,
    /// Final max-norm residual.
    pub residual: f64,
}

#[inline]
fn sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

struct StationaryProblem<'a> {
    grid: &'a SpectralGrid,
    prefactor: Vec<f64>,
    target: Vec<f64>,
    h2: f64,
}

impl StationaryProblem<'_> {
    fn residual(&self, y: &[f64]) -> Vec<f64> {
        let m = self.grid.m;
        let mut r = vec![0.0; m - 2];
        for i in 1..m - 1 {
            let n = sigmoid(y[i]);
            let g = n * (1.0 - n);
            let k = self.prefactor[i] * g * g * (y[i + 1] - 2.0 * y[i] + y[i - 1]) / self.h2;
            r[i - 1] = k - self.target[i];
        }
        r
    }

    fn jacobian(&self, y: &[f64]) -> BandedMatrix {
        let m = self.grid.m;
        let mut jac = BandedMatrix::tridiagonal(m - 2);
        for i in 1..m - 1 {
            let n = sigmoid(y[i]);
            let g = n * (1.0 - n);
            let c = self.prefactor[i] * g * g / self.h2;
            let ydd = y[i + 1] - 2.0 * y[i] + y[i - 1];
            let row = i - 1;
            if i > 1 {
                jac.set(row, row - 1, c);
            }
            jac.set(row, row, c * (2.0 * (1.0 - 2.0 * n) * ydd - 2.0));
            if i < m - 2 {
                jac.set(row, row + 1, c);
            }
        }
        jac
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves the discrete stationary problem K[n](ω_i) = qω_i + p on the
/// interior nodes with Dirichlet occupations at the two edges, by damped
/// Newton iteration on y = logit(n).
///
/// Falls back to continuation in (q, p) from the zero-flux state if the
/// direct solve fails.
pub fn stationary_state(
    q: f64,
    p: f64,
    n_left: f64,
    n_right: f64,
    grid: &SpectralGrid,
    params: &MaterialParams,
) -> Result<CarrierDistribution> {
    let opts = StationaryOptions::default();
    match stationary_state_with(q, p, n_left, n_right, grid, params, &opts, None) {
        Ok(sol) => Ok(sol.distribution),
        Err(Error::NoConvergence { .. }) | Err(Error::Bracket { .. }) => {
            log::debug!("direct stationary solve failed; continuing from zero flux");
            stationary_continuation(q, p, n_left, n_right, grid, params, &opts).map(|s| s.distribution)
        }
        Err(e) => Err(e),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn stationary_state_with(
    q: f64,
    p: f64,
    n_left: f64,
    n_right: f64,
    grid: &SpectralGrid,
    params: &MaterialParams,
    opts: &StationaryOptions,
    guess: Option<&CarrierDistribution>,
) -> Result<StationarySolution> {
    grid.validate()?;
    params.validate()?;
    for (key, v) in [("n_left", n_left), ("n_right", n_right)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::invalid(key, "boundary occupation must lie in (0, 1)"));
        }
    }
    if !q.is_finite() || !p.is_finite() {
        return Err(Error::invalid("q", "fluxes must be finite"));
    }
    let m = grid.m;
    let nodes = grid.nodes();
    let problem = StationaryProblem {
        grid,
        prefactor: nodes
            .iter()
            .map(|w| -params.collision_strength * w.powf(params.s))
            .collect(),
        target: nodes.iter().map(|w| q * w + p).collect(),
        h2: grid.delta() * grid.delta(),
    };
    let scale = max_abs(&problem.target).max(k_scale(grid, params));
    let tol = opts.tolerance * scale;
    let y_bound = logit(1.0 - OCCUPATION_CLAMP);

    let mut y: Vec<f64> = match guess {
        Some(g) => {
            grid.check_len(g.len())?;
            g.values().iter().map(|&v| logit(v)).collect()
        }
        None => {
            let (a, b) = fermi_dirac_through(n_left, n_right, grid);
            nodes.iter().map(|&w| -(a * w + b)).collect()
        }
    };
    y[0] = logit(n_left);
    y[m - 1] = logit(n_right);

    let mut r = problem.residual(&y);
    let mut history = vec![l2(&r)];
    let mut iterations = 0;
    while max_abs(&r) >= tol {
        if iterations >= opts.max_iterations {
            return Err(Error::NoConvergence {
                iterations,
                residual: max_abs(&r),
            });
        }
        iterations += 1;
        let lu = problem.jacobian(&y).factor()?;
        let mut step: Vec<f64> = r.iter().map(|v| -v).collect();
        lu.solve(&mut step);

        let norm0 = l2(&r);
        let mut lambda = 1.0;
        let mut accepted = None;
        let mut escaped = None;
        for _ in 0..=opts.max_halvings {
            let mut trial = y.clone();
            for (i, s) in step.iter().enumerate() {
                trial[i + 1] += lambda * s;
            }
            if let Some(idx) = trial.iter().position(|v| !v.is_finite() || v.abs() >= y_bound) {
                escaped = Some(idx);
                lambda *= 0.5;
                continue;
            }
            let rt = problem.residual(&trial);
            if l2(&rt) < norm0 {
                accepted = Some((trial, rt));
                break;
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((ny, nr)) => {
                y = ny;
                r = nr;
                history.push(l2(&r));
            }
            None => {
                return Err(match escaped {
                    Some(index) => Error::Bracket { index },
                    None => Error::NoConvergence {
                        iterations,
                        residual: max_abs(&r),
                    },
                })
            }
        }
    }

    let values = y.iter().map(|&v| clamp_occupation(sigmoid(v))).collect();
    Ok(StationarySolution {
        distribution: CarrierDistribution::new(values)?,
        iterations,
        residual_history: history,
        residual: max_abs(&r),
    })
}

/// Walks (q, p) from zero to the target, halving the increment whenever a
/// Newton solve fails.
pub fn stationary_continuation(
    q: f64,
    p: f64,
    n_left: f64,
    n_right: f64,
    grid: &SpectralGrid,
    params: &MaterialParams,
    opts: &StationaryOptions,
) -> Result<StationarySolution> {
    let mut current = stationary_state_with(0.0, 0.0, n_left, n_right, grid, params, opts, None)?;
    let mut reached = 0.0f64;
    let mut increment = 0.25f64;
    while reached < 1.0 {
        let next = (reached + increment).min(1.0);
        match stationary_state_with(
            next * q,
            next * p,
            n_left,
            n_right,
            grid,
            params,
            opts,
            Some(&current.distribution),
        ) {
            Ok(sol) => {
                current = sol;
                reached = next;
                increment = (increment * 2.0).min(0.25);
            }
            Err(e @ (Error::NoConvergence { .. } | Error::Bracket { .. })) => {
                increment *= 0.5;
                if increment < 1e-6 {
                    return Err(e);
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(current)
}

/// Stationary states for an increasing sequence of carrier fluxes, each
/// solve seeded with the previous one.
pub fn stationary_family(
    fluxes: &[f64],
    p: f64,
    n_left: f64,
    n_right: f64,
    grid: &SpectralGrid,
    params: &MaterialParams,
) -> Result<Vec<CarrierDistribution>> {
    let opts = StationaryOptions::default();
    let mut out: Vec<CarrierDistribution> = Vec::with_capacity(fluxes.len());
    for &q in fluxes {
        let sol = match stationary_state_with(q, p, n_left, n_right, grid, params, &opts, out.last()) {
            Ok(s) => s,
            Err(Error::NoConvergence { .. }) | Err(Error::Bracket { .. }) => {
                stationary_continuation(q, p, n_left, n_right, grid, params, &opts)?
            }
            Err(e) => return Err(e),
        };
        out.push(sol.distribution);
    }
    Ok(out)
}

/// Fluxes for injection at `omega_0` with absorption at `omega_l` and
/// dissipation at `omega_r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxBudget {
    pub omega_l: f64,
    pub omega_0: f64,
    pub omega_r: f64,
    pub q0: f64,
    pub q_l: f64,
    pub q_r: f64,
    pub p_l: f64,
    pub p_r: f64,
}

pub fn flux_budget(omega_l: f64, omega_0: f64, omega_r: f64, q0: f64) -> Result<FluxBudget> {
    for (key, v) in [
        ("omega_L", omega_l),
        ("omega_0", omega_0),
        ("omega_R", omega_r),
        ("q0", q0),
    ] {
        if !v.is_finite() {
            return Err(Error::invalid(key, "must be finite"));
        }
    }
    if !(omega_l < omega_0) {
        return Err(Error::invalid("omega_L", "requires omega_L < omega_0"));
    }
    if !(omega_0 < omega_r) {
        return Err(Error::invalid("omega_0", "requires omega_0 < omega_R"));
    }
    if q0 < 0.0 {
        return Err(Error::invalid("q0", "injection rate must be non-negative"));
    }
    let span = omega_r - omega_l;
    Ok(FluxBudget {
        omega_l,
        omega_0,
        omega_r,
        q0,
        q_l: q0 * (omega_r - omega_0) / span,
        q_r: q0 * (omega_l - omega_0) / span,
        p_r: q0 * omega_r * (omega_0 - omega_l) / span,
        p_l: omega_l * q0 * (omega_0 - omega_r) / span,
    })
}
