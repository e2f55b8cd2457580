//! Single-mode semiconductor Maxwell-Bloch equations coupled to the carrier
//! kinetics, with broad and finite-flux pumping.
//!
//! Units: `e` and `p` are in arbitrary amplitude units, ω and Ω are energies
//! in meV (divided by ℏ where an angular frequency is needed), rates in 1/fs.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::collision::{clamp_occupation, BoundaryFluxes};
use crate::error::{Error, Result};
use crate::kinetics::{
    calibrate_collision_strength, reference_initial_condition, Calibration, CollisionStepper, Snapshot,
};
use crate::model::{jacobian_on_grid, trapezoid, CarrierDistribution, MaterialParams, SpectralGrid};

/// Largest nodal change allowed in one collision sub-step before it is
/// split in two.
const COLLISION_MAX_CHANGE: f64 = 0.05;

/// μ(ω) = μ₀ / (1 + (ω - α)/ε_gap).
pub fn dipole_weight(omega: f64, params: &MaterialParams) -> Result<f64> {
    if !(params.eps_gap > 0.0) {
        return Err(Error::invalid("eps_gap", "must be positive"));
    }
    if !(omega >= params.alpha) {
        return Err(Error::Domain {
            quantity: "omega",
            value: omega,
            reason: "below the band edge",
        });
    }
    Ok(params.mu0 / (1.0 + (omega - params.alpha) / params.eps_gap))
}

fn dipole_on_grid(grid: &SpectralGrid, params: &MaterialParams) -> Result<Vec<f64>> {
    grid.nodes().into_iter().map(|w| dipole_weight(w, params)).collect()
}

/// ∫ μ(ω) p(ω) J(ω) dω by the trapezoid rule.
pub fn polarization_integral(p: &[Complex64], grid: &SpectralGrid, params: &MaterialParams) -> Result<Complex64> {
    grid.check_len(p.len())?;
    let mu = dipole_on_grid(grid, params)?;
    let jac = jacobian_on_grid(grid, params)?;
    let re: Vec<f64> = (0..grid.m).map(|i| mu[i] * jac[i] * p[i].re).collect();
    let im: Vec<f64> = (0..grid.m).map(|i| mu[i] * jac[i] * p[i].im).collect();
    Ok(Complex64::new(trapezoid(&re, grid), trapezoid(&im, grid)))
}

/// Outcoupled power 2γ_E|e|².
pub fn output_power(e: Complex64, params: &MaterialParams) -> f64 {
    2.0 * params.gamma_e * e.norm_sqr()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum PumpSpec {
    /// Λ(1 - n) at every node of `band` (the whole window if absent), with
    /// zero-flux collision boundaries.
    Broad {
        lambda: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        band: Option<[f64; 2]>,
    },
    /// Carriers enter through the upper window edge at `q_inject` per fs,
    /// each bringing the energy of the lasing line; the lower edge is closed.
    Flux { q_inject: f64 },
}

impl PumpSpec {
    pub fn broad(lambda: f64) -> Self {
        PumpSpec::Broad { lambda, band: None }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PumpSpec::Broad { lambda, band } => {
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return Err(Error::invalid("pump.lambda", "must be non-negative and finite"));
                }
                if let Some([lo, hi]) = band {
                    if !(lo < hi) {
                        return Err(Error::invalid("pump.band", "lower edge must lie below upper edge"));
                    }
                }
            }
            PumpSpec::Flux { q_inject } => {
                if !(q_inject >= 0.0 && q_inject.is_finite()) {
                    return Err(Error::invalid("pump.q_inject", "must be non-negative and finite"));
                }
            }
        }
        Ok(())
    }

    /// Collision boundary fluxes for this pump: zero for broad pumping, and
    /// `(q_inject, -ω_L q_inject)` at the upper edge for flux pumping.
    pub fn boundary_fluxes(&self, omega_l: f64) -> BoundaryFluxes {
        match *self {
            PumpSpec::Broad { .. } => BoundaryFluxes::zero(),
            PumpSpec::Flux { q_inject } => BoundaryFluxes {
                q_left: 0.0,
                p_left: 0.0,
                q_right: q_inject,
                p_right: -omega_l * q_inject,
            },
        }
    }

    /// Λ at every node (zero in flux mode).
    fn rate_profile(&self, grid: &SpectralGrid) -> Vec<f64> {
        match *self {
            PumpSpec::Broad { lambda, band } => grid
                .nodes()
                .into_iter()
                .map(|w| match band {
                    Some([lo, hi]) if w < lo || w > hi => 0.0,
                    _ => lambda,
                })
                .collect(),
            PumpSpec::Flux { .. } => vec![0.0; grid.m],
        }
    }
}

/// Carrier injection rate ∫Λ(1 - n_ref)J dω of a broad pump.
pub fn matched_injection(
    lambda: f64,
    n_ref: &CarrierDistribution,
    grid: &SpectralGrid,
    params: &MaterialParams,
) -> Result<f64> {
    grid.check_len(n_ref.len())?;
    let jac = jacobian_on_grid(grid, params)?;
    let integrand: Vec<f64> = n_ref
        .values()
        .iter()
        .zip(&jac)
        .map(|(n, j)| lambda * (1.0 - n) * j)
        .collect();
    Ok(trapezoid(&integrand, grid))
}

/// Broad pump rate Λ that injects `q` carriers per fs into `n_ref`.
pub fn matched_lambda(
    q: f64,
    n_ref: &CarrierDistribution,
    grid: &SpectralGrid,
    params: &MaterialParams,
) -> Result<f64> {
    let per_unit = matched_injection(1.0, n_ref, grid, params)?;
    if !(per_unit > 0.0) {
        return Err(Error::Domain {
            quantity: "available states",
            value: per_unit,
            reason: "reference state is fully blocked",
        });
    }
    Ok(q / per_unit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaserState {
    pub t: f64,
    pub e: Complex64,
    pub p: Vec<Complex64>,
    pub n: CarrierDistribution,
}

impl LaserState {
    /// State with zero polarization.
    pub fn new(e: Complex64, n: CarrierDistribution) -> Self {
        let p = vec![Complex64::new(0.0, 0.0); n.len()];
        LaserState { t: 0.0, e, p, n }
    }

    pub fn validate(&self, grid: &SpectralGrid) -> Result<()> {
        grid.check_len(self.n.len())?;
        grid.check_len(self.p.len())?;
        if !self.e.re.is_finite() || !self.e.im.is_finite() {
            return Err(Error::invalid("e0", "field must be finite"));
        }
        if self.p.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::invalid("p", "polarization must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MbDerivative {
    pub de: Complex64,
    pub dp: Vec<Complex64>,
    pub dn: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Optics {
    e: Complex64,
    p: Vec<Complex64>,
    n: Vec<f64>,
}

impl Optics {
    fn axpy(&self, k: &Optics, c: f64) -> Optics {
        Optics {
            e: self.e + k.e * c,
            p: self.p.iter().zip(&k.p).map(|(a, b)| a + b * c).collect(),
            n: self.n.iter().zip(&k.n).map(|(a, b)| a + b * c).collect(),
        }
    }
}

/// Precomputed coefficients of the Maxwell-Bloch system on one grid.
#[derive(Debug, Clone)]
struct MbSystem {
    params: MaterialParams,
    mu: Vec<f64>,
    /// Trapezoid weight times J at each node.
    wj: Vec<f64>,
    /// (Ω - ω)/ℏ.
    detuning: Vec<f64>,
    pump: Vec<f64>,
    /// Ω/(2ε₀) with Ω as an angular frequency.
    field_coupling: f64,
    collisions: CollisionStepper,
}

impl MbSystem {
    fn new(grid: &SpectralGrid, params: &MaterialParams, pump: &PumpSpec) -> Result<Self> {
        pump.validate()?;
        params.validate()?;
        if !(params.omega_cavity > 0.0) {
            return Err(Error::invalid("Omega", "cavity frequency must be positive"));
        }
        let bc = pump.boundary_fluxes(params.omega_cavity);
        let collisions = CollisionStepper::new(grid, params, &bc)?;
        let weights = grid.trapezoid_weights();
        let wj = weights
            .iter()
            .zip(collisions.density_jacobian())
            .map(|(w, j)| w * j)
            .collect();
        Ok(MbSystem {
            params: *params,
            mu: dipole_on_grid(grid, params)?,
            wj,
            detuning: grid
                .nodes()
                .into_iter()
                .map(|w| (params.omega_cavity - w) / params.hbar)
                .collect(),
            pump: pump.rate_profile(grid),
            field_coupling: params.omega_cavity / params.hbar / (2.0 * params.eps0),
            collisions,
        })
    }

    fn polarization_integral(&self, p: &[Complex64]) -> Complex64 {
        p.iter()
            .zip(&self.mu)
            .zip(&self.wj)
            .map(|((p, mu), wj)| p * (mu * wj))
            .sum()
    }

    /// Stimulated contribution to dn/dt at one node, Im(μ p e*)/ℏ, which is
    /// −(i/2ℏ)(μ p e* − μ p* e) written without the cancelling real parts.
    #[inline]
    fn stimulated(&self, i: usize, e: Complex64, p: Complex64) -> f64 {
        self.mu[i] * (p * e.conj()).im / self.params.hbar
    }

    /// Everything except the collision term.
    fn optical_rhs(&self, s: &Optics) -> Optics {
        let hbar = self.params.hbar;
        let i_unit = Complex64::i();
        let de = i_unit * self.field_coupling * self.polarization_integral(&s.p) - self.params.gamma_e * s.e;
        let mut dp = Vec::with_capacity(s.p.len());
        let mut dn = Vec::with_capacity(s.n.len());
        for i in 0..s.p.len() {
            let rot = Complex64::new(-self.params.gamma_p, self.detuning[i]);
            let drive = i_unit * (self.mu[i] / (2.0 * hbar) * (2.0 * s.n[i] - 1.0)) * s.e;
            dp.push(rot * s.p[i] - drive);
            dn.push(self.pump[i] * (1.0 - s.n[i]) - self.params.gamma_k * s.n[i] + self.stimulated(i, s.e, s.p[i]));
        }
        Optics { e: de, p: dp, n: dn }
    }

    fn optical_rk4(&self, s: &Optics, dt: f64) -> Optics {
        let k1 = self.optical_rhs(s);
        let k2 = self.optical_rhs(&s.axpy(&k1, 0.5 * dt));
        let k3 = self.optical_rhs(&s.axpy(&k2, 0.5 * dt));
        let k4 = self.optical_rhs(&s.axpy(&k3, dt));
        let mut out = s.axpy(&k1, dt / 6.0);
        out.e += (k2.e * 2.0 + k3.e * 2.0 + k4.e) * (dt / 6.0);
        for i in 0..out.p.len() {
            out.p[i] += (k2.p[i] * 2.0 + k3.p[i] * 2.0 + k4.p[i]) * (dt / 6.0);
            out.n[i] += (2.0 * k2.n[i] + 2.0 * k3.n[i] + k4.n[i]) * (dt / 6.0);
        }
        out
    }

    fn collide(&self, n: &[f64], dt: f64) -> Result<Vec<f64>> {
        self.collisions.guarded_step(n, dt, COLLISION_MAX_CHANGE)
    }
}

/// Time derivative of the full state, collisions included.
pub fn mb_rhs(
    state: &LaserState,
    grid: &SpectralGrid,
    params: &MaterialParams,
    pump: &PumpSpec,
) -> Result<MbDerivative> {
    state.validate(grid)?;
    let sys = MbSystem::new(grid, params, pump)?;
    let opt = sys.optical_rhs(&Optics {
        e: state.e,
        p: state.p.clone(),
        n: state.n.values().to_vec(),
    });
    let coll = sys.collisions.rate(state.n.values());
    let dn: Vec<f64> = opt.n.iter().zip(&coll).map(|(a, b)| a + b).collect();
    let finite = opt.e.re.is_finite()
        && opt.e.im.is_finite()
        && opt.p.iter().all(|v| v.re.is_finite() && v.im.is_finite())
        && dn.iter().all(|v| v.is_finite());
    if !finite {
        return Err(Error::NumericalBlowup {
            t: state.t,
            last_good: Box::new(state.n.clone()),
        });
    }
    Ok(MbDerivative {
        de: opt.e,
        dp: opt.p,
        dn,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserOptions {
    /// Time step (fs).
    pub dt: f64,
    /// Spacing of field samples (fs).
    pub series_every: f64,
    /// Spacing of spectra snapshots (fs).
    pub snapshot_every: f64,
    /// Length of the trailing window used to judge saturation (fs).
    pub trailing_window: f64,
    /// Allowed relative spread of |e|² over the trailing window.
    pub steady_tolerance: f64,
    /// |e|² above which the run is aborted as unstable.
    pub max_abs_e_sq: f64,
}

impl Default for LaserOptions {
    fn default() -> Self {
        LaserOptions {
            dt: 0.05,
            series_every: 10.0,
            snapshot_every: 1000.0,
            trailing_window: 2000.0,
            steady_tolerance: 0.01,
            max_abs_e_sq: 1e12,
        }
    }
}

impl LaserOptions {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("run.dt", self.dt),
            ("run.series_every", self.series_every),
            ("run.snapshot_every", self.snapshot_every),
            ("run.trailing_window", self.trailing_window),
            ("run.steady_tolerance", self.steady_tolerance),
            ("run.max_abs_e_sq", self.max_abs_e_sq),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(key, "must be positive and finite"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub t: f64,
    pub e: Complex64,
    pub abs_e_sq: f64,
    pub power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LasingOutcome {
    /// |e|² ended no higher than it started.
    BelowThreshold,
    /// |e|² stayed within the tolerance over the trailing window.
    Steady { power: f64, abs_e_sq: f64 },
    /// Lasing, but still varying by more than the tolerance at the end.
    Unsettled { power: f64, spread: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LasingRun {
    pub pump: PumpSpec,
    pub series: Vec<FieldSample>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: LaserState,
    pub outcome: LasingOutcome,
    /// First sample at which |e|² reached 10% of its trailing mean.
    pub switch_on_time: Option<f64>,
    /// Carrier injection rate of the pump at the final state (1/fs).
    pub final_injection: f64,
}

impl LasingRun {
    pub fn steady_power(&self) -> Option<f64> {
        match self.outcome {
            LasingOutcome::Steady { power, .. } => Some(power),
            _ => None,
        }
    }

    /// Mean output power over the trailing window, whatever the outcome.
    pub fn trailing_power(&self, window: f64) -> f64 {
        let t_end = self.series.last().map_or(0.0, |s| s.t);
        let tail: Vec<f64> = self
            .series
            .iter()
            .filter(|s| s.t >= t_end - window)
            .map(|s| s.power)
            .collect();
        tail.iter().sum::<f64>() / tail.len().max(1) as f64
    }

    /// Latest snapshot taken strictly before `t`.
    pub fn snapshot_before(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots.iter().rev().find(|s| s.t < t)
    }
}

fn injection_rate(pump: &PumpSpec, n: &[f64], sys: &MbSystem) -> f64 {
    match *pump {
        PumpSpec::Broad { .. } => (0..n.len()).map(|i| sys.pump[i] * (1.0 - n[i]) * sys.wj[i]).sum(),
        PumpSpec::Flux { q_inject } => q_inject,
    }
}

fn classify(series: &[FieldSample], e0_sq: f64, opts: &LaserOptions) -> (LasingOutcome, Option<f64>) {
    let last = match series.last() {
        Some(s) => s,
        None => return (LasingOutcome::BelowThreshold, None),
    };
    if !(last.abs_e_sq > e0_sq) {
        return (LasingOutcome::BelowThreshold, None);
    }
    let tail: Vec<&FieldSample> = series.iter().filter(|s| s.t >= last.t - opts.trailing_window).collect();
    let mean_sq = tail.iter().map(|s| s.abs_e_sq).sum::<f64>() / tail.len() as f64;
    let (lo, hi) = tail.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), s| {
        (lo.min(s.abs_e_sq), hi.max(s.abs_e_sq))
    });
    let spread = (hi - lo) / mean_sq;
    let power = tail.iter().map(|s| s.power).sum::<f64>() / tail.len() as f64;
    let switch_on = series.iter().find(|s| s.abs_e_sq >= 0.1 * mean_sq).map(|s| s.t);
    let outcome = if spread <= opts.steady_tolerance {
        LasingOutcome::Steady {
            power,
            abs_e_sq: mean_sq,
        }
    } else {
        LasingOutcome::Unsettled { power, spread }
    };
    (outcome, switch_on)
}

/// Integrates the coupled system from `initial` for `t_end` fs.
///
/// Each step is Strang split: half a collision step (linearly implicit),
/// a full RK4 step of the optical, pump and damping terms, and another half
/// collision step.
pub fn run_lasing(
    pump: &PumpSpec,
    t_end: f64,
    grid: &SpectralGrid,
    params: &MaterialParams,
    initial: &LaserState,
    opts: &LaserOptions,
) -> Result<LasingRun> {
    opts.validate()?;
    initial.validate(grid)?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::invalid("run.t_end", "must be positive and finite"));
    }
    let sys = MbSystem::new(grid, params, pump)?;
    let dt = opts.dt;
    let total = (t_end / dt).round().max(1.0) as usize;
    let series_every = (opts.series_every / dt).round().max(1.0) as usize;
    let snapshot_every = (opts.snapshot_every / dt).round().max(1.0) as usize;

    let t0 = initial.t;
    let mut state = Optics {
        e: initial.e,
        p: initial.p.clone(),
        n: initial.n.values().to_vec(),
    };
    let sample = |t: f64, e: Complex64| FieldSample {
        t,
        e,
        abs_e_sq: e.norm_sqr(),
        power: output_power(e, params),
    };
    let mut series = vec![sample(t0, state.e)];
    let mut snapshots = vec![Snapshot {
        t: t0,
        n: initial.n.clone(),
    }];

    // Between output points the closing half collision step of one step and
    // the opening half of the next are taken together.
    let mut open_half = true;
    for k in 1..=total {
        let t = t0 + k as f64 * dt;
        let last_good = state.n.clone();
        if open_half {
            state.n = sys.collide(&state.n, 0.5 * dt)?;
        }
        state = sys.optical_rk4(&state, dt);
        for v in state.n.iter_mut() {
            *v = clamp_occupation(*v);
        }
        let record_series = k % series_every == 0 || k == total;
        let record_snapshot = k % snapshot_every == 0 || k == total;
        open_half = record_series || record_snapshot;
        state.n = sys.collide(&state.n, if open_half { 0.5 * dt } else { dt })?;

        let abs_e_sq = state.e.norm_sqr();
        let finite = abs_e_sq.is_finite()
            && state.p.iter().all(|v| v.re.is_finite() && v.im.is_finite())
            && state.n.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NumericalBlowup {
                t,
                last_good: Box::new(CarrierDistribution::clamped(last_good, 0.0, 1.0)),
            });
        }
        if abs_e_sq > opts.max_abs_e_sq {
            return Err(Error::Instability { t, abs_e_sq });
        }
        if record_series {
            series.push(sample(t, state.e));
        }
        if record_snapshot {
            snapshots.push(Snapshot {
                t,
                n: CarrierDistribution::new(state.n.clone())?,
            });
        }
    }

    let (outcome, switch_on_time) = classify(&series, initial.e.norm_sqr(), opts);
    let final_injection = injection_rate(pump, &state.n, &sys);
    log::debug!("lasing run ({pump:?}): {outcome:?}, switch-on {switch_on_time:?}");
    Ok(LasingRun {
        pump: *pump,
        series,
        snapshots,
        final_state: LaserState {
            t: t0 + total as f64 * dt,
            e: state.e,
            p: state.p,
            n: CarrierDistribution::new(state.n)?,
        },
        outcome,
        switch_on_time,
        final_injection,
    })
}

/// Broad pumping against flux pumping at the same carrier injection rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpComparison {
    pub broad: LasingRun,
    pub flux: LasingRun,
    /// Injection rate of the flux run, matched to the broad pump acting on
    /// the reference state.
    pub q_inject: f64,
    /// Time of the broad-run snapshot used as the reference state.
    pub reference_time: f64,
    /// Steady flux power over steady broad power (trailing means when a run
    /// has not settled).
    pub power_ratio: f64,
}

/// Runs the broad pump first, takes its last snapshot before switch-on as
/// the reference state, and runs the flux pump with
/// `q_inject = ∫Λ(1 - n_ref)J dω`.
pub fn compare_pumping(
    lambda: f64,
    t_end: f64,
    grid: &SpectralGrid,
    params: &MaterialParams,
    initial: &LaserState,
    opts: &LaserOptions,
) -> Result<PumpComparison> {
    let broad = run_lasing(&PumpSpec::broad(lambda), t_end, grid, params, initial, opts)?;
    let reference = match broad.switch_on_time {
        Some(t) => broad.snapshot_before(t).unwrap_or(&broad.snapshots[0]),
        None => broad.snapshots.last().expect("runs hold the initial snapshot"),
    };
    let reference_time = reference.t;
    let q_inject = matched_injection(lambda, &reference.n, grid, params)?;
    let flux = run_lasing(&PumpSpec::Flux { q_inject }, t_end, grid, params, initial, opts)?;
    let power = |run: &LasingRun| {
        run.steady_power()
            .unwrap_or_else(|| run.trailing_power(opts.trailing_window))
    };
    let power_ratio = power(&flux) / power(&broad);
    log::info!("pump comparison: q_inject = {q_inject:e}, flux/broad power ratio = {power_ratio}");
    Ok(PumpComparison {
        broad,
        flux,
        q_inject,
        reference_time,
        power_ratio,
    })
}

/// Default parameter set for the broad/flux pumping comparison.
///
/// The window runs from the lasing line ω_L = 20 meV to 200 meV, the
/// cavity sits at ω_L and the carriers start as a cold Fermi-Dirac
/// distribution below the lasing threshold, seeded with a weak field.
/// `params.collision_strength` is a placeholder until [`Self::calibrated`]
/// is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSetup {
    pub grid: SpectralGrid,
    /// `pump_rate` is the broad pump rate Λ.
    pub params: MaterialParams,
    pub t_end: f64,
    /// Fermi-Dirac parameters (a, b) of the initial occupation.
    pub initial_fd: [f64; 2],
    pub initial_field: Complex64,
    pub opts: LaserOptions,
    /// Relaxation time that fixes I (fs).
    pub relax_target: f64,
}

impl Default for ComparisonSetup {
    fn default() -> Self {
        let omega_l = 20.0;
        ComparisonSetup {
            grid: SpectralGrid {
                omega_min: omega_l,
                omega_max: 200.0,
                m: 257,
            },
            params: MaterialParams {
                beta: 646.0,
                omega_cavity: omega_l,
                eps0: 0.07 * (omega_l / 100.0f64).powf(1.5),
                gamma_k: 1e-5,
                pump_rate: 4e-5,
                ..Default::default()
            },
            t_end: 150_000.0,
            initial_fd: [0.04, -1.2],
            initial_field: Complex64::new(1e-3, 0.0),
            opts: LaserOptions {
                dt: 0.05,
                series_every: 50.0,
                snapshot_every: 200.0,
                ..Default::default()
            },
            relax_target: 100.0,
        }
    }
}

impl ComparisonSetup {
    pub fn initial_state(&self) -> Result<LaserState> {
        let [a, b] = self.initial_fd;
        let n = crate::equilibria::fermi_dirac(a, b, &self.grid)?;
        Ok(LaserState::new(self.initial_field, n))
    }

    /// Returns the setup with I calibrated against the reference relaxation.
    pub fn calibrated(mut self) -> Result<(Self, Calibration)> {
        let n0 = reference_initial_condition(&self.grid)?;
        let cal = calibrate_collision_strength(self.relax_target, &n0, &self.grid, &self.params)?;
        self.params.collision_strength = cal.collision_strength;
        Ok((self, cal))
    }

    pub fn run(&self) -> Result<PumpComparison> {
        let initial = self.initial_state()?;
        compare_pumping(
            self.params.pump_rate,
            self.t_end,
            &self.grid,
            &self.params,
            &initial,
            &self.opts,
        )
    }
}
