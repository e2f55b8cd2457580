//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any criterion failed.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use kzlaser_core::collision::{flux_k, flux_k_with, k_scale, Stencil};
use kzlaser_core::equilibria::{fermi_dirac, fit_fermi_dirac, flux_budget, stationary_state};
use kzlaser_core::kinetics::{
    calibrate_collision_strength, evolve, reference_initial_condition, time_rescale_check, KineticsOptions, Snapshot,
    StepPolicy,
};
use kzlaser_core::laser::{run_lasing, ComparisonSetup, LaserOptions, LaserState, LasingOutcome, LasingRun, PumpSpec};
use kzlaser_core::{BoundaryFluxes, KForm, MaterialParams, SpectralGrid};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    id: u8,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
    budget: Duration,
}

impl Verdict {
    fn ok(&self) -> bool {
        self.pass && self.elapsed <= self.budget
    }

    fn line(&self) -> String {
        let timing = if self.elapsed <= self.budget {
            ""
        } else {
            " [over time budget]"
        };
        format!(
            "criterion {}: {} - {} ({}; {:.2} s of {} s){}",
            self.id,
            if self.ok() { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs(),
            timing,
        )
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn unit_window(m: usize) -> SpectralGrid {
    SpectralGrid::new(1.0, 2.0, m).unwrap()
}

fn pauli_ok(snapshots: &[Snapshot]) -> bool {
    snapshots
        .iter()
        .all(|s| s.n.values().iter().all(|v| (0.0..=1.0).contains(v)))
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

fn fd_annihilation() -> Verdict {
    let (result, elapsed) = timed(|| {
        let params = MaterialParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst = 0.0f64;
        let mut ratios = Vec::new();
        for _ in 0..5 {
            let a: f64 = rng.gen_range(-6.0..6.0);
            let b = -a * rng.gen_range(1.0..2.0);
            let grid = unit_window(257);
            let n = fermi_dirac(a, b, &grid).unwrap();
            let k = flux_k(n.values(), &grid, &params).unwrap();
            worst = worst.max(max_abs(k.iter().copied()) / k_scale(&grid, &params));

            let residual = |m: usize| {
                let grid = unit_window(m);
                let n = fermi_dirac(a, b, &grid).unwrap();
                let k = flux_k_with(n.values(), &grid, &params, Stencil::Occupation(KForm::Expanded)).unwrap();
                max_abs(k[1..m - 1].iter().copied())
            };
            ratios.push(residual(129) / residual(257));
        }
        (worst, ratios)
    });
    let (worst, ratios) = result;
    let ratios_ok = ratios.iter().all(|r| (3.5..=4.5).contains(r));
    Verdict {
        id: 1,
        name: "Fermi-Dirac annihilation",
        pass: worst <= 1e-8 && ratios_ok,
        detail: format!("max|K|/K-scale = {worst:.2e}, halving ratios {ratios:.3?}"),
        elapsed,
        budget: Duration::from_secs(1),
    }
}

struct RelaxOutcome {
    drift: (f64, f64),
    residual: f64,
    pauli: bool,
}

fn relax_run() -> RelaxOutcome {
    let grid = unit_window(257);
    let n0 = reference_initial_condition(&grid).unwrap();
    let cal = calibrate_collision_strength(100.0, &n0, &grid, &MaterialParams::default()).unwrap();
    let params = MaterialParams::default().with_collision_strength(cal.collision_strength);
    let opts = KineticsOptions::fixed(0.5, 50.0);
    let run = evolve(&n0, 2000.0, &grid, &params, &BoundaryFluxes::zero(), &opts).unwrap();
    RelaxOutcome {
        drift: run.relative_drift(),
        residual: fit_fermi_dirac(run.final_state().values(), &grid).unwrap().residual,
        pauli: pauli_ok(&run.snapshots),
    }
}

fn conservation(out: &RelaxOutcome, elapsed: Duration) -> Verdict {
    let (dc, de) = out.drift;
    Verdict {
        id: 2,
        name: "conservation under zero-flux relaxation",
        pass: dc < 1e-6 && de < 1e-6 && out.residual < 1e-4,
        detail: format!(
            "carrier drift {dc:.2e}, energy drift {de:.2e}, FD residual {:.2e}",
            out.residual
        ),
        elapsed,
        budget: Duration::from_secs(30),
    }
}

struct FluxOutcome {
    q0: f64,
    k_scale: f64,
    slope: f64,
    intercept: f64,
    oracle_gap: f64,
    steady_time: Option<f64>,
    pauli: bool,
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn finite_flux_run() -> FluxOutcome {
    let grid = unit_window(257);
    let params = MaterialParams::default();
    let ks = k_scale(&grid, &params);
    let q0 = 0.004 * ks;
    let bc = BoundaryFluxes::uniform(q0, 0.0);
    let n0 = reference_initial_condition(&grid).unwrap();
    let mut opts = KineticsOptions::adaptive(1e-4, 5.0, 1.0);
    opts.stop_when_steady = true;
    let run = evolve(&n0, 400.0, &grid, &params, &bc, &opts).unwrap();
    let end = run.final_state().values();
    let k = flux_k(end, &grid, &params).unwrap();
    let nodes = grid.nodes();
    let m = grid.m;
    let (slope, intercept) = linear_fit(&nodes[2..m - 2], &k[2..m - 2]);
    let oracle = stationary_state(q0, 0.0, end[0], end[m - 1], &grid, &params).unwrap();
    FluxOutcome {
        q0,
        k_scale: ks,
        slope,
        intercept,
        oracle_gap: run.final_state().max_abs_diff(&oracle),
        steady_time: run.steady_time,
        pauli: pauli_ok(&run.snapshots),
    }
}

fn finite_flux(out: &FluxOutcome, elapsed: Duration) -> Verdict {
    let slope_err = (out.slope - out.q0).abs() / out.q0;
    let intercept_err = out.intercept.abs() / out.k_scale;
    Verdict {
        id: 3,
        name: "finite-flux equilibrium",
        pass: out.steady_time.is_some() && slope_err < 0.01 && intercept_err < 0.01 && out.oracle_gap < 1e-3,
        detail: format!(
            "steady at {:?} fs, slope error {slope_err:.2e}, intercept/K-scale {intercept_err:.2e}, gap to stationary solve {:.2e}",
            out.steady_time, out.oracle_gap
        ),
        elapsed,
        budget: Duration::from_secs(60),
    }
}

fn time_rescaling() -> Verdict {
    let (result, elapsed) = timed(|| {
        let grid = unit_window(257);
        let params = MaterialParams::default();
        let n0 = reference_initial_condition(&grid).unwrap();
        let bc = BoundaryFluxes::uniform(0.002 * k_scale(&grid, &params), 0.0);
        let policy = StepPolicy::Fixed { dt: 0.01 };
        let deviations: Vec<f64> = [2.0, 10.0]
            .iter()
            .map(|&c| time_rescale_check(&n0, c, 1.0, &grid, &params, &bc, policy).unwrap())
            .collect();
        let cal = calibrate_collision_strength(100.0, &n0, &grid, &params).unwrap();
        (deviations, cal.verified_time)
    });
    let (deviations, verified) = result;
    Verdict {
        id: 4,
        name: "time rescaling in I and 100 fs calibration",
        pass: deviations.iter().all(|d| *d < 1e-9) && (verified - 100.0).abs() <= 5.0,
        detail: format!(
            "deviation {:.2e} (c=2), {:.2e} (c=10), calibrated relaxation {verified:.6} fs",
            deviations[0], deviations[1]
        ),
        elapsed,
        budget: Duration::from_secs(60),
    }
}

fn flux_budget_balance() -> Verdict {
    let (result, elapsed) = timed(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let wl: f64 = rng.gen_range(0.0..100.0);
            let w0 = wl + rng.gen_range(1e-3..100.0);
            let wr = w0 + rng.gen_range(1e-3..100.0);
            let q0: f64 = rng.gen_range(0.0..10.0);
            let b = flux_budget(wl, w0, wr, q0).unwrap();
            let carriers = (b.q_l - b.q_r - q0).abs() / (b.q_l.abs() + b.q_r.abs() + q0).max(f64::MIN_POSITIVE);
            let energy = (b.p_r - b.p_l - w0 * q0).abs() / (b.p_r.abs() + b.p_l.abs() + w0 * q0).max(f64::MIN_POSITIVE);
            worst = worst.max(carriers).max(energy);
        }
        let ex = flux_budget(1.0, 2.0, 3.0, 1.0).unwrap();
        (worst, (ex.q_l, ex.q_r, ex.p_l, ex.p_r))
    });
    let (worst, example) = result;
    Verdict {
        id: 5,
        name: "flux budget",
        pass: worst <= 8.0 * f64::EPSILON && example == (0.5, -0.5, -0.5, 1.5),
        detail: format!("worst relative imbalance {worst:.2e}, (1,2,3,1) -> {example:?}"),
        elapsed,
        budget: Duration::from_secs(1),
    }
}

fn decoupled_decay() -> Verdict {
    let (worst, elapsed) = timed(|| {
        let setup = ComparisonSetup::default();
        let grid = setup.grid;
        let params = MaterialParams {
            mu0: 0.0,
            pump_rate: 0.0,
            ..setup.params
        };
        let e0 = Complex64::new(0.6, -0.8);
        let initial = LaserState::new(e0, setup.initial_state().unwrap().n);
        let opts = LaserOptions {
            series_every: 10.0,
            snapshot_every: 1000.0,
            ..Default::default()
        };
        let t_end = 3.0 / params.gamma_e;
        let run = run_lasing(&PumpSpec::broad(0.0), t_end, &grid, &params, &initial, &opts).unwrap();
        max_abs(
            run.series
                .iter()
                .map(|s| s.e.norm() / (e0.norm() * (-params.gamma_e * s.t).exp()) - 1.0),
        )
    });
    Verdict {
        id: 6,
        name: "decoupled field decay",
        pass: worst < 1e-6,
        detail: format!("max relative deviation from exp(-gamma_E t) {worst:.2e} over 3 decay times"),
        elapsed,
        budget: Duration::from_secs(5),
    }
}

struct ComparisonOutcome {
    ratio: f64,
    q_inject: f64,
    broad: ProfileCheck,
    flux: ProfileCheck,
    pauli: bool,
}

struct ProfileCheck {
    outcome: LasingOutcome,
    switch_on: Option<f64>,
    rises: bool,
}

fn profile(run: &LasingRun) -> ProfileCheck {
    let first = run.series.first().map_or(0.0, |s| s.power);
    let last = run.series.last().map_or(0.0, |s| s.power);
    ProfileCheck {
        outcome: run.outcome,
        switch_on: run.switch_on_time,
        rises: last > 1e3 * first,
    }
}

impl ProfileCheck {
    fn ok(&self) -> bool {
        matches!(self.outcome, LasingOutcome::Steady { .. }) && self.switch_on.is_some() && self.rises
    }
}

fn comparison_run() -> ComparisonOutcome {
    let (setup, _) = ComparisonSetup::default().calibrated().unwrap();
    let cmp = setup.run().unwrap();
    ComparisonOutcome {
        ratio: cmp.power_ratio,
        q_inject: cmp.q_inject,
        broad: profile(&cmp.broad),
        flux: profile(&cmp.flux),
        pauli: pauli_ok(&cmp.broad.snapshots) && pauli_ok(&cmp.flux.snapshots),
    }
}

fn comparison(out: &ComparisonOutcome, elapsed: Duration) -> Verdict {
    let target = if out.ratio >= 3.0 {
        "target >= 3 met"
    } else {
        "target >= 3 missed"
    };
    Verdict {
        id: 7,
        name: "flux vs broad pumping at matched injection",
        pass: out.ratio > 1.0 && out.broad.ok() && out.flux.ok(),
        detail: format!(
            "power ratio {:.3} ({target}), q_inject {:.3e}/fs, broad {:?} switch-on {:?} fs, flux {:?} switch-on {:?} fs",
            out.ratio, out.q_inject, out.broad.outcome, out.broad.switch_on, out.flux.outcome, out.flux.switch_on
        ),
        elapsed,
        budget: Duration::from_secs(600),
    }
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut verdicts = vec![fd_annihilation()];
    let (relax, t_relax) = timed(relax_run);
    verdicts.push(conservation(&relax, t_relax));
    let (flux, t_flux) = timed(finite_flux_run);
    verdicts.push(finite_flux(&flux, t_flux));
    verdicts.push(time_rescaling());
    verdicts.push(flux_budget_balance());
    verdicts.push(decoupled_decay());
    let (cmp, t_cmp) = timed(comparison_run);
    verdicts.push(comparison(&cmp, t_cmp));
    verdicts.push(Verdict {
        id: 8,
        name: "Pauli bound in every snapshot",
        pass: relax.pauli && flux.pauli && cmp.pauli,
        detail: format!(
            "relaxation {}, finite flux {}, pump comparison {}",
            relax.pauli, flux.pauli, cmp.pauli
        ),
        elapsed: Duration::ZERO,
        budget: Duration::from_secs(1),
    });

    for v in &verdicts {
        println!("{}", v.line());
    }
    if verdicts.iter().all(Verdict::ok) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
