//! Experiment configuration: a single JSON document with nested blocks.
//! Every block is optional and filled with defaults.

use std::fs;
use std::path::{Path, PathBuf};

use kzlaser_core::collision::k_scale;
use kzlaser_core::equilibria::fermi_dirac;
use kzlaser_core::kinetics::{reference_initial_condition, KineticsOptions, Scheme, StepPolicy};
use kzlaser_core::laser::{LaserOptions, PumpSpec};
use kzlaser_core::{BoundaryFluxes, CarrierDistribution, Complex64, MaterialParams, SpectralGrid};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Collision-only evolution for `run.t_end`.
    Relax,
    /// Collision-only evolution until the spectrum stops changing.
    Steady,
    LaseBroad,
    LaseFlux,
    /// Broad run, then a flux run at the matched injection rate.
    Compare,
    Budget,
    Calibrate,
}

impl Experiment {
    pub fn is_lasing(self) -> bool {
        matches!(self, Experiment::LaseBroad | Experiment::LaseFlux | Experiment::Compare)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub omega_min: f64,
    pub omega_max: f64,
    pub m: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            omega_min: 1.0,
            omega_max: 2.0,
            m: 257,
        }
    }
}

impl GridConfig {
    pub fn grid(&self) -> SpectralGrid {
        SpectralGrid {
            omega_min: self.omega_min,
            omega_max: self.omega_max,
            m: self.m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxUnits {
    /// Q and P taken as given.
    #[default]
    Absolute,
    /// Q in units of K-scale per window width and P in units of K-scale,
    /// so values stay meaningful when I is calibrated.
    KScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcConfig {
    pub q_left: f64,
    pub p_left: f64,
    pub q_right: f64,
    pub p_right: f64,
    pub units: FluxUnits,
}

impl BcConfig {
    pub fn resolve(&self, grid: &SpectralGrid, params: &MaterialParams) -> BoundaryFluxes {
        let (sq, sp) = match self.units {
            FluxUnits::Absolute => (1.0, 1.0),
            FluxUnits::KScale => {
                let ks = k_scale(grid, params);
                (ks / grid.width(), ks)
            }
        };
        BoundaryFluxes {
            q_left: sq * self.q_left,
            p_left: sp * self.p_left,
            q_right: sq * self.q_right,
            p_right: sp * self.p_right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// Fermi-Dirac with a Gaussian bump, mapped onto the window.
    #[default]
    Reference,
    FermiDirac {
        a: f64,
        b: f64,
    },
    /// Fermi-Dirac plus `amplitude·exp(-((ω - center)/width)²)`, clamped.
    FdBump {
        a: f64,
        b: f64,
        amplitude: f64,
        center: f64,
        width: f64,
    },
}

impl InitialCondition {
    pub fn distribution(&self, grid: &SpectralGrid) -> kzlaser_core::Result<CarrierDistribution> {
        match *self {
            InitialCondition::Reference => reference_initial_condition(grid),
            InitialCondition::FermiDirac { a, b } => fermi_dirac(a, b, grid),
            InitialCondition::FdBump {
                a,
                b,
                amplitude,
                center,
                width,
            } => {
                let fd = fermi_dirac(a, b, grid)?;
                let values = grid
                    .nodes()
                    .iter()
                    .zip(fd.values())
                    .map(|(w, n)| n + amplitude * (-((w - center) / width).powi(2)).exp())
                    .collect();
                Ok(CarrierDistribution::clamped(values, 0.0, 1.0))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Simulated time (fs).
    pub t_end: f64,
    /// Time step (fs); the initial step when `dt_max` is set.
    pub dt: f64,
    /// Enables adaptive stepping for collision-only runs.
    pub dt_max: Option<f64>,
    pub target_change: f64,
    pub snapshot_every: f64,
    pub output_dir: PathBuf,
    pub stop_when_steady: bool,
    pub series_every: f64,
    pub trailing_window: f64,
    pub steady_tolerance: f64,
    pub max_abs_e_sq: f64,
    /// Initial field amplitude as `[re, im]`.
    pub e0: [f64; 2],
}

impl Default for RunConfig {
    fn default() -> Self {
        let laser = LaserOptions::default();
        RunConfig {
            t_end: 1000.0,
            dt: laser.dt,
            dt_max: None,
            target_change: 1e-3,
            snapshot_every: 50.0,
            output_dir: PathBuf::from("out"),
            stop_when_steady: false,
            series_every: laser.series_every,
            trailing_window: laser.trailing_window,
            steady_tolerance: laser.steady_tolerance,
            max_abs_e_sq: laser.max_abs_e_sq,
            e0: [1e-3, 0.0],
        }
    }
}

impl RunConfig {
    pub fn kinetics_options(&self) -> KineticsOptions {
        let policy = match self.dt_max {
            Some(dt_max) => StepPolicy::Adaptive {
                dt: self.dt,
                dt_max,
                target_change: self.target_change,
            },
            None => StepPolicy::Fixed { dt: self.dt },
        };
        KineticsOptions {
            policy,
            snapshot_every: self.snapshot_every,
            scheme: Scheme::LinearlyImplicit,
            stop_when_steady: self.stop_when_steady,
        }
    }

    pub fn laser_options(&self) -> LaserOptions {
        LaserOptions {
            dt: self.dt,
            series_every: self.series_every,
            snapshot_every: self.snapshot_every,
            trailing_window: self.trailing_window,
            steady_tolerance: self.steady_tolerance,
            max_abs_e_sq: self.max_abs_e_sq,
        }
    }

    pub fn initial_field(&self) -> Complex64 {
        Complex64::new(self.e0[0], self.e0[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Relaxation time of the reference state that fixes I (fs).
    pub target_fs: f64,
    /// Calibrate I before running instead of using `params.I`.
    pub apply: bool,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            target_fs: 100.0,
            apply: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub omega_l: f64,
    pub omega_0: f64,
    pub omega_r: f64,
    #[serde(default = "unit_injection")]
    pub q0: f64,
}

fn unit_injection() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub params: MaterialParams,
    #[serde(default)]
    pub bc: BcConfig,
    /// Lasing pump; broad with `params.Lambda` when absent.
    #[serde(default)]
    pub pump: Option<PumpSpec>,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub budget: Option<BudgetConfig>,
}

impl ExperimentConfig {
    /// Parses a JSON document, reporting the key path and position of the
    /// first error.
    pub fn from_json(text: &str, origin: &Path) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|err| {
            let key = err.path().to_string();
            let inner = err.into_inner();
            CliError::Parse {
                path: origin.to_path_buf(),
                line: inner.line(),
                column: inner.column(),
                key,
                message: inner.to_string(),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Broad pump rate for the lasing experiments.
    pub fn broad_lambda(&self) -> f64 {
        match self.pump {
            Some(PumpSpec::Broad { lambda, .. }) => lambda,
            _ => self.params.pump_rate,
        }
    }

    pub fn pump(&self) -> PumpSpec {
        self.pump.unwrap_or_else(|| PumpSpec::broad(self.params.pump_rate))
    }

    pub fn validate(&self) -> CliResult<()> {
        let grid = self.grid.grid();
        grid.validate()?;
        self.params.validate().map_err(|e| CliError::prefixed("params", e))?;
        grid.validate_against(&self.params)?;
        self.bc.resolve(&grid, &self.params).validate()?;
        self.run.kinetics_options().policy.validate()?;
        for (key, v) in [
            ("run.t_end", self.run.t_end),
            ("run.snapshot_every", self.run.snapshot_every),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::invalid(key, "must be positive and finite"));
            }
        }
        for (key, v) in [("run.e0", self.run.e0[0]), ("run.e0", self.run.e0[1])] {
            if !v.is_finite() {
                return Err(CliError::invalid(key, "must be finite"));
            }
        }
        if !(self.calibration.target_fs > 0.0 && self.calibration.target_fs.is_finite()) {
            return Err(CliError::invalid(
                "calibration.target_fs",
                "must be positive and finite",
            ));
        }
        if let InitialCondition::FdBump { width, .. } = self.initial {
            if width.is_nan() || width <= 0.0 {
                return Err(CliError::invalid("initial.width", "must be positive"));
            }
        }
        if self.experiment.is_lasing() {
            self.run.laser_options().validate()?;
            self.pump().validate()?;
        }
        match (self.experiment, self.pump) {
            (Experiment::LaseFlux, Some(PumpSpec::Flux { .. })) => {}
            (Experiment::LaseFlux, _) => {
                return Err(CliError::invalid(
                    "pump",
                    "lase-flux needs a pump block with mode \"flux\"",
                ))
            }
            (Experiment::LaseBroad | Experiment::Compare, Some(PumpSpec::Flux { .. })) => {
                return Err(CliError::invalid("pump.mode", "this experiment pumps broadly"))
            }
            _ => {}
        }
        if self.experiment == Experiment::Budget {
            let b = self
                .budget
                .ok_or_else(|| CliError::invalid("budget", "experiment \"budget\" needs a budget block"))?;
            kzlaser_core::equilibria::flux_budget(b.omega_l, b.omega_0, b.omega_r, b.q0)
                .map_err(|e| CliError::prefixed("budget", e))?;
        }
        Ok(())
    }
}

/// Reads, parses and validates a config file.
pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ExperimentConfig::from_json(&text, path)
}
