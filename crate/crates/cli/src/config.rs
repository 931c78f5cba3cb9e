//! Run configuration: a TOML file, overridable from the command line.

use std::fs;
use std::path::{Path, PathBuf};

use imc_wbc::imc_force::{ImcFilterConfig, NominalActuatorModel};
use imc_wbc::rigid_body::PlanarQuadrupedParams;
use imc_wbc::robustness::{log_grid, PerformanceWeight, UncertaintySpec};
use imc_wbc::simulator::{ActuatorParams, ControllerKind, GroundModel, SimConfig, SCENARIOS};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// TOML file with robot parameters; built-in quadruped if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    pub scenario: String,
    pub controller: String,
    pub seed: u64,
    /// Std of the white noise on sensed contact forces, N.
    pub noise_std: f64,
    /// 1 reproduces the control period; 10 for reference runs.
    pub substeps: usize,
    pub output: PathBuf,
    pub ground: GroundSection,
    pub actuator: ActuatorSection,
    pub imc: ImcSection,
    pub analysis: AnalysisSection,
    pub compare: CompareSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundSection {
    /// N/m
    pub stiffness: f64,
    /// N s/m; near-critical for a quarter of the robot mass if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    pub friction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActuatorSection {
    pub gain: f64,
    /// s
    pub eta: f64,
    /// Control periods.
    pub delay: usize,
    /// N m
    pub stiction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImcSection {
    pub eta_f_dist: f64,
    pub eta_f_track: f64,
    pub fast_pole_ratio: f64,
    /// N
    pub deadzone: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub k: f64,
    pub dk: f64,
    /// s
    pub eta: f64,
    pub d_eta: f64,
    /// s
    pub eta_d: f64,
    /// Disturbance filter time constants to analyse, s.
    pub eta_f: Vec<f64>,
    /// rad/s
    pub bandwidth: f64,
    pub weight_gain: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub omega_points: usize,
    /// Samples per parameter axis when bounding the family.
    pub samples: usize,
    pub tune_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    pub stiff: f64,
    pub soft: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: None,
            scenario: "stand".into(),
            controller: "imc".into(),
            seed: 0,
            noise_std: 0.0,
            substeps: 1,
            output: "out".into(),
            ground: GroundSection::default(),
            actuator: ActuatorSection::default(),
            imc: ImcSection::default(),
            analysis: AnalysisSection::default(),
            compare: CompareSection::default(),
        }
    }
}

impl Default for GroundSection {
    fn default() -> Self {
        Self { stiffness: GroundModel::STIFF, damping: None, friction: 0.8 }
    }
}

impl Default for ActuatorSection {
    fn default() -> Self {
        let a = ActuatorParams::default();
        Self { gain: a.gain, eta: a.eta, delay: a.delay, stiction: a.stiction }
    }
}

impl Default for ImcSection {
    fn default() -> Self {
        let f = ImcFilterConfig::<f64>::default();
        Self { eta_f_dist: f.eta_f_dist, eta_f_track: f.eta_f_track, fast_pole_ratio: f.fast_pole_ratio, deadzone: 0.0 }
    }
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            k: 1.0,
            dk: 0.4,
            eta: 0.02,
            d_eta: 0.01,
            eta_d: 0.003,
            eta_f: vec![0.01, 0.03, 0.3],
            bandwidth: 50.0,
            weight_gain: 1.0,
            omega_min: 1e-2,
            omega_max: 1e4,
            omega_points: 400,
            samples: 41,
            tune_range: (0.01, 1.0),
        }
    }
}

impl Default for CompareSection {
    fn default() -> Self {
        Self { stiff: GroundModel::STIFF, soft: GroundModel::SOFT }
    }
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        toml::from_str(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn controller_kind(&self) -> Result<ControllerKind, String> {
        self.controller.parse().map_err(|e: imc_wbc::Error| e.to_string())
    }

    pub fn robot(&self) -> Result<PlanarQuadrupedParams, String> {
        let params = match &self.model {
            None => PlanarQuadrupedParams::default(),
            Some(path) => toml::from_str(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))?,
        };
        params.validate().map_err(|e| e.to_string())?;
        Ok(params)
    }

    /// Checks everything a simulation needs, without touching the output
    /// directory.
    pub fn validate_run(&self) -> Result<PlanarQuadrupedParams, String> {
        let params = self.robot()?;
        if !SCENARIOS.contains(&self.scenario.as_str()) {
            return Err(format!("unknown scenario '{}' (expected one of {})", self.scenario, SCENARIOS.join(", ")));
        }
        self.controller_kind()?;
        for (what, k) in [
            ("ground.stiffness", self.ground.stiffness),
            ("compare.stiff", self.compare.stiff),
            ("compare.soft", self.compare.soft),
        ] {
            if !(k > 0.0 && k.is_finite()) {
                return Err(format!("{what} must be positive"));
            }
        }
        self.sim_config(&params, self.ground.stiffness).validate().map_err(|e| e.to_string())?;
        Ok(params)
    }

    pub fn sim_config(&self, params: &PlanarQuadrupedParams, stiffness: f64) -> SimConfig {
        let mut c = SimConfig::new(stiffness, params);
        c.substeps = self.substeps;
        c.seed = self.seed;
        c.noise_std = self.noise_std;
        c.ground.friction = self.ground.friction;
        if let Some(d) = self.ground.damping {
            c.ground.damping = d;
        }
        c.actuator = ActuatorParams {
            gain: self.actuator.gain,
            eta: self.actuator.eta,
            delay: self.actuator.delay,
            stiction: self.actuator.stiction,
        };
        c.controller.filters = self.filters(self.imc.eta_f_dist);
        c.controller.deadzone = self.imc.deadzone;
        c
    }

    pub fn filters(&self, eta_f_dist: f64) -> ImcFilterConfig<f64> {
        ImcFilterConfig { eta_f_dist, eta_f_track: self.imc.eta_f_track, fast_pole_ratio: self.imc.fast_pole_ratio }
    }

    pub fn uncertainty(&self) -> Result<UncertaintySpec<f64>, imc_wbc::Error> {
        let a = &self.analysis;
        if !(a.omega_min > 0.0 && a.omega_max > a.omega_min && a.omega_points >= 2) {
            return Err(imc_wbc::Error::InvalidUncertainty("need 0 < omega_min < omega_max and 2+ points".into()));
        }
        let nominal = NominalActuatorModel::new(a.k, a.eta, a.eta_d)?;
        let omega = log_grid(a.omega_min, a.omega_max, a.omega_points);
        let spec = UncertaintySpec::new(nominal, (a.k - a.dk, a.k + a.dk), (a.eta - a.d_eta, a.eta + a.d_eta), omega)?
            .with_samples(a.samples);
        spec.validate()?;
        Ok(spec)
    }

    pub fn weight(&self) -> PerformanceWeight<f64> {
        PerformanceWeight { bandwidth: self.analysis.bandwidth, gain: self.analysis.weight_gain }
    }
}
