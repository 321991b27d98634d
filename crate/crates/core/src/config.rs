//! JSON experiment configuration. Every block has defaults reproducing the
//! default model and wave packet; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::EstimateLattice;
use crate::boltzmann::{CollisionVariant, ShellRule};
use crate::collision::DEFAULT_ETA_SEQUENCE;
use crate::dispersion::{DeclaredBounds, DispersionModel, RadialProfile, ValidationLattice};
use crate::error::{Error, Result};
use crate::observables::TwoScaleObservable;
use crate::vector::norm;
use crate::wavepacket::{Envelope, TwoScaleGrid, WavePacketSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub dim: usize,
    pub electron: RadialProfile,
    pub phonon: RadialProfile,
    pub form_factor: RadialProfile,
    pub beta: f64,
    pub mu: f64,
    pub bounds: DeclaredBounds,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let m = DispersionModel::quadratic_einstein();
        ModelConfig {
            dim: m.dim,
            electron: m.electron,
            phonon: m.phonon,
            form_factor: m.form_factor,
            beta: m.beta,
            mu: m.mu,
            bounds: m.bounds,
        }
    }
}

impl ModelConfig {
    pub fn build(&self) -> DispersionModel {
        DispersionModel {
            dim: self.dim,
            electron: self.electron.clone(),
            phonon: self.phonon.clone(),
            form_factor: self.form_factor.clone(),
            beta: self.beta,
            mu: self.mu,
            bounds: self.bounds,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct WavePacketConfig {
    pub envelope: Envelope,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub epsilons: Vec<f64>,
}

impl Default for WavePacketConfig {
    fn default() -> Self {
        WavePacketConfig {
            envelope: Envelope::default(),
            p: vec![0.0, 0.0, 2.0],
            q: vec![0.0, 0.0, 1.0],
            epsilons: vec![0.4, 0.2, 0.1, 0.05],
        }
    }
}

impl WavePacketConfig {
    pub fn spec(&self, epsilon: f64) -> Result<WavePacketSpec> {
        WavePacketSpec::new(self.envelope, self.p.clone(), self.q.clone(), epsilon)
    }

    /// |Q|/|P|, the time at which the two bumps overlap.
    pub fn overlap_time(&self) -> f64 {
        norm(&self.q) / norm(&self.p)
    }
}

/// Observable presets. `fringe` is A ≡ 1 with b = e^{2iP·x}; `windowed` adds
/// Gaussian windows in X and v; `blind` damps b on the short scale so it
/// cannot resolve the fringes; `mass` is J ≡ 1.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObservableConfig {
    Fringe {},
    Windowed { window: f64, v_width: Option<f64> },
    Blind { width: f64 },
    Mass {},
}

impl Default for ObservableConfig {
    fn default() -> Self {
        ObservableConfig::Fringe {}
    }
}

impl ObservableConfig {
    pub fn build(&self, p: &[f64]) -> Result<TwoScaleObservable> {
        match self {
            ObservableConfig::Fringe {} => Ok(TwoScaleObservable::fringe(p, p)),
            ObservableConfig::Windowed { window, v_width } => {
                TwoScaleObservable::windowed_fringe(p, p, *window, *v_width)
            }
            ObservableConfig::Blind { width } => TwoScaleObservable::blind(p, *width),
            ObservableConfig::Mass {} => Ok(TwoScaleObservable::constant(p.len())),
        }
    }
}

/// Homogeneous relaxation of a Gaussian velocity distribution.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BoltzmannConfig {
    /// Nodes per V axis on [−v_max, v_max].
    pub n_v: usize,
    pub v_max: f64,
    pub center: Vec<f64>,
    pub std: f64,
    pub big_t: f64,
    pub dt: f64,
    pub variant: CollisionVariant,
    pub rule: ShellRule,
}

impl Default for BoltzmannConfig {
    fn default() -> Self {
        BoltzmannConfig {
            n_v: 13,
            v_max: 3.0,
            center: vec![0.0, 0.0, 1.0],
            std: 0.5,
            big_t: 1.0,
            dt: 0.05,
            variant: CollisionVariant::GainLoss,
            rule: ShellRule::new(12, 24),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ResidueConfig {
    pub level: f64,
    pub max_m: usize,
    pub times: Vec<f64>,
    pub etas: Vec<f64>,
    pub tolerance: f64,
}

impl Default for ResidueConfig {
    fn default() -> Self {
        ResidueConfig {
            level: 0.7,
            max_m: 5,
            times: vec![0.1, 1.0, 10.0],
            etas: vec![1.0, 0.1, 0.01],
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Macroscopic times; empty means the overlap time |Q|/|P| alone.
    pub times: Vec<f64>,
    /// Truncation order of the resummation.
    pub k_max: usize,
    pub resum_tolerance: f64,
    /// Monte Carlo samples, where a subcommand draws any.
    pub samples: u64,
    /// Mandatory for Monte Carlo subcommands.
    pub seed: Option<u64>,
    pub eta_sequence: Vec<f64>,
    /// |P| values of the cross-section gate, along the direction of P.
    pub cross_section_momenta: Vec<f64>,
    pub cross_section_tolerance: f64,
    /// P̃/P ratios of the fringe sweep; empty skips it.
    pub fringe_ratios: Vec<f64>,
    pub grid: TwoScaleGrid,
    /// Multiplies every pass tolerance of the aggregate validation.
    pub tolerance_scale: f64,
    pub residue: ResidueConfig,
    pub boltzmann: BoltzmannConfig,
    pub estimates: EstimateLattice,
    pub validation: ValidationLattice,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            times: Vec::new(),
            k_max: 20,
            resum_tolerance: 1e-10,
            samples: 100_000,
            seed: None,
            eta_sequence: DEFAULT_ETA_SEQUENCE.to_vec(),
            cross_section_momenta: vec![1.5, 2.0, 3.0],
            cross_section_tolerance: 1e-3,
            fringe_ratios: vec![0.0, 1.0, -1.0, 0.5],
            grid: TwoScaleGrid::default(),
            tolerance_scale: 1.0,
            residue: ResidueConfig::default(),
            boltzmann: BoltzmannConfig::default(),
            estimates: EstimateLattice::default(),
            validation: ValidationLattice::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub wavepacket: WavePacketConfig,
    #[serde(default)]
    pub observable: ObservableConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            model: ModelConfig::default(),
            wavepacket: WavePacketConfig::default(),
            observable: ObservableConfig::default(),
            run: RunConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let d = self.model.dim;
        if d == 0 {
            return Err(Error::InvalidInput("model.dim must be positive".into()));
        }
        let wp = &self.wavepacket;
        if wp.p.len() != d || wp.q.len() != d {
            return Err(Error::InvalidInput(format!(
                "wavepacket P and Q must have model.dim = {d} components"
            )));
        }
        if norm(&wp.p) == 0.0 {
            return Err(Error::InvalidInput("wavepacket P must be nonzero".into()));
        }
        if wp.epsilons.is_empty() || wp.epsilons.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(Error::InvalidInput("epsilons must be a nonempty list in (0, 1)".into()));
        }
        if self.run.times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(Error::InvalidInput("run.times must be finite and nonnegative".into()));
        }
        if !(self.run.tolerance_scale > 0.0) {
            return Err(Error::InvalidInput("run.tolerance_scale must be positive".into()));
        }
        if self.run.boltzmann.center.len() != d {
            return Err(Error::InvalidInput(format!(
                "run.boltzmann.center must have model.dim = {d} components"
            )));
        }
        for &eps in &wp.epsilons {
            wp.spec(eps)?;
        }
        self.observable.build(&wp.p)?;
        Ok(())
    }

    pub fn model(&self) -> DispersionModel {
        self.model.build()
    }

    /// The configured times, or the overlap time when none are given.
    pub fn times(&self) -> Vec<f64> {
        if self.run.times.is_empty() {
            vec![self.wavepacket.overlap_time()]
        } else {
            self.run.times.clone()
        }
    }

    /// Seed of a Monte Carlo run; absent seeds are a config error.
    pub fn require_seed(&self) -> Result<u64> {
        self.run
            .seed
            .ok_or_else(|| Error::InvalidInput("run.seed is required for Monte Carlo runs".into()))
    }
}
