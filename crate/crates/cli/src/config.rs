//! JSON configuration for each command. Every field has a default, so a
//! config file only lists what it changes; unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tubalsr::experiments::{GanExperimentConfig, LocalizationConfig, SrExperimentConfig};
use tubalsr::sparse::IstaConfig;
use tubalsr::sr::SrTrainConfig;
use tubalsr::synth::{PathLossParams, Scenario};

use crate::error::{CliError, Result};

pub trait CommandConfig: Serialize + DeserializeOwned + Default {
    fn seed(&self) -> u64;

    /// Sets the top-level seed and every nested seed derived from it.
    fn set_seed(&mut self, seed: u64);

    fn validate(&self) -> Result<()> {
        Ok(())
    }
}

/// Parses `path`, or returns the defaults when `None`.
pub fn read<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(p) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(p).map_err(|source| CliError::MissingFile {
        path: p.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::schema(p.display().to_string(), e))
}

/// [`read`], then `seed` (if given) and validation. The top-level seed
/// always overrides nested ones.
pub fn load<T: CommandConfig>(path: Option<&Path>, seed: Option<u64>) -> Result<T> {
    let mut cfg: T = read(path)?;
    let s = seed.unwrap_or_else(|| cfg.seed());
    cfg.set_seed(s);
    cfg.validate()?;
    Ok(cfg)
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingFile {
            path: path.to_path_buf(),
            source: std::io::ErrorKind::NotFound.into(),
        })
    }
}

fn check(ok: bool, context: &str, detail: impl ToString) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::schema(context, detail))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowRankConfig {
    pub dims: (usize, usize, usize),
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub region: (f64, f64),
    pub spacing: (f64, f64),
    /// AP count for random placement inside `region`.
    pub aps: usize,
    /// Explicit AP positions; overrides `aps` when non-empty.
    pub ap_positions: Vec<(f64, f64)>,
    pub tx_power_dbm: f64,
    pub path_loss_exponent: f64,
    pub reference_distance_m: f64,
    pub shadowing_db: f64,
    pub correlation_length_m: f64,
    /// Emit a planted low-tubal-rank tensor instead of a radio map.
    pub low_rank: Option<LowRankConfig>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let p = PathLossParams::default();
        SynthConfig {
            seed: 0,
            region: (6.0, 16.0),
            spacing: (1.0, 1.0),
            aps: 14,
            ap_positions: Vec::new(),
            tx_power_dbm: p.tx_power_dbm,
            path_loss_exponent: p.path_loss_exponent,
            reference_distance_m: p.reference_distance_m,
            shadowing_db: p.shadowing_db,
            correlation_length_m: p.correlation_length_m,
            low_rank: None,
        }
    }
}

impl SynthConfig {
    pub fn scenario(&self) -> Scenario {
        let mut sc = Scenario::with_random_aps(self.region, self.spacing, self.aps, self.seed);
        if !self.ap_positions.is_empty() {
            sc.params.aps = self.ap_positions.clone();
        }
        sc.params.tx_power_dbm = self.tx_power_dbm;
        sc.params.path_loss_exponent = self.path_loss_exponent;
        sc.params.reference_distance_m = self.reference_distance_m;
        sc.params.shadowing_db = self.shadowing_db;
        sc.params.correlation_length_m = self.correlation_length_m;
        sc
    }
}

impl CommandConfig for SynthConfig {
    fn seed(&self) -> u64 {
        self.seed
    }

    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    fn validate(&self) -> Result<()> {
        if let Some(lr) = &self.low_rank {
            let (a, b, c) = lr.dims;
            return check(
                a > 0 && b > 0 && c > 0 && lr.rank <= a.min(b),
                "low_rank",
                format!("rank {} in {a}x{b}x{c}", lr.rank),
            );
        }
        check(self.aps > 0 || !self.ap_positions.is_empty(), "aps", "at least one AP required")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvdReportConfig {
    /// TNS3 tensor or radio map.
    pub input: Option<PathBuf>,
    /// Subtract the global mean first.
    pub center: bool,
    pub level: f64,
}

impl Default for SvdReportConfig {
    fn default() -> Self {
        SvdReportConfig {
            input: None,
            center: false,
            level: 0.95,
        }
    }
}

impl CommandConfig for SvdReportConfig {
    fn seed(&self) -> u64 {
        0
    }

    fn set_seed(&mut self, _: u64) {}

    fn validate(&self) -> Result<()> {
        check(self.level > 0.0 && self.level <= 1.0, "level", format!("{} outside (0, 1]", self.level))?;
        match &self.input {
            Some(p) => require_file(p),
            None => Err(CliError::schema("input", "a tensor path is required")),
        }
    }
}

fn dict_site() -> SynthConfig {
    SynthConfig {
        region: (32.0, 32.0),
        aps: 8,
        ..Default::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainDictConfig {
    pub seed: u64,
    /// Fine radio map to train on; synthesized from `synth` when absent.
    pub input: Option<PathBuf>,
    pub synth: SynthConfig,
    pub sr: SrTrainConfig,
}

impl Default for TrainDictConfig {
    fn default() -> Self {
        TrainDictConfig {
            seed: 0,
            input: None,
            synth: dict_site(),
            sr: SrTrainConfig::default(),
        }
    }
}

impl CommandConfig for TrainDictConfig {
    fn seed(&self) -> u64 {
        self.seed
    }

    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.synth.seed = seed;
        self.sr.dict.seed = seed;
    }

    fn validate(&self) -> Result<()> {
        if let Some(p) = &self.input {
            require_file(p)?;
        }
        self.synth.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuperResolveConfig {
    pub seed: u64,
    /// Held-out experiment repetitions, seeds `seed..seed + seeds`.
    pub seeds: usize,
    pub experiment: SrExperimentConfig,
    /// Model directory written by `train-dict`. When set, the model
    /// super-resolves `input` instead of running the experiment.
    pub model: Option<PathBuf>,
    /// Coarse map; defaults to the block-mean downsampling of `reference`.
    pub input: Option<PathBuf>,
    /// Fine ground truth for PSNR in model mode.
    pub reference: Option<PathBuf>,
    pub ista: IstaConfig,
}

impl Default for SuperResolveConfig {
    fn default() -> Self {
        let experiment = SrExperimentConfig::default();
        SuperResolveConfig {
            seed: 0,
            seeds: 1,
            ista: experiment.sr.dict.ista,
            experiment,
            model: None,
            input: None,
            reference: None,
        }
    }
}

impl CommandConfig for SuperResolveConfig {
    fn seed(&self) -> u64 {
        self.seed
    }

    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    fn validate(&self) -> Result<()> {
        let Some(m) = &self.model else {
            check(self.input.is_none() && self.reference.is_none(), "input", "requires model")?;
            return check(self.seeds > 0, "seeds", "must be >= 1");
        };
        require_file(&m.join("model.json"))?;
        check(self.input.is_some() || self.reference.is_some(), "input", "model mode needs input or reference")?;
        for p in self.input.iter().chain(&self.reference) {
            require_file(p)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainTganConfig {
    pub seed: u64,
    pub experiment: GanExperimentConfig,
}

impl CommandConfig for TrainTganConfig {
    fn seed(&self) -> u64 {
        self.seed
    }

    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    fn validate(&self) -> Result<()> {
        check(self.experiment.maps > 0, "experiment.maps", "must be >= 1")?;
        self.experiment.tgan.validate().map_err(|e| CliError::schema("experiment.tgan", e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizeConfig {
    pub seed: u64,
    pub seeds: usize,
    pub experiment: LocalizationConfig,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        LocalizeConfig {
            seed: 0,
            seeds: 1,
            experiment: LocalizationConfig::default(),
        }
    }
}

impl CommandConfig for LocalizeConfig {
    fn seed(&self) -> u64 {
        self.seed
    }

    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    fn validate(&self) -> Result<()> {
        check(self.seeds > 0, "seeds", "must be >= 1")?;
        check(self.experiment.k > 0, "experiment.k", "must be >= 1")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub svd_level: f64,
    pub super_resolve: SrExperimentConfig,
    pub localize: LocalizationConfig,
    pub tgan: GanExperimentConfig,
    pub run_tgan: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            synth: SynthConfig::default(),
            svd_level: 0.95,
            super_resolve: SrExperimentConfig::default(),
            localize: LocalizationConfig::default(),
            tgan: GanExperimentConfig::default(),
            run_tgan: true,
        }
    }
}

impl CommandConfig for PipelineConfig {
    fn seed(&self) -> u64 {
        self.seed
    }

    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.synth.seed = seed;
    }

    fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        check(
            self.svd_level > 0.0 && self.svd_level <= 1.0,
            "svd_level",
            format!("{} outside (0, 1]", self.svd_level),
        )?;
        if self.run_tgan {
            self.tgan.tgan.validate().map_err(|e| CliError::schema("tgan.tgan", e))?;
        }
        Ok(())
    }
}
