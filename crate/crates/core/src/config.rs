//! Run configuration read from TOML. Every field has a default, so an empty
//! file is a valid configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::belief::{BtnArch, TrainConfig};
use crate::datasets::{Dataset, HistoryPolicy, SplitConfig};
use crate::dialogue::PolicyConfig;
use crate::error::{Error, Result};
use crate::nnkit::AdamConfig;
use crate::recommender::{RnArch, RnTrainConfig};
use crate::simulation::{generate_world, SyntheticConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub lr_min: f64,
    pub btn_epochs: usize,
    pub rn_epochs: usize,
    pub batch_size: usize,
    pub margin: f64,
    pub mask_rate: f64,
    pub refresh_every: u64,
    pub embedding_dim: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            lr_min: 0.0,
            btn_epochs: 20,
            rn_epochs: 20,
            batch_size: 128,
            margin: 0.5,
            mask_rate: 0.5,
            refresh_every: 500,
            embedding_dim: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset manifest; relative paths resolve against the config file.
    pub dataset: Option<PathBuf>,
    /// Generated world used when no manifest is given.
    pub synthetic: Option<SyntheticConfig>,
    pub seed: u64,
    /// Overrides the manifest's history policy when set.
    pub history_policy: Option<HistoryPolicy>,
    pub split: [f64; 3],
    pub policy: PolicyConfig,
    pub training: TrainingConfig,
    pub btn: BtnArch,
    pub rn: RnArch,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            synthetic: None,
            seed: 123,
            history_policy: None,
            split: SplitConfig::default().ratios,
            policy: PolicyConfig::default(),
            training: TrainingConfig::default(),
            btn: BtnArch::default(),
            rn: RnArch::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        if let (Some(d), Some(base)) = (&cfg.dataset, path.parent()) {
            cfg.dataset = Some(base.join(d));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every field and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let mut need = |ok: bool, field: &str, rule: &str| {
            if !ok {
                bad.push(format!("{field}: {rule}"));
            }
        };
        let p = &self.policy;
        need((0.0..=0.5).contains(&p.alpha), "policy.alpha", "must lie in [0, 0.5]");
        need(p.k >= 1, "policy.k", "must be at least 1");
        need(p.t_max >= 2, "policy.t_max", "must be at least 2");
        need(p.mc_passes >= 1, "policy.mc_passes", "must be at least 1");
        let t = &self.training;
        need(
            t.learning_rate > 0.0 && t.learning_rate.is_finite(),
            "training.learning_rate",
            "must be positive",
        );
        need(
            t.lr_min >= 0.0 && t.lr_min <= t.learning_rate,
            "training.lr_min",
            "must lie in [0, learning_rate]",
        );
        need(t.batch_size >= 1, "training.batch_size", "must be at least 1");
        need(t.margin > 0.0, "training.margin", "must be positive");
        need((0.0..=1.0).contains(&t.mask_rate), "training.mask_rate", "must lie in [0, 1]");
        need(t.refresh_every >= 1, "training.refresh_every", "must be at least 1");
        need(t.embedding_dim >= 1, "training.embedding_dim", "must be at least 1");
        need(
            self.split.iter().all(|r| *r >= 0.0) && (self.split.iter().sum::<f64>() - 1.0).abs() < 1e-9,
            "split",
            "ratios must be non-negative and sum to 1",
        );
        need((0.0..1.0).contains(&self.btn.dropout), "btn.dropout", "must lie in [0, 1)");
        need(
            self.btn.conv_channels >= 1 && self.btn.hidden >= 1,
            "btn",
            "widths must be positive",
        );
        need(self.btn.history_len >= 1, "btn.history_len", "must be at least 1");
        need(
            self.rn.block1_channels >= 1 && self.rn.block2_channels >= 1,
            "rn",
            "channel counts must be positive",
        );
        need(self.rn.history_len >= 1, "rn.history_len", "must be at least 1");
        need(
            !(self.dataset.is_some() && self.synthetic.is_some()),
            "dataset",
            "set either a manifest path or a [synthetic] world, not both",
        );
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    /// Loads the manifest, or generates the synthetic world.
    pub fn load_dataset(&self) -> Result<Dataset> {
        match (&self.dataset, &self.synthetic) {
            (Some(path), _) => Dataset::from_manifest_path(path),
            (None, Some(world)) => Ok(generate_world(world)?.dataset),
            (None, None) => Err(Error::Config("dataset: set a manifest path or a [synthetic] world".into())),
        }
    }

    pub fn split_config(&self) -> SplitConfig {
        SplitConfig {
            ratios: self.split,
            seed: self.seed,
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.training.learning_rate,
            ..AdamConfig::default()
        }
    }

    pub fn btn_training(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.training.btn_epochs,
            batch_size: self.training.batch_size,
            adam: self.adam(),
            lr_min: self.training.lr_min,
            mask_rate: self.training.mask_rate,
            seed: self.seed,
        }
    }

    pub fn rn_training(&self) -> RnTrainConfig {
        RnTrainConfig {
            epochs: self.training.rn_epochs,
            batch_size: self.training.batch_size,
            adam: self.adam(),
            lr_min: self.training.lr_min,
            margin: self.training.margin,
            mask_rate: self.training.mask_rate,
            refresh_every: self.training.refresh_every,
            seed: self.seed,
        }
    }
}
