//! Experiment configuration: a versioned TOML schema with fail-fast parsing.
//! Unknown keys are hard errors.
//!
//! ```toml
//! version = 1
//!
//! [experiment]
//! regime = "scratch"              # or "pretrain-finetune"
//! shots = [1, 5, 10, 20, "all"]
//! losses = ["ce", "fl"]
//! dipa = [false, true]
//! seeds = [0, 1, 42, 123, 1234]
//!
//! [data.generator]                # exactly one of .generator / .paths
//! num_classes = 12
//! head_class_fraction = 0.46
//! tail_exponent = 1.0
//! channels = 13
//! obs_count_min = 8
//! obs_count_max = 16
//! noise_scale = 1.2
//! test_only_classes = 2
//! total_samples = 15000
//! seed = 0
//!
//! [model]
//! embed_dim = 32
//! num_heads = 2
//! ffn_hidden = 64
//! num_blocks = 1
//! max_len = 366
//!
//! [train]
//! learning_rate = 0.001           # scalar or list; lists form a hyper grid
//! batch_size = 16
//! max_epochs = 200
//! patience = 15
//! validation_subsample = 1000
//! focal_gamma = 2.0
//!
//! [dipa]
//! alpha = 1.0                     # scalar or list
//! tau = 1.0
//!
//! [pretrain]                      # required for regime = "pretrain-finetune"
//! learning_rate = 0.001
//! max_epochs = 60
//! patience = 15
//! [pretrain.generator]
//! # source-domain generator, same keys as [data.generator]
//! ```
//!
//! Hyper-grid lists (`learning_rate`, `focal_gamma`, `alpha`, `tau`) are
//! searched per run and the winner is chosen by validation accuracy.

use std::fs;
use std::path::{Path, PathBuf};

use dipa_core::data::{GeneratorConfig, DAYS_PER_YEAR};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::experiment::{
    DataSource, ExperimentSpec, LossName, ModelDims, PretrainSpec, Regime, Shot,
};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ShotValue {
    Count(usize),
    Label(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(vs) => vs.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    version: u32,
    #[serde(default)]
    experiment: ExperimentSection,
    data: DataSection,
    #[serde(default)]
    model: ModelSection,
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    dipa: DipaSection,
    pretrain: Option<PretrainSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    #[serde(default = "default_regime")]
    regime: String,
    #[serde(default = "default_shots")]
    shots: Vec<ShotValue>,
    #[serde(default = "default_losses")]
    losses: Vec<String>,
    #[serde(default = "default_dipa_axis")]
    dipa: Vec<bool>,
    #[serde(default = "default_seeds")]
    seeds: Vec<u64>,
}

fn default_regime() -> String {
    "scratch".into()
}

fn default_shots() -> Vec<ShotValue> {
    let mut shots: Vec<ShotValue> = [1usize, 5, 10, 20, 100, 200, 500]
        .into_iter()
        .map(ShotValue::Count)
        .collect();
    shots.push(ShotValue::Label("all".into()));
    shots
}

fn default_losses() -> Vec<String> {
    vec!["ce".into(), "fl".into()]
}

fn default_dipa_axis() -> Vec<bool> {
    vec![false, true]
}

fn default_seeds() -> Vec<u64> {
    dipa_core::trainer::DEFAULT_SEEDS.to_vec()
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            regime: default_regime(),
            shots: default_shots(),
            losses: default_losses(),
            dipa: default_dipa_axis(),
            seeds: default_seeds(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataSection {
    generator: Option<GeneratorSection>,
    paths: Option<PathsSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratorSection {
    #[serde(default = "d_num_classes")]
    num_classes: usize,
    #[serde(default = "d_head_fraction")]
    head_class_fraction: f64,
    #[serde(default = "d_tail_exponent")]
    tail_exponent: f64,
    #[serde(default = "d_channels")]
    channels: usize,
    #[serde(default = "d_obs_min")]
    obs_count_min: usize,
    #[serde(default = "d_obs_max")]
    obs_count_max: usize,
    #[serde(default = "d_noise")]
    noise_scale: f64,
    #[serde(default = "d_test_only")]
    test_only_classes: usize,
    #[serde(default = "d_total")]
    total_samples: usize,
    #[serde(default)]
    seed: u64,
}

fn d_num_classes() -> usize {
    12
}
fn d_head_fraction() -> f64 {
    0.46
}
fn d_tail_exponent() -> f64 {
    1.0
}
fn d_channels() -> usize {
    13
}
fn d_obs_min() -> usize {
    8
}
fn d_obs_max() -> usize {
    16
}
fn d_noise() -> f64 {
    1.2
}
fn d_test_only() -> usize {
    2
}
fn d_total() -> usize {
    15_000
}

impl GeneratorSection {
    fn to_core(&self) -> GeneratorConfig {
        GeneratorConfig {
            num_classes: self.num_classes,
            head_class_fraction: self.head_class_fraction,
            tail_exponent: self.tail_exponent,
            channels: self.channels,
            obs_count_range: (self.obs_count_min, self.obs_count_max),
            noise_scale: self.noise_scale,
            test_only_classes: self.test_only_classes,
            total_samples: self.total_samples,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathsSection {
    train: PathBuf,
    validation: PathBuf,
    test: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    #[serde(default = "d_embed")]
    embed_dim: usize,
    #[serde(default = "d_heads")]
    num_heads: usize,
    #[serde(default = "d_ffn")]
    ffn_hidden: usize,
    #[serde(default = "d_blocks")]
    num_blocks: usize,
    #[serde(default = "d_max_len")]
    max_len: usize,
}

fn d_embed() -> usize {
    32
}
fn d_heads() -> usize {
    2
}
fn d_ffn() -> usize {
    64
}
fn d_blocks() -> usize {
    1
}
fn d_max_len() -> usize {
    DAYS_PER_YEAR
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            embed_dim: d_embed(),
            num_heads: d_heads(),
            ffn_hidden: d_ffn(),
            num_blocks: d_blocks(),
            max_len: d_max_len(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    #[serde(default = "d_lr")]
    learning_rate: OneOrMany,
    #[serde(default = "d_batch")]
    batch_size: usize,
    #[serde(default = "d_epochs")]
    max_epochs: usize,
    #[serde(default = "d_patience")]
    patience: usize,
    #[serde(default = "d_val_sub")]
    validation_subsample: usize,
    #[serde(default = "d_gamma")]
    focal_gamma: OneOrMany,
}

fn d_lr() -> OneOrMany {
    OneOrMany::One(1e-3)
}
fn d_batch() -> usize {
    16
}
fn d_epochs() -> usize {
    200
}
fn d_patience() -> usize {
    15
}
fn d_val_sub() -> usize {
    1000
}
fn d_gamma() -> OneOrMany {
    OneOrMany::One(2.0)
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            learning_rate: d_lr(),
            batch_size: d_batch(),
            max_epochs: d_epochs(),
            patience: d_patience(),
            validation_subsample: d_val_sub(),
            focal_gamma: d_gamma(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DipaSection {
    #[serde(default = "d_alpha")]
    alpha: OneOrMany,
    #[serde(default = "d_tau")]
    tau: OneOrMany,
}

fn d_alpha() -> OneOrMany {
    OneOrMany::One(1.0)
}
fn d_tau() -> OneOrMany {
    OneOrMany::One(1.0)
}

impl Default for DipaSection {
    fn default() -> Self {
        DipaSection {
            alpha: d_alpha(),
            tau: d_tau(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PretrainSection {
    generator: GeneratorSection,
    #[serde(default = "d_lr_scalar")]
    learning_rate: f64,
    #[serde(default = "d_pretrain_epochs")]
    max_epochs: usize,
    #[serde(default = "d_patience")]
    patience: usize,
}

fn d_lr_scalar() -> f64 {
    1e-3
}
fn d_pretrain_epochs() -> usize {
    60
}

fn positive_list(name: &str, values: &[f64], allow_zero: bool) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::config(format!("{name} list must be non-empty")));
    }
    for &v in values {
        let ok = v.is_finite() && if allow_zero { v >= 0.0 } else { v > 0.0 };
        if !ok {
            return Err(Error::config(format!("{name} value {v} is out of range")));
        }
    }
    Ok(values.to_vec())
}

fn parse_shots(raw: &[ShotValue]) -> Result<Vec<Shot>> {
    if raw.is_empty() {
        return Err(Error::config("shots list must be non-empty"));
    }
    raw.iter()
        .map(|s| match s {
            ShotValue::Count(0) => Err(Error::config("shot counts must be at least 1")),
            ShotValue::Count(k) => Ok(Shot::K(*k)),
            ShotValue::Label(l) if l == "all" => Ok(Shot::All),
            ShotValue::Label(l) => Err(Error::config(format!(
                "unknown shot `{l}` (expected an integer or \"all\")"
            ))),
        })
        .collect()
}

/// Parse and validate a config file into a resolved [`ExperimentSpec`].
pub fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    spec_from_str(path, &text)
}

pub fn spec_from_str(path: &Path, text: &str) -> Result<ExperimentSpec> {
    let file: FileConfig = toml::from_str(text)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    if file.version != CONFIG_VERSION {
        return Err(Error::config(format!(
            "unsupported config version {} (this tool reads version {CONFIG_VERSION})",
            file.version
        )));
    }

    let regime: Regime = file.experiment.regime.parse().map_err(Error::Config)?;
    let shots = parse_shots(&file.experiment.shots)?;
    if file.experiment.losses.is_empty() {
        return Err(Error::config("losses list must be non-empty"));
    }
    let losses: Vec<LossName> = file
        .experiment
        .losses
        .iter()
        .map(|l| l.parse().map_err(Error::Config))
        .collect::<Result<_>>()?;
    if file.experiment.dipa.is_empty() {
        return Err(Error::config("dipa list must be non-empty"));
    }
    if file.experiment.seeds.is_empty() {
        return Err(Error::config("seeds list must be non-empty"));
    }

    let data = match (&file.data.generator, &file.data.paths) {
        (Some(g), None) => {
            let cfg = g.to_core();
            cfg.validate()?;
            DataSource::Generator(cfg)
        }
        (None, Some(p)) => DataSource::Paths {
            train: p.train.clone(),
            validation: p.validation.clone(),
            test: p.test.clone(),
        },
        (Some(_), Some(_)) => {
            return Err(Error::config(
                "data.generator and data.paths are mutually exclusive",
            ))
        }
        (None, None) => {
            return Err(Error::config(
                "data needs either a [data.generator] or a [data.paths] table",
            ))
        }
    };
    if let DataSource::Generator(_) = &data {
        if file.model.max_len < DAYS_PER_YEAR {
            return Err(Error::config(format!(
                "model.max_len must be at least {DAYS_PER_YEAR} for generated data"
            )));
        }
    }

    let pretrain = match (&regime, file.pretrain) {
        (Regime::PretrainFinetune, Some(p)) => {
            let generator = p.generator.to_core();
            generator.validate()?;
            if !(p.learning_rate > 0.0) {
                return Err(Error::config("pretrain.learning_rate must be positive"));
            }
            if p.max_epochs == 0 || p.patience == 0 {
                return Err(Error::config(
                    "pretrain.max_epochs and pretrain.patience must be at least 1",
                ));
            }
            Some(PretrainSpec {
                generator,
                learning_rate: p.learning_rate,
                max_epochs: p.max_epochs,
                patience: p.patience,
            })
        }
        (Regime::PretrainFinetune, None) => {
            return Err(Error::config(
                "regime \"pretrain-finetune\" requires a [pretrain] section",
            ))
        }
        (Regime::Scratch, Some(_)) => {
            return Err(Error::config(
                "[pretrain] section is only valid with regime \"pretrain-finetune\"",
            ))
        }
        (Regime::Scratch, None) => None,
    };

    if file.train.batch_size == 0 || file.train.max_epochs == 0 || file.train.patience == 0 {
        return Err(Error::config(
            "train.batch_size, train.max_epochs, and train.patience must be at least 1",
        ));
    }

    Ok(ExperimentSpec {
        regime,
        shots,
        losses,
        dipa_axis: file.experiment.dipa.clone(),
        seeds: file.experiment.seeds.clone(),
        data,
        model: ModelDims {
            embed_dim: file.model.embed_dim,
            num_heads: file.model.num_heads,
            ffn_hidden: file.model.ffn_hidden,
            num_blocks: file.model.num_blocks,
            max_len: file.model.max_len,
        },
        learning_rates: positive_list("train.learning_rate", &file.train.learning_rate.values(), false)?,
        batch_size: file.train.batch_size,
        max_epochs: file.train.max_epochs,
        patience: file.train.patience,
        validation_subsample: file.train.validation_subsample,
        focal_gammas: positive_list("train.focal_gamma", &file.train.focal_gamma.values(), true)?,
        alphas: positive_list("dipa.alpha", &file.dipa.alpha.values(), false)?,
        taus: positive_list("dipa.tau", &file.dipa.tau.values(), true)?,
        pretrain,
    })
}
