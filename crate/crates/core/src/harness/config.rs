//! Declarative experiment file (TOML).
//!
//! ```toml
//! n_runs = 10                  # default 10
//! seeds = [1, 2, 3]            # optional, one per run; default 0..n_runs
//! vocab_size = 2000
//! cross_setting = "en-hi"      # training variant of the cross_aug stage
//! stages = ["zero_shot", "mono_aug", "cross_aug"]
//! out_dir = "runs/main"        # optional; the CLI --out flag wins
//!
//! [train]
//! zero_shot = "squad.en.json"
//! mono_aug = "squad.hi.json"
//! cross_aug = "squad.en-hi.json"
//!
//! [eval.xquad]                 # parallel monolingual files: all four settings are built
//! en = "xquad.en.json"
//! hi = "xquad.hi.json"
//!
//! [eval.mmqa]                  # or one file per setting
//! "en-en" = "mmqa.en-en.json"
//! "hi-hi" = "mmqa.hi-hi.json"
//!
//! [hyperparams]                # any Hyperparams field
//! learning_rate = 5e-5
//!
//! [encoder]                    # hidden, layers, heads, ffn, max_positions
//! hidden = 64
//!
//! [[baseline]]
//! dataset = "xquad"
//! metric = "em"
//! values = [53.15, 45.34, 44.19, 51.34]
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{BaselineRow, EvalSets, ExperimentConfig, Stage};
use crate::data::Dataset;
use crate::engine::{EncoderConfig, Hyperparams};
use crate::error::{Error, Result};
use crate::variants::{build_cross_variant, MultilingualSetting};

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderGeometry {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_positions: usize,
}

impl EncoderGeometry {
    pub fn with_vocab(self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            hidden: self.hidden,
            layers: self.layers,
            heads: self.heads,
            ffn: self.ffn,
            max_positions: self.max_positions,
        }
    }
}

impl Default for EncoderGeometry {
    fn default() -> Self {
        let t = EncoderConfig::toy(0);
        EncoderGeometry {
            hidden: t.hidden,
            layers: t.layers,
            heads: t.heads,
            ffn: t.ffn,
            max_positions: t.max_positions,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum EvalSource {
    Parallel {
        en: PathBuf,
        hi: PathBuf,
    },
    Settings(BTreeMap<MultilingualSetting, PathBuf>),
}

fn default_runs() -> usize {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub stages: Option<Vec<Stage>>,
    pub vocab_size: Option<usize>,
    pub cross_setting: Option<MultilingualSetting>,
    pub out_dir: Option<PathBuf>,
    pub train: BTreeMap<Stage, PathBuf>,
    #[serde(default)]
    pub eval: BTreeMap<String, EvalSource>,
    #[serde(default)]
    pub hyperparams: Hyperparams,
    #[serde(default)]
    pub encoder: EncoderGeometry,
    #[serde(default)]
    pub baseline: Vec<BaselineRow>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads every referenced dataset.
    pub fn resolve(&self, base: &Path) -> Result<ExperimentConfig> {
        let load = |p: &Path| Dataset::from_path(base.join(p));
        let mut train = BTreeMap::new();
        for (&stage, path) in &self.train {
            train.insert(stage, load(path)?);
        }
        let mut eval: EvalSets = BTreeMap::new();
        for (name, source) in &self.eval {
            let sets = match source {
                EvalSource::Parallel { en, hi } => {
                    let (en, hi) = (load(en)?, load(hi)?);
                    MultilingualSetting::ALL
                        .into_iter()
                        .map(|s| Ok((s, build_cross_variant(&en, &hi, s)?)))
                        .collect::<Result<BTreeMap<_, _>>>()?
                }
                EvalSource::Settings(files) => files
                    .iter()
                    .map(|(&s, p)| Ok((s, load(p)?)))
                    .collect::<Result<BTreeMap<_, _>>>()?,
            };
            eval.insert(name.clone(), sets);
        }
        let mut cfg = ExperimentConfig::new(train, eval);
        cfg.n_runs = self.n_runs;
        cfg.seeds = self.seeds.clone();
        if let Some(stages) = &self.stages {
            cfg.stages = stages.clone();
        }
        if let Some(v) = self.vocab_size {
            cfg.vocab_size = v;
        }
        if let Some(s) = self.cross_setting {
            cfg.cross_setting = s;
        }
        cfg.hyperparams = self.hyperparams;
        cfg.encoder = self.encoder.with_vocab(0);
        cfg.baselines = self.baseline.clone();
        Ok(cfg)
    }
}

/// Reads a config file and its datasets. Also returns the `out_dir` it names, resolved
/// against the file's directory.
pub fn load_config(path: impl AsRef<Path>) -> Result<(ExperimentConfig, Option<PathBuf>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = ConfigFile::parse(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let cfg = file.resolve(base)?;
    Ok((cfg, file.out_dir.map(|d| base.join(d))))
}
