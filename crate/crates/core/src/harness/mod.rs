//! The fine-tune cascade and the checkpoint × dataset × setting evaluation grid.
//!
//! Output directory layout:
//!
//! ```text
//! <out>/vocab.txt
//! <out>/checkpoints/<stage>/<run>/model.ckpt
//! <out>/predictions/<stage>/<run>/<dataset>_<setting>.json   (+ .json.sha256)
//! <out>/reports/<metric>_<dataset>.md|csv, eval_report.json
//! ```

mod config;
mod table;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{load_config, ConfigFile, EncoderGeometry, EvalSource};
pub use table::{emit_table, emit_tables, write_tables, BaselineRow, Metric, RenderedTable, TableFormat};

use crate::data::{validate, Dataset};
use crate::engine::{build_vocab, fine_tune, predict, Checkpoint, EncoderConfig, Hyperparams, Vocabulary};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, ScorePair};
use crate::variants::MultilingualSetting;

/// Fine-tune stages, in cascade order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    ZeroShot,
    MonoAug,
    CrossAug,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::ZeroShot, Stage::MonoAug, Stage::CrossAug];

    pub fn dir_name(self) -> &'static str {
        match self {
            Stage::ZeroShot => "zero_shot",
            Stage::MonoAug => "mono_aug",
            Stage::CrossAug => "cross_aug",
        }
    }

    /// Row label in report tables.
    pub fn label(self, cross: MultilingualSetting) -> String {
        match self {
            Stage::ZeroShot => "Zero Shot".to_string(),
            Stage::MonoAug => format!("with {} Aug.", MultilingualSetting::HI_HI.label()),
            Stage::CrossAug => format!("with {} Aug.", cross.label()),
        }
    }

    pub fn parent(self) -> Option<Stage> {
        match self {
            Stage::ZeroShot => None,
            Stage::MonoAug => Some(Stage::ZeroShot),
            Stage::CrossAug => Some(Stage::MonoAug),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.dir_name() == s.replace('-', "_"))
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?} (zero_shot, mono_aug, cross_aug)")))
    }
}

/// Evaluation datasets: name → setting → dataset.
pub type EvalSets = BTreeMap<String, BTreeMap<MultilingualSetting, Dataset>>;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub n_runs: usize,
    /// One seed per run; empty means `0..n_runs`.
    pub seeds: Vec<u64>,
    /// A prefix of [`Stage::ALL`].
    pub stages: Vec<Stage>,
    pub train: BTreeMap<Stage, Dataset>,
    pub eval: EvalSets,
    pub hyperparams: Hyperparams,
    /// Encoder geometry; `vocab_size` is replaced by the size of the built vocabulary.
    pub encoder: EncoderConfig,
    pub vocab_size: usize,
    /// Training variant of the cross-lingual augmentation stage, used for row labels.
    pub cross_setting: MultilingualSetting,
    pub baselines: Vec<BaselineRow>,
}

impl ExperimentConfig {
    pub fn new(train: BTreeMap<Stage, Dataset>, eval: EvalSets) -> Self {
        ExperimentConfig {
            n_runs: 10,
            seeds: Vec::new(),
            stages: Stage::ALL.to_vec(),
            train,
            eval,
            hyperparams: Hyperparams::default(),
            encoder: EncoderConfig::toy(0),
            vocab_size: 2000,
            cross_setting: MultilingualSetting::EN_HI,
            baselines: Vec::new(),
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.n_runs as u64).collect()
        } else {
            self.seeds.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_runs == 0 {
            return Err(Error::Config("n_runs must be at least 1".into()));
        }
        let seeds = self.seeds();
        if seeds.len() != self.n_runs {
            return Err(Error::Config(format!("{} seeds for {} runs", seeds.len(), self.n_runs)));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.stages.is_empty() || self.stages[..] != Stage::ALL[..self.stages.len().min(3)] {
            return Err(Error::Config(format!(
                "stages {:?} must be a prefix of zero_shot, mono_aug, cross_aug",
                self.stages
            )));
        }
        for stage in &self.stages {
            if !self.train.contains_key(stage) {
                return Err(Error::Config(format!("no training set for stage {stage}")));
            }
        }
        if !self.cross_setting.is_cross_lingual() {
            return Err(Error::Config(format!("cross_setting {} is monolingual", self.cross_setting)));
        }
        for name in self.eval.keys() {
            if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || "-_.".contains(c)) {
                return Err(Error::Config(format!("dataset name {name:?} is not usable in file names")));
            }
        }
        self.hyperparams.validate()?;
        EncoderConfig {
            vocab_size: self.vocab_size.max(1),
            ..self.encoder
        }
        .validate()?;
        if self.encoder.max_positions < self.hyperparams.max_seq_len {
            return Err(Error::Config(format!(
                "encoder max_positions {} is below max_seq_len {}",
                self.encoder.max_positions, self.hyperparams.max_seq_len
            )));
        }
        if self.vocab_size < 4 {
            return Err(Error::Config("vocab_size must be at least 4".into()));
        }
        let train = self.stages.iter().map(|s| (s.to_string(), &self.train[s]));
        let eval = self
            .eval
            .iter()
            .flat_map(|(n, m)| m.iter().map(move |(s, d)| (format!("{n}/{s}"), d)));
        for (name, ds) in train.chain(eval) {
            let violations = validate(ds);
            if let Some(v) = violations.first() {
                return Err(Error::Config(format!(
                    "dataset {name} has {} violation(s), first: {v}",
                    violations.len()
                )));
            }
        }
        Ok(())
    }

    /// Text the shared vocabulary is built from: every question and context of the
    /// training sets.
    pub fn vocab_corpus(&self) -> Vec<&str> {
        self.stages
            .iter()
            .flat_map(|s| self.train[s].qas())
            .flat_map(|r| [r.qa.question.as_str(), r.context])
            .collect()
    }
}

/// Location and lineage of one cascade checkpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckpointRecord {
    pub stage: Stage,
    pub run: usize,
    pub seed: u64,
    pub path: PathBuf,
    pub parent: Option<PathBuf>,
}

pub fn checkpoint_path(out_dir: &Path, stage: Stage, run: usize) -> PathBuf {
    out_dir
        .join("checkpoints")
        .join(stage.dir_name())
        .join(run.to_string())
        .join("model.ckpt")
}

/// Checkpoint records implied by `cfg`, whether or not they exist yet.
pub fn checkpoint_records(cfg: &ExperimentConfig, out_dir: &Path) -> Vec<CheckpointRecord> {
    let seeds = cfg.seeds();
    let mut out = Vec::new();
    for &stage in &cfg.stages {
        for (run, &seed) in seeds.iter().enumerate() {
            out.push(CheckpointRecord {
                stage,
                run,
                seed,
                path: checkpoint_path(out_dir, stage, run),
                parent: stage.parent().map(|p| checkpoint_path(out_dir, p, run)),
            });
        }
    }
    out
}

fn relative(path: &Path, base: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).display().to_string()
}

/// Trains the cascade for every run and persists each checkpoint.
///
/// Run `r` starts from a fresh encoder seeded with its seed, trains ZeroShot on the first
/// training set, then continues stage by stage, each from the previous stage's checkpoint.
/// Runs are independent and execute in parallel; each is deterministic in its seed.
pub fn run_cascade(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<CheckpointRecord>> {
    cfg.validate()?;
    let vocab = build_vocab(&cfg.vocab_corpus(), cfg.vocab_size);
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    vocab.save(out_dir.join("vocab.txt"))?;
    let encoder = EncoderConfig {
        vocab_size: vocab.len(),
        ..cfg.encoder
    };
    log::info!(
        "cascade: {} run(s) × {} stage(s), vocabulary of {}",
        cfg.n_runs,
        cfg.stages.len(),
        vocab.len()
    );

    let seeds = cfg.seeds();
    seeds
        .par_iter()
        .enumerate()
        .map(|(run, &seed)| train_chain(cfg, &vocab, encoder, out_dir, run, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(checkpoint_records(cfg, out_dir))
}

fn train_chain(
    cfg: &ExperimentConfig,
    vocab: &Vocabulary,
    encoder: EncoderConfig,
    out_dir: &Path,
    run: usize,
    seed: u64,
) -> Result<()> {
    let hp = Hyperparams {
        seed,
        ..cfg.hyperparams
    };
    let mut current: Checkpoint<f64> = Checkpoint::fresh(vocab.clone(), encoder, hp, seed)?;
    let mut parent: Option<PathBuf> = None;
    for &stage in &cfg.stages {
        let (mut next, report) = fine_tune(&current, &cfg.train[&stage], &hp)?;
        next.provenance.stage = stage.dir_name().to_string();
        next.provenance.parent = parent.as_deref().map(|p| relative(p, out_dir));
        let path = checkpoint_path(out_dir, stage, run);
        next.save(&path)?;
        log::info!(
            "run {run} (seed {seed}) {stage}: {} steps, final loss {:.4}",
            report.steps,
            report.losses.last().copied().unwrap_or(f64::NAN)
        );
        parent = Some(path);
        current = next;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Scored(ScorePair),
    Failed { error: String },
}

/// One (checkpoint, dataset, setting) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub stage: Stage,
    pub run: usize,
    pub seed: u64,
    pub dataset: String,
    pub setting: MultilingualSetting,
    pub predictions: PathBuf,
    /// Predictions were read back from a checksum-valid file instead of recomputed.
    pub reused: bool,
    pub outcome: CellOutcome,
}

impl Cell {
    pub fn scores(&self) -> Option<&ScorePair> {
        match &self.outcome {
            CellOutcome::Scored(s) => Some(s),
            CellOutcome::Failed { .. } => None,
        }
    }
}

/// Mean scores of one (stage, dataset, setting) group across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub stage: Stage,
    pub dataset: String,
    pub setting: MultilingualSetting,
    pub exact_match: Option<f64>,
    pub f1: Option<f64>,
    pub runs: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cross_setting: MultilingualSetting,
    pub cells: Vec<Cell>,
    pub groups: Vec<Group>,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

impl EvalReport {
    /// Aggregates cells into per-group means. Group order is (stage, dataset, setting).
    pub fn from_cells(mut cells: Vec<Cell>, cross_setting: MultilingualSetting) -> Self {
        cells.sort_by(|a, b| {
            (a.stage, &a.dataset, a.setting, a.run).cmp(&(b.stage, &b.dataset, b.setting, b.run))
        });
        let mut by_group: BTreeMap<(Stage, String, MultilingualSetting), Vec<&Cell>> = BTreeMap::new();
        for c in &cells {
            by_group.entry((c.stage, c.dataset.clone(), c.setting)).or_default().push(c);
        }
        let groups = by_group
            .into_iter()
            .map(|((stage, dataset, setting), members)| {
                let scored: Vec<&ScorePair> = members.iter().filter_map(|c| c.scores()).collect();
                let ems: Vec<f64> = scored.iter().filter_map(|s| s.exact_match).collect();
                let f1s: Vec<f64> = scored.iter().filter_map(|s| s.f1).collect();
                Group {
                    stage,
                    dataset,
                    setting,
                    exact_match: mean(&ems),
                    f1: mean(&f1s),
                    runs: scored.len(),
                    failures: members.len() - scored.len(),
                }
            })
            .collect();
        EvalReport {
            cross_setting,
            cells,
            groups,
        }
    }

    pub fn group(&self, stage: Stage, dataset: &str, setting: MultilingualSetting) -> Option<&Group> {
        self.groups
            .iter()
            .find(|g| g.stage == stage && g.dataset == dataset && g.setting == setting)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| c.scores().is_none())
    }

    pub fn datasets(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.groups.iter().map(|g| g.dataset.as_str()).collect();
        names.dedup();
        names.sort_unstable();
        names.dedup();
        names
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            offset: crate::data::byte_offset(text.as_bytes(), e.line(), e.column()),
            message: e.to_string(),
        })
    }
}

pub fn prediction_path(out_dir: &Path, stage: Stage, run: usize, dataset: &str, setting: MultilingualSetting) -> PathBuf {
    out_dir
        .join("predictions")
        .join(stage.dir_name())
        .join(run.to_string())
        .join(format!("{dataset}_{setting}.json"))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".sha256");
    PathBuf::from(s)
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Reads a prediction file if it exists and matches its checksum sidecar.
pub fn read_verified_predictions(path: &Path) -> Option<BTreeMap<String, String>> {
    let bytes = fs::read(path).ok()?;
    let expected = fs::read_to_string(sidecar(path)).ok()?;
    if expected.split_whitespace().next()? != sha256_hex(&bytes) {
        return None;
    }
    serde_json::from_slice(&bytes).ok()
}

/// Writes predictions as a JSON object (id → answer) plus a `.sha256` sidecar.
pub fn write_predictions(path: &Path, preds: &BTreeMap<String, String>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let bytes = serde_json::to_vec_pretty(preds).expect("predictions serialize");
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    let side = sidecar(path);
    fs::write(&side, format!("{}\n", sha256_hex(&bytes))).map_err(|e| Error::io(&side, e))
}

fn load_for_stage(record: &CheckpointRecord) -> Result<Checkpoint<f64>> {
    let ckpt = Checkpoint::load(&record.path)?;
    if ckpt.provenance.stage != record.stage.dir_name() {
        return Err(Error::Checkpoint(format!(
            "{} was trained for stage {:?}, expected {}",
            record.path.display(),
            ckpt.provenance.stage,
            record.stage
        )));
    }
    Ok(ckpt)
}

/// Predicts and scores every (checkpoint × dataset × setting) cell.
///
/// Cells whose prediction file already exists with a valid checksum are scored from that
/// file. A checkpoint that cannot be loaded fails its own cells only.
pub fn run_matrix(records: &[CheckpointRecord], cfg: &ExperimentConfig, out_dir: &Path) -> Result<EvalReport> {
    let cells: Vec<Cell> = records
        .par_iter()
        .flat_map_iter(|record| evaluate_checkpoint(record, &cfg.eval, out_dir))
        .collect();
    let report = EvalReport::from_cells(cells, cfg.cross_setting);
    for c in report.failures() {
        if let CellOutcome::Failed { error } = &c.outcome {
            log::warn!("cell {} run {} {} {} failed: {error}", c.stage, c.run, c.dataset, c.setting);
        }
    }
    Ok(report)
}

fn evaluate_checkpoint(record: &CheckpointRecord, eval: &EvalSets, out_dir: &Path) -> Vec<Cell> {
    let mut ckpt: Option<std::result::Result<Checkpoint<f64>, String>> = None;
    let mut cells = Vec::new();
    for (name, settings) in eval {
        for (&setting, ds) in settings {
            let path = prediction_path(out_dir, record.stage, record.run, name, setting);
            let (preds, reused) = match read_verified_predictions(&path) {
                Some(p) => (Ok(p), true),
                None => {
                    let loaded = ckpt.get_or_insert_with(|| load_for_stage(record).map_err(|e| e.to_string()));
                    let preds = loaded.as_ref().map_err(Clone::clone).and_then(|c| {
                        let p = predict(c, ds).map_err(|e| e.to_string())?.answers;
                        write_predictions(&path, &p).map_err(|e| e.to_string())?;
                        Ok(p)
                    });
                    (preds, false)
                }
            };
            let outcome = match preds {
                Ok(p) => CellOutcome::Scored(evaluate(&p, ds)),
                Err(error) => CellOutcome::Failed { error },
            };
            cells.push(Cell {
                stage: record.stage,
                run: record.run,
                seed: record.seed,
                dataset: name.clone(),
                setting,
                predictions: path,
                reused,
                outcome,
            });
        }
    }
    cells
}

/// Writes `eval_report.json` and the per-dataset, per-metric tables under `<out>/reports`.
pub fn write_reports(report: &EvalReport, baselines: &[BaselineRow], out_dir: &Path, format: TableFormat) -> Result<Vec<PathBuf>> {
    let dir = out_dir.join("reports");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let json = dir.join("eval_report.json");
    fs::write(&json, report.to_json()).map_err(|e| Error::io(&json, e))?;
    let mut paths = vec![json];
    paths.extend(write_tables(report, baselines, &dir, format)?);
    Ok(paths)
}
