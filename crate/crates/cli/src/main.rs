//! `mmc`: command-line front end for the multilingual machine-comprehension toolkit.
//!
//! Exit codes: 0 success, 1 domain error (one `error: kind=<kind>: <message>` line on
//! stderr), 2 usage error.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmc::data::{validate, Dataset};
use mmc::engine::{build_vocab, fine_tune, predict, Checkpoint, Hyperparams, Vocabulary};
use mmc::harness::{
    checkpoint_records, load_config, run_cascade, run_matrix, write_reports, EncoderGeometry, EvalReport, Stage,
    TableFormat,
};
use mmc::metrics::{evaluate_with, unexpected_ids, NormalizeOptions};
use mmc::preprocess::{mmqa_bucket, mmqa_to_squad, parse_mmqa, parse_tuples, regroup_tuples, sanitize_text, RuleSet};
use mmc::variants::build_cross_variant;
use mmc::{Error, MultilingualSetting, Result};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "mmc", version, about = "English/Hindi multilingual machine comprehension toolkit")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a SQuAD-format dataset for duplicate ids and broken answer offsets.
    Validate {
        #[arg(long)]
        data: PathBuf,
    },
    /// Apply sanitization rules to each line of a text file ("-" for stdin).
    Sanitize {
        #[arg(long)]
        data: PathBuf,
        /// Tab-separated rule file (name, pattern, replacement); default rules otherwise.
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regroup translated (question, passage, answer, start, end, lang) tuples into SQuAD.
    Regroup {
        /// Tab-separated tuple file.
        #[arg(long)]
        data: PathBuf,
        /// Original dataset used to recover question ids.
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the drop/synthetic-id report (default: stderr).
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Convert MMQA instances into one SQuAD file per setting.
    MmqaConvert {
        #[arg(long)]
        data: PathBuf,
        /// Output directory; files are named `<setting>.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a language-setting variant from parallel English and Hindi datasets.
    Variant {
        #[arg(long)]
        setting: MultilingualSetting,
        #[arg(long)]
        en: PathBuf,
        #[arg(long)]
        hi: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a subword vocabulary from the questions and contexts of datasets.
    BuildVocab {
        #[arg(long, required = true, num_args = 1..)]
        data: Vec<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune a checkpoint (or a fresh toy encoder) on a dataset.
    Finetune(FinetuneArgs),
    /// Predict answers; writes a JSON object mapping QA id to answer text.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against a dataset; prints {"exact_match", "f1", "count"}.
    Score {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Stock SQuAD normalization: no NFC, danda kept.
        #[arg(long)]
        stock: bool,
    },
    /// Train the cascade and evaluate every checkpoint × dataset × setting cell.
    Matrix {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "MMC_OUT_DIR")]
        out: Option<PathBuf>,
        /// Evaluate existing checkpoints instead of training.
        #[arg(long)]
        skip_training: bool,
        #[arg(long, default_value = "markdown")]
        format: TableFormat,
    },
    /// Render report tables from a finished matrix run.
    Report {
        #[arg(long, env = "MMC_OUT_DIR")]
        out: PathBuf,
        /// Experiment file supplying baseline rows.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "markdown")]
        format: TableFormat,
    },
}

#[derive(Args)]
struct FinetuneArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Checkpoint to continue from.
    #[arg(long, conflicts_with_all = ["vocab", "config"])]
    ckpt: Option<PathBuf>,
    /// Vocabulary for a fresh model (default: built from --data).
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Vocabulary size when building one from --data.
    #[arg(long, default_value_t = 2000)]
    size: usize,
    /// TOML with optional [hyperparams] and [encoder] tables for a fresh model.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Stage label recorded in the checkpoint provenance.
    #[arg(long)]
    stage: Option<Stage>,
    /// Step budget; overrides the epoch budget.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct ModelFile {
    hyperparams: Hyperparams,
    encoder: EncoderGeometry,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    if path == Path::new("-") {
        let mut buf = Vec::new();
        io::stdin()
            .read_to_end(&mut buf)
            .map_err(|e| Error::Io {
                path: "<stdin>".into(),
                source: e,
            })?;
        return Ok(buf);
    }
    fs::read(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
    }
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write(p, bytes),
        None => io::stdout().write_all(bytes).map_err(|e| Error::Io {
            path: "<stdout>".into(),
            source: e,
        }),
    }
}

fn rules(path: Option<&Path>) -> Result<RuleSet> {
    path.map_or_else(|| Ok(RuleSet::default()), RuleSet::from_path)
}

fn utf8(bytes: Vec<u8>) -> Result<String> {
    String::from_utf8(bytes).map_err(|e| Error::Parse {
        offset: e.utf8_error().valid_up_to(),
        message: "invalid UTF-8".into(),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { data } => {
            let ds = Dataset::from_path(&data)?;
            let violations = validate(&ds);
            for v in &violations {
                println!("{v}");
            }
            if !violations.is_empty() {
                return Err(Error::Contract(format!("{} violation(s) in {}", violations.len(), data.display())));
            }
            println!("ok: {} question(s) in {} paragraph(s)", ds.qa_count(), ds.paragraph_count());
        }
        Command::Sanitize { data, rules: r, out } => {
            let rules = rules(r.as_deref())?;
            let text = utf8(read(&data)?)?;
            let mut buf = String::new();
            for line in text.lines() {
                buf.push_str(&sanitize_text(line, &rules)?);
                buf.push('\n');
            }
            emit(out.as_deref(), buf.as_bytes())?;
        }
        Command::Regroup {
            data,
            reference,
            out,
            report,
            rules: r,
        } => {
            let rules = rules(r.as_deref())?;
            let tuples = parse_tuples(&utf8(read(&data)?)?)?;
            let reference = Dataset::from_path(reference)?;
            let (ds, rep) = regroup_tuples(&tuples, &reference, &rules);
            ds.write_to(&out)?;
            match report {
                Some(p) => write(&p, rep.to_string().as_bytes())?,
                None => eprint!("{rep}"),
            }
            log::info!(
                "{} tuple(s): {} question(s) kept, {} dropped, {} synthetic id(s)",
                tuples.len(),
                ds.qa_count(),
                rep.dropped(),
                rep.synthetic()
            );
        }
        Command::MmqaConvert { data, out } => {
            let instances = parse_mmqa(&read(&data)?)?;
            for (setting, bucket) in mmqa_bucket(&instances) {
                let path = out.join(format!("{setting}.json"));
                mmqa_to_squad(&bucket).write_to(&path)?;
                log::info!("{}: {} instance(s)", path.display(), bucket.len());
            }
        }
        Command::Variant { setting, en, hi, out } => {
            let en = Dataset::from_path(en)?;
            let hi = Dataset::from_path(hi)?;
            build_cross_variant(&en, &hi, setting)?.write_to(out)?;
        }
        Command::BuildVocab { data, size, out } => {
            let sets = data.iter().map(Dataset::from_path).collect::<Result<Vec<_>>>()?;
            let corpus: Vec<&str> = sets
                .iter()
                .flat_map(|d| d.qas())
                .flat_map(|r| [r.qa.question.as_str(), r.context])
                .collect();
            build_vocab(&corpus, size).save(out)?;
        }
        Command::Finetune(args) => finetune(args)?,
        Command::Predict { ckpt, data, out } => {
            let ckpt = Checkpoint::<f64>::load(ckpt)?;
            let ds = Dataset::from_path(data)?;
            let preds = predict(&ckpt, &ds)?;
            let mut json = serde_json::to_vec_pretty(&preds.answers).expect("predictions serialize");
            json.push(b'\n');
            emit(out.as_deref(), &json)?;
        }
        Command::Score { pred, data, stock } => {
            let preds: BTreeMap<String, String> = serde_json::from_slice(&read(&pred)?).map_err(|e| Error::Parse {
                offset: 0,
                message: format!("{}: {e}", pred.display()),
            })?;
            let ds = Dataset::from_path(data)?;
            let extra = unexpected_ids(&preds, &ds);
            if !extra.is_empty() {
                log::warn!("{} prediction id(s) not in the dataset, e.g. {}", extra.len(), extra[0]);
            }
            let opts = if stock { NormalizeOptions::stock() } else { NormalizeOptions::default() };
            let scores = evaluate_with(&preds, &ds, opts);
            println!("{}", serde_json::to_string(&scores).expect("scores serialize"));
        }
        Command::Matrix {
            config,
            out,
            skip_training,
            format,
        } => {
            let (cfg, cfg_out) = load_config(&config)?;
            let out = out
                .or(cfg_out)
                .ok_or_else(|| Error::Config("no output directory: pass --out, set MMC_OUT_DIR or out_dir".into()))?;
            let records = if skip_training {
                cfg.validate()?;
                checkpoint_records(&cfg, &out)
            } else {
                run_cascade(&cfg, &out)?
            };
            let report = run_matrix(&records, &cfg, &out)?;
            for p in write_reports(&report, &cfg.baselines, &out, format)? {
                println!("{}", p.display());
            }
            let failed = report.failures().count();
            if failed > 0 {
                return Err(Error::Checkpoint(format!("{failed} cell(s) failed; see eval_report.json")));
            }
        }
        Command::Report { out, config, format } => {
            let path = out.join("reports").join("eval_report.json");
            let report = EvalReport::from_json(&utf8(read(&path)?)?)?;
            let baselines = match config {
                Some(c) => load_config(c)?.0.baselines,
                None => Vec::new(),
            };
            for t in mmc::harness::emit_tables(&report, format, &baselines) {
                let path = out
                    .join("reports")
                    .join(format!("{}_{}.{}", t.metric.file_stem(), t.dataset, format.extension()));
                write(&path, t.text.as_bytes())?;
                print!("{}", t.text);
                println!();
            }
        }
    }
    Ok(())
}

fn finetune(args: FinetuneArgs) -> Result<()> {
    let ds = Dataset::from_path(&args.data)?;
    let violations = validate(&ds);
    if let Some(v) = violations.first() {
        return Err(Error::Contract(format!("training data has {} violation(s), first: {v}", violations.len())));
    }
    let start = match &args.ckpt {
        Some(path) => {
            let mut c = Checkpoint::<f64>::load(path)?;
            c.provenance.parent = Some(path.display().to_string());
            c
        }
        None => {
            let model: ModelFile = match &args.config {
                Some(p) => toml::from_str(&utf8(read(p)?)?).map_err(|e| Error::Config(e.to_string()))?,
                None => ModelFile::default(),
            };
            let vocab = match &args.vocab {
                Some(p) => Vocabulary::load(p)?,
                None => {
                    let corpus: Vec<&str> = ds.qas().flat_map(|r| [r.qa.question.as_str(), r.context]).collect();
                    build_vocab(&corpus, args.size)
                }
            };
            let seed = args.seed.unwrap_or(model.hyperparams.seed);
            let cfg = model.encoder.with_vocab(vocab.len());
            Checkpoint::fresh(vocab, cfg, model.hyperparams, seed)?
        }
    };
    let mut hp = start.hp;
    if let Some(seed) = args.seed {
        hp.seed = seed;
    }
    if args.steps.is_some() {
        hp.max_steps = args.steps;
    }
    let (mut ckpt, report) = fine_tune(&start, &ds, &hp)?;
    if let Some(stage) = args.stage {
        ckpt.provenance.stage = stage.dir_name().to_string();
    } else {
        ckpt.provenance.stage = "finetune".into();
    }
    ckpt.save(&args.out)?;
    log::info!(
        "{} step(s), loss {:.4} -> {:.4}; {:?}",
        report.steps,
        report.losses.first().copied().unwrap_or(f64::NAN),
        report.losses.last().copied().unwrap_or(f64::NAN),
        report.features
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: kind={}: {msg}", e.kind());
            ExitCode::from(1)
        }
    }
}
