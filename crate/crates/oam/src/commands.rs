//! The subcommands, written against plain writers so tests can drive them
//! without spawning processes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use oad_core::gradcheck::check_model;
use oad_core::heads::Head;
use oad_core::layers::InitMode;
use oad_core::metrics::{class_counts, mean_top5_recall, top5_ids, PredictionLog};
use oad_core::model::{Model, ModelConfig};
use oad_core::objects::SnippetDetections;
use oad_core::synth::{generate_episode, EpisodeRecord};
use oad_core::training::{predict, train as train_model, Sequence};
use serde::Serialize;

use crate::checkpoint::{self, Checkpoint};
use crate::config::{EvalSplit, RunConfig};
use crate::dataset::{read_dataset, split, video_id_of, write_dataset};
use crate::detections::load_detections;
use crate::error::{CliError, Result};
use crate::oadf::OadfReader;

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.oadc";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub set: Vec<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

fn console(e: std::io::Error) -> CliError {
    CliError::Io {
        path: PathBuf::from("<console>"),
        source: e,
    }
}

fn write_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let path = dir.join(CONFIG_FILE);
    fs::write(&path, cfg.to_pretty()).map_err(CliError::io(&path))
}

/// Generates the synthetic dataset into `--out` (default `data/synth`).
pub fn gen_data(opts: &Common, out: &mut dyn Write) -> Result<PathBuf> {
    let mut cfg = RunConfig::resolve(opts.config.as_deref(), &opts.set)?;
    if let Some(seed) = opts.seed {
        cfg.data.synth.seed = seed;
    }
    let dir = opts.out.clone().unwrap_or_else(|| PathBuf::from("data/synth"));
    let synth = cfg.data.synth.to_core();

    let n = synth.num_videos;
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(n);
    let mut records: Vec<Option<EpisodeRecord>> = vec![None; n];
    std::thread::scope(|s| -> Result<()> {
        let chunk = n.div_ceil(threads);
        let handles: Vec<_> = records
            .chunks_mut(chunk)
            .enumerate()
            .map(|(c, slots)| {
                s.spawn(move || -> oad_core::Result<()> {
                    for (j, slot) in slots.iter_mut().enumerate() {
                        *slot = Some(generate_episode(&synth, c * chunk + j)?);
                    }
                    Ok(())
                })
            })
            .collect();
        for h in handles {
            h.join().expect("generator thread panicked")?;
        }
        Ok(())
    })?;
    let records: Vec<EpisodeRecord> = records.into_iter().map(|r| r.expect("generated")).collect();

    write_dataset(&records, &dir)?;
    write_config(&dir, &cfg)?;
    let (train, val) = split(records, cfg.data.eval_fraction);
    let snippets = |v: &[EpisodeRecord]| v.iter().map(|r| r.len()).sum::<usize>();
    writeln!(out, "wrote {} videos to {}", train.len() + val.len(), dir.display()).map_err(console)?;
    writeln!(out, "train: {} videos, {} snippets", train.len(), snippets(&train)).map_err(console)?;
    writeln!(out, "val: {} videos, {} snippets", val.len(), snippets(&val)).map_err(console)?;
    Ok(dir)
}

/// Rejects datasets the model cannot consume, before any training or
/// evaluation work starts.
fn check_compatible(records: &[EpisodeRecord], model: &ModelConfig) -> Result<()> {
    for r in records {
        if r.features.cols() != model.feature_dim {
            return Err(CliError::Config(format!(
                "video `{}` has {}-dimensional features but model.feature_dim is {}",
                r.video_id,
                r.features.cols(),
                model.feature_dim
            )));
        }
        for (t, l) in r.labels.iter().enumerate() {
            l.validate(&model.heads)
                .map_err(|e| CliError::Config(format!("video `{}` snippet {t}: {e}; check the model class counts", r.video_id)))?;
        }
        for s in &r.detections {
            if let Some(d) = s.detections.iter().find(|d| d.category_id >= model.object_categories) {
                return Err(CliError::Config(format!(
                    "video `{}` snippet {}: object category {} but model.object_categories is {}",
                    r.video_id, s.snippet_index, d.category_id, model.object_categories
                )));
            }
        }
    }
    Ok(())
}

fn load_data(dir: Option<&Path>, cfg: &RunConfig, err: &mut dyn Write) -> Result<Vec<EpisodeRecord>> {
    let dir = dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.data.path.clone())
        .ok_or_else(|| CliError::Config("no dataset: pass --data or set data.path".into()))?;
    let (records, warnings) = read_dataset(&dir)?;
    if warnings.missing_detections > 0 {
        writeln!(err, "warning: {} snippets have no detections; using zero object scores", warnings.missing_detections)
            .map_err(console)?;
    }
    if warnings.unmatched_detections > 0 {
        writeln!(err, "warning: {} detection lines match no snippet", warnings.unmatched_detections).map_err(console)?;
    }
    check_compatible(&records, &cfg.model.to_core())?;
    Ok(records)
}

fn sequences(model: &Model<f32>, records: &[EpisodeRecord]) -> Result<Vec<Sequence>> {
    Ok(records.iter().map(|r| Sequence::from_episode(model, r)).collect::<oad_core::Result<_>>()?)
}

#[derive(Serialize)]
struct LossLine {
    step: u64,
    loss: f64,
}

/// Trains on the training split and writes the checkpoint, the loss log and
/// the resolved config into `--out` (default `runs/train`). Returns the
/// checkpoint path.
pub fn train(opts: &Common, data: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> Result<PathBuf> {
    let mut cfg = RunConfig::resolve(opts.config.as_deref(), &opts.set)?;
    if let Some(seed) = opts.seed {
        cfg.train.seed = seed;
    }
    let dir = opts.out.clone().unwrap_or_else(|| PathBuf::from("runs/train"));
    let records = load_data(data, &cfg, err)?;
    let (train_records, _) = split(records, cfg.data.eval_fraction);
    if train_records.is_empty() && cfg.train.steps > 0 {
        return Err(CliError::Data("the training split is empty".into()));
    }

    let mut model = Model::<f32>::new(cfg.model.to_core(), cfg.train.seed, InitMode::Standard)?;
    let data = sequences(&model, &train_records)?;
    write_config(&dir, &cfg)?;
    let log_path = dir.join(TRAIN_LOG_FILE);
    let mut log = BufWriter::new(File::create(&log_path).map_err(CliError::io(&log_path))?);
    let mut log_err = None;
    let mut last = None;
    let result = train_model(&mut model, &data, &cfg.train.to_core(), |e| {
        last = Some(e);
        let line = serde_json::to_string(&LossLine { step: e.step, loss: e.loss }).expect("loss line serializes");
        if let Err(io) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            log_err.get_or_insert(io);
        }
    });
    if let Some(io) = log_err {
        return Err(CliError::Io { path: log_path, source: io });
    }
    result?;
    log.flush().map_err(CliError::io(&log_path))?;

    let ck_path = dir.join(CHECKPOINT_FILE);
    checkpoint::save(&ck_path, &Checkpoint::from_model(&cfg, &model))?;
    match last {
        Some(e) => writeln!(out, "trained {} steps, final loss {:.6}", e.step, e.loss),
        None => writeln!(out, "trained {} steps", cfg.train.steps),
    }
    .map_err(console)?;
    writeln!(out, "checkpoint: {}", ck_path.display()).map_err(console)?;
    Ok(ck_path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub verb: usize,
    pub noun: usize,
    pub action: usize,
}

/// Mean top-5 recall per head as a fraction in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub verb: f64,
    pub noun: f64,
    pub action: f64,
    pub num_snippets: usize,
    pub num_classes_evaluated: ClassCounts,
}

impl Report {
    pub fn from_log(log: &PredictionLog) -> Result<Self> {
        let n = |h| class_counts(log, h).len();
        Ok(Report {
            verb: mean_top5_recall(log, Head::Verb)?,
            noun: mean_top5_recall(log, Head::Noun)?,
            action: mean_top5_recall(log, Head::Action)?,
            num_snippets: log.len(),
            num_classes_evaluated: ClassCounts {
                verb: n(Head::Verb),
                noun: n(Head::Noun),
                action: n(Head::Action),
            },
        })
    }

    pub fn to_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Causal predictions over `data`, sharded across `threads` workers and
/// merged in video order.
pub fn predict_sharded(model: &Model<f32>, data: &[Sequence], threads: usize) -> Result<PredictionLog> {
    if data.is_empty() {
        return Ok(PredictionLog::new());
    }
    let chunk = data.len().div_ceil(threads.max(1));
    let shards = std::thread::scope(|s| {
        let handles: Vec<_> = data.chunks(chunk).map(|c| s.spawn(move || predict(model, c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation thread panicked"))
            .collect::<oad_core::Result<Vec<_>>>()
    })?;
    Ok(PredictionLog::merge(shards))
}

/// Evaluates a checkpoint. The config stored in the checkpoint is the base;
/// `--config` and `--set` apply on top. The report goes to
/// `<out>/<eval.report>`, `--out` defaulting to the checkpoint's directory.
pub fn eval(opts: &Common, checkpoint_path: &Path, data: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> Result<Report> {
    let ck = checkpoint::load(checkpoint_path)?;
    let cfg = RunConfig::resolve_over(ck.config.to_json(), opts.config.as_deref(), &opts.set)?;
    if cfg.model != ck.config.model {
        return Err(CliError::Config("the model section cannot be changed when evaluating a checkpoint".into()));
    }
    let model = ck.model()?;
    let records = load_data(data, &cfg, err)?;
    let records = match cfg.eval.split {
        EvalSplit::All => records,
        EvalSplit::Train => split(records, cfg.data.eval_fraction).0,
        EvalSplit::Val => split(records, cfg.data.eval_fraction).1,
    };
    let seqs = sequences(&model, &records)?;
    let log = predict_sharded(&model, &seqs, cfg.eval.threads)?;
    let report = Report::from_log(&log)?;

    let dir = opts
        .out
        .clone()
        .unwrap_or_else(|| checkpoint_path.parent().map(Path::to_path_buf).unwrap_or_default());
    fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
    let path = dir.join(&cfg.eval.report);
    fs::write(&path, report.to_pretty()).map_err(CliError::io(&path))?;
    out.write_all(report.to_pretty().as_bytes()).map_err(console)?;
    Ok(report)
}

#[derive(Serialize)]
struct StreamLine {
    snippet_index: usize,
    verb_top5: [usize; 5],
    noun_top5: [usize; 5],
    action_top5: [usize; 5],
}

/// Causal inference over one feature file, one JSON line per snippet,
/// flushed as soon as it is computed.
pub fn stream(checkpoint_path: &Path, features: &Path, detections: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let model = checkpoint::load(checkpoint_path)?.model()?;
    let video_id = video_id_of(features)?;
    let dets = match detections {
        Some(p) => load_detections(p)?,
        None => {
            writeln!(err, "warning: no detections file; using zero object scores").map_err(console)?;
            Default::default()
        }
    };
    let mut reader = OadfReader::open(features)?;
    if reader.snippets() == 0 {
        writeln!(err, "warning: {} holds no snippets", features.display()).map_err(console)?;
        return Ok(());
    }
    if reader.dim() != model.config.feature_dim {
        return Err(CliError::Config(format!(
            "{} has {}-dimensional features but the model expects {}",
            features.display(),
            reader.dim(),
            model.config.feature_dim
        )));
    }

    let mut state = model.stream();
    let mut missing = 0usize;
    let mut t = 0usize;
    while let Some(row) = reader.next_snippet()? {
        let key = (video_id.clone(), t);
        let objects = match dets.get(&key) {
            Some(s) => model.object_row(s)?,
            None => {
                missing += 1;
                if detections.is_some() {
                    writeln!(err, "warning: no detections for `{video_id}` snippet {t}; using zero object scores")
                        .map_err(console)?;
                }
                model.object_row(&SnippetDetections::empty(video_id.clone(), t))?
            }
        };
        let o = model.stream_step(&mut state, &row, objects.data())?;
        let line = StreamLine {
            snippet_index: t,
            verb_top5: top5_ids(o.verb_logits.data())?,
            noun_top5: top5_ids(o.noun_logits.data())?,
            action_top5: top5_ids(o.action_logits.data())?,
        };
        writeln!(out, "{}", serde_json::to_string(&line).expect("line serializes")).map_err(console)?;
        out.flush().map_err(console)?;
        t += 1;
    }
    if missing > 0 && detections.is_some() {
        writeln!(err, "warning: {missing} of {t} snippets had no detections").map_err(console)?;
    }
    Ok(())
}

/// Finite-difference check of every parameter group in 64-bit mode. `fault`
/// names a group (`<integration>/<group>`) whose analytic gradient is
/// perturbed, to exercise the failure path.
pub fn gradcheck(opts: &Common, fault: Option<&str>, out: &mut dyn Write) -> Result<()> {
    let mut cfg = RunConfig::resolve(opts.config.as_deref(), &opts.set)?;
    if let Some(seed) = opts.seed {
        cfg.gradcheck.seed = seed;
    }
    let g = &cfg.gradcheck;
    let mut failures = Vec::new();
    for &kind in &g.integrations {
        let mut model = g.model.to_core();
        model.integration = kind.into();
        if model.integration == oad_core::model::Integration::OaModule && model.hidden_dim != model.oam.embed_dim {
            model.hidden_dim = model.oam.embed_dim;
        }
        let mode = model.integration.name();
        let local_fault = fault.and_then(|f| f.strip_prefix(mode)).and_then(|f| f.strip_prefix('/'));
        let reports = check_model(model, g.seed, g.seq_len, g.step, local_fault)?;
        for r in reports {
            let ok = r.max_rel_error < g.tolerance;
            writeln!(
                out,
                "{} {mode}/{} max_rel_error={:.3e} checked={}",
                if ok { "PASS" } else { "FAIL" },
                r.group,
                r.max_rel_error,
                r.num_checked
            )
            .map_err(console)?;
            if !ok {
                failures.push(format!("{mode}/{} (max relative error {:.3e})", r.group, r.max_rel_error));
            }
        }
    }
    if failures.is_empty() {
        writeln!(out, "all groups below {:.0e}", g.tolerance).map_err(console)?;
        Ok(())
    } else {
        Err(CliError::GradCheck(failures.join(", ")))
    }
}
