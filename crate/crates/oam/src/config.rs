//! Run configuration: a JSON document with `model`, `train`, `data`, `eval`
//! and `gradcheck` sections. A run starts from the defaults, merges a config
//! file over them, then applies `key.path=value` overrides. Keys that do not
//! exist in the defaults are rejected.

use std::path::{Path, PathBuf};

use oad_core::heads::{HeadSizes, LossWeights};
use oad_core::model::{CueMode, Integration, ModelConfig};
use oad_core::oam::OAConfig;
use oad_core::objects::Aggregation;
use oad_core::synth::SynthConfig;
use oad_core::training::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueKind {
    LastK,
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationKind {
    None,
    InputConcat,
    OaModule,
}

impl From<IntegrationKind> for Integration {
    fn from(k: IntegrationKind) -> Self {
        match k {
            IntegrationKind::None => Integration::None,
            IntegrationKind::InputConcat => Integration::InputConcat,
            IntegrationKind::OaModule => Integration::OaModule,
        }
    }
}

impl From<Integration> for IntegrationKind {
    fn from(k: Integration) -> Self {
        match k {
            Integration::None => IntegrationKind::None,
            Integration::InputConcat => IntegrationKind::InputConcat,
            Integration::OaModule => IntegrationKind::OaModule,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationKind {
    Max,
    Sum,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Train,
    Val,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub object_categories: usize,
    /// Class counts including background.
    pub verb_classes: usize,
    pub noun_classes: usize,
    pub action_classes: usize,
    pub num_queries: usize,
    pub embed_dim: usize,
    pub num_heads: usize,
    pub ffn_mult: usize,
    pub num_blocks: usize,
    pub self_attention: bool,
    pub positional_encoding: bool,
    pub ln_eps: f64,
    pub cues: CueKind,
    /// Number of hidden states kept when `cues` is `last_k`.
    pub cue_window: usize,
    pub integration: IntegrationKind,
    pub concat_dim: usize,
    pub aggregation: AggregationKind,
}

impl ModelSection {
    pub fn to_core(&self) -> ModelConfig {
        ModelConfig {
            feature_dim: self.feature_dim,
            hidden_dim: self.hidden_dim,
            object_categories: self.object_categories,
            heads: HeadSizes {
                verb: self.verb_classes,
                noun: self.noun_classes,
                action: self.action_classes,
            },
            oam: OAConfig {
                num_queries: self.num_queries,
                embed_dim: self.embed_dim,
                num_heads: self.num_heads,
                ffn_mult: self.ffn_mult,
                num_blocks: self.num_blocks,
                self_attention: self.self_attention,
                positional_encoding: self.positional_encoding,
                ln_eps: self.ln_eps,
            },
            cues: match self.cues {
                CueKind::LastK => CueMode::LastK(self.cue_window),
                CueKind::Final => CueMode::Final,
            },
            integration: self.integration.into(),
            concat_dim: self.concat_dim,
            aggregation: match self.aggregation {
                AggregationKind::Max => Aggregation::Max,
                AggregationKind::Sum => Aggregation::Sum,
                AggregationKind::Mean => Aggregation::Mean,
            },
        }
    }

    pub fn from_core(c: &ModelConfig) -> Self {
        let (cues, cue_window) = match c.cues {
            CueMode::LastK(k) => (CueKind::LastK, k),
            CueMode::Final => (CueKind::Final, 1),
        };
        ModelSection {
            feature_dim: c.feature_dim,
            hidden_dim: c.hidden_dim,
            object_categories: c.object_categories,
            verb_classes: c.heads.verb,
            noun_classes: c.heads.noun,
            action_classes: c.heads.action,
            num_queries: c.oam.num_queries,
            embed_dim: c.oam.embed_dim,
            num_heads: c.oam.num_heads,
            ffn_mult: c.oam.ffn_mult,
            num_blocks: c.oam.num_blocks,
            self_attention: c.oam.self_attention,
            positional_encoding: c.oam.positional_encoding,
            ln_eps: c.oam.ln_eps,
            cues,
            cue_window,
            integration: c.integration.into(),
            concat_dim: c.concat_dim,
            aggregation: match c.aggregation {
                Aggregation::Max => AggregationKind::Max,
                Aggregation::Sum => AggregationKind::Sum,
                Aggregation::Mean => AggregationKind::Mean,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub betas: [f64; 2],
    pub eps: f64,
    pub steps: u64,
    /// Videos per forward pass. Only whole-sequence training with one video
    /// is supported; `grad_accum` gives larger effective batches.
    pub batch_size: usize,
    pub grad_accum: usize,
    pub seed: u64,
    pub log_every: u64,
    /// Verb, noun and action loss weights.
    pub loss_weights: [f64; 3],
}

impl TrainSection {
    pub fn to_core(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            betas: (self.betas[0], self.betas[1]),
            eps: self.eps,
            steps: self.steps,
            grad_accum: self.grad_accum,
            seed: self.seed,
            log_every: self.log_every,
            loss_weights: LossWeights(self.loss_weights),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub num_videos: usize,
    pub snippets_per_video: usize,
    pub feature_dim: usize,
    pub num_verbs: usize,
    pub num_nouns: usize,
    pub object_categories: usize,
    pub detection_noise: f64,
    pub feature_noise_sigma: f64,
    pub seed: u64,
}

impl SynthSection {
    pub fn to_core(&self) -> SynthConfig {
        SynthConfig {
            num_videos: self.num_videos,
            snippets_per_video: self.snippets_per_video,
            feature_dim: self.feature_dim,
            num_verbs: self.num_verbs,
            num_nouns: self.num_nouns,
            object_categories: self.object_categories,
            detection_noise: self.detection_noise,
            feature_noise_sigma: self.feature_noise_sigma,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Dataset directory used by `train` and `eval` when `--data` is absent.
    pub path: Option<PathBuf>,
    /// Fraction of videos (the last ones in id order) held out for evaluation.
    pub eval_fraction: f64,
    /// Generator settings for `gen-data`.
    pub synth: SynthSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Report file, relative to the output directory.
    pub report: PathBuf,
    pub split: EvalSplit,
    /// Worker threads; videos are sharded and merged in order.
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckSection {
    pub seed: u64,
    pub seq_len: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Integration modes to check; each builds its own parameter set.
    pub integrations: Vec<IntegrationKind>,
    pub model: ModelSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub train: TrainSection,
    pub data: DataSection,
    pub eval: EvalSection,
    pub gradcheck: GradcheckSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        let train = TrainConfig::default();
        let tiny = ModelConfig {
            feature_dim: 6,
            hidden_dim: 8,
            object_categories: 5,
            heads: HeadSizes {
                verb: 6,
                noun: 7,
                action: 8,
            },
            oam: OAConfig {
                num_queries: 4,
                embed_dim: 8,
                num_heads: 2,
                ..OAConfig::toy()
            },
            cues: CueMode::LastK(4),
            integration: Integration::OaModule,
            concat_dim: 3,
            aggregation: Aggregation::Max,
        };
        RunConfig {
            model: ModelSection::from_core(&ModelConfig::default()),
            train: TrainSection {
                lr: train.lr,
                betas: [train.betas.0, train.betas.1],
                eps: train.eps,
                steps: train.steps,
                batch_size: 1,
                grad_accum: train.grad_accum,
                seed: train.seed,
                log_every: train.log_every,
                loss_weights: train.loss_weights.0,
            },
            data: DataSection {
                path: None,
                eval_fraction: 0.2,
                synth: SynthSection {
                    num_videos: synth.num_videos,
                    snippets_per_video: synth.snippets_per_video,
                    feature_dim: synth.feature_dim,
                    num_verbs: synth.num_verbs,
                    num_nouns: synth.num_nouns,
                    object_categories: synth.object_categories,
                    detection_noise: synth.detection_noise,
                    feature_noise_sigma: synth.feature_noise_sigma,
                    seed: synth.seed,
                },
            },
            eval: EvalSection {
                report: PathBuf::from("report.json"),
                split: EvalSplit::Val,
                threads: 4,
            },
            gradcheck: GradcheckSection {
                seed: 0,
                seq_len: 6,
                step: oad_core::gradcheck::DEFAULT_STEP,
                tolerance: oad_core::gradcheck::DEFAULT_TOLERANCE,
                integrations: vec![IntegrationKind::None, IntegrationKind::InputConcat, IntegrationKind::OaModule],
                model: ModelSection::from_core(&tiny),
            },
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.to_core().validate().map_err(|e| prefixed("model", e))?;
        self.gradcheck.model.to_core().validate().map_err(|e| prefixed("gradcheck.model", e))?;
        self.data.synth.to_core().validate().map_err(|e| prefixed("data.synth", e))?;
        let t = &self.train;
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return Err(CliError::Config("train.lr must be positive".into()));
        }
        if !t.betas.iter().all(|b| (0.0..1.0).contains(b)) {
            return Err(CliError::Config("train.betas must lie in [0, 1)".into()));
        }
        if !(t.eps > 0.0) {
            return Err(CliError::Config("train.eps must be positive".into()));
        }
        if t.batch_size != 1 {
            return Err(CliError::Config(format!(
                "train.batch_size {} is unsupported: training runs one whole video per pass; use train.grad_accum",
                t.batch_size
            )));
        }
        if t.grad_accum == 0 || t.log_every == 0 {
            return Err(CliError::Config("train.grad_accum and train.log_every must be at least 1".into()));
        }
        if !t.loss_weights.iter().all(|w| w.is_finite() && *w >= 0.0) {
            return Err(CliError::Config("train.loss_weights must be finite and non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.data.eval_fraction) {
            return Err(CliError::Config("data.eval_fraction must lie in [0, 1]".into()));
        }
        if self.eval.threads == 0 {
            return Err(CliError::Config("eval.threads must be at least 1".into()));
        }
        let g = &self.gradcheck;
        if g.seq_len == 0 || !(g.step > 0.0) || !(g.tolerance > 0.0) || g.integrations.is_empty() {
            return Err(CliError::Config(
                "gradcheck needs seq_len >= 1, positive step and tolerance, and at least one integration".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn to_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Defaults, then `file`, then `overrides`, then validation.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        Self::resolve_over(RunConfig::default().to_json(), file, overrides)
    }

    /// Like [`RunConfig::resolve`] but starting from `base` (for example the
    /// snapshot stored in a checkpoint).
    pub fn resolve_over(mut base: Value, file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let schema = RunConfig::default().to_json();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
            let given: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            check_keys(&schema, &given, "")?;
            merge(&mut base, given);
        }
        for o in overrides {
            apply_override(&schema, &mut base, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(base).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn prefixed(section: &str, e: oad_core::Error) -> CliError {
    match e {
        oad_core::Error::Config(m) => CliError::Config(format!("{section}: {m}")),
        other => CliError::Config(format!("{section}: {other}")),
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_owned()
    } else {
        format!("{prefix}.{key}")
    }
}

/// Every object key in `given` must exist at the same place in `schema`.
fn check_keys(schema: &Value, given: &Value, prefix: &str) -> Result<()> {
    match (schema, given) {
        (Value::Object(s), Value::Object(g)) => {
            for (k, v) in g {
                let path = join(prefix, k);
                match s.get(k) {
                    Some(sv) => check_keys(sv, v, &path)?,
                    None => return Err(CliError::Config(format!("unknown config key `{path}`"))),
                }
            }
            Ok(())
        }
        (Value::Object(_), _) if !prefix.is_empty() => {
            Err(CliError::Config(format!("config key `{prefix}` must be an object")))
        }
        (Value::Object(_), _) => Err(CliError::Config("config file must hold a JSON object".into())),
        _ => Ok(()),
    }
}

fn merge(base: &mut Value, given: Value) {
    match (base, given) {
        (Value::Object(b), Value::Object(g)) => {
            for (k, v) in g {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// `a.b.c=value`; the value is parsed as JSON and taken as a plain string
/// when that fails.
fn apply_override(schema: &Value, base: &mut Value, text: &str) -> Result<()> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{text}` is not of the form key=value")))?;
    let key = key.trim();
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut s = schema;
    for p in &parts {
        s = s
            .get(p)
            .ok_or_else(|| CliError::Config(format!("unknown config key `{key}`")))?;
    }
    check_keys(s, &value, key)?;
    let mut slot = base;
    for p in &parts {
        let obj: &mut Map<String, Value> = match slot {
            Value::Object(m) => m,
            _ => return Err(CliError::Config(format!("unknown config key `{key}`"))),
        };
        slot = obj.entry(p.to_string()).or_insert(Value::Null);
    }
    merge(slot, value);
    Ok(())
}
