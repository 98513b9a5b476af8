//! End-to-end experiments: synthesize a dataset, train the embedding and its
//! SVM head per channel, and evaluate against the handcrafted baselines.
//!
//! An experiment lives in one output directory:
//!
//! ```text
//! out/data/manifest.jsonl, out/data/samples/...
//! out/models/{channel}.embed.ckpt
//! out/models/{channel}.svm.ckpt
//! out/models/{channel}.train_log.csv
//! out/report.csv
//! out/roc/{channel}_{method}.csv
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::{self, EmbeddingModel, LabeledImage, TrainConfig, TrainLog};
use crate::error::{Error, Result};
use crate::eval::{self, Metrics, ReportRow, RocCurve, ScoreEntry, ScoreSet};
use crate::features;
use crate::svm::{self, SvmModel};
use crate::synth::{self, Channel, DatasetManifest, ProfilePack, Split, MANIFEST_FILE};

/// Scoring method compared in the report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mean,
    Std,
    Kurtosis,
    Lbp,
    Paas,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Mean,
        Method::Std,
        Method::Kurtosis,
        Method::Lbp,
        Method::Paas,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mean => "mean",
            Method::Std => "std",
            Method::Kurtosis => "kurtosis",
            Method::Lbp => "lbp",
            Method::Paas => "paas",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            lambda: svm::DEFAULT_LAMBDA,
            epochs: svm::DEFAULT_EPOCHS,
            seed: 0,
        }
    }
}

/// One experiment. `profiles` is a JSON profile pack path, resolved against
/// the config file's directory, or one of `builtin:default`,
/// `builtin:matched-pair`, `builtin:confusable`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub profiles: String,
    pub width: usize,
    pub height: usize,
    pub count_per_profile: usize,
    pub split_ratio: f64,
    pub seed: u64,
    pub train: TrainConfig,
    pub svm: SvmConfig,
    pub out: PathBuf,
    pub channels: Vec<Channel>,
    pub methods: Vec<Method>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            profiles: "builtin:default".into(),
            width: 64,
            height: 64,
            count_per_profile: 50,
            split_ratio: 0.5,
            seed: 0,
            train: TrainConfig::default(),
            svm: SvmConfig::default(),
            out: PathBuf::from("run"),
            channels: vec![Channel::Dolp, Channel::Gray],
            methods: Method::ALL.to_vec(),
            base_dir: PathBuf::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::Parameter(
                "experiment needs at least one channel".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(Error::Parameter(
                "experiment needs at least one method".into(),
            ));
        }
        self.train.validate()
    }

    pub fn out_dir(&self) -> PathBuf {
        self.base_dir.join(&self.out)
    }

    pub fn data_dir(&self) -> PathBuf {
        self.out_dir().join("data")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.data_dir().join(MANIFEST_FILE)
    }

    pub fn models_dir(&self) -> PathBuf {
        self.out_dir().join("models")
    }

    pub fn embed_checkpoint(&self, channel: Channel) -> PathBuf {
        self.models_dir().join(format!("{channel}.embed.ckpt"))
    }

    pub fn svm_checkpoint(&self, channel: Channel) -> PathBuf {
        self.models_dir().join(format!("{channel}.svm.ckpt"))
    }

    pub fn train_log(&self, channel: Channel) -> PathBuf {
        self.models_dir().join(format!("{channel}.train_log.csv"))
    }

    pub fn report_path(&self) -> PathBuf {
        self.out_dir().join("report.csv")
    }

    pub fn roc_path(&self, channel: Channel, method: Method) -> PathBuf {
        self.out_dir()
            .join("roc")
            .join(format!("{channel}_{method}.csv"))
    }

    pub fn profile_pack(&self) -> Result<ProfilePack> {
        match self.profiles.as_str() {
            "builtin:default" => Ok(ProfilePack::default_pack()),
            "builtin:matched-pair" => Ok(ProfilePack::matched_pair_pack()),
            "builtin:confusable" => Ok(ProfilePack::confusable_pack()),
            p => ProfilePack::load(self.base_dir.join(p)),
        }
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Generates the experiment dataset under `out/data`.
pub fn run_synth(cfg: &ExperimentConfig) -> Result<DatasetManifest> {
    let pack = cfg.profile_pack()?;
    synth::generate_dataset(
        &pack.profiles,
        cfg.count_per_profile,
        (cfg.width, cfg.height),
        cfg.split_ratio,
        cfg.data_dir(),
        cfg.seed,
    )
}

pub struct TrainedChannel {
    pub channel: Channel,
    pub model: EmbeddingModel,
    pub head: SvmModel,
    pub log: TrainLog,
}

fn labels_of(images: &[LabeledImage]) -> Vec<f64> {
    images
        .iter()
        .map(|im| if im.genuine { 1.0 } else { -1.0 })
        .collect()
}

/// Trains the SVM head on evaluation-mode embeddings of `images`.
pub fn train_head(
    model: &EmbeddingModel,
    train: &TrainConfig,
    svm_cfg: &SvmConfig,
    images: &[LabeledImage],
) -> Result<SvmModel> {
    let emb = embed::embed_all(model, images, train)?;
    let rows: Vec<&[f64]> = emb.iter().map(Vec::as_slice).collect();
    Ok(svm::train_svm_rows(
        &rows,
        &labels_of(images),
        svm_cfg.lambda,
        svm_cfg.epochs,
        svm_cfg.seed,
    )?
    .0)
}

/// Trains embedding and head for one channel of a loaded manifest.
pub fn train_channel(
    manifest: &DatasetManifest,
    channel: Channel,
    train: &TrainConfig,
    svm_cfg: &SvmConfig,
) -> Result<TrainedChannel> {
    let images = embed::load_split(manifest, Split::Train, channel)?;
    if images.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    let (model, log) = embed::train_on_images(&images, train)?;
    let head = train_head(&model, train, svm_cfg, &images)?;
    Ok(TrainedChannel {
        channel,
        model,
        head,
        log,
    })
}

/// Trains every configured channel and writes checkpoints and loss logs.
pub fn run_train(cfg: &ExperimentConfig) -> Result<Vec<TrainedChannel>> {
    let manifest = DatasetManifest::load(cfg.manifest_path())?;
    create_dir(&cfg.models_dir())?;
    let mut out = Vec::new();
    for &channel in &cfg.channels {
        let t = train_channel(&manifest, channel, &cfg.train, &cfg.svm)?;
        embed::save_embedding(&t.model, &cfg.train, cfg.embed_checkpoint(channel))?;
        t.head.save(cfg.svm_checkpoint(channel), cfg.svm.seed)?;
        eval::write_text(cfg.train_log(channel), &t.log.to_csv())?;
        out.push(t);
    }
    Ok(out)
}

pub struct Evaluation {
    pub row: ReportRow,
    pub scores: ScoreSet,
    pub curve: RocCurve,
}

fn ids_of(manifest: &DatasetManifest, split: Split) -> Vec<String> {
    manifest.split(split).map(|r| r.sample_id.clone()).collect()
}

fn finish_eval(
    channel: Channel,
    method: Method,
    ids: Vec<String>,
    images: &[LabeledImage],
    scores: Vec<f64>,
) -> Result<Evaluation> {
    let scores = ScoreSet::new(
        ids.into_iter()
            .zip(images)
            .zip(scores)
            .map(|((sample_id, im), score)| ScoreEntry {
                sample_id,
                genuine: im.genuine,
                score,
            })
            .collect(),
    );
    let (metrics, curve) = eval::metrics(&scores)?;
    Ok(Evaluation {
        row: ReportRow {
            channel: channel.to_string(),
            method: method.to_string(),
            metrics,
        },
        scores,
        curve,
    })
}

fn load_test(manifest: &DatasetManifest, channel: Channel) -> Result<Vec<LabeledImage>> {
    let test = embed::load_split(manifest, Split::Test, channel)?;
    if test.is_empty() {
        return Err(Error::Data("test split is empty".into()));
    }
    Ok(test)
}

/// Scores the test split of `channel` with embedding + SVM head.
pub fn evaluate_pipeline(
    model: &EmbeddingModel,
    train: &TrainConfig,
    head: &SvmModel,
    manifest: &DatasetManifest,
    channel: Channel,
) -> Result<Evaluation> {
    let test = load_test(manifest, channel)?;
    let emb = embed::embed_all(model, &test, train)?;
    let scores = emb
        .iter()
        .map(|e| head.decision_raw(e))
        .collect::<Result<Vec<_>>>()?;
    finish_eval(
        channel,
        Method::Paas,
        ids_of(manifest, Split::Test),
        &test,
        scores,
    )
}

fn scalar_feature(method: Method, im: &LabeledImage) -> Result<f64> {
    let t = features::stat_triple(&im.image, im.crop)?;
    Ok(match method {
        Method::Mean => t.mean,
        Method::Std => t.std,
        Method::Kurtosis => t.kurtosis,
        _ => unreachable!("not a scalar baseline"),
    })
}

/// Single-statistic threshold classifier. The sign of the score is chosen
/// on the training split so that genuine samples score higher on average.
pub fn evaluate_scalar_baseline(
    method: Method,
    manifest: &DatasetManifest,
    channel: Channel,
) -> Result<Evaluation> {
    if !matches!(method, Method::Mean | Method::Std | Method::Kurtosis) {
        return Err(Error::Parameter(format!(
            "{method} is not a scalar baseline"
        )));
    }
    let train = embed::load_split(manifest, Split::Train, channel)?;
    let test = load_test(manifest, channel)?;
    let f_train = train
        .par_iter()
        .map(|im| scalar_feature(method, im))
        .collect::<Result<Vec<_>>>()?;
    let mean_of = |genuine: bool| {
        let v: Vec<f64> = f_train
            .iter()
            .zip(&train)
            .filter(|(_, im)| im.genuine == genuine)
            .map(|(f, _)| *f)
            .collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    let sign = if mean_of(true) >= mean_of(false) {
        1.0
    } else {
        -1.0
    };
    let scores = test
        .par_iter()
        .map(|im| Ok(sign * scalar_feature(method, im)?))
        .collect::<Result<Vec<_>>>()?;
    finish_eval(
        channel,
        method,
        ids_of(manifest, Split::Test),
        &test,
        scores,
    )
}

/// LBP histogram of the face region fed to a linear SVM.
pub fn evaluate_lbp_baseline(
    manifest: &DatasetManifest,
    channel: Channel,
    svm_cfg: &SvmConfig,
) -> Result<Evaluation> {
    let train = embed::load_split(manifest, Split::Train, channel)?;
    let test = load_test(manifest, channel)?;
    let hist = |ims: &[LabeledImage]| -> Result<Vec<Vec<f64>>> {
        ims.par_iter()
            .map(|im| {
                Ok(features::lbp_histogram(&im.image, im.crop)?
                    .values()
                    .to_vec())
            })
            .collect()
    };
    let h_train = hist(&train)?;
    let rows: Vec<&[f64]> = h_train.iter().map(Vec::as_slice).collect();
    let (head, _) = svm::train_svm_rows(
        &rows,
        &labels_of(&train),
        svm_cfg.lambda,
        svm_cfg.epochs,
        svm_cfg.seed,
    )?;
    let scores = hist(&test)?
        .iter()
        .map(|h| head.decision_raw(h))
        .collect::<Result<Vec<_>>>()?;
    finish_eval(
        channel,
        Method::Lbp,
        ids_of(manifest, Split::Test),
        &test,
        scores,
    )
}

/// Evaluates every configured (channel, method) and writes the report and
/// ROC curves. PAAS rows read the checkpoints written by [`run_train`].
pub fn run_eval(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let manifest = DatasetManifest::load(cfg.manifest_path())?;
    create_dir(&cfg.out_dir().join("roc"))?;
    let mut rows = Vec::new();
    for &channel in &cfg.channels {
        for &method in &cfg.methods {
            let ev = match method {
                Method::Paas => {
                    let (model, train) = embed::load_embedding(cfg.embed_checkpoint(channel))?;
                    let head = SvmModel::load(cfg.svm_checkpoint(channel))?;
                    evaluate_pipeline(&model, &train, &head, &manifest, channel)?
                }
                Method::Lbp => evaluate_lbp_baseline(&manifest, channel, &cfg.svm)?,
                m => evaluate_scalar_baseline(m, &manifest, channel)?,
            };
            eval::write_text(cfg.roc_path(channel, method), &eval::roc_csv(&ev.curve))?;
            rows.push(ev.row);
        }
    }
    eval::write_text(cfg.report_path(), &eval::report_csv(&rows))?;
    Ok(rows)
}

/// Metrics of a report row, looked up by channel and method.
pub fn find_row(rows: &[ReportRow], channel: Channel, method: Method) -> Option<&Metrics> {
    rows.iter()
        .find(|r| r.channel == channel.as_str() && r.method == method.as_str())
        .map(|r| &r.metrics)
}
