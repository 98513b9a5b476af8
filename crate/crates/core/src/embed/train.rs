use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::Tensor;
use super::loss::{loss_gradients, Pair};
use super::model::{Architecture, ConvStage, EmbeddingModel, InputNorm};
use super::preprocess::{crop_and_resize, finish, preprocess, Augment};
use std::path::Path;

use crate::checkpoint::Container;
use crate::error::{Error, Result};
use crate::plane::{Plane, Rect};
use crate::seed;
use crate::synth::{Channel, DatasetManifest, Split};

/// Siamese training hyperparameters and network shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_pairs: usize,
    pub seed: u64,
    pub input_side: usize,
    pub augment: Augment,
    pub channels: Vec<usize>,
    pub stride: usize,
    pub hidden: usize,
    pub embedding_dim: usize,
    /// Standardize inputs with the pixel mean and std of the training set.
    pub normalize_input: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            learning_rate: 1e-4,
            epochs: 150,
            batch_pairs: 16,
            seed: 0,
            input_side: 32,
            augment: Augment {
                resize_to: 36,
                crop_to: 34,
                horizontal_flip: true,
            },
            channels: vec![8, 16, 32, 64],
            stride: 2,
            hidden: 64,
            embedding_dim: 32,
            normalize_input: true,
        }
    }
}

impl TrainConfig {
    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_side: self.input_side,
            stages: self
                .channels
                .iter()
                .map(|&c| ConvStage {
                    out_channels: c,
                    stride: self.stride,
                })
                .collect(),
            hidden: self.hidden,
            embedding_dim: self.embedding_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::Parameter(format!(
                "margin must be positive, got {}",
                self.margin
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Parameter("learning_rate must be positive".into()));
        }
        if self.batch_pairs == 0 {
            return Err(Error::Parameter("batch_pairs must be positive".into()));
        }
        self.augment.validate(self.input_side)?;
        self.architecture().validate()
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= self.learning_rate * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// A training image with its face rectangle and liveness class.
#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub image: Plane,
    pub crop: Rect,
    pub genuine: bool,
}

/// Mean contrastive loss of every epoch, in order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epoch_loss: Vec<f64>,
}

impl TrainLog {
    /// `epoch,loss` CSV; epochs are numbered from 1.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss\n");
        for (i, l) in self.epoch_loss.iter().enumerate() {
            s.push_str(&format!("{},{}\n", i + 1, l));
        }
        s
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_loss.last().copied()
    }
}

/// Trains a Siamese embedding with Adam on balanced pair batches.
///
/// Every epoch visits each image once as a pair anchor in a seeded order;
/// alternate pairs draw the partner from the same class and from the other
/// class. Augmentation seeds derive from `(config.seed, epoch, pair)`.
pub fn train_on_images(
    images: &[LabeledImage],
    config: &TrainConfig,
) -> Result<(EmbeddingModel, TrainLog)> {
    config.validate()?;
    let genuine: Vec<usize> = (0..images.len()).filter(|&i| images[i].genuine).collect();
    let attack: Vec<usize> = (0..images.len()).filter(|&i| !images[i].genuine).collect();
    if genuine.is_empty() || attack.is_empty() {
        return Err(Error::Data(
            "training needs at least one genuine and one attack image".into(),
        ));
    }
    let mut model = EmbeddingModel::init(config.architecture(), config.seed)?;
    let mut log = TrainLog::default();
    if config.epochs == 0 {
        return Ok((model, log));
    }

    let resized: Vec<Plane> = images
        .par_iter()
        .map(|im| crop_and_resize(&im.image, im.crop, &config.augment))
        .collect::<Result<_>>()?;
    if config.normalize_input {
        model = model.with_input_norm(InputNorm::fit(resized.iter().map(Plane::data)))?;
    }
    let mut adam = Adam::new(model.param_count(), config.learning_rate);

    for epoch in 0..config.epochs {
        let epoch_seed = seed::derive(config.seed, 1 + epoch as u64);
        let mut rng = seed::rng(epoch_seed);
        let mut anchors: Vec<usize> = (0..images.len()).collect();
        anchors.shuffle(&mut rng);
        // partner selection is drawn sequentially so it is scheduling-free
        let plan: Vec<(usize, usize, bool)> = anchors
            .iter()
            .enumerate()
            .map(|(j, &a)| {
                let same = j % 2 == 0;
                let own = if images[a].genuine { &genuine } else { &attack };
                let other = if images[a].genuine { &attack } else { &genuine };
                let partner = if same {
                    if own.len() == 1 {
                        a
                    } else {
                        loop {
                            let p = own[rng.random_range(0..own.len())];
                            if p != a {
                                break p;
                            }
                        }
                    }
                } else {
                    other[rng.random_range(0..other.len())]
                };
                (a, partner, same)
            })
            .collect();

        let mut weighted = 0.0;
        for (b, chunk) in plan.chunks(config.batch_pairs).enumerate() {
            let batch: Vec<Pair> = chunk
                .par_iter()
                .enumerate()
                .map(|(k, &(a, p, same))| -> Result<Pair> {
                    let j = (b * config.batch_pairs + k) as u64;
                    let s1 = seed::derive(epoch_seed, 2 * j + 1);
                    let s2 = seed::derive(epoch_seed, 2 * j + 2);
                    Ok(Pair {
                        x1: finish(&resized[a], &config.augment, config.input_side, s1, true)?,
                        x2: finish(&resized[p], &config.augment, config.input_side, s2, true)?,
                        same,
                    })
                })
                .collect::<Result<_>>()?;
            let (loss, grad) = loss_gradients(&model, &batch, config.margin)?;
            weighted += loss * batch.len() as f64;
            adam.step(model.params_mut(), &grad);
        }
        log.epoch_loss.push(weighted / plan.len() as f64);
    }
    Ok((model, log))
}

/// Loads the training split of `manifest` on `channel` and trains on it.
pub fn train_siamese(
    manifest: &DatasetManifest,
    channel: Channel,
    config: &TrainConfig,
) -> Result<(EmbeddingModel, TrainLog)> {
    let images = load_split(manifest, Split::Train, channel)?;
    if images.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    train_on_images(&images, config)
}

pub fn load_split(
    manifest: &DatasetManifest,
    split: Split,
    channel: Channel,
) -> Result<Vec<LabeledImage>> {
    let records: Vec<_> = manifest.split(split).collect();
    records
        .par_iter()
        .map(|r| {
            Ok(LabeledImage {
                image: manifest.load_channel(r, channel)?,
                crop: r.crop,
                genuine: r.label.is_genuine(),
            })
        })
        .collect()
}

/// Evaluation-mode input tensor for an image.
pub fn eval_input(image: &Plane, crop: Rect, config: &TrainConfig) -> Result<Tensor> {
    preprocess(image, crop, &config.augment, config.input_side, 0, false)
}

/// Embeds every image in evaluation mode, preserving order.
pub fn embed_all(
    model: &EmbeddingModel,
    images: &[LabeledImage],
    config: &TrainConfig,
) -> Result<Vec<Vec<f64>>> {
    images
        .par_iter()
        .map(|im| model.embed(&eval_input(&im.image, im.crop, config)?))
        .collect()
}

const CONTAINER_KIND: &str = "siamese-embedding";

#[derive(Serialize, Deserialize)]
struct ModelDescriptor {
    #[serde(flatten)]
    architecture: Architecture,
    input_norm: InputNorm,
}

/// Packs a trained model and the configuration it was trained with.
pub fn embedding_container(model: &EmbeddingModel, config: &TrainConfig) -> Container {
    Container {
        kind: CONTAINER_KIND.into(),
        architecture: serde_json::to_string(&ModelDescriptor {
            architecture: model.architecture().clone(),
            input_norm: model.input_norm(),
        })
        .expect("architecture serializes"),
        params: model.params().to_vec(),
        seed: config.seed,
        config: serde_json::to_string(config).expect("config serializes"),
    }
}

pub fn save_embedding(
    model: &EmbeddingModel,
    config: &TrainConfig,
    path: impl AsRef<Path>,
) -> Result<()> {
    embedding_container(model, config).write(path)
}

/// Reads a model checkpoint back with its training configuration.
pub fn load_embedding(path: impl AsRef<Path>) -> Result<(EmbeddingModel, TrainConfig)> {
    let path = path.as_ref();
    let c = Container::read(path)?;
    c.expect_kind(CONTAINER_KIND, path)?;
    let desc: ModelDescriptor =
        serde_json::from_str(&c.architecture).map_err(|e| Error::parse(path, e.to_string()))?;
    let config: TrainConfig =
        serde_json::from_str(&c.config).map_err(|e| Error::parse(path, e.to_string()))?;
    let model = EmbeddingModel::from_params(desc.architecture, c.params)
        .and_then(|m| m.with_input_norm(desc.input_norm))
        .map_err(|e| Error::parse(path, e.to_string()))?;
    Ok((model, config))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config() -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-2,
            epochs: 200,
            batch_pairs: 4,
            seed: 5,
            input_side: 8,
            augment: Augment {
                resize_to: 8,
                crop_to: 8,
                horizontal_flip: false,
            },
            channels: vec![4, 8],
            hidden: 8,
            embedding_dim: 4,
            ..TrainConfig::default()
        }
    }

    fn toy_images() -> Vec<LabeledImage> {
        let mk = |level: f64, tilt: f64, genuine| LabeledImage {
            image: Plane::from_fn(8, 8, |x, y| level + tilt * (x as f64 - y as f64) / 8.0),
            crop: Rect::new(0, 0, 8, 8),
            genuine,
        };
        vec![
            mk(0.15, 0.02, true),
            mk(0.17, -0.02, true),
            mk(0.85, 0.02, false),
            mk(0.88, -0.01, false),
        ]
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let cfg = TrainConfig {
            epochs: 0,
            ..toy_config()
        };
        let (m, log) = train_on_images(&toy_images(), &cfg).unwrap();
        assert_eq!(
            m,
            EmbeddingModel::init(cfg.architecture(), cfg.seed).unwrap()
        );
        assert!(log.epoch_loss.is_empty());
        assert_eq!(log.to_csv(), "epoch,loss\n");
    }

    #[test]
    fn single_class_is_data_error() {
        let imgs: Vec<_> = toy_images().into_iter().filter(|i| i.genuine).collect();
        assert!(matches!(
            train_on_images(&imgs, &toy_config()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn toy_set_overfits() {
        let (_, log) = train_on_images(&toy_images(), &toy_config()).unwrap();
        assert_eq!(log.epoch_loss.len(), 200);
        let last = log.final_loss().unwrap();
        assert!(last < 0.01, "final loss {last}");
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig {
            epochs: 5,
            augment: Augment {
                resize_to: 10,
                crop_to: 9,
                horizontal_flip: true,
            },
            ..toy_config()
        };
        let (a, la) = train_on_images(&toy_images(), &cfg).unwrap();
        let (b, lb) = train_on_images(&toy_images(), &cfg).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(la, lb);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut adam = Adam::new(2, 0.1);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = toy_config();
        let model = EmbeddingModel::init(cfg.architecture(), 3)
            .unwrap()
            .with_input_norm(InputNorm {
                mean: 0.25,
                std: 0.5,
            })
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_embedding(&model, &cfg, &path).unwrap();
        let (back, back_cfg) = load_embedding(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(back_cfg, cfg);
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_embedding(&path), Err(Error::Parse { .. })));
    }
}
