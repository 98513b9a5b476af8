use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    conv_backward, conv_forward, conv_out_side, dense_backward, dense_forward, gap_backward,
    gap_forward, relu_backward, relu_forward, ConvShape, DenseShape, Tensor,
};
use crate::error::{Error, Result};
use crate::seed;

/// One 3x3 convolution + ReLU stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStage {
    pub out_channels: usize,
    pub stride: usize,
}

/// Network layout: conv stages, global average pooling, a hidden fully
/// connected layer with ReLU, and a linear embedding layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_side: usize,
    pub stages: Vec<ConvStage>,
    pub hidden: usize,
    pub embedding_dim: usize,
}

impl Default for Architecture {
    /// Four stride-2 stages of 8, 16, 32 and 64 channels on 32x32 input,
    /// FC 64, 32-dimensional embedding.
    fn default() -> Self {
        Self {
            input_side: 32,
            stages: [8, 16, 32, 64]
                .iter()
                .map(|&c| ConvStage {
                    out_channels: c,
                    stride: 2,
                })
                .collect(),
            hidden: 64,
            embedding_dim: 32,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Layer {
    Conv { shape: ConvShape, offset: usize },
    Dense { shape: DenseShape, offset: usize },
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.input_side == 0 || self.hidden == 0 || self.embedding_dim == 0 {
            return Err(Error::Parameter(
                "input_side, hidden and embedding_dim must be positive".into(),
            ));
        }
        if self.stages.is_empty() {
            return Err(Error::Parameter("at least one conv stage required".into()));
        }
        if self
            .stages
            .iter()
            .any(|s| s.out_channels == 0 || s.stride == 0)
        {
            return Err(Error::Parameter(
                "conv stages need positive channels and stride".into(),
            ));
        }
        Ok(())
    }

    fn layers(&self) -> Vec<Layer> {
        let mut layers = Vec::with_capacity(self.stages.len() + 2);
        let mut offset = 0;
        let mut in_channels = 1;
        for s in &self.stages {
            let shape = ConvShape {
                in_channels,
                out_channels: s.out_channels,
                stride: s.stride,
            };
            layers.push(Layer::Conv { shape, offset });
            offset += shape.param_len();
            in_channels = s.out_channels;
        }
        for (inputs, outputs) in [
            (in_channels, self.hidden),
            (self.hidden, self.embedding_dim),
        ] {
            let shape = DenseShape { inputs, outputs };
            layers.push(Layer::Dense { shape, offset });
            offset += shape.param_len();
        }
        layers
    }

    pub fn param_count(&self) -> usize {
        self.layers()
            .iter()
            .map(|l| match l {
                Layer::Conv { shape, .. } => shape.param_len(),
                Layer::Dense { shape, .. } => shape.param_len(),
            })
            .sum()
    }

    /// Spatial side of the feature map after the last conv stage.
    pub fn final_side(&self) -> usize {
        self.stages
            .iter()
            .fold(self.input_side, |side, s| conv_out_side(side, s.stride))
    }
}

/// Fixed affine map `(x − mean) / std` applied to every input pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub mean: f64,
    pub std: f64,
}

impl Default for InputNorm {
    fn default() -> Self {
        Self {
            mean: 0.0,
            std: 1.0,
        }
    }
}

impl InputNorm {
    /// Population mean and std of the given pixels; std falls back to 1 for
    /// constant data.
    pub fn fit<'a>(pixels: impl Iterator<Item = &'a [f64]> + Clone) -> Self {
        let (mut n, mut sum) = (0usize, 0.0);
        for p in pixels.clone() {
            n += p.len();
            sum += p.iter().sum::<f64>();
        }
        if n == 0 {
            return Self::default();
        }
        let mean = sum / n as f64;
        let var = pixels
            .map(|p| p.iter().map(|v| (v - mean).powi(2)).sum::<f64>())
            .sum::<f64>()
            / n as f64;
        let std = var.sqrt();
        Self {
            mean,
            std: if std > 1e-12 { std } else { 1.0 },
        }
    }

    fn is_identity(&self) -> bool {
        *self == Self::default()
    }
}

/// The embedding function φ with its flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    arch: Architecture,
    params: Vec<f64>,
    input_norm: InputNorm,
}

/// Activations retained by a forward pass for backpropagation.
pub struct ForwardCache {
    /// Input and post-ReLU output of each conv stage.
    conv_io: Vec<(Tensor, Tensor)>,
    pooled: Vec<f64>,
    hidden: Vec<f64>,
    embedding: Vec<f64>,
}

impl ForwardCache {
    pub fn embedding(&self) -> &[f64] {
        &self.embedding
    }
}

impl EmbeddingModel {
    /// He-uniform (fan-in) weights, zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut params = vec![0.0; arch.param_count()];
        let mut rng = seed::rng(seed::derive(seed, 0x1417));
        for layer in arch.layers() {
            let (offset, n_weights, fan_in) = match layer {
                Layer::Conv { shape, offset } => {
                    (offset, shape.weight_len(), shape.in_channels * 9)
                }
                Layer::Dense { shape, offset } => (offset, shape.weight_len(), shape.inputs),
            };
            let limit = (6.0 / fan_in as f64).sqrt();
            for p in &mut params[offset..offset + n_weights] {
                *p = rng.random_range(-limit..limit);
            }
        }
        Ok(Self {
            arch,
            params,
            input_norm: InputNorm::default(),
        })
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(Error::Dimension(format!(
                "architecture needs {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Parameter("non-finite model parameter".into()));
        }
        Ok(Self {
            arch,
            params,
            input_norm: InputNorm::default(),
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn with_input_norm(mut self, norm: InputNorm) -> Result<Self> {
        if !(norm.mean.is_finite() && norm.std.is_finite() && norm.std > 0.0) {
            return Err(Error::Parameter(format!(
                "invalid input normalization {norm:?}"
            )));
        }
        self.input_norm = norm;
        Ok(self)
    }

    pub fn input_norm(&self) -> InputNorm {
        self.input_norm
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn embedding_dim(&self) -> usize {
        self.arch.embedding_dim
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let side = self.arch.input_side;
        if x.shape() != (1, side, side) {
            return Err(Error::Dimension(format!(
                "model expects 1x{side}x{side} input, got {:?}",
                x.shape()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<ForwardCache> {
        self.check_input(x)?;
        let mut conv_io = Vec::with_capacity(self.arch.stages.len());
        let mut current = x.clone();
        if !self.input_norm.is_identity() {
            let InputNorm { mean, std } = self.input_norm;
            current.data.iter_mut().for_each(|v| *v = (*v - mean) / std);
        }
        let mut pooled = Vec::new();
        let mut hidden = Vec::new();
        let mut embedding = Vec::new();
        for layer in self.arch.layers() {
            match layer {
                Layer::Conv { shape, offset } => {
                    let p = &self.params[offset..offset + shape.param_len()];
                    let mut out = conv_forward(shape, p, &current);
                    out.data = relu_forward(&out.data);
                    conv_io.push((current, out.clone()));
                    current = out;
                }
                Layer::Dense { shape, offset } => {
                    let p = &self.params[offset..offset + shape.param_len()];
                    if pooled.is_empty() {
                        pooled = gap_forward(&current);
                        hidden = relu_forward(&dense_forward(shape, p, &pooled));
                    } else {
                        embedding = dense_forward(shape, p, &hidden);
                    }
                }
            }
        }
        Ok(ForwardCache {
            conv_io,
            pooled,
            hidden,
            embedding,
        })
    }

    pub fn embed(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.embedding)
    }

    /// Backpropagates `grad_embedding` through a cached forward pass,
    /// accumulating into `grad` (same layout as the parameters).
    pub fn backward(&self, cache: &ForwardCache, grad_embedding: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let layers = self.arch.layers();
        let n_conv = self.arch.stages.len();

        let (out_shape, out_off) = match layers[n_conv + 1] {
            Layer::Dense { shape, offset } => (shape, offset),
            Layer::Conv { .. } => unreachable!(),
        };
        let g_hidden = dense_backward(
            out_shape,
            &self.params[out_off..out_off + out_shape.param_len()],
            &cache.hidden,
            grad_embedding,
            &mut grad[out_off..out_off + out_shape.param_len()],
        );
        let g_hidden = relu_backward(&cache.hidden, &g_hidden);

        let (hid_shape, hid_off) = match layers[n_conv] {
            Layer::Dense { shape, offset } => (shape, offset),
            Layer::Conv { .. } => unreachable!(),
        };
        let g_pooled = dense_backward(
            hid_shape,
            &self.params[hid_off..hid_off + hid_shape.param_len()],
            &cache.pooled,
            &g_hidden,
            &mut grad[hid_off..hid_off + hid_shape.param_len()],
        );

        let last = &cache.conv_io[n_conv - 1].1;
        let mut g = gap_backward(last.shape(), &g_pooled);
        for k in (0..n_conv).rev() {
            let (shape, offset) = match layers[k] {
                Layer::Conv { shape, offset } => (shape, offset),
                Layer::Dense { .. } => unreachable!(),
            };
            let (input, output) = &cache.conv_io[k];
            g.data = relu_backward(&output.data, &g.data);
            g = conv_backward(
                shape,
                &self.params[offset..offset + shape.param_len()],
                input,
                &g,
                &mut grad[offset..offset + shape.param_len()],
            );
        }
    }
}
