//! Forward and backward passes of the individual network layers.
//!
//! Parameters are borrowed from the model's flat parameter vector; gradients
//! are accumulated (`+=`) into matching slices of a flat gradient vector.

use crate::error::{Error, Result};

/// Channel-major activation tensor `[c][h][w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Dimension(format!(
                "tensor {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

/// Output side of a 3x3 convolution with zero padding 1.
pub fn conv_out_side(side: usize, stride: usize) -> usize {
    (side - 1) / stride + 1
}

/// Shape of a 3x3, padding-1 convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
}

impl ConvShape {
    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * 9
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.out_channels
    }
}

/// `params` holds `[out][in][3][3]` weights followed by `out` biases.
pub fn conv_forward(shape: ConvShape, params: &[f64], input: &Tensor) -> Tensor {
    debug_assert_eq!(params.len(), shape.param_len());
    debug_assert_eq!(input.channels, shape.in_channels);
    let (weights, bias) = params.split_at(shape.weight_len());
    let (h, w, s) = (input.height, input.width, shape.stride);
    let (ho, wo) = (conv_out_side(h, s), conv_out_side(w, s));
    let mut out = Tensor::zeros(shape.out_channels, ho, wo);
    for o in 0..shape.out_channels {
        let plane = &mut out.data[o * ho * wo..(o + 1) * ho * wo];
        plane.fill(bias[o]);
        for i in 0..shape.in_channels {
            let k = &weights[(o * shape.in_channels + i) * 9..][..9];
            let src = &input.data[i * h * w..(i + 1) * h * w];
            for oy in 0..ho {
                for ky in 0..3 {
                    let iy = (oy * s + ky) as isize - 1;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    let row = &src[iy as usize * w..(iy as usize + 1) * w];
                    let dst = &mut plane[oy * wo..(oy + 1) * wo];
                    for kx in 0..3 {
                        let kv = k[ky * 3 + kx];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - 1;
                            if ix >= 0 && (ix as usize) < w {
                                *d += kv * row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates parameter gradients into `grad_params` and returns the
/// gradient with respect to `input`.
pub fn conv_backward(
    shape: ConvShape,
    params: &[f64],
    input: &Tensor,
    grad_out: &Tensor,
    grad_params: &mut [f64],
) -> Tensor {
    let (weights, _) = params.split_at(shape.weight_len());
    let (gw, gb) = grad_params.split_at_mut(shape.weight_len());
    let (h, w, s) = (input.height, input.width, shape.stride);
    let (ho, wo) = (grad_out.height, grad_out.width);
    let mut grad_in = Tensor::zeros(shape.in_channels, h, w);
    for o in 0..shape.out_channels {
        let g = &grad_out.data[o * ho * wo..(o + 1) * ho * wo];
        gb[o] += g.iter().sum::<f64>();
        for i in 0..shape.in_channels {
            let base = (o * shape.in_channels + i) * 9;
            let src = &input.data[i * h * w..(i + 1) * h * w];
            let gin = &mut grad_in.data[i * h * w..(i + 1) * h * w];
            for oy in 0..ho {
                for ky in 0..3 {
                    let iy = (oy * s + ky) as isize - 1;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    let iy = iy as usize;
                    for kx in 0..3 {
                        let kv = weights[base + ky * 3 + kx];
                        let mut acc = 0.0;
                        for ox in 0..wo {
                            let ix = (ox * s + kx) as isize - 1;
                            if ix >= 0 && (ix as usize) < w {
                                let gv = g[oy * wo + ox];
                                acc += gv * src[iy * w + ix as usize];
                                gin[iy * w + ix as usize] += gv * kv;
                            }
                        }
                        gw[base + ky * 3 + kx] += acc;
                    }
                }
            }
        }
    }
    grad_in
}

pub fn relu_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// `output` is the forward result; the derivative at 0 is taken as 0.
pub fn relu_backward(output: &[f64], grad_out: &[f64]) -> Vec<f64> {
    output
        .iter()
        .zip(grad_out)
        .map(|(&y, &g)| if y > 0.0 { g } else { 0.0 })
        .collect()
}

/// Global average pooling to one value per channel.
pub fn gap_forward(input: &Tensor) -> Vec<f64> {
    let n = input.height * input.width;
    input
        .data
        .chunks_exact(n)
        .map(|c| c.iter().sum::<f64>() / n as f64)
        .collect()
}

pub fn gap_backward(shape: (usize, usize, usize), grad_out: &[f64]) -> Tensor {
    let (c, h, w) = shape;
    let n = (h * w) as f64;
    let mut t = Tensor::zeros(c, h, w);
    for (ch, &g) in grad_out.iter().enumerate() {
        t.data[ch * h * w..(ch + 1) * h * w].fill(g / n);
    }
    t
}

/// Fully connected layer shape; `params` is `[out][in]` weights then `out` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseShape {
    pub inputs: usize,
    pub outputs: usize,
}

impl DenseShape {
    pub fn weight_len(&self) -> usize {
        self.inputs * self.outputs
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.outputs
    }
}

pub fn dense_forward(shape: DenseShape, params: &[f64], x: &[f64]) -> Vec<f64> {
    let (weights, bias) = params.split_at(shape.weight_len());
    (0..shape.outputs)
        .map(|o| {
            let row = &weights[o * shape.inputs..(o + 1) * shape.inputs];
            bias[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect()
}

pub fn dense_backward(
    shape: DenseShape,
    params: &[f64],
    x: &[f64],
    grad_out: &[f64],
    grad_params: &mut [f64],
) -> Vec<f64> {
    let (weights, _) = params.split_at(shape.weight_len());
    let (gw, gb) = grad_params.split_at_mut(shape.weight_len());
    let mut grad_in = vec![0.0; shape.inputs];
    for (o, &g) in grad_out.iter().enumerate() {
        gb[o] += g;
        let row = &weights[o * shape.inputs..(o + 1) * shape.inputs];
        let grow = &mut gw[o * shape.inputs..(o + 1) * shape.inputs];
        for j in 0..shape.inputs {
            grow[j] += g * x[j];
            grad_in[j] += g * row[j];
        }
    }
    grad_in
}
