use alloc::vec;
use alloc::vec::Vec;

use super::Dims;

/// Border handling of the 3×3 convolution.
///
/// `Replicate` extends each edge pixel outwards, so a spatially constant map
/// stays constant through the convolution. `Zero` pads with zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PadMode {
    Zero,
    #[default]
    Replicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv3x3,
    MaxPool2x2,
    Relu,
    GlobalAvgPool,
    FullyConnected,
    Softmax,
}

impl LayerKind {
    pub const ALL: [LayerKind; 6] = [
        LayerKind::Conv3x3,
        LayerKind::MaxPool2x2,
        LayerKind::Relu,
        LayerKind::GlobalAvgPool,
        LayerKind::FullyConnected,
        LayerKind::Softmax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv3x3 => "conv3x3",
            LayerKind::MaxPool2x2 => "maxpool2x2",
            LayerKind::Relu => "relu",
            LayerKind::GlobalAvgPool => "global_avg_pool",
            LayerKind::FullyConnected => "fully_connected",
            LayerKind::Softmax => "softmax",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// Stride-1 3×3 convolution. Output spatial size is `h + 2·padding - 2`.
    Conv3x3 { in_channels: usize, out_channels: usize, padding: usize, pad_mode: PadMode },
    /// 2×2 window, stride 2, odd trailing rows/columns dropped.
    MaxPool2x2,
    Relu,
    GlobalAvgPool,
    /// Dense layer over the flattened `(c, h, w)` sample.
    FullyConnected { in_features: usize, out_features: usize },
    /// Softmax over the flattened sample.
    Softmax,
}

/// Weight and bias of a parametric layer.
///
/// Conv weights are `[out][in][3][3]`; dense weights are `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Params {
    pub fn zeros(weights: usize, biases: usize) -> Self {
        Self { weight: vec![0.0; weights], bias: vec![0.0; biases] }
    }

    pub fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn add_assign(&mut self, other: &Params) {
        for (a, b) in self.weight.iter_mut().zip(&other.weight) {
            *a += *b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += *b;
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f32> {
        self.weight.iter().chain(self.bias.iter())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f32> {
        self.weight.iter_mut().chain(self.bias.iter_mut())
    }
}

impl LayerSpec {
    /// Padding-1 convolution with replicate borders.
    pub const fn conv3x3(in_channels: usize, out_channels: usize) -> Self {
        LayerSpec::Conv3x3 { in_channels, out_channels, padding: 1, pad_mode: PadMode::Replicate }
    }

    pub const fn fully_connected(in_features: usize, out_features: usize) -> Self {
        LayerSpec::FullyConnected { in_features, out_features }
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Conv3x3 { .. } => LayerKind::Conv3x3,
            LayerSpec::MaxPool2x2 => LayerKind::MaxPool2x2,
            LayerSpec::Relu => LayerKind::Relu,
            LayerSpec::GlobalAvgPool => LayerKind::GlobalAvgPool,
            LayerSpec::FullyConnected { .. } => LayerKind::FullyConnected,
            LayerSpec::Softmax => LayerKind::Softmax,
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind().name()
    }

    pub fn output_dims(&self, input: Dims) -> Result<Dims, &'static str> {
        if input.is_empty() {
            return Err("empty input");
        }
        match *self {
            LayerSpec::Conv3x3 { in_channels, out_channels, padding, .. } => {
                if in_channels == 0 || out_channels == 0 {
                    return Err("channel counts must be at least 1");
                }
                if input.c != in_channels {
                    return Err("channel count mismatch");
                }
                if input.h + 2 * padding < 3 || input.w + 2 * padding < 3 {
                    return Err("padded input smaller than the 3x3 kernel");
                }
                Ok(Dims::new(out_channels, input.h + 2 * padding - 2, input.w + 2 * padding - 2))
            }
            LayerSpec::MaxPool2x2 => {
                if input.h < 2 || input.w < 2 {
                    return Err("spatial size below 2x2 cannot be pooled");
                }
                Ok(Dims::new(input.c, input.h / 2, input.w / 2))
            }
            LayerSpec::Relu | LayerSpec::Softmax => Ok(input),
            LayerSpec::GlobalAvgPool => Ok(Dims::new(input.c, 1, 1)),
            LayerSpec::FullyConnected { in_features, out_features } => {
                if in_features == 0 || out_features == 0 {
                    return Err("feature counts must be at least 1");
                }
                if input.len() != in_features {
                    return Err("flattened input size differs from in_features");
                }
                Ok(Dims::new(out_features, 1, 1))
            }
        }
    }

    /// `(weight count, bias count)` for parametric layers.
    pub fn param_sizes(&self) -> Option<(usize, usize)> {
        match *self {
            LayerSpec::Conv3x3 { in_channels, out_channels, .. } => {
                Some((out_channels * in_channels * 9, out_channels))
            }
            LayerSpec::FullyConnected { in_features, out_features } => {
                Some((out_features * in_features, out_features))
            }
            _ => None,
        }
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv3x3 { in_channels, .. } => in_channels * 9,
            LayerSpec::FullyConnected { in_features, .. } => in_features,
            _ => 0,
        }
    }
}

fn pad(input: &[f32], d: Dims, p: usize, mode: PadMode) -> Vec<f32> {
    let (hp, wp) = (d.h + 2 * p, d.w + 2 * p);
    let mut out = vec![0.0; d.c * hp * wp];
    for c in 0..d.c {
        let src = &input[c * d.h * d.w..(c + 1) * d.h * d.w];
        let dst = &mut out[c * hp * wp..(c + 1) * hp * wp];
        for yy in 0..hp {
            let y = yy as isize - p as isize;
            let y = match mode {
                PadMode::Zero if y < 0 || y >= d.h as isize => continue,
                _ => y.clamp(0, d.h as isize - 1) as usize,
            };
            for xx in 0..wp {
                let x = xx as isize - p as isize;
                let x = match mode {
                    PadMode::Zero if x < 0 || x >= d.w as isize => continue,
                    _ => x.clamp(0, d.w as isize - 1) as usize,
                };
                dst[yy * wp + xx] = src[y * d.w + x];
            }
        }
    }
    out
}

/// Adjoint of [`pad`]: folds a padded gradient back onto the unpadded grid.
fn unpad_grad(grad: &[f32], d: Dims, p: usize, mode: PadMode, out: &mut [f32]) {
    let (hp, wp) = (d.h + 2 * p, d.w + 2 * p);
    for c in 0..d.c {
        let src = &grad[c * hp * wp..(c + 1) * hp * wp];
        let dst = &mut out[c * d.h * d.w..(c + 1) * d.h * d.w];
        for yy in 0..hp {
            let y = yy as isize - p as isize;
            let y = match mode {
                PadMode::Zero if y < 0 || y >= d.h as isize => continue,
                _ => y.clamp(0, d.h as isize - 1) as usize,
            };
            for xx in 0..wp {
                let x = xx as isize - p as isize;
                let x = match mode {
                    PadMode::Zero if x < 0 || x >= d.w as isize => continue,
                    _ => x.clamp(0, d.w as isize - 1) as usize,
                };
                dst[y * d.w + x] += src[yy * wp + xx];
            }
        }
    }
}

fn softmax_in_place(x: &mut [f32]) {
    let max = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for v in x.iter_mut() {
        *v = libm::expf(*v - max);
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

pub(crate) fn softmax_row(x: &[f32]) -> Vec<f32> {
    let mut out = x.to_vec();
    softmax_in_place(&mut out);
    out
}

/// Single-sample forward pass. `input` has `in_dims`, the result has
/// `spec.output_dims(in_dims)`.
pub(crate) fn forward_sample(spec: &LayerSpec, params: Option<&Params>, in_dims: Dims, input: &[f32]) -> Vec<f32> {
    match *spec {
        LayerSpec::Conv3x3 { in_channels, out_channels, padding, pad_mode } => {
            let p = params.expect("conv parameters");
            let padded = pad(input, in_dims, padding, pad_mode);
            let (hp, wp) = (in_dims.h + 2 * padding, in_dims.w + 2 * padding);
            let (ho, wo) = (hp - 2, wp - 2);
            let mut out = vec![0.0f32; out_channels * ho * wo];
            for o in 0..out_channels {
                let plane = &mut out[o * ho * wo..(o + 1) * ho * wo];
                plane.fill(p.bias[o]);
                for i in 0..in_channels {
                    let src = &padded[i * hp * wp..(i + 1) * hp * wp];
                    let kernel = &p.weight[(o * in_channels + i) * 9..(o * in_channels + i + 1) * 9];
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let wv = kernel[ky * 3 + kx];
                            for y in 0..ho {
                                let row_in = &src[(y + ky) * wp + kx..(y + ky) * wp + kx + wo];
                                let row_out = &mut plane[y * wo..(y + 1) * wo];
                                for (r, s) in row_out.iter_mut().zip(row_in) {
                                    *r += wv * *s;
                                }
                            }
                        }
                    }
                }
            }
            out
        }
        LayerSpec::MaxPool2x2 => {
            let (ho, wo) = (in_dims.h / 2, in_dims.w / 2);
            let mut out = vec![0.0f32; in_dims.c * ho * wo];
            for c in 0..in_dims.c {
                let src = &input[c * in_dims.h * in_dims.w..(c + 1) * in_dims.h * in_dims.w];
                for y in 0..ho {
                    for x in 0..wo {
                        let idx = argmax_window(src, in_dims.w, y, x);
                        out[(c * ho + y) * wo + x] = src[idx];
                    }
                }
            }
            out
        }
        LayerSpec::Relu => input.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
        LayerSpec::GlobalAvgPool => {
            let hw = in_dims.h * in_dims.w;
            (0..in_dims.c)
                .map(|c| input[c * hw..(c + 1) * hw].iter().sum::<f32>() / hw as f32)
                .collect()
        }
        LayerSpec::FullyConnected { in_features, out_features } => {
            let p = params.expect("dense parameters");
            (0..out_features)
                .map(|o| {
                    let row = &p.weight[o * in_features..(o + 1) * in_features];
                    p.bias[o] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f32>()
                })
                .collect()
        }
        LayerSpec::Softmax => softmax_row(input),
    }
}

/// Flat index of the window maximum; the lowest flat index wins ties.
fn argmax_window(src: &[f32], width: usize, y: usize, x: usize) -> usize {
    let mut best = (2 * y) * width + 2 * x;
    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
        let idx = (2 * y + dy) * width + 2 * x + dx;
        if src[idx] > src[best] {
            best = idx;
        }
    }
    best
}

/// Single-sample backward pass. Accumulates parameter gradients into
/// `grad_params` and returns the gradient with respect to `input`.
pub(crate) fn backward_sample(
    spec: &LayerSpec,
    params: Option<&Params>,
    in_dims: Dims,
    input: &[f32],
    output: &[f32],
    grad_out: &[f32],
    grad_params: Option<&mut Params>,
) -> Vec<f32> {
    let mut grad_in = vec![0.0f32; in_dims.len()];
    match *spec {
        LayerSpec::Conv3x3 { in_channels, out_channels, padding, pad_mode } => {
            let p = params.expect("conv parameters");
            let g = grad_params.expect("conv gradient buffer");
            let padded = pad(input, in_dims, padding, pad_mode);
            let (hp, wp) = (in_dims.h + 2 * padding, in_dims.w + 2 * padding);
            let (ho, wo) = (hp - 2, wp - 2);
            let mut grad_padded = vec![0.0f32; in_channels * hp * wp];
            for o in 0..out_channels {
                let go = &grad_out[o * ho * wo..(o + 1) * ho * wo];
                g.bias[o] += go.iter().sum::<f32>();
                for i in 0..in_channels {
                    let src = &padded[i * hp * wp..(i + 1) * hp * wp];
                    let base = (o * in_channels + i) * 9;
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let wv = p.weight[base + ky * 3 + kx];
                            let mut acc = 0.0f32;
                            for y in 0..ho {
                                let off = (y + ky) * wp + kx;
                                let row_in = &src[off..off + wo];
                                let row_g = &go[y * wo..(y + 1) * wo];
                                acc += row_in.iter().zip(row_g).map(|(a, b)| a * b).sum::<f32>();
                                let row_gp = &mut grad_padded[i * hp * wp + off..i * hp * wp + off + wo];
                                for (d, gv) in row_gp.iter_mut().zip(row_g) {
                                    *d += wv * *gv;
                                }
                            }
                            g.weight[base + ky * 3 + kx] += acc;
                        }
                    }
                }
            }
            unpad_grad(&grad_padded, in_dims, padding, pad_mode, &mut grad_in);
        }
        LayerSpec::MaxPool2x2 => {
            let (ho, wo) = (in_dims.h / 2, in_dims.w / 2);
            let hw = in_dims.h * in_dims.w;
            for c in 0..in_dims.c {
                let src = &input[c * hw..(c + 1) * hw];
                for y in 0..ho {
                    for x in 0..wo {
                        let idx = argmax_window(src, in_dims.w, y, x);
                        grad_in[c * hw + idx] += grad_out[(c * ho + y) * wo + x];
                    }
                }
            }
        }
        LayerSpec::Relu => {
            for ((gi, &x), &go) in grad_in.iter_mut().zip(input).zip(grad_out) {
                *gi = if x > 0.0 { go } else { 0.0 };
            }
        }
        LayerSpec::GlobalAvgPool => {
            let hw = in_dims.h * in_dims.w;
            for c in 0..in_dims.c {
                let v = grad_out[c] / hw as f32;
                grad_in[c * hw..(c + 1) * hw].fill(v);
            }
        }
        LayerSpec::FullyConnected { in_features, out_features } => {
            let p = params.expect("dense parameters");
            let g = grad_params.expect("dense gradient buffer");
            for (o, &go) in grad_out.iter().enumerate().take(out_features) {
                g.bias[o] += go;
                let row_w = &p.weight[o * in_features..(o + 1) * in_features];
                let row_g = &mut g.weight[o * in_features..(o + 1) * in_features];
                for ((gw, &x), (gi, &w)) in row_g.iter_mut().zip(input).zip(grad_in.iter_mut().zip(row_w)) {
                    *gw += go * x;
                    *gi += w * go;
                }
            }
        }
        LayerSpec::Softmax => {
            let dot: f32 = output.iter().zip(grad_out).map(|(p, g)| p * g).sum();
            for ((gi, &p), &g) in grad_in.iter_mut().zip(output).zip(grad_out) {
                *gi = p * (g - dot);
            }
        }
    }
    grad_in
}
