//! Central finite differences against the engine's analytic gradients.

#![allow(dead_code)]

use fmce_core::nn::{Dims, LayerSpec, ModelGraph, PadMode, Sequential, Tensor4};
use fmce_core::rng::Rng;

pub const EPS: f32 = 1e-2;

/// `‖a - b‖ / max(‖a‖, ‖b‖)`, or the absolute difference when both are ~0.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

/// `Σ r ⊙ model(x)` accumulated in f64.
fn objective(model: &ModelGraph, x: &Tensor4, r: &Tensor4) -> f64 {
    let (y, _) = model.forward(x).unwrap();
    y.data().iter().zip(r.data()).map(|(&a, &b)| a as f64 * b as f64).sum()
}

/// Worst relative error of the input and parameter gradients of one layer.
pub fn check(spec: LayerSpec, batch: usize, dims: Dims, x: Tensor4, seed: u64) -> f64 {
    let mut model = ModelGraph::new(dims, vec![spec], seed).unwrap();
    let out = model.output_dims();
    let mut rng = Rng::derive(seed, 1);
    let r = Tensor4::new(
        [batch, out.c, out.h, out.w],
        (0..batch * out.len()).map(|_| rng.uniform(-1.0, 1.0)).collect(),
    )
    .unwrap();
    let (_, cache) = model.forward(&x).unwrap();
    let (grads, gx) = model.backward_with(&Sequential, &cache, &r).unwrap();

    let mut numeric = Vec::with_capacity(x.data().len());
    let mut xp = x.clone();
    for i in 0..x.data().len() {
        let v = x.data()[i];
        xp.data_mut()[i] = v + EPS;
        let up = objective(&model, &xp, &r);
        xp.data_mut()[i] = v - EPS;
        let down = objective(&model, &xp, &r);
        xp.data_mut()[i] = v;
        numeric.push((up - down) / (2.0 * EPS as f64));
    }
    let analytic: Vec<f64> = gx.data().iter().map(|&g| g as f64).collect();
    let mut worst = relative_error(&analytic, &numeric);

    let count = model.params()[0].as_ref().map_or(0, |p| p.len());
    if count > 0 {
        let mut numeric = Vec::with_capacity(count);
        for i in 0..count {
            let v = *model.params_mut()[0].as_mut().unwrap().values_mut().nth(i).unwrap();
            *model.params_mut()[0].as_mut().unwrap().values_mut().nth(i).unwrap() = v + EPS;
            let up = objective(&model, &x, &r);
            *model.params_mut()[0].as_mut().unwrap().values_mut().nth(i).unwrap() = v - EPS;
            let down = objective(&model, &x, &r);
            *model.params_mut()[0].as_mut().unwrap().values_mut().nth(i).unwrap() = v;
            numeric.push((up - down) / (2.0 * EPS as f64));
        }
        let analytic: Vec<f64> = grads.layers[0].as_ref().unwrap().values().map(|&g| g as f64).collect();
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

/// Random shape within `(2, 4, 8, 8)`; spatial sides at least 2.
pub fn random_shape(rng: &mut Rng) -> (usize, Dims) {
    (1 + rng.below(2), Dims::new(1 + rng.below(4), 2 + rng.below(7), 2 + rng.below(7)))
}

pub fn uniform_input(rng: &mut Rng, batch: usize, d: Dims) -> Tensor4 {
    Tensor4::new([batch, d.c, d.h, d.w], (0..batch * d.len()).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

/// Distinct values at least `0.05` apart, so a ±EPS nudge never changes which
/// element of a pooling window wins.
pub fn separated_input(rng: &mut Rng, batch: usize, d: Dims) -> Tensor4 {
    let n = batch * d.len();
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    Tensor4::new([batch, d.c, d.h, d.w], order.iter().map(|&i| (i as f32 - n as f32 / 2.0) * 0.05).collect()).unwrap()
}

/// Values with `|x| >= 0.05`, away from the ReLU kink.
pub fn off_kink_input(rng: &mut Rng, batch: usize, d: Dims) -> Tensor4 {
    let data = (0..batch * d.len())
        .map(|_| {
            let m = rng.uniform(0.05, 1.0);
            if rng.below(2) == 0 { m } else { -m }
        })
        .collect();
    Tensor4::new([batch, d.c, d.h, d.w], data).unwrap()
}

/// A random layer of `kind` with a matching input.
pub fn random_case(kind: fmce_core::nn::LayerKind, rng: &mut Rng) -> (LayerSpec, usize, Dims, Tensor4) {
    use fmce_core::nn::LayerKind::*;
    let (batch, d) = random_shape(rng);
    match kind {
        Conv3x3 => {
            let pad_mode = if rng.below(2) == 0 { PadMode::Zero } else { PadMode::Replicate };
            let spec = LayerSpec::Conv3x3 { in_channels: d.c, out_channels: 1 + rng.below(4), padding: 1, pad_mode };
            (spec, batch, d, uniform_input(rng, batch, d))
        }
        MaxPool2x2 => (LayerSpec::MaxPool2x2, batch, d, separated_input(rng, batch, d)),
        Relu => (LayerSpec::Relu, batch, d, off_kink_input(rng, batch, d)),
        GlobalAvgPool => (LayerSpec::GlobalAvgPool, batch, d, uniform_input(rng, batch, d)),
        FullyConnected => {
            let spec = LayerSpec::fully_connected(d.len(), 1 + rng.below(6));
            (spec, batch, d, uniform_input(rng, batch, d))
        }
        Softmax => (LayerSpec::Softmax, batch, d, uniform_input(rng, batch, d)),
    }
}
