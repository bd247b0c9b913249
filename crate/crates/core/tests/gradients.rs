mod support;

use fmce_core::nn::{
    softmax_rows, Dims, Executor, LayerKind, LayerSpec, ModelGraph, Sequential, Tensor4,
};
use fmce_core::rng::Rng;
use proptest::prelude::*;
use support::gradcheck;

#[test]
fn every_layer_kind_passes_finite_differences() {
    for (i, kind) in LayerKind::ALL.into_iter().enumerate() {
        let mut rng = Rng::derive(11, i as u64);
        let mut worst = 0.0f64;
        for trial in 0..100 {
            let (spec, batch, dims, x) = gradcheck::random_case(kind, &mut rng);
            let err = gradcheck::check(spec, batch, dims, x, trial);
            worst = worst.max(err);
        }
        assert!(worst <= 1e-3, "{}: worst relative error {worst:e}", kind.name());
    }
}

/// Runs samples in reverse order, to show results do not depend on scheduling.
struct Reversed;

impl Executor for Reversed {
    fn map<T: Send, F: Fn(usize) -> T + Sync + Send>(&self, n: usize, f: F) -> Vec<T> {
        let mut out: Vec<(usize, T)> = (0..n).rev().map(|i| (i, f(i))).collect();
        out.reverse();
        out.into_iter().map(|(_, t)| t).collect()
    }
}

#[test]
fn forward_and_backward_ignore_execution_order() {
    let layers = vec![
        LayerSpec::conv3x3(2, 3),
        LayerSpec::Relu,
        LayerSpec::MaxPool2x2,
        LayerSpec::fully_connected(3 * 3 * 3, 4),
        LayerSpec::Softmax,
    ];
    let m = ModelGraph::new(Dims::new(2, 6, 6), layers, 9).unwrap();
    let mut rng = Rng::new(1);
    let x = gradcheck::uniform_input(&mut rng, 7, Dims::new(2, 6, 6));
    let (a, ca) = m.forward_with(&Sequential, &x).unwrap();
    let (b, cb) = m.forward_with(&Reversed, &x).unwrap();
    assert_eq!(a, b);
    let up = gradcheck::uniform_input(&mut rng, 7, Dims::new(4, 1, 1));
    assert_eq!(m.backward_with(&Sequential, &ca, &up).unwrap(), m.backward_with(&Reversed, &cb, &up).unwrap());
    assert_eq!(ModelGraph::new(Dims::new(2, 6, 6), m.layers().to_vec(), 9).unwrap(), m);
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(v in prop::collection::vec(-30.0f32..30.0, 1..40), n in 1usize..4) {
        let len = v.len();
        let data: Vec<f32> = (0..n).flat_map(|i| v.iter().map(move |x| x + i as f32)).collect();
        let p = softmax_rows(&Tensor4::new([n, len, 1, 1], data).unwrap());
        for s in 0..n {
            let row = p.sample(s);
            prop_assert!(row.iter().all(|&x| (0.0..=1.0).contains(&x)));
            let sum: f64 = row.iter().map(|&x| x as f64).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn maxpool_gradient_lands_on_window_maxima(seed in any::<u64>(), ties in any::<bool>()) {
        let mut rng = Rng::new(seed);
        let d = Dims::new(2, 4, 6);
        // coarse values force ties within windows
        let x: Vec<f32> = (0..d.len()).map(|_| if ties { rng.below(3) as f32 } else { rng.uniform(-1.0, 1.0) }).collect();
        let m = ModelGraph::new(d, vec![LayerSpec::MaxPool2x2], 0).unwrap();
        let input = Tensor4::new([1, 2, 4, 6], x.clone()).unwrap();
        let (y, cache) = m.forward(&input).unwrap();
        let up = Tensor4::new([1, 2, 2, 3], (1..=12).map(|v| v as f32).collect()).unwrap();
        let (_, gx) = m.backward_with(&Sequential, &cache, &up).unwrap();
        for c in 0..2 {
            for oy in 0..2 {
                for ox in 0..3 {
                    let window: Vec<usize> = [(0, 0), (0, 1), (1, 0), (1, 1)]
                        .iter()
                        .map(|(dy, dx)| c * 24 + (2 * oy + dy) * 6 + 2 * ox + dx)
                        .collect();
                    let best = window.iter().copied().fold(window[0], |b, i| if x[i] > x[b] { i } else { b });
                    let o = c * 6 + oy * 3 + ox;
                    prop_assert_eq!(y.data()[o], x[best]);
                    for &i in &window {
                        let expected = if i == best { up.data()[o] } else { 0.0 };
                        prop_assert_eq!(gx.data()[i], expected);
                    }
                }
            }
        }
    }
}
