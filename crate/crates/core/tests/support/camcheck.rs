//! Finite differences for Grad-CAM gradients and a counting oracle for metrics.

#![allow(dead_code)]

use fmce_core::fmce::FmceModel;

/// Relative error of the Grad-CAM gradient against central differences of the
/// target logit. `None` when a nudge of `eps` could flip a pooling winner or a
/// relu, where the logit is not differentiable.
pub fn grad_cam_error(model: &FmceModel, x: &[f32], target: usize, eps: f32) -> Option<f64> {
    let cam = model.grad_cam(x, target).unwrap();
    let d = cam.dims;
    let mut margin = f32::INFINITY;
    for c in 0..d.c {
        for oy in 0..d.h / 2 {
            for ox in 0..d.w / 2 {
                let mut vals: Vec<f32> = [(0, 0), (0, 1), (1, 0), (1, 1)]
                    .iter()
                    .map(|(dy, dx)| cam.activation[c * d.h * d.w + (2 * oy + dy) * d.w + 2 * ox + dx])
                    .collect();
                vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
                margin = margin.min(vals[0] - vals[1]).min(vals[0].abs());
            }
        }
    }
    if margin < 4.0 * eps {
        return None;
    }
    let mut a = cam.activation.clone();
    let numeric: Vec<f64> = (0..a.len())
        .map(|i| {
            let v = a[i];
            a[i] = v + eps;
            let up = model.logit_from_activation(&a, target).unwrap() as f64;
            a[i] = v - eps;
            let down = model.logit_from_activation(&a, target).unwrap() as f64;
            a[i] = v;
            (up - down) / (2.0 * eps as f64)
        })
        .collect();
    let analytic: Vec<f64> = cam.gradient.iter().map(|&g| g as f64).collect();
    let diff: f64 = analytic.iter().zip(&numeric).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = analytic.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-8);
    Some(diff / norm)
}

/// `[accuracy, macro precision, macro recall, macro F1]` by direct counting.
pub fn counting_oracle(k: usize, labels: &[usize], preds: &[usize]) -> [f64; 4] {
    let n = labels.len() as f64;
    let correct = labels.iter().zip(preds).filter(|(l, p)| l == p).count() as f64;
    let (mut ps, mut rs, mut fs) = (0.0, 0.0, 0.0);
    for c in 0..k {
        let tp = labels.iter().zip(preds).filter(|&(&l, &p)| l == c && p == c).count() as f64;
        let fp = labels.iter().zip(preds).filter(|&(&l, &p)| l != c && p == c).count() as f64;
        let fneg = labels.iter().zip(preds).filter(|&(&l, &p)| l == c && p != c).count() as f64;
        let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let r = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
        ps += p;
        rs += r;
        fs += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    }
    [correct / n, ps / k as f64, rs / k as f64, fs / k as f64]
}
