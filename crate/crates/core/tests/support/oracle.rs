//! Brute-force reference for smoothing, CQI, convergence and markers.
//!
//! Written independently of the library: every quantity is recomputed from the
//! raw losses for each epoch, with 1-based epochs throughout.

#![allow(dead_code)]

#[derive(Debug, Clone, PartialEq)]
pub enum OracleOutcome {
    Plan { converged: usize, baseline: usize, markers: Vec<usize> },
    NotConverged,
    Degenerate,
    ConvergedBeforeBaseline,
    Infeasible { k: usize },
}

pub fn ema(raw: &[f64], alpha: f64) -> Vec<f64> {
    let mut s = vec![raw[0]];
    for m in 2..=raw.len() {
        let prev = s[m - 2];
        s.push(alpha * prev + (1.0 - alpha) * raw[m - 1]);
    }
    s
}

/// CQI at 1-based epoch `m >= 2`.
pub fn cqi_at(smoothed: &[f64], window: usize, m: usize) -> f64 {
    let w = window.min(m - 1);
    let mut total = 0.0;
    for j in (m - w + 1)..=m {
        total += (smoothed[j - 1] - smoothed[j - 2]).abs();
    }
    total / w as f64
}

pub fn converged(smoothed: &[f64], window: usize, mu: f64) -> Option<usize> {
    (2..=smoothed.len()).find(|&m| cqi_at(smoothed, window, m) <= mu)
}

/// Markers for a given convergence epoch.
pub fn markers_at(raw: &[f64], smoothed: &[f64], ek: usize, k: usize) -> OracleOutcome {
    let mut e0 = 1;
    for m in 1..=raw.len() {
        if raw[m - 1] > raw[e0 - 1] {
            e0 = m;
        }
    }
    if ek <= e0 {
        return OracleOutcome::ConvergedBeforeBaseline;
    }
    let lg: Vec<f64> = smoothed.iter().map(|v| v.ln()).collect();
    let drop = |m: usize| (lg[m - 1] - lg[e0 - 1]).abs();
    let g = drop(ek);
    if g == 0.0 {
        return OracleOutcome::Degenerate;
    }
    let dg = g / k as f64;
    let mut markers = Vec::new();
    let mut prev = e0;
    for step in 1..k {
        let target = step as f64 * dg;
        let mut found = None;
        for m in prev + 1..ek {
            if drop(m) >= target {
                found = Some(m);
                break;
            }
        }
        match found {
            Some(m) => {
                markers.push(m);
                prev = m;
            }
            None => return OracleOutcome::Infeasible { k: step },
        }
    }
    markers.push(ek);
    OracleOutcome::Plan { converged: ek, baseline: e0, markers }
}

pub fn analyze(raw: &[f64], alpha: f64, window: usize, mu: f64, k: usize) -> OracleOutcome {
    let s = ema(raw, alpha);
    match converged(&s, window, mu) {
        None => OracleOutcome::NotConverged,
        Some(ek) => markers_at(raw, &s, ek, k),
    }
}

/// Noisy exponential decay with a positive floor, in the style of a training
/// loss: `a·exp(-λm) + floor`, times `1 + noise·u` with `u` uniform in ±1.
pub fn noisy_curve(next_unit: &mut impl FnMut() -> f64, m: usize) -> Vec<f64> {
    let a = 1.0 + 2.0 * next_unit();
    let lambda = 0.02 + 0.08 * next_unit();
    let floor = 0.01 + 0.2 * next_unit();
    let noise = 0.02 * next_unit();
    (1..=m)
        .map(|e| (a * (-lambda * e as f64).exp() + floor) * (1.0 + noise * (2.0 * next_unit() - 1.0)))
        .collect()
}
