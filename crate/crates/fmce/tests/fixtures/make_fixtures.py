"""Writes the analyze fixtures and the expected plans.

The reference analysis below is a direct transcription of the method:
recursive EMA, windowed mean of absolute first differences, first epoch at or
below the threshold, baseline at the raw maximum, then the first epoch whose
log-loss drop reaches each multiple of the per-phase share.
"""

import json
import math


def exp_decay(m=150):
    return [2.3 * math.exp(-0.08 * e) + 0.05 for e in range(1, m + 1)]


def write_csv(path, values):
    with open(path, "w") as f:
        f.write("epoch,loss\n")
        for i, v in enumerate(values, 1):
            f.write(f"{i},{v!r}\n")


def analyze(raw, alpha=0.85, window=10, mu=1e-4, k=10):
    s = [raw[0]]
    for v in raw[1:]:
        s.append(alpha * s[-1] + (1 - alpha) * v)
    converged = None
    for m in range(2, len(s) + 1):
        w = min(window, m - 1)
        c = sum(abs(s[j - 1] - s[j - 2]) for j in range(m - w + 1, m + 1)) / w
        if c <= mu:
            converged = m
            break
    if converged is None:
        return None
    e0 = 1
    for m in range(1, len(raw) + 1):
        if raw[m - 1] > raw[e0 - 1]:
            e0 = m
    logs = [math.log(v) for v in s]
    drop = lambda m: abs(logs[m - 1] - logs[e0 - 1])
    g = drop(converged)
    dg = g / k
    markers, prev = [], e0
    for step in range(1, k):
        hit = next(m for m in range(prev + 1, converged) if drop(m) >= step * dg)
        markers.append(hit)
        prev = hit
    markers.append(converged)
    return {"baseline_epoch": e0, "convergence_epoch": converged, "markers": markers}


if __name__ == "__main__":
    raw = exp_decay()
    write_csv("exp_decay.csv", raw)
    write_csv("flat.csv", [0.5] * 40)
    expected = {"defaults": analyze(raw), "k2": analyze(raw, k=2)}
    with open("exp_decay.expected.json", "w") as f:
        json.dump(expected, f, indent=2)
        f.write("\n")
