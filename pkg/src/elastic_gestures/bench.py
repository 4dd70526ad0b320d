"""Single-sequence classification latency as a function of sequence length."""

from __future__ import annotations

import time
from typing import Sequence

import numpy as np

from . import kernels as kern
from .svm import predict, train
from .validation import canonical_order, nu_scale, prepare

MIN_CONFIDENT_REPS = 30
LATENCY_COLUMNS = ("kernel", "L", "n_train", "repetitions", "mean_ms", "median_of_means_ms",
                   "min_ms", "low_confidence")


def median_of_means(samples: np.ndarray, blocks: int = 5) -> float:
    samples = np.asarray(samples, dtype=np.float64)
    blocks = max(1, min(blocks, samples.size))
    return float(np.median([b.mean() for b in np.array_split(samples, blocks)]))


def fit_loglog_slope(L_values, latencies) -> float:
    slope, _ = np.polyfit(np.log(np.asarray(L_values, float)),
                          np.log(np.asarray(latencies, float)), 1)
    return float(slope)


def classifier_call(model, query, train_data, kernel_id, params, bounds):
    """Zero-argument callable that classifies ``query`` once."""
    packed = kern.pack(train_data)

    def once():
        cross = kern.gram_cross([query], packed, kernel_id, params, bounds, workers=1)
        return predict(model, cross).labels[0]

    return once


def time_interleaved(calls: Sequence, repetitions: int) -> np.ndarray:
    """Seconds per call, shape ``(len(calls), repetitions)``.

    Each call is warmed up once, then the repetitions visit the calls round
    robin so that slow spells on a shared machine hit every case alike.
    """
    for c in calls:
        c()
    out = np.empty((len(calls), repetitions))
    for r in range(repetitions):
        for k, c in enumerate(calls):
            t0 = time.perf_counter()
            c()
            out[k, r] = time.perf_counter() - t0
    return out


def bench_latency(seqs: Sequence, kernel_ids: Sequence[str], L_grid: Sequence[int],
                  repetitions: int = MIN_CONFIDENT_REPS, descriptor="identity",
                  mode: str = "adaptive-greedy", nu: float = 0.1, alpha: float = 1.0,
                  C: float = 10.0, n_train=None) -> list[dict]:
    """Train on ``n_train`` sequences and time the classification of one more.

    The query is a sequence the model has not seen; the whole training set
    enters the cross row, as it would for a freshly captured gesture.
    """
    seqs = canonical_order(seqs)
    if n_train is None:
        n_train = len(seqs) - 1
    rng = np.random.default_rng(0)
    order = rng.permutation(len(seqs))
    train_seqs = [seqs[i] for i in order[:n_train]]
    query_seq = seqs[order[n_train]]
    labels = [s.label for s in train_seqs]
    cases, calls = [], []
    for L in L_grid:
        data = prepare(train_seqs, descriptor, mode, L)
        query = prepare([query_seq], descriptor, mode, L)[0]
        for kid in kernel_ids:
            params = kern.KernelParams(nu * nu_scale(data, kid), None, alpha)
            g = kern.gram(data, kid, params)
            model = train(g, labels, C)
            cases.append((kid, L))
            calls.append(classifier_call(model, query, data, kid, params, g.norm_bounds))
    samples = time_interleaved(calls, repetitions)
    rows = []
    for (kid, L), s in zip(cases, samples):
        rows.append({
            "kernel": kid, "L": L, "n_train": n_train, "repetitions": repetitions,
            "mean_ms": 1e3 * float(s.mean()),
            "median_of_means_ms": 1e3 * median_of_means(s),
            "min_ms": 1e3 * float(s.min()),
            "low_confidence": repetitions < MIN_CONFIDENT_REPS,
        })
    return rows
