"""Soft-margin SVM over precomputed kernels.

Binary problems are solved in the dual by SMO with maximal-violating-pair
working-set selection (no shrinking, no caching tricks). Multiclass models
combine one binary machine per class pair and predict by majority vote.

The solver tolerates indefinite Gram matrices such as ``dtw_rbf``: a
non-positive curvature along the chosen pair is replaced by a tiny positive
constant, and iterations are capped by a budget of kernel lookups. The
returned iterate is always feasible; ``converged`` says whether the KKT gap
closed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Optional, Sequence

import numba
import numpy as np

from .errors import DegenerateTrainingError, InvalidArgumentError, ProvenanceMismatchError
from .kernels import CrossGram, GramMatrix, KernelParams

DEFAULT_MAX_LOOKUPS = 10 ** 7
_TAU = 1e-12
MODEL_FORMAT_VERSION = 1


@numba.njit(cache=True)
def _smo(K, y, C, tol, max_iter):
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    converged = False
    while True:
        i = -1
        gmax = -np.inf
        j = -1
        gmin = np.inf
        for t in range(n):
            v = -y[t] * G[t]
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                if v > gmax:
                    gmax = v
                    i = t
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                if v < gmin:
                    gmin = v
                    j = t
        if i < 0 or j < 0 or gmax - gmin < tol:
            converged = True
            break
        if it >= max_iter:
            break
        it += 1
        old_i = alpha[i]
        old_j = alpha[j]
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0:
            quad = _TAU
        if y[i] != y[j]:
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            delta = (G[i] - G[j]) / quad
            s = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if s > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = s - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = s
            if s > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = s - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = s
        di = alpha[i] - old_i
        dj = alpha[j] - old_j
        for t in range(n):
            G[t] += y[t] * (y[i] * K[t, i] * di + y[j] * K[t, j] * dj)
    # offset from free vectors, or the midpoint of the feasible interval
    ub = np.inf
    lb = -np.inf
    sfree = 0.0
    nfree = 0
    for t in range(n):
        yg = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            nfree += 1
            sfree += yg
    rho = sfree / nfree if nfree > 0 else 0.5 * (ub + lb)
    objective = 0.5 * np.dot(alpha, G - 1.0)
    return alpha, rho, objective, converged, it


@dataclass
class BinaryDual:
    """Dual solution of one binary problem.

    ``support_indices`` index rows of the Gram the machine was trained on (or
    of the full multiclass training set when built through :func:`train`).
    """

    support_indices: np.ndarray
    alphas: np.ndarray
    labels: np.ndarray
    bias: float
    C: float
    converged: bool = True
    iterations: int = 0
    objective: float = 0.0

    def decision(self, cross_values: np.ndarray) -> np.ndarray:
        """``sum_i alpha_i y_i K(x, x_i) + bias`` for each row of ``cross_values``."""
        coef = self.alphas * self.labels
        return cross_values[:, self.support_indices] @ coef + self.bias


def _as_array(gram) -> np.ndarray:
    return np.ascontiguousarray(gram.values if isinstance(gram, GramMatrix) else gram,
                                dtype=np.float64)


def train_binary(gram, labels, C: float = 1.0, tol: float = 1e-3,
                 max_kernel_lookups: int = DEFAULT_MAX_LOOKUPS) -> BinaryDual:
    K = _as_array(gram)
    y = np.asarray(labels, dtype=np.float64)
    n = y.shape[0]
    if K.shape != (n, n):
        raise InvalidArgumentError(f"Gram of shape {K.shape} does not match {n} labels")
    if not np.all(np.abs(y) == 1):
        raise InvalidArgumentError("binary labels must be +1 or -1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise DegenerateTrainingError("both classes must be present to train")
    if not C > 0 or not tol > 0:
        raise InvalidArgumentError("C and tol must be positive")
    max_iter = max(1, int(max_kernel_lookups) // (2 * n))
    alpha, rho, obj, conv, it = _smo(K, y, float(C), float(tol), max_iter)
    sv = np.flatnonzero(alpha > 0)
    return BinaryDual(sv, alpha[sv], y[sv], -float(rho), float(C), bool(conv), int(it),
                      float(obj))


def dual_objective(gram, labels, dual: BinaryDual) -> float:
    """Minimization form ``0.5 a'Qa - sum(a)`` with ``Q = yy' * K``."""
    K = _as_array(gram)
    a = np.zeros(len(labels))
    a[dual.support_indices] = dual.alphas
    ya = a * np.asarray(labels, dtype=np.float64)
    return float(0.5 * ya @ K @ ya - a.sum())


@dataclass
class SvmModel:
    class_labels: list
    pairwise: list[tuple[tuple, BinaryDual]]
    kernel_id: str
    params: KernelParams
    norm_bounds: Optional[tuple[float, float]]
    C: float
    n_train: int
    meta: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return all(d.converged for _, d in self.pairwise)


@dataclass
class Prediction:
    labels: list
    decision_values: np.ndarray  # (m, n_pairs), positive favours the first class
    votes: np.ndarray  # (m, n_classes)


def train(gram: GramMatrix, labels: Sequence, C: float = 1.0, tol: float = 1e-3,
          max_kernel_lookups: int = DEFAULT_MAX_LOOKUPS) -> SvmModel:
    """One-vs-one ensemble over a training Gram."""
    labels = list(labels)
    if len(labels) != gram.n:
        raise InvalidArgumentError(f"{len(labels)} labels for a Gram of order {gram.n}")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise DegenerateTrainingError("at least two classes are needed")
    lab = np.asarray(labels, dtype=object)
    K = _as_array(gram)
    pairwise = []
    for a, b in combinations(classes, 2):
        idx = np.flatnonzero((lab == a) | (lab == b))
        y = np.where(lab[idx] == a, 1.0, -1.0)
        d = train_binary(K[np.ix_(idx, idx)], y, C, tol, max_kernel_lookups)
        d.support_indices = idx[d.support_indices]
        pairwise.append(((a, b), d))
    return SvmModel(classes, pairwise, gram.kernel_id, gram.params, gram.norm_bounds,
                    float(C), gram.n)


def check_provenance(model: SvmModel, cross: CrossGram) -> None:
    problems = []
    if cross.kernel_id != model.kernel_id:
        problems.append(f"kernel {cross.kernel_id} != {model.kernel_id}")
    if cross.params != model.params:
        problems.append(f"params {cross.params} != {model.params}")
    mb = None if model.norm_bounds is None else tuple(map(float, model.norm_bounds))
    cb = None if cross.norm_bounds is None else tuple(map(float, cross.norm_bounds))
    if mb != cb:
        problems.append(f"norm_bounds {cb} != {mb}")
    if cross.values.ndim != 2 or cross.values.shape[1] != model.n_train:
        problems.append(f"cross matrix has shape {cross.values.shape}, "
                        f"expected (*, {model.n_train})")
    if problems:
        raise ProvenanceMismatchError("refusing to predict: " + "; ".join(problems))


def predict(model: SvmModel, cross: CrossGram) -> Prediction:
    """Majority vote over the pairwise machines.

    Ties go to the class with the largest summed ``|decision|`` over the duels
    it won, then to the earlier class in ``model.class_labels``.
    """
    check_provenance(model, cross)
    m = cross.values.shape[0]
    nc = len(model.class_labels)
    pos = {c: i for i, c in enumerate(model.class_labels)}
    dec = np.zeros((m, len(model.pairwise)))
    votes = np.zeros((m, nc), dtype=np.int64)
    strength = np.zeros((m, nc))
    for k, ((a, b), d) in enumerate(model.pairwise):
        f = d.decision(cross.values)
        dec[:, k] = f
        win = np.where(f > 0, pos[a], pos[b])
        np.add.at(votes, (np.arange(m), win), 1)
        np.add.at(strength, (np.arange(m), win), np.abs(f))
    out = []
    for r in range(m):
        top = np.flatnonzero(votes[r] == votes[r].max())
        best = top[np.argmax(strength[r, top])] if len(top) > 1 else top[0]
        out.append(model.class_labels[best])
    return Prediction(out, dec, votes)


def accuracy(predicted: Sequence, truth: Sequence) -> float:
    if len(truth) == 0:
        return float("nan")
    return float(np.mean([p == t for p, t in zip(predicted, truth)]))


# ----------------------------------------------------------- serialization

def model_to_dict(model: SvmModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "kernel_id": model.kernel_id,
        "params": model.params.to_dict(),
        "norm_bounds": None if model.norm_bounds is None else list(model.norm_bounds),
        "C": model.C,
        "class_labels": list(model.class_labels),
        "n_train": model.n_train,
        "meta": model.meta,
        "pairwise": [
            {
                "classes": [a, b],
                "support_indices": d.support_indices.tolist(),
                "alphas": d.alphas.tolist(),
                "labels": d.labels.tolist(),
                "bias": d.bias,
                "converged": d.converged,
                "iterations": d.iterations,
                "objective": d.objective,
            }
            for (a, b), d in model.pairwise
        ],
    }


def model_from_dict(d: dict) -> SvmModel:
    pairwise = []
    for p in d["pairwise"]:
        dual = BinaryDual(np.asarray(p["support_indices"], dtype=np.int64),
                          np.asarray(p["alphas"], dtype=np.float64),
                          np.asarray(p["labels"], dtype=np.float64),
                          float(p["bias"]), float(d["C"]), bool(p["converged"]),
                          int(p["iterations"]), float(p["objective"]))
        pairwise.append((tuple(p["classes"]), dual))
    bounds = None if d["norm_bounds"] is None else tuple(d["norm_bounds"])
    return SvmModel(list(d["class_labels"]), pairwise, d["kernel_id"],
                    KernelParams.from_dict(d["params"]), bounds, float(d["C"]),
                    int(d["n_train"]), dict(d.get("meta", {})))


def save_model(model: SvmModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1, sort_keys=True))


def load_model(path) -> SvmModel:
    return model_from_dict(json.loads(Path(path).read_text()))
