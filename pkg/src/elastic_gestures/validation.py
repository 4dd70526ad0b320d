"""Train/test splits, preprocessing pipelines and grid cross-validation.

Sequences are always put in name order before anything else happens, so
results depend on which sequences are in a split, never on where they sat in
the input list.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from . import kernels as kern
from .downsample import resample_to_length
from .errors import InvalidArgumentError, InvalidSplitError
from .motion import DescriptorSpec, MotionSequence, extract_descriptor, preset
from .svm import accuracy, predict, train

DEFAULT_C_GRID = (0.1, 1.0, 10.0, 100.0)
DEFAULT_NU_GRID = (0.01, 0.1, 1.0, 10.0)
DEFAULT_L_GRID = (5, 10, 15, 20, 25, 30)


@dataclass(frozen=True)
class SplitSpec:
    """How to partition a dataset.

    ``kfold``
        stratified folds over sequences.
    ``group``
        every choice of ``n_train_groups`` subjects for training, the rest
        for testing (10 subjects, 5 for training: 252 splits).
    ``explicit``
        one split from ``train_subjects`` / ``test_subjects``.
    """

    kind: str = "kfold"
    n_folds: int = 5
    n_train_groups: Optional[int] = None
    seed: int = 0
    train_subjects: tuple = ()
    test_subjects: tuple = ()

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSpec":
        return cls(kind=d.get("kind", "kfold"), n_folds=int(d.get("n_folds", 5)),
                   n_train_groups=d.get("n_train_groups"), seed=int(d.get("seed", 0)),
                   train_subjects=tuple(d.get("train_subjects", ())),
                   test_subjects=tuple(d.get("test_subjects", ())))


@dataclass(frozen=True)
class Split:
    name: str
    train: np.ndarray
    test: np.ndarray


def canonical_order(seqs: Sequence[MotionSequence]) -> list[MotionSequence]:
    names = [s.name for s in seqs]
    if any(n is None for n in names) or len(set(names)) != len(names):
        raise InvalidArgumentError("cross-validation needs unique sequence names")
    return sorted(seqs, key=lambda s: s.name)


def _kfold(labels, n_folds, seed) -> list[Split]:
    if n_folds < 2:
        raise InvalidArgumentError("k-fold needs at least 2 folds")
    fold = np.empty(len(labels), dtype=np.int64)
    rng = np.random.default_rng(seed)
    lab = np.asarray(labels, dtype=object)
    offset = 0
    for c in sorted(set(labels)):
        members = rng.permutation(np.flatnonzero(lab == c))
        # continue the round-robin across classes so small classes spread out
        fold[members] = (offset + np.arange(len(members))) % n_folds
        offset += len(members)
    out = []
    for f in range(n_folds):
        test = np.flatnonzero(fold == f)
        out.append(Split(f"fold{f}", np.flatnonzero(fold != f), test))
    return out


def check_group_split(seqs, train_idx, test_idx) -> None:
    tr = {seqs[i].subject for i in train_idx}
    te = {seqs[i].subject for i in test_idx}
    shared = tr & te
    if shared:
        raise InvalidSplitError(f"subjects {sorted(shared)} appear in both partitions")


def make_splits(seqs: Sequence[MotionSequence], spec: SplitSpec) -> list[Split]:
    """Splits over ``seqs`` as given; callers pass the canonical order."""
    if spec.kind == "kfold":
        return _kfold([s.label for s in seqs], spec.n_folds, spec.seed)
    subjects = [s.subject for s in seqs]
    if any(not s for s in subjects):
        raise InvalidSplitError("group splits need a subject id on every sequence")
    subj = np.asarray(subjects, dtype=object)
    if spec.kind == "group":
        groups = sorted(set(subjects))
        n_train = spec.n_train_groups or len(groups) // 2
        if not 0 < n_train < len(groups):
            raise InvalidSplitError(f"cannot train on {n_train} of {len(groups)} subjects")
        out = []
        for combo in combinations(groups, n_train):
            mask = np.isin(subj, combo)
            out.append(Split("+".join(combo), np.flatnonzero(mask), np.flatnonzero(~mask)))
        return out
    if spec.kind == "explicit":
        train_idx = np.flatnonzero(np.isin(subj, spec.train_subjects))
        test_idx = np.flatnonzero(np.isin(subj, spec.test_subjects))
        check_group_split(seqs, train_idx, test_idx)
        return [Split("+".join(spec.train_subjects), train_idx, test_idx)]
    raise InvalidArgumentError(f"unknown split kind {spec.kind!r}")


# ---------------------------------------------------------------- pipelines

def resolve_descriptor(desc: Union[str, DescriptorSpec], seq: MotionSequence) -> DescriptorSpec:
    return preset(desc, seq.topology) if isinstance(desc, str) else desc


def prepare(seqs: Sequence[MotionSequence], descriptor: Union[str, DescriptorSpec],
            mode: str, L: int) -> list[MotionSequence]:
    """Descriptor extraction followed by resampling to exactly ``L`` poses."""
    out = []
    for s in seqs:
        spec = resolve_descriptor(descriptor, s)
        out.append(resample_to_length(extract_descriptor(s, spec), L, mode))
    return out


def nu_scale(seqs: Sequence, kernel_id: str) -> float:
    """Reciprocal of the mean squared distance between the objects the kernel compares.

    For ``rdtw`` those are individual poses; for the other kernels, whole
    sequences flattened to vectors. The mean runs over all ordered pairs
    (self-pairs included) and uses the closed form ``2 (E|x|^2 - |E x|^2)``.
    """
    arrs = [kern._as_poses(s) for s in seqs]
    if kern._KIND[kernel_id] == 2:
        X = np.concatenate(arrs, axis=0)
    else:
        X = np.stack([a.ravel() for a in arrs])
    mean_sq = 2.0 * (np.mean(np.sum(X * X, axis=1)) - np.sum(X.mean(axis=0) ** 2))
    if not mean_sq > 0:
        return 1.0
    return float(1.0 / mean_sq)


def _normalized(logs, train_idx, alpha):
    bounds = kern._bounds_from_logs(logs[np.ix_(train_idx, train_idx)])
    return kern._apply_bounds(logs, bounds, alpha), bounds


def evaluate_split(logs: np.ndarray, labels: Sequence, split: Split, kernel_id: str,
                   params: kern.KernelParams, C: float, tol: float = 1e-3):
    """Train on ``split.train`` and score both partitions from a full log Gram.

    Returns ``(train_accuracy, test_accuracy, converged)``.
    """
    lab = np.asarray(labels, dtype=object)
    bounds = None
    if kernel_id == "rdtw_normalized":
        K, bounds = _normalized(logs, split.train, params.alpha)
    else:
        K = np.exp(logs)
    tr, te = split.train, split.test
    g = kern.GramMatrix(K[np.ix_(tr, tr)], kernel_id, params, bounds)
    model = train(g, lab[tr].tolist(), C, tol)
    acc = []
    for rows in (tr, te):
        cross = kern.CrossGram(K[np.ix_(rows, tr)], kernel_id, params, bounds)
        acc.append(accuracy(predict(model, cross).labels, lab[rows].tolist()))
    return acc[0], acc[1], model.converged


def _base_kernel(kernel_id: str) -> str:
    return "rdtw" if kernel_id == "rdtw_normalized" else kernel_id


@dataclass
class CVReport:
    rows: list[dict] = field(default_factory=list)

    COLUMNS = ("descriptor", "mode", "L", "kernel", "nu", "nu_effective", "alpha", "C",
               "split", "n_train", "n_test", "train_acc", "test_acc", "converged")
    CONFIG = ("descriptor", "mode", "L", "kernel", "nu", "nu_effective", "alpha", "C")

    def summary(self) -> list[dict]:
        """Mean and (population) standard deviation per configuration."""
        groups: dict = {}
        for r in self.rows:
            groups.setdefault(tuple(r[c] for c in self.CONFIG), []).append(r)
        out = []
        for key, rs in groups.items():
            tr = np.array([r["train_acc"] for r in rs])
            te = np.array([r["test_acc"] for r in rs])
            row = dict(zip(self.CONFIG, key))
            row.update(n_splits=len(rs), train_mean=float(tr.mean()), train_std=float(tr.std()),
                       test_mean=float(te.mean()), test_std=float(te.std()))
            out.append(row)
        return out

    def to_csv(self) -> str:
        return rows_to_csv(self.rows, self.COLUMNS)

    def summary_csv(self) -> str:
        cols = self.CONFIG + ("n_splits", "train_mean", "train_std", "test_mean", "test_std")
        return rows_to_csv(self.summary(), cols)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def rows_to_csv(rows: Iterable[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def _descriptor_name(d) -> str:
    return d if isinstance(d, str) else d.name


def cross_validate(seqs: Sequence[MotionSequence], split_spec: SplitSpec,
                   kernel_grid: Sequence[tuple], C_grid: Sequence[float] = DEFAULT_C_GRID,
                   L_grid: Sequence[int] = (15,), descriptors: Sequence = ("identity",),
                   modes: Sequence[str] = ("adaptive-greedy",), nu_relative: bool = True,
                   corridor_radius: Optional[int] = None, workers: int = 1,
                   tol: float = 1e-3) -> CVReport:
    """Evaluate every (descriptor, mode, L, kernel, nu, alpha, C) on every split.

    ``kernel_grid`` holds ``(kernel_id, nu, alpha)`` triples. With
    ``nu_relative`` the stiffness is multiplied by :func:`nu_scale` of the
    preprocessed dataset, which uses no labels. The full Gram is computed
    once per kernel setting and sliced per split; normalization bounds come
    from the training block only.
    """
    seqs = canonical_order(seqs)
    labels = [s.label for s in seqs]
    splits = make_splits(seqs, split_spec)
    report = CVReport()
    for desc in descriptors:
        for mode in modes:
            for L in L_grid:
                data = prepare(seqs, desc, mode, L)
                for kernel_id, nu, alpha in kernel_grid:
                    scale = nu_scale(data, kernel_id) if nu_relative else 1.0
                    params = kern.KernelParams(nu * scale, corridor_radius, alpha)
                    logs = kern.log_gram(data, _base_kernel(kernel_id), params, workers)
                    for C in C_grid:
                        for sp in splits:
                            tr_acc, te_acc, conv = evaluate_split(
                                logs, labels, sp, kernel_id, params, C, tol)
                            report.rows.append({
                                "descriptor": _descriptor_name(desc), "mode": mode, "L": L,
                                "kernel": kernel_id, "nu": float(nu),
                                "nu_effective": params.nu, "alpha": float(alpha),
                                "C": float(C), "split": sp.name, "n_train": len(sp.train),
                                "n_test": len(sp.test), "train_acc": tr_acc,
                                "test_acc": te_acc, "converged": conv,
                            })
    return report


def nested_cross_validate(seqs: Sequence[MotionSequence], split_spec: SplitSpec,
                          kernel_id: str, nu_grid: Sequence[float] = DEFAULT_NU_GRID,
                          C_grid: Sequence[float] = DEFAULT_C_GRID, alpha: float = 1.0,
                          inner_folds: int = 3, corridor_radius: Optional[int] = None,
                          workers: int = 1, tol: float = 1e-3) -> list[dict]:
    """Outer-split accuracy with (nu, C) picked by inner k-fold CV on each training part.

    ``seqs`` must already be preprocessed to a common length. The inner
    selection maximizes mean inner test accuracy; ties keep the earliest grid
    point (nu first, then C).
    """
    seqs = canonical_order(seqs)
    labels = [s.label for s in seqs]
    lab = np.asarray(labels, dtype=object)
    scale = nu_scale(seqs, kernel_id)
    logs_by_nu = {}
    for nu in nu_grid:
        params = kern.KernelParams(nu * scale, corridor_radius, alpha)
        logs_by_nu[nu] = (params, kern.log_gram(seqs, _base_kernel(kernel_id), params, workers))
    rows = []
    for sp in make_splits(seqs, split_spec):
        inner = _kfold(lab[sp.train].tolist(), inner_folds, split_spec.seed)
        inner = [Split(s.name, sp.train[s.train], sp.train[s.test]) for s in inner]
        best = None
        for nu in nu_grid:
            params, logs = logs_by_nu[nu]
            for C in C_grid:
                score = np.mean([evaluate_split(logs, labels, s, kernel_id, params, C, tol)[1]
                                 for s in inner])
                if best is None or score > best[0]:
                    best = (score, nu, C)
        _, nu, C = best
        params, logs = logs_by_nu[nu]
        tr_acc, te_acc, conv = evaluate_split(logs, labels, sp, kernel_id, params, C, tol)
        rows.append({"kernel": kernel_id, "split": sp.name, "nu": float(nu),
                     "nu_effective": params.nu, "alpha": float(alpha), "C": float(C),
                     "inner_acc": float(best[0]), "train_acc": tr_acc, "test_acc": te_acc,
                     "converged": conv})
    return rows
