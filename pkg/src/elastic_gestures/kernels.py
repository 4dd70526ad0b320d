"""Elastic distances and kernels over pose sequences, and Gram assembly.

Every kernel is evaluated as a log value internally, which keeps the
regularized DTW kernel usable when its raw value underflows double precision.

Stiffness follows a single convention: ``nu = 1 / (2 * sigma**2)``.

Regularized DTW (``rdtw``) is the sum of two recursions over the alignment
table. ``xy`` sums every monotone alignment path, weighting each visited cell by
``exp(-nu * |x_p - y_q|^2) / 3``. ``xx`` follows the same moves but only charges
index-matched local terms, so it requires sequences of equal length. Cells on
the zero row/column are 0 except the origin, which is 1, and every cell uses
the factor 1/3 including the boundary ones. In the ``xx`` diagonal move the
Kronecker factor restricts it to ``p == q``, where ``|x_p - y_q|`` and
``|x_p - y_p|`` coincide. An optional Sakoe-Chiba corridor zeroes the weight of
predecessor cells with ``|p - q| > radius``.
"""

from __future__ import annotations

import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numba
import numpy as np

from .errors import (DegenerateNormalizationError, FixedLengthRequiredError,
                     InvalidArgumentError, KernelDomainError, SchemaError)
from .motion import MotionSequence

KERNEL_IDS = ("euclid_rbf", "dtw_rbf", "rdtw", "rdtw_normalized")
_KIND = {"euclid_rbf": 0, "dtw_rbf": 1, "rdtw": 2, "rdtw_normalized": 2}
_TINY = 1e-300

GRAM_MAGIC = b"EGKGRAM1"


@dataclass(frozen=True)
class KernelParams:
    nu: float = 1.0
    corridor_radius: Optional[int] = None
    alpha: float = 1.0

    def __post_init__(self):
        if not self.nu > 0:
            raise InvalidArgumentError(f"nu must be positive, got {self.nu}")
        if not self.alpha > 0:
            raise InvalidArgumentError(f"alpha must be positive, got {self.alpha}")
        if self.corridor_radius is not None and self.corridor_radius < 0:
            raise InvalidArgumentError("corridor_radius must be non-negative")

    @property
    def _radius(self) -> int:
        return -1 if self.corridor_radius is None else int(self.corridor_radius)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "KernelParams":
        return cls(nu=float(d["nu"]), corridor_radius=d.get("corridor_radius"),
                   alpha=float(d.get("alpha", 1.0)))


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """Square kernel matrix with the recipe that produced it.

    ``log_values`` is kept for ``rdtw`` so normalization never sees entries
    that underflowed to zero.
    """

    values: np.ndarray
    kernel_id: str
    params: KernelParams
    norm_bounds: Optional[tuple[float, float]] = None
    log_values: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class CrossGram:
    """Rectangular ``test x train`` kernel matrix for prediction."""

    values: np.ndarray
    kernel_id: str
    params: KernelParams
    norm_bounds: Optional[tuple[float, float]] = None


# ---------------------------------------------------------------- numba core

@numba.njit(cache=True, nogil=True)
def _sqdist(x, i, y, j):
    s = 0.0
    for c in range(x.shape[1]):
        d = x[i, c] - y[j, c]
        s += d * d
    return s


@numba.njit(cache=True, nogil=True)
def _dtw(x, y, radius):
    n, m = x.shape[0], y.shape[0]
    D = np.full((n + 1, m + 1), np.inf)
    D[0, 0] = 0.0
    for p in range(1, n + 1):
        for q in range(1, m + 1):
            if radius >= 0 and abs(p - q) > radius:
                continue
            best = min(D[p - 1, q], D[p - 1, q - 1], D[p, q - 1])
            D[p, q] = _sqdist(x, p - 1, y, q - 1) + best
    return D[n, m]


@numba.njit(cache=True, nogil=True)
def _euclid_sum(x, y):
    s = 0.0
    for t in range(x.shape[0]):
        s += _sqdist(x, t, y, t)
    return s


@numba.njit(cache=True, nogil=True)
def _h(p, q, radius):
    if radius < 0 or abs(p - q) <= radius:
        return 1.0
    return 0.0


@numba.njit(cache=True, nogil=True)
def _rdtw_direct_buf(x, y, nu, radius, work):
    """Linear-domain recursion; ``ok`` is False when a cell drops below 1e-300.

    Only two rows of each table are live, so ``work`` (shape ``(5, n + 1)``
    or larger) holds the diagonal terms and the rolling rows. Reusing it
    across pairs keeps allocation out of the inner loop.
    """
    n = x.shape[0]
    third = 1.0 / 3.0
    diag, xy0, xy1, xx0, xx1 = work[0], work[1], work[2], work[3], work[4]
    for p in range(1, n + 1):
        diag[p] = math.exp(-nu * _sqdist(x, p - 1, y, p - 1))
    for q in range(n + 1):
        xy0[q] = 0.0
        xx0[q] = 0.0
    xy0[0] = 1.0
    xx0[0] = 1.0
    ok = True
    for p in range(1, n + 1):
        xy1[0] = 0.0
        xx1[0] = 0.0
        for q in range(1, n + 1):
            local = math.exp(-nu * _sqdist(x, p - 1, y, q - 1))
            a = _h(p - 1, q, radius)
            b = _h(p - 1, q - 1, radius)
            c = _h(p, q - 1, radius)
            vxy = third * local * (a * xy0[q] + b * xy0[q - 1] + c * xy1[q - 1])
            vxx = a * xx0[q] * diag[p] + c * xx1[q - 1] * diag[q]
            if p == q:
                vxx += _h(p, q, radius) * xx0[q - 1] * local
            vxx *= third
            xy1[q] = vxy
            xx1[q] = vxx
            if radius < 0 or abs(p - q) <= radius:
                if vxy < _TINY or vxx < _TINY:
                    ok = False
        xy0, xy1 = xy1, xy0
        xx0, xx1 = xx1, xx0
    return xy0[n], xx0[n], ok


@numba.njit(cache=True, nogil=True)
def _rdtw_direct(x, y, nu, radius):
    return _rdtw_direct_buf(x, y, nu, radius, np.empty((5, x.shape[0] + 1)))


@numba.njit(cache=True, nogil=True)
def _lse3(a, b, c):
    m = max(a, max(b, c))
    if m == -np.inf:
        return -np.inf
    return m + math.log(math.exp(a - m) + math.exp(b - m) + math.exp(c - m))


@numba.njit(cache=True, nogil=True)
def _rdtw_logdomain(x, y, nu, radius):
    n = x.shape[0]
    log3 = math.log(3.0)
    ninf = -np.inf
    ldiag = np.empty(n + 1)
    for p in range(1, n + 1):
        ldiag[p] = -nu * _sqdist(x, p - 1, y, p - 1)
    lxy = np.full((n + 1, n + 1), ninf)
    lxx = np.full((n + 1, n + 1), ninf)
    lxy[0, 0] = 0.0
    lxx[0, 0] = 0.0
    for p in range(1, n + 1):
        for q in range(1, n + 1):
            llocal = -nu * _sqdist(x, p - 1, y, q - 1)
            a = lxy[p - 1, q] if _h(p - 1, q, radius) > 0 else ninf
            b = lxy[p - 1, q - 1] if _h(p - 1, q - 1, radius) > 0 else ninf
            c = lxy[p, q - 1] if _h(p, q - 1, radius) > 0 else ninf
            lxy[p, q] = llocal - log3 + _lse3(a, b, c)
            a = lxx[p - 1, q] + ldiag[p] if _h(p - 1, q, radius) > 0 else ninf
            c = lxx[p, q - 1] + ldiag[q] if _h(p, q - 1, radius) > 0 else ninf
            b = ninf
            if p == q and _h(p, q, radius) > 0:
                b = lxx[p - 1, q - 1] + llocal
            lxx[p, q] = _lse3(a, b, c) - log3
    return lxy[n, n], lxx[n, n]


@numba.njit(cache=True, nogil=True)
def _logaddexp(a, b):
    m = max(a, b)
    if m == -np.inf:
        return -np.inf
    return m + math.log(math.exp(a - m) + math.exp(b - m))


@numba.njit(cache=True, nogil=True)
def _rdtw_log(x, y, nu, radius, work):
    kxy, kxx, ok = _rdtw_direct_buf(x, y, nu, radius, work)
    if ok:
        return math.log(kxy + kxx)
    lxy, lxx = _rdtw_logdomain(x, y, nu, radius)
    return _logaddexp(lxy, lxx)


@numba.njit(cache=True, nogil=True)
def _log_kernel(kind, x, y, nu, radius, work):
    if kind == 0:
        return -nu * _euclid_sum(x, y)
    if kind == 1:
        return -nu * _dtw(x, y, radius)
    return _rdtw_log(x, y, nu, radius, work)


@numba.njit(cache=True, nogil=True)
def _fill_rows(kind, da, oa, db, ob, rows, symmetric, nu, radius, out):
    longest = 0
    for j in range(oa.shape[0] - 1):
        longest = max(longest, oa[j + 1] - oa[j])
    work = np.empty((5, longest + 1))
    for r in range(rows.shape[0]):
        i = rows[r]
        x = da[oa[i]:oa[i + 1]]
        start = i if symmetric else 0
        for j in range(start, ob.shape[0] - 1):
            out[i, j] = _log_kernel(kind, x, db[ob[j]:ob[j + 1]], nu, radius, work)


# ------------------------------------------------------------- single pairs

def _as_poses(x) -> np.ndarray:
    if isinstance(x, MotionSequence):
        return x.poses
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def _check_pair(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise InvalidArgumentError("sequences must be non-empty")
    if x.shape[1] != y.shape[1]:
        raise InvalidArgumentError(
            f"pose dimension mismatch: {x.shape[1]} vs {y.shape[1]}")


def _check_equal_length(x: np.ndarray, y: np.ndarray, what: str) -> None:
    if x.shape[0] != y.shape[0]:
        raise FixedLengthRequiredError(
            f"{what} needs equal-length sequences, got {x.shape[0]} and {y.shape[0]}")


def euclidean_sq(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"pose dimension mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.dot(d, d))


def dtw_distance(X, Y, corridor_radius: Optional[int] = None) -> float:
    """DTW with squared Euclidean local cost.

    Returns ``inf`` when the corridor admits no path (length gap wider than
    the radius).
    """
    x, y = _as_poses(X), _as_poses(Y)
    _check_pair(x, y)
    r = -1 if corridor_radius is None else int(corridor_radius)
    return float(_dtw(x, y, r))


def dtw_rbf(X, Y, params: KernelParams) -> float:
    return math.exp(-params.nu * dtw_distance(X, Y, params.corridor_radius))


def euclid_rbf_kernel(X, Y, params: KernelParams) -> float:
    x, y = _as_poses(X), _as_poses(Y)
    _check_pair(x, y)
    _check_equal_length(x, y, "euclid_rbf")
    return math.exp(-params.nu * float(_euclid_sum(x, y)))


def rdtw_log_kernel(X, Y, params: KernelParams) -> float:
    x, y = _as_poses(X), _as_poses(Y)
    _check_pair(x, y)
    _check_equal_length(x, y, "rdtw")
    return float(_rdtw_log(x, y, params.nu, params._radius, np.empty((5, x.shape[0] + 1))))


def rdtw_terms(X, Y, params: KernelParams) -> tuple[float, float]:
    """The two recursion terms ``(xy, xx)`` as log values."""
    x, y = _as_poses(X), _as_poses(Y)
    _check_pair(x, y)
    _check_equal_length(x, y, "rdtw")
    lxy, lxx = _rdtw_logdomain(x, y, params.nu, params._radius)
    return float(lxy), float(lxx)


def rdtw_kernel(X, Y, params: KernelParams) -> float:
    return math.exp(rdtw_log_kernel(X, Y, params))


# ---------------------------------------------------------------- matrices

@dataclass(frozen=True, eq=False)
class PackedSequences:
    """Sequences concatenated into one array with row offsets.

    Packing a training set once spares the copy on every
    :func:`gram_cross` call, which dominates latency for short sequences.
    """

    data: np.ndarray
    offsets: np.ndarray

    def __len__(self) -> int:
        return len(self.offsets) - 1

    def __getitem__(self, i) -> np.ndarray:
        return self.data[self.offsets[i]:self.offsets[i + 1]]

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def pack(seqs) -> PackedSequences:
    if isinstance(seqs, PackedSequences):
        return seqs
    return PackedSequences(*_stack(seqs))


def _stack(seqs) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(seqs, PackedSequences):
        return seqs.data, seqs.offsets
    arrs = [_as_poses(s) for s in seqs]
    offsets = np.zeros(len(arrs) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([a.shape[0] for a in arrs])
    if not arrs:
        return np.zeros((0, 1)), offsets
    return np.ascontiguousarray(np.concatenate(arrs, axis=0)), offsets


def _validate_set(arrs, kernel_id, ref=None, offset=0):
    """Raise with the indices of the first offending pair."""
    if kernel_id not in KERNEL_IDS:
        raise InvalidArgumentError(f"unknown kernel {kernel_id!r}; expected one of {KERNEL_IDS}")
    ref = arrs[0] if ref is None and arrs else ref
    for i, a in enumerate(arrs):
        if a.shape[0] == 0:
            raise InvalidArgumentError(f"sequence {i + offset} is empty")
        if a.shape[1] != ref.shape[1]:
            raise InvalidArgumentError(
                f"pair ({i + offset}, 0): pose dimension {a.shape[1]} != {ref.shape[1]}")
        if _KIND[kernel_id] != 1 and a.shape[0] != ref.shape[0]:
            raise FixedLengthRequiredError(
                f"pair ({i + offset}, 0): {kernel_id} needs equal-length sequences, "
                f"got {a.shape[0]} and {ref.shape[0]}")


def _log_matrix(seqs_a, seqs_b, kernel_id, params, symmetric, workers):
    da, oa = _stack(seqs_a)
    db, ob = _stack(seqs_b)
    na, nb = len(oa) - 1, len(ob) - 1
    out = np.zeros((na, nb))
    if na == 0 or nb == 0:
        return out
    kind = _KIND[kernel_id]
    rows = np.arange(na, dtype=np.int64)
    workers = max(1, int(workers))
    if workers == 1:
        _fill_rows(kind, da, oa, db, ob, rows, symmetric, params.nu, params._radius, out)
    else:
        # interleaved rows balance the shrinking upper-triangle work
        chunks = [rows[w::workers] for w in range(workers)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_fill_rows, kind, da, oa, db, ob, c, symmetric,
                                   params.nu, params._radius, out) for c in chunks if len(c)]
            for f in futures:
                f.result()
    if symmetric:
        iu = np.triu_indices(na, 1)
        out[iu[1], iu[0]] = out[iu]
    return out


def _bounds_from_logs(logs: np.ndarray) -> tuple[float, float]:
    if not np.all(np.isfinite(logs)):
        raise KernelDomainError("normalization needs strictly positive kernel values")
    lo, hi = float(np.min(logs)), float(np.max(logs))
    if hi == lo:
        raise DegenerateNormalizationError(
            "all training kernel values are equal; normalization is undefined")
    return lo, hi


def _apply_bounds(logs: np.ndarray, bounds, alpha: float) -> np.ndarray:
    lo, hi = bounds
    return np.exp(alpha * (logs - lo) / (hi - lo))


def normalize_kernel(gram_train: GramMatrix) -> GramMatrix:
    """Rescale an ``rdtw`` Gram into ``[1, e^alpha]`` using its own extremes.

    The log-extremes are stored in ``norm_bounds`` so that cross matrices can
    be mapped with the same affine-in-log transform.
    """
    if gram_train.kernel_id != "rdtw":
        raise InvalidArgumentError(
            f"normalization applies to rdtw Grams, got {gram_train.kernel_id}")
    if gram_train.log_values is not None:
        logs = gram_train.log_values
    else:
        if np.any(gram_train.values <= 0):
            raise KernelDomainError("normalization needs strictly positive kernel values")
        logs = np.log(gram_train.values)
    bounds = _bounds_from_logs(logs)
    values = _apply_bounds(logs, bounds, gram_train.params.alpha)
    return GramMatrix(values, "rdtw_normalized", gram_train.params, bounds)


def gram(seqs: Sequence, kernel_id: str, params: KernelParams, workers: int = 1) -> GramMatrix:
    """Symmetric Gram matrix; only the upper triangle is evaluated.

    The result does not depend on ``workers``: every entry is computed by the
    same compiled routine, whichever thread owns its row.
    """
    arrs = [_as_poses(s) for s in seqs]
    _validate_set(arrs, kernel_id)
    logs = _log_matrix(arrs, arrs, kernel_id, params, True, workers)
    if kernel_id in ("rdtw", "rdtw_normalized"):
        raw = GramMatrix(np.exp(logs), "rdtw", params, log_values=logs)
        return normalize_kernel(raw) if kernel_id == "rdtw_normalized" else raw
    return GramMatrix(np.exp(logs), kernel_id, params)


def log_gram(seqs: Sequence, kernel_id: str, params: KernelParams, workers: int = 1) -> np.ndarray:
    """Log-kernel matrix without normalization, for callers slicing it per split."""
    arrs = [_as_poses(s) for s in seqs]
    _validate_set(arrs, kernel_id)
    return _log_matrix(arrs, arrs, kernel_id, params, True, workers)


def gram_cross(test_seqs: Sequence, train_seqs: Sequence, kernel_id: str,
               params: KernelParams, norm_bounds=None, workers: int = 1) -> CrossGram:
    """Kernel values between test rows and training columns.

    For ``rdtw_normalized`` the training bounds are applied as-is; values
    outside ``[1, e^alpha]`` are kept, not clipped.
    """
    if kernel_id == "rdtw_normalized" and norm_bounds is None:
        raise InvalidArgumentError("rdtw_normalized cross kernels need the training norm_bounds")
    if isinstance(train_seqs, PackedSequences):
        train, ref = train_seqs, (train_seqs[0] if len(train_seqs) else None)
    else:
        train = [_as_poses(s) for s in train_seqs]
        _validate_set(train, kernel_id)
        ref = train[0] if train else None
    test = [_as_poses(s) for s in test_seqs]
    if ref is not None:
        _validate_set(test, kernel_id, ref=ref)
    logs = _log_matrix(test, train, kernel_id, params, False, workers)
    if kernel_id == "rdtw_normalized":
        norm_bounds = (float(norm_bounds[0]), float(norm_bounds[1]))
        return CrossGram(_apply_bounds(logs, norm_bounds, params.alpha), kernel_id, params,
                         norm_bounds)
    return CrossGram(np.exp(logs), kernel_id, params, None)


# ----------------------------------------------------------- serialization

def _header(g) -> dict:
    return {
        "matrix": "cross" if isinstance(g, CrossGram) else "gram",
        "kernel_id": g.kernel_id,
        "params": g.params.to_dict(),
        "norm_bounds": None if g.norm_bounds is None else list(g.norm_bounds),
        "shape": list(g.values.shape),
        "dtype": "<f8",
        "order": "C",
    }


def save_gram(g, path) -> None:
    """Binary layout: magic, uint64 header length, JSON header, row-major <f8 data."""
    head = json.dumps(_header(g), sort_keys=True).encode("utf-8")
    data = np.ascontiguousarray(g.values, dtype="<f8").tobytes()
    Path(path).write_bytes(GRAM_MAGIC + struct.pack("<Q", len(head)) + head + data)


def load_gram(path):
    raw = Path(path).read_bytes()
    if raw[:8] != GRAM_MAGIC:
        raise SchemaError(f"{path}: not a Gram file")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    head = json.loads(raw[16:16 + hlen].decode("utf-8"))
    shape = tuple(head["shape"])
    values = np.frombuffer(raw[16 + hlen:], dtype="<f8").reshape(shape).astype(np.float64)
    params = KernelParams.from_dict(head["params"])
    bounds = None if head["norm_bounds"] is None else tuple(head["norm_bounds"])
    if head.get("matrix") == "gram":
        return GramMatrix(values, head["kernel_id"], params, bounds)
    return CrossGram(values, head["kernel_id"], params, bounds)


def save_gram_csv(g, path) -> None:
    np.savetxt(path, g.values, delimiter=",", fmt="%.17g")
