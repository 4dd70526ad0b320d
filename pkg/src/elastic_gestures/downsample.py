"""Temporal reduction of motion sequences to a fixed number of poses.

Three planners choose which frames to keep:

* :func:`uniform_plan` spreads the kept frames evenly along the time axis.
* :func:`adaptive_plan_greedy` refines a piecewise-linear approximation top
  down, inserting the frame with the largest reconstruction error, then
  slides each kept frame between its neighbours while the error drops.
* :func:`adaptive_plan_optimal` solves the min-error selection exactly by
  dynamic programming. It is quadratic in the sequence length and meant as an
  oracle for short inputs.

Every planner keeps the first and last frame. Reconstruction error is the RMS
over all frames and coordinates of the residual left by linear interpolation
through the kept frames.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Union

import numba
import numpy as np

from .errors import InvalidArgumentError, InvalidPlanError, OversizedInputError
from .motion import MotionSequence

MODES = ("uniform", "adaptive-greedy", "adaptive-optimal")
DEFAULT_OPTIMAL_CAP = 512
# Relative slack under which two DP costs count as tied.
_TIE_RTOL = 1e-12

ArrayOrSeq = Union[MotionSequence, np.ndarray]


@dataclass(frozen=True)
class DownsamplePlan:
    source_length: int
    indices: tuple[int, ...]
    rms_error: float = 0.0

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        T = self.source_length
        if len(idx) < 1:
            raise InvalidPlanError("a plan keeps at least one frame")
        if idx[0] != 0 or idx[-1] != T - 1:
            raise InvalidPlanError(f"plan must keep frames 0 and {T - 1}, got {idx}")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise InvalidPlanError("plan indices must be strictly increasing")
        if not self.rms_error >= 0:
            raise InvalidPlanError("rms_error must be non-negative")

    @property
    def target_length(self) -> int:
        return len(self.indices)


def _poses(seq: ArrayOrSeq) -> np.ndarray:
    if isinstance(seq, MotionSequence):
        return seq.poses
    arr = np.asarray(seq, dtype=np.float64)
    return arr[:, None] if arr.ndim == 1 else arr


def _check_lengths(T: int, L: int) -> None:
    if L < 2:
        raise InvalidArgumentError(f"target length must be >= 2, got {L}")
    if L > T:
        raise InvalidArgumentError(
            f"target length {L} exceeds sequence length {T}; use resample_to_length")


def _interpolate(poses: np.ndarray, indices) -> np.ndarray:
    idx = np.asarray(indices)
    t = np.arange(poses.shape[0], dtype=np.float64)
    kept = poses[idx]
    return np.column_stack([np.interp(t, idx, kept[:, c]) for c in range(poses.shape[1])])


def reconstruction_rms(seq: ArrayOrSeq, indices) -> float:
    poses = _poses(seq)
    resid = poses - _interpolate(poses, indices)
    return float(np.sqrt(np.mean(resid * resid)))


def uniform_plan(T: int, L: int) -> DownsamplePlan:
    """Evenly spaced frames, ``floor(i * (T - 1) / (L - 1) + 0.5)``.

    The returned plan carries no error; :func:`plan_for` fills it in when a
    sequence is available.
    """
    _check_lengths(T, L)
    idx = np.floor(np.arange(L) * (T - 1) / (L - 1) + 0.5).astype(int)
    return DownsamplePlan(T, tuple(idx))


def _segment_errors(poses, a, b):
    """Pointwise Euclidean residual norms for frames strictly inside (a, b)."""
    t = np.arange(a + 1, b)
    w = ((t - a) / (b - a))[:, None]
    approx = poses[a] + w * (poses[b] - poses[a])
    return np.linalg.norm(poses[a + 1:b] - approx, axis=1)


@numba.njit(cache=True)
def _chord_sse(poses, a, b):
    inv = 1.0 / (b - a)
    s = 0.0
    for t in range(a + 1, b):
        w = (t - a) * inv
        for c in range(poses.shape[1]):
            r = poses[t, c] - (poses[a, c] + w * (poses[b, c] - poses[a, c]))
            s += r * r
    return s


@numba.njit(cache=True)
def _refine(poses, idx, max_passes):
    """Move each interior knot to its best slot between its neighbours.

    Sweeps left to right until no knot moves. A move needs a strict relative
    gain, so the error never increases and the loop terminates.
    """
    idx = idx.copy()
    for _ in range(max_passes):
        moved = False
        for k in range(1, idx.size - 1):
            a, b = idx[k - 1], idx[k + 1]
            best = _chord_sse(poses, a, idx[k]) + _chord_sse(poses, idx[k], b)
            slot = idx[k]
            for p in range(a + 1, b):
                v = _chord_sse(poses, a, p) + _chord_sse(poses, p, b)
                if v < best - _TIE_RTOL * (1.0 + best):
                    best, slot = v, p
            if slot != idx[k]:
                idx[k] = slot
                moved = True
        if not moved:
            break
    return idx


def _insertion_indices(poses: np.ndarray, L: int) -> list[int]:
    T = poses.shape[0]
    kept = {0, T - 1}
    heap = []

    def push(a, b):
        if b - a > 1:
            err = _segment_errors(poses, a, b)
            k = int(np.argmax(err))
            # heap order: largest error first, then earliest frame
            heapq.heappush(heap, (-float(err[k]), a + 1 + k, a, b))

    push(0, T - 1)
    while len(kept) < L:
        _, t, a, b = heapq.heappop(heap)
        kept.add(t)
        push(a, t)
        push(t, b)
    return sorted(kept)


def adaptive_plan_greedy(seq: ArrayOrSeq, L: int, max_passes: int = 100) -> DownsamplePlan:
    """Max-error insertion followed by local knot refinement.

    The uniform grid is refined the same way and kept if it ends up strictly
    better, so the result is never worse than :func:`uniform_plan`.
    """
    poses = _poses(seq)
    T = poses.shape[0]
    _check_lengths(T, L)
    contiguous = np.ascontiguousarray(poses)
    best = None
    for start in (_insertion_indices(poses, L), uniform_plan(T, L).indices):
        idx = _refine(contiguous, np.asarray(start, dtype=np.int64), max_passes).tolist()
        err = reconstruction_rms(poses, idx)
        if best is None or err < best[1]:
            best = (idx, err)
    return DownsamplePlan(T, tuple(best[0]), best[1])


@numba.njit(cache=True)
def _segment_costs(poses):
    """Squared residual of the chord a->b summed over frames strictly inside."""
    T, k = poses.shape
    cost = np.zeros((T, T))
    for a in range(T):
        for b in range(a + 2, T):
            inv = 1.0 / (b - a)
            s = 0.0
            for t in range(a + 1, b):
                w = (t - a) * inv
                for c in range(k):
                    r = poses[t, c] - (poses[a, c] + w * (poses[b, c] - poses[a, c]))
                    s += r * r
            cost[a, b] = s
    return cost


@numba.njit(cache=True)
def _optimal_indices(cost, L, rtol):
    T = cost.shape[0]
    inf = np.inf
    # best[r, i]: min cost from kept frame i to T-1 with r more kept frames
    best = np.full((L, T), inf)
    best[0, T - 1] = 0.0
    for r in range(1, L):
        for i in range(T - 1):
            m = inf
            for j in range(i + 1, T):
                if best[r - 1, j] < inf:
                    v = cost[i, j] + best[r - 1, j]
                    if v < m:
                        m = v
            best[r, i] = m
    out = np.empty(L, dtype=np.int64)
    out[0] = 0
    cur = 0
    for r in range(L - 1, 0, -1):
        target = best[r, cur]
        slack = rtol * (1.0 + abs(target))
        for j in range(cur + 1, T):
            if best[r - 1, j] < inf and cost[cur, j] + best[r - 1, j] <= target + slack:
                cur = j
                break
        out[L - r] = cur
    return out


def adaptive_plan_optimal(seq: ArrayOrSeq, L: int,
                          max_length: int = DEFAULT_OPTIMAL_CAP) -> DownsamplePlan:
    """Exact minimum-error plan; ties go to the lexicographically smallest list."""
    poses = _poses(seq)
    T = poses.shape[0]
    _check_lengths(T, L)
    if T > max_length:
        raise OversizedInputError(
            f"sequence of length {T} exceeds the optimal planner cap {max_length}; "
            "use adaptive_plan_greedy")
    cost = _segment_costs(np.ascontiguousarray(poses))
    idx = _optimal_indices(cost, L, _TIE_RTOL)
    return DownsamplePlan(T, tuple(idx.tolist()), reconstruction_rms(poses, idx))


def plan_for(seq: ArrayOrSeq, L: int, mode: str = "uniform") -> DownsamplePlan:
    """Dispatch on a mode name from :data:`MODES`; the plan's error is always set."""
    poses = _poses(seq)
    if mode == "uniform":
        plan = uniform_plan(poses.shape[0], L)
        return DownsamplePlan(plan.source_length, plan.indices,
                              reconstruction_rms(poses, plan.indices))
    if mode == "adaptive-greedy":
        return adaptive_plan_greedy(poses, L)
    if mode == "adaptive-optimal":
        return adaptive_plan_optimal(poses, L)
    raise InvalidArgumentError(f"unknown down-sampling mode {mode!r}; expected one of {MODES}")


def _check_plan(seq: MotionSequence, plan: DownsamplePlan) -> None:
    if plan.source_length != seq.length:
        raise InvalidPlanError(
            f"plan built for length {plan.source_length}, sequence has {seq.length}")


def apply_plan(seq: MotionSequence, plan: DownsamplePlan) -> MotionSequence:
    _check_plan(seq, plan)
    idx = np.asarray(plan.indices)
    return seq.with_poses(seq.poses[idx], timestamps=seq.times()[idx])


def reconstruct_linear(seq: MotionSequence, plan: DownsamplePlan) -> MotionSequence:
    """Length-T sequence interpolated through the frames ``plan`` keeps."""
    _check_plan(seq, plan)
    return seq.with_poses(_interpolate(seq.poses, plan.indices))


def resample_to_length(seq: MotionSequence, L: int, mode: str = "uniform") -> MotionSequence:
    """Bring ``seq`` to exactly ``L`` poses.

    Shorter sequences are over-sampled by linear interpolation at ``L`` evenly
    spaced fractional positions; longer ones go through the planner ``mode``.
    """
    if L < 2:
        raise InvalidArgumentError(f"target length must be >= 2, got {L}")
    T = seq.length
    if T >= L:
        return apply_plan(seq, plan_for(seq, L, mode))
    pos = np.linspace(0.0, T - 1, L)
    if T == 1:
        poses = np.repeat(seq.poses, L, axis=0)
        times = seq.times()[0] + np.arange(L) / seq.sample_rate_hz
    else:
        t = np.arange(T, dtype=np.float64)
        poses = np.column_stack([np.interp(pos, t, seq.poses[:, c]) for c in range(seq.dim)])
        times = np.interp(pos, t, seq.times())
    return seq.with_poses(poses, timestamps=times)
