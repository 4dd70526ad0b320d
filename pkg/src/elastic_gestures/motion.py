"""Skeletal motion sequences and spatial descriptor extraction.

A pose is a flat vector of ``3 * N`` coordinates laid out as ``(x, y, z)``
per joint in topology order. A sequence stores its poses as a read-only
``(T, 3 * N)`` float64 array.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError, TopologyMismatchError


@dataclass(frozen=True)
class SkeletonTopology:
    joint_names: tuple[str, ...]
    root_index: Optional[int] = 0

    def __post_init__(self):
        names = tuple(str(n) for n in self.joint_names)
        object.__setattr__(self, "joint_names", names)
        if len(names) < 1:
            raise InvalidArgumentError("a topology needs at least one joint")
        if len(set(names)) != len(names):
            raise InvalidArgumentError("joint names must be unique")
        if self.root_index is not None and not 0 <= self.root_index < len(names):
            raise InvalidArgumentError(
                f"root_index {self.root_index} out of range for {len(names)} joints")

    @property
    def joint_count(self) -> int:
        return len(self.joint_names)

    @property
    def pose_dim(self) -> int:
        return 3 * len(self.joint_names)

    def index_of(self, name: str) -> int:
        try:
            return self.joint_names.index(name)
        except ValueError:
            raise TopologyMismatchError(f"unknown joint {name!r}") from None

    def column_names(self) -> list[str]:
        return [f"{j}_{ax}" for j in self.joint_names for ax in "xyz"]

    @classmethod
    def generic(cls, n_joints: int, root_index: Optional[int] = 0) -> "SkeletonTopology":
        return cls(tuple(f"j{i}" for i in range(n_joints)), root_index)


# Kinect v1 joint order, as used by MSRAction3D skeleton files.
KINECT20 = SkeletonTopology((
    "hip_center", "spine", "shoulder_center", "head",
    "shoulder_left", "elbow_left", "wrist_left", "hand_left",
    "shoulder_right", "elbow_right", "wrist_right", "hand_right",
    "hip_left", "knee_left", "ankle_left", "foot_left",
    "hip_right", "knee_right", "ankle_right", "foot_right",
), root_index=0)


@dataclass(frozen=True, eq=False)
class MotionSequence:
    """Variable-length sequence of poses sharing one topology.

    ``timestamps`` is only set once a sequence has been resampled; otherwise
    frame ``t`` is taken at ``t / sample_rate_hz`` seconds.
    """

    topology: SkeletonTopology
    poses: np.ndarray
    label: Optional[str] = None
    sample_rate_hz: float = 30.0
    timestamps: Optional[np.ndarray] = None
    subject: Optional[str] = None
    name: Optional[str] = None

    def __post_init__(self):
        poses = np.array(self.poses, dtype=np.float64)
        if poses.ndim == 1:
            poses = poses[None, :]
        if poses.ndim != 2 or poses.shape[0] < 1:
            raise InvalidArgumentError("a sequence needs at least one pose")
        if poses.shape[1] != self.topology.pose_dim:
            raise TopologyMismatchError(
                f"pose dimension {poses.shape[1]} != 3 * {self.topology.joint_count}")
        if not np.all(np.isfinite(poses)):
            raise InvalidArgumentError("poses must be finite")
        if not self.sample_rate_hz > 0:
            raise InvalidArgumentError("sample_rate_hz must be positive")
        poses.setflags(write=False)
        object.__setattr__(self, "poses", poses)
        if self.timestamps is not None:
            ts = np.array(self.timestamps, dtype=np.float64)
            if ts.shape != (poses.shape[0],):
                raise InvalidArgumentError("one timestamp per pose required")
            if np.any(np.diff(ts) <= 0):
                raise InvalidArgumentError("timestamps must be strictly increasing")
            ts.setflags(write=False)
            object.__setattr__(self, "timestamps", ts)

    def __len__(self) -> int:
        return self.poses.shape[0]

    @property
    def length(self) -> int:
        return self.poses.shape[0]

    @property
    def dim(self) -> int:
        return self.poses.shape[1]

    def times(self) -> np.ndarray:
        if self.timestamps is not None:
            return self.timestamps
        return np.arange(self.length) / self.sample_rate_hz

    def joint_positions(self) -> np.ndarray:
        """Poses reshaped to ``(T, N, 3)``."""
        return self.poses.reshape(self.length, -1, 3)

    def with_poses(self, poses, **changes) -> "MotionSequence":
        return replace(self, poses=poses, **changes)


@dataclass(frozen=True)
class DescriptorSpec:
    selected_joints: tuple[int, ...]
    root_relative: bool = True
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        sel = tuple(int(j) for j in self.selected_joints)
        object.__setattr__(self, "selected_joints", sel)
        if not sel:
            raise InvalidArgumentError("select at least one joint")
        if len(set(sel)) != len(sel):
            raise InvalidArgumentError("selected joints must be unique")

    @property
    def feature_dim(self) -> int:
        return 3 * len(self.selected_joints)

    def validate(self, topology: SkeletonTopology) -> None:
        bad = [j for j in self.selected_joints if not 0 <= j < topology.joint_count]
        if bad:
            raise TopologyMismatchError(
                f"joint indices {bad} out of range for {topology.joint_count} joints")
        if self.root_relative and topology.root_index is None:
            raise TopologyMismatchError("root-relative descriptor needs a root joint")

    @classmethod
    def from_names(cls, topology: SkeletonTopology, names: Sequence[str],
                   root_relative: bool = True, name: str = "custom") -> "DescriptorSpec":
        return cls(tuple(topology.index_of(n) for n in names), root_relative, name)


_EED8 = ("elbow_left", "elbow_right", "hand_left", "hand_right",
         "knee_left", "knee_right", "foot_left", "foot_right")
PRESET_JOINTS = {
    "eed8": _EED8,
    "eed9": _EED8 + ("head",),
}


def preset(name: str, topology: SkeletonTopology) -> DescriptorSpec:
    """Named descriptor recipes.

    ``identity``
        every joint, absolute coordinates.
    ``fbd``
        every joint, root-relative (root coordinates become zero).
    ``eed8`` / ``eed9``
        elbows, hands, knees and feet (24D), plus the head for ``eed9``
        (27D); requires joints with the :data:`KINECT20` names.
    """
    all_joints = tuple(range(topology.joint_count))
    if name == "identity":
        return DescriptorSpec(all_joints, root_relative=False, name=name)
    if name == "fbd":
        return DescriptorSpec(all_joints, root_relative=True, name=name)
    if name in PRESET_JOINTS:
        return DescriptorSpec.from_names(topology, PRESET_JOINTS[name], True, name)
    raise InvalidArgumentError(f"unknown descriptor preset {name!r}")


def extract_descriptor(seq: MotionSequence, spec: DescriptorSpec) -> MotionSequence:
    spec.validate(seq.topology)
    joints = seq.joint_positions()
    sel = np.asarray(spec.selected_joints)
    out = joints[:, sel, :]
    if spec.root_relative:
        out = out - joints[:, seq.topology.root_index, None, :]
    topo = seq.topology
    names = tuple(topo.joint_names[j] for j in spec.selected_joints)
    root = None
    if topo.root_index is not None and topo.root_index in spec.selected_joints:
        root = spec.selected_joints.index(topo.root_index)
    return seq.with_poses(out.reshape(seq.length, -1),
                          topology=SkeletonTopology(names, root))


def compression_ratio(original: MotionSequence, reduced: MotionSequence) -> float:
    """Fraction of scalars removed going from ``original`` to ``reduced``."""
    return 1.0 - (reduced.length * reduced.dim) / (original.length * original.dim)
