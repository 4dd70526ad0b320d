"""Dataset manifests, per-sequence CSV files and synthetic gestures.

A manifest is a JSON file::

    {"format_version": 1,
     "topology": {"joint_names": [...], "root_index": 0},
     "entries": [{"path": "a.csv", "label": "wave", "subject": "s1",
                  "name": "a", "sample_rate_hz": 30.0}, ...]}

Each sequence file has one header row naming ``<joint>_x, <joint>_y,
<joint>_z`` columns in topology order, then one row per frame. Numbers are
written with 17 significant digits so values survive a round trip.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, InvalidArgumentError, SchemaError
from .motion import MotionSequence, SkeletonTopology

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"


@dataclass
class ManifestEntry:
    path: str
    label: str
    subject: Optional[str] = None
    name: Optional[str] = None
    sample_rate_hz: float = 30.0
    timestamps: Optional[list] = None


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    topology: SkeletonTopology
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        entries = []
        for e in self.entries:
            d = {"path": e.path, "label": e.label, "subject": e.subject,
                 "name": e.name, "sample_rate_hz": e.sample_rate_hz}
            if e.timestamps is not None:
                d["timestamps"] = list(e.timestamps)
            entries.append(d)
        return {
            "format_version": self.format_version,
            "topology": {"joint_names": list(self.topology.joint_names),
                         "root_index": self.topology.root_index},
            "entries": entries,
        }

    @classmethod
    def from_dict(cls, d: dict, source="manifest") -> "DatasetManifest":
        try:
            topo = SkeletonTopology(tuple(d["topology"]["joint_names"]),
                                    d["topology"].get("root_index"))
            entries = []
            for k, e in enumerate(d["entries"]):
                if not e.get("label"):
                    raise SchemaError(f"{source}: entry {k} has an empty label")
                entries.append(ManifestEntry(
                    path=str(e["path"]), label=str(e["label"]),
                    subject=None if e.get("subject") is None else str(e["subject"]),
                    name=e.get("name"), sample_rate_hz=float(e.get("sample_rate_hz", 30.0)),
                    timestamps=e.get("timestamps")))
            return cls(entries, topo, int(d.get("format_version", FORMAT_VERSION)))
        except SchemaError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{source}: malformed manifest ({exc})") from exc


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: cannot read manifest ({exc})") from exc
    return DatasetManifest.from_dict(raw, source=str(path))


def read_sequence_csv(path, topology: SkeletonTopology) -> np.ndarray:
    path = Path(path)
    expected = topology.column_names()
    rows = []
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise SchemaError(f"{path}: cannot open sequence file ({exc})") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: missing header row")
        header = [h.strip() for h in header]
        if header != expected:
            raise SchemaError(
                f"{path}: header has {len(header)} columns, expected {len(expected)} "
                f"named {expected[:3]}...")
        for row_no, row in enumerate(reader, start=1):
            if len(row) != len(expected):
                raise SchemaError(
                    f"{path}: row {row_no} has {len(row)} columns, expected {len(expected)}")
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise DataError(f"{path}: row {row_no}: {exc}") from exc
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}: row {row_no} contains a non-finite value")
            rows.append(vals)
    if not rows:
        raise SchemaError(f"{path}: no frames")
    return np.asarray(rows, dtype=np.float64)


def write_sequence_csv(path, seq: MotionSequence) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write(",".join(seq.topology.column_names()) + "\n")
        for row in seq.poses:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def load_dataset(manifest_path) -> list[MotionSequence]:
    manifest_path = Path(manifest_path)
    manifest = read_manifest(manifest_path)
    base = manifest_path.parent
    out = []
    for e in manifest.entries:
        poses = read_sequence_csv(base / e.path, manifest.topology)
        try:
            out.append(MotionSequence(manifest.topology, poses, e.label, e.sample_rate_hz,
                                      e.timestamps, e.subject, e.name or Path(e.path).stem))
        except InvalidArgumentError as exc:
            raise SchemaError(f"{base / e.path}: {exc}") from exc
    return out


def save_dataset(seqs: Sequence[MotionSequence], directory,
                 manifest_name: str = MANIFEST_NAME) -> Path:
    """Write one CSV per sequence plus a manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if not seqs:
        raise InvalidArgumentError("cannot infer a topology from an empty dataset")
    topo = seqs[0].topology
    entries = []
    seen = set()
    for i, s in enumerate(seqs):
        if s.topology != topo:
            raise InvalidArgumentError(f"sequence {i} does not share the dataset topology")
        name = s.name or f"seq_{i:05d}"
        if name in seen:
            raise InvalidArgumentError(f"duplicate sequence name {name!r}")
        seen.add(name)
        fname = f"{name}.csv"
        write_sequence_csv(directory / fname, s)
        ts = None if s.timestamps is None else [float(t) for t in s.timestamps]
        entries.append(ManifestEntry(fname, s.label if s.label is not None else "",
                                     s.subject, name, float(s.sample_rate_hz), ts))
    manifest = DatasetManifest(entries, topo)
    path = directory / manifest_name
    path.write_text(json.dumps(manifest.to_dict(), indent=1))
    return path


# ------------------------------------------------------------------ synthetic

@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a warped-prototype gesture dataset.

    Prototypes are scaled to unit RMS, so ``noise_sigma`` and
    ``translation_sigma`` are expressed relative to the signal RMS.
    """

    n_classes: int = 5
    sequences_per_class: int = 20
    length_range: tuple[int, int] = (40, 120)
    pose_dim: int = 12
    warp_intensity: float = 0.6
    noise_sigma: float = 0.05
    seed: int = 0
    translation_sigma: float = 0.1
    n_subjects: int = 1
    sample_rate_hz: float = 30.0
    prototype_resolution: int = 256

    def __post_init__(self):
        lo, hi = self.length_range
        if self.n_classes < 1 or self.sequences_per_class < 1:
            raise InvalidArgumentError("class and sequence counts must be positive")
        if lo < 2 or hi < lo:
            raise InvalidArgumentError(f"invalid length range {self.length_range}")
        if self.pose_dim < 3 or self.pose_dim % 3:
            raise InvalidArgumentError("pose_dim must be a positive multiple of 3")
        if not 0 <= self.warp_intensity <= 1:
            raise InvalidArgumentError("warp_intensity must lie in [0, 1]")
        if self.noise_sigma < 0 or self.translation_sigma < 0:
            raise InvalidArgumentError("noise and translation scales must be >= 0")
        if self.n_subjects < 1 or self.prototype_resolution < 2:
            raise InvalidArgumentError("n_subjects and prototype_resolution must be positive")


def class_prototype(spec: SyntheticSpec, class_index: int) -> np.ndarray:
    """``(prototype_resolution, pose_dim)`` trajectory, three sinusoids per coordinate."""
    rng = np.random.default_rng([spec.seed, class_index, 0])
    u = np.linspace(0.0, 1.0, spec.prototype_resolution)[:, None]
    amp = rng.normal(size=(3, spec.pose_dim))
    freq = rng.uniform(0.5, 2.5, size=(3, spec.pose_dim))
    phase = rng.uniform(0.0, 2 * np.pi, size=(3, spec.pose_dim))
    proto = sum(amp[m] * np.sin(2 * np.pi * freq[m] * u + phase[m]) for m in range(3))
    return proto / np.sqrt(np.mean(proto ** 2))


def monotone_warp(rng: np.random.Generator, T: int, intensity: float) -> np.ndarray:
    """Positions in ``[0, 1]``: normalized cumulative sum of positive increments.

    Log-increments follow two low-frequency sinusoids scaled by ``intensity``,
    so the warp is smooth and ``intensity == 0`` gives uniform spacing.
    """
    u = np.linspace(0.0, 1.0, T - 1)
    b = rng.normal(size=2)
    psi = rng.uniform(0.0, 2 * np.pi, size=2)
    s = b[0] * np.sin(2 * np.pi * u + psi[0]) + b[1] * np.sin(4 * np.pi * u + psi[1])
    inc = np.exp(intensity * s)
    pos = np.concatenate([[0.0], np.cumsum(inc)])
    return pos / pos[-1]


def generate_synthetic(spec: SyntheticSpec) -> list[MotionSequence]:
    topo = SkeletonTopology.generic(spec.pose_dim // 3, root_index=0)
    grid = np.arange(spec.prototype_resolution, dtype=np.float64)
    out = []
    for c in range(spec.n_classes):
        proto = class_prototype(spec, c)
        for i in range(spec.sequences_per_class):
            rng = np.random.default_rng([spec.seed, c, i + 1])
            T = int(rng.integers(spec.length_range[0], spec.length_range[1] + 1))
            pos = monotone_warp(rng, T, spec.warp_intensity) * (spec.prototype_resolution - 1)
            pos[-1] = spec.prototype_resolution - 1
            poses = np.column_stack([np.interp(pos, grid, proto[:, d])
                                     for d in range(spec.pose_dim)])
            shift = rng.normal(scale=spec.translation_sigma, size=3)
            poses = poses + np.tile(shift, spec.pose_dim // 3)
            poses = poses + rng.normal(scale=spec.noise_sigma, size=poses.shape)
            out.append(MotionSequence(
                topo, poses, label=f"class_{c}", sample_rate_hz=spec.sample_rate_hz,
                subject=f"s{i % spec.n_subjects:02d}", name=f"c{c:02d}_i{i:03d}"))
    return out
