"""Recovery datasets: record types, line-oriented persistence, downsampling.

A dataset file is plain text with one JSON object per line: a header carrying
metadata followed by one line per record.  Floats are serialized with their
shortest round-trip representation, so read(write(ds)) reproduces every
numeric field bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import SystemState

FORMAT_NAME = "recovery-dataset"
FORMAT_VERSION = 1


class DatasetFormatError(ValueError):
    pass


@dataclass(eq=False)
class RecoveryRecord:
    """One recovery experiment: initial state, safety label, trajectory."""

    x0: SystemState
    label: int
    trajectory: np.ndarray          # (T, 12), fixed dt, trajectory[0] == x0
    source: str = "sim"             # "sim" or "real"

    def __post_init__(self):
        self.trajectory = np.asarray(self.trajectory, dtype=np.float64)
        if self.trajectory.ndim != 2 or self.trajectory.shape[1] != 12:
            raise ValueError("trajectory must have shape (T, 12)")
        if self.trajectory.shape[0] == 0:
            raise ValueError("trajectory must be non-empty")
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")
        if self.source not in ("sim", "real"):
            raise ValueError("source must be 'sim' or 'real'")
        if not np.array_equal(self.trajectory[0], self.x0.as_array()):
            raise ValueError("trajectory[0] must equal x0")

    def __eq__(self, other):
        if not isinstance(other, RecoveryRecord):
            return NotImplemented
        return (self.label == other.label and self.source == other.source
                and self.x0 == other.x0
                and np.array_equal(self.trajectory, other.trajectory))


@dataclass(eq=False)
class Dataset:
    records: list[RecoveryRecord]
    meta: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.records)

    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=np.int64)

    def states(self) -> np.ndarray:
        return np.stack([r.x0.as_array() for r in self.records]) if self.records \
            else np.empty((0, 12))

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.meta == other.meta and self.records == other.records


def write_dataset(ds: Dataset, path) -> None:
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "k": ds.k,
        "meta": ds.meta,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True, allow_nan=False) + "\n")
        for rec in ds.records:
            line = json.dumps({
                "label": rec.label,
                "source": rec.source,
                "traj": [list(row) for row in rec.trajectory],
            }, allow_nan=False)
            fh.write(line + "\n")


def read_dataset(path) -> Dataset:
    path = Path(path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetFormatError("line 1: missing header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"line 1: malformed header ({exc.msg})") from exc
    if header.get("format") != FORMAT_NAME:
        raise DatasetFormatError("line 1: not a recovery dataset file")
    if header.get("version") != FORMAT_VERSION:
        raise DatasetFormatError(
            f"line 1: unsupported version {header.get('version')!r}, expected {FORMAT_VERSION}")

    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            traj = np.asarray(obj["traj"], dtype=np.float64)
            rec = RecoveryRecord(x0=SystemState.from_array(traj[0]),
                                 label=int(obj["label"]),
                                 trajectory=traj,
                                 source=obj["source"])
        except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
            raise DatasetFormatError(f"line {lineno}: malformed record ({exc})") from exc
        records.append(rec)
    if len(records) != header["k"]:
        raise DatasetFormatError(
            f"header declares {header['k']} records, file holds {len(records)}")
    return Dataset(records=records, meta=header.get("meta", {}))


def downsample_trajectory(traj: np.ndarray, target_len: int) -> np.ndarray:
    """Uniform index subsampling keeping the first and last samples.

    Index i of the output maps to round(i*(T-1)/(L-1)) of the input (nearest,
    ties up).  Trajectories already at or below the target length are
    returned unchanged.
    """
    traj = np.asarray(traj)
    if traj.shape[0] == 0:
        raise ValueError("trajectory must be non-empty")
    if target_len < 2:
        raise ValueError("target_len must be at least 2")
    t = traj.shape[0]
    if t <= target_len:
        return traj
    idx = np.floor(np.arange(target_len) * (t - 1) / (target_len - 1) + 0.5).astype(np.int64)
    return traj[idx]


def downsampled_stack(ds: Dataset, target_len: int) -> list[np.ndarray]:
    return [downsample_trajectory(r.trajectory, target_len) for r in ds.records]
