"""Readers for SemanticKITTI scans, labels, odometry poses and calibration."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .registration import RigidTransform, nearest_rotation

log = logging.getLogger(__name__)

# SemanticKITTI ids of sidewalk, building, fence, vegetation, trunk, pole, traffic-sign
STATIC_CLASSES = frozenset({48, 50, 51, 70, 71, 80, 81})


class MalformedFileError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LabeledCloud:
    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        l = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if len(p) != len(l):
            raise ValueError(f"{len(p)} points but {len(l)} labels")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "labels", l)

    def __len__(self):
        return len(self.labels)


@dataclass(frozen=True)
class PoseRecord:
    index: int
    transform: RigidTransform  # world <- sensor


def _read_words(path, dtype, size: int) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) % size:
        raise MalformedFileError(f"{path}: {len(data)} bytes is not a multiple of {size}")
    return np.frombuffer(data, dtype=dtype)


def read_point_cloud(path) -> np.ndarray:
    """(n, 3) float32 positions from a velodyne ``.bin`` file; intensity dropped."""
    return _read_words(path, "<f4", 16).reshape(-1, 4)[:, :3].copy()


def write_point_cloud(path, points, intensity=None) -> None:
    pts = np.asarray(points, dtype="<f4").reshape(-1, 3)
    rec = np.zeros((len(pts), 4), dtype="<f4")
    rec[:, :3] = pts
    if intensity is not None:
        rec[:, 3] = intensity
    Path(path).write_bytes(rec.tobytes())


def read_labels(path) -> np.ndarray:
    """Semantic class per point: lower 16 bits of each u32 word."""
    return (_read_words(path, "<u4", 4) & 0xFFFF).astype(np.int64)


def write_labels(path, labels, instances=None) -> None:
    words = np.asarray(labels, dtype="<u4") & 0xFFFF
    if instances is not None:
        words = words | (np.asarray(instances, dtype="<u4") << 16)
    Path(path).write_bytes(words.astype("<u4").tobytes())


def attach_and_filter(points, labels, allowlist=STATIC_CLASSES) -> LabeledCloud:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if len(points) != len(labels):
        raise ValueError(f"{len(points)} points but {len(labels)} labels")
    keep = np.isin(labels, np.fromiter(allowlist, dtype=np.int64, count=len(allowlist)))
    return LabeledCloud(points[keep], labels[keep])


def _parse_row(fields, where: str) -> RigidTransform:
    if len(fields) != 12:
        raise MalformedFileError(f"{where}: expected 12 values, got {len(fields)}")
    try:
        m = np.array([float(v) for v in fields]).reshape(3, 4)
    except ValueError as exc:
        raise MalformedFileError(f"{where}: {exc}") from None
    R = m[:, :3]
    err = np.abs(R.T @ R - np.eye(3)).max()
    if err > 1e-3 or np.linalg.det(R) < 0:
        log.warning("%s: rotation off SO(3) by %.3g, projecting to nearest rotation", where, err)
    if err > 1e-9 or np.linalg.det(R) < 0:
        R = nearest_rotation(R)
    return RigidTransform(R, m[:, 3])


def read_calibration(path) -> RigidTransform:
    """The ``Tr`` (velodyne -> camera) entry of a KITTI ``calib.txt``."""
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        key, _, rest = line.partition(":") if ":" in line else line.partition(" ")
        if key.strip() == "Tr":
            return _parse_row(rest.split(), f"{path}:{n}")
    raise MalformedFileError(f"{path}: no Tr entry")


def read_poses(path, calibration: RigidTransform | None = None) -> list[PoseRecord]:
    """KITTI odometry poses, one row-major 3x4 matrix per line.

    With a calibration ``C`` each pose ``P`` becomes ``C^-1 P C``, i.e. the
    camera-frame trajectory re-expressed in the sensor frame.
    """
    out = []
    lines = [l for l in Path(path).read_text().splitlines() if l.strip()]
    for n, line in enumerate(lines):
        T = _parse_row(line.split(), f"{path}:{n + 1}")
        if calibration is not None:
            T = calibration.inverse() @ T @ calibration
        out.append(PoseRecord(n, T))
    return out


def format_pose(T: RigidTransform) -> str:
    return " ".join(repr(float(v)) for v in T.as_matrix()[:3].reshape(-1))


def write_poses(path, transforms) -> None:
    Path(path).write_text("".join(format_pose(T) + "\n" for T in transforms))


def load_scan(scan_path, label_path, allowlist=STATIC_CLASSES) -> LabeledCloud:
    return attach_and_filter(read_point_cloud(scan_path), read_labels(label_path), allowlist)
