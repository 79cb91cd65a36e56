"""Flat ``key = value`` run configuration.

Lines starting with ``#`` are comments. Recognised keys::

    allowlist          comma-separated class ids (default: the seven static classes)
    eps                DBSCAN radius, metres
    min_pts            DBSCAN core threshold, points (self included)
    min_cluster_size   clusters smaller than this are dropped
    eps.<class>        per-class radius override
    min_pts.<class>    per-class core threshold override
    ransac_iterations  RANSAC hypotheses per registration
    inlier_tol         inlier residual bound, metres
    min_inliers        fewest inliers accepted as a registration
    ransac_early_exit  stop RANSAC once 99.9 % confident (true/false)
    tau                place-recognition decision threshold on the score
    pos_radius         positive pair distance bound, metres
    neg_radius         negative pair distance bound, metres
    frame_gap          pairs need an index gap strictly above this
    neg_ratio          negatives sampled per positive
    pose_frame_gap     index gap for pose-evaluation pairs
    out_dir            default output directory for ``evaluate``
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .clustering import ClusteringParams
from .registration import RansacParams
from .skitti_io import STATIC_CLASSES


class ConfigError(ValueError):
    pass


def _bool(v: str) -> bool:
    v = v.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _classes(v: str) -> frozenset:
    return frozenset(int(x) for x in v.replace(",", " ").split())


@dataclass(frozen=True)
class Config:
    allowlist: frozenset = STATIC_CLASSES
    eps: float = 1.0
    min_pts: int = 5
    min_cluster_size: int = 10
    class_eps: dict = field(default_factory=dict)
    class_min_pts: dict = field(default_factory=dict)
    ransac_iterations: int = 10_000
    inlier_tol: float = 1.0
    min_inliers: int = 3
    ransac_early_exit: bool = False
    tau: float | None = None
    pos_radius: float = 3.0
    neg_radius: float = 20.0
    frame_gap: int = 50
    neg_ratio: int = 100
    pose_frame_gap: int = 0
    out_dir: str | None = None

    def __post_init__(self):
        try:
            self.clustering()
            self.ransac()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not 0 < self.pos_radius < self.neg_radius:
            raise ConfigError("need 0 < pos_radius < neg_radius")
        if self.frame_gap < 0 or self.pose_frame_gap < 0 or self.neg_ratio < 0:
            raise ConfigError("frame gaps and neg_ratio must be nonnegative")

    def clustering(self) -> ClusteringParams:
        return ClusteringParams(self.eps, self.min_pts, self.min_cluster_size,
                                dict(self.class_eps), dict(self.class_min_pts))

    def ransac(self, seed: int = 0) -> RansacParams:
        return RansacParams(self.ransac_iterations, self.inlier_tol, self.min_inliers,
                            seed, self.ransac_early_exit)

    def with_values(self, values: dict) -> "Config":
        """Copy with ``key -> string value`` overrides applied."""
        fields = {f.name: f for f in dataclasses.fields(self)}
        changes: dict = {}
        class_eps = dict(self.class_eps)
        class_min_pts = dict(self.class_min_pts)
        for key, raw in values.items():
            name, _, cls = key.partition(".")
            try:
                if cls:
                    if name == "eps":
                        class_eps[int(cls)] = float(raw)
                    elif name == "min_pts":
                        class_min_pts[int(cls)] = int(raw)
                    else:
                        raise ConfigError(f"unknown key {key!r}")
                    continue
                if name not in fields or name in ("class_eps", "class_min_pts"):
                    raise ConfigError(f"unknown key {key!r}")
                current = getattr(type(self)(), name) if name != "tau" else None
                if name == "allowlist":
                    changes[name] = _classes(raw)
                elif name == "tau":
                    changes[name] = None if raw.strip().lower() in ("", "none") else float(raw)
                elif name == "out_dir":
                    changes[name] = raw.strip() or None
                elif isinstance(current, bool):
                    changes[name] = _bool(raw)
                elif isinstance(current, int):
                    changes[name] = int(raw)
                else:
                    changes[name] = float(raw)
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"bad value for {key!r}: {raw!r}") from None
        changes.update(class_eps=class_eps, class_min_pts=class_min_pts)
        return dataclasses.replace(self, **changes)


def parse_config(text: str, source: str = "<config>") -> dict:
    values = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{source}:{n}: expected 'key = value'")
        values[key.strip()] = value.strip()
    return values


def load_config(path=None, overrides: dict | None = None) -> Config:
    cfg = Config()
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        cfg = cfg.with_values(parse_config(text, str(path)))
    if overrides:
        cfg = cfg.with_values(overrides)
    return cfg
