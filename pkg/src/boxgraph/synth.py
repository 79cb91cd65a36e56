"""Synthetic semantic graphs with known ground truth.

Stands in for labelled LiDAR data when checking matching, registration and
the evaluation protocol end to end.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .graph import SemanticGraph
from .registration import RigidTransform
from .skitti_io import STATIC_CLASSES

CLASSES = tuple(sorted(STATIC_CLASSES))


def _classes(n_classes: int) -> np.ndarray:
    if not 1 <= n_classes <= len(CLASSES):
        raise ValueError(f"n_classes must lie in [1, {len(CLASSES)}]")
    return np.array(CLASSES[:n_classes])


def random_vertices(rng: np.random.Generator, n: int, n_classes: int = 7,
                    extent=(40.0, 40.0, 4.0), feature_range=(0.3, 10.0)):
    """Centroids uniform in a box centred at the origin, uniform classes and extents."""
    ext = np.broadcast_to(np.asarray(extent, dtype=np.float64), (3,))
    centroids = (rng.random((n, 3)) - 0.5) * ext
    labels = rng.choice(_classes(n_classes), size=n)
    features = rng.uniform(feature_range[0], feature_range[1], size=(n, 3))
    return centroids, labels, features


def synth_scene(seed: int, n_vertices: int = 60, n_classes: int = 7,
                extent=(40.0, 40.0, 4.0), feature_range=(0.3, 10.0),
                scan_id: str = "") -> SemanticGraph:
    if n_vertices < 3:
        raise ValueError("n_vertices must be >= 3")
    if np.any(np.asarray(extent) <= 0) or not 0 <= feature_range[0] < feature_range[1]:
        raise ValueError("extent and feature range must be positive")
    rng = np.random.default_rng(seed)
    return SemanticGraph(*random_vertices(rng, n_vertices, n_classes, extent, feature_range),
                         scan_id=scan_id)


def random_transform(rng: np.random.Generator, max_translation: float = 20.0,
                     yaw_only: bool = False) -> RigidTransform:
    if yaw_only:
        R = Rotation.from_euler("z", rng.uniform(-np.pi, np.pi)).as_matrix()
    else:
        R = Rotation.random(random_state=rng).as_matrix()
    return RigidTransform(R, rng.uniform(-max_translation, max_translation, size=3))


def synth_pair(seed: int, n_vertices: int = 60, noise_centroid: float = 0.0,
               noise_feature: float = 0.0, dropout: float = 0.0, distractors: float = 0.0,
               outliers: float = 0.0, n_classes: int = 7, extent=(40.0, 40.0, 4.0),
               feature_range=(0.3, 10.0), max_translation: float = 20.0,
               yaw_only: bool = False):
    """Return ``(g_s, g_m, T)`` where ``g_m`` is ``g_s`` seen through ``T``.

    The map graph receives Gaussian centroid noise (metres, per axis) and
    feature noise (metres, clipped at 0), loses a ``dropout`` fraction of
    vertices, has an ``outliers`` fraction of surviving centroids displaced by
    5-20 m, and gains ``distractors * n_vertices`` unrelated vertices. Map
    vertex order is shuffled.
    """
    for name, rate in (("dropout", dropout), ("distractors", distractors), ("outliers", outliers)):
        if not 0 <= rate <= 1:
            raise ValueError(f"{name} must lie in [0, 1]")
    g_s = synth_scene(seed, n_vertices, n_classes, extent, feature_range)
    rng = np.random.default_rng([seed, 1])
    T = random_transform(rng, max_translation, yaw_only)

    keep = np.flatnonzero(rng.random(n_vertices) >= dropout)
    if len(keep) == 0:
        raise ValueError("every vertex was dropped")
    c = T.apply(g_s.centroids[keep]) + rng.normal(0.0, noise_centroid, size=(len(keep), 3))
    f = np.maximum(g_s.features[keep] + rng.normal(0.0, noise_feature, size=(len(keep), 3)), 0.0)
    lab = g_s.labels[keep]

    n_out = int(round(outliers * len(keep)))
    if n_out:
        which = rng.choice(len(keep), size=n_out, replace=False)
        d = rng.normal(size=(n_out, 3))
        d *= rng.uniform(5.0, 20.0, size=(n_out, 1)) / np.linalg.norm(d, axis=1, keepdims=True)
        c[which] += d

    n_dis = int(round(distractors * n_vertices))
    if n_dis:
        dc, dl, df = random_vertices(rng, n_dis, n_classes, extent, feature_range)
        c = np.concatenate([c, T.apply(dc)])
        lab = np.concatenate([lab, dl])
        f = np.concatenate([f, df])

    perm = rng.permutation(len(lab))
    return g_s, SemanticGraph(c[perm], lab[perm], f[perm]), T


@dataclass(frozen=True)
class LoopDataset:
    graphs: list[SemanticGraph]
    poses: list[RigidTransform]  # world <- sensor, one per scan


def synth_loop(seed: int, n_scans: int = 200, first_lap: int = 170, step: float = 2.0,
               lateral_offset: float = 0.5, sensor_range: float = 10.0, density: float = 0.2,
               noise_centroid: float = 0.1, noise_feature: float = 0.05, dropout: float = 0.2,
               distractors: float = 0.2, n_classes: int = 7,
               feature_range=(0.3, 10.0)) -> LoopDataset:
    """A circular drive of ``first_lap`` scans followed by a partial second lap.

    Objects are scattered in a band around the circle; each scan sees those
    within ``sensor_range`` (horizontal), expressed in the sensor frame with
    heading along the path. Revisits are offset by half a step along the path
    and ``lateral_offset`` sideways.
    """
    if n_scans < 1 or not 1 <= first_lap <= n_scans:
        raise ValueError("need 1 <= first_lap <= n_scans")
    if step <= 0 or sensor_range <= 0 or density <= 0:
        raise ValueError("step, sensor_range and density must be positive")
    rng = np.random.default_rng(seed)
    radius = first_lap * step / (2 * np.pi)

    band = sensor_range + 2.0
    r_in, r_out = max(radius - band, 0.0), radius + band
    n_obj = rng.poisson(density * np.pi * (r_out**2 - r_in**2))
    rad = np.sqrt(rng.uniform(r_in**2, r_out**2, size=n_obj))
    ang = rng.uniform(0, 2 * np.pi, size=n_obj)
    world = np.c_[rad * np.cos(ang), rad * np.sin(ang), rng.uniform(0.0, 4.0, size=n_obj)]
    labels = rng.choice(_classes(n_classes), size=n_obj)
    feats = rng.uniform(feature_range[0], feature_range[1], size=(n_obj, 3))

    poses = []
    for k in range(n_scans):
        if k < first_lap:
            arc, r = k * step, radius
        else:
            arc, r = (k - first_lap) * step + step / 2, radius + lateral_offset
        th = arc / radius
        R = Rotation.from_euler("z", th + np.pi / 2).as_matrix()
        poses.append(RigidTransform(R, [r * np.cos(th), r * np.sin(th), 0.0]))

    graphs = []
    for k, T in enumerate(poses):
        local = T.inverse().apply(world)
        vis = np.flatnonzero((np.hypot(local[:, 0], local[:, 1]) <= sensor_range)
                             & (rng.random(n_obj) >= dropout))
        c = local[vis] + rng.normal(0.0, noise_centroid, size=(len(vis), 3))
        f = np.maximum(feats[vis] + rng.normal(0.0, noise_feature, size=(len(vis), 3)), 0.0)
        lab = labels[vis]
        n_dis = int(round(distractors * len(vis)))
        if n_dis:
            rr = sensor_range * np.sqrt(rng.random(n_dis))
            aa = rng.uniform(0, 2 * np.pi, size=n_dis)
            dc = np.c_[rr * np.cos(aa), rr * np.sin(aa), rng.uniform(0.0, 4.0, size=n_dis)]
            c = np.concatenate([c, dc])
            lab = np.concatenate([lab, rng.choice(_classes(n_classes), size=n_dis)])
            f = np.concatenate([f, rng.uniform(feature_range[0], feature_range[1], size=(n_dis, 3))])
        perm = rng.permutation(len(lab))
        graphs.append(SemanticGraph(c[perm], lab[perm], f[perm], scan_id=f"{k:06d}"))
    return LoopDataset(graphs, poses)
