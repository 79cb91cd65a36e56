"""Per-class Euclidean clustering of labelled points with grid-indexed DBSCAN."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numba
import numpy as np

if TYPE_CHECKING:
    from .skitti_io import LabeledCloud

NOISE = -1


@dataclass(frozen=True)
class ClusteringParams:
    eps: float = 1.0
    min_pts: int = 5
    min_cluster_size: int = 10
    # per-class overrides, keyed by semantic class id
    class_eps: dict = field(default_factory=dict)
    class_min_pts: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.eps > 0 or any(not e > 0 for e in self.class_eps.values()):
            raise ValueError("eps must be > 0")
        if self.min_pts < 1 or any(m < 1 for m in self.class_min_pts.values()):
            raise ValueError("min_pts must be >= 1")
        if self.min_cluster_size < 1:
            raise ValueError("min_cluster_size must be >= 1")

    def for_class(self, label: int) -> tuple[float, int]:
        return self.class_eps.get(label, self.eps), self.class_min_pts.get(label, self.min_pts)


@dataclass(frozen=True, eq=False)
class Cluster:
    label: int
    points: np.ndarray

    def __len__(self):
        return len(self.points)

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)


@numba.njit(cache=True)
def _neighbour_cells(cells, keys, span_y, span_z):
    nc = cells.shape[0]
    out = np.full((nc, 27), -1, dtype=np.int64)
    for c in range(nc):
        m = 0
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    k = ((cells[c, 0] + dx) * span_y + cells[c, 1] + dy) * span_z + cells[c, 2] + dz
                    pos = np.searchsorted(keys, k)
                    if pos < nc and keys[pos] == k:
                        out[c, m] = pos
                        m += 1
    return out


@numba.njit(cache=True)
def _dbscan_grid(pts, cell_of, start, members, nbrs, eps, min_pts):
    n = pts.shape[0]
    eps2 = eps * eps
    core = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        cnt = 0
        c = cell_of[i]
        for q in range(27):
            nc = nbrs[c, q]
            if nc < 0:
                break
            for s in range(start[nc], start[nc + 1]):
                j = members[s]
                d0 = pts[i, 0] - pts[j, 0]
                d1 = pts[i, 1] - pts[j, 1]
                d2 = pts[i, 2] - pts[j, 2]
                if d0 * d0 + d1 * d1 + d2 * d2 <= eps2:
                    cnt += 1
                    if cnt >= min_pts:
                        break
            if cnt >= min_pts:
                break
        core[i] = cnt >= min_pts

    labels = np.full(n, -1, dtype=np.int64)
    unclaimed = np.diff(start)
    stack = np.empty(n, dtype=np.int64)
    cluster = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = cluster
        unclaimed[cell_of[i]] -= 1
        top = 0
        stack[top] = i
        top += 1
        while top > 0:
            top -= 1
            p = stack[top]
            c = cell_of[p]
            for q in range(27):
                nc = nbrs[c, q]
                if nc < 0:
                    break
                if unclaimed[nc] == 0:
                    continue
                for s in range(start[nc], start[nc + 1]):
                    j = members[s]
                    if labels[j] != -1:
                        continue
                    d0 = pts[p, 0] - pts[j, 0]
                    d1 = pts[p, 1] - pts[j, 1]
                    d2 = pts[p, 2] - pts[j, 2]
                    if d0 * d0 + d1 * d1 + d2 * d2 <= eps2:
                        labels[j] = cluster
                        unclaimed[nc] -= 1
                        if core[j]:
                            stack[top] = j
                            top += 1
        cluster += 1
    return labels


def dbscan(points, eps: float, min_pts: int) -> np.ndarray:
    """Cluster id per point (NOISE for noise).

    A point is core when at least ``min_pts`` points, itself included, lie
    within ``eps``. Points are visited in lexicographic (x, y, z) order, so a
    border point reachable from several clusters joins the first one found;
    cluster ids are numbered in that order.
    """
    if not eps > 0:
        raise ValueError("eps must be > 0")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    if n == 0:
        return np.empty(0, dtype=np.int64)
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))
    sp = np.ascontiguousarray(pts[order])

    cell = np.floor(sp / eps).astype(np.int64)
    cell -= cell.min(axis=0) - 1  # one cell of margin so neighbour keys stay in range
    span = cell.max(axis=0) + 2
    if np.prod(span.astype(np.float64)) >= 2.0**62:
        raise ValueError("point extent too large for the grid index at this eps")
    key = (cell[:, 0] * span[1] + cell[:, 1]) * span[2] + cell[:, 2]
    keys, first, cell_of = np.unique(key, return_index=True, return_inverse=True)
    cell_of = cell_of.reshape(-1)
    members = np.argsort(cell_of, kind="stable")
    start = np.searchsorted(cell_of[members], np.arange(len(keys) + 1))
    nbrs = _neighbour_cells(cell[first], keys, span[1], span[2])

    sorted_labels = _dbscan_grid(sp, cell_of, start, members, nbrs, float(eps), int(min_pts))
    labels = np.empty(n, dtype=np.int64)
    labels[order] = sorted_labels
    return labels


def cluster_by_class(cloud: "LabeledCloud", params: ClusteringParams = ClusteringParams()) -> list[Cluster]:
    """Same-class DBSCAN clusters, sorted by class id then centroid."""
    out = []
    for label in np.unique(cloud.labels):
        pts = cloud.points[cloud.labels == label]
        eps, min_pts = params.for_class(int(label))
        ids = dbscan(pts, eps, min_pts)
        found = []
        for cid in range(ids.max() + 1 if len(ids) else 0):
            member = pts[ids == cid]
            if len(member) >= params.min_cluster_size:
                found.append(Cluster(int(label), member))
        found.sort(key=lambda c: tuple(c.centroid))
        out.extend(found)
    return out
