"""Slow, obviously-correct reference implementations used as test oracles."""
from __future__ import annotations

import itertools

import numpy as np


def brute_dbscan(points, eps, min_pts):
    """Textbook DBSCAN over a full distance matrix, visiting points in (x, y, z) order."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    order = sorted(range(n), key=lambda i: tuple(pts[i]))
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    neigh = [np.flatnonzero(d2[i] <= eps * eps) for i in range(n)]
    core = [len(neigh[i]) >= min_pts for i in range(n)]
    labels = [-1] * n
    cluster = 0
    for i in order:
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = cluster
        queue = [i]
        while queue:
            p = queue.pop()
            for j in neigh[p]:
                if labels[j] == -1:
                    labels[j] = cluster
                    if core[j]:
                        queue.append(j)
        cluster += 1
    return np.array(labels)


def as_partition(labels):
    """Set of frozensets of member indices; noise (-1) excluded."""
    groups = {}
    for i, l in enumerate(labels):
        if l >= 0:
            groups.setdefault(l, set()).add(i)
    return {frozenset(g) for g in groups.values()}


def brute_assignment_total(sim: np.ndarray) -> float:
    """Best total over all injections of the smaller side into the larger."""
    r, c = sim.shape
    if r > c:
        sim, r, c = sim.T, c, r
    if r == 0:
        return 0.0
    cols = np.array(list(itertools.permutations(range(c), r)))
    return float(sim[np.arange(r), cols].sum(axis=1).max())


def sigma_v(fa, fb):
    d = 0.0
    for a, b in zip(fa, fb):
        m = max(a, b)
        d += 0.0 if m == 0 else abs(a - b) / m
    return float(np.exp(-d / 3))


def brute_pr_aggregates(scores, positives, beta):
    """Threshold sweep written out pair by pair."""
    scores = list(map(float, scores))
    positives = list(map(bool, positives))
    n_pos = sum(positives)
    points = []  # (threshold, precision, recall), highest threshold first
    for t in sorted(set(scores), reverse=True):
        tp = sum(1 for s, p in zip(scores, positives) if s >= t and p)
        fp = sum(1 for s, p in zip(scores, positives) if s >= t and not p)
        points.append((t, tp / (tp + fp), tp / n_pos))

    def f(p, r, b):
        return 0.0 if b * b * p + r == 0 else (1 + b * b) * p * r / (b * b * p + r)

    max_f1 = max(f(p, r, 1.0) for _, p, r in points)
    fb = max(f(p, r, beta) for _, p, r in points)
    r1 = max([r for _, p, r in points if p == 1.0], default=0.0)
    ap, prev = 0.0, 0.0
    for _, p, r in points:
        ap += (r - prev) * p
        prev = r
    p0 = points[0][1]
    return dict(max_f1=max_f1, f_beta=fb, r1=r1, ap=ap, ep=0.5 * (r1 + p0))


def brute_best_inliers(src, dst, tol):
    """Exhaustive search over every 3-subset for the largest inlier set."""
    from boxgraph.registration import DegenerateGeometryError, kabsch

    best = set()
    for tri in itertools.combinations(range(len(src)), 3):
        try:
            T = kabsch(src[list(tri)], dst[list(tri)])
        except DegenerateGeometryError:
            continue
        inl = set(np.flatnonzero(np.linalg.norm(T.apply(src) - dst, axis=1) <= tol).tolist())
        if len(inl) > len(best):
            best = inl
    return best


def brute_positive_pairs(xyz, radius, gap):
    n = len(xyz)
    out = set()
    for a in range(n):
        for b in range(a + 1, n):
            if b - a > gap and np.linalg.norm(xyz[a] - xyz[b]) <= radius:
                out.add((b, a))
    return out
