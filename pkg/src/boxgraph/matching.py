"""Vertex similarity and optimal same-class vertex assignment."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .graph import SemanticGraph, Vertex


def delta(a: float, b: float) -> float:
    """Fractional variation |a - b| / max(a, b), with delta(0, 0) = 0."""
    if a < 0 or b < 0:
        raise ValueError(f"delta expects nonnegative inputs, got {a}, {b}")
    m = max(a, b)
    return 0.0 if m == 0 else abs(a - b) / m


def delta_array(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if (a < 0).any() or (b < 0).any():
        raise ValueError("delta expects nonnegative inputs")
    m = np.maximum(a, b)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(m > 0, np.abs(a - b) / np.where(m > 0, m, 1.0), 0.0)


def vertex_similarity(v_i: Vertex, v_j: Vertex) -> float:
    if v_i.label != v_j.label:
        return 0.0
    d = sum(delta(float(x), float(y)) for x, y in zip(v_i.feature, v_j.feature))
    return float(np.exp(-d / 3.0))


def similarity_matrix(f_s, f_m) -> np.ndarray:
    """Shape similarity between every row of ``f_s`` and ``f_m`` (labels ignored)."""
    f_s = np.asarray(f_s, dtype=np.float64).reshape(-1, 1, 3)
    f_m = np.asarray(f_m, dtype=np.float64).reshape(1, -1, 3)
    return np.exp(-delta_array(f_s, f_m).sum(axis=2) / 3.0)


@dataclass(frozen=True, eq=False)
class MatchSet:
    """One-to-one vertex correspondences ``source[k] -> target[k]``, sorted by source."""

    source: np.ndarray
    target: np.ndarray
    score: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.source, dtype=np.int64).reshape(-1)
        t = np.asarray(self.target, dtype=np.int64).reshape(-1)
        w = np.asarray(self.score, dtype=np.float64).reshape(-1)
        if not len(s) == len(t) == len(w):
            raise ValueError("source, target and score must have equal length")
        object.__setattr__(self, "source", s)
        object.__setattr__(self, "target", t)
        object.__setattr__(self, "score", w)

    @classmethod
    def empty(cls) -> "MatchSet":
        return cls(np.empty(0), np.empty(0), np.empty(0))

    def __len__(self) -> int:
        return len(self.source)

    @property
    def pairs(self) -> list[tuple[int, int, float]]:
        return [(int(i), int(j), float(w)) for i, j, w in zip(self.source, self.target, self.score)]

    def subset(self, idx) -> "MatchSet":
        return MatchSet(self.source[idx], self.target[idx], self.score[idx])

    def total(self) -> float:
        return float(self.score.sum())


def assign_vertices(g_s: SemanticGraph, g_m: SemanticGraph) -> MatchSet:
    """Maximum-similarity one-to-one assignment, solved independently per class.

    The smaller side of each class block is matched completely; zero-similarity
    pairs are dropped.
    """
    src, dst, score = [], [], []
    for label in np.intersect1d(g_s.labels, g_m.labels):
        i_s = np.flatnonzero(g_s.labels == label)
        i_m = np.flatnonzero(g_m.labels == label)
        sim = similarity_matrix(g_s.features[i_s], g_m.features[i_m])
        rows, cols = linear_sum_assignment(1.0 - sim)
        src.append(i_s[rows])
        dst.append(i_m[cols])
        score.append(sim[rows, cols])
    if not src:
        return MatchSet.empty()
    src, dst, score = np.concatenate(src), np.concatenate(dst), np.concatenate(score)
    keep = score > 0
    order = np.argsort(src[keep], kind="stable")
    return MatchSet(src[keep][order], dst[keep][order], score[keep][order])
