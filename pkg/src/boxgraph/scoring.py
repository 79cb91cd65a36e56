"""Graph similarity over the RANSAC-refined matches, and the pair pipeline."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import SemanticGraph
from .matching import MatchSet, assign_vertices, delta, delta_array
from .registration import RansacParams, RegistrationError, RigidTransform, ransac_register

ROW_FIELDS = ("scan_s", "scan_m", "similarity", "tx", "ty", "tz",
              "qw", "qx", "qy", "qz", "n_inliers")


def edge_similarity(len_s: float, len_m: float) -> float:
    return float(np.exp(-delta(len_s, len_m)))


def graph_similarity(g_s: SemanticGraph, g_m: SemanticGraph, inliers: MatchSet) -> float:
    """Sum of vertex similarities over the inliers plus edge similarities over
    every unordered pair of distinct inliers."""
    if len(inliers) == 0:
        return 0.0
    c_s = g_s.centroids[inliers.source]
    c_m = g_m.centroids[inliers.target]
    iu, ju = np.triu_indices(len(inliers), k=1)
    len_s = np.linalg.norm(c_s[iu] - c_s[ju], axis=1)
    len_m = np.linalg.norm(c_m[iu] - c_m[ju], axis=1)
    edges = np.exp(-delta_array(len_s, len_m)).sum()
    return float(edges + inliers.score.sum())


@dataclass(frozen=True)
class MatchResult:
    similarity: float
    pose: RigidTransform | None
    inliers: MatchSet = field(default_factory=MatchSet.empty)
    tau: float | None = None

    @property
    def is_match(self) -> bool | None:
        return None if self.tau is None else self.similarity > self.tau

    def row(self, scan_s: str, scan_m: str) -> dict:
        """Flat record for CSV/JSON output; pose fields are None without a pose."""
        if self.pose is None:
            pose = [None] * 7
        else:
            pose = [float(v) for v in (*self.pose.translation, *self.pose.quaternion())]
        return dict(zip(ROW_FIELDS, (scan_s, scan_m, float(self.similarity), *pose,
                                     len(self.inliers))))


def match_graphs(g_s: SemanticGraph, g_m: SemanticGraph,
                 params: RansacParams = RansacParams(), seed: int | None = None,
                 tau: float | None = None) -> MatchResult:
    """Assign, register and score one graph pair. ``pose`` maps ``g_s`` into ``g_m``."""
    if seed is not None:
        params = RansacParams(params.iterations, params.inlier_tol, params.min_inliers,
                              seed, params.early_exit)
    matches = assign_vertices(g_s, g_m)
    try:
        pose, inliers = ransac_register(matches, g_s, g_m, params)
    except RegistrationError:
        return MatchResult(0.0, None, MatchSet.empty(), tau)
    return MatchResult(graph_similarity(g_s, g_m, inliers), pose, inliers, tau)
