"""Place-recognition and pose-estimation evaluation protocol."""
from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .graph import SemanticGraph
from .registration import RansacParams, RigidTransform
from .scoring import match_graphs
from .skitti_io import PoseRecord

log = logging.getLogger(__name__)

POSITIVE = "positive"
NEGATIVE = "negative"


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledPair:
    scan_s: int
    scan_m: int
    label: str
    score: float | None = None
    rte: float | None = None
    rre: float | None = None

    @property
    def is_positive(self) -> bool:
        return self.label == POSITIVE


def _gap_pair_count(idx_sorted: np.ndarray, gap: int) -> int:
    return int((len(idx_sorted) - np.searchsorted(idx_sorted, idx_sorted + gap, side="right")).sum())


def build_pairs(poses: Sequence[PoseRecord], pos_radius: float = 3.0, neg_radius: float = 20.0,
                frame_gap: int = 50, neg_ratio: int = 100, seed: int = 0) -> list[LabeledPair]:
    """Positive pairs within ``pos_radius`` and sampled negatives beyond ``neg_radius``.

    Both kinds need an index gap strictly greater than ``frame_gap``. All
    positives are kept; ``neg_ratio`` negatives per positive are drawn uniformly
    without replacement. ``scan_s`` is the later scan of each pair.
    """
    if not poses:
        raise ProtocolError("no poses")
    idx = np.array([p.index for p in poses], dtype=np.int64)
    if len(np.unique(idx)) != len(idx):
        raise ProtocolError("pose indices must be unique")
    order = np.argsort(idx)
    idx = idx[order]
    xyz = np.array([poses[k].transform.translation for k in order])
    tree = cKDTree(xyz)

    def close_pairs(radius):
        pr = tree.query_pairs(radius, output_type="ndarray")
        pr = np.sort(pr, axis=1)
        return pr[idx[pr[:, 1]] - idx[pr[:, 0]] > frame_gap]

    pos = close_pairs(pos_radius)
    pos = pos[np.lexsort((pos[:, 0], pos[:, 1]))]
    out = [LabeledPair(int(idx[b]), int(idx[a]), POSITIVE) for a, b in pos]

    needed = neg_ratio * len(pos)
    if needed == 0:
        return out
    near = close_pairs(neg_radius)
    available = _gap_pair_count(idx, frame_gap) - len(near)
    if needed > available:
        raise ProtocolError(f"need {needed} negative pairs but only {available} qualify "
                            f"(shortfall {needed - available})")

    rng = np.random.default_rng(seed)
    n = len(idx)
    if 2 * needed >= available:
        cand = []
        for a in range(n):
            b = np.arange(np.searchsorted(idx, idx[a] + frame_gap, side="right"), n)
            d = np.linalg.norm(xyz[b] - xyz[a], axis=1)
            cand.append(np.stack([np.full(len(b), a), b], axis=1)[d > neg_radius])
        cand = np.concatenate(cand)
        neg = cand[np.sort(rng.choice(len(cand), size=needed, replace=False))]
    else:
        near_set = set(map(tuple, near.tolist()))
        chosen: dict[tuple[int, int], None] = {}
        while len(chosen) < needed:
            a = rng.integers(0, n, size=2 * needed)
            b = rng.integers(0, n - 1, size=2 * needed)
            b = b + (b >= a)
            lo, hi = np.minimum(a, b), np.maximum(a, b)
            ok = idx[hi] - idx[lo] > frame_gap
            for pair in zip(lo[ok].tolist(), hi[ok].tolist()):
                if pair in near_set or pair in chosen:
                    continue
                if np.linalg.norm(xyz[pair[1]] - xyz[pair[0]]) <= neg_radius:
                    continue
                chosen[pair] = None
                if len(chosen) == needed:
                    break
        neg = np.array(list(chosen), dtype=np.int64)
    out += [LabeledPair(int(idx[b]), int(idx[a]), NEGATIVE) for a, b in neg]
    out.sort(key=lambda p: (p.scan_s, p.scan_m))
    return out


# --- precision / recall -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class PRCurve:
    """Precision and recall at every distinct score, thresholds ascending.

    A pair is predicted positive when its score is >= the threshold.
    """

    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    n_pos: int
    n_neg: int
    tp: np.ndarray  # true positives at each threshold
    predicted: np.ndarray  # pairs at or above each threshold

    def f_scores(self, beta: float = 1.0) -> np.ndarray:
        p, r = self.precision, self.recall
        b2 = beta * beta
        den = b2 * p + r
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(den > 0, (1 + b2) * p * r / np.where(den > 0, den, 1.0), 0.0)

    def max_f1(self) -> float:
        return self.f_beta(1.0)

    def f_beta(self, beta: float) -> float:
        return float(self.f_scores(beta).max())

    def recall_at_full_precision(self) -> float:
        full = self.precision == 1.0
        return float(self.recall[full].max()) if full.any() else 0.0

    def average_precision(self) -> float:
        # walk from the highest threshold down, recall growing from 0; summed
        # in rationals so the result is the correctly rounded exact value
        total, prev = Fraction(0), 0
        for tp, k in zip(self.tp[::-1].tolist(), self.predicted[::-1].tolist()):
            if tp != prev:
                total += Fraction((tp - prev) * tp, k)
                prev = tp
        return float(total / self.n_pos)

    def precision_at_zero_recall(self) -> float:
        return float(self.precision[-1])

    def extended_precision(self) -> float:
        return 0.5 * (self.recall_at_full_precision() + self.precision_at_zero_recall())

    def at_threshold(self, tau: float) -> tuple[float, float]:
        """(precision, recall) when predicting positive for scores > tau."""
        k = np.searchsorted(self.thresholds, tau, side="right")
        if k == len(self.thresholds):
            return 1.0, 0.0
        return float(self.precision[k]), float(self.recall[k])


def pr_curve(scores, is_positive) -> PRCurve:
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    pos = np.asarray(is_positive, dtype=bool).reshape(-1)
    if len(scores) != len(pos):
        raise ValueError("scores and labels differ in length")
    n_pos = int(pos.sum())
    if n_pos == 0:
        raise ProtocolError("precision/recall needs at least one positive pair")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    tp = np.cumsum(pos[order])
    last = np.append(s[1:] != s[:-1], True)  # last occurrence of each distinct score
    tp = tp[last]
    predicted = np.flatnonzero(last) + 1
    return PRCurve(s[last][::-1], (tp / predicted)[::-1], (tp / n_pos)[::-1],
                   n_pos, len(pos) - n_pos, tp[::-1], predicted[::-1])


# --- pose errors ------------------------------------------------------------

def rte(T: RigidTransform, T_star: RigidTransform) -> float:
    return float(np.linalg.norm(T.translation - T_star.translation))


def rre(T: RigidTransform, T_star: RigidTransform) -> float:
    # same angle as arccos((tr - 1) / 2), but atan2 keeps precision near zero
    D = T.rotation.T @ T_star.rotation
    c = (np.trace(D) - 1.0) / 2.0
    s = 0.5 * np.linalg.norm([D[2, 1] - D[1, 2], D[0, 2] - D[2, 0], D[1, 0] - D[0, 1]])
    return float(np.degrees(np.arctan2(s, np.clip(c, -1.0, 1.0))))


def relative_truth(pose_s: RigidTransform, pose_m: RigidTransform) -> RigidTransform:
    """Ground-truth transform taking scan-s coordinates to scan-m coordinates."""
    return pose_m.inverse() @ pose_s


def quartiles(values) -> list[float] | None:
    v = np.asarray(values, dtype=np.float64)
    if len(v) == 0:
        return None
    return [float(x) for x in np.percentile(v, [25, 50, 75])]


# --- scoring a pair list ----------------------------------------------------

def pair_seed(root: int, scan_s, scan_m) -> int:
    h = hashlib.blake2b(f"{scan_s}|{scan_m}".encode(), digest_size=8).digest()
    return (int(root) ^ int.from_bytes(h, "little")) & (2**63 - 1)


_worker_state: dict = {}


def _init_worker(graphs, poses, params, root_seed):
    _worker_state.update(graphs=graphs, poses=poses, params=params, seed=root_seed)


def _score_pair(pair: LabeledPair) -> LabeledPair:
    st = _worker_state
    g_s, g_m = st["graphs"][pair.scan_s], st["graphs"][pair.scan_m]
    res = match_graphs(g_s, g_m, st["params"], seed=pair_seed(st["seed"], pair.scan_s, pair.scan_m))
    if not pair.is_positive or res.pose is None or st["poses"] is None:
        return replace(pair, score=res.similarity)
    truth = relative_truth(st["poses"][pair.scan_s], st["poses"][pair.scan_m])
    return replace(pair, score=res.similarity, rte=rte(res.pose, truth), rre=rre(res.pose, truth))


def score_pairs(pairs: Sequence[LabeledPair], graphs: Mapping[int, SemanticGraph],
                poses: Mapping[int, RigidTransform] | None = None,
                params: RansacParams = RansacParams(), seed: int = 0,
                jobs: int = 1) -> list[LabeledPair]:
    """Run the matching pipeline on every pair; output order follows the input."""
    missing = {i for p in pairs for i in (p.scan_s, p.scan_m)} - set(graphs)
    if missing:
        raise ProtocolError(f"no graph for scan ids {sorted(missing)[:10]}")
    if jobs <= 1:
        _init_worker(graphs, poses, params, seed)
        try:
            return [_score_pair(p) for p in pairs]
        finally:
            _worker_state.clear()
    with ProcessPoolExecutor(jobs, initializer=_init_worker,
                             initargs=(dict(graphs), poses and dict(poses), params, seed)) as ex:
        return list(ex.map(_score_pair, pairs, chunksize=max(1, len(pairs) // (8 * jobs))))


def metrics_report(pairs: Sequence[LabeledPair], beta: float | None = None,
                   place: bool = True, pose: bool = True, tau: float | None = None) -> dict:
    """Aggregate metrics; PR fields only when ``place``, pose quartiles only when ``pose``."""
    pos = [p for p in pairs if p.is_positive]
    rep: dict = {}
    if place:
        if beta is None:
            raise ValueError("beta is required for place-recognition metrics")
        curve = pr_curve([p.score for p in pairs], [p.is_positive for p in pairs])
        rep.update(max_f1=curve.max_f1(), f_beta=curve.f_beta(beta), beta=float(beta),
                   r1=curve.recall_at_full_precision(), ap=curve.average_precision(),
                   ep=curve.extended_precision())
        if tau is not None:
            p_tau, r_tau = curve.at_threshold(tau)
            rep.update(tau=float(tau), precision_at_tau=p_tau, recall_at_tau=r_tau)
    if pose:
        solved = [p for p in pos if p.rte is not None]
        rep.update(rte_quartiles=quartiles([p.rte for p in solved]),
                   rre_quartiles=quartiles([p.rre for p in solved]),
                   n_pose=len(solved))
    rep.update(n_pos=len(pos), n_neg=len(pairs) - len(pos))
    return rep
