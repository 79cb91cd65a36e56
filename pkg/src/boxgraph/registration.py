"""Rigid registration of matched vertex centroids: Kabsch fit inside RANSAC."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numba
import numpy as np

if TYPE_CHECKING:
    from .graph import SemanticGraph
    from .matching import MatchSet


class DegenerateGeometryError(ValueError):
    pass


class RegistrationError(RuntimeError):
    """Raised when no pose can be supported by enough inliers."""


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Element of SE(3): ``x -> rotation @ x + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_matrix(cls, m) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self ∘ other``: apply ``other`` first."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    __matmul__ = compose

    def quaternion(self) -> np.ndarray:
        """Unit quaternion (w, x, y, z) with w >= 0."""
        from scipy.spatial.transform import Rotation

        x, y, z, w = Rotation.from_matrix(self.rotation).as_quat()
        q = np.array([w, x, y, z])
        return -q if w < 0 else q

    def __eq__(self, other):
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return (np.array_equal(self.rotation, other.rotation)
                and np.array_equal(self.translation, other.translation))

    def __repr__(self):
        return (f"RigidTransform(rotation={self.rotation.tolist()}, "
                f"translation={self.translation.tolist()})")


def apply(T: RigidTransform, p) -> np.ndarray:
    return T.apply(p)


def nearest_rotation(m) -> np.ndarray:
    """Project a 3x3 matrix onto SO(3) in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(np.asarray(m, dtype=np.float64))
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt)) or 1.0
    return U @ D @ Vt


def kabsch(src, dst) -> RigidTransform:
    """Least-squares rigid transform taking ``src`` onto ``dst``.

    Reflections are excluded by the determinant correction. Raises
    DegenerateGeometryError for fewer than 3 points or a collinear source.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    if src.shape != dst.shape:
        raise ValueError(f"shape mismatch: {src.shape} vs {dst.shape}")
    if len(src) < 3:
        raise DegenerateGeometryError(f"need at least 3 points, got {len(src)}")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    A = src - mu_s
    B = dst - mu_d
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[0] == 0.0 or sv[1] <= 1e-9 * sv[0]:
        raise DegenerateGeometryError("source points are collinear or coincident")
    U, _, Vt = np.linalg.svd(A.T @ B)
    d = np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0
    D = np.diag([1.0, 1.0, d])
    R = Vt.T @ D @ U.T
    return RigidTransform(R, mu_d - R @ mu_s)


@dataclass(frozen=True)
class RansacParams:
    iterations: int = 10_000
    inlier_tol: float = 1.0
    min_inliers: int = 3
    seed: int = 0
    early_exit: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.inlier_tol > 0:
            raise ValueError("inlier_tol must be > 0")
        if self.min_inliers < 3:
            raise ValueError("min_inliers must be >= 3")


# Hot loop. Each hypothesis is the Kabsch solution for a 3-point sample, which
# is always planar, so the optimum reduces to a 2D problem in the triangle
# planes: pick the better of the optimal in-plane rotation and the optimal
# in-plane reflection (the latter is a proper rotation once the normal flips).

@numba.njit(cache=True)
def _frame(p, mu, F):
    """Orthonormal frame of a triangle: first edge, in-plane normal, plane normal."""
    ux, uy, uz = p[1, 0] - p[0, 0], p[1, 1] - p[0, 1], p[1, 2] - p[0, 2]
    vx, vy, vz = p[2, 0] - p[0, 0], p[2, 1] - p[0, 1], p[2, 2] - p[0, 2]
    nx, ny, nz = uy * vz - uz * vy, uz * vx - ux * vz, ux * vy - uy * vx
    lu = np.sqrt(ux * ux + uy * uy + uz * uz)
    ln = np.sqrt(nx * nx + ny * ny + nz * nz)
    ux, uy, uz = ux / lu, uy / lu, uz / lu
    nx, ny, nz = nx / ln, ny / ln, nz / ln
    F[0, 0], F[1, 0], F[2, 0] = ux, uy, uz
    F[0, 1], F[1, 1], F[2, 1] = ny * uz - nz * uy, nz * ux - nx * uz, nx * uy - ny * ux
    F[0, 2], F[1, 2], F[2, 2] = nx, ny, nz
    for r in range(3):
        mu[r] = (p[0, r] + p[1, r] + p[2, r]) / 3.0


@numba.njit(cache=True)
def _fit3_into(a, b, Fa, Fb, mu_a, mu_b, R, t):
    _frame(a, mu_a, Fa)
    _frame(b, mu_b, Fb)
    A00 = 0.0
    A01 = 0.0
    A10 = 0.0
    A11 = 0.0
    for k in range(3):
        x0 = 0.0
        x1 = 0.0
        y0 = 0.0
        y1 = 0.0
        for r in range(3):
            da = a[k, r] - mu_a[r]
            db = b[k, r] - mu_b[r]
            x0 += da * Fa[r, 0]
            x1 += da * Fa[r, 1]
            y0 += db * Fb[r, 0]
            y1 += db * Fb[r, 1]
        A00 += x0 * y0
        A01 += x0 * y1
        A10 += x1 * y0
        A11 += x1 * y1
    # maximise trace(Q @ A) over O(2), A = sum x y^T
    rot_c, rot_s = A00 + A11, A01 - A10
    ref_c, ref_s = A00 - A11, A01 + A10
    if rot_c * rot_c + rot_s * rot_s >= ref_c * ref_c + ref_s * ref_s:
        m = np.sqrt(rot_c * rot_c + rot_s * rot_s)
        c, s = (rot_c / m, rot_s / m) if m > 0 else (1.0, 0.0)
        m00, m01, m10, m11, m22 = c, -s, s, c, 1.0
    else:
        m = np.sqrt(ref_c * ref_c + ref_s * ref_s)
        c, s = ref_c / m, ref_s / m
        m00, m01, m10, m11, m22 = c, s, s, -c, -1.0
    # R = Fb M Fa^T
    for i in range(3):
        g0 = Fb[i, 0] * m00 + Fb[i, 1] * m10
        g1 = Fb[i, 0] * m01 + Fb[i, 1] * m11
        g2 = Fb[i, 2] * m22
        for j in range(3):
            R[i, j] = g0 * Fa[j, 0] + g1 * Fa[j, 1] + g2 * Fa[j, 2]
    for i in range(3):
        t[i] = mu_b[i] - (R[i, 0] * mu_a[0] + R[i, 1] * mu_a[1] + R[i, 2] * mu_a[2])


@numba.njit(cache=True)
def _fit3(a, b):
    R = np.empty((3, 3))
    t = np.empty(3)
    _fit3_into(a, b, np.empty((3, 3)), np.empty((3, 3)), np.empty(3), np.empty(3), R, t)
    return R, t


@numba.njit(cache=True)
def _score(R, t, src, dst, tol2):
    count = 0
    resid = 0.0
    for n in range(src.shape[0]):
        s = 0.0
        for r in range(3):
            v = (R[r, 0] * src[n, 0] + R[r, 1] * src[n, 1] + R[r, 2] * src[n, 2]
                 + t[r] - dst[n, r])
            s += v * v
        if s <= tol2:
            count += 1
            resid += np.sqrt(s)
    return count, resid


@numba.njit(cache=True)
def _ransac_loop(src, dst, samples, valid, tol, early_exit):
    tol2 = tol * tol
    n = src.shape[0]
    best = -1
    best_count = -1
    best_resid = np.inf
    a = np.empty((3, 3))
    b = np.empty((3, 3))
    Fa = np.empty((3, 3))
    Fb = np.empty((3, 3))
    mu_a = np.empty(3)
    mu_b = np.empty(3)
    R = np.empty((3, 3))
    t = np.empty(3)
    for h in range(samples.shape[0]):
        if not valid[h]:
            continue
        for k in range(3):
            a[k] = src[samples[h, k]]
            b[k] = dst[samples[h, k]]
        _fit3_into(a, b, Fa, Fb, mu_a, mu_b, R, t)
        count, resid = _score(R, t, src, dst, tol2)
        if count > best_count or (count == best_count and resid < best_resid):
            best, best_count, best_resid = h, count, resid
        if early_exit and best_count > 0:
            w = best_count / n
            if w >= 1.0:
                break
            if h + 1 >= np.log(1e-3) / np.log(1.0 - w * w * w):
                break
    return best, best_count


def _draw_triples(rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    """Uniform draws of ``size`` triples of distinct indices in ``[0, n)``."""
    i = rng.integers(0, n, size=size)
    j = rng.integers(0, n - 1, size=size)
    k = rng.integers(0, n - 2, size=size)
    j = j + (j >= i)
    lo = np.minimum(i, j)
    hi = np.maximum(i, j)
    k = k + (k >= lo)
    k = k + (k >= hi)
    return np.stack([i, j, k], axis=1)


@numba.njit(cache=True)
def _non_degenerate(pts, triples):
    """Second singular value of each centred sample exceeds 1e-9 x the first."""
    out = np.empty(triples.shape[0], dtype=np.bool_)
    X = np.empty((3, 3))
    G = np.empty((3, 3))
    for h in range(triples.shape[0]):
        for r in range(3):
            m = (pts[triples[h, 0], r] + pts[triples[h, 1], r] + pts[triples[h, 2], r]) / 3.0
            for k in range(3):
                X[k, r] = pts[triples[h, k], r] - m
        for i in range(3):
            for j in range(3):
                G[i, j] = X[0, i] * X[0, j] + X[1, i] * X[1, j] + X[2, i] * X[2, j]
        tr = G[0, 0] + G[1, 1] + G[2, 2]
        # rank <= 2, so the sum of principal 2x2 minors is s1^2 * s2^2
        e2 = (G[0, 0] * G[1, 1] - G[0, 1] ** 2 + G[0, 0] * G[2, 2] - G[0, 2] ** 2
              + G[1, 1] * G[2, 2] - G[1, 2] ** 2)
        disc = np.sqrt(max(tr * tr - 4.0 * e2, 0.0))
        s1sq = 0.5 * (tr + disc)
        out[h] = s1sq > 0.0 and e2 / s1sq > 1e-18 * s1sq
    return out


def ransac_correspondences(src, dst, params: RansacParams = RansacParams(),
                           rng: np.random.Generator | None = None):
    """Robust fit on paired points; returns (transform, inlier index array)."""
    src = np.ascontiguousarray(src, dtype=np.float64).reshape(-1, 3)
    dst = np.ascontiguousarray(dst, dtype=np.float64).reshape(-1, 3)
    n = len(src)
    if n < max(3, params.min_inliers):
        raise RegistrationError(f"{n} matches, need at least {max(3, params.min_inliers)}")
    if rng is None:
        rng = np.random.default_rng(params.seed)

    samples = _draw_triples(rng, n, params.iterations)
    valid = _non_degenerate(src, samples) & _non_degenerate(dst, samples)
    for _ in range(100):
        bad = np.flatnonzero(~valid)
        if len(bad) == 0:
            break
        samples[bad] = _draw_triples(rng, n, len(bad))
        valid[bad] = _non_degenerate(src, samples[bad]) & _non_degenerate(dst, samples[bad])
    if not valid.any():
        raise RegistrationError("every sample is degenerate")

    best, count = _ransac_loop(src, dst, samples, valid, float(params.inlier_tol),
                               bool(params.early_exit))
    if count < params.min_inliers:
        raise RegistrationError(f"best hypothesis has {count} inliers, need {params.min_inliers}")

    tol = params.inlier_tol
    R, t = _fit3(src[samples[best]], dst[samples[best]])
    inl = np.flatnonzero(np.linalg.norm(src @ R.T + t - dst, axis=1) <= tol)
    try:
        T = kabsch(src[inl], dst[inl])
    except DegenerateGeometryError as exc:
        raise RegistrationError(str(exc)) from exc
    inl = np.flatnonzero(np.linalg.norm(T.apply(src) - dst, axis=1) <= tol)
    if len(inl) < params.min_inliers:
        raise RegistrationError(f"refit keeps {len(inl)} inliers, need {params.min_inliers}")
    return T, inl


def ransac_register(matches: "MatchSet", g_s: "SemanticGraph", g_m: "SemanticGraph",
                    params: RansacParams = RansacParams()):
    """Pose of ``g_s`` in the frame of ``g_m`` and the refined match set."""
    if len(matches) < params.min_inliers:
        raise RegistrationError(f"{len(matches)} matches, need at least {params.min_inliers}")
    src = g_s.centroids[matches.source]
    dst = g_m.centroids[matches.target]
    T, inl = ransac_correspondences(src, dst, params)
    return T, matches.subset(inl)
