"""Rigid 2D transform estimation from point correspondences.

The model maps a source point ``p`` (map d) to a target point ``q`` (map c):
``q = R(theta) p + (x, y)``. Writing ``alpha = s cos(theta)`` and
``beta = s sin(theta)`` turns the similarity version into a linear system in
``(alpha, beta, x, y)``; RANSAC over two-point samples, a least-squares refit
and a Levenberg-Marquardt polish over ``(x, y, theta)`` give the final
estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateConfiguration, InsufficientData, NoConsensus
from .geometry import wrap_angle

__all__ = [
    "Hypothesis2D",
    "RansacParams",
    "solve_rigid2d_lsq",
    "rigid_residuals",
    "rigid_cost",
    "rigid_cost_gradient",
    "refine_lm",
    "ransac_rigid2d",
]


@dataclass(frozen=True)
class RansacParams:
    max_iterations: int = 2000
    inlier_threshold: float = 0.1
    confidence: float = 0.99
    min_inliers: int = 10
    scale_tolerance: float = 0.05
    # Two-point samples closer than this are re-drawn; None means inlier_threshold / 2.
    min_sample_distance: float | None = None
    batch: int = 64

    def __post_init__(self):
        if self.max_iterations <= 0 or self.inlier_threshold <= 0 or self.min_inliers <= 0:
            raise ValueError("RANSAC parameters must be positive")
        if self.scale_tolerance <= 0:
            raise ValueError("scale_tolerance must be positive")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must lie in (0, 1)")

    @classmethod
    def for_grid(cls, g: float, **kw) -> "RansacParams":
        kw.setdefault("inlier_threshold", 2.0 * g)
        kw.setdefault("min_sample_distance", g)
        return cls(**kw)

    @property
    def sample_distance(self) -> float:
        if self.min_sample_distance is None:
            return self.inlier_threshold / 2.0
        return self.min_sample_distance


@dataclass(frozen=True, eq=False)
class Hypothesis2D:
    x: float
    y: float
    theta: float
    scale_estimate: float = 1.0
    inlier_indices: tuple[int, ...] = field(default_factory=tuple)
    rms_residual: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))
        object.__setattr__(self, "inlier_indices", tuple(int(i) for i in self.inlier_indices))

    @property
    def inlier_count(self) -> int:
        return len(self.inlier_indices)

    def params(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    def apply(self, pts: np.ndarray) -> np.ndarray:
        return _apply(np.asarray(pts, dtype=np.float64), self.x, self.y, self.theta)


def _apply(p: np.ndarray, x: float, y: float, theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.column_stack([c * p[:, 0] - s * p[:, 1] + x, s * p[:, 0] + c * p[:, 1] + y])


def _as_pairs(src, dst) -> tuple[np.ndarray, np.ndarray]:
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if src.shape != dst.shape:
        raise ValueError("source and target arrays must have the same shape")
    return src, dst


def solve_rigid2d_lsq(src, dst) -> tuple[float, float, float, float]:
    """Least-squares ``(alpha, beta, x, y)`` of the linear similarity system.

    Centring both point sets decouples the translation columns from the
    rotation-scale columns, which leaves a closed form for the normal
    equations. ``theta = atan2(beta, alpha)``, ``s = hypot(alpha, beta)``.
    """
    src, dst = _as_pairs(src, dst)
    if src.shape[0] < 2:
        raise InsufficientData("need at least two correspondences")
    ms = src.mean(axis=0)
    md = dst.mean(axis=0)
    a = src - ms
    b = dst - md
    denom = float(np.einsum("ij,ij->", a, a))
    scale_ref = max(1.0, float(np.abs(src).max()))
    if denom <= (1e-12 * scale_ref) ** 2 * src.shape[0]:
        raise DegenerateConfiguration("source points are coincident")
    alpha = float(np.sum(a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1])) / denom
    beta = float(np.sum(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])) / denom
    x = md[0] - (alpha * ms[0] - beta * ms[1])
    y = md[1] - (beta * ms[0] + alpha * ms[1])
    return alpha, beta, float(x), float(y)


def rigid_residuals(params, src, dst) -> np.ndarray:
    """Stacked residuals ``R p + t - q`` as a flat (2N,) array."""
    x, y, theta = (float(v) for v in params)
    src, dst = _as_pairs(src, dst)
    return (_apply(src, x, y, theta) - dst).reshape(-1)


def rigid_cost(params, src, dst) -> float:
    r = rigid_residuals(params, src, dst)
    return float(r @ r)


def _jacobian(theta: float, src: np.ndarray) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    n = src.shape[0]
    j = np.zeros((2 * n, 3))
    j[0::2, 0] = 1.0
    j[1::2, 1] = 1.0
    j[0::2, 2] = -s * src[:, 0] - c * src[:, 1]
    j[1::2, 2] = c * src[:, 0] - s * src[:, 1]
    return j


def rigid_cost_gradient(params, src, dst) -> np.ndarray:
    """Analytic gradient of :func:`rigid_cost` with respect to ``(x, y, theta)``."""
    src, dst = _as_pairs(src, dst)
    r = rigid_residuals(params, src, dst)
    return 2.0 * _jacobian(float(params[2]), src).T @ r


def _lm(params: np.ndarray, src: np.ndarray, dst: np.ndarray, max_iters: int, tol: float) -> np.ndarray:
    p = np.array(params, dtype=np.float64)
    r = rigid_residuals(p, src, dst)
    cost = float(r @ r)
    lam = 1e-3
    for _ in range(max_iters):
        j = _jacobian(p[2], src)
        g = j.T @ r
        if np.max(np.abs(g)) <= tol:
            break
        a = j.T @ j
        improved = False
        while lam < 1e12:
            step = np.linalg.solve(a + lam * np.diag(np.diag(a) + 1e-12), -g)
            cand = p + step
            rc = rigid_residuals(cand, src, dst)
            cc = float(rc @ rc)
            if cc < cost:
                lam = max(lam / 10.0, 1e-12)
                improved = True
                break
            lam *= 10.0
        if not improved:
            break
        done = np.max(np.abs(step)) <= tol * (1.0 + np.max(np.abs(p)))
        p, r, cost = cand, rc, cc
        if done:
            break
    p[2] = wrap_angle(p[2])
    return p


def refine_lm(h: Hypothesis2D, src, dst, max_iters: int = 50, tol: float = 1e-12) -> Hypothesis2D:
    """Minimize the summed squared residual over the hypothesis' inliers.

    ``src``/``dst`` are the full correspondence arrays; only the rows listed in
    ``h.inlier_indices`` take part. The returned cost is never larger than the
    starting cost.
    """
    src, dst = _as_pairs(src, dst)
    idx = np.asarray(h.inlier_indices, dtype=np.int64)
    if idx.shape[0] < 2:
        raise InsufficientData("refinement needs at least two inliers")
    s, d = src[idx], dst[idx]
    p = _lm(h.params(), s, d, max_iters, tol)
    r = rigid_residuals(p, s, d)
    return Hypothesis2D(p[0], p[1], p[2], h.scale_estimate, h.inlier_indices, math.sqrt(float(r @ r) / len(idx)))


def _required_iterations(inlier_ratio: float, confidence: float, cap: int) -> int:
    w2 = inlier_ratio * inlier_ratio
    if w2 >= 1.0:
        return 1
    if w2 <= 0.0:
        return cap
    n = math.log(1.0 - confidence) / math.log(1.0 - w2)
    return int(min(cap, max(1, math.ceil(n))))


def _two_point_models(src: np.ndarray, dst: np.ndarray, i: np.ndarray, j: np.ndarray):
    """Similarity parameters from the pair samples ``(i, j)``; returns rigid models and scales."""
    ds = src[j] - src[i]
    dd = dst[j] - dst[i]
    n2 = np.einsum("ij,ij->i", ds, ds)
    alpha = (ds[:, 0] * dd[:, 0] + ds[:, 1] * dd[:, 1]) / n2
    beta = (ds[:, 0] * dd[:, 1] - ds[:, 1] * dd[:, 0]) / n2
    scale = np.hypot(alpha, beta)
    theta = np.arctan2(beta, alpha)
    c, s = np.cos(theta), np.sin(theta)
    ms = 0.5 * (src[i] + src[j])
    md = 0.5 * (dst[i] + dst[j])
    tx = md[:, 0] - (c * ms[:, 0] - s * ms[:, 1])
    ty = md[:, 1] - (s * ms[:, 0] + c * ms[:, 1])
    return tx, ty, theta, scale


def _inlier_masks(src, dst, tx, ty, theta, thr2):
    c = np.cos(theta)[:, None]
    s = np.sin(theta)[:, None]
    px = c * src[None, :, 0] - s * src[None, :, 1] + tx[:, None] - dst[None, :, 0]
    py = s * src[None, :, 0] + c * src[None, :, 1] + ty[:, None] - dst[None, :, 1]
    return px * px + py * py <= thr2


def _inliers(src, dst, params, thr2) -> np.ndarray:
    r = _apply(src, params[0], params[1], params[2]) - dst
    return np.flatnonzero(np.einsum("ij,ij->i", r, r) <= thr2)


def ransac_rigid2d(src, dst, params: RansacParams | None = None, rng=None) -> Hypothesis2D:
    """Robust rigid fit of ``dst ~ R src + t``.

    Two-point minimal samples; samples whose implied scale departs from 1 by
    more than ``scale_tolerance`` are discarded. The best-supported model is
    refit on its inliers by least squares and polished with LM.
    """
    params = params or RansacParams()
    src, dst = _as_pairs(src, dst)
    n = src.shape[0]
    if n < 2:
        raise InsufficientData(f"need at least two correspondences, got {n}")
    if n < params.min_inliers:
        raise NoConsensus(f"{n} correspondences cannot reach min_inliers={params.min_inliers}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)

    thr2 = params.inlier_threshold ** 2
    min_d2 = params.sample_distance ** 2
    best_count = -1
    best_model = None
    drawn = 0
    required = params.max_iterations
    while drawn < min(required, params.max_iterations):
        b = min(params.batch, params.max_iterations - drawn)
        i = rng.integers(0, n, size=b)
        j = rng.integers(0, n - 1, size=b)
        j = np.where(j >= i, j + 1, j)
        drawn += b
        ds = src[j] - src[i]
        ok = np.einsum("ij,ij->i", ds, ds) >= min_d2
        if not ok.any():
            continue
        tx, ty, th, sc = _two_point_models(src, dst, i[ok], j[ok])
        keep = np.abs(sc - 1.0) <= params.scale_tolerance
        if not keep.any():
            continue
        tx, ty, th = tx[keep], ty[keep], th[keep]
        counts = _inlier_masks(src, dst, tx, ty, th, thr2).sum(axis=1)
        k = int(np.argmax(counts))
        if counts[k] > best_count:
            best_count = int(counts[k])
            best_model = np.array([tx[k], ty[k], th[k]])
            required = _required_iterations(best_count / n, params.confidence, params.max_iterations)

    if best_model is None or best_count < params.min_inliers:
        raise NoConsensus(f"best support {max(best_count, 0)} below min_inliers={params.min_inliers}")

    model = best_model
    inl = _inliers(src, dst, model, thr2)
    scale = 1.0
    # Refit and re-gate a few times; the model always corresponds to the final `inl`.
    for it in range(3):
        alpha, beta, x, y = solve_rigid2d_lsq(src[inl], dst[inl])
        scale = math.hypot(alpha, beta)
        start = np.array([x, y, math.atan2(beta, alpha)])
        model = _lm(start, src[inl], dst[inl], 50, 1e-12)
        new = _inliers(src, dst, model, thr2)
        if it == 2 or new.shape[0] < params.min_inliers or np.array_equal(new, inl):
            break
        inl = new
    if abs(scale - 1.0) > params.scale_tolerance:
        raise NoConsensus(f"refit scale {scale:.3f} outside tolerance")
    if inl.shape[0] < params.min_inliers:
        raise NoConsensus("support collapsed during refinement")
    r = rigid_residuals(model, src[inl], dst[inl])
    rms = math.sqrt(float(r @ r) / inl.shape[0])
    return Hypothesis2D(model[0], model[1], model[2], scale, tuple(inl.tolist()), rms)
