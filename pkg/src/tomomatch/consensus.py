"""Height cross-correlation: per-slice 2D estimates, consensus, and offset argmax."""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptyCloud, EmptyHypotheses, GridMismatch, InsufficientData, NoConsensus
from .features import match_descriptors
from .geometry import PointCloud, Transform4DoF, voxel_filter, wrap_angle, wrap_angles
from .rigid2d import Hypothesis2D, RansacParams, ransac_rigid2d
from .tomography import SliceSet, slice_map

__all__ = [
    "ConsensusParams",
    "MatchConfig",
    "OffsetHypotheses",
    "MatchResult",
    "enumerate_offsets",
    "hypotheses_at_offset",
    "consensus_cluster",
    "correlate_heights",
    "match_maps",
    "match_slice_sets",
    "prepare_slices",
]


@dataclass(frozen=True)
class ConsensusParams:
    """Thresholds for grouping per-slice hypotheses around an anchor."""

    t_xy: float = 0.1
    t_theta: float = 0.05
    min_cluster: int = 3
    weighted: bool = False

    def __post_init__(self):
        if self.t_xy <= 0 or self.t_theta <= 0 or self.min_cluster <= 0:
            raise ValueError("consensus thresholds must be positive")

    @classmethod
    def for_grid(cls, g: float, **kw) -> "ConsensusParams":
        kw.setdefault("t_xy", 2.0 * g)
        return cls(**kw)


@dataclass(frozen=True)
class MatchConfig:
    """Everything :func:`match_maps` needs besides the two clouds.

    ``ransac`` and ``consensus`` default to grid-scaled values when left unset.
    """

    grid: float = 0.05
    seed: int = 0
    max_features: int = 1000
    max_hamming: int = 40
    ransac: RansacParams | None = None
    consensus: ConsensusParams | None = None
    workers: int = 1

    def ransac_params(self) -> RansacParams:
        return self.ransac or RansacParams.for_grid(self.grid)

    def consensus_params(self) -> ConsensusParams:
        return self.consensus or ConsensusParams.for_grid(self.grid)

    def with_overrides(self, **kw) -> "MatchConfig":
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class OffsetHypotheses:
    z_offset: float
    step: int
    hypotheses: tuple[Hypothesis2D, ...] = ()
    pair_ids: tuple[tuple[int, int], ...] = ()
    pairs_tried: int = 0
    correspondences: int = 0

    def __len__(self) -> int:
        return len(self.hypotheses)


@dataclass(frozen=True, eq=False)
class MatchResult:
    transform: Transform4DoF
    consensus_size: int
    per_offset_scores: tuple[tuple[float, int], ...]
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self, include_diagnostics: bool = True) -> dict:
        t = self.transform
        d = {
            "x": t.x,
            "y": t.y,
            "z": t.z,
            "theta": t.theta,
            "consensus_size": self.consensus_size,
            "per_offset_scores": [[z, n] for z, n in self.per_offset_scores],
            "matrix": t.matrix().reshape(-1).tolist(),
        }
        if include_diagnostics:
            d["timings"] = dict(self.diagnostics.get("timings", {}))
            d["diagnostics"] = {k: v for k, v in self.diagnostics.items() if k != "timings"}
        return d

    def to_json(self, include_diagnostics: bool = True) -> str:
        return json.dumps(self.to_dict(include_diagnostics), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MatchResult":
        diag = dict(d.get("diagnostics", {}))
        if "timings" in d:
            diag["timings"] = dict(d["timings"])
        return cls(
            Transform4DoF(d["x"], d["y"], d["z"], d["theta"]),
            int(d["consensus_size"]),
            tuple((float(z), int(n)) for z, n in d["per_offset_scores"]),
            diag,
        )

    @classmethod
    def from_json(cls, text: str) -> "MatchResult":
        return cls.from_dict(json.loads(text))


def _check_grids(sc: SliceSet, sd: SliceSet) -> float:
    g = sc.grid_size
    if not math.isclose(g, sd.grid_size, rel_tol=1e-9, abs_tol=0.0):
        raise GridMismatch(f"grid sizes differ: {sc.grid_size} vs {sd.grid_size}")
    return g


def _offset(sc: SliceSet, sd: SliceSet, step: int) -> float:
    return (sc.z_min - sd.z_min) + step * sc.grid_size


def _steps(sc: SliceSet, sd: SliceSet) -> list[int]:
    kc = sc.indices()
    kd = sd.indices()
    return sorted({a - b for a in kc for b in kd})


def enumerate_offsets(sc: SliceSet, sd: SliceSet) -> list[float]:
    """Every height offset ``h_c - h_d`` at which at least one slice pair lines up."""
    if len(sc) == 0 or len(sd) == 0:
        raise EmptyCloud("both slice sets must be non-empty")
    _check_grids(sc, sd)
    return [_offset(sc, sd, s) for s in _steps(sc, sd)]


def _step_of(sc: SliceSet, sd: SliceSet, z_offset: float) -> int:
    g = _check_grids(sc, sd)
    return int(round((z_offset - (sc.z_min - sd.z_min)) / g))


def _zigzag(n: int) -> int:
    return 2 * n if n >= 0 else -2 * n - 1


def _pair_rng(seed: int, step: int, kd: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, _zigzag(step), _zigzag(kd)]))


def hypotheses_at_offset(
    sc: SliceSet,
    sd: SliceSet,
    z_offset: float,
    ransac: RansacParams | None = None,
    seed: int = 0,
    max_hamming: int = 40,
) -> OffsetHypotheses:
    """Match every height-aligned slice pair and fit a rigid 2D model to each.

    Pairs that cannot produce a model (too few features, matches or inliers)
    are skipped.
    """
    ransac = ransac or RansacParams.for_grid(sc.grid_size)
    step = _step_of(sc, sd, z_offset)
    by_c = sc.by_index()
    hyps, ids = [], []
    tried = ncorr = 0
    for ed in sd.entries:
        ec = by_c.get(ed.index + step)
        if ec is None:
            continue
        tried += 1
        fc, fd = ec.features, ed.features
        if min(len(fc), len(fd)) < max(2, ransac.min_inliers):
            continue
        corr = match_descriptors(fc, fd, max_hamming)
        ncorr += len(corr)
        if len(corr) < max(2, ransac.min_inliers):
            continue
        src = fd.metric_xy[corr.idx_b].astype(np.float64)
        dst = fc.metric_xy[corr.idx_a].astype(np.float64)
        try:
            h = ransac_rigid2d(src, dst, ransac, _pair_rng(seed, step, ed.index))
        except (InsufficientData, NoConsensus):
            continue
        hyps.append(h)
        ids.append((ec.index, ed.index))
    return OffsetHypotheses(_offset(sc, sd, step), step, tuple(hyps), tuple(ids), tried, ncorr)


def _circular_mean(theta: np.ndarray, w: np.ndarray) -> float:
    return wrap_angle(math.atan2(float(np.sum(w * np.sin(theta))), float(np.sum(w * np.cos(theta)))))


def consensus_cluster(
    oh: OffsetHypotheses, p: ConsensusParams | None = None
) -> tuple[list[int], Transform4DoF]:
    """Largest group of hypotheses within ``(t_xy, t_theta)`` of some anchor.

    Returns the member indices (into ``oh.hypotheses``) and their averaged
    transform: arithmetic mean for x/y, circular mean for theta, and the
    offset itself as z. Ties between anchors go to the lowest index.
    """
    p = p or ConsensusParams()
    hs = oh.hypotheses
    if not hs:
        raise EmptyHypotheses(f"no hypotheses at offset {oh.z_offset}")
    xy = np.array([[h.x, h.y] for h in hs])
    th = np.array([h.theta for h in hs])
    dxy = np.hypot(xy[:, None, 0] - xy[None, :, 0], xy[:, None, 1] - xy[None, :, 1])
    dth = np.abs(wrap_angles(th[:, None] - th[None, :]))
    close = (dxy <= p.t_xy) & (dth <= p.t_theta)
    anchor = int(np.argmax(close.sum(axis=1)))
    members = np.flatnonzero(close[anchor])
    if p.weighted:
        w = np.array([hs[i].inlier_count for i in members], dtype=np.float64)
    else:
        w = np.ones(members.shape[0])
    w = w / w.sum()
    mx = float(np.sum(w * xy[members, 0]))
    my = float(np.sum(w * xy[members, 1]))
    mt = _circular_mean(th[members], w)
    return members.tolist(), Transform4DoF(mx, my, oh.z_offset, mt)


def correlate_heights(
    sc: SliceSet,
    sd: SliceSet,
    p: ConsensusParams | None = None,
    r: RansacParams | None = None,
    seed: int = 0,
    max_hamming: int = 40,
    workers: int = 1,
) -> MatchResult:
    """Score every height offset by its consensus size and keep the best.

    Ties prefer the smaller ``|z_offset|``, then the lower mean RMS residual.
    """
    if len(sc) == 0 or len(sd) == 0:
        raise EmptyCloud("both slice sets must be non-empty")
    g = _check_grids(sc, sd)
    p = p or ConsensusParams.for_grid(g)
    r = r or RansacParams.for_grid(g)
    steps = _steps(sc, sd)

    def work(step: int):
        oh = hypotheses_at_offset(sc, sd, _offset(sc, sd, step), r, seed, max_hamming)
        if not oh.hypotheses:
            return oh, [], None
        members, t = consensus_cluster(oh, p)
        return oh, members, t

    t0 = time.perf_counter()
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, steps))
    else:
        results = [work(s) for s in steps]
    elapsed = time.perf_counter() - t0

    scores = []
    best_key, best = None, None
    for oh, members, t in results:
        size = len(members)
        scores.append((oh.z_offset, size))
        if size == 0:
            continue
        rms = float(np.mean([oh.hypotheses[i].rms_residual for i in members]))
        key = (-size, abs(oh.z_offset), rms)
        if best_key is None or key < best_key:
            best_key, best = key, (oh, members, t)

    diagnostics = {
        "slices_c": len(sc),
        "slices_d": len(sd),
        "offsets": len(steps),
        "pairs_tried": int(sum(oh.pairs_tried for oh, _, _ in results)),
        "hypotheses": int(sum(len(oh) for oh, _, _ in results)),
        "correspondences": int(sum(oh.correspondences for oh, _, _ in results)),
        "timings": {"correlate": elapsed},
    }
    if best is None or len(best[1]) < p.min_cluster:
        size = 0 if best is None else len(best[1])
        raise NoConsensus(f"largest consensus cluster {size} below min_cluster={p.min_cluster}")
    oh, members, t = best
    diagnostics["winning_pairs"] = [list(oh.pair_ids[i]) for i in members]
    return MatchResult(t, len(members), tuple(scores), diagnostics)


def prepare_slices(cloud: PointCloud, cfg: MatchConfig) -> SliceSet:
    """Voxel-filter ``cloud`` at the configured grid if needed, then slice it."""
    if cloud.is_empty:
        raise EmptyCloud("cannot match an empty cloud")
    if cloud.grid_size is None or not math.isclose(cloud.grid_size, cfg.grid, rel_tol=1e-12):
        cloud = voxel_filter(cloud, cfg.grid)
    return slice_map(cloud, cfg.grid, cfg.max_features, keep_images=False, workers=cfg.workers)


def match_slice_sets(sc: SliceSet, sd: SliceSet, cfg: MatchConfig) -> MatchResult:
    return correlate_heights(
        sc, sd, cfg.consensus_params(), cfg.ransac_params(), cfg.seed, cfg.max_hamming, cfg.workers
    )


def match_maps(cloud_c: PointCloud, cloud_d: PointCloud, cfg: MatchConfig | None = None) -> MatchResult:
    """Estimate the transform taking map-d coordinates into the map-c frame."""
    cfg = cfg or MatchConfig()
    if cloud_c.is_empty or cloud_d.is_empty:
        raise EmptyCloud("cannot match an empty cloud")
    t0 = time.perf_counter()
    sc = prepare_slices(cloud_c, cfg)
    sd = prepare_slices(cloud_d, cfg)
    t1 = time.perf_counter()
    res = match_slice_sets(sc, sd, cfg)
    res.diagnostics["timings"]["slice"] = t1 - t0
    res.diagnostics["timings"]["total"] = time.perf_counter() - t0
    res.diagnostics["slice_bytes"] = sc.nbytes() + sd.nbytes()
    return res
