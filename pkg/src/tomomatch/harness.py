"""Planted-transform benchmark: pair construction, noise, metrics and reporting."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .consensus import ConsensusParams, MatchConfig, match_slice_sets, prepare_slices
from .errors import NoConsensus, OverlapInfeasible, TomoError
from .geometry import PointCloud, Transform4DoF, apply_transform, invert, voxel_keys, wrap_angle
from .rigid2d import RansacParams
from .synthetic import EnvironmentSpec, gen_environment, indoor_scene

__all__ = [
    "NoiseSpec",
    "BenchmarkConfig",
    "BenchmarkRecord",
    "make_pair",
    "build_pair",
    "measure_overlap",
    "add_noise",
    "compute_errors",
    "is_success",
    "run_pair",
    "run_benchmark",
    "write_csv",
    "load_config",
    "EnvironmentSpec",
    "gen_environment",
]

log = logging.getLogger(__name__)

CSV_VERSION = 1
ROTATION_THRESHOLD = 0.1745
TRANSLATION_FACTOR = 5.0


@dataclass(frozen=True)
class NoiseSpec:
    """Per-point jitter plus per-chunk rigid drift emulating keyframe pose error."""

    point_sigma: float = 0.0
    pose_sigma_t: float = 0.0
    pose_sigma_r: float = 0.0
    seed: int = 0
    chunk_size: int = 1000

    def __post_init__(self):
        if min(self.point_sigma, self.pose_sigma_t, self.pose_sigma_r) < 0:
            raise ValueError("noise sigmas must be non-negative")
        if self.chunk_size <= 0:
            raise ValueError("chunk_size must be positive")

    # Pose drift (m, rad) and point jitter (m) for the named noise levels.
    PRESETS = {
        "0.00": (0.0, 0.0, 0.0),
        "0.02": (0.02, 0.01, 0.02),
        "0.05": (0.05, 0.025, 0.05),
    }

    @classmethod
    def preset(cls, name: str, seed: int = 0) -> "NoiseSpec":
        key = f"{float(name):.2f}"
        if key not in cls.PRESETS:
            raise ValueError(f"unknown noise preset {name!r}; known: {sorted(cls.PRESETS)}")
        t, r, p = cls.PRESETS[key]
        return cls(point_sigma=p, pose_sigma_t=t, pose_sigma_r=r, seed=seed)

    @property
    def is_zero(self) -> bool:
        return self.point_sigma == 0 and self.pose_sigma_t == 0 and self.pose_sigma_r == 0


def _rotation_zyx(yaw: float, pitch: float, roll: float) -> np.ndarray:
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    return rz @ ry @ rx


def add_noise(cloud: PointCloud, n: NoiseSpec) -> PointCloud:
    """Perturb contiguous chunks of points rigidly, then jitter every point.

    Each chunk of ``n.chunk_size`` consecutive points stands in for one
    keyframe: it is rotated about its centroid by Gaussian yaw/pitch/roll and
    shifted by a Gaussian translation. Isotropic point jitter follows.
    """
    if n.is_zero or cloud.is_empty:
        return cloud
    rng = np.random.default_rng(n.seed)
    pts = np.array(cloud.points)
    if n.pose_sigma_t > 0 or n.pose_sigma_r > 0:
        for start in range(0, pts.shape[0], n.chunk_size):
            chunk = pts[start:start + n.chunk_size]
            ypr = rng.normal(0.0, n.pose_sigma_r, 3)
            t = rng.normal(0.0, n.pose_sigma_t, 3)
            c = chunk.mean(axis=0)
            r = _rotation_zyx(*ypr)
            pts[start:start + n.chunk_size] = (chunk - c) @ r.T + c + t
    if n.point_sigma > 0:
        pts += rng.normal(0.0, n.point_sigma, pts.shape)
    return PointCloud(pts)


def measure_overlap(a: PointCloud, b: PointCloud, g: float) -> float:
    """Jaccard ratio of the occupied voxel sets of two clouds in a common frame."""
    if a.is_empty and b.is_empty:
        return 0.0
    ka = {tuple(k) for k in voxel_keys(a.points, g).tolist()}
    kb = {tuple(k) for k in voxel_keys(b.points, g).tolist()}
    union = len(ka | kb)
    return len(ka & kb) / union if union else 0.0


def make_pair(
    cloud: PointCloud, t_gt: Transform4DoF, overlap: float, seed: int = 0
) -> tuple[PointCloud, PointCloud]:
    """Cut two overlapping axis-aligned crops and express the second in its own frame.

    Crops split the cloud along its longer horizontal axis so that the shared
    band holds about ``overlap`` of the points. ``map_d`` is moved by the
    inverse of ``t_gt``, so ``t_gt`` maps ``map_d`` back onto ``map_c``.
    """
    if not 0.0 < overlap <= 1.0:
        raise OverlapInfeasible(f"overlap must lie in (0, 1], got {overlap}")
    if cloud.is_empty:
        raise OverlapInfeasible("cannot crop an empty cloud")
    if overlap == 1.0:
        return cloud, apply_transform(cloud, invert(t_gt)) if t_gt != Transform4DoF() else cloud
    pts = cloud.points
    span = pts[:, :2].max(axis=0) - pts[:, :2].min(axis=0)
    axis = int(np.argmax(span))
    coord = pts[:, axis]
    q = 0.5 * (1.0 - overlap)
    hi = np.quantile(coord, 1.0 - q)
    lo = np.quantile(coord, q)
    low_side = coord <= hi
    high_side = coord >= lo
    rng = np.random.default_rng(seed)
    if rng.random() < 0.5:
        mc, md = low_side, high_side
    else:
        mc, md = high_side, low_side
    if not mc.any() or not md.any():
        raise OverlapInfeasible("crop produced an empty map")
    map_c = cloud.subset(mc)
    map_d = apply_transform(cloud.subset(md), invert(t_gt))
    return map_c, map_d


def compute_errors(t_est: Transform4DoF, t_gt: Transform4DoF) -> tuple[float, float]:
    """Translation error (3D norm, metres) and absolute yaw error (radians)."""
    dt = math.sqrt((t_est.x - t_gt.x) ** 2 + (t_est.y - t_gt.y) ** 2 + (t_est.z - t_gt.z) ** 2)
    dr = abs(wrap_angle(t_est.theta - t_gt.theta))
    return dt, dr


def is_success(dt: float, dr: float, g: float) -> bool:
    return dt <= TRANSLATION_FACTOR * g and dr <= ROTATION_THRESHOLD


@dataclass(frozen=True)
class BenchmarkConfig:
    """Which (environment, noise, seed, grid) combinations to run.

    Every combination yields one map pair. The planted transform, overlap and
    noise seeds all derive from the combination, so reruns are reproducible.
    """

    environments: tuple[int, ...] = (0,)
    noise: tuple[str, ...] = ("0.00",)
    seeds: tuple[int, ...] = (0,)
    grids: tuple[float, ...] = (0.05,)
    overlap_min: float = 0.6
    overlap_max: float = 0.9
    max_z_steps: int = 20
    max_translation: float = 5.0
    density: float = 3000.0
    furniture_per_room: int = 8
    match_seed: int = 0
    max_features: int = 1000
    max_hamming: int = 40
    t_xy: float | None = None
    t_theta: float = 0.05
    min_cluster: int = 3
    inlier_threshold: float | None = None
    min_inliers: int = 10
    workers: int = 1
    output: str | None = None
    plot_data: str | None = None

    def cases(self) -> list[tuple[int, str, int, float]]:
        return [(e, n, s, g) for e in self.environments for n in self.noise for s in self.seeds for g in self.grids]

    def match_config(self, g: float) -> MatchConfig:
        return MatchConfig(
            grid=g,
            seed=self.match_seed,
            max_features=self.max_features,
            max_hamming=self.max_hamming,
            ransac=RansacParams.for_grid(
                g,
                min_inliers=self.min_inliers,
                **({"inlier_threshold": self.inlier_threshold} if self.inlier_threshold else {}),
            ),
            consensus=ConsensusParams(
                t_xy=self.t_xy if self.t_xy else 2.0 * g, t_theta=self.t_theta, min_cluster=self.min_cluster
            ),
        )


@dataclass
class BenchmarkRecord:
    pair_id: str
    environment: int
    noise: str
    seed: int
    grid: float
    overlap: float
    gt: Transform4DoF
    est: Transform4DoF | None
    dt: float
    dt_xy: float
    dr: float
    consensus_size: int
    points_c: int
    points_d: int
    payload_bytes: int
    raw_cloud_bytes: int
    slice_bytes: int
    success: bool
    error: str = ""
    timings: dict = field(default_factory=dict)


def _pair_id(env: int, noise: str, seed: int, g: float) -> str:
    return f"e{env:04d}-n{float(noise):.2f}-s{seed:04d}-g{g:.4f}"


def _case_rng(env: int, noise: str, seed: int, g: float, purpose: int) -> np.random.Generator:
    return np.random.default_rng([env, int(round(float(noise) * 1000)), seed, int(round(g * 1e6)), purpose])


def planted_transform(cfg: BenchmarkConfig, env: int, noise: str, seed: int, g: float):
    rng = _case_rng(env, noise, seed, g, 0)
    steps = int(rng.integers(-cfg.max_z_steps, cfg.max_z_steps + 1))
    t = Transform4DoF(
        rng.uniform(-cfg.max_translation, cfg.max_translation),
        rng.uniform(-cfg.max_translation, cfg.max_translation),
        steps * g,
        rng.uniform(-math.pi, math.pi),
    )
    return t, float(rng.uniform(cfg.overlap_min, cfg.overlap_max)), int(rng.integers(2**31))


_ENV_CACHE: dict = {}


def environment_cloud(cfg: BenchmarkConfig, env: int) -> PointCloud:
    """Unfiltered scan of environment ``env``; cached across cases."""
    key = (env, cfg.density, cfg.furniture_per_room)
    if key not in _ENV_CACHE:
        if len(_ENV_CACHE) > 4:
            _ENV_CACHE.clear()
        _ENV_CACHE[key] = gen_environment(indoor_scene(env, cfg.density, cfg.furniture_per_room))
    return _ENV_CACHE[key]


def build_pair(cfg: BenchmarkConfig, env: int, noise: str, seed: int, g: float):
    """The two noisy, unfiltered maps of one case with their planted transform.

    Returns ``(map_c, map_d, t_gt, overlap)``; ``t_gt`` maps ``map_d`` into
    ``map_c``'s frame.
    """
    world = environment_cloud(cfg, env)
    t_gt, overlap, crop_seed = planted_transform(cfg, env, noise, seed, g)
    map_c, map_d = make_pair(world, t_gt, overlap, crop_seed)
    noise_rng = _case_rng(env, noise, seed, g, 1)
    map_c = add_noise(map_c, NoiseSpec.preset(noise, int(noise_rng.integers(2**31))))
    map_d = add_noise(map_d, NoiseSpec.preset(noise, int(noise_rng.integers(2**31))))
    return map_c, map_d, t_gt, overlap


def run_pair(cfg: BenchmarkConfig, env: int, noise: str, seed: int, g: float) -> BenchmarkRecord:
    """Generate, pair, perturb, match and score one benchmark case."""
    from .exchange import serialize_payload

    pid = _pair_id(env, noise, seed, g)
    timings = {}
    t0 = time.perf_counter()
    map_c, map_d, t_gt, overlap = build_pair(cfg, env, noise, seed, g)
    timings["generate"] = time.perf_counter() - t0

    mcfg = cfg.match_config(g)
    t1 = time.perf_counter()
    sc = prepare_slices(map_c, mcfg)
    sd = prepare_slices(map_d, mcfg)
    timings["slice"] = time.perf_counter() - t1
    payload = len(serialize_payload(sd))
    raw_bytes = 12 * len(map_d)
    slice_bytes = sc.nbytes() + sd.nbytes()
    t2 = time.perf_counter()
    est, err, size = None, "", 0
    try:
        res = match_slice_sets(sc, sd, mcfg)
        est, size = res.transform, res.consensus_size
    except NoConsensus as exc:
        err = f"NoConsensus: {exc}"
    except TomoError as exc:
        err = f"{type(exc).__name__}: {exc}"
    timings["correlate"] = time.perf_counter() - t2
    timings["match_total"] = timings["slice"] + timings["correlate"]
    timings["total"] = time.perf_counter() - t0

    if est is None:
        dt = dt_xy = dr = math.nan
        ok = False
    else:
        dt, dr = compute_errors(est, t_gt)
        dt_xy = math.hypot(est.x - t_gt.x, est.y - t_gt.y)
        ok = is_success(dt, dr, g)
    return BenchmarkRecord(
        pid, env, f"{float(noise):.2f}", seed, g, overlap, t_gt, est, dt, dt_xy, dr, size,
        len(map_c), len(map_d), payload, raw_bytes, slice_bytes, ok, err, timings,
    )


CSV_COLUMNS = (
    "pair_id", "environment", "noise", "seed", "grid", "overlap",
    "gt_x", "gt_y", "gt_z", "gt_theta", "est_x", "est_y", "est_z", "est_theta",
    "dt", "dt_xy", "dr", "consensus_size", "points_c", "points_d",
    "payload_bytes_proxy", "raw_cloud_bytes", "slice_bytes_proxy", "success", "error",
)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _row(r: BenchmarkRecord) -> list[str]:
    est = r.est.as_tuple() if r.est is not None else (math.nan,) * 4
    vals = [
        r.pair_id, r.environment, r.noise, r.seed, r.grid, r.overlap,
        *r.gt.as_tuple(), *est,
        r.dt, r.dt_xy, r.dr, r.consensus_size, r.points_c, r.points_d,
        r.payload_bytes, r.raw_cloud_bytes, r.slice_bytes, r.success, r.error,
    ]
    return [_fmt(v) for v in vals]


def records_to_csv(records: list[BenchmarkRecord]) -> str:
    """Deterministic CSV text: a versioned comment line, header, one row per pair."""
    buf = io.StringIO()
    buf.write(
        f"# tomomatch-benchmark v{CSV_VERSION}; memory columns are proxies "
        "(serialized payload and live slice-set bytes), not resident set size\n"
    )
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in sorted(records, key=lambda r: r.pair_id):
        w.writerow(_row(r))
    return buf.getvalue()


def write_csv(records: list[BenchmarkRecord], path) -> None:
    Path(path).write_text(records_to_csv(records), encoding="utf-8")


def write_plot_data(records: list[BenchmarkRecord], directory) -> None:
    """One two-column file per metric, ready for any plotting tool.

    Wall-clock timings live only here since they differ between runs.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    recs = sorted(records, key=lambda r: r.pair_id)
    metrics = {
        "dt": lambda r: r.dt,
        "dr": lambda r: r.dr,
        "payload_bytes": lambda r: r.payload_bytes,
        "time_match_total": lambda r: r.timings.get("match_total", math.nan),
        "time_slice": lambda r: r.timings.get("slice", math.nan),
        "time_correlate": lambda r: r.timings.get("correlate", math.nan),
        "time_total": lambda r: r.timings.get("total", math.nan),
    }
    for name, get in metrics.items():
        lines = [f"# pair_id {name}"] + [f"{r.pair_id} {_fmt(get(r))}" for r in recs]
        (d / f"{name}.dat").write_text("\n".join(lines) + "\n")


def run_benchmark(cfg: BenchmarkConfig, output=None) -> list[BenchmarkRecord]:
    """Run every case of ``cfg``; failed matches are recorded, not raised.

    Records come back sorted by pair id regardless of ``cfg.workers``.
    """
    cases = cfg.cases()

    def one(case):
        rec = run_pair(cfg, *case)
        log.info("%s dt=%.3f dr=%.4f success=%s", rec.pair_id, rec.dt, rec.dr, rec.success)
        return rec

    if cfg.workers > 1 and len(cases) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(one, cases))
    else:
        records = [one(c) for c in cases]
    records.sort(key=lambda r: r.pair_id)
    output = output or cfg.output
    if output:
        write_csv(records, output)
    if cfg.plot_data:
        write_plot_data(records, cfg.plot_data)
    return records


def success_rate(records: list[BenchmarkRecord]) -> float:
    return sum(r.success for r in records) / len(records) if records else 0.0


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------

_TUPLE_TYPES = {"environments": int, "noise": str, "seeds": int, "grids": float}


def _parse_value(name: str, raw: str):
    raw = raw.strip()
    if name in _TUPLE_TYPES:
        conv = _TUPLE_TYPES[name]
        items = []
        for part in raw.split(","):
            part = part.strip()
            if not part:
                continue
            if conv is int and ".." in part:
                a, b = part.split("..", 1)
                items.extend(range(int(a), int(b) + 1))
            else:
                items.append(conv(part))
        return tuple(items)
    ftype = {f.name: f.type for f in fields(BenchmarkConfig)}[name]
    if raw.lower() in ("", "none", "null"):
        return None
    if "int" in ftype and "float" not in ftype:
        return int(raw)
    if "float" in ftype:
        return float(raw)
    return raw


def parse_config(text: str, env: dict | None = None) -> BenchmarkConfig:
    """Parse ``key = value`` lines into a :class:`BenchmarkConfig`.

    Blank lines and ``#`` comments are ignored. List keys take comma
    separated values; integer lists also accept ``a..b`` ranges. Environment
    variables named ``TOMO_<KEY>`` override file values.
    """
    known = {f.name for f in fields(BenchmarkConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_").lower()
        if key not in known:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw)
    env = os.environ if env is None else env
    for key in known:
        ev = env.get(f"TOMO_{key.upper()}")
        if ev is not None:
            values[key] = _parse_value(key, ev)
    return replace(BenchmarkConfig(), **values)


def load_config(path, env: dict | None = None) -> BenchmarkConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), env)
