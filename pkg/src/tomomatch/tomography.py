"""Horizontal slicing of a cloud and rasterization into binary occupancy images."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from .errors import EmptyCloud, EmptySlice, NonPositiveGrid, OutOfBounds
from .geometry import PointCloud

if TYPE_CHECKING:
    from .features import FeatureSet

__all__ = [
    "Slice",
    "BinaryImage",
    "SliceEntry",
    "SliceSet",
    "slice_heights",
    "band_index",
    "band_edges",
    "extract_slice",
    "rasterize",
    "pixel_to_metric",
    "slice_map",
    "write_pgm",
    "write_slice_index",
]


@dataclass(frozen=True, eq=False)
class Slice:
    """Points of a cloud with ``height - thickness < z <= height + thickness``."""

    height: float
    thickness: float
    points: np.ndarray

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """Row-major occupancy bitmap, ``bits[v, u]``.

    Pixel ``(u, v)`` covers ``[origin_x + u*g, origin_x + (u+1)*g)`` along x and
    the same along y with ``v``, where ``g`` is ``pixel_size``.
    """

    bits: np.ndarray
    origin_x: float
    origin_y: float
    pixel_size: float

    def __post_init__(self):
        b = np.ascontiguousarray(self.bits, dtype=bool)
        if b.ndim != 2:
            raise ValueError("bits must be a 2D array")
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def occupied(self) -> int:
        return int(self.bits.sum())

    def nbytes(self) -> int:
        return self.bits.nbytes


@dataclass(frozen=True, eq=False)
class SliceEntry:
    index: int
    height: float
    image: BinaryImage | None
    features: "FeatureSet"


@dataclass(frozen=True, eq=False)
class SliceSet:
    """Slices of one map keyed by band index ``k`` (height ``z_min + k*g``)."""

    grid_size: float
    z_min: float
    entries: tuple[SliceEntry, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.entries)

    def heights(self) -> list[float]:
        return [e.height for e in self.entries]

    def indices(self) -> list[int]:
        return [e.index for e in self.entries]

    def by_index(self) -> dict[int, SliceEntry]:
        return {e.index: e for e in self.entries}

    def nbytes(self) -> int:
        """Live bytes held by images and features (memory proxy)."""
        total = 0
        for e in self.entries:
            if e.image is not None:
                total += e.image.nbytes()
            total += e.features.nbytes()
        return total


def _height(z_min: float, k, g: float):
    return z_min + k * g


def slice_heights(cloud: PointCloud, g: float) -> list[float]:
    """Slice centre heights ``z_min + k*g`` covering the cloud's z-range.

    ``k`` starts at 0 and stops at the first band whose upper bound reaches
    ``z_max``, so that bands of half-thickness ``g/2`` cover every point.
    """
    if not g > 0:
        raise NonPositiveGrid(f"grid size must be positive, got {g}")
    if cloud.is_empty:
        raise EmptyCloud("cannot slice an empty cloud")
    z = cloud.points[:, 2]
    z_min = float(z.min())
    k_max = int(band_index(np.array([z.max()]), z_min, g)[0])
    return [_height(z_min, k, g) for k in range(k_max + 1)]


def band_edges(z_min: float, k, g: float):
    """Upper edge ``z_min + (k + 1/2) g`` of band ``k``.

    Band ``k`` spans ``(band_edges(k - 1), band_edges(k)]``. Computing every
    edge with one expression makes adjacent bands share it exactly, so
    rounding can neither drop a point between bands nor count it twice.
    """
    return z_min + (np.asarray(k, dtype=np.float64) + 0.5) * g


def band_index(z: np.ndarray, z_min: float, g: float) -> np.ndarray:
    """Band index of each z, i.e. the ``k`` with ``h_k - g/2 < z <= h_k + g/2``.

    The estimate from rounding is corrected against :func:`band_edges`.
    """
    z = np.asarray(z, dtype=np.float64)
    k = np.ceil((z - z_min) / g - 0.5).astype(np.int64)
    k = np.maximum(k, 0)
    k = np.where(z > band_edges(z_min, k, g), k + 1, k)
    k = np.where((k > 0) & (z <= band_edges(z_min, k - 1, g)), k - 1, k)
    return k


def extract_slice(cloud: PointCloud, h: float, t: float) -> Slice:
    """Collect the points with ``h - t < z <= h + t``."""
    if not t > 0:
        raise NonPositiveGrid(f"slice half-thickness must be positive, got {t}")
    z = cloud.points[:, 2]
    mask = (z > h - t) & (z <= h + t)
    return Slice(float(h), float(t), cloud.points[mask])


# Offsets within this many pixels below an integer count as on it, so that
# translating content by whole pixels never flips a floor.
_SNAP = 1e-9


def _pixel_index(d: np.ndarray, g: float) -> np.ndarray:
    return np.floor(d / g + _SNAP).astype(np.int64)


def _raster_xy(xy: np.ndarray, g: float) -> BinaryImage:
    if xy.shape[0] == 0:
        raise EmptySlice("cannot rasterize an empty slice")
    ox, oy = float(xy[:, 0].min()), float(xy[:, 1].min())
    u = _pixel_index(xy[:, 0] - ox, g)
    v = _pixel_index(xy[:, 1] - oy, g)
    bits = np.zeros((int(v.max()) + 1, int(u.max()) + 1), dtype=bool)
    bits[v, u] = True
    return BinaryImage(bits, ox, oy, float(g))


def rasterize(sl: Slice, g: float) -> BinaryImage:
    """Project a slice onto the xy-plane and mark occupied ``g x g`` pixels.

    The image origin is the minimum x/y of the slice points.
    """
    if not g > 0:
        raise NonPositiveGrid(f"grid size must be positive, got {g}")
    return _raster_xy(np.asarray(sl.points)[:, :2], g)


def pixel_to_metric(image: BinaryImage, u: float, v: float) -> tuple[float, float]:
    """Metric coordinate of the centre of pixel ``(u, v)``."""
    if not (0 <= u < image.width and 0 <= v < image.height):
        raise OutOfBounds(f"pixel ({u}, {v}) outside {image.width}x{image.height} image")
    g = image.pixel_size
    return image.origin_x + (u + 0.5) * g, image.origin_y + (v + 0.5) * g


def pixels_to_metric(image: BinaryImage, uv: np.ndarray) -> np.ndarray:
    """Vectorized :func:`pixel_to_metric` for an (N, 2) array of ``(u, v)``."""
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    if uv.size and (
        (uv < 0).any() or (uv[:, 0] >= image.width).any() or (uv[:, 1] >= image.height).any()
    ):
        raise OutOfBounds("pixel coordinates outside image")
    g = image.pixel_size
    out = np.empty_like(uv)
    out[:, 0] = image.origin_x + (uv[:, 0] + 0.5) * g
    out[:, 1] = image.origin_y + (uv[:, 1] + 0.5) * g
    return out


def slice_map(
    cloud: PointCloud,
    g: float,
    max_features: int = 1000,
    keep_images: bool = True,
    workers: int | None = None,
) -> SliceSet:
    """Slice a cloud at spacing ``g``, rasterize each band and extract features.

    Empty bands are omitted. ``workers > 1`` featurizes slices on a thread
    pool; the result does not depend on it.
    """
    from .features import extract_features

    if not g > 0:
        raise NonPositiveGrid(f"grid size must be positive, got {g}")
    if cloud.is_empty:
        raise EmptyCloud("cannot slice an empty cloud")
    pts = cloud.points
    z_min = float(pts[:, 2].min())
    k = band_index(pts[:, 2], z_min, g)
    order = np.argsort(k, kind="stable")
    ks, starts = np.unique(k[order], return_index=True)
    bounds = list(starts[1:]) + [len(order)]

    def build(i: int) -> SliceEntry:
        idx = order[starts[i]:bounds[i]]
        img = _raster_xy(pts[idx, :2], g)
        feats = extract_features(img, max_features)
        return SliceEntry(int(ks[i]), _height(z_min, int(ks[i]), g), img if keep_images else None, feats)

    if workers and workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(build, range(len(ks))))
    else:
        entries = [build(i) for i in range(len(ks))]
    return SliceSet(float(g), z_min, tuple(entries))


def slice_members(cloud: PointCloud, g: float) -> dict[int, np.ndarray]:
    """Point indices of every non-empty band, keyed by band index."""
    pts = cloud.points
    if cloud.is_empty:
        raise EmptyCloud("cannot slice an empty cloud")
    z_min = float(pts[:, 2].min())
    k = band_index(pts[:, 2], z_min, g)
    return {int(b): np.flatnonzero(k == b) for b in np.unique(k)}


def write_pgm(image: BinaryImage, path) -> None:
    """Write a binary P5 PGM, occupied pixels white, +y pointing up."""
    rows = np.where(image.bits[::-1], 255, 0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.width} {image.height}\n255\n".encode("ascii"))
        fh.write(rows.tobytes())


def write_slice_index(sset: SliceSet, directory, prefix: str = "slice") -> Path:
    """Dump every slice image as PGM plus an ``index.json`` sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    records = []
    for e in sset.entries:
        name = f"{prefix}_{e.index:04d}.pgm"
        rec = {"index": e.index, "height": e.height, "features": len(e.features)}
        if e.image is not None:
            write_pgm(e.image, directory / name)
            rec.update(
                file=name,
                origin=[e.image.origin_x, e.image.origin_y],
                width=e.image.width,
                height_px=e.image.height,
            )
        records.append(rec)
    out = directory / "index.json"
    out.write_text(
        json.dumps(
            {"grid_size": sset.grid_size, "z_min": sset.z_min, "slices": records}, indent=2
        )
    )
    return out

