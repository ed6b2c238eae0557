"""Point clouds, 4-DoF transforms, voxel filtering and cloud file I/O."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyCloud, NonFiniteCoordinate, NonPositiveGrid, ParseError

__all__ = [
    "PointCloud",
    "Transform4DoF",
    "wrap_angle",
    "voxel_keys",
    "voxel_filter",
    "apply_transform",
    "compose",
    "invert",
    "load_cloud",
    "save_cloud",
]

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    r = math.remainder(a, TWO_PI)
    return math.pi if r <= -math.pi else r


def wrap_angles(a: np.ndarray) -> np.ndarray:
    r = np.remainder(a + np.pi, TWO_PI) - np.pi
    return np.where(r <= -np.pi, np.pi, r)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """An unordered set of 3D points in a gravity-aligned frame.

    ``points`` is an (N, 3) float64 array that is made read-only on
    construction. ``grid_size`` records the voxel leaf size the cloud was
    filtered at, or ``None``.
    """

    points: np.ndarray
    grid_size: float | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True).reshape(-1, 3)
        if not np.isfinite(pts).all():
            raise NonFiniteCoordinate("point cloud contains NaN or infinite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def is_empty(self) -> bool:
        return self.points.shape[0] == 0

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.is_empty:
            raise EmptyCloud("empty cloud has no bounds")
        return self.points.min(axis=0), self.points.max(axis=0)

    def subset(self, mask_or_index) -> "PointCloud":
        return PointCloud(self.points[mask_or_index], self.grid_size)


@dataclass(frozen=True)
class Transform4DoF:
    """Gravity-aligned rigid transform: translation (x, y, z) and yaw ``theta``.

    ``theta`` is wrapped to (-pi, pi] at construction.
    """

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "z", "theta"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise NonFiniteCoordinate(f"transform component {name} is not finite")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @classmethod
    def identity(cls) -> "Transform4DoF":
        return cls()

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Transform4DoF":
        m = np.asarray(m, dtype=float)
        return cls(m[0, 3], m[1, 3], m[2, 3], math.atan2(m[1, 0], m[0, 0]))

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array(
            [
                [c, -s, 0.0, self.x],
                [s, c, 0.0, self.y],
                [0.0, 0.0, 1.0, self.z],
                [0.0, 0.0, 0.0, 1.0],
            ]
        )

    def apply(self, pts: np.ndarray) -> np.ndarray:
        """Map an (N, 3) array of points through the transform."""
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
        c, s = math.cos(self.theta), math.sin(self.theta)
        out = np.empty_like(pts)
        out[:, 0] = c * pts[:, 0] - s * pts[:, 1] + self.x
        out[:, 1] = s * pts[:, 0] + c * pts[:, 1] + self.y
        out[:, 2] = pts[:, 2] + self.z
        return out

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.z, self.theta)


def compose(a: Transform4DoF, b: Transform4DoF) -> Transform4DoF:
    """Return ``a * b``: apply ``b`` first, then ``a``."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Transform4DoF(
        a.x + c * b.x - s * b.y,
        a.y + s * b.x + c * b.y,
        a.z + b.z,
        a.theta + b.theta,
    )


def invert(t: Transform4DoF) -> Transform4DoF:
    c, s = math.cos(t.theta), math.sin(t.theta)
    return Transform4DoF(
        -(c * t.x + s * t.y),
        -(-s * t.x + c * t.y),
        -t.z,
        -t.theta,
    )


def apply_transform(cloud: PointCloud, t: Transform4DoF) -> PointCloud:
    # The voxel partition does not survive a change of frame, so grid_size is dropped.
    return PointCloud(t.apply(cloud.points), None)


def voxel_keys(points: np.ndarray, g: float) -> np.ndarray:
    """Integer voxel index ``floor(coord / g)`` per point, shape (N, 3)."""
    if not g > 0:
        raise NonPositiveGrid(f"grid size must be positive, got {g}")
    return np.floor(np.asarray(points, dtype=np.float64) / g).astype(np.int64)


def _flat_keys(keys: np.ndarray) -> np.ndarray:
    lo = keys.min(axis=0)
    k = keys - lo
    dims = k.max(axis=0) + 1
    if float(dims[0]) * float(dims[1]) * float(dims[2]) < 2.0**62:
        return (k[:, 0] * dims[1] + k[:, 1]) * dims[2] + k[:, 2]
    # Extents too large to pack: fall back to row-wise unique.
    _, inv = np.unique(keys, axis=0, return_inverse=True)
    return inv.reshape(-1)


def voxel_filter(cloud: PointCloud, g: float) -> PointCloud:
    """Replace the points of every occupied voxel of side ``g`` by their centroid.

    Cells are half-open, ``[i*g, (i+1)*g)``. Output points are ordered by
    voxel index (x-major), which keeps the result deterministic.
    """
    if not g > 0:
        raise NonPositiveGrid(f"grid size must be positive, got {g}")
    pts = cloud.points
    if pts.shape[0] == 0:
        return PointCloud(np.empty((0, 3)), float(g))
    flat = _flat_keys(voxel_keys(pts, g))
    _, inv, counts = np.unique(flat, return_inverse=True, return_counts=True)
    inv = inv.reshape(-1)
    out = np.empty((counts.shape[0], 3))
    for d in range(3):
        out[:, d] = np.bincount(inv, weights=pts[:, d], minlength=counts.shape[0]) / counts
    return PointCloud(out, float(g))


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def _detect_format(path: Path) -> str:
    with open(path, "rb") as fh:
        head = fh.read(4)
    return "ply" if head.startswith(b"ply") else "xyz"


def _check_finite(pts: np.ndarray, path) -> np.ndarray:
    if not np.isfinite(pts).all():
        raise NonFiniteCoordinate(f"{path}: non-finite coordinate")
    return pts


def _load_xyz(path: Path) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) < 3:
                raise ParseError(f"{path}:{lineno}: expected 'x y z'")
            try:
                rows.append((float(parts[0]), float(parts[1]), float(parts[2])))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    return np.array(rows, dtype=np.float64).reshape(-1, 3)


def _load_ply(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header")
    if end < 0:
        raise ParseError(f"{path}: missing end_header")
    nl = data.find(b"\n", end)
    if nl < 0:
        raise ParseError(f"{path}: truncated header")
    header = data[:end].decode("ascii", errors="replace").splitlines()
    body = data[nl + 1:]

    fmt = None
    elements: list[tuple[str, int, list]] = []
    for line in header[1:]:
        tok = line.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            fmt = tok[1] if len(tok) > 1 else None
        elif tok[0] == "element":
            if len(tok) != 3:
                raise ParseError(f"{path}: bad element line {line!r}")
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise ParseError(f"{path}: property outside element")
            if tok[1] == "list":
                elements[-1][2].append((tok[-1], None))
            else:
                if tok[1] not in _PLY_TYPES:
                    raise ParseError(f"{path}: unknown property type {tok[1]!r}")
                elements[-1][2].append((tok[2], _PLY_TYPES[tok[1]]))
    if fmt != "binary_little_endian":
        raise ParseError(f"{path}: only binary_little_endian PLY is supported (got {fmt})")

    offset = 0
    for name, count, props in elements:
        if any(t is None for _, t in props):
            if name == "vertex":
                raise ParseError(f"{path}: list properties on vertex are not supported")
            raise ParseError(f"{path}: cannot skip list-valued element {name!r} before vertex")
        dtype = np.dtype([(p, "<" + t) for p, t in props])
        if name != "vertex":
            offset += dtype.itemsize * count
            continue
        names = [p for p, _ in props]
        if not {"x", "y", "z"} <= set(names):
            raise ParseError(f"{path}: vertex element lacks x/y/z")
        need = dtype.itemsize * count
        if len(body) - offset < need:
            raise ParseError(f"{path}: truncated vertex data")
        arr = np.frombuffer(body, dtype=dtype, count=count, offset=offset)
        return np.column_stack([arr["x"], arr["y"], arr["z"]]).astype(np.float64)
    raise ParseError(f"{path}: no vertex element")


def load_cloud(path, format: str | None = None) -> PointCloud:
    """Read an ascii-xyz or binary little-endian PLY point cloud.

    ``format`` is ``"xyz"``, ``"ply"`` or ``None`` to sniff the file.
    Missing files raise ``OSError``.
    """
    path = Path(path)
    if format is None:
        format = _detect_format(path)
    if format in ("xyz", "ascii-xyz"):
        pts = _load_xyz(path)
    elif format == "ply":
        pts = _load_ply(path)
    else:
        raise ValueError(f"unknown cloud format {format!r}")
    return PointCloud(_check_finite(pts, path))


def save_cloud(cloud: PointCloud, path, format: str = "ply") -> None:
    """Write ``cloud`` as binary PLY (float32 x/y/z) or ascii-xyz."""
    path = Path(path)
    if format == "ply":
        header = (
            "ply\nformat binary_little_endian 1.0\n"
            "comment written by tomomatch\n"
            f"element vertex {len(cloud)}\n"
            "property float x\nproperty float y\nproperty float z\nend_header\n"
        )
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(np.ascontiguousarray(cloud.points, dtype="<f4").tobytes())
    elif format in ("xyz", "ascii-xyz"):
        np.savetxt(path, cloud.points, fmt="%.9g")
    else:
        raise ValueError(f"unknown cloud format {format!r}")

