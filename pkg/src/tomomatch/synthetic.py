"""Synthetic indoor scenes sampled as point clouds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyCloud, InvalidSpec
from .geometry import PointCloud

__all__ = ["Wall", "Slab", "Box", "EnvironmentSpec", "gen_environment", "surface_area", "indoor_scene", "single_room"]


@dataclass(frozen=True)
class Wall:
    """Vertical rectangle over the segment (x0, y0)-(x1, y1), from z0 to z1."""

    x0: float
    y0: float
    x1: float
    y1: float
    z0: float
    z1: float


@dataclass(frozen=True)
class Slab:
    """Horizontal rectangle [x0, x1] x [y0, y1] at height z (floors, ceilings)."""

    x0: float
    y0: float
    x1: float
    y1: float
    z: float


@dataclass(frozen=True)
class Box:
    """Box resting at z0 with footprint (sx, sy) centred at (cx, cy), yawed by ``yaw``."""

    cx: float
    cy: float
    z0: float
    sx: float
    sy: float
    sz: float
    yaw: float = 0.0
    bottom: bool = False


@dataclass(frozen=True)
class EnvironmentSpec:
    walls: tuple[Wall, ...] = ()
    slabs: tuple[Slab, ...] = ()
    furniture: tuple[Box, ...] = ()
    density: float = 400.0
    seed: int = 0

    def validate(self) -> None:
        if not self.density > 0:
            raise InvalidSpec("density must be positive")
        for w in self.walls:
            if not w.z1 > w.z0 or math.hypot(w.x1 - w.x0, w.y1 - w.y0) <= 0:
                raise InvalidSpec(f"degenerate wall {w}")
        for s in self.slabs:
            if not (s.x1 > s.x0 and s.y1 > s.y0):
                raise InvalidSpec(f"degenerate slab {s}")
        for b in self.furniture:
            if min(b.sx, b.sy, b.sz) <= 0:
                raise InvalidSpec(f"box with non-positive size {b}")


def _quads(spec: EnvironmentSpec):
    """Every surface as (origin, edge1, edge2)."""
    out = []
    for w in spec.walls:
        o = np.array([w.x0, w.y0, w.z0])
        out.append((o, np.array([w.x1 - w.x0, w.y1 - w.y0, 0.0]), np.array([0.0, 0.0, w.z1 - w.z0])))
    for s in spec.slabs:
        out.append((np.array([s.x0, s.y0, s.z]), np.array([s.x1 - s.x0, 0.0, 0.0]), np.array([0.0, s.y1 - s.y0, 0.0])))
    for b in spec.furniture:
        c, s = math.cos(b.yaw), math.sin(b.yaw)
        ex = np.array([c, s, 0.0]) * b.sx
        ey = np.array([-s, c, 0.0]) * b.sy
        ez = np.array([0.0, 0.0, b.sz])
        base = np.array([b.cx, b.cy, b.z0]) - 0.5 * ex - 0.5 * ey
        out.append((base, ex, ez))
        out.append((base + ey, ex, ez))
        out.append((base, ey, ez))
        out.append((base + ex, ey, ez))
        out.append((base + ez, ex, ey))
        if b.bottom:
            out.append((base, ex, ey))
    return out


def surface_area(spec: EnvironmentSpec) -> float:
    return float(sum(np.linalg.norm(np.cross(e1, e2)) for _, e1, e2 in _quads(spec)))


def gen_environment(spec: EnvironmentSpec) -> PointCloud:
    """Sample every surface uniformly at ``spec.density`` points per square metre."""
    spec.validate()
    quads = _quads(spec)
    if not quads:
        raise EmptyCloud("environment has no surfaces")
    rng = np.random.default_rng(spec.seed)
    chunks = []
    for o, e1, e2 in quads:
        n = int(round(np.linalg.norm(np.cross(e1, e2)) * spec.density))
        if n == 0:
            continue
        ab = rng.random((n, 2))
        chunks.append(o + ab[:, :1] * e1 + ab[:, 1:] * e2)
    if not chunks:
        raise EmptyCloud("environment sampled to zero points")
    return PointCloud(np.concatenate(chunks))


def _wall_with_openings(x0, y0, x1, y1, height, openings):
    """Split a wall into pieces around door/window openings.

    ``openings`` holds (start, width, z_lo, z_hi) along the wall direction.
    """
    length = math.hypot(x1 - x0, y1 - y0)
    ux, uy = (x1 - x0) / length, (y1 - y0) / length

    def seg(a, b, z0, z1):
        return Wall(x0 + ux * a, y0 + uy * a, x0 + ux * b, y0 + uy * b, z0, z1)

    walls = []
    pos = 0.0
    for start, width, zlo, zhi in sorted(openings):
        if start > pos:
            walls.append(seg(pos, start, 0.0, height))
        if zlo > 0.0:
            walls.append(seg(start, start + width, 0.0, zlo))
        if zhi < height:
            walls.append(seg(start, start + width, zhi, height))
        pos = start + width
    if pos < length:
        walls.append(seg(pos, length, 0.0, height))
    return walls


def _room_walls(x0, y0, x1, y1, height, openings_by_side):
    sides = {
        "south": (x0, y0, x1, y0),
        "east": (x1, y0, x1, y1),
        "north": (x1, y1, x0, y1),
        "west": (x0, y1, x0, y0),
    }
    walls = []
    for name, (a, b, c, d) in sides.items():
        walls += _wall_with_openings(a, b, c, d, height, openings_by_side.get(name, []))
    return walls


def _furnish(rng, x0, y0, x1, y1, height, count):
    boxes = []
    w, d = x1 - x0, y1 - y0
    kinds = ["table", "shelf", "cabinet", "wall_cabinet", "column", "desk"]
    for _ in range(count):
        kind = kinds[int(rng.integers(len(kinds)))]
        if kind == "table":
            sx, sy, sz, z0 = rng.uniform(0.8, 1.8), rng.uniform(0.6, 1.0), rng.uniform(0.7, 0.78), 0.0
        elif kind == "desk":
            sx, sy, sz, z0 = rng.uniform(1.0, 1.6), rng.uniform(0.5, 0.8), rng.uniform(0.72, 0.8), 0.0
        elif kind == "shelf":
            sx, sy, sz, z0 = rng.uniform(0.8, 1.6), rng.uniform(0.3, 0.5), rng.uniform(1.5, 2.2), 0.0
        elif kind == "cabinet":
            sx, sy, sz, z0 = rng.uniform(0.5, 1.2), rng.uniform(0.4, 0.7), rng.uniform(0.8, 1.3), 0.0
        elif kind == "wall_cabinet":
            sx, sy, sz = rng.uniform(0.6, 1.4), rng.uniform(0.3, 0.45), rng.uniform(0.4, 0.7)
            z0 = rng.uniform(1.4, height - sz - 0.2)
        else:
            sx = sy = rng.uniform(0.25, 0.5)
            sz, z0 = height, 0.0
        margin = 0.5 * math.hypot(sx, sy) + 0.05
        if w <= 2 * margin or d <= 2 * margin:
            continue
        if kind in ("shelf", "wall_cabinet", "cabinet") and rng.random() < 0.7:
            # Push against a random wall.
            side = int(rng.integers(4))
            yaw = 0.0 if side in (0, 2) else 0.5 * math.pi
            half = 0.5 * sy + 0.02
            along = rng.uniform(0.5 * sx + 0.05, (w if side in (0, 2) else d) - 0.5 * sx - 0.05)
            if along <= 0:
                continue
            if side == 0:
                cx, cy = x0 + along, y0 + half
            elif side == 2:
                cx, cy = x0 + along, y1 - half
            elif side == 1:
                cx, cy = x1 - half, y0 + along
            else:
                cx, cy = x0 + half, y0 + along
        else:
            yaw = rng.uniform(-math.pi, math.pi)
            cx = rng.uniform(x0 + margin, x1 - margin)
            cy = rng.uniform(y0 + margin, y1 - margin)
        boxes.append(Box(cx, cy, z0, sx, sy, sz, yaw, bottom=z0 > 0.0))
    return boxes


def indoor_scene(seed: int, density: float = 3000.0, furniture_per_room: int = 8) -> EnvironmentSpec:
    """Two furnished rooms joined by a corridor, laid out along x.

    Room sizes, door and window placement and furniture all derive from
    ``seed``.
    """
    rng = np.random.default_rng(seed)
    height = rng.uniform(2.6, 3.0)
    la, wa = rng.uniform(6.0, 8.0), rng.uniform(5.0, 7.0)
    lc, wc = rng.uniform(5.0, 8.0), rng.uniform(1.8, 2.4)
    lb, wb = rng.uniform(6.0, 8.0), rng.uniform(5.0, 7.0)
    yc = rng.uniform(0.5, min(wa, wb) - wc - 0.5)
    xa1 = la
    xb0 = la + lc
    xb1 = xb0 + lb

    def door(length):
        w = rng.uniform(0.9, 1.2)
        return (rng.uniform(0.3, length - w - 0.3), w, 0.0, rng.uniform(2.0, 2.2))

    def window(length):
        w = rng.uniform(0.8, 1.6)
        return (rng.uniform(0.3, length - w - 0.3), w, rng.uniform(0.8, 1.1), rng.uniform(1.9, 2.3))

    # Doors to the corridor sit inside the corridor's y-span.
    dwa = min(1.1, wc - 0.2)
    walls = []
    walls += _room_walls(
        0.0, 0.0, xa1, wa, height,
        {
            "east": [(yc + 0.1, dwa, 0.0, 2.1)],
            "south": [window(la)],
            "north": [window(la), door(la)] if la > 5.5 else [window(la)],
            "west": [window(wa)],
        },
    )
    walls += _room_walls(
        xb0, 0.0, xb1, wb, height,
        {
            "west": [(wb - (yc + 0.1 + dwa), dwa, 0.0, 2.1)],
            "north": [window(lb)],
            "east": [window(wb)],
            "south": [door(lb)],
        },
    )
    corridor_windows = [window(lc)] if rng.random() < 0.5 else []
    walls += _wall_with_openings(xa1, yc, xb0, yc, height, corridor_windows)
    walls += _wall_with_openings(xb0, yc + wc, xa1, yc + wc, height, [])

    slabs = []
    for x0, y0, x1, y1 in ((0.0, 0.0, xa1, wa), (xa1, yc, xb0, yc + wc), (xb0, 0.0, xb1, wb)):
        slabs.append(Slab(x0, y0, x1, y1, 0.0))
        slabs.append(Slab(x0, y0, x1, y1, height))

    furniture = []
    furniture += _furnish(rng, 0.0, 0.0, xa1, wa, height, furniture_per_room)
    furniture += _furnish(rng, xb0, 0.0, xb1, wb, height, furniture_per_room)
    furniture += _furnish(rng, xa1, yc, xb0, yc + wc, height, 2)
    return EnvironmentSpec(tuple(walls), tuple(slabs), tuple(furniture), density, seed)


def single_room(seed: int, density: float = 3000.0, furniture: int = 8) -> EnvironmentSpec:
    """One furnished room with a door and a window."""
    rng = np.random.default_rng(seed)
    height = rng.uniform(2.5, 3.0)
    lx, ly = rng.uniform(5.0, 7.0), rng.uniform(4.0, 6.0)
    openings = {
        "south": [(rng.uniform(0.3, lx - 1.3), rng.uniform(0.9, 1.0), 0.0, 2.1)],
        "north": [(rng.uniform(0.3, lx - 1.9), rng.uniform(0.8, 1.6), rng.uniform(0.8, 1.1), 2.0)],
    }
    walls = _room_walls(0.0, 0.0, lx, ly, height, openings)
    slabs = (Slab(0.0, 0.0, lx, ly, 0.0), Slab(0.0, 0.0, lx, ly, height))
    boxes = _furnish(rng, 0.0, 0.0, lx, ly, height, furniture)
    return EnvironmentSpec(tuple(walls), slabs, tuple(boxes), density, seed)
