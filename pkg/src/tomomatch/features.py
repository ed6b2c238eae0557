"""Corner keypoints and oriented 128-bit binary descriptors on slice images.

Detection is a segment test on the 0/255 bitmap: a pixel is a corner
candidate when at least ``ARC_LENGTH`` contiguous pixels of the radius-3
Bresenham circle differ from it by the contrast threshold. On a binary image
with threshold 128 this reduces to "differs from the centre". Candidates are
scored with a Harris response on the box-blurred bitmap, suppressed in a 3x3
window, and the best ``max_k`` are kept.

All image operations run on a zero-padded copy, so results are equivariant
under whole-pixel translation of the image content.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ._pattern import PATTERN
from .errors import TruncatedPayload
from .tomography import BinaryImage, pixels_to_metric

__all__ = [
    "Keypoint",
    "FeatureSet",
    "CorrespondenceSet",
    "detect_keypoints",
    "compute_descriptors",
    "extract_features",
    "match_descriptors",
    "hamming_matrix",
]

DESCRIPTOR_BITS = 128
DESCRIPTOR_BYTES = DESCRIPTOR_BITS // 8
ARC_LENGTH = 9
FAST_THRESHOLD = 128
ORIENTATION_RADIUS = 15
ORIENTATION_BINS = 30  # 12 degree bins
HARRIS_K = 0.04
HARRIS_BLOCK = 7
PAD = 22

# Radius-3 Bresenham circle as (du, dv), walked clockwise from the top.
CIRCLE = (
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
)

_PATTERN = np.asarray(PATTERN, dtype=np.float64)


def _rotated_patterns() -> np.ndarray:
    out = np.empty((ORIENTATION_BINS, DESCRIPTOR_BITS, 4), dtype=np.int64)
    for b in range(ORIENTATION_BINS):
        a = 2.0 * math.pi * b / ORIENTATION_BINS
        c, s = math.cos(a), math.sin(a)
        for j in (0, 2):
            x, y = _PATTERN[:, j], _PATTERN[:, j + 1]
            out[b, :, j] = np.rint(c * x - s * y)
            out[b, :, j + 1] = np.rint(s * x + c * y)
    return out


_ROT_PATTERNS = _rotated_patterns()
_ROT_PATTERNS.setflags(write=False)


def _disk(radius: int) -> tuple[np.ndarray, np.ndarray]:
    d = np.arange(-radius, radius + 1)
    du, dv = np.meshgrid(d, d)
    inside = du * du + dv * dv <= radius * radius
    return du[inside], dv[inside]


_DISK_U, _DISK_V = _disk(ORIENTATION_RADIUS)


@dataclass(frozen=True)
class Keypoint:
    u: float
    v: float
    response: float
    orientation: float


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """Keypoints of one slice with descriptors and metric positions.

    ``metric_xy`` is float32 on purpose: it is what goes on the wire, and
    keeping the local copy at the same precision makes local and remote
    matching agree bit for bit. ``uv`` and ``response`` are NaN when the set
    was decoded from a payload.
    """

    uv: np.ndarray
    response: np.ndarray
    orientation: np.ndarray
    descriptors: np.ndarray
    metric_xy: np.ndarray

    def __post_init__(self):
        n = self.descriptors.shape[0]
        for name, dt, shape in (
            ("uv", np.float64, (n, 2)),
            ("response", np.float64, (n,)),
            ("orientation", np.float32, (n,)),
            ("descriptors", np.uint8, (n, DESCRIPTOR_BYTES)),
            ("metric_xy", np.float32, (n, 2)),
        ):
            arr = np.ascontiguousarray(getattr(self, name), dtype=dt).reshape(shape)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.descriptors.shape[0]

    @classmethod
    def empty(cls) -> "FeatureSet":
        return cls(
            np.empty((0, 2)), np.empty(0), np.empty(0), np.empty((0, DESCRIPTOR_BYTES)), np.empty((0, 2))
        )

    def keypoints(self) -> list[Keypoint]:
        return [
            Keypoint(float(u), float(v), float(r), float(o))
            for (u, v), r, o in zip(self.uv, self.response, self.orientation)
        ]

    def nbytes(self) -> int:
        return sum(
            a.nbytes for a in (self.uv, self.response, self.orientation, self.descriptors, self.metric_xy)
        )

    # Wire format per feature: metric x, y, orientation as float32 LE, then 16 descriptor bytes.
    _REC = np.dtype([("xy", "<f4", 2), ("ori", "<f4"), ("desc", "u1", DESCRIPTOR_BYTES)])

    def to_bytes(self) -> bytes:
        rec = np.empty(len(self), dtype=self._REC)
        rec["xy"] = self.metric_xy
        rec["ori"] = self.orientation
        rec["desc"] = self.descriptors
        return rec.tobytes()

    @classmethod
    def from_bytes(cls, buf, count: int) -> "FeatureSet":
        need = count * cls._REC.itemsize
        if len(buf) < need:
            raise TruncatedPayload(f"need {need} bytes for {count} features, have {len(buf)}")
        rec = np.frombuffer(buf, dtype=cls._REC, count=count)
        nan = np.full(count, np.nan)
        return cls(np.column_stack([nan, nan]), nan, rec["ori"], rec["desc"], rec["xy"])

    @classmethod
    def record_size(cls) -> int:
        return cls._REC.itemsize


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """Index pairs ``(idx_a[i], idx_b[i])`` with their Hamming distances."""

    idx_a: np.ndarray
    idx_b: np.ndarray
    distance: np.ndarray

    def __len__(self) -> int:
        return self.idx_a.shape[0]

    def pairs(self) -> list[tuple[int, int, int]]:
        return list(zip(self.idx_a.tolist(), self.idx_b.tolist(), self.distance.tolist()))


def _padded(image: BinaryImage) -> np.ndarray:
    return np.pad(image.bits, PAD).astype(np.uint8)


def _segment_test(img: np.ndarray) -> np.ndarray:
    """Boolean mask of pixels passing the contiguous-arc test (0/1 image)."""
    h, w = img.shape
    core = img[3:h - 3, 3:w - 3]
    diff = []
    for du, dv in CIRCLE:
        ring = img[3 + dv:h - 3 + dv, 3 + du:w - 3 + du]
        # On a 0/255 image the +-128 contrast test is "differs from the centre".
        diff.append(ring != core)
    run = np.zeros(core.shape, dtype=np.int16)
    best = np.zeros(core.shape, dtype=np.int16)
    for i in range(len(CIRCLE) + ARC_LENGTH - 1):
        d = diff[i % len(CIRCLE)]
        run = np.where(d, run + 1, 0)
        np.maximum(best, run, out=best)
    out = np.zeros(img.shape, dtype=bool)
    out[3:h - 3, 3:w - 3] = best >= ARC_LENGTH
    return out


def _box_blur(img: np.ndarray) -> np.ndarray:
    """3x3 box sum of a 0/1 image as integers 0..9."""
    return ndimage.correlate(img.astype(np.int16), np.ones((3, 3), dtype=np.int16), mode="constant")


def _harris(smooth: np.ndarray) -> np.ndarray:
    f = smooth.astype(np.float64) / 9.0
    gx = ndimage.sobel(f, axis=1, mode="constant")
    gy = ndimage.sobel(f, axis=0, mode="constant")
    win = np.ones((HARRIS_BLOCK, HARRIS_BLOCK))
    sxx = ndimage.correlate(gx * gx, win, mode="constant")
    syy = ndimage.correlate(gy * gy, win, mode="constant")
    sxy = ndimage.correlate(gx * gy, win, mode="constant")
    return sxx * syy - sxy * sxy - HARRIS_K * (sxx + syy) ** 2


def _nms(score: np.ndarray) -> np.ndarray:
    """3x3 non-maximum suppression; ties resolved toward the earlier raster position."""
    h, w = score.shape
    padded = np.full((h + 2, w + 2), -np.inf)
    padded[1:-1, 1:-1] = score
    keep = np.isfinite(score)
    for dv in (-1, 0, 1):
        for du in (-1, 0, 1):
            if du == 0 and dv == 0:
                continue
            nb = padded[1 + dv:h + 1 + dv, 1 + du:w + 1 + du]
            if dv < 0 or (dv == 0 and du < 0):
                keep &= score > nb
            else:
                keep &= score >= nb
    return keep


def _detect(img: np.ndarray, smooth: np.ndarray, max_k: int, min_response: float):
    """Return (u, v, response) arrays in padded coordinates, best first."""
    cand = _segment_test(img)
    if not cand.any():
        return np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0)
    resp = _harris(smooth)
    score = np.where(cand & (resp > min_response), resp, -np.inf)
    keep = _nms(score)
    v, u = np.nonzero(keep)
    r = score[v, u]
    order = np.lexsort((u, v, -r))[:max_k]
    return u[order], v[order], r[order]


def _orientation(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    patch = img[v[:, None] + _DISK_V[None, :], u[:, None] + _DISK_U[None, :]].astype(np.float64)
    m10 = patch @ _DISK_U.astype(np.float64)
    m01 = patch @ _DISK_V.astype(np.float64)
    return np.arctan2(m01, m10)


def _orientation_bin(theta: np.ndarray) -> np.ndarray:
    step = 2.0 * math.pi / ORIENTATION_BINS
    return np.mod(np.rint(np.asarray(theta, dtype=np.float64) / step).astype(np.int64), ORIENTATION_BINS)


def _describe(smooth: np.ndarray, u: np.ndarray, v: np.ndarray, theta: np.ndarray) -> np.ndarray:
    if u.shape[0] == 0:
        return np.empty((0, DESCRIPTOR_BYTES), dtype=np.uint8)
    pat = _ROT_PATTERNS[_orientation_bin(theta)]  # (n, 128, 4)
    h, w = smooth.shape
    x1 = np.clip(u[:, None] + pat[:, :, 0], 0, w - 1)
    y1 = np.clip(v[:, None] + pat[:, :, 1], 0, h - 1)
    x2 = np.clip(u[:, None] + pat[:, :, 2], 0, w - 1)
    y2 = np.clip(v[:, None] + pat[:, :, 3], 0, h - 1)
    bits = smooth[y1, x1] < smooth[y2, x2]
    return np.packbits(bits, axis=1)


def detect_keypoints(image: BinaryImage, max_k: int = 1000, min_response: float = 0.0) -> list[Keypoint]:
    """Segment-test corners, strongest first, at most ``max_k``."""
    img = _padded(image)
    smooth = _box_blur(img)
    u, v, r = _detect(img, smooth, max_k, min_response)
    theta = _orientation(img, u, v)
    return [
        Keypoint(float(a - PAD), float(b - PAD), float(c), float(t)) for a, b, c, t in zip(u, v, r, theta)
    ]


def compute_descriptors(image: BinaryImage, kps: list[Keypoint]) -> np.ndarray:
    """128-bit descriptors for ``kps``, as an (n, 16) uint8 array.

    Reads outside the image see zeros.
    """
    smooth = _box_blur(_padded(image))
    u = np.array([int(round(k.u)) for k in kps], dtype=np.int64) + PAD
    v = np.array([int(round(k.v)) for k in kps], dtype=np.int64) + PAD
    theta = np.array([k.orientation for k in kps], dtype=np.float64)
    return _describe(smooth, u, v, theta)


def extract_features(image: BinaryImage, max_k: int = 1000, min_response: float = 0.0) -> FeatureSet:
    """Detect, orient, describe and place keypoints in the metric frame."""
    img = _padded(image)
    smooth = _box_blur(img)
    u, v, r = _detect(img, smooth, max_k, min_response)
    if u.shape[0] == 0:
        return FeatureSet.empty()
    theta = _orientation(img, u, v)
    desc = _describe(smooth, u, v, theta)
    uv = np.column_stack([u - PAD, v - PAD]).astype(np.float64)
    return FeatureSet(uv, r, theta, desc, pixels_to_metric(image, uv))


def hamming_matrix(da: np.ndarray, db: np.ndarray) -> np.ndarray:
    """Pairwise Hamming distances between two packed descriptor arrays."""
    da = np.asarray(da, dtype=np.uint8)
    db = np.asarray(db, dtype=np.uint8)
    if da.shape[0] == 0 or db.shape[0] == 0:
        return np.zeros((da.shape[0], db.shape[0]), dtype=np.int64)
    a = np.unpackbits(da, axis=1).astype(np.float32)
    b = np.unpackbits(db, axis=1).astype(np.float32)
    # Integer-valued up to 128, exact in float32.
    d = a @ (1.0 - b).T + (1.0 - a) @ b.T
    return np.rint(d).astype(np.int64)


def match_descriptors(fa: FeatureSet, fb: FeatureSet, max_hamming: int = 40) -> CorrespondenceSet:
    """Mutual nearest neighbours under Hamming distance, distance <= ``max_hamming``.

    Ties in either direction go to the lowest index, which keeps the
    result symmetric under swapping the arguments.
    """
    da = fa.descriptors if isinstance(fa, FeatureSet) else np.asarray(fa, dtype=np.uint8)
    db = fb.descriptors if isinstance(fb, FeatureSet) else np.asarray(fb, dtype=np.uint8)
    if da.shape[0] == 0 or db.shape[0] == 0:
        e = np.empty(0, dtype=np.int64)
        return CorrespondenceSet(e, e.copy(), e.copy())
    d = hamming_matrix(da, db)
    best_b = d.argmin(axis=1)
    best_a = d.argmin(axis=0)
    ia = np.arange(da.shape[0])
    dist = d[ia, best_b]
    ok = (best_a[best_b] == ia) & (dist <= max_hamming)
    return CorrespondenceSet(ia[ok], best_b[ok], dist[ok])

