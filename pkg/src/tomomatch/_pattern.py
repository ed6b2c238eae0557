"""Sampling-point table for the 128-bit oriented binary descriptor.

Each row is ``(x1, y1, x2, y2)`` in pixels relative to the keypoint; bit ``i``
is set when the smoothed image at point 1 is darker than at point 2. The
table is part of the descriptor definition: changing it changes every
descriptor, so bump ``PATTERN_VERSION`` alongside any edit.
"""

PATTERN_VERSION = 1

PATTERN = (
    (  0,   0,   0,   3), (  4,  -5,  -5,  -3), (  2,   8,   1,  -7), (  3,  -9,  -1,  -7),
    ( -7,   2,  -4,   5), ( -2, -10,   2,  -7), ( -5,  -1,   0,   8), ( -5,   1,   0,  -2),
    ( -3,  -3, -10,   6), ( -3,   3,   3,   2), (  8,   5,  -4,  -1), ( -6,  -1,  -7,  -6),
    ( -4,   4,  -2,   2), (  3,   0,  -4,   4), (  0,  -3,   4,   3), (  8,  10,   2,  -8),
    ( -1,   3,   5,  -6), (  9,   7,  -2,  -3), ( -8,  -1,  -3,  -2), (  6,   4,   5,  -3),
    (  5,  13,  -6,  -4), (  2,  -4,   3,   4), (  7,  -9,   7,  -2), (-13,   3,   4,   6),
    (  9,   5,   2,   6), ( -2,  -3,   6,  -7), ( -9,   1,  -8,  -2), ( 11,   6, -12, -11),
    (  2,   5,  -3,  -1), ( -4,   4,   9,  -2), ( -1,   5,   2,  10), ( -5,  -2,  -5,   8),
    ( -6,  -7,  -9,  -2), ( -1,   5,   8,   0), ( -3,  -1,  -5,   5), ( -3,  -8,  -1,   4),
    (  9,   2,  -9,   0), (  6,   1,   8,  -1), (  0,   0,   6,  -2), ( -5,   4,  -7,   2),
    (  1,  -1,   3,   2), ( -5,   4,   1,   2), (  1,  -4,   2,   9), (  0,   0,  -3,  -1),
    ( -3, -10,  -4,   7), (  5,  -4,  -8,  -7), (  6, -11,  -7,   0), ( -2,  -2,   7,  -8),
    (  4,  -2,  -5,  -6), (  6,   1,  -2,  -5), (  0,  -4,  -6,  -8), (  3,   1,  -2,  11),
    ( 11,  -1,  -2,  -6), (-11,  -3,   2,   6), ( 11,  -9,   1,   7), (-11,  -5,  -3,  -6),
    (-12,  -7,  -6,  -2), ( -2,  -4, -12,  -4), ( 10,  -3,   0,  -3), ( -6,  -1,  12,  -3),
    (  5,  -6,  -1,   6), (  3,   1,  -1,   0), ( -1,  -3,   4,  -4), (  8,   2,  -7,  -2),
    (  3,  10,   4,  -9), ( -3,  -3,   0,   3), ( -2,   0,   2,  -7), (  2,   0,  -5,   3),
    (  2,   1,   0,   5), (  7,  -4,  -4,   8), (  3,   9,   8,   6), ( -5, -11, -11,   5),
    ( -2,  -3,   5,   2), ( -6,  -3,  -4,  11), ( -5,   1,   5,   0), ( 12,   0,   4,  -3),
    (  2,   7,   5,   3), (  2,   9,   1,   2), (  9,  -5,   0,  -6), (  0, -11,   7,  -2),
    ( -1,   6,   6,   2), ( 10,   1,  -6,  -4), (  0,  -5,  -5,  -5), ( 10,  -3,  10,   1),
    ( -1,  -3,  -2, -13), (  6,  -1,  -1,   7), ( -1,   5,  -3,  -8), ( -1,  -1,   2,   7),
    ( -1,  -3,  -2,   1), ( -4,  -3,  -4,  -5), (  7,   0,  -3,  -6), (  4,   5,  12,  -2),
    (  8,   6,   0,  -9), (  2,  -1,   4,   5), (  4,  -5,  -7,  12), ( -1,  13,   4,  -7),
    (-12,  -7,   6,   9), ( -1,  -3,   2,   5), (  5,   2, -11,  -3), ( -1,  -1,  -5,   0),
    (  8,  -4,   1,   2), (-11,  -4,   0,   6), ( -7,   0,  -5,  -9), ( -7,   4,  -3,  -2),
    (  1,   7, -10,  -2), ( -4,  -5,   1,   2), (  7,  -6,  -4,   1), ( -8,   1,  -2,  -3),
    ( -3,   1,   0,  -2), (  9,   9,  10,  -2), (  1,  13,   0,   4), (  2,  -4,   1,   5),
    (  1,   5,  -2,   5), (  3,   0,  -6,   9), ( 11, -10,  -7,   6), ( -7,  -3,  -7,   9),
    ( -3,   7,  -2,   0), ( -2,   5,  -2, -11), (  6, -12,  -7,  -3), ( -5, -10,  -2,  -1),
    ( -6,   3,  -4,  -3), ( -5,   0,   6,   2), ( -2,  -1,   1,   2), (  3,  -5,  -2,  -2),
    (  3,   9,   7,   4), ( -6,  -1,   2,   7), ( -7,  -2,  -3,   8), (  0,   4,  -9,  12),
)
