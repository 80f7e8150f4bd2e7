"""Slow, obviously-correct reference implementations used by the tests.

Nothing here imports the package's numeric code.
"""

from __future__ import annotations

import math
from fractions import Fraction


def kuwahara_pixel(img, y, x, r):
    """Four-quadrant Kuwahara at one pixel of a nested-list RGB image.

    Returns the chosen quadrant mean (rounded half up) as a tuple.
    """
    h, w = len(img), len(img[0])

    def px(yy, xx):
        return img[min(max(yy, 0), h - 1)][min(max(xx, 0), w - 1)]

    quadrants = [
        (range(y - r, y + 1), range(x - r, x + 1)),  # NW
        (range(y - r, y + 1), range(x, x + r + 1)),  # NE
        (range(y, y + r + 1), range(x - r, x + 1)),  # SW
        (range(y, y + r + 1), range(x, x + r + 1)),  # SE
    ]
    best = None
    for rows, cols in quadrants:
        samples = [px(yy, xx) for yy in rows for xx in cols]
        lum = [Fraction(299 * p[0] + 587 * p[1] + 114 * p[2], 1000) for p in samples]
        mean_l = sum(lum) / len(lum)
        var = sum((v - mean_l) ** 2 for v in lum) / len(lum)
        if best is None or var < best[0]:
            means = tuple(Fraction(sum(p[c] for p in samples), len(samples)) for c in range(3))
            best = (var, means)
    return tuple(math.floor(m + Fraction(1, 2)) for m in best[1])


def kuwahara_image(img, r):
    return [[list(kuwahara_pixel(img, y, x, r)) for x in range(len(img[0]))] for y in range(len(img))]


def set_iou(ref, cand, ignore=None):
    """Per-class IoU from explicit pixel-index sets; flat label lists in, dict out."""
    idx = [i for i in range(len(ref)) if ref[i] != ignore]
    classes = set(ref[i] for i in idx) | set(cand[i] for i in idx)
    out = {}
    for c in classes:
        if c == ignore:
            continue
        a = {i for i in idx if ref[i] == c}
        b = {i for i in idx if cand[i] == c}
        out[c] = len(a & b) / len(a | b)
    return out


def box_blur3(grid):
    """3x3 mean with clamp-to-edge borders, rounded half up; integer nested lists."""
    h, w = len(grid), len(grid[0])
    out = []
    for y in range(h):
        row = []
        for x in range(w):
            s = 0
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    s += grid[min(max(y + dy, 0), h - 1)][min(max(x + dx, 0), w - 1)]
            row.append(math.floor(Fraction(s, 9) + Fraction(1, 2)))
        out.append(row)
    return out


def sobel_magnitude(gray):
    """Unnormalised Sobel magnitude of a nested-list gray image, clamp-to-edge."""
    h, w = len(gray), len(gray[0])

    def g(y, x):
        return gray[min(max(y, 0), h - 1)][min(max(x, 0), w - 1)]

    out = []
    for y in range(h):
        row = []
        for x in range(w):
            gx = (g(y - 1, x + 1) + 2 * g(y, x + 1) + g(y + 1, x + 1)) - (g(y - 1, x - 1) + 2 * g(y, x - 1) + g(y + 1, x - 1))
            gy = (g(y + 1, x - 1) + 2 * g(y + 1, x) + g(y + 1, x + 1)) - (g(y - 1, x - 1) + 2 * g(y - 1, x) + g(y - 1, x + 1))
            row.append(math.hypot(gx, gy))
        out.append(row)
    return out
