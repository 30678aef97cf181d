"""Independent reference implementations used only by the tests.

None of these call into the code paths they check.
"""

import math

import numpy as np


def is_left(a, b, p):
    return (b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])


def winding_number(p, verts):
    """Sunday's winding number for point ``p`` against closed vertex list ``verts``."""
    wn = 0
    n = len(verts)
    for i in range(n):
        a, b = verts[i], verts[(i + 1) % n]
        if a[0] <= p[0]:
            if b[0] > p[0] and is_left(a, b, p) > 0:
                wn += 1
        elif b[0] <= p[0] and is_left(a, b, p) < 0:
            wn -= 1
    return wn


def inside_even_odd(p, rings):
    """Even-odd rule across rings, built from per-ring winding numbers.

    For a simple ring the winding number is 0 outside and +-1 inside.
    """
    return sum(winding_number(p, r) != 0 for r in rings) % 2 == 1


def segment_distance(p, a, b):
    ax, ay = b[0] - a[0], b[1] - a[1]
    px, py = p[0] - a[0], p[1] - a[1]
    denom = ax * ax + ay * ay
    t = 0.0 if denom == 0 else max(0.0, min(1.0, (px * ax + py * ay) / denom))
    return math.hypot(px - t * ax, py - t * ay)


def min_edge_distance(lat, lon, verts):
    """Vectorised distance from many points to the nearest ring edge."""
    v = np.asarray(verts, dtype=np.float64)
    a = v
    b = np.roll(v, -1, axis=0)
    d = b - a
    denom = (d ** 2).sum(axis=1)
    px = lat[:, None] - a[None, :, 0]
    py = lon[:, None] - a[None, :, 1]
    t = np.clip((px * d[None, :, 0] + py * d[None, :, 1]) / denom[None, :], 0, 1)
    dist = np.hypot(px - t * d[None, :, 0], py - t * d[None, :, 1])
    return dist.min(axis=1)


def star_polygon(rng, n, center=(0.0, 0.0), radius=1.0):
    angles = np.sort(rng.uniform(0, 2 * np.pi, n))
    r = radius * (0.3 + 0.7 * rng.random(n))
    return [(center[0] + rr * math.sin(t), center[1] + rr * math.cos(t)) for t, rr in zip(angles, r)]


def naive_vector_query(points, boundaries, inside):
    """Double loop over (city, point) with no prefilter; sums via exact fsum."""
    out = {}
    for b in boundaries:
        vals = [v for (lat, lon, v) in points if inside(lat, lon, b)]
        out[b.id] = (math.fsum(vals), len(vals))
    return out


def closed_form_ols(x, y):
    """Textbook OLS with Python floats: slope, intercept, r2, se_slope."""
    n = len(x)
    xbar = sum(x) / n
    ybar = sum(y) / n
    sxx = sum((a - xbar) ** 2 for a in x)
    sxy = sum((a - xbar) * (b - ybar) for a, b in zip(x, y))
    syy = sum((b - ybar) ** 2 for b in y)
    slope = sxy / sxx
    intercept = ybar - slope * xbar
    ss_res = sum((b - intercept - slope * a) ** 2 for a, b in zip(x, y))
    r2 = 1 - ss_res / syy
    se = math.sqrt(ss_res / (n - 2) / sxx)
    return slope, intercept, r2, se
