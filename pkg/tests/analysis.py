"""Shape checks on estimated eigenfunctions used by the acceptance suite."""

import math

import numpy as np

from mvkoopman.dictionary import fibonacci_sphere


def circular_sign_changes(x, f, band=0.1):
    """Positions of sign changes of ``f`` sampled on an ascending grid over one period.

    Values with ``|f| <= band * max|f|`` keep the previous sign (hysteresis),
    so ripples around zero are not counted. Each change is placed midway
    between the last point of the old sign and the first point of the new
    one, measured circularly.
    """
    x, f = np.asarray(x, float), np.asarray(f, float)
    thr = band * np.abs(f).max()
    strong = np.nonzero(np.abs(f) > thr)[0]
    if strong.size == 0:
        return []
    signs = np.sign(f[strong])
    period = 2 * math.pi
    changes = []
    for j in range(strong.size):
        k = (j + 1) % strong.size
        if signs[k] != signs[j]:
            a, b = x[strong[j]], x[strong[k]]
            if b < a:
                b += period
            changes.append(math.fmod(0.5 * (a + b), period))
    return changes


def circular_distance(a, b):
    d = abs(math.fmod(a - b, 2 * math.pi))
    return min(d, 2 * math.pi - d)


def count_near(changes, center, radius):
    return sum(circular_distance(c, center) <= radius for c in changes)


def sign_partition_centroids(coeffs, n_cells):
    """Spherical centroids of the positive and negative cells and their angle in degrees."""
    centers = fibonacci_sphere(n_cells)
    v = np.real(np.asarray(coeffs))
    pos, neg = centers[v > 0], centers[v < 0]
    if len(pos) == 0 or len(neg) == 0:
        return None, None, 0.0
    cp = pos.mean(axis=0)
    cn = neg.mean(axis=0)
    cp /= np.linalg.norm(cp)
    cn /= np.linalg.norm(cn)
    angle = math.degrees(math.acos(float(np.clip(cp @ cn, -1.0, 1.0))))
    return cp, cn, angle
