"""Symmetric quadrature rules on the reference triangle.

Rules are returned as barycentric coordinates ``(n, 3)`` and weights that sum
to one, so that ``area * sum(w * f(points))`` integrates ``f`` over a
physical triangle.
"""

import itertools
from functools import lru_cache

import numpy as np

# Dunavant rules: (weight, orbit generator). A 1-tuple is the centroid, a
# 2-tuple (a, b) expands to the 3 permutations of (a, b, b), a 3-tuple to the
# 6 permutations of (a, b, c).
_DUNAVANT = {
    1: [(1.0, (1,))],
    5: [
        (0.225, (1,)),
        (0.132394152788506, (0.059715871789770, 0.470142064105115)),
        (0.125939180544827, (0.797426985353087, 0.101286507323456)),
    ],
    8: [
        (0.144315607677787, (1,)),
        (0.095091634267285, (0.081414823414554, 0.459292588292723)),
        (0.103217370534718, (0.658861384496480, 0.170569307751760)),
        (0.032458497623198, (0.898905543365938, 0.050547228317031)),
        (0.027230314174435, (0.008394777409958, 0.263112829634638, 0.728492392955404)),
    ],
}

_NPOINTS_TO_DEGREE = {1: 1, 7: 5, 16: 8}


def _expand(orbits):
    points, weights = [], []
    for w, gen in orbits:
        if len(gen) == 1:
            orbit = [(1 / 3, 1 / 3, 1 / 3)]
        elif len(gen) == 2:
            a, b = gen
            orbit = [(a, b, b), (b, a, b), (b, b, a)]
        else:
            orbit = sorted(set(itertools.permutations(gen)))
        points.extend(orbit)
        weights.extend([w] * len(orbit))
    return np.array(points), np.array(weights)


@lru_cache(maxsize=None)
def triangle_rule(npoints):
    """Symmetric rule with ``npoints`` points (1, 7 or 16).

    Returns
    -------
    bary : ndarray, shape (npoints, 3)
    weights : ndarray, shape (npoints,)
    """
    try:
        degree = _NPOINTS_TO_DEGREE[npoints]
    except KeyError:
        raise ValueError(
            f"no symmetric rule with {npoints} points; choose from "
            f"{sorted(_NPOINTS_TO_DEGREE)}"
        ) from None
    bary, w = _expand(_DUNAVANT[degree])
    w = w / w.sum()
    bary.setflags(write=False)
    w.setflags(write=False)
    return bary, w


def subdivided_rule(npoints, levels):
    """Base rule replicated over ``4**levels`` congruent sub-triangles."""
    bary, w = triangle_rule(npoints)
    corners = [np.eye(3)]
    for _ in range(levels):
        refined = []
        for c in corners:
            m01, m12, m20 = (c[0] + c[1]) / 2, (c[1] + c[2]) / 2, (c[2] + c[0]) / 2
            refined += [
                np.array([c[0], m01, m20]),
                np.array([m01, c[1], m12]),
                np.array([m20, m12, c[2]]),
                np.array([m01, m12, m20]),
            ]
        corners = refined
    pts = np.concatenate([bary @ c for c in corners])
    wts = np.tile(w, len(corners)) / len(corners)
    return pts, wts
