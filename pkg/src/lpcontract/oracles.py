"""Brute-force reference answers for small instances.

These deliberately avoid the multiplier structure used by the projection
code; they only enumerate candidate points.
"""

from __future__ import annotations

import itertools

import numpy as np


def brute_force_projection(f, weights, p, resolution: float = 1e-9,
                           coarse: float = 0.01) -> np.ndarray:
    """Minimize sum_i w_i (f_i - u_i)^2 over sum_i w_i |u_i|^p <= 1 by enumeration.

    Real scalar values on at most 3 nodes. Points outside the ball are
    projected onto the boundary, which is scanned through the radial map
    x -> x / ||x||_{p,w} of the Euclidean unit sphere in angular coordinates.
    The scan is repeated on a 10x finer angular grid around the incumbent
    until the angular step drops below ``resolution``.
    """
    f = np.asarray(f, dtype=float)
    w = np.asarray(weights, dtype=float)
    n = f.size
    if n > 3 or w.size != n:
        raise ValueError("brute force is limited to <= 3 real nodes")
    if np.sum(w * np.abs(f) ** p) <= 1.0:
        return f.copy()
    if n == 1:
        r = w[0] ** (-1.0 / p)
        return np.array([np.copysign(r, f[0])])

    def boundary(angles):
        if n == 2:
            x = np.stack([np.cos(angles[..., 0]), np.sin(angles[..., 0])], axis=-1)
        else:
            th, ph = angles[..., 0], angles[..., 1]
            x = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)
        return x / np.sum(w * np.abs(x) ** p, axis=-1, keepdims=True) ** (1.0 / p)

    def best_on(center, half, step):
        axes = [np.arange(c - half, c + half + step / 2, step) for c in center]
        ang = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n - 1)
        u = boundary(ang)
        obj = np.sum(w * (f - u) ** 2, axis=1)
        return ang[np.argmin(obj)]

    step = coarse
    center = np.full(n - 1, np.pi)
    ang = best_on(center, np.pi, step)
    while step > resolution:
        ang = best_on(ang, 5 * step, step / 10)
        step /= 10
    return boundary(ang)


def oracle_instances(seed: int = 7, per_size: int = 6):
    """Deterministic small real instances (f, weights, p) on 1, 2 and 3 nodes."""
    rng = np.random.default_rng(seed)
    cases = [((2.0, 1.0), (0.5, 0.5), 4.0)]
    ps = (1.3, 2.0, 4.0, 7.0)
    for n, k in itertools.product((1, 2, 3), range(per_size)):
        p = ps[k % len(ps)]
        w = rng.uniform(0.25, 1.0, n)
        f = rng.normal(0.0, 1.5, n)
        if k == 0:
            f = 0.5 * f / np.sum(w * np.abs(f) ** p) ** (1 / p)  # inside the ball
        cases.append((tuple(f), tuple(w), p))
    return cases
