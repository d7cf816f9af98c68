"""Metric projection of weighted L_2(grid, C^m) onto the unit L_p ball.

Outside the ball the projection has the form f = u + t |u|^{p-1} sgn u with
a single multiplier t > 0, so u_i is a nonnegative multiple of f_i and its
modulus rho_i solves rho + t rho^{p-1} = |f_i|. The multiplier is the root
of g(t) = sum_i w_i rho_i(t)^p - 1, which is strictly decreasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericalFailure
from .rng import make_rng
from .spaces import VectorField, as_exponent, l2_inner, lp_norm, lp_norm_power, pointwise_norm

OUTER_TOL = 1e-12
INNER_TOL = 1e-14
OUTER_MAX_ITER = 200
INNER_MAX_ITER = 100


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    projected: VectorField
    multiplier: float
    outer_residual: float
    inner_residual: float
    iterations: tuple[int, int]  # (outer, max inner)

    @property
    def active(self) -> bool:
        return self.multiplier > 0

    def diagnostics(self) -> dict:
        return {
            "t": self.multiplier,
            "outer_residual": self.outer_residual,
            "inner_residual": self.inner_residual,
            "outer_iterations": self.iterations[0],
            "inner_iterations": self.iterations[1],
        }


def _radial_solve(s: np.ndarray, t: float, p: float, tol: float = INNER_TOL,
                  max_iter: int = INNER_MAX_ITER):
    """Vectorized solve of rho + t rho^{p-1} = s for rho in [0, s].

    Returns (rho, max scaled residual, iterations). Newton steps that leave
    the current bracket are replaced by bisection.
    """
    s = np.asarray(s, dtype=float)
    rho = np.zeros_like(s)
    if t == 0.0:
        return s.copy(), 0.0, 0
    pos = s > 0
    if not np.any(pos):
        return rho, 0.0, 0
    sp = s[pos]
    # both rho <= s and t rho^{p-1} <= s; one of rho, t rho^{p-1} is >= s/2
    with np.errstate(over="ignore", under="ignore"):
        hi = np.minimum(sp, (sp / t) ** (1.0 / (p - 1)))
        lo = np.minimum(sp / 2, (sp / (2 * t)) ** (1.0 / (p - 1)))
    # root below the smallest subnormal: 0 is the correctly rounded answer
    underflow = hi == 0
    x = hi.copy()
    scale = np.maximum(sp, 1.0)
    it = 0
    for it in range(1, max_iter + 1):
        with np.errstate(divide="ignore"):
            xp = np.where(x > 0, x ** (p - 2), 0.0)
        phi = x + t * x * xp - sp
        done = np.abs(phi) <= tol * scale
        if np.all(done):
            break
        lo = np.where(phi < 0, x, lo)
        hi = np.where(phi > 0, x, hi)
        dphi = 1.0 + t * (p - 1) * xp
        newton = x - phi / dphi  # x = 0 only after underflow; bisection takes over
        inside = (newton >= lo) & (newton <= hi) & np.isfinite(newton)
        nxt = np.where(inside, newton, 0.5 * (lo + hi))
        # bracket collapsed to adjacent floats: keep the better endpoint
        stuck = (hi - lo) <= 4 * np.finfo(float).eps * hi
        x = np.where(done | stuck, x, nxt)
        if np.all(done | stuck):
            break
    phi = x + t * x ** (p - 1) - sp
    res = np.where(underflow, 0.0, np.abs(phi) / scale)
    rho[pos] = x
    return rho, float(res.max()), it


def pointwise_radial_solve(s: float, t: float, p, tol: float = INNER_TOL) -> float:
    """Unique rho in [0, s] with rho + t rho^{p-1} = s."""
    p = as_exponent(p)
    if not (math.isfinite(s) and math.isfinite(t)) or s < 0 or t < 0:
        raise InvalidInputError(f"need finite s, t >= 0, got s={s}, t={t}")
    rho, res, it = _radial_solve(np.array([s], dtype=float), float(t), p, tol)
    if res > tol and not _at_float_resolution(rho[0], s, t, p):
        raise NumericalFailure(
            "radial solve did not converge", {"s": s, "t": t, "p": p, "residual": res, "iterations": it}
        )
    return float(rho[0])


def _at_float_resolution(rho, s, t, p) -> bool:
    a, b = np.nextafter(rho, 0.0), np.nextafter(rho, np.inf)
    fa = a + t * a ** (p - 1) - s
    fb = b + t * b ** (p - 1) - s
    return fa <= 0 <= fb


def project_onto_lp_ball(f: VectorField, p, tol: float = OUTER_TOL,
                         inner_tol: float = INNER_TOL) -> ProjectionResult:
    """Project f onto {u : ||u||_p <= 1} in the weighted L_2 inner product."""
    p = as_exponent(p)
    if not np.all(np.isfinite(f.values)):
        raise InvalidInputError("field contains non-finite values")
    if lp_norm_power(f, p) <= 1.0:
        return ProjectionResult(f, 0.0, 0.0, 0.0, (0, 0))
    values, t, g_res, inner_res, its = project_weighted(f.values, f.grid.weights, p, tol, inner_tol)
    return ProjectionResult(f.with_values(values), t, g_res, inner_res, its)


def project_weighted(values, weights, p, tol: float = OUTER_TOL, inner_tol: float = INNER_TOL):
    """Array-level projection for arbitrary positive node weights.

    ``values`` has shape (N,) or (N, m). Returns
    (projected, t, |g(t)|, inner residual, (outer its, max inner its)).
    """
    p = as_exponent(p)
    values = np.asarray(values)
    w = np.asarray(weights, dtype=float)
    s = np.abs(values) if values.ndim == 1 else np.linalg.norm(values, axis=1)
    if math.fsum(w * s**p) <= 1.0:
        return values.copy(), 0.0, 0.0, 0.0, (0, 0)
    inner_max = 0
    inner_res = 0.0

    def g(t):
        nonlocal inner_max, inner_res
        rho, res, it = _radial_solve(s, t, p, inner_tol)
        inner_max = max(inner_max, it)
        inner_res = res
        return math.fsum(w * rho**p) - 1.0, rho

    def dg(t, rho):
        # d rho/dt = -rho^{p-1} / (1 + t (p-1) rho^{p-2}), skipping rho = 0
        nz = rho > 0
        r = rho[nz]
        drho = -(r ** (p - 1)) / (1.0 + t * (p - 1) * r ** (p - 2))
        return math.fsum(w[nz] * p * r ** (p - 1) * drho)

    def finish(rho, t, gt, outer):
        scale = np.zeros_like(s)
        nz = s > 0
        scale[nz] = rho[nz] / s[nz]
        out = scale * values if values.ndim == 1 else scale[:, None] * values
        return out, float(t), abs(gt), inner_res, (outer, inner_max)

    # bracket [t_lo, t_hi] with g(t_lo) > 0 > g(t_hi)
    t_lo, t_hi = 0.0, 1.0
    outer = 0
    g_hi, rho_hi = g(t_hi)
    while g_hi >= 0:
        outer += 1
        if outer > OUTER_MAX_ITER:
            raise NumericalFailure("could not bracket the multiplier", {"t_hi": t_hi, "g": g_hi})
        if g_hi == 0.0:
            return finish(rho_hi, t_hi, g_hi, outer)
        t_lo, t_hi = t_hi, 2.0 * t_hi
        g_hi, rho_hi = g(t_hi)

    t = 0.5 * (t_lo + t_hi)
    while True:
        outer += 1
        gt, rho = g(t)
        if abs(gt) <= tol:
            return finish(rho, t, gt, outer)
        if gt > 0:
            t_lo = t
        else:
            t_hi = t
        if t_hi - t_lo <= 4 * np.finfo(float).eps * t_hi:
            return finish(rho, t, gt, outer)
        if outer > OUTER_MAX_ITER:
            raise NumericalFailure(
                "multiplier iteration did not converge",
                {"t": t, "g": gt, "bracket": (t_lo, t_hi), "iterations": outer},
            )
        slope = dg(t, rho)
        newton = t - gt / slope if slope < 0 else math.nan
        t = newton if t_lo < newton < t_hi else 0.5 * (t_lo + t_hi)


def random_ball_field(like: VectorField, p, rng) -> VectorField:
    """Complex Gaussian field rescaled to a uniform random radius in [0, 1]."""
    vals = rng.standard_normal(like.values.shape) + 1j * rng.standard_normal(like.values.shape)
    g = like.with_values(vals)
    return g * (rng.uniform() / lp_norm(g, p))


def variational_residual(f: VectorField, result: ProjectionResult, p, samples: int,
                         seed: int = 0, local_fraction: float = 0.5, batch: int = 100) -> float:
    """max over sampled v in C of Re (f - Pf, v - Pf); Pf itself is one sample.

    A ``local_fraction`` of the samples are perturbations of Pf pushed back
    onto the unit sphere, where a wrong multiplier would show up first. The
    rest are Gaussian fields at a uniform random radius. Samples are drawn
    in batches of ``batch`` fields.
    """
    p = as_exponent(p)
    u = result.projected
    if result.multiplier == 0.0:
        # h vanishes identically
        return 0.0
    rng = make_rng(seed)
    w = u.grid.weights
    h = (f - u).values
    base = u.values
    n_local = int(round(local_fraction * samples))

    def norms(x):
        return np.sum(w * np.linalg.norm(x, axis=-1) ** p, axis=-1) ** (1.0 / p)

    def gaussian(k):
        shape = (k,) + base.shape
        g = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        return g / norms(g)[:, None, None]

    worst = 0.0  # v = Pf
    done = 0
    while done < samples:
        k = min(batch, samples - done)
        n_loc = max(0, min(k, n_local - done))
        v = np.empty((k,) + base.shape, dtype=complex)
        if n_loc:
            eps = rng.uniform(size=n_loc) * 10.0 ** rng.uniform(-6, 0, n_loc)
            loc = base + eps[:, None, None] * gaussian(n_loc)
            v[:n_loc] = loc / norms(loc)[:, None, None]
        if k > n_loc:
            v[n_loc:] = gaussian(k - n_loc) * rng.uniform(size=k - n_loc)[:, None, None]
        pair = np.einsum("n,bnm,nm->b", w, v - base, h.conj()).real
        worst = max(worst, float(pair.max()))
        done += k
    return worst
