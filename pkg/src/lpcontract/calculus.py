"""Numerical checks of the chain rules and convexity facts behind the criterion.

Chain rules are compared against central differences of closed-form probes;
the convexity statements (strict convexity of L_p, Young, Hoelder and
triangle equality cases) are probed with random and constructed inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import mpmath
import numpy as np

from .errors import InvalidInputError
from .rng import make_rng
from .spaces import Grid, as_exponent

# -- probes ------------------------------------------------------------------


@dataclass(frozen=True)
class SmoothProbe:
    """Closed-form u: [0,1]^d -> C^m with its exact gradient.

    ``value(x)`` returns (N, m), ``gradient(x)`` returns (N, d, m) for
    coordinates x of shape (N, d). ``alpha`` and ``M`` parametrize the
    truncation (|u|^alpha ^ M) u.
    """

    name: str
    d: int
    m: int
    value: Callable
    gradient: Callable
    alpha: float = 1.0
    M: float = math.inf


def linear_probe(slope=1.0, intercept=0.0, alpha=1.0, M=math.inf) -> SmoothProbe:
    return SmoothProbe(
        "linear", 1, 1,
        lambda x: (intercept + slope * x[:, :1]).astype(complex),
        lambda x: np.full((x.shape[0], 1, 1), slope, dtype=complex),
        alpha, M,
    )


def constant_probe(value=(1.0,), d=1, alpha=1.0, M=math.inf) -> SmoothProbe:
    value = np.asarray(value, dtype=complex)
    m = value.size
    return SmoothProbe(
        "constant", d, m,
        lambda x: np.tile(value, (x.shape[0], 1)),
        lambda x: np.zeros((x.shape[0], d, m), dtype=complex),
        alpha, M,
    )


def circle_probe(freq=1.0, alpha=1.0, M=math.inf) -> SmoothProbe:
    """(cos wx, sin wx): unit H-norm everywhere."""
    return SmoothProbe(
        "circle", 1, 2,
        lambda x: np.stack([np.cos(freq * x[:, 0]), np.sin(freq * x[:, 0])], axis=-1).astype(complex),
        lambda x: (freq * np.stack([-np.sin(freq * x[:, 0]), np.cos(freq * x[:, 0])], axis=-1)
                   )[:, None, :].astype(complex),
        alpha, M,
    )


def gaussian_probe(center=0.5, width=0.2, amplitude=(1.0, 0.5j), alpha=1.0, M=math.inf) -> SmoothProbe:
    amp = np.asarray(amplitude, dtype=complex)

    def val(x):
        return np.exp(-((x[:, :1] - center) ** 2) / (2 * width**2)) * amp

    def grad(x):
        g = -(x[:, :1] - center) / width**2 * np.exp(-((x[:, :1] - center) ** 2) / (2 * width**2))
        return (g * amp)[:, None, :]

    return SmoothProbe("gaussian", 1, amp.size, val, grad, alpha, M)


def random_probe(m=3, d=1, seed=0, terms=3, alpha=1.0, M=math.inf, offset=1.5) -> SmoothProbe:
    """offset * e + sum_j a_j sin(<omega_j, x> + phi_j) with complex a_j in C^m."""
    rng = make_rng(seed, 31)
    omega = rng.uniform(1.0, 4.0, (terms, d))
    phase = rng.uniform(0, 2 * np.pi, terms)
    amp = (rng.standard_normal((terms, m)) + 1j * rng.standard_normal((terms, m))) / (2 * terms)
    e = np.zeros(m, dtype=complex)
    e[0] = offset

    def val(x):
        return e + np.sin(x @ omega.T + phase) @ amp

    def grad(x):
        c = np.cos(x @ omega.T + phase)  # (N, terms)
        return np.einsum("nt,tk,tm->nkm", c, omega, amp)

    return SmoothProbe("random", d, m, val, grad, alpha, M)


# -- truncation chain rule ---------------------------------------------------

def truncate_field(value, gradient, alpha: float, M: float):
    """v = (|u|^alpha ^ M) u and its derivative from the a.e. chain rule.

    d_k v = alpha 1[|u|^alpha < M] |u|^alpha Re(sgn u, d_k u) sgn u
            + (|u|^alpha ^ M) d_k u,
    with the indicator false on the kink |u|^alpha = M and d_k v = 0 where
    u = 0. ``M = inf`` switches truncation off. Shapes: value (..., m),
    gradient (..., d, m).
    """
    if not alpha > 0 or not M > 0:
        raise InvalidInputError(f"need alpha > 0 and M > 0, got alpha={alpha}, M={M}")
    value = np.asarray(value, dtype=complex)
    gradient = np.asarray(gradient, dtype=complex)
    norm = np.linalg.norm(value, axis=-1)
    safe = np.where(norm > 0, norm, 1.0)
    sgn = np.where((norm > 0)[..., None], value / safe[..., None], 0.0)
    powered = np.where(norm > 0, safe**alpha, 0.0)
    below = powered < M
    factor = np.minimum(powered, M)
    dnorm = np.einsum("...m,...km->...k", sgn.conj(), gradient).real
    first = (alpha * below * powered)[..., None] * dnorm
    dv = first[..., None] * sgn[..., None, :] + factor[..., None, None] * gradient
    return factor[..., None] * value, dv


def _probe_grid(probe: SmoothProbe, h: float) -> Grid:
    n = int(round(1.0 / h)) + 1
    return Grid((n,) * probe.d)


def _central_differences(vals: np.ndarray, grid: Grid, axis: int):
    """Central differences along ``axis`` at interior nodes; returns (diff, index mask)."""
    shape = grid.nodes + vals.shape[1:]
    arr = vals.reshape(shape)
    h = grid.spacing[axis]
    lo = [slice(None)] * grid.dim
    hi = [slice(None)] * grid.dim
    mid = [slice(None)] * grid.dim
    lo[axis], hi[axis], mid[axis] = slice(0, -2), slice(2, None), slice(1, -1)
    diff = (arr[tuple(hi)] - arr[tuple(lo)]) / (2 * h)
    mask = np.zeros(grid.nodes, dtype=bool)
    mask[tuple(mid)] = True
    return diff.reshape((-1,) + vals.shape[1:]), mask.ravel()


def _near_kink(phase: np.ndarray, grid: Grid, axis: int, reach: int = 2) -> np.ndarray:
    """Nodes whose +-reach neighbourhood along ``axis`` changes phase."""
    arr = phase.reshape(grid.nodes)
    near = np.zeros_like(arr)
    for shift in range(1, reach + 1):
        for sgn in (1, -1):
            rolled = np.roll(arr, sgn * shift, axis=axis)
            differs = rolled != arr
            # discard wrap-around
            idx = [slice(None)] * grid.dim
            idx[axis] = slice(0, shift) if sgn == 1 else slice(-shift, None)
            differs[tuple(idx)] = False
            near |= differs
    return near.ravel()


def _truncation_errors(probe: SmoothProbe, h: float):
    grid = _probe_grid(probe, h)
    x = grid.coordinates()
    u, du = probe.value(x), probe.gradient(x)
    v, dv = truncate_field(u, du, probe.alpha, probe.M)
    phase = np.linalg.norm(u, axis=-1) ** probe.alpha < probe.M
    out = []
    for k in range(grid.dim):
        cd, mask = _central_differences(v, grid, k)
        err = np.linalg.norm(cd - dv[mask, k], axis=-1)
        near = _near_kink(phase, grid, k)[mask]
        out.append((err, near))
    return grid, out


def chain_rule_residual(probe: SmoothProbe, h: float) -> float:
    """Max |analytic d_k v - central difference| away from the kink set."""
    _, per_axis = _truncation_errors(probe, h)
    worst = 0.0
    for err, near in per_axis:
        if np.any(~near):
            worst = max(worst, float(err[~near].max()))
    return worst


def kink_residual(probe: SmoothProbe, h: float) -> float:
    """Discrete L1 norm of the same error over all interior nodes, kink included.

    A derivative jump contributes O(1) error on O(1) nodes per crossing, so
    this decays like h rather than h^2.
    """
    grid, per_axis = _truncation_errors(probe, h)
    vol = grid.cell_volume
    return float(sum(vol * err.sum() for err, _ in per_axis))


def norm_gradient_residual(probe: SmoothProbe, h: float) -> float:
    """Max |Re(sgn u, d_k u) - central difference of |u|| where |u| > 10 h max|grad u|."""
    grid = _probe_grid(probe, h)
    x = grid.coordinates()
    u, du = probe.value(x), probe.gradient(x)
    r = np.linalg.norm(u, axis=-1)
    safe = np.where(r > 0, r, 1.0)
    sgn = np.where((r > 0)[:, None], u / safe[:, None], 0.0)
    analytic = np.einsum("nm,nkm->nk", sgn.conj(), du).real
    delta = 10 * h * float(np.linalg.norm(du, axis=(1, 2)).max())
    worst = 0.0
    for k in range(grid.dim):
        cd, mask = _central_differences(r, grid, k)
        keep = r[mask] > delta
        if np.any(keep):
            worst = max(worst, float(np.abs(cd[keep] - analytic[mask, k][keep]).max()))
    return worst


def measured_orders(residuals, hs) -> list[float]:
    """log(r_i / r_{i+1}) / log(h_i / h_{i+1}) for consecutive levels."""
    out = []
    for (r0, h0), (r1, h1) in zip(zip(residuals, hs), zip(residuals[1:], hs[1:])):
        if r0 <= 0 or r1 <= 0:
            out.append(math.nan)
        else:
            out.append(math.log(r0 / r1) / math.log(h0 / h1))
    return out


# -- strict convexity --------------------------------------------------------

def _batch_norm(x: np.ndarray, w: np.ndarray, p: float) -> np.ndarray:
    """Weighted L_p norms of a batch of fields, x shape (B, N, m)."""
    return np.sum(w * np.linalg.norm(x, axis=-1) ** p, axis=-1) ** (1.0 / p)


@dataclass
class ConvexityReport:
    p: float
    pairs: int
    worst_slack: float        # min of 2 - ||u+v||_p over pairs with ||u-v||_p >= separation
    min_separation: float
    separation: float
    trend_slack: list
    trend_distance: list

    @property
    def strictly_convex(self) -> bool:
        return self.worst_slack > 0

    @property
    def trend_monotone(self) -> bool:
        s, d = self.trend_slack, self.trend_distance
        return all(a > b for a, b in zip(s, s[1:])) and all(a > b for a, b in zip(d, d[1:]))


def strict_convexity_probe(p, m: int = 2, trials: int = 1000, seed: int = 0, nodes: int = 12,
                           separation: float = 1e-6) -> ConvexityReport:
    """Random unit pairs u != v in weighted L_p(C^m): is ||u+v||_p < 2?

    Half the pairs are independent, half are near-parallel perturbations
    with ||u - v|| spread over ten decades, so the slack is probed close to
    the equality case as well. A near-parallel family with shrinking
    perturbation checks that slack -> 0 only as ||u - v|| -> 0.
    """
    p = as_exponent(p)
    rng = make_rng(seed, 11)
    w = rng.uniform(0.2, 1.0, nodes)

    def unit(x):
        return x / _batch_norm(x, w, p)[:, None, None]

    def cgauss(*shape):
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

    half = trials // 2
    u = unit(cgauss(trials, nodes, m))
    v = np.empty_like(u)
    v[:half] = unit(cgauss(half, nodes, m))
    eps = 10.0 ** rng.uniform(-8, 0, trials - half)
    v[half:] = unit(u[half:] + eps[:, None, None] * cgauss(trials - half, nodes, m))
    # slack as ||u|| + ||v|| - ||u+v|| so normalization round-off cancels
    slack = _batch_norm(u, w, p) + _batch_norm(v, w, p) - _batch_norm(u + v, w, p)
    dist = _batch_norm(u - v, w, p)
    separated = dist >= separation
    worst = float(slack[separated].min()) if np.any(separated) else math.inf

    base = unit(cgauss(1, nodes, m))
    direction = cgauss(1, nodes, m)
    t_slack, t_dist = [], []
    for e in 10.0 ** -np.arange(1, 6):
        vv = unit(base + e * direction)
        t_slack.append(float((_batch_norm(base, w, p) + _batch_norm(vv, w, p) - _batch_norm(base + vv, w, p))[0]))
        t_dist.append(float(_batch_norm(base - vv, w, p)[0]))
    return ConvexityReport(p, trials, worst, float(dist.min()), separation, t_slack, t_dist)


def unit_pair_slack(u, v, p, weights=None) -> float:
    """2 - ||u + v||_p for explicit fields scaled to unit norm (arrays (N,) or (N, m))."""
    p = as_exponent(p)
    u = np.asarray(u, dtype=complex).reshape(1, len(u), -1)
    v = np.asarray(v, dtype=complex).reshape(1, len(v), -1)
    w = np.ones(u.shape[1]) if weights is None else np.asarray(weights, dtype=float)
    u = u / _batch_norm(u, w, p)[:, None, None]
    v = v / _batch_norm(v, w, p)[:, None, None]
    return float(2.0 - _batch_norm(u + v, w, p)[0])


# -- Young / Hoelder / triangle equality -------------------------------------

def young_slack(a, b, p):
    """a^p/p + b^q/q - a b, elementwise."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    p = np.asarray(p, dtype=float)
    q = p / (p - 1)
    return a**p / p + b**q / q - a * b


def young_equality_check(a: float, b: float, p, tol: float = 1e-12):
    """(slack, equality flag) with the flag set iff |a^p - b^q| <= tol * scale."""
    if a < 0 or b < 0:
        raise InvalidInputError("Young's inequality needs a, b >= 0")
    p = as_exponent(p)
    q = p / (p - 1)
    ap, bq = a**p, b**q
    flag = abs(ap - bq) <= tol * max(1.0, ap, bq)
    return float(young_slack(a, b, p)), bool(flag)


def young_slack_exact(a: float, b: float, p: float, dps: int = 60) -> mpmath.mpf:
    """Young slack of the float inputs evaluated in high precision."""
    with mpmath.workdps(dps):
        a, b, p = mpmath.mpf(a), mpmath.mpf(b), mpmath.mpf(p)
        q = p / (p - 1)
        return a**p / p + b**q / q - a * b


@dataclass
class YoungSurvey:
    draws: int
    min_slack: float
    rechecked: int
    negatives: int                 # slack < 0 after high-precision recheck
    flag_mismatches: int           # flagged draws with slack above tolerance
    strict_zero: int               # unflagged draws whose exact slack is not > 0


def young_survey(draws: int, seed: int = 0, tol: float = 1e-12, equality_fraction: float = 0.1,
                 recheck_below: float = 1e-9) -> YoungSurvey:
    """Young's inequality and its equality case over random (a, b, p).

    A fraction of draws is built on the equality set a = t^{1/p}, b = t^{1/q}.
    Draws whose float slack is within ``recheck_below`` (relative) of zero are
    re-evaluated in 60-digit arithmetic.
    """
    rng = make_rng(seed, 13)
    p = 1.0 + 10.0 ** rng.uniform(-2, 1.5, draws)
    q = p / (p - 1)
    a = 10.0 ** rng.uniform(-3, 1, draws)
    b = 10.0 ** rng.uniform(-3, 1, draws)
    n_eq = int(equality_fraction * draws)
    t = 10.0 ** rng.uniform(-2, 1, n_eq)
    a[:n_eq] = t ** (1 / p[:n_eq])
    b[:n_eq] = t ** (1 / q[:n_eq])
    ap, bq = a**p, b**q
    scale = np.maximum(1.0, ap / p + bq / q)
    slack = young_slack(a, b, p)
    flag = np.abs(ap - bq) <= tol * np.maximum(1.0, np.maximum(ap, bq))

    # flagged draws sit on the equality set; only near-misses need exact arithmetic
    suspicious = np.flatnonzero(~flag & (slack <= recheck_below * scale))
    exact = {int(i): young_slack_exact(a[i], b[i], p[i]) for i in suspicious}
    negatives = sum(1 for v in exact.values() if v < 0) + int(np.sum(slack < -tol * scale))
    flag_mismatch = int(np.sum(flag & (slack > tol * scale)))
    strict_zero = 0
    for i in np.flatnonzero(~flag):
        i = int(i)
        val = exact.get(i)
        if val is None:
            if not slack[i] > 0:
                strict_zero += 1
        elif not val > 0 and a[i] ** p[i] != b[i] ** q[i]:
            strict_zero += 1
    min_slack = min(float(slack.min()), *(float(v) for v in exact.values())) if exact else float(slack.min())
    return YoungSurvey(draws, min_slack, len(exact), negatives, flag_mismatch, strict_zero)


@dataclass
class HoelderVerdict:
    ratio: float          # int |f||g| / (||f||_p ||g||_q)
    equality: bool
    lam: float | None
    residual: float | None


def hoelder_equality_probe(f, g, p, weights=None, tol: float = 1e-10,
                           fit_tol: float = 1e-10) -> HoelderVerdict:
    """Hoelder equality case: if the pairing saturates, |f|^p must be a multiple of |g|^q.

    λ is the least-squares fit of |f|^p ≈ λ |g|^q; the residual is the max-norm
    misfit relative to max |f|^p.
    """
    p = as_exponent(p)
    q = p / (p - 1)
    af = np.abs(np.asarray(f))
    ag = np.abs(np.asarray(g))
    w = np.ones_like(af) if weights is None else np.asarray(weights, dtype=float)
    if not np.any(af > 0) or not np.any(ag > 0):
        raise InvalidInputError("Hoelder probe needs nonzero f and g")
    pairing = math.fsum(w * af * ag)
    nf = math.fsum(w * af**p) ** (1 / p)
    ng = math.fsum(w * ag**q) ** (1 / q)
    ratio = pairing / (nf * ng)
    if ratio < 1.0 - tol:
        return HoelderVerdict(ratio, False, None, None)
    fp, gq = af**p, ag**q
    lam = math.fsum(fp * gq) / math.fsum(gq * gq)
    residual = float(np.abs(fp - lam * gq).max() / fp.max())
    if residual > fit_tol:
        raise AssertionError(f"pairing saturates but |f|^p is not proportional to |g|^q (residual {residual:.3e})")
    return HoelderVerdict(ratio, True, lam, residual)


@dataclass
class ParallelVerdict:
    triggered: bool
    lam: float | None
    residual: float | None
    bound: float | None

    @property
    def parallel(self) -> bool:
        return self.triggered and self.residual <= self.bound


def parallelism_check(xi, eta, tol: float = 1e-10) -> ParallelVerdict:
    """Triangle equality |xi + eta| = |xi| + |eta| forces xi = λ eta with λ >= 0.

    Triggered when the relative triangle deficit is <= tol. If the deficit is
    eps (relative), |xi - λ eta| / (|xi| + |eta|) <= sqrt(2 eps max(1, λ)), so
    that is the asserted bound, with λ = |xi| / |eta|.
    """
    xi = np.asarray(xi, dtype=complex)
    eta = np.asarray(eta, dtype=complex)
    a, b = float(np.linalg.norm(xi)), float(np.linalg.norm(eta))
    total = a + b
    if b == 0 or total == 0:
        return ParallelVerdict(False, None, None, None)
    deficit = (total - float(np.linalg.norm(xi + eta))) / total
    if deficit > tol:
        return ParallelVerdict(False, None, None, None)
    lam = a / b
    residual = float(np.linalg.norm(xi - lam * eta)) / total
    bound = math.sqrt(2 * max(tol, 0.0) * max(1.0, lam)) + 1e-14
    return ParallelVerdict(True, lam, residual, bound)
