"""L_p-dissipativity tests for assembled forms and the mu/M exponent range.

A form a is L_p-dissipative when Re a(u, |u|^{p-2} u) >= 0 for all u; for
forms of the type assembled in :mod:`lpcontract.forms` that is equivalent
to the semigroup contracting every L_p norm. For constant-bound systems the
condition mu/M >= 2s + s^2 with s = |p-2|/p gives an explicit closed
exponent interval, symmetric under p -> p/(p-1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.optimize as opt

from .errors import InvalidInputError
from .forms import CoefficientField, EllipticityConstants, FormMatrix, apply_form, assemble_form
from .rng import make_rng
from .semigroup import TOL_REPORT, StepperConfig, evolve_and_measure
from .spaces import Grid, VectorField, as_exponent, duality_map, lp_norm_power

UNBOUNDED = "unbounded"
DEFAULT_KAPPA = 50.0


# -- exponent intervals ------------------------------------------------------

@dataclass(frozen=True)
class PInterval:
    """Closed interval [p_minus, p_plus]; ``p_plus is None`` encodes +infinity."""

    p_minus: float
    p_plus: float | None
    ratio: float

    @property
    def unbounded(self) -> bool:
        return self.p_plus is None

    def __contains__(self, p) -> bool:
        p = float(p)
        return p >= self.p_minus and (self.p_plus is None or p <= self.p_plus)

    def to_dict(self) -> dict:
        return {
            "p_minus": self.p_minus,
            "p_plus": UNBOUNDED if self.p_plus is None else self.p_plus,
            "ratio": self.ratio,
        }


def condition_margin(p, ratio: float) -> float:
    """ratio - (2s + s^2) with s = |p - 2| / p; nonnegative iff p is admissible."""
    s = abs(p - 2) / p
    return ratio - (2 * s + s * s)


def admissible_p_interval(consts) -> PInterval:
    """Exponents p with mu/M >= 2|(p-2)/p| + |(p-2)/p|^2.

    ``consts`` is an EllipticityConstants or the ratio mu/M itself.
    """
    if isinstance(consts, EllipticityConstants):
        mu, M = consts.mu, consts.M
        if not (mu > 0 and M > 0) or mu > M * (1 + 1e-12):
            raise InvalidInputError(f"need 0 < mu <= M, got mu={mu}, M={M}")
        ratio = min(mu / M, 1.0) if mu <= M else 1.0
    else:
        ratio = float(consts)
        if not ratio > 0:
            raise InvalidInputError(f"need mu/M > 0, got {ratio}")
    # s^2 + 2s = ratio  =>  s* = sqrt(1 + ratio) - 1
    s_star = math.sqrt(1.0 + ratio) - 1.0
    p_minus = 2.0 / (1.0 + s_star)
    if s_star >= 1.0:
        return PInterval(1.0, None, ratio)
    return PInterval(p_minus, 2.0 / (1.0 - s_star), ratio)


@dataclass(frozen=True)
class ComparisonInterval:
    """Open interval (lower, upper) with exact rational endpoints; upper None is +inf."""

    lower: Fraction
    upper: Fraction | None
    d: int

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "lower": str(self.lower),
            "upper": UNBOUNDED if self.upper is None else str(self.upper),
        }


def sobolev_comparison_interval(d: int) -> ComparisonInterval:
    """(2d/(d+2), 2d/(d-2)) for d >= 3 and (1, inf) for d in {1, 2}."""
    d = int(d)
    if d < 1:
        raise InvalidInputError(f"dimension must be >= 1, got {d}")
    if d <= 2:
        return ComparisonInterval(Fraction(1), None, d)
    return ComparisonInterval(Fraction(2 * d, d + 2), Fraction(2 * d, d - 2), d)


def compare_intervals(pint: PInterval, d: int) -> dict:
    """Is the contractive interval inside the growth-bound-0 interval for dimension d?

    Endpoints are compared as exact rationals of the float values.
    """
    comp = sobolev_comparison_interval(d)
    lo = Fraction(pint.p_minus)
    lower_ok = lo > comp.lower
    if comp.upper is None:
        upper_ok = True
    else:
        upper_ok = pint.p_plus is not None and Fraction(pint.p_plus) < comp.upper
    return {
        "d": d,
        "contractive": pint.to_dict(),
        "growth_bound_zero": comp.to_dict(),
        "contained": bool(lower_ok and upper_ok),
        "contractive_extends_below": not lower_ok,
        "contractive_extends_above": not upper_ok,
    }


# -- dissipativity -----------------------------------------------------------

def power_test_function(u: VectorField, p) -> VectorField:
    """|u|^{p-2} u pointwise, zero where u vanishes."""
    p = as_exponent(p)
    norms = np.linalg.norm(u.values, axis=1)
    scale = np.zeros_like(norms)
    nz = norms > 0
    with np.errstate(over="ignore"):
        scale[nz] = norms[nz] ** (p - 2)
    return u.with_values(scale[:, None] * u.values)


def dissipativity_gap(a: FormMatrix, u: VectorField, p, via: str = "power") -> float:
    """Re a(u, |u|^{p-2} u) / ||u||_p^p.

    ``via='duality'`` uses the equivalent test function |u|^{p-1} sgn u.
    """
    p = as_exponent(p)
    norm_p = lp_norm_power(u, p)
    if norm_p == 0:
        raise InvalidInputError("dissipativity gap needs a nonzero field")
    if via == "power":
        phi = power_test_function(u, p)
    elif via == "duality":
        phi = duality_map(u, p)
    else:
        raise InvalidInputError(f"unknown test function {via!r}")
    return apply_form(a, u, phi).real / norm_p


def test_function_gradient(value, gradient, p) -> np.ndarray:
    """Gradient of |u|^{p-2} u from the value and gradient of u at a point.

    |u|^{p-2} (d_k u + (p-2) Re(sgn u, d_k u) sgn u); zero where u = 0.
    Shapes: value (..., m), gradient (..., d, m).
    """
    value = np.asarray(value, dtype=complex)
    gradient = np.asarray(gradient, dtype=complex)
    norm = np.linalg.norm(value, axis=-1)
    safe = np.where(norm > 0, norm, 1.0)
    sgn = value / safe[..., None]
    dnorm = np.einsum("...m,...km->...k", sgn.conj(), gradient).real
    psi = gradient + (p - 2) * dnorm[..., None] * sgn[..., None, :]
    with np.errstate(divide="ignore"):
        fac = np.where(norm > 0, safe ** (p - 2), 0.0)
    return fac[..., None, None] * psi


def pointwise_integrand_gap(C_block, value, gradient, p) -> np.ndarray | float:
    """sum_kl Re(c_kl d_l u, d_k(|u|^{p-2} u))_H at one point (or a batch).

    ``C_block`` is the (dm) x (dm) matrix [c_kl], row index k*m + i.
    """
    p = as_exponent(p)
    C = np.asarray(C_block, dtype=complex)
    gradient = np.asarray(gradient, dtype=complex)
    psi = test_function_gradient(value, gradient, p)
    xi = gradient.reshape(gradient.shape[:-2] + (-1,))
    eta = psi.reshape(psi.shape[:-2] + (-1,))
    out = np.einsum("...i,...ij,...j->...", eta.conj(), C, xi).real
    return float(out) if np.ndim(out) == 0 else out


def pointwise_lower_bound(mu: float, M: float, value, gradient, p):
    """(mu - 2Ms - Ms^2) sum_k |d_k v|^2 for v = |u|^{(p-2)/2} u, s = |p-2|/p."""
    p = as_exponent(p)
    s = abs(p - 2) / p
    value = np.asarray(value, dtype=complex)
    gradient = np.asarray(gradient, dtype=complex)
    norm = np.linalg.norm(value, axis=-1)
    safe = np.where(norm > 0, norm, 1.0)
    sgn = value / safe[..., None]
    dnorm = np.einsum("...m,...km->...k", sgn.conj(), gradient).real
    dv = gradient + 0.5 * (p - 2) * dnorm[..., None] * sgn[..., None, :]
    with np.errstate(divide="ignore"):
        fac = np.where(norm > 0, safe ** (p - 2), 0.0)
    energy = fac * np.sum(np.abs(dv) ** 2, axis=(-2, -1))
    out = (mu - 2 * M * s - M * s * s) * energy
    return float(out) if np.ndim(out) == 0 else out


# -- probes ------------------------------------------------------------------

@dataclass(frozen=True)
class BandLimitedProbe:
    """Smooth field defined on the continuous box, so it can be resampled on any grid.

    u(x) = offset + sum_j a_j prod_k cos(pi j_k x_k / L_k), |j|_1 <= modes.
    """

    lengths: tuple
    offset: np.ndarray
    wavenumbers: np.ndarray
    amplitudes: np.ndarray

    def __call__(self, x: np.ndarray) -> np.ndarray:
        phase = np.ones((x.shape[0], len(self.wavenumbers)))
        for k, L in enumerate(self.lengths):
            phase = phase * np.cos(np.pi * np.outer(x[:, k], self.wavenumbers[:, k]) / L)
        return self.offset[None, :] + phase @ self.amplitudes

    def sample(self, grid: Grid) -> VectorField:
        return VectorField.from_function(grid, self)


def band_limited_probe(lengths, m: int, seed: int, index: int, modes: int = 3,
                       offset: float = 1.0) -> BandLimitedProbe:
    """Random band-limited probe number ``index`` of the stream ``seed``.

    Mode amplitudes decay like 1/|j|. The oscillating part is rescaled to sup
    norm 0.75 * offset (1 when offset = 0) on a fixed reference grid, so |u|
    stays near or above offset / 4 and |u|^{p-2} u stays smooth.
    """
    d = len(lengths)
    rng = make_rng(seed, 1000 + index)
    ranges = [range(modes + 1)] * d
    wav = np.array([j for j in np.ndindex(*(len(r) for r in ranges)) if 0 < sum(j) <= modes], dtype=float)
    amp = (rng.standard_normal((len(wav), m)) + 1j * rng.standard_normal((len(wav), m)))
    amp = amp / np.linalg.norm(wav, axis=1)[:, None]
    direction = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    direction = direction / np.linalg.norm(direction)
    probe = BandLimitedProbe(tuple(lengths), offset * direction, wav, amp)
    # sup of the oscillating part on a fixed fine reference grid
    ref = Grid((257,) * d if d == 1 else (65,) * d, tuple(lengths)).coordinates()
    osc = np.linalg.norm(probe(ref) - probe.offset[None, :], axis=1).max()
    target = 0.75 * offset if offset > 0 else 1.0
    return BandLimitedProbe(tuple(lengths), probe.offset, wav, amp * (target / osc))


def structured_probes(grid: Grid, m: int) -> list[tuple[str, VectorField]]:
    """Constants, coordinate interpolants and single-mode cosines."""
    x = grid.coordinates()
    e = np.zeros(m, dtype=complex)
    e[0] = 1.0
    ones = np.ones(m, dtype=complex) / math.sqrt(m)
    out = [("constant", VectorField.constant(grid, ones))]
    for k, L in enumerate(grid.lengths):
        out.append((f"coordinate_{k}", VectorField(grid, np.outer(x[:, k] / L, e))))
        out.append((f"shifted_coordinate_{k}", VectorField(grid, np.outer(1.0 + x[:, k] / L, ones))))
        out.append((f"cosine_{k}", VectorField(grid, np.outer(np.cos(np.pi * x[:, k] / L), e))))
        out.append((f"offset_cosine_{k}",
                    VectorField(grid, np.outer(1.5 + np.cos(np.pi * x[:, k] / L), ones))))
    return out


# -- certification -----------------------------------------------------------

def tol_gap(grid: Grid, kappa: float = DEFAULT_KAPPA) -> float:
    return kappa * max(grid.spacing) ** 2


@dataclass
class CertificationVerdict:
    p: float
    dissipative: bool
    contractive: bool
    worst_gap: float
    worst_ratio: float
    tol_gap: float
    tol_report: float
    n_samples: int
    seed: int
    gaps: list = field(default_factory=list, repr=False)
    # same extremes without the constant probe and the t = 0 entry
    nonconstant_gap: float = math.nan
    nonconstant_ratio: float = math.nan

    @property
    def passed(self) -> bool:
        return self.dissipative and self.contractive

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "dissipative": self.dissipative,
            "contractive": self.contractive,
            "passed": self.passed,
            "worst_gap": self.worst_gap,
            "worst_ratio": self.worst_ratio,
            "tol_gap": self.tol_gap,
            "tol_report": self.tol_report,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "nonconstant_gap": self.nonconstant_gap,
            "nonconstant_ratio": self.nonconstant_ratio,
        }


def probe_fields(grid: Grid, m: int, n_samples: int, seed: int, modes: int = 3):
    """Structured probes followed by ``n_samples`` band-limited random probes."""
    fields = structured_probes(grid, m)
    for i in range(n_samples):
        fields.append((f"band_{i}", band_limited_probe(grid.lengths, m, seed, i, modes).sample(grid)))
    return fields


def certify_contractivity(c: CoefficientField, p, n_samples: int = 20, seed: int = 0,
                          cfg: StepperConfig | None = None, kappa: float = DEFAULT_KAPPA,
                          tol_report: float = TOL_REPORT, form: FormMatrix | None = None
                          ) -> CertificationVerdict:
    """Dissipativity gaps and implicit-Euler norm ratios on the same probe set."""
    p = as_exponent(p)
    cfg = cfg or StepperConfig()
    a = form if form is not None else assemble_form(c)
    fields = probe_fields(c.grid, c.m, n_samples, seed)
    gaps = []
    worst_ratio = 0.0
    informative_ratio = 0.0
    for name, u in fields:
        gaps.append((name, dissipativity_gap(a, u, p)))
        report = evolve_and_measure(a, u, [p], cfg, tol_report)
        worst_ratio = max(worst_ratio, report.worst[p])
        if name != "constant":
            informative_ratio = max(informative_ratio, float(report.ratios[p][1:].max()))
    worst_gap = min(g for _, g in gaps)
    tg = tol_gap(c.grid, kappa)
    return CertificationVerdict(
        p=p,
        dissipative=worst_gap >= -tg,
        contractive=worst_ratio <= 1.0 + tol_report,
        worst_gap=worst_gap,
        worst_ratio=worst_ratio,
        tol_gap=tg,
        tol_report=tol_report,
        n_samples=len(fields),
        seed=seed,
        gaps=gaps,
        nonconstant_gap=min(g for n, g in gaps if n != "constant"),
        nonconstant_ratio=informative_ratio,
    )


@dataclass
class RefinementStudy:
    p: float
    nodes: list
    spacing: list
    floors: list       # min gap over probes at each resolution
    violations: list   # max(0, -floor)
    changes: list      # max |gap_n - gap_2n| over probes between consecutive levels

    def violation_ratios(self) -> list:
        out = []
        for a, b in zip(self.violations, self.violations[1:]):
            out.append(math.inf if b == 0 else a / b)
        return out

    def change_ratios(self) -> list:
        return [a / b if b > 0 else math.inf for a, b in zip(self.changes, self.changes[1:])]

    def to_dict(self) -> dict:
        return {
            "p": self.p, "nodes": self.nodes, "spacing": self.spacing, "floors": self.floors,
            "violations": self.violations, "changes": self.changes,
        }


def refinement_study(coefficients, grids, p, n_probes: int, seed: int, m: int,
                     modes: int = 3) -> RefinementStudy:
    """Gaps of fixed continuous probes resampled on successively finer grids.

    ``coefficients`` maps a Grid to a CoefficientField.
    """
    p = as_exponent(p)
    lengths = grids[0].lengths
    probes = [band_limited_probe(lengths, m, seed, i, modes) for i in range(n_probes)]
    table = []
    for grid in grids:
        a = assemble_form(coefficients(grid))
        table.append(np.array([dissipativity_gap(a, pr.sample(grid), p) for pr in probes]))
    floors = [float(t.min()) for t in table]
    changes = [float(np.abs(t1 - t0).max()) for t0, t1 in zip(table, table[1:])]
    return RefinementStudy(
        p=p,
        nodes=[g.nodes for g in grids],
        spacing=[max(g.spacing) for g in grids],
        floors=floors,
        violations=[max(0.0, -f) for f in floors],
        changes=changes,
    )


# -- counterexample search ---------------------------------------------------

@dataclass
class SearchResult:
    best_gap: float
    witness: VectorField | None
    baseline: list
    evaluations: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "best_gap": self.best_gap,
            "evaluations": self.evaluations,
            "seed": self.seed,
            "baseline": [{"probe": n, "gap": g} for n, g in self.baseline],
        }


def search_counterexample(c: CoefficientField, p, budget: int, seed: int = 0,
                          modes: int = 4, form: FormMatrix | None = None,
                          bound: float = 4.0) -> SearchResult:
    """Look for fields with a negative dissipativity gap.

    Deterministic structured probes are evaluated first (free of budget).
    Half of the budget goes to random restarts, the rest to L-BFGS-B with
    finite-difference gradients from the incumbent. Fields are either cosine
    mode sums or exp(s(x)) v(x) with a complex scalar mode sum s, which
    reaches fields whose phase rotates along the domain. A negative result is
    evidence of non-dissipativity; absence of one proves nothing.
    """
    p = as_exponent(p)
    a = form if form is not None else assemble_form(c)
    grid, m = c.grid, c.m
    probes = structured_probes(grid, m)
    baseline = [(name, dissipativity_gap(a, u, p)) for name, u in probes]
    best_name, best_gap = min(baseline, key=lambda t: t[1])
    witness = dict(probes)[best_name]
    if budget <= 0:
        return SearchResult(best_gap, witness, baseline, 0, seed)

    x = grid.coordinates()
    wav = np.array([j for j in np.ndindex(*((modes + 1,) * grid.dim)) if sum(j) <= modes], dtype=float)
    basis = np.ones((grid.n_nodes, len(wav)))
    for k, L in enumerate(grid.lengths):
        basis = basis * np.cos(np.pi * np.outer(x[:, k], wav[:, k]) / L)
    nw = len(wav)
    n_modes = 2 * nw * m
    n_exp = 2 * nw + n_modes

    def field_of(kind, theta):
        if kind == "modes":
            coef = theta[: nw * m] + 1j * theta[nw * m:]
            return VectorField(grid, basis @ coef.reshape(nw, m))
        s_coef = theta[:nw] + 1j * theta[nw:2 * nw]
        rest = theta[2 * nw:]
        v_coef = (rest[: nw * m] + 1j * rest[nw * m:]).reshape(nw, m)
        v_coef[0] += 2.0  # keep the vector part away from zero
        log_amp = basis @ s_coef
        log_amp = log_amp - log_amp.real.max()  # the gap is scale invariant
        return VectorField(grid, np.exp(log_amp)[:, None] * (basis @ v_coef))

    evaluations = 0

    def objective(kind, theta):
        nonlocal evaluations
        evaluations += 1
        u = field_of(kind, theta)
        if not np.all(np.isfinite(u.values)) or lp_norm_power(u, p) == 0:
            return 1e300
        return dissipativity_gap(a, u, p)

    rng = make_rng(seed, 7)
    n_random = max(1, budget // 2)
    best = None
    for i in range(n_random):
        kind = "modes" if i % 2 == 0 else "exponential"
        dim = n_modes if kind == "modes" else n_exp
        theta = rng.uniform(-bound, bound, dim) if kind == "exponential" else rng.standard_normal(dim)
        if kind == "exponential":
            theta[2 * nw:] *= 0.25
        g = objective(kind, theta)
        if best is None or g < best[0]:
            best = (g, kind, theta)
    remaining = budget - evaluations
    if remaining > 0:
        g0, kind, theta0 = best
        dim = theta0.size
        res = opt.minimize(
            lambda th: objective(kind, th), theta0, method="L-BFGS-B",
            bounds=[(-bound, bound)] * dim,
            options={"maxfun": max(remaining, dim + 2), "maxiter": remaining},
        )
        if res.fun < g0:
            best = (float(res.fun), kind, res.x)
    if best[0] < best_gap:
        best_gap = float(best[0])
        witness = field_of(best[1], best[2])
    return SearchResult(float(best_gap), witness, baseline, evaluations, seed)
