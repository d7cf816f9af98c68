"""Time stepping for u' = -A u with A the operator of an assembled form.

With lumped mass W the discrete operator is W^{-1} A_form. Implicit Euler
solves (W + dt A_form) u+ = W u; Crank-Nicolson solves
(W + dt/2 A_form) u+ = (W - dt/2 A_form) u.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidInputError, NumericalFailure
from .forms import FormMatrix
from .spaces import VectorField, as_exponent, lp_norm

SCHEMES = ("implicit-euler", "crank-nicolson")
SOLVE_RTOL = 1e-12
TOL_REPORT = 1e-8


@dataclass(frozen=True)
class StepperConfig:
    scheme: str = "implicit-euler"
    dt: float = 1e-2
    horizon: float = 0.1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidInputError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not (self.dt > 0 and self.horizon > 0 and self.dt <= self.horizon):
            raise InvalidInputError(f"need 0 < dt <= horizon, got dt={self.dt}, T={self.horizon}")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.horizon / self.dt)))


@dataclass
class TrajectoryReport:
    times: np.ndarray
    ratios: dict  # p -> array of ||u(t)||_p / ||u0||_p, aligned with times
    scheme: str
    dt: float
    tol: float = TOL_REPORT
    worst: dict = field(init=False)
    flagged: list = field(init=False)

    def __post_init__(self):
        self.worst = {p: float(np.max(r)) for p, r in self.ratios.items()}
        self.flagged = [p for p, r in self.worst.items() if r > 1.0 + self.tol]

    @property
    def worst_ratio(self) -> float:
        return max(self.worst.values())

    def rows(self):
        ps = list(self.ratios)
        for i, t in enumerate(self.times):
            yield [float(t)] + [float(self.ratios[p][i]) for p in ps]


class Propagator:
    """Factorized one-step map for a fixed (form, scheme, dt)."""

    def __init__(self, a: FormMatrix, cfg: StepperConfig):
        self.form = a
        self.cfg = cfg
        W = sp.diags(a.weights.astype(complex))
        theta = 1.0 if cfg.scheme == "implicit-euler" else 0.5
        self.lhs = (W + theta * cfg.dt * a.matrix).tocsc()
        if cfg.scheme == "implicit-euler":
            self.rhs = W.tocsr()
        else:
            self.rhs = (W - 0.5 * cfg.dt * a.matrix).tocsr()
        self._lu = spla.splu(self.lhs)

    def apply(self, x: np.ndarray) -> np.ndarray:
        b = self.rhs @ x
        y = self._lu.solve(b)
        bnorm = np.linalg.norm(b)
        res = np.linalg.norm(self.lhs @ y - b)
        if bnorm > 0 and res > SOLVE_RTOL * bnorm:
            # one step of iterative refinement, then GMRES as a fallback
            y = y + self._lu.solve(b - self.lhs @ y)
            res = np.linalg.norm(self.lhs @ y - b)
            if res > SOLVE_RTOL * bnorm:
                y, info = spla.gmres(self.lhs, b, x0=y, rtol=SOLVE_RTOL, atol=0.0, maxiter=500)
                res = np.linalg.norm(self.lhs @ y - b)
                if res > SOLVE_RTOL * bnorm:
                    raise NumericalFailure(
                        "linear solve did not reach the residual target",
                        {"relative_residual": res / bnorm, "gmres_info": info},
                    )
        return y

    def step(self, u: VectorField) -> VectorField:
        return u.with_values(self.apply(u.values.ravel()).reshape(u.values.shape))


_CACHE: dict = {}


def _propagator(a: FormMatrix, cfg: StepperConfig) -> Propagator:
    key = (id(a), cfg)
    prop = _CACHE.get(key)
    if prop is None or prop.form is not a:
        if len(_CACHE) > 32:
            _CACHE.clear()
        prop = _CACHE[key] = Propagator(a, cfg)
    return prop


def step(a: FormMatrix, u: VectorField, cfg: StepperConfig) -> VectorField:
    if u.grid != a.grid or u.m != a.m:
        raise InvalidInputError("field does not match the form")
    return _propagator(a, cfg).step(u)


def evolve_and_measure(a: FormMatrix, u0: VectorField, p_list, cfg: StepperConfig,
                       tol_report: float = TOL_REPORT) -> TrajectoryReport:
    """Ratios ||u(t)||_p / ||u0||_p at every step, for each requested p."""
    ps = [as_exponent(p) for p in p_list]
    n0 = {p: lp_norm(u0, p) for p in ps}
    if any(v == 0 for v in n0.values()):
        raise InvalidInputError("initial field must be nonzero")
    prop = _propagator(a, cfg)
    times = [0.0]
    ratios = {p: [1.0] for p in ps}
    u = u0
    for k in range(1, cfg.n_steps + 1):
        u = prop.step(u)
        times.append(k * cfg.dt)
        for p in ps:
            ratios[p].append(lp_norm(u, p) / n0[p])
    return TrajectoryReport(
        np.array(times), {p: np.array(r) for p, r in ratios.items()}, cfg.scheme, cfg.dt, tol_report
    )


def mass(u: VectorField) -> np.ndarray:
    """sum_i w_i u_i, one entry per component."""
    w = u.grid.weights
    return np.array([complex(math.fsum((w * u.values[:, j]).real), math.fsum((w * u.values[:, j]).imag))
                     for j in range(u.m)])
