import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from lpcontract.errors import InvalidInputError
from lpcontract.forms import assemble_form, make_coefficients
from lpcontract.rng import make_rng
from lpcontract.semigroup import Propagator, StepperConfig, evolve_and_measure, mass, step
from lpcontract.spaces import Grid, VectorField, l2_norm

seeds = st.integers(0, 2**31)


def random_field(grid, m, seed):
    rng = make_rng(seed, 9)
    return VectorField(grid, rng.standard_normal((grid.n_nodes, m)) + 1j * rng.standard_normal((grid.n_nodes, m)))


def dense_generator(a):
    """W^{-1/2} A W^{-1/2} as a dense matrix, with W^{1/2}."""
    sq = np.sqrt(a.weights)
    return a.matrix.toarray() / sq[:, None] / sq[None, :], sq


def test_config_validation():
    with pytest.raises(InvalidInputError):
        StepperConfig(scheme="rk4")
    with pytest.raises(InvalidInputError):
        StepperConfig(dt=0.0)
    with pytest.raises(InvalidInputError):
        StepperConfig(dt=1.0, horizon=0.5)
    assert StepperConfig(dt=0.01, horizon=0.1).n_steps == 10


@pytest.mark.parametrize("scheme", ["implicit-euler", "crank-nicolson"])
def test_constant_field_is_stationary(scheme):
    g = Grid((6, 5))
    a = assemble_form(make_coefficients("random", g, 2, ratio=0.4))
    u = VectorField.constant(g, [1.0, -2j])
    out = step(a, u, StepperConfig(scheme, 0.1, 1.0))
    np.testing.assert_allclose(out.values, u.values, atol=1e-13)


def test_implicit_euler_eigen_oracle():
    g = Grid((33,))
    a = assemble_form(make_coefficients("laplacian", g, 1))
    lam, vecs = sla.eigh(a.matrix.toarray().real, np.diag(a.weights))
    v1 = vecs[:, 1]  # lowest nonconstant mode
    dt = 0.01
    out = step(a, VectorField(g, v1), StepperConfig("implicit-euler", dt, dt))
    np.testing.assert_allclose(out.values[:, 0], v1 / (1 + dt * lam[1]), atol=1e-12)
    assert lam[0] == pytest.approx(0.0, abs=1e-10)
    # continuum eigenvalue of the Neumann Laplacian on [0, 1]
    assert lam[1] == pytest.approx(math.pi**2, rel=1e-2)


@given(seeds, st.sampled_from(["implicit-euler", "crank-nicolson"]), st.sampled_from([(1, 2), (2, 1), (2, 2)]))
def test_l2_nonexpansive(seed, scheme, dm):
    d, m = dm
    g = Grid.uniform(d, 8)
    a = assemble_form(make_coefficients("random", g, m, ratio=0.2, seed=seed))
    u = random_field(g, m, seed)
    out = step(a, u, StepperConfig(scheme, 0.05, 0.05))
    assert l2_norm(out) <= l2_norm(u) * (1 + 1e-10)


@given(seeds)
def test_mass_conservation(seed):
    g = Grid((7, 6))
    a = assemble_form(make_coefficients("antisymmetric", g, 2, b=1.5, orientation="random", seed=seed))
    u = random_field(g, 2, seed)
    m0 = mass(u)
    for scheme in ("implicit-euler", "crank-nicolson"):
        v = u
        for _ in range(5):
            v = step(a, v, StepperConfig(scheme, 0.02, 0.1))
        np.testing.assert_allclose(mass(v), m0, atol=1e-10 * np.abs(m0).max())


def test_l2_ratio_for_accretive_system():
    g = Grid((9, 9))
    a = assemble_form(make_coefficients("random", g, 2, ratio=0.3, seed=2))
    rep = evolve_and_measure(a, random_field(g, 2, 0), [2.0], StepperConfig(dt=0.01, horizon=0.2))
    assert rep.worst[2.0] <= 1 + 1e-10
    assert np.all(np.diff(rep.times) > 0)


@pytest.mark.parametrize("p", [1.1, 3.0, 7.0, 30.0])
def test_scalar_laplacian_contracts_2d(p):
    g = Grid((10, 10))
    a = assemble_form(make_coefficients("laplacian", g, 1))
    rep = evolve_and_measure(a, random_field(g, 1, 4), [p], StepperConfig(dt=0.005, horizon=0.05))
    assert rep.worst[p] <= 1 + 1e-10
    assert not rep.flagged


def test_constant_ratios_identically_one():
    g = Grid((8,))
    a = assemble_form(make_coefficients("antisymmetric", g, 2, b=2.0))
    rep = evolve_and_measure(a, VectorField.constant(g, [1.0, 1j]), [1.5, 4.0], StepperConfig())
    for r in rep.ratios.values():
        np.testing.assert_allclose(r, 1.0, atol=1e-13)


def test_zero_initial_rejected():
    g = Grid((5,))
    a = assemble_form(make_coefficients("laplacian", g, 1))
    with pytest.raises(InvalidInputError):
        evolve_and_measure(a, VectorField.zeros(g), [2.0], StepperConfig())


def _errors_against_expm(scheme, dts, horizon=0.1):
    g = Grid((21,))
    a = assemble_form(make_coefficients("antisymmetric", g, 2, b=1.0))
    L, sq = dense_generator(a)
    x = g.coordinates()[:, 0]
    u0 = VectorField(g, np.stack([np.cos(np.pi * x), 0.5 * np.cos(2 * np.pi * x)], axis=1).astype(complex))
    exact = (sla.expm(-horizon * L) @ (sq.repeat(1) * u0.values.ravel())) / sq
    errs = []
    for dt in dts:
        v = u0
        for _ in range(int(round(horizon / dt))):
            v = step(a, v, StepperConfig(scheme, dt, horizon))
        errs.append(np.abs(v.values.ravel() - exact).max())
    return errs


@pytest.mark.parametrize("scheme,order", [("implicit-euler", 1.0), ("crank-nicolson", 2.0)])
def test_temporal_order(scheme, order):
    dts = [0.02, 0.01, 0.005]
    errs = _errors_against_expm(scheme, dts)
    rates = [math.log2(e0 / e1) for e0, e1 in zip(errs, errs[1:])]
    assert min(rates) >= order - 0.1


def test_two_half_steps_versus_one_step():
    g = Grid((17,))
    a = assemble_form(make_coefficients("laplacian", g, 1))
    x = g.coordinates()[:, 0]
    u = VectorField(g, np.cos(np.pi * x))
    diffs = []
    for dt in (0.002, 0.001, 0.0005):
        two = step(a, step(a, u, StepperConfig(dt=dt, horizon=1)), StepperConfig(dt=dt, horizon=1))
        one = step(a, u, StepperConfig(dt=2 * dt, horizon=1))
        diffs.append(l2_norm(two - one))
    assert diffs[0] / diffs[1] > 3.5 and diffs[1] / diffs[2] > 3.5


def test_solver_fallback(monkeypatch):
    g = Grid((12,))
    a = assemble_form(make_coefficients("laplacian", g, 1))
    prop = Propagator(a, StepperConfig(dt=0.1, horizon=0.1))
    u = random_field(g, 1, 1).values.ravel()
    ref = prop.apply(u)

    class Broken:
        def solve(self, b):
            return np.zeros_like(b)

    prop._lu = Broken()
    np.testing.assert_allclose(prop.apply(u), ref, rtol=1e-9)
