import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize

from lpcontract.errors import InvalidInputError
from lpcontract.oracles import brute_force_projection, oracle_instances
from lpcontract.projection import (
    pointwise_radial_solve,
    project_onto_lp_ball,
    project_weighted,
    variational_residual,
)
from lpcontract.rng import make_rng
from lpcontract.spaces import (
    Grid,
    VectorField,
    duality_map,
    l2_norm,
    lp_norm,
    pointwise_norm,
    read_field,
)

exponents = st.sampled_from([1.1, 1.3, 1.7, 2.0, 2.5, 4.0, 7.0, 15.0])
seeds = st.integers(0, 2**31)


def big_field(seed, nodes=(9, 7), m=2, scale=3.0):
    rng = make_rng(seed)
    g = Grid(nodes)
    vals = rng.standard_normal((g.n_nodes, m)) + 1j * rng.standard_normal((g.n_nodes, m))
    return VectorField(g, scale * vals)


@pytest.mark.parametrize("s,t,p,expected", [
    (5.0, 0.0, 3.0, 5.0),
    (3.0, 2.0, 2.0, 1.0),
    (2.0, 1.0, 3.0, 1.0),
    (0.0, 4.0, 1.5, 0.0),
])
def test_radial_examples(s, t, p, expected):
    assert pointwise_radial_solve(s, t, p) == pytest.approx(expected, abs=1e-14)


@given(st.floats(0, 1e3), st.floats(0, 1e3), exponents)
def test_radial_equation_holds(s, t, p):
    rho = pointwise_radial_solve(s, t, p)
    assert 0 <= rho <= s
    assert abs(rho + t * rho ** (p - 1) - s) <= 1e-12 * max(s, 1.0)


def test_radial_rejects_negative():
    with pytest.raises(InvalidInputError):
        pointwise_radial_solve(-1.0, 1.0, 2.0)
    with pytest.raises(InvalidInputError):
        pointwise_radial_solve(1.0, -1.0, 2.0)


def test_inside_ball_is_fixed():
    f = big_field(0, scale=0.01)
    res = project_onto_lp_ball(f, 3.0)
    assert res.multiplier == 0.0 and not res.active
    assert res.projected is f
    assert variational_residual(f, res, 3.0, 50) <= 0.0


@given(seeds)
def test_p2_is_radial_rescaling(seed):
    f = big_field(seed)
    res = project_onto_lp_ball(f, 2.0)
    np.testing.assert_allclose(res.projected.values, f.values / l2_norm(f), atol=1e-12)


@given(seeds, exponents, st.integers(1, 3))
def test_projection_invariants(seed, p, m):
    f = big_field(seed, m=m)
    res = project_onto_lp_ball(f, p)
    u = res.projected
    assert res.multiplier > 0
    assert abs(lp_norm(u, p) - 1.0) <= 1e-10
    # decomposition f = u + t J_p(u)
    recon = u + duality_map(u, p) * res.multiplier
    assert l2_norm(f - recon) <= 1e-8 * l2_norm(f)
    # direction preserved node by node
    cross = np.sum(f.values.conj() * u.values, axis=1)
    assert np.all(cross.real >= -1e-14)
    np.testing.assert_allclose(np.abs(cross), pointwise_norm(f) * pointwise_norm(u), rtol=1e-12, atol=1e-14)
    # idempotence
    again = project_onto_lp_ball(u, p).projected
    assert l2_norm(again - u) <= 1e-10


@given(seeds, exponents)
def test_nonexpansive(seed, p):
    f, g = big_field(seed), big_field(seed + 1, scale=1.0)
    pf, pg = project_onto_lp_ball(f, p).projected, project_onto_lp_ball(g, p).projected
    assert l2_norm(pf - pg) <= l2_norm(f - g) * (1 + 1e-10)


@pytest.mark.parametrize("p", [1.3, 2.0, 4.0, 7.0])
def test_variational_residual_small(p):
    f = big_field(5)
    res = project_onto_lp_ball(f, p)
    assert variational_residual(f, res, p, 300, seed=1) <= 1e-10


def test_variational_residual_detects_wrong_multiplier():
    f = big_field(2)
    res = project_onto_lp_ball(f, 4.0)
    wrong = type(res)(res.projected * 0.9, res.multiplier, 0, 0, (0, 0))
    assert variational_residual(f, wrong, 4.0, 200) > 1e-3


def test_spec_two_node_instance():
    u, t, *_ = project_weighted(np.array([2.0, 1.0]), np.array([0.5, 0.5]), 4.0)
    ref = brute_force_projection([2.0, 1.0], [0.5, 0.5], 4.0)
    np.testing.assert_allclose(u, ref, atol=1e-6)
    # second, unrelated oracle: generic constrained optimizer
    cons = {"type": "ineq", "fun": lambda x: 1.0 - 0.5 * np.sum(np.abs(x) ** 4)}
    opt = minimize(lambda x: 0.5 * np.sum((x - [2.0, 1.0]) ** 2), [0.5, 0.5], constraints=[cons],
                   method="SLSQP", options={"ftol": 1e-14})
    np.testing.assert_allclose(u, opt.x, atol=1e-5)


@pytest.mark.parametrize("case", oracle_instances())
def test_matches_brute_force(case):
    f, w, p = case
    u, *_ = project_weighted(np.array(f), np.array(w), p)
    np.testing.assert_allclose(u, brute_force_projection(f, w, p), atol=1e-6)


def test_golden_oracle_fixture(fixtures):
    f = read_field(fixtures / "oracle_field.json")
    doc = json.loads((fixtures / "oracle_answer.json").read_text())
    np.testing.assert_allclose(f.grid.weights, doc["weights"])
    u = project_onto_lp_ball(f, doc["p"]).projected.values[:, 0]
    np.testing.assert_allclose(u, doc["projection"], atol=1e-3)
    np.testing.assert_allclose(u.imag, 0.0)


@pytest.mark.parametrize("p", [1.01, 1.05, 40.0, 100.0])
def test_extreme_exponents(p):
    f = big_field(9, scale=50.0)
    res = project_onto_lp_ball(f, p)
    assert abs(lp_norm(res.projected, p) - 1.0) <= 1e-10


def test_sparse_field_with_zeros():
    g = Grid((6,))
    f = VectorField(g, [0, 0, 7.0, 0, -3j, 0])
    res = project_onto_lp_ball(f, 1.5)
    assert np.all(res.projected.values[[0, 1, 3, 5]] == 0)
    assert abs(lp_norm(res.projected, 1.5) - 1) <= 1e-12
