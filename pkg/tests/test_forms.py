import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lpcontract.errors import GridMismatchError, InvalidInputError, NonEllipticError
from lpcontract.forms import (
    CoefficientField,
    apply_form,
    assemble_form,
    cell_gradients,
    ellipticity_constants,
    gradient_energy,
    make_coefficients,
    read_coefficients,
    write_coefficients,
)
from lpcontract.rng import make_rng
from lpcontract.spaces import Grid, VectorField

seeds = st.integers(0, 2**31)


def random_field(grid, m, seed):
    rng = make_rng(seed, 5)
    return VectorField(grid, rng.standard_normal((grid.n_nodes, m)) + 1j * rng.standard_normal((grid.n_nodes, m)))


@pytest.mark.parametrize("d,m", [(1, 1), (1, 3), (2, 1), (2, 2)])
def test_laplacian_constants(d, m):
    c = make_coefficients("laplacian", Grid.uniform(d, 5), m)
    k = ellipticity_constants(c)
    assert (k.mu, k.M) == pytest.approx((1.0, 1.0))
    k2 = ellipticity_constants(make_coefficients("laplacian", Grid.uniform(d, 5), m, scale=2.0))
    assert (k2.mu, k2.M) == pytest.approx((2.0, 2.0))


@pytest.mark.parametrize("b", [0.0, 0.5, 1.0, 3.0])
def test_two_by_two_antisymmetric(b):
    g = Grid((3, 3))
    c = CoefficientField.from_block_matrices(g, np.array([[1.0, b], [-b, 1.0]]), 1)
    k = ellipticity_constants(c)
    assert k.mu == pytest.approx(1.0, abs=1e-14)
    assert k.M == pytest.approx(math.sqrt(1 + b * b), rel=1e-14)


def test_non_elliptic_reports_constants():
    g = Grid((3,))
    c = CoefficientField.from_block_matrices(g, np.array([[1j]]), 1)
    with pytest.raises(NonEllipticError) as err:
        ellipticity_constants(c)
    assert err.value.constants.mu == pytest.approx(0.0, abs=1e-15)
    assert ellipticity_constants(c, strict=False).M == pytest.approx(1.0)


def test_linear_interpolant_energy_1d():
    g = Grid((17,))
    a = assemble_form(make_coefficients("laplacian", g, 1))
    x = g.coordinates()[:, 0]
    u, v = VectorField(g, x), VectorField(g, 2 * x)
    assert apply_form(a, u, u) == pytest.approx(1.0, abs=1e-13)
    assert apply_form(a, u, v) == pytest.approx(2.0, abs=1e-13)


def test_bilinear_product_energy_2d():
    # the Q1 interpolant of xy is exact; its centre gradient is (y_c, x_c), and the
    # midpoint rule of y^2 on n cells is 1/3 - h^2/12
    n = 8
    g = Grid((n + 1, n + 1))
    a = assemble_form(make_coefficients("laplacian", g, 1))
    x = g.coordinates()
    u = VectorField(g, x[:, 0] * x[:, 1])
    h = 1.0 / n
    assert apply_form(a, u, u).real == pytest.approx(2 * (1 / 3 - h * h / 12), rel=1e-13)


@pytest.mark.parametrize("family,params", [
    ("laplacian", {}), ("antisymmetric", {"b": 2.0}), ("random", {"ratio": 0.3, "seed": 4}),
])
@pytest.mark.parametrize("d,m", [(1, 2), (2, 1), (2, 3)])
def test_constants_in_kernel(family, params, d, m):
    g = Grid.uniform(d, 6)
    a = assemble_form(make_coefficients(family, g, m, **params))
    const = VectorField.constant(g, np.arange(1, m + 1) * (1 - 0.5j))
    np.testing.assert_allclose(a.matrix @ const.values.ravel(), 0, atol=1e-12)


def test_symmetric_real_is_hermitian():
    g = Grid((5, 4))
    rng = make_rng(3)
    mats = rng.standard_normal((g.n_cells, 4, 4))
    mats = mats @ mats.transpose(0, 2, 1) + np.eye(4)
    a = assemble_form(CoefficientField.from_block_matrices(g, mats, 2))
    diff = a.matrix - a.matrix.conj().T
    assert abs(diff).max() <= 1e-12
    u, v = random_field(g, 2, 1), random_field(g, 2, 2)
    assert apply_form(a, v, u) == pytest.approx(np.conj(apply_form(a, u, v)), rel=1e-12)


def test_sparsity_is_local():
    g = Grid((6, 5))
    a = assemble_form(make_coefficients("random", g, 2, ratio=0.5))
    rows, cols = a.matrix.nonzero()
    ni, nj = np.divmod(rows // 2, 5)
    mi, mj = np.divmod(cols // 2, 5)
    assert np.all(np.abs(ni - mi) <= 1) and np.all(np.abs(nj - mj) <= 1)


@given(seeds, st.floats(0.05, 1.0), st.sampled_from([(1, 1), (1, 3), (2, 1), (2, 2)]))
def test_garding_and_continuity(seed, ratio, dm):
    d, m = dm
    g = Grid.uniform(d, 7 if d == 2 else 12)
    c = make_coefficients("random", g, m, ratio=ratio, seed=seed, scale=1.7)
    k = ellipticity_constants(c)
    assert k.ratio == pytest.approx(ratio, abs=1e-6)
    a = assemble_form(c)
    u, v = random_field(g, m, seed), random_field(g, m, seed + 1)
    eu, ev = gradient_energy(a, u), gradient_energy(a, v)
    assert apply_form(a, u, u).real >= k.mu * eu - 1e-10
    assert abs(apply_form(a, u, v)) <= k.M * math.sqrt(eu * ev) * (1 + 1e-10)


@given(seeds)
def test_sesquilinear(seed):
    g = Grid((5, 5))
    a = assemble_form(make_coefficients("antisymmetric", g, 2, b=0.7, orientation="random", seed=seed))
    u, v = random_field(g, 2, seed), random_field(g, 2, seed + 3)
    z = 0.4 + 2.1j
    assert apply_form(a, u * z, v) == pytest.approx(z * apply_form(a, u, v), rel=1e-12)
    assert apply_form(a, u, v * z) == pytest.approx(np.conj(z) * apply_form(a, u, v), rel=1e-12)


@pytest.mark.parametrize("b", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("d,m", [(1, 1), (1, 2), (2, 1), (2, 3)])
@pytest.mark.parametrize("orientation", ["constant", "random"])
def test_antisymmetric_family_ratio(b, d, m, orientation):
    c = make_coefficients("antisymmetric", Grid.uniform(d, 5), m, b=b, orientation=orientation, seed=2)
    assert ellipticity_constants(c).ratio == pytest.approx(1 / math.sqrt(1 + b * b), abs=1e-6)


def test_random_family_rejects_bad_ratio():
    with pytest.raises(InvalidInputError):
        make_coefficients("random", Grid((4,)), 1, ratio=1.5)
    with pytest.raises(InvalidInputError):
        make_coefficients("nonsense", Grid((4,)), 1)


@pytest.mark.parametrize("family,params", [("antisymmetric", {"b": 1.0}), ("random", {"ratio": 0.5, "seed": 1})])
def test_constants_invariant_under_refinement(family, params):
    coarse = Grid((3, 3))
    c = make_coefficients(family, coarse, 2, **params)
    fine = c.on_grid(coarse.refine().refine())
    k0, k1 = ellipticity_constants(c), ellipticity_constants(fine)
    assert (k1.mu, k1.M) == pytest.approx((k0.mu, k0.M), rel=1e-14)


def test_coefficient_roundtrip(tmp_path, fixtures):
    c = make_coefficients("random", Grid((4, 3), (2.0, 1.0)), 2, ratio=0.4, seed=8)
    back = read_coefficients(write_coefficients(c, tmp_path / "c.json"))
    assert back.grid == c.grid
    np.testing.assert_array_equal(back.blocks, c.blocks)
    golden = read_coefficients(fixtures / "coefficients_antisym.json")
    assert golden.grid == Grid((3, 3))
    assert ellipticity_constants(golden).ratio == pytest.approx(1 / math.sqrt(2))


def test_grid_mismatch():
    c = make_coefficients("laplacian", Grid((5,)), 1)
    with pytest.raises(GridMismatchError):
        assemble_form(c, Grid((6,)))
    a = assemble_form(c)
    with pytest.raises(InvalidInputError):
        apply_form(a, VectorField.zeros(Grid((6,))), VectorField.zeros(Grid((6,))))


def test_cell_gradients_of_linear_field():
    g = Grid((5, 4), (2.0, 3.0))
    a = assemble_form(make_coefficients("laplacian", g, 1))
    x = g.coordinates()
    grads = cell_gradients(a, VectorField(g, 3 * x[:, 0] - 2j * x[:, 1]))
    np.testing.assert_allclose(grads[:, 0, 0], 3.0)
    np.testing.assert_allclose(grads[:, 1, 0], -2j)
