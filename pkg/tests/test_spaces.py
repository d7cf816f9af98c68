import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lpcontract.errors import GridMismatchError, InvalidInputError
from lpcontract.rng import make_rng
from lpcontract.spaces import (
    Grid,
    PExponent,
    VectorField,
    duality_map,
    l2_inner,
    lp_norm,
    lp_norm_power,
    read_field,
    sgn_field,
    write_field,
)

exponents = st.floats(1.05, 12.0)
seeds = st.integers(0, 2**32)


def random_field(grid, m, seed):
    rng = make_rng(seed)
    return VectorField(grid, rng.standard_normal((grid.n_nodes, m)) + 1j * rng.standard_normal((grid.n_nodes, m)))


def test_grid_validation():
    with pytest.raises(InvalidInputError):
        Grid((1,))
    with pytest.raises(InvalidInputError):
        Grid((3, 3, 3))
    with pytest.raises(InvalidInputError):
        Grid((3,), (-1.0,))


@given(st.integers(2, 40), st.integers(2, 40), st.floats(0.1, 5), st.floats(0.1, 5))
def test_weights_sum_to_volume(nx, ny, lx, ly):
    g = Grid((nx, ny), (lx, ly))
    assert math.isclose(g.weights.sum(), lx * ly, rel_tol=1e-12)
    assert g.weights.shape == (nx * ny,)


def test_trapezoid_weights_1d():
    g = Grid((5,), (2.0,))
    np.testing.assert_allclose(g.weights, [0.25, 0.5, 0.5, 0.5, 0.25])


def test_exponent_validation():
    assert PExponent(3.0).q == pytest.approx(1.5)
    for bad in (1.0, 0.5, math.inf, math.nan):
        with pytest.raises(InvalidInputError):
            PExponent(bad)


def test_constant_norm_is_volume_power():
    g = Grid((9, 5), (2.0, 3.0))
    u = VectorField.constant(g, [3.0, 4.0j])
    for p in (1.5, 2.0, 7.0):
        assert lp_norm(u, p) == pytest.approx(5.0 * 6.0 ** (1 / p), rel=1e-13)


def test_sgn_is_zero_at_zero():
    g = Grid((4,))
    u = VectorField(g, [[0, 0], [3, 4j], [0, 0], [1, 0]])
    s = sgn_field(u).values
    assert np.all(s[0] == 0) and np.all(s[2] == 0)
    np.testing.assert_allclose(s[1], [0.6, 0.8j])
    assert np.all(duality_map(u, 3.0).values[0] == 0)


@given(exponents, seeds, st.integers(1, 3))
def test_duality_pairing_identity(p, seed, m):
    # (u, J_p u) = ||u||_p^p and ||J_p u||_q = ||u||_p^{p-1}
    u = random_field(Grid((7, 6)), m, seed)
    pair = l2_inner(u, duality_map(u, p))
    norm_p = lp_norm_power(u, p)
    assert abs(pair.imag) <= 1e-12 * norm_p
    assert pair.real == pytest.approx(norm_p, rel=1e-12)
    q = p / (p - 1)
    assert lp_norm(duality_map(u, p), q) == pytest.approx(lp_norm(u, p) ** (p - 1), rel=1e-12)


@given(exponents, seeds)
def test_hoelder_and_homogeneity(p, seed):
    g = Grid((11,))
    u, v = random_field(g, 2, seed), random_field(g, 2, seed + 1)
    q = p / (p - 1)
    assert abs(l2_inner(u, v)) <= lp_norm(u, p) * lp_norm(v, q) * (1 + 1e-12)
    assert lp_norm(u * (2 - 3j), p) == pytest.approx(abs(2 - 3j) * lp_norm(u, p), rel=1e-12)


@given(seeds)
def test_inner_product_sesquilinear(seed):
    g = Grid((6, 4))
    u, v = random_field(g, 2, seed), random_field(g, 2, seed + 7)
    a = 0.3 - 1.2j
    assert l2_inner(u * a, v) == pytest.approx(a * l2_inner(u, v), rel=1e-12)
    assert l2_inner(u, v * a) == pytest.approx(np.conj(a) * l2_inner(u, v), rel=1e-12)
    assert l2_inner(v, u) == pytest.approx(np.conj(l2_inner(u, v)), rel=1e-12)


def test_mismatched_grids_rejected():
    u = random_field(Grid((5,)), 1, 0)
    v = random_field(Grid((6,)), 1, 0)
    with pytest.raises(GridMismatchError):
        l2_inner(u, v)
    with pytest.raises(InvalidInputError):
        u + v


def test_nonfinite_rejected():
    g = Grid((3,))
    u = VectorField(g, [1.0, np.nan, 0.0])
    with pytest.raises(InvalidInputError):
        lp_norm(u, 2.0)


@pytest.mark.parametrize("suffix", [".json", ".bin"])
def test_field_roundtrip(tmp_path, suffix):
    u = random_field(Grid((4, 3), (1.5, 2.0)), 3, 11)
    path = write_field(u, tmp_path / f"u{suffix}")
    back = read_field(path)
    assert back.grid == u.grid
    np.testing.assert_array_equal(back.values, u.values)


def test_golden_field_files(fixtures):
    a = read_field(fixtures / "field_small.json")
    b = read_field(fixtures / "field_small.bin")
    assert a.grid == b.grid == Grid((5,), (2.0,))
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_allclose(a.values[2], [2.0 + 0.5j, math.cos(1.0) - 1j])


def test_garbage_file_rejected(tmp_path):
    bad = tmp_path / "bad.dat"
    bad.write_bytes(b"\x00\x01garbage")
    with pytest.raises(InvalidInputError):
        read_field(bad)
