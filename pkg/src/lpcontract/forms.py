"""Second-order divergence-form systems and their discrete sesquilinear forms.

Coefficients c_kl(x) in C^{m x m} are piecewise constant on grid cells.
The form sum_kl int (c_kl d_l u, d_k v)_H is assembled with Q1 nodal
elements and one quadrature point per cell, so at every quadrature point
the discrete gradients play the role of (xi_1, ..., xi_d) in the pointwise
ellipticity and boundedness conditions. No boundary terms: Neumann.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import GridMismatchError, InvalidInputError, NonEllipticError
from .rng import make_rng
from .spaces import Grid, VectorField

FAMILIES = ("laplacian", "antisymmetric", "random", "file")


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Per-cell blocks, ``blocks[c, k, l]`` is the m x m matrix c_kl on cell c."""

    grid: Grid
    blocks: np.ndarray = field(repr=False)

    def __post_init__(self):
        b = np.asarray(self.blocks, dtype=complex)
        d = self.grid.dim
        if b.ndim != 5 or b.shape[0] != self.grid.n_cells or b.shape[1:3] != (d, d) \
                or b.shape[3] != b.shape[4]:
            raise InvalidInputError(
                f"blocks of shape {b.shape} do not fit {self.grid.n_cells} cells in d={d}"
            )
        if not np.all(np.isfinite(b)):
            raise InvalidInputError("coefficients must be finite")
        b = b.copy()
        b.flags.writeable = False
        object.__setattr__(self, "blocks", b)

    @property
    def m(self) -> int:
        return self.blocks.shape[3]

    @property
    def dim(self) -> int:
        return self.grid.dim

    def block_matrices(self) -> np.ndarray:
        """The (dm) x (dm) matrices [c_kl] per cell, row index k*m + i."""
        nc, d, _, m, _ = self.blocks.shape
        return self.blocks.transpose(0, 1, 3, 2, 4).reshape(nc, d * m, d * m)

    @classmethod
    def from_block_matrices(cls, grid: Grid, mats, m: int) -> "CoefficientField":
        mats = np.asarray(mats, dtype=complex)
        d = grid.dim
        if mats.ndim == 2:
            mats = np.broadcast_to(mats, (grid.n_cells,) + mats.shape)
        nc = mats.shape[0]
        blocks = mats.reshape(nc, d, m, d, m).transpose(0, 1, 3, 2, 4)
        return cls(grid, blocks)

    def on_grid(self, grid: Grid) -> "CoefficientField":
        """Resample onto another grid of the same box by cell-center lookup."""
        if grid.lengths != self.grid.lengths or grid.dim != self.grid.dim:
            raise GridMismatchError("grids cover different boxes")
        idx = np.zeros(grid.n_cells, dtype=int)
        centers = grid.cell_centers()
        stride = 1
        for ax in reversed(range(grid.dim)):
            h = self.grid.spacing[ax]
            j = np.clip((centers[:, ax] / h).astype(int), 0, self.grid.cells[ax] - 1)
            idx += stride * j
            stride *= self.grid.cells[ax]
        return CoefficientField(grid, self.blocks[idx])


@dataclass(frozen=True)
class EllipticityConstants:
    mu: float
    M: float

    @property
    def ratio(self) -> float:
        return self.mu / self.M


@dataclass(frozen=True, eq=False)
class FormMatrix:
    """Assembled form: ``apply_form(u, v) = v^H A u`` on node-major vectors."""

    matrix: sp.csr_matrix
    grid: Grid
    m: int
    gradients: tuple  # kron(D_k, I_m), cell-center derivatives
    constants: EllipticityConstants

    @property
    def weights(self) -> np.ndarray:
        """Lumped mass, the quadrature weights repeated m times."""
        return np.repeat(self.grid.weights, self.m)


def ellipticity_constants(c: CoefficientField, strict: bool = True) -> EllipticityConstants:
    """mu = min lambda_min(Herm C(x)), M = max ||C(x)||_2 over cells.

    Raises NonEllipticError (carrying the constants) when mu <= 0 unless
    ``strict`` is False.
    """
    mats = c.block_matrices()
    herm = 0.5 * (mats + mats.conj().transpose(0, 2, 1))
    mu = float(np.linalg.eigvalsh(herm)[:, 0].min())
    M = float(np.linalg.norm(mats, ord=2, axis=(1, 2)).max())
    consts = EllipticityConstants(mu, M)
    if strict and mu <= 0:
        raise NonEllipticError(f"coefficients are not elliptic (mu = {mu:.3e})", consts)
    return consts


def gradient_operators(grid: Grid) -> list[sp.csr_matrix]:
    """Cell-center derivatives of the Q1 interpolant, one (n_cells x n_nodes) matrix per axis."""
    if grid.dim == 1:
        (n,) = grid.nodes
        (h,) = grid.spacing
        cells = np.arange(n - 1)
        rows = np.concatenate([cells, cells])
        cols = np.concatenate([cells, cells + 1])
        vals = np.concatenate([-np.ones(n - 1), np.ones(n - 1)]) / h
        return [sp.csr_matrix((vals, (rows, cols)), shape=(n - 1, n))]
    n0, n1 = grid.nodes
    h0, h1 = grid.spacing
    i, j = np.meshgrid(np.arange(n0 - 1), np.arange(n1 - 1), indexing="ij")
    cell = (i * (n1 - 1) + j).ravel()
    corner = {
        (a, b): ((i + a) * n1 + (j + b)).ravel() for a in (0, 1) for b in (0, 1)
    }
    ops = []
    for axis, h in ((0, h0), (1, h1)):
        rows, cols, vals = [], [], []
        for (a, b), nodes in corner.items():
            sign = (a if axis == 0 else b) * 2 - 1
            rows.append(cell)
            cols.append(nodes)
            vals.append(np.full(cell.size, sign / (2 * h)))
        ops.append(sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=((n0 - 1) * (n1 - 1), n0 * n1),
        ))
    return ops


def assemble_form(c: CoefficientField, grid: Grid | None = None) -> FormMatrix:
    if grid is not None and grid != c.grid:
        raise GridMismatchError("coefficient grid does not match the target grid")
    grid = c.grid
    m = c.m
    nc = grid.n_cells
    eye = sp.identity(m, format="csr")
    grads = tuple(sp.kron(D, eye, format="csr") for D in gradient_operators(grid))
    idx = np.arange(nc)
    vol = grid.cell_volume
    A = sp.csr_matrix((grid.n_nodes * m, grid.n_nodes * m), dtype=complex)
    for k in range(grid.dim):
        for l in range(grid.dim):
            B = sp.bsr_matrix((vol * c.blocks[:, k, l], idx, np.arange(nc + 1)),
                              shape=(nc * m, nc * m))
            A = A + grads[k].T @ (B @ grads[l])
    consts = ellipticity_constants(c, strict=False)
    return FormMatrix(A.tocsr(), grid, m, grads, consts)


def _flat(a: FormMatrix, u: VectorField) -> np.ndarray:
    if u.grid != a.grid or u.m != a.m:
        raise GridMismatchError("field does not match the form's grid or value dimension")
    return u.values.ravel()


def apply_form(a: FormMatrix, u: VectorField, v: VectorField) -> complex:
    """a(u, v): linear in u, conjugate-linear in v."""
    return complex(np.vdot(_flat(a, v), a.matrix @ _flat(a, u)))


def cell_gradients(a: FormMatrix, u: VectorField) -> np.ndarray:
    """Discrete gradients at the quadrature points, shape (n_cells, d, m)."""
    x = _flat(a, u)
    return np.stack([(G @ x).reshape(-1, a.m) for G in a.gradients], axis=1)


def gradient_energy(a: FormMatrix, u: VectorField) -> float:
    g = cell_gradients(a, u)
    return float(a.grid.cell_volume * np.sum(np.abs(g) ** 2))


# -- coefficient families ----------------------------------------------------

def _random_unitary(rng, n: int, size: int, real: bool = False) -> np.ndarray:
    z = rng.standard_normal((size, n, n))
    if not real:
        z = z + 1j * rng.standard_normal((size, n, n))
    q, r = np.linalg.qr(z)
    ph = np.diagonal(r, axis1=1, axis2=2)
    ph = ph / np.abs(ph)
    return q * ph[:, None, :]


def _skew_unit(n: int) -> np.ndarray:
    """Skew-adjoint J with J^* J = I: real rotation blocks if n is even, i*I otherwise."""
    if n % 2 == 0:
        J = np.zeros((n, n), dtype=complex)
        for a in range(0, n, 2):
            J[a, a + 1] = 1.0
            J[a + 1, a] = -1.0
        return J
    return 1j * np.eye(n)


def make_coefficients(family: str, grid: Grid, m: int = 1, **params) -> CoefficientField:
    """Build a coefficient field from a named family.

    laplacian      c_kl = scale * delta_kl I_m
    antisymmetric  c = I + b J with J skew-adjoint and unitary, so mu = 1 and
                   M = sqrt(1 + b^2); ``orientation='random'`` conjugates J by a
                   random per-cell unitary (``seed``)
    random         normal matrices Q diag(lambda) Q^* per cell with
                   min Re lambda = ratio and max |lambda| = 1, times ``scale``
    file           coefficients read from ``path``
    """
    d = grid.dim
    n = d * m
    if family == "laplacian":
        scale = float(params.get("scale", 1.0))
        return CoefficientField.from_block_matrices(grid, scale * np.eye(n), m)
    if family == "antisymmetric":
        b = float(params.get("b", 1.0))
        J = _skew_unit(n)
        orientation = params.get("orientation", "constant")
        if orientation == "constant":
            return CoefficientField.from_block_matrices(grid, np.eye(n) + b * J, m)
        if orientation != "random":
            raise InvalidInputError(f"unknown orientation {orientation!r}")
        rng = make_rng(int(params.get("seed", 0)))
        if n % 2 == 0:
            Q = _random_unitary(rng, n, grid.n_cells, real=True)
        else:
            Q = _random_unitary(rng, n, grid.n_cells)
            signs = rng.choice([-1.0, 1.0], size=(grid.n_cells, n))
            J = 1j * signs[:, :, None] * np.eye(n)[None]
        Jc = Q @ J @ Q.conj().transpose(0, 2, 1)
        return CoefficientField.from_block_matrices(grid, np.eye(n) + b * Jc, m)
    if family == "random":
        ratio = float(params["ratio"])
        if not 0 < ratio <= 1:
            raise InvalidInputError(f"target ratio mu/M must lie in (0, 1], got {ratio}")
        scale = float(params.get("scale", 1.0))
        rng = make_rng(int(params.get("seed", 0)))
        mats = random_normal_blocks(rng, n, grid.n_cells, ratio)
        return CoefficientField.from_block_matrices(grid, scale * mats, m)
    if family == "file":
        c = read_coefficients(params["path"])
        if c.m != m or c.dim != d:
            raise GridMismatchError("coefficient file does not match (d, m)")
        return c if c.grid == grid else c.on_grid(grid)
    raise InvalidInputError(f"unknown coefficient family {family!r}; choose from {FAMILIES}")


def random_normal_blocks(rng, n: int, count: int, ratio: float) -> np.ndarray:
    """``count`` random normal n x n matrices with mu = ratio and M = 1 exactly."""
    a = rng.uniform(ratio, 1.0, (count, n))
    b = rng.uniform(-1.0, 1.0, (count, n)) * np.sqrt(1.0 - a**2)
    lam = a + 1j * b
    lam[:, 0] = ratio + 1j * math.sqrt(1.0 - ratio**2)
    Q = _random_unitary(rng, n, count)
    return (Q * lam[:, None, :]) @ Q.conj().transpose(0, 2, 1)


# -- coefficient files -------------------------------------------------------

COEFFICIENT_FORMAT = "lpcontract.coefficients/1"


def coefficients_to_dict(c: CoefficientField) -> dict:
    flat = c.blocks.ravel()
    inter = np.empty(2 * flat.size)
    inter[0::2] = flat.real
    inter[1::2] = flat.imag
    return {
        "format": COEFFICIENT_FORMAT,
        "d": c.dim,
        "m": c.m,
        "cells_per_axis": list(c.grid.cells),
        "lengths": list(c.grid.lengths),
        "blocks": inter.tolist(),
    }


def coefficients_from_dict(doc: dict) -> CoefficientField:
    try:
        d, m = int(doc["d"]), int(doc["m"])
        cells = tuple(int(x) for x in doc["cells_per_axis"])
        inter = np.asarray(doc["blocks"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"malformed coefficient document: {exc}") from exc
    lengths = doc.get("lengths")
    grid = Grid(tuple(n + 1 for n in cells), tuple(lengths) if lengths else None)
    if len(cells) != d or inter.size != 2 * grid.n_cells * d * d * m * m:
        raise InvalidInputError("coefficient payload does not match its header")
    blocks = (inter[0::2] + 1j * inter[1::2]).reshape(grid.n_cells, d, d, m, m)
    return CoefficientField(grid, blocks)


def write_coefficients(c: CoefficientField, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(coefficients_to_dict(c)))
    return path


def read_coefficients(path) -> CoefficientField:
    return coefficients_from_dict(json.loads(Path(path).read_text()))
