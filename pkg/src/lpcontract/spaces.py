"""Uniform grids, vector-valued fields and weighted L_p geometry.

A field stores one vector in C^m per grid node. Integrals are trapezoid
sums, so every L_p quantity is a weighted sum of pointwise H-norms.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import GridMismatchError, InvalidInputError

__all__ = [
    "Grid",
    "VectorField",
    "PExponent",
    "as_exponent",
    "lp_norm",
    "lp_norm_power",
    "l2_inner",
    "l2_norm",
    "sgn_field",
    "duality_map",
    "pointwise_norm",
    "field_to_dict",
    "field_from_dict",
    "write_field",
    "read_field",
]


@dataclass(frozen=True)
class Grid:
    """Tensor grid on the box [0, L_1] x ... x [0, L_d], d in {1, 2}.

    Nodes are ordered row-major (last axis fastest).
    """

    nodes: tuple[int, ...]
    lengths: tuple[float, ...] | None = None

    def __post_init__(self):
        nodes = tuple(int(n) for n in self.nodes)
        if len(nodes) not in (1, 2):
            raise InvalidInputError(f"grid dimension must be 1 or 2, got {len(nodes)}")
        if any(n < 2 for n in nodes):
            raise InvalidInputError(f"need at least 2 nodes per axis, got {nodes}")
        lengths = self.lengths if self.lengths is not None else (1.0,) * len(nodes)
        lengths = tuple(float(x) for x in lengths)
        if len(lengths) != len(nodes) or any(not (x > 0 and math.isfinite(x)) for x in lengths):
            raise InvalidInputError(f"invalid box lengths {lengths}")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "lengths", lengths)

    @classmethod
    def uniform(cls, d: int, n: int, length: float = 1.0) -> "Grid":
        return cls((n,) * d, (length,) * d)

    @property
    def dim(self) -> int:
        return len(self.nodes)

    @property
    def n_nodes(self) -> int:
        return math.prod(self.nodes)

    @property
    def cells(self) -> tuple[int, ...]:
        return tuple(n - 1 for n in self.nodes)

    @property
    def n_cells(self) -> int:
        return math.prod(self.cells)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / (n - 1) for L, n in zip(self.lengths, self.nodes))

    @property
    def volume(self) -> float:
        return math.prod(self.lengths)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.ones(1)
        for n, h in zip(self.nodes, self.spacing):
            w1 = np.full(n, h)
            w1[0] = w1[-1] = h / 2
            w = np.multiply.outer(w, w1).ravel()
        w.flags.writeable = False
        return w

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(0.0, L, n) for L, n in zip(self.lengths, self.nodes)]

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape (n_nodes, d)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([x.ravel() for x in mesh], axis=-1)

    def cell_centers(self) -> np.ndarray:
        """Cell-center coordinates, shape (n_cells, d), row-major over cells."""
        mids = [0.5 * (a[1:] + a[:-1]) for a in self.axes()]
        mesh = np.meshgrid(*mids, indexing="ij")
        return np.stack([x.ravel() for x in mesh], axis=-1)

    def refine(self) -> "Grid":
        """Halve the spacing on every axis."""
        return Grid(tuple(2 * n - 1 for n in self.nodes), self.lengths)


@dataclass(frozen=True)
class PExponent:
    p: float

    def __post_init__(self):
        p = float(self.p)
        if not (p > 1 and math.isfinite(p)):
            raise InvalidInputError(f"exponent must lie in (1, inf), got {self.p}")
        object.__setattr__(self, "p", p)

    @property
    def q(self) -> float:
        return self.p / (self.p - 1)

    def __float__(self):
        return self.p


def as_exponent(p) -> float:
    """Validate an exponent given as float or PExponent; return the float."""
    return PExponent(float(p)).p


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2 or vals.shape[0] != self.grid.n_nodes or vals.shape[1] < 1:
            raise InvalidInputError(
                f"values of shape {np.shape(self.values)} do not fit a grid with "
                f"{self.grid.n_nodes} nodes"
            )
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_function(cls, grid: Grid, func) -> "VectorField":
        """Sample ``func(coords) -> (n_nodes, m)`` at the grid nodes."""
        return cls(grid, func(grid.coordinates()))

    @classmethod
    def zeros(cls, grid: Grid, m: int = 1) -> "VectorField":
        return cls(grid, np.zeros((grid.n_nodes, m), dtype=complex))

    @classmethod
    def constant(cls, grid: Grid, value) -> "VectorField":
        value = np.atleast_1d(np.asarray(value, dtype=complex))
        return cls(grid, np.tile(value, (grid.n_nodes, 1)))

    def with_values(self, values) -> "VectorField":
        return VectorField(self.grid, values)

    def __add__(self, other):
        _check_compatible(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        _check_compatible(self, other)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar):
        return self.with_values(scalar * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)


def _check_compatible(u: VectorField, v: VectorField):
    if u.grid != v.grid:
        raise GridMismatchError("fields live on different grids")
    if u.m != v.m:
        raise GridMismatchError(f"fields have different value dimensions {u.m} != {v.m}")


def _check_finite(u: VectorField):
    if not np.all(np.isfinite(u.values)):
        raise InvalidInputError("field contains non-finite values")


def pointwise_norm(u: VectorField) -> np.ndarray:
    return np.linalg.norm(u.values, axis=1)


def lp_norm_power(u: VectorField, p) -> float:
    """sum_i w_i |u_i|_H^p, accumulated with compensated summation."""
    p = as_exponent(p)
    _check_finite(u)
    return math.fsum(u.grid.weights * pointwise_norm(u) ** p)


def lp_norm(u: VectorField, p) -> float:
    return lp_norm_power(u, p) ** (1.0 / as_exponent(p))


def l2_inner(u: VectorField, v: VectorField) -> complex:
    """Weighted Hermitian product, linear in ``u`` and conjugate-linear in ``v``."""
    _check_compatible(u, v)
    terms = u.grid.weights * np.einsum("ij,ij->i", u.values, v.values.conj())
    return complex(math.fsum(terms.real), math.fsum(terms.imag))


def l2_norm(u: VectorField) -> float:
    return math.sqrt(math.fsum(u.grid.weights * pointwise_norm(u) ** 2))


def _sgn_values(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(values, axis=-1)
    out = np.zeros_like(values)
    nz = norms > 0
    out[nz] = values[nz] / norms[nz, None]
    return out, norms


def sgn_field(u: VectorField) -> VectorField:
    """Pointwise u/|u|_H, with the value 0 wherever u vanishes."""
    return u.with_values(_sgn_values(u.values)[0])


def duality_map(u: VectorField, p) -> VectorField:
    """|u|_H^{p-1} sgn u, evaluated as exactly 0 at zeros for every p > 1."""
    p = as_exponent(p)
    sgn, norms = _sgn_values(u.values)
    scale = np.zeros_like(norms)
    nz = norms > 0
    scale[nz] = norms[nz] ** (p - 1)
    return u.with_values(scale[:, None] * sgn)


# -- serialization -----------------------------------------------------------

FIELD_FORMAT = "lpcontract.field/1"
_BINARY_MAGIC = b"LPFIELD1"


def field_to_dict(u: VectorField) -> dict:
    inter = np.empty(u.values.size * 2)
    flat = u.values.ravel()
    inter[0::2] = flat.real
    inter[1::2] = flat.imag
    return {
        "format": FIELD_FORMAT,
        "d": u.grid.dim,
        "nodes_per_axis": list(u.grid.nodes),
        "lengths": list(u.grid.lengths),
        "m": u.m,
        "values": inter.tolist(),
    }


def field_from_dict(doc: dict) -> VectorField:
    try:
        d = int(doc["d"])
        nodes = tuple(int(n) for n in doc["nodes_per_axis"])
        lengths = doc.get("lengths")
        m = int(doc["m"])
        inter = np.asarray(doc["values"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"malformed field document: {exc}") from exc
    if len(nodes) != d:
        raise InvalidInputError("nodes_per_axis does not match d")
    grid = Grid(nodes, tuple(lengths) if lengths is not None else None)
    if inter.size != 2 * grid.n_nodes * m:
        raise InvalidInputError(
            f"expected {2 * grid.n_nodes * m} interleaved doubles, got {inter.size}"
        )
    values = (inter[0::2] + 1j * inter[1::2]).reshape(grid.n_nodes, m)
    return VectorField(grid, values)


def _to_binary(u: VectorField) -> bytes:
    d = u.grid.dim
    header = _BINARY_MAGIC + struct.pack(f"<q{d}qq{d}d", d, *u.grid.nodes, u.m, *u.grid.lengths)
    inter = np.empty(u.values.size * 2, dtype="<f8")
    inter[0::2] = u.values.ravel().real
    inter[1::2] = u.values.ravel().imag
    return header + inter.tobytes()


def _from_binary(data: bytes) -> VectorField:
    if not data.startswith(_BINARY_MAGIC):
        raise InvalidInputError("not a binary field file")
    off = len(_BINARY_MAGIC)
    (d,) = struct.unpack_from("<q", data, off)
    if d not in (1, 2):
        raise InvalidInputError(f"bad dimension {d} in binary header")
    off += 8
    nodes = struct.unpack_from(f"<{d}q", data, off)
    off += 8 * d
    (m,) = struct.unpack_from("<q", data, off)
    off += 8
    lengths = struct.unpack_from(f"<{d}d", data, off)
    off += 8 * d
    grid = Grid(nodes, lengths)
    inter = np.frombuffer(data, dtype="<f8", offset=off)
    if inter.size != 2 * grid.n_nodes * m:
        raise InvalidInputError("binary payload size does not match header")
    return VectorField(grid, (inter[0::2] + 1j * inter[1::2]).reshape(grid.n_nodes, m))


def write_field(u: VectorField, path) -> Path:
    """Write JSON for ``*.json`` paths, the flat binary container otherwise."""
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps(field_to_dict(u)))
    else:
        path.write_bytes(_to_binary(u))
    return path


def read_field(path) -> VectorField:
    path = Path(path)
    data = path.read_bytes()
    if data.startswith(_BINARY_MAGIC):
        return _from_binary(data)
    try:
        doc = json.loads(data)
    except ValueError as exc:
        raise InvalidInputError(f"{path} is neither a binary nor a JSON field file") from exc
    return field_from_dict(doc)
