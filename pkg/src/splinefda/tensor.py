"""Tensor-product orthonormal spline bases on lattice knots.

Coefficients of a projected function are the nested 1D integrals of the
function against each axis basis, so projection runs as a sequence of
per-axis contractions instead of one full-dimensional quadrature.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InputError, RankError
from .splines import OrthonormalBasis, gauss_legendre_cells

__all__ = [
    "TensorBasisSpec",
    "TensorCoefficients",
    "tensor_evaluate",
    "tensor_evaluate_grid",
    "tensor_project",
    "tensor_l2_error",
    "axis_projection_matrix",
]


@dataclass(frozen=True)
class TensorBasisSpec:
    """Ordered per-axis orthonormal bases; the product basis spans their tensor space."""

    axes: tuple

    def __post_init__(self):
        axes = tuple(self.axes)
        if not axes:
            raise InputError("need at least one axis")
        if not all(isinstance(ax, OrthonormalBasis) for ax in axes):
            raise InputError("axes must be OrthonormalBasis instances")
        object.__setattr__(self, "axes", axes)

    @property
    def d(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(ax.dimension for ax in self.axes)

    @property
    def domain(self) -> tuple:
        return tuple((ax.spec.a, ax.spec.b) for ax in self.axes)


@dataclass(frozen=True)
class TensorCoefficients:
    spec: TensorBasisSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.spec.shape:
            raise InputError(f"coefficient shape {v.shape} != basis shape {self.spec.shape}")
        object.__setattr__(self, "values", v)


def _check_point(spec: TensorBasisSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != spec.d:
        raise InputError(f"point has {x.size} coordinates, basis has {spec.d} axes")
    for xj, (a, b) in zip(x, spec.domain):
        if xj < a or xj > b:
            raise DomainError(f"coordinate {xj} outside [{a}, {b}]")
    return x


def _contract(values: np.ndarray, matrices) -> np.ndarray:
    """Apply matrix j to axis j of values, for every axis."""
    out = values
    for j, M in enumerate(matrices):
        out = np.moveaxis(np.tensordot(M, np.moveaxis(out, j, 0), axes=(1, 0)), 0, j)
    return out


def tensor_evaluate(coeffs: TensorCoefficients, x) -> float:
    """Value of the tensor spline at one point of the cube."""
    x = _check_point(coeffs.spec, x)
    rows = [ax.matrix(np.array([xj]))for ax, xj in zip(coeffs.spec.axes, x)]
    return float(_contract(coeffs.values, rows).ravel()[0])


def tensor_evaluate_grid(coeffs: TensorCoefficients, grids) -> np.ndarray:
    """Values on the Cartesian product of per-axis points (fast lattice path)."""
    mats = [ax.matrix(np.asarray(g, dtype=float)) for ax, g in zip(coeffs.spec.axes, grids)]
    return _contract(coeffs.values, mats)


def _hat_matrix(xs: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Piecewise-linear interpolation weights: H[q, s] of hat_s at node q."""
    H = np.zeros((nodes.size, xs.size))
    idx = np.clip(np.searchsorted(xs, nodes, side="right") - 1, 0, xs.size - 2)
    gap = xs[idx + 1] - xs[idx]
    frac = (nodes - xs[idx]) / gap
    rows = np.arange(nodes.size)
    H[rows, idx] = 1.0 - frac
    H[rows, idx + 1] += frac
    return H


def axis_projection_matrix(basis: OrthonormalBasis, xs: np.ndarray) -> np.ndarray:
    """Matrix sending samples on xs to basis coefficients of their linear interpolant."""
    xs = np.asarray(xs, dtype=float)
    spec = basis.spec
    if np.any(np.diff(xs) <= 0):
        raise InputError("grid abscissae must be strictly increasing")
    if xs[0] < spec.a or xs[-1] > spec.b:
        raise DomainError("grid abscissae outside the basis domain")
    if xs.size < basis.dimension:
        raise RankError(f"{xs.size} grid points < axis dimension {basis.dimension}")
    knots = spec.knots.knots
    inner = knots[(knots > xs[0]) & (knots < xs[-1])]
    breaks = np.unique(np.concatenate([xs, inner]))
    nodes, weights = gauss_legendre_cells(breaks, spec.degree + 2)
    return basis.matrix(nodes).T @ (weights[:, None] * _hat_matrix(xs, nodes))


def _quadrature_rules(spec: TensorBasisSpec, extra_breaks=None):
    rules = []
    for j, ax in enumerate(spec.axes):
        breaks = ax.spec.knots.knots
        if extra_breaks is not None:
            breaks = np.unique(np.concatenate([breaks, np.asarray(extra_breaks[j])]))
        rules.append(gauss_legendre_cells(breaks, ax.spec.degree + 2))
    return rules


def _eval_on_mesh(f, node_axes):
    mesh = np.meshgrid(*node_axes, indexing="ij")
    return np.asarray(f(*mesh), dtype=float)


def _check_grids(spec: TensorBasisSpec, grids):
    if len(grids) != spec.d:
        raise InputError(f"{len(grids)} sample grids for {spec.d} axes")
    out = []
    for g, (a, b) in zip(grids, spec.domain):
        g = np.asarray(g, dtype=float)
        if g[0] < a or g[-1] > b:
            raise DomainError("sample grid outside the basis cube")
        out.append(g)
    return out


def tensor_project(f, spec: TensorBasisSpec) -> TensorCoefficients:
    """Project onto the tensor basis via iterated 1D quadratures.

    ``f`` is either a callable evaluated exactly at the quadrature nodes,
    or a pair ``(grids, values)`` of per-axis sample abscissae and a dense
    sample array, read as the multilinear interpolant.
    """
    if callable(f):
        rules = _quadrature_rules(spec)
        F = _eval_on_mesh(f, [nodes for nodes, _ in rules])
        mats = [(ax.matrix(nodes) * w[:, None]).T for ax, (nodes, w) in zip(spec.axes, rules)]
        return TensorCoefficients(spec, _contract(F, mats))
    grids, values = f
    grids = _check_grids(spec, grids)
    values = np.asarray(values, dtype=float)
    if values.shape != tuple(g.size for g in grids):
        raise InputError("sample array shape does not match the grids")
    mats = [axis_projection_matrix(ax, g) for ax, g in zip(spec.axes, grids)]
    return TensorCoefficients(spec, _contract(values, mats))


def _multilinear_on_mesh(grids, values, node_axes):
    """Multilinear interpolant of gridded samples at a Cartesian node mesh."""
    out = values
    for j, (g, nodes) in enumerate(zip(grids, node_axes)):
        H = _hat_matrix(np.asarray(g, dtype=float), np.asarray(nodes, dtype=float))
        out = np.moveaxis(np.tensordot(H, np.moveaxis(out, j, 0), axes=(1, 0)), 0, j)
    return out


def tensor_l2_error(f, coeffs: TensorCoefficients) -> float:
    """L2 norm of f minus the tensor spline, by composite quadrature."""
    spec = coeffs.spec
    if callable(f):
        rules = _quadrature_rules(spec)
        F = _eval_on_mesh(f, [nodes for nodes, _ in rules])
    else:
        grids, values = f
        grids = _check_grids(spec, grids)
        rules = _quadrature_rules(spec, extra_breaks=grids)
        F = _multilinear_on_mesh(grids, np.asarray(values, dtype=float),
                                 [nodes for nodes, _ in rules])
    fhat = tensor_evaluate_grid(coeffs, [nodes for nodes, _ in rules])
    resid2 = (F - fhat) ** 2
    for w_axis in [w for _, w in rules]:
        resid2 = np.tensordot(resid2, w_axis, axes=(0, 0))
    return float(np.sqrt(resid2))
