"""1D B-spline spaces on simple knots, inner products, and orthonormal bases.

The basis over a strictly increasing knot vector ``xi_0 < ... < xi_{n+1}``
of degree ``k`` consists of the ``n - k + 1`` B-splines that are fully
supported inside ``[xi_0, xi_{n+1}]``.  No boundary knot multiplicity is
used, so every basis function (and its first ``k - 1`` derivatives)
vanishes at both ends of its support.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConditioningError, DomainError, RankError, InputError

__all__ = [
    "KnotVector",
    "BasisSpec",
    "Spline",
    "OrthonormalBasis",
    "bspline_evaluate",
    "basis_evaluate_all",
    "basis_matrix",
    "gram_matrix",
    "orthonormalize",
    "project_1d",
    "uniform_knots",
    "gauss_legendre_cells",
]

# Knot gaps below this fraction of the domain width are rejected outright.
COINCIDENT_KNOT_TOL = 1e-12


@dataclass(frozen=True)
class KnotVector:
    """Strictly increasing knot abscissae; first and last are the domain ends."""

    knots: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.knots, dtype=float)
        if arr.ndim != 1 or arr.size < 2:
            raise InputError("knot vector needs at least 2 entries")
        gaps = np.diff(arr)
        if np.any(gaps <= 0):
            raise InputError("knots must be strictly increasing")
        if np.min(gaps) < COINCIDENT_KNOT_TOL * (arr[-1] - arr[0]):
            raise InputError("near-coincident knots rejected (gap below tolerance)")
        object.__setattr__(self, "knots", arr)

    @property
    def a(self) -> float:
        return float(self.knots[0])

    @property
    def b(self) -> float:
        return float(self.knots[-1])

    @property
    def n_interior(self) -> int:
        return self.knots.size - 2

    def __len__(self) -> int:
        return self.knots.size


def uniform_knots(a: float, b: float, n_interior: int) -> KnotVector:
    """Equally spaced knots on [a, b] with the given interior count."""
    if b <= a:
        raise InputError("domain must have positive width")
    return KnotVector(np.linspace(a, b, n_interior + 2))


@dataclass(frozen=True)
class BasisSpec:
    """A 1D spline space: knots plus polynomial degree."""

    knots: KnotVector
    degree: int

    def __post_init__(self):
        if self.degree < 0:
            raise InputError("degree must be non-negative")
        if self.dimension < 1:
            raise InputError(
                f"dimension {self.dimension} < 1: need at least degree + 2 knots"
            )

    @property
    def dimension(self) -> int:
        return self.knots.n_interior - self.degree + 1

    @property
    def a(self) -> float:
        return self.knots.a

    @property
    def b(self) -> float:
        return self.knots.b


def _check_in_domain(spec: BasisSpec, x: np.ndarray) -> None:
    if np.any(x < spec.a) or np.any(x > spec.b):
        raise DomainError(f"evaluation point outside [{spec.a}, {spec.b}]")


def _all_bsplines(t: np.ndarray, k: int, x: np.ndarray) -> np.ndarray:
    """All degree-k B-splines on knot sequence t, via the de Boor-Cox recursion.

    Returns an array of shape (len(x), len(t) - k - 1).  The degree-0 base
    case uses half-open intervals, closing the last one so that values at
    the right domain end are well defined.
    """
    x = np.asarray(x, dtype=float)
    n_cells = t.size - 1
    vals = np.zeros((n_cells, x.size))
    for j in range(n_cells):
        if j == n_cells - 1:
            vals[j] = (x >= t[j]) & (x <= t[j + 1])
        else:
            vals[j] = (x >= t[j]) & (x < t[j + 1])
    for q in range(1, k + 1):
        m = t.size - q - 1  # number of degree-q splines
        left_den = t[q : q + m] - t[:m]
        right_den = t[q + 1 : q + 1 + m] - t[1 : 1 + m]
        left = (x[None, :] - t[:m, None]) / left_den[:, None] * vals[:m]
        right = (t[q + 1 : q + 1 + m, None] - x[None, :]) / right_den[:, None] * vals[1 : m + 1]
        vals = left + right
    return vals.T


def basis_matrix(spec: BasisSpec, x: np.ndarray) -> np.ndarray:
    """B-spline collocation matrix of shape (len(x), dimension)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    _check_in_domain(spec, x)
    return _all_bsplines(spec.knots.knots, spec.degree, x)


def bspline_evaluate(spec: BasisSpec, index: int, x: float) -> float:
    """Value of the index-th basis B-spline at x (index is 1-based)."""
    if not 1 <= index <= spec.dimension:
        raise DomainError(f"index {index} outside 1..{spec.dimension}")
    return float(basis_matrix(spec, x)[0, index - 1])


def basis_evaluate_all(spec: BasisSpec, x: float) -> np.ndarray:
    """Values of every basis B-spline at x; at most degree+1 are nonzero."""
    return basis_matrix(spec, x)[0]


def gauss_legendre_cells(breaks: np.ndarray, n_nodes: int):
    """Composite Gauss-Legendre nodes/weights over consecutive cells."""
    gx, gw = np.polynomial.legendre.leggauss(n_nodes)
    lo, hi = breaks[:-1], breaks[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    weights = (half[:, None] * gw[None, :]).ravel()
    return nodes, weights


def gram_matrix(spec: BasisSpec) -> np.ndarray:
    """L2 Gram matrix of the B-spline basis, exact Gauss-Legendre quadrature."""
    nodes, weights = gauss_legendre_cells(spec.knots.knots, spec.degree + 1)
    B = basis_matrix(spec, nodes)
    G = B.T @ (weights[:, None] * B)
    return 0.5 * (G + G.T)


def _inv_sqrt(G: np.ndarray) -> np.ndarray:
    """Inverse symmetric square root of an SPD matrix."""
    w, V = np.linalg.eigh(G)
    if w[0] <= 0 or w[0] < 1e-14 * w[-1]:
        raise ConditioningError("Gram matrix numerically singular")
    return (V / np.sqrt(w)) @ V.T


@dataclass(frozen=True)
class OrthonormalBasis:
    """Orthonormal spline basis expressed over the B-splines of a spec.

    Column j of ``change_of_basis`` holds the B-spline coefficients of the
    j-th orthonormal function, so ``C.T @ gram @ C = I``.
    """

    spec: BasisSpec
    change_of_basis: np.ndarray
    gram: np.ndarray = field(repr=False, default=None)

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    def matrix(self, x: np.ndarray) -> np.ndarray:
        """Collocation matrix of the orthonormal basis, shape (len(x), dim)."""
        return basis_matrix(self.spec, x) @ self.change_of_basis

    def evaluate(self, index: int, x: float) -> float:
        """Value of the index-th orthonormal function at x (1-based index)."""
        if not 1 <= index <= self.dimension:
            raise DomainError(f"index {index} outside 1..{self.dimension}")
        return float(self.matrix(np.atleast_1d(x))[0, index - 1])

    def to_bspline_coeffs(self, coeffs: np.ndarray) -> np.ndarray:
        return self.change_of_basis @ np.asarray(coeffs, dtype=float)

    def from_bspline_coeffs(self, v: np.ndarray) -> np.ndarray:
        # C^{-1} = C.T @ gram because C.T @ gram @ C = I
        return self.change_of_basis.T @ self.gram @ np.asarray(v, dtype=float)

    def spline(self, coeffs: np.ndarray) -> "Spline":
        return Spline(self.spec, np.asarray(coeffs, dtype=float), "orthonormal", self)


@dataclass(frozen=True)
class Spline:
    """A spline as coefficients over either basis kind of one spec."""

    spec: BasisSpec
    coefficients: np.ndarray
    basis_kind: str = "bspline"  # "bspline" | "orthonormal"
    basis: OrthonormalBasis | None = None

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.shape != (self.spec.dimension,):
            raise InputError(
                f"coefficient length {c.shape} != basis dimension {self.spec.dimension}"
            )
        if self.basis_kind not in ("bspline", "orthonormal"):
            raise InputError(f"unknown basis kind {self.basis_kind!r}")
        if self.basis_kind == "orthonormal" and self.basis is None:
            raise InputError("orthonormal splines need their OrthonormalBasis")
        object.__setattr__(self, "coefficients", c)

    def evaluate(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.basis_kind == "orthonormal":
            return self.basis.matrix(x) @ self.coefficients
        return basis_matrix(self.spec, x) @ self.coefficients

    def __call__(self, x):
        return self.evaluate(x)


ORTHONORMALITY_TOL = 1e-8


def orthonormalize(spec: BasisSpec) -> OrthonormalBasis:
    """Orthonormal basis spanning the same space as the B-splines of spec.

    Two-level scheme: B-splines are grouped into a dyadic pyramid of
    contiguous support blocks and symmetrically (Loewdin) orthonormalized
    within each block, then one symmetric pass across blocks restores
    global orthonormality while keeping the combination weights local.
    Falls back to a Cholesky factor of the full Gram matrix when there are
    too few functions to form at least two blocks.
    """
    G = gram_matrix(spec)
    dim, k = spec.dimension, spec.degree
    block = k + 1  # B-splines >= block apart have disjoint supports
    if dim >= 2 * block:
        n_blocks = 2 ** int(np.floor(np.log2(dim / block)))
        bounds = np.linspace(0, dim, n_blocks + 1).round().astype(int)
        C1 = np.zeros((dim, dim))
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            C1[lo:hi, lo:hi] = _inv_sqrt(G[lo:hi, lo:hi])
        G1 = C1.T @ G @ C1
        C = C1 @ _inv_sqrt(0.5 * (G1 + G1.T))
    else:
        try:
            L = np.linalg.cholesky(G)
        except np.linalg.LinAlgError as exc:
            raise ConditioningError("Gram matrix numerically singular") from exc
        C = np.linalg.inv(L).T
    resid = np.max(np.abs(C.T @ G @ C - np.eye(dim)))
    if resid > ORTHONORMALITY_TOL:
        raise ConditioningError(f"orthonormalization residual {resid:.3e}")
    return OrthonormalBasis(spec, C, G)


def project_1d(xs: np.ndarray, ys: np.ndarray, basis: OrthonormalBasis) -> Spline:
    """Project discrete samples onto an orthonormal basis.

    The samples are read as a piecewise-linear interpolant; each
    coefficient is the exact integral of interpolant times basis function,
    via composite Gauss-Legendre on the union of knot and sample
    breakpoints.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape:
        raise InputError("abscissae and values must be equal-length vectors")
    if np.any(np.diff(xs) <= 0):
        raise InputError("sample abscissae must be strictly increasing")
    spec = basis.spec
    if xs[0] < spec.a or xs[-1] > spec.b:
        raise DomainError("sample abscissae outside the basis domain")
    if xs.size < basis.dimension:
        raise RankError(f"{xs.size} samples < basis dimension {basis.dimension}")
    knots = spec.knots.knots
    inner = knots[(knots > xs[0]) & (knots < xs[-1])]
    breaks = np.unique(np.concatenate([xs, inner]))
    nodes, weights = gauss_legendre_cells(breaks, spec.degree + 2)
    f_nodes = np.interp(nodes, xs, ys)
    coeffs = basis.matrix(nodes).T @ (weights * f_nodes)
    return basis.spline(coeffs)
