"""Knot intensity estimation and cumulative-transform machinery.

Irregular knot candidates define a normalized intensity g on the domain; its
cumulative transform (marginal plus conditional in 2D) maps the domain onto
the unit box so that knots become uniform, which is what lets regular-lattice
bases stand in for irregular ones.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.interpolate import RegularGridInterpolator

from .errors import DomainError, InputError
from .knots import KnotCandidateSet

__all__ = [
    "DensityModel",
    "CdfModel",
    "estimate_density",
    "density_from_values",
    "empirical_cdf",
    "cdf_from_density",
    "inverse_cdf",
    "uniformize_2d",
    "inverse_uniformize_2d",
]

DEFAULT_GRID_1D = 256
DEFAULT_GRID_2D = 128
# default floor, as a fraction of the uniform density height
FLOOR_FRACTION = 1e-8
NORMALIZATION_TOL = 1e-6


def _box_volume(domain) -> float:
    vol = 1.0
    for lo, hi in domain:
        vol *= hi - lo
    return vol


def _grid_integral(grids, values) -> float:
    out = np.asarray(values, dtype=float)
    for g in reversed(grids):
        out = trapezoid(out, g, axis=-1)
    return float(out)


@dataclass(frozen=True)
class DensityModel:
    """Normalized intensity on a dense grid over an axis-aligned box."""

    domain: tuple
    grids: tuple
    values: np.ndarray
    bandwidth: tuple
    floor: float

    def __post_init__(self):
        domain = tuple((float(lo), float(hi)) for lo, hi in self.domain)
        grids = tuple(np.asarray(g, dtype=float) for g in self.grids)
        values = np.asarray(self.values, dtype=float)
        if any(hi <= lo for lo, hi in domain):
            raise InputError("domain box must have positive widths")
        if values.shape != tuple(g.size for g in grids):
            raise InputError("value grid shape does not match the axis grids")
        if np.any(values < self.floor):
            raise InputError("density values fall below the stated floor")
        total = _grid_integral(grids, values)
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise InputError(f"density integrates to {total}, not 1")
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "grids", grids)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "bandwidth", tuple(float(b) for b in self.bandwidth))

    @property
    def d(self) -> int:
        return len(self.grids)

    def evaluate(self, points) -> np.ndarray:
        """Linear interpolation of the stored grid values."""
        if self.d == 1:
            x = np.asarray(points, dtype=float)
            return np.interp(x, self.grids[0], self.values)
        interp = RegularGridInterpolator(self.grids, self.values, method="linear",
                                         bounds_error=False, fill_value=self.floor)
        return interp(np.asarray(points, dtype=float))

    def support_box(self, threshold: float | None = None) -> tuple:
        """Smallest axis-aligned box outside which g stays at or below the
        threshold (default: twice the floor)."""
        if threshold is None:
            threshold = 2.0 * self.floor
        mask = self.values > threshold
        box = []
        for axis, grid in enumerate(self.grids):
            hit = np.any(mask, axis=tuple(a for a in range(self.d) if a != axis))
            if not hit.any():
                box.append(self.domain[axis])
                continue
            nz = np.nonzero(hit)[0]
            box.append((float(grid[nz[0]]), float(grid[nz[-1]])))
        return tuple(box)


@dataclass(frozen=True)
class CdfModel:
    """Monotone cumulative tables: a marginal CDF and, in 2D, a per-column
    conditional CDF of the second coordinate given the first."""

    domain: tuple
    grids: tuple
    marginal: np.ndarray
    conditional: np.ndarray | None = None

    def __post_init__(self):
        domain = tuple((float(lo), float(hi)) for lo, hi in self.domain)
        grids = tuple(np.asarray(g, dtype=float) for g in self.grids)
        marginal = np.asarray(self.marginal, dtype=float)
        if marginal.shape != (grids[0].size,):
            raise InputError("marginal table does not match the first axis grid")
        if marginal[0] != 0.0 or marginal[-1] != 1.0:
            raise InputError("marginal CDF endpoints must be exactly 0 and 1")
        if np.any(np.diff(marginal) < 0):
            raise InputError("marginal CDF must be non-decreasing")
        if self.conditional is not None:
            conditional = np.asarray(self.conditional, dtype=float)
            if len(grids) != 2:
                raise InputError("conditional table requires a 2D grid")
            if conditional.shape != (grids[0].size, grids[1].size):
                raise InputError("conditional table shape mismatch")
            if np.any(conditional[:, 0] != 0.0) or np.any(conditional[:, -1] != 1.0):
                raise InputError("conditional CDF endpoints must be exactly 0 and 1")
            if np.any(np.diff(conditional, axis=1) < 0):
                raise InputError("conditional CDF must be non-decreasing")
            object.__setattr__(self, "conditional", conditional)
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "grids", grids)
        object.__setattr__(self, "marginal", marginal)

    @property
    def d(self) -> int:
        return len(self.grids)


def _silverman_bandwidth(coords: np.ndarray, d: int, span: float) -> float:
    n = coords.size
    std = float(np.std(coords))
    q75, q25 = np.percentile(coords, [75, 25])
    iqr = float(q75 - q25)
    scales = [s for s in (std, iqr / 1.34) if s > 0]
    scale = min(scales) if scales else 0.1 * span
    return 0.9 * scale * n ** (-1.0 / (d + 4))


def estimate_density(knots: KnotCandidateSet, bandwidth=None,
                     floor: float | None = None, grid_size=None) -> DensityModel:
    """Gaussian kernel density of the knot candidates on a dense grid,
    clipped below at the floor and renormalized over the domain."""
    pts = np.asarray(knots.points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise InputError("need at least 2 knot points")
    d = pts.shape[1]
    if d not in (1, 2):
        raise InputError("only 1D and 2D densities are supported")
    domain = tuple((float(lo), float(hi)) for lo, hi in knots.domain)
    if any(hi <= lo for lo, hi in domain):
        raise InputError("zero-area domain")

    if grid_size is None:
        grid_size = DEFAULT_GRID_1D if d == 1 else DEFAULT_GRID_2D
    sizes = (grid_size,) * d if np.isscalar(grid_size) else tuple(grid_size)
    grids = tuple(np.linspace(lo, hi, m) for (lo, hi), m in zip(domain, sizes))

    if bandwidth is None:
        bw = tuple(_silverman_bandwidth(pts[:, a], d, hi - lo)
                   for a, (lo, hi) in enumerate(domain))
    elif np.isscalar(bandwidth):
        bw = (float(bandwidth),) * d
    else:
        bw = tuple(float(b) for b in bandwidth)
    if any(b <= 0 for b in bw):
        raise InputError("bandwidth must be positive")

    # separable Gaussian kernels with single reflection about each edge, so a
    # uniform point pattern stays uniform instead of sagging at the boundary
    factors = []
    for a, g in enumerate(grids):
        lo, hi = domain[a]
        centers = (pts[:, a:a + 1], 2 * lo - pts[:, a:a + 1], 2 * hi - pts[:, a:a + 1])
        factors.append(sum(np.exp(-0.5 * ((g[None, :] - c) / bw[a]) ** 2)
                           for c in centers))
    if d == 1:
        raw = factors[0].sum(axis=0)
    else:
        raw = np.einsum("mi,mj->ij", factors[0], factors[1])

    if floor is None:
        floor = FLOOR_FRACTION / _box_volume(domain)
    total = _grid_integral(grids, raw)
    if total <= 0:
        raise InputError("kernel mass vanished on the grid")
    values = np.maximum(raw / total, floor)
    values = values / _grid_integral(grids, values)
    values = np.maximum(values, floor)
    return DensityModel(domain, grids, values, bw, float(floor))


def density_from_values(domain, grids, values, floor: float | None = None,
                        bandwidth=None) -> DensityModel:
    """Wrap explicit grid values as a model, flooring and renormalizing."""
    grids = tuple(np.asarray(g, dtype=float) for g in grids)
    values = np.asarray(values, dtype=float)
    if floor is None:
        floor = FLOOR_FRACTION / _box_volume(domain)
    if bandwidth is None:
        bandwidth = (0.0,) * len(grids)
    total = _grid_integral(grids, values)
    if total <= 0:
        raise InputError("density values carry no mass")
    values = np.maximum(values / total, floor)
    values = values / _grid_integral(grids, values)
    values = np.maximum(values, floor)
    return DensityModel(tuple(domain), grids, values, tuple(bandwidth), float(floor))


def empirical_cdf(knots: KnotCandidateSet, query) -> float:
    """Fraction of knot points dominated by the query in every coordinate."""
    pts = np.asarray(knots.points, dtype=float)
    q = np.asarray(query, dtype=float).ravel()
    if q.size != pts.shape[1]:
        raise InputError(f"query has {q.size} coordinates, knots have {pts.shape[1]}")
    return float(np.mean(np.all(pts <= q, axis=1)))


def _cumulative_table(grid: np.ndarray, values: np.ndarray) -> np.ndarray:
    table = cumulative_trapezoid(values, grid, initial=0.0)
    total = table[-1]
    if total <= 0:
        # no mass: fall back to the uniform ramp
        table = (grid - grid[0]) / (grid[-1] - grid[0])
    else:
        table = table / total
    table[0] = 0.0
    table[-1] = 1.0
    return np.maximum.accumulate(table)


def cdf_from_density(g: DensityModel) -> CdfModel:
    """Cumulative trapezoid tables; in 2D the second table conditions the
    second coordinate on the first."""
    if g.d == 1:
        return CdfModel(g.domain, g.grids, _cumulative_table(g.grids[0], g.values))
    marginal_density = trapezoid(g.values, g.grids[1], axis=1)
    marginal = _cumulative_table(g.grids[0], marginal_density)
    conditional = np.vstack([_cumulative_table(g.grids[1], row) for row in g.values])
    return CdfModel(g.domain, g.grids, marginal, conditional)


def _invert_table(grid: np.ndarray, table: np.ndarray, u: float) -> float:
    """Left-continuous inverse of a monotone table: on flat stretches the
    left endpoint of the preimage interval is returned."""
    i = int(np.searchsorted(table, u, side="left"))
    if i == 0:
        return float(grid[0])
    if i >= table.size:
        return float(grid[-1])
    t0, t1 = table[i - 1], table[i]
    x0, x1 = grid[i - 1], grid[i]
    return float(x0 + (u - t0) / (t1 - t0) * (x1 - x0))


def inverse_cdf(cdf: CdfModel, u: float) -> float:
    if cdf.d != 1:
        raise InputError("inverse_cdf handles 1D tables; see inverse_uniformize_2d")
    if not 0.0 <= u <= 1.0:
        raise DomainError(f"u = {u} outside [0, 1]")
    return _invert_table(cdf.grids[0], cdf.marginal, float(u))


def _conditional_row(cdf: CdfModel, x: float) -> np.ndarray:
    """Conditional CDF of the second coordinate at x, linear between columns."""
    gx = cdf.grids[0]
    i = int(np.clip(np.searchsorted(gx, x, side="right") - 1, 0, gx.size - 2))
    w = (x - gx[i]) / (gx[i + 1] - gx[i])
    row = (1.0 - w) * cdf.conditional[i] + w * cdf.conditional[i + 1]
    return row


def uniformize_2d(cdf: CdfModel, p) -> np.ndarray:
    """Map a domain point to the unit square: marginal CDF in the first
    coordinate, then the conditional CDF of the second given the first."""
    if cdf.d != 2 or cdf.conditional is None:
        raise InputError("uniformize_2d needs a 2D cumulative model")
    p = np.asarray(p, dtype=float).ravel()
    if p.size != 2:
        raise InputError("expected a 2-vector")
    for xj, (lo, hi) in zip(p, cdf.domain):
        if xj < lo or xj > hi:
            raise DomainError(f"coordinate {xj} outside [{lo}, {hi}]")
    u1 = float(np.interp(p[0], cdf.grids[0], cdf.marginal))
    u2 = float(np.interp(p[1], cdf.grids[1], _conditional_row(cdf, p[0])))
    return np.array([u1, u2])


def inverse_uniformize_2d(cdf: CdfModel, q) -> np.ndarray:
    """Inverse of uniformize_2d: unit square back to the domain box."""
    if cdf.d != 2 or cdf.conditional is None:
        raise InputError("inverse_uniformize_2d needs a 2D cumulative model")
    q = np.asarray(q, dtype=float).ravel()
    if q.size != 2:
        raise InputError("expected a 2-vector")
    if np.any(q < 0.0) or np.any(q > 1.0):
        raise DomainError("unit-square point expected")
    x = _invert_table(cdf.grids[0], cdf.marginal, float(q[0]))
    y = _invert_table(cdf.grids[1], _conditional_row(cdf, x), float(q[1]))
    return np.array([x, y])
