"""Measure-driven embeddings between the weighted and plain L2 topologies.

Multiplying by the root intensity (state transform) or precomposing with the
inverse cumulative map (domain transform) both turn the g-weighted geometry
into the ordinary one, so knots placed by g become a regular lattice problem.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import RegularGridInterpolator

from .density import CdfModel, DensityModel, cdf_from_density, _invert_table
from .errors import ConditioningError, InputError

__all__ = [
    "FunctionalSample",
    "state_transform",
    "inverse_state_transform",
    "domain_transform",
    "weighted_inner_product",
    "equivalence_check",
]

TAGS = ("original", "state_transformed", "domain_transformed")


@dataclass(frozen=True)
class FunctionalSample:
    """Sampled curve (d=1) or lattice image (d=2) with a topology tag."""

    abscissae: tuple
    values: np.ndarray
    tag: str = "original"
    density_id: str | None = None

    def __post_init__(self):
        axes = self.abscissae
        if isinstance(axes, np.ndarray) and axes.ndim == 1:
            axes = (axes,)
        axes = tuple(np.asarray(a, dtype=float) for a in axes)
        if not 1 <= len(axes) <= 2:
            raise InputError("samples live on 1D or 2D domains")
        for a in axes:
            if a.ndim != 1 or a.size < 2:
                raise InputError("each axis needs at least 2 sorted abscissae")
            if np.any(np.diff(a) <= 0):
                raise InputError("abscissae must be strictly increasing")
        values = np.asarray(self.values, dtype=float)
        if values.shape != tuple(a.size for a in axes):
            raise InputError(
                f"value shape {values.shape} does not match the abscissae")
        if self.tag not in TAGS:
            raise InputError(f"unknown tag {self.tag!r}")
        object.__setattr__(self, "abscissae", axes)
        object.__setattr__(self, "values", values)

    @property
    def d(self) -> int:
        return len(self.abscissae)

    @property
    def domain(self) -> tuple:
        return tuple((float(a[0]), float(a[-1])) for a in self.abscissae)

    def interpolate(self, points) -> np.ndarray:
        """Piecewise-linear value lookup (bilinear on lattices)."""
        if self.d == 1:
            return np.interp(np.asarray(points, dtype=float),
                             self.abscissae[0], self.values)
        interp = RegularGridInterpolator(self.abscissae, self.values,
                                         method="linear")
        return interp(np.asarray(points, dtype=float))


def _check_sample_in_density(sample: FunctionalSample, g) -> None:
    if sample.d != len(g.domain):
        raise InputError("sample and density dimensions differ")
    for a, (lo, hi) in zip(sample.abscissae, g.domain):
        if a[0] < lo or a[-1] > hi:
            raise InputError("sample abscissae outside the density domain")


def _density_on_sample(sample: FunctionalSample, g: DensityModel) -> np.ndarray:
    if sample.d == 1:
        return g.evaluate(sample.abscissae[0])
    mesh = np.stack(np.meshgrid(*sample.abscissae, indexing="ij"), axis=-1)
    return g.evaluate(mesh.reshape(-1, 2)).reshape(sample.values.shape)


def state_transform(sample: FunctionalSample, g: DensityModel) -> FunctionalSample:
    """Multiply the values pointwise by the root intensity."""
    if sample.tag != "original":
        raise InputError(f"expected an original-topology sample, got {sample.tag!r}")
    _check_sample_in_density(sample, g)
    weights = np.sqrt(_density_on_sample(sample, g))
    return FunctionalSample(sample.abscissae, sample.values * weights,
                            "state_transformed", sample.density_id)


def inverse_state_transform(sample: FunctionalSample,
                            g: DensityModel) -> FunctionalSample:
    """Divide the values pointwise by the root intensity."""
    if sample.tag != "state_transformed":
        raise InputError(f"expected a state-transformed sample, got {sample.tag!r}")
    _check_sample_in_density(sample, g)
    gv = _density_on_sample(sample, g)
    if np.any(gv <= 0.0) or np.any(gv < g.floor * (1.0 - 1e-12)):
        raise ConditioningError("intensity falls below its floor; inverse unstable")
    return FunctionalSample(sample.abscissae, sample.values / np.sqrt(gv),
                            "original", sample.density_id)


def _invert_table_many(grid: np.ndarray, table: np.ndarray,
                       u: np.ndarray) -> np.ndarray:
    return np.array([_invert_table(grid, table, float(v)) for v in u])


def domain_transform(sample: FunctionalSample, cdf: CdfModel,
                     n_output=None) -> FunctionalSample:
    """Precompose with the inverse cumulative map and re-sample on a uniform
    unit-box lattice (default twice the input resolution per axis)."""
    if sample.tag != "original":
        raise InputError(f"expected an original-topology sample, got {sample.tag!r}")
    if sample.d != cdf.d:
        raise InputError("sample and cumulative-model dimensions differ")
    for a, (lo, hi) in zip(sample.abscissae, cdf.domain):
        if a[0] < lo or a[-1] > hi:
            raise InputError("sample abscissae outside the cumulative domain")
    if n_output is None:
        sizes = tuple(2 * a.size for a in sample.abscissae)
    elif np.isscalar(n_output):
        sizes = (int(n_output),) * sample.d
    else:
        sizes = tuple(int(m) for m in n_output)

    if sample.d == 1:
        u = np.linspace(0.0, 1.0, sizes[0])
        pre = _invert_table_many(cdf.grids[0], cdf.marginal, u)
        pre = np.clip(pre, sample.abscissae[0][0], sample.abscissae[0][-1])
        return FunctionalSample((u,), sample.interpolate(pre),
                                "domain_transformed", sample.density_id)

    u1 = np.linspace(0.0, 1.0, sizes[0])
    u2 = np.linspace(0.0, 1.0, sizes[1])
    xs = _invert_table_many(cdf.grids[0], cdf.marginal, u1)
    gx = cdf.grids[0]
    out = np.empty(sizes)
    interp = RegularGridInterpolator(sample.abscissae, sample.values,
                                     method="linear")
    (alo, ahi), (blo, bhi) = sample.domain
    for i, x in enumerate(xs):
        k = int(np.clip(np.searchsorted(gx, x, side="right") - 1, 0, gx.size - 2))
        w = (x - gx[k]) / (gx[k + 1] - gx[k])
        row = (1.0 - w) * cdf.conditional[k] + w * cdf.conditional[k + 1]
        ys = _invert_table_many(cdf.grids[1], row, u2)
        pts = np.column_stack([np.full(u2.size, np.clip(x, alo, ahi)),
                               np.clip(ys, blo, bhi)])
        out[i] = interp(pts)
    return FunctionalSample((u1, u2), out, "domain_transformed",
                            sample.density_id)


def _common_values(h: FunctionalSample, k: FunctionalSample):
    if h.d != k.d:
        raise InputError("samples have different dimensions")
    same = all(a.size == b.size and np.array_equal(a, b)
               for a, b in zip(h.abscissae, k.abscissae))
    if same:
        return h.abscissae, h.values, k.values
    for (alo, ahi), (blo, bhi) in zip(h.domain, k.domain):
        if alo < blo or ahi > bhi:
            raise InputError("second sample does not cover the first")
    if h.d == 1:
        return h.abscissae, h.values, k.interpolate(h.abscissae[0])
    mesh = np.stack(np.meshgrid(*h.abscissae, indexing="ij"), axis=-1)
    return h.abscissae, h.values, k.interpolate(
        mesh.reshape(-1, 2)).reshape(h.values.shape)


def _plain_inner_product(h: FunctionalSample, k: FunctionalSample) -> float:
    axes, hv, kv = _common_values(h, k)
    out = hv * kv
    for a in reversed(axes):
        out = trapezoid(out, a, axis=-1)
    return float(out)


def weighted_inner_product(h: FunctionalSample, k: FunctionalSample,
                           g: DensityModel) -> float:
    """Trapezoid quadrature of h * k * g on the first sample's abscissae."""
    axes, hv, kv = _common_values(h, k)
    _check_sample_in_density(h, g)
    gv = _density_on_sample(h, g)
    out = hv * kv * gv
    for a in reversed(axes):
        out = trapezoid(out, a, axis=-1)
    return float(out)


def equivalence_check(h: FunctionalSample, k: FunctionalSample,
                      g: DensityModel, n_output=None):
    """Triple of inner products that the embeddings promise to equate:
    weighted, state-transformed plain, domain-transformed plain."""
    if h.d != 1:
        raise InputError("the three-way diagnostic is for curves")
    weighted = weighted_inner_product(h, k, g)
    state = _plain_inner_product(state_transform(h, g), state_transform(k, g))
    cdf = cdf_from_density(g)
    domain = _plain_inner_product(domain_transform(h, cdf, n_output),
                                  domain_transform(k, cdf, n_output))
    return weighted, state, domain
