"""Data-driven knot placement via greedy regression trees.

A piecewise-constant least-squares fit over axis-aligned cells concentrates
cells where the signal varies most; cell midpoints become knot candidates.
A Monte-Carlo curve of the same fit on pure Gaussian noise tells when adding
cells stops explaining structure and starts chasing noise.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import InputError

__all__ = [
    "TreeLeaf",
    "TreeSplit",
    "RegressionTree",
    "KnotCandidateSet",
    "StoppingCurve",
    "fit_tree",
    "extract_knots",
    "stopping_curve",
    "noise_reference_curve",
    "select_knot_count",
]

# splits must beat this fraction of the root SSE to count as real structure
_REL_TOL = 1e-12


def _sse(y: np.ndarray) -> float:
    if y.size == 0:
        return 0.0
    return float(np.sum((y - y.mean()) ** 2))


@dataclass(frozen=True)
class TreeLeaf:
    """Terminal cell: an axis-aligned box carrying the mean of its samples."""

    cell: tuple
    mean: float
    n_samples: int
    sse: float


@dataclass(frozen=True)
class TreeSplit:
    axis: int
    threshold: float
    left: object
    right: object


@dataclass(frozen=True)
class RegressionTree:
    """Binary tree of axis-aligned splits fitted greedily by SSE reduction.

    sse_path[i] is the total SSE of the piecewise-constant fit with i+1
    leaves; splits lists (axis, threshold) in creation order.
    """

    root: object
    domain: tuple
    leaf_count: int
    sse_path: np.ndarray
    splits: tuple

    def leaves(self) -> list:
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, TreeSplit):
                stack.append(node.right)
                stack.append(node.left)
            else:
                out.append(node)
        return out

    def predict(self, locations) -> np.ndarray:
        X = _as_locations(locations)
        if X.shape[1] != len(self.domain):
            raise InputError(
                f"locations have {X.shape[1]} coordinates, tree domain has {len(self.domain)}")
        out = np.empty(X.shape[0])
        for i, x in enumerate(X):
            node = self.root
            while isinstance(node, TreeSplit):
                node = node.left if x[node.axis] <= node.threshold else node.right
            out[i] = node.mean
        return out


@dataclass(frozen=True)
class KnotCandidateSet:
    """Cell midpoints of a fitted tree, lexicographically ordered."""

    points: np.ndarray
    domain: tuple


@dataclass(frozen=True)
class StoppingCurve:
    """Relative SSE (against the single-leaf fit) as leaves are added."""

    leaf_counts: np.ndarray
    relative_errors: np.ndarray
    is_noise_reference: bool = False

    def __post_init__(self):
        counts = np.asarray(self.leaf_counts, dtype=int)
        errors = np.asarray(self.relative_errors, dtype=float)
        if counts.size != errors.size:
            raise InputError("leaf_counts and relative_errors length mismatch")
        if counts.size == 0:
            raise InputError("empty stopping curve")
        if np.any(np.diff(counts) <= 0):
            raise InputError("leaf_counts must be strictly increasing")
        if np.any(np.diff(errors) > 1e-9):
            raise InputError("relative errors must be non-increasing")
        object.__setattr__(self, "leaf_counts", counts)
        object.__setattr__(self, "relative_errors", errors)


def _as_locations(locations) -> np.ndarray:
    X = np.asarray(locations, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InputError("locations must be a 1D array or an (n, d) array")
    return X


def _best_split(X, y, idx, n_axes, min_pts, gate):
    """Best (reduction, axis, threshold) over one cell, or None.

    Thresholds sit midway between consecutive distinct coordinates; ties go
    to the lower axis, then the lower threshold.
    """
    yc = y[idx]
    parent = _sse(yc)
    best = None
    for axis in range(n_axes):
        coords = X[idx, axis]
        order = np.argsort(coords, kind="stable")
        cs = coords[order]
        ys = yc[order]
        cut = np.nonzero(np.diff(cs) > 0)[0]
        if cut.size == 0:
            continue
        n_left = cut + 1
        n_right = cs.size - n_left
        keep = (n_left >= min_pts) & (n_right >= min_pts)
        cut = cut[keep]
        if cut.size == 0:
            continue
        n_left = n_left[keep]
        n_right = n_right[keep]
        cum = np.cumsum(ys)
        cum2 = np.cumsum(ys * ys)
        s_left = cum[cut]
        s2_left = cum2[cut]
        sse_left = np.maximum(s2_left - s_left ** 2 / n_left, 0.0)
        s_right = cum[-1] - s_left
        s2_right = cum2[-1] - s2_left
        sse_right = np.maximum(s2_right - s_right ** 2 / n_right, 0.0)
        reduction = parent - sse_left - sse_right
        j = int(np.argmax(reduction))
        if reduction[j] <= gate:
            continue
        if best is None or reduction[j] > best[0]:
            threshold = 0.5 * (cs[cut[j]] + cs[cut[j] + 1])
            best = (float(reduction[j]), axis, float(threshold))
    return best


def fit_tree(locations, values, max_leaves: int, min_cell_points: int = 5,
             domain=None) -> RegressionTree:
    """Grow a regression tree best-first: always split the leaf whose best
    admissible split removes the most SSE."""
    X = _as_locations(locations)
    y = np.asarray(values, dtype=float).ravel()
    n, d = X.shape
    if n == 0:
        raise InputError("empty sample set")
    if y.size != n:
        raise InputError(f"{n} locations but {y.size} values")
    if d not in (1, 2):
        raise InputError("only 1D and 2D domains are supported")
    if max_leaves < 1:
        raise InputError("max_leaves must be at least 1")
    if min_cell_points < 1:
        raise InputError("min_cell_points must be at least 1")
    if n < 2 * min_cell_points:
        raise InputError(f"need at least {2 * min_cell_points} samples")
    if domain is None:
        domain = tuple((float(X[:, a].min()), float(X[:, a].max())) for a in range(d))
    else:
        domain = tuple((float(lo), float(hi)) for lo, hi in domain)
        if len(domain) != d:
            raise InputError("domain arity does not match the locations")
        for a, (lo, hi) in enumerate(domain):
            if hi <= lo:
                raise InputError("domain box must have positive widths")
            if X[:, a].min() < lo or X[:, a].max() > hi:
                raise InputError("samples fall outside the stated domain")

    root_sse = _sse(y)
    gate = _REL_TOL * root_sse
    cell_of = {0: domain}
    idx_of = {0: np.arange(n)}
    split_nodes = {}
    next_id = 1
    total = root_sse
    sse_path = [total]
    splits = []
    heap = []
    if max_leaves > 1:
        cand = _best_split(X, y, idx_of[0], d, min_cell_points, gate)
        if cand is not None:
            heapq.heappush(heap, (-cand[0], cand[1], cand[2], 0))

    n_leaves = 1
    while n_leaves < max_leaves and heap:
        _, axis, threshold, leaf_id = heapq.heappop(heap)
        idx = idx_of[leaf_id]
        mask = X[idx, axis] <= threshold
        idx_l, idx_r = idx[mask], idx[~mask]
        if idx_l.size == 0 or idx_r.size == 0:
            continue
        lo, hi = cell_of[leaf_id][axis]
        cell = cell_of[leaf_id]
        cell_l = cell[:axis] + ((lo, threshold),) + cell[axis + 1:]
        cell_r = cell[:axis] + ((threshold, hi),) + cell[axis + 1:]
        total += _sse(y[idx_l]) + _sse(y[idx_r]) - _sse(y[idx])
        sse_path.append(total)
        splits.append((axis, threshold))
        left_id, right_id = next_id, next_id + 1
        next_id += 2
        cell_of[left_id], idx_of[left_id] = cell_l, idx_l
        cell_of[right_id], idx_of[right_id] = cell_r, idx_r
        split_nodes[leaf_id] = (axis, threshold, left_id, right_id)
        n_leaves += 1
        for child, cidx in ((left_id, idx_l), (right_id, idx_r)):
            cand = _best_split(X, y, cidx, d, min_cell_points, gate)
            if cand is not None:
                heapq.heappush(heap, (-cand[0], cand[1], cand[2], child))

    # children carry larger ids than their parent, so building in reverse id
    # order has every child ready before its split node
    nodes = {}
    for i in sorted(cell_of, reverse=True):
        if i in split_nodes:
            axis, threshold, left_id, right_id = split_nodes[i]
            nodes[i] = TreeSplit(axis, threshold, nodes[left_id], nodes[right_id])
        else:
            idx = idx_of[i]
            nodes[i] = TreeLeaf(cell_of[i], float(y[idx].mean()), int(idx.size),
                                _sse(y[idx]))
    return RegressionTree(nodes[0], domain, n_leaves, np.asarray(sse_path),
                          tuple(splits))


def extract_knots(tree: RegressionTree) -> KnotCandidateSet:
    """One knot candidate per leaf: the center of its cell."""
    mids = np.array([[0.5 * (lo + hi) for lo, hi in leaf.cell]
                     for leaf in tree.leaves()])
    order = np.lexsort(mids.T[::-1])
    return KnotCandidateSet(mids[order], tree.domain)


def _relative_path(tree: RegressionTree, n_points: int) -> np.ndarray:
    path = tree.sse_path
    base = path[0]
    if base <= 0.0:
        rel = np.zeros(len(path))
        rel[0] = 1.0
    else:
        # accumulated SSE updates can drift a hair below zero at a perfect fit
        rel = np.maximum(path / base, 0.0)
    if len(rel) < n_points:
        rel = np.concatenate([rel, np.full(n_points - len(rel), rel[-1])])
    return rel


def stopping_curve(locations, values, max_leaves: int, min_cell_points: int = 1,
                   domain=None, is_noise_reference: bool = False) -> StoppingCurve:
    """Relative-SSE curve of a greedy fit, padded when growth stalls early."""
    tree = fit_tree(locations, values, max_leaves=max_leaves,
                    min_cell_points=min_cell_points, domain=domain)
    return StoppingCurve(np.arange(1, max_leaves + 1),
                         _relative_path(tree, max_leaves), is_noise_reference)


def noise_reference_curve(n_samples: int, max_leaves: int, n_monte_carlo: int,
                          seed: int) -> StoppingCurve:
    """Average relative-SSE curve of trees fitted to pure Gaussian noise.

    Single-point leaves are allowed so the curve can reach zero; the result
    only depends on the sample count, not on the signal being modeled.
    """
    if n_monte_carlo < 1:
        raise InputError("n_monte_carlo must be at least 1")
    if n_samples < 2:
        raise InputError("need at least 2 samples")
    rng = np.random.default_rng(seed)
    xs = np.linspace(0.0, 1.0, n_samples)
    acc = np.zeros(max_leaves)
    for _ in range(n_monte_carlo):
        tree = fit_tree(xs, rng.standard_normal(n_samples),
                        max_leaves=max_leaves, min_cell_points=1)
        acc += _relative_path(tree, max_leaves)
    return StoppingCurve(np.arange(1, max_leaves + 1), acc / n_monte_carlo, True)


def select_knot_count(data_curve: StoppingCurve, noise_curve: StoppingCurve) -> int:
    """Smallest leaf count where the data's one-step error drop no longer
    beats the drop achieved on pure noise; the grid maximum if it always does."""
    if not np.array_equal(data_curve.leaf_counts, noise_curve.leaf_counts):
        raise InputError("curves use different leaf-count grids")
    data_drop = -np.diff(data_curve.relative_errors)
    noise_drop = -np.diff(noise_curve.relative_errors)
    hit = np.nonzero(data_drop <= noise_drop)[0]
    if hit.size:
        return int(data_curve.leaf_counts[hit[0]])
    return int(data_curve.leaf_counts[-1])
