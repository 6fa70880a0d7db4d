"""Class-wise principal components on shared-basis coefficients.

Each class keeps the mean and the leading eigenpairs of its coefficient
covariance. A new curve is transformed with every class's intensity model,
projected onto the shared lattice basis, and assigned to the class whose
eigenspace leaves the smallest projection residual; because the basis is
orthonormal, coefficient-space residuals equal functional L2 residuals.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .density import cdf_from_density
from .errors import InputError
from .splines import OrthonormalBasis
from .tensor import TensorBasisSpec, _contract, axis_projection_matrix
from .transforms import FunctionalSample, domain_transform, state_transform

__all__ = [
    "FpcaClassModel",
    "ClassificationResult",
    "ClassifierModel",
    "as_tensor_spec",
    "sample_coefficients",
    "batch_coefficients",
    "fit_class_fpca",
    "select_components",
    "project_eigenspace",
    "residual_weights",
    "classify",
    "evaluate",
    "synthetic_kl_samples",
]

TRANSFORM_KINDS = ("state", "domain")
# spectrum tail below this fraction of the leading eigenvalue is discarded
EIGENVALUE_KEEP_FACTOR = 1e-12
# a top eigenvalue this small relative to the data's mean square is centering
# round-off, not variance: the whole spectrum collapses to rank zero
_COVARIANCE_NOISE_FLOOR = 1e-24
_EIGENVALUE_NEG_TOL = 1e-10
_ORTHONORMAL_TOL = 1e-8
_TAG_TO_KIND = {"state_transformed": "state", "domain_transformed": "domain"}


@dataclass(frozen=True)
class FpcaClassModel:
    """Mean and leading covariance eigenpairs of one class's coefficients.

    ``eigenvalues``/``eigenvectors`` hold everything retained at fit time;
    ``n_components`` says how many leading pairs the eigenspace projector
    actually uses, so it can be re-tuned without refitting.
    """

    label: int
    mean: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    n_components: int
    density_id: str = ""
    transform_kind: str = "state"

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        values = np.asarray(self.eigenvalues, dtype=float)
        vectors = np.asarray(self.eigenvectors, dtype=float)
        if mean.ndim != 1 or mean.size == 0:
            raise InputError("mean must be a flat coefficient vector")
        if values.ndim != 1 or np.any(np.diff(values) > 0):
            raise InputError("eigenvalues must be sorted non-increasing")
        if np.any(values < -_EIGENVALUE_NEG_TOL):
            raise InputError("negative eigenvalue beyond rounding tolerance")
        values = np.maximum(values, 0.0)
        if vectors.shape != (mean.size, values.size):
            raise InputError("eigenvector matrix shape mismatch")
        if values.size:
            gram = vectors.T @ vectors
            if np.abs(gram - np.eye(values.size)).max() > _ORTHONORMAL_TOL:
                raise InputError("eigenvector columns are not orthonormal")
        if not 0 <= int(self.n_components) <= values.size:
            raise InputError("component count outside the retained spectrum")
        if self.transform_kind not in TRANSFORM_KINDS:
            raise InputError(f"unknown transform kind {self.transform_kind!r}")
        object.__setattr__(self, "label", int(self.label))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "eigenvalues", values)
        object.__setattr__(self, "eigenvectors", vectors)
        object.__setattr__(self, "n_components", int(self.n_components))

    @property
    def dimension(self) -> int:
        return self.mean.size

    @property
    def retained(self) -> int:
        return self.eigenvalues.size

    def with_component_count(self, n: int) -> "FpcaClassModel":
        return replace(self, n_components=int(n))


@dataclass(frozen=True)
class ClassificationResult:
    """Predicted label plus per-class residual norms and distance weights."""

    label: int
    labels: tuple
    residuals: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        labels = tuple(int(lab) for lab in self.labels)
        residuals = np.asarray(self.residuals, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if not labels:
            raise InputError("need at least one class")
        if residuals.shape != (len(labels),) or weights.shape != (len(labels),):
            raise InputError("per-class arrays must match the label list")
        if np.any(residuals < 0):
            raise InputError("residual norms cannot be negative")
        if np.any(weights < 0) or abs(float(weights.sum()) - 1.0) > 1e-12:
            raise InputError("weights must form a probability vector")
        if int(self.label) != labels[int(np.argmin(residuals))]:
            raise InputError("predicted label must minimize the residual")
        object.__setattr__(self, "label", int(self.label))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "residuals", residuals)
        object.__setattr__(self, "weights", weights)


@dataclass(frozen=True)
class ClassifierModel:
    """Per-class component models, their intensity models, and the shared basis.

    Immutable once built, so one instance can serve concurrent classify calls.
    Cumulative-distribution tables are derived from the densities on demand
    when the transform kind needs them.
    """

    classes: tuple
    densities: tuple
    basis: TensorBasisSpec
    transform_kind: str
    cdfs: tuple | None = None

    def __post_init__(self):
        classes = tuple(self.classes)
        densities = tuple(self.densities)
        basis = as_tensor_spec(self.basis)
        if not classes:
            raise InputError("need at least one class model")
        if len(densities) != len(classes):
            raise InputError("one intensity model per class is required")
        if self.transform_kind not in TRANSFORM_KINDS:
            raise InputError(f"unknown transform kind {self.transform_kind!r}")
        labels = [c.label for c in classes]
        if len(set(labels)) != len(labels):
            raise InputError("class labels must be unique")
        dim = int(np.prod(basis.shape))
        for c in classes:
            if c.dimension != dim:
                raise InputError("class model dimension differs from the basis")
            if c.transform_kind != self.transform_kind:
                raise InputError("class transform kind differs from the classifier")
        cdfs = self.cdfs
        if self.transform_kind == "domain" and cdfs is None:
            cdfs = tuple(cdf_from_density(g) for g in densities)
        if cdfs is not None:
            cdfs = tuple(cdfs)
            if len(cdfs) != len(classes):
                raise InputError("one cumulative model per class is required")
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "densities", densities)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "cdfs", cdfs)

    @property
    def labels(self) -> tuple:
        return tuple(c.label for c in self.classes)

    def class_index(self, label: int) -> int:
        try:
            return self.labels.index(int(label))
        except ValueError:
            raise InputError(f"label {label} is not part of the classifier") from None

    def with_class_components(self, label: int, n: int) -> "ClassifierModel":
        k = self.class_index(label)
        classes = list(self.classes)
        classes[k] = classes[k].with_component_count(n)
        return replace(self, classes=tuple(classes))


def as_tensor_spec(basis) -> TensorBasisSpec:
    """Wrap a single-axis orthonormal basis as a one-axis tensor basis."""
    if isinstance(basis, TensorBasisSpec):
        return basis
    if isinstance(basis, OrthonormalBasis):
        return TensorBasisSpec((basis,))
    raise InputError("expected an OrthonormalBasis or a TensorBasisSpec")


def sample_coefficients(sample: FunctionalSample, basis) -> np.ndarray:
    """Flattened shared-basis coefficients of the sample's interpolant."""
    spec = as_tensor_spec(basis)
    if sample.d != spec.d:
        raise InputError("sample and basis dimensions differ")
    mats = [axis_projection_matrix(ax, g)
            for ax, g in zip(spec.axes, sample.abscissae)]
    return _contract(sample.values, mats).ravel()


def batch_coefficients(samples, basis) -> np.ndarray:
    """Coefficient rows for many samples, reusing per-mesh projection matrices."""
    spec = as_tensor_spec(basis)
    samples = list(samples)
    rows = np.empty((len(samples), int(np.prod(spec.shape))))
    cache = {}
    for j, s in enumerate(samples):
        if s.d != spec.d:
            raise InputError("sample and basis dimensions differ")
        key = tuple(a.tobytes() for a in s.abscissae)
        mats = cache.get(key)
        if mats is None:
            mats = [axis_projection_matrix(ax, g)
                    for ax, g in zip(spec.axes, s.abscissae)]
            cache[key] = mats
        rows[j] = _contract(s.values, mats).ravel()
    return rows


def fit_class_fpca(samples, basis, label: int = 0,
                   n_components: int | None = None) -> FpcaClassModel:
    """Fit one class's coefficient mean and covariance eigenpairs.

    Samples must already carry a transformed topology tag and share one
    domain. The covariance uses the unbiased 1/(m-1) normalization; the
    eigenvalue tail below EIGENVALUE_KEEP_FACTOR times the leading value is
    dropped, and each eigenvector's sign makes its largest-magnitude entry
    positive so refits are reproducible. ``n_components`` defaults to
    everything retained.
    """
    samples = list(samples)
    if len(samples) < 2:
        raise InputError("need at least 2 samples to estimate a covariance")
    kind = _TAG_TO_KIND.get(samples[0].tag)
    if kind is None:
        raise InputError("samples must be topology-transformed before fitting")
    for s in samples[1:]:
        if s.tag != samples[0].tag:
            raise InputError("samples mix transform kinds")
        if s.domain != samples[0].domain:
            raise InputError("samples do not share a common domain")
    X = batch_coefficients(samples, basis)
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (len(samples) - 1)
    values, vectors = np.linalg.eigh(cov)
    values = values[::-1]
    vectors = vectors[:, ::-1]
    noise_floor = _COVARIANCE_NOISE_FLOOR * (1.0 + float(np.mean(X * X)))
    if values[0] > noise_floor:
        keep = values > EIGENVALUE_KEEP_FACTOR * values[0]
    else:
        keep = np.zeros(values.size, dtype=bool)
    values = values[keep]
    vectors = vectors[:, keep]
    for col in range(vectors.shape[1]):
        i = int(np.argmax(np.abs(vectors[:, col])))
        if vectors[i, col] < 0:
            vectors[:, col] = -vectors[:, col]
    return FpcaClassModel(
        label=int(label), mean=mean, eigenvalues=values, eigenvectors=vectors,
        n_components=values.size if n_components is None else int(n_components),
        density_id=samples[0].density_id or "", transform_kind=kind)


def project_eigenspace(f, model: FpcaClassModel) -> np.ndarray:
    """Affine projection onto the mean plus the span of the leading eigenvectors."""
    f = np.asarray(f, dtype=float)
    if f.shape != model.mean.shape:
        raise InputError(
            f"coefficient vector has shape {f.shape}, expected {model.mean.shape}")
    lead = model.eigenvectors[:, :model.n_components]
    centered = f - model.mean
    return model.mean + lead @ (lead.T @ centered)


def residual_weights(residuals) -> np.ndarray:
    """Squared residual norms normalized into a probability vector.

    Smaller weight means closer to that class's eigenspace. When every
    residual is zero the weights fall back to uniform.
    """
    r = np.asarray(residuals, dtype=float)
    if r.ndim != 1 or r.size == 0 or np.any(r < 0):
        raise InputError("residuals must be a non-empty non-negative vector")
    sq = r * r
    total = float(sq.sum())
    if total == 0.0:
        return np.full(r.size, 1.0 / r.size)
    return sq / total


def _transformed_coefficients(x: FunctionalSample,
                              model: ClassifierModel) -> np.ndarray:
    """Shared-basis coefficients of x after each class's topology transform."""
    rows = []
    for k, g in enumerate(model.densities):
        if model.transform_kind == "state":
            tx = state_transform(x, g)
        else:
            tx = domain_transform(x, model.cdfs[k])
        rows.append(sample_coefficients(tx, model.basis))
    return np.array(rows)


def classify(x: FunctionalSample, model: ClassifierModel) -> ClassificationResult:
    """Assign an untransformed sample to the class with the smallest residual.

    Residual ties break to the class listed first; the weights are the
    squared residuals normalized to sum to one.
    """
    if x.tag != "original":
        raise InputError(f"expected an original-topology sample, got {x.tag!r}")
    coeff = _transformed_coefficients(x, model)
    residuals = np.empty(len(model.classes))
    for k, cls in enumerate(model.classes):
        residuals[k] = np.linalg.norm(coeff[k] - project_eigenspace(coeff[k], cls))
    return ClassificationResult(
        label=model.classes[int(np.argmin(residuals))].label,
        labels=model.labels, residuals=residuals,
        weights=residual_weights(residuals))


def select_components(model: FpcaClassModel, validation, candidates,
                      full: ClassifierModel) -> int:
    """Component count for one class that maximizes validation accuracy.

    Counts beyond the retained spectrum are truncated to it; accuracy ties
    prefer the smallest count. The other classes keep the counts stored in
    ``full``. Returns the winning (possibly truncated) count.
    """
    validation = list(validation)
    if not validation:
        raise InputError("validation set is empty")
    cands = sorted({int(c) for c in candidates})
    if not cands:
        raise InputError("candidate list is empty")
    if cands[0] < 0:
        raise InputError("component counts must be non-negative")
    k0 = full.class_index(model.label)
    class_labels = np.array(full.labels)
    tuned = full.classes[k0]

    # Orthonormal eigenvectors let every candidate count reuse one pass:
    # residual^2 at count n is |centered|^2 minus the first n squared scores.
    fixed = np.empty((len(validation), len(full.classes)))
    prefix = np.empty((len(validation), tuned.retained + 1))
    truth = np.empty(len(validation), dtype=int)
    for j, (sample, lab) in enumerate(validation):
        truth[j] = int(lab)
        coeff = _transformed_coefficients(sample, full)
        for k, cls in enumerate(full.classes):
            if k == k0:
                centered = coeff[k] - tuned.mean
                scores = tuned.eigenvectors.T @ centered
                prefix[j] = np.concatenate([[0.0], np.cumsum(scores ** 2)])
                fixed[j, k] = float(np.dot(centered, centered))
            else:
                fixed[j, k] = np.linalg.norm(
                    coeff[k] - project_eigenspace(coeff[k], cls)) ** 2

    best_count, best_acc = None, -1.0
    for c in cands:
        n_eff = min(c, tuned.retained)
        res2 = fixed.copy()
        res2[:, k0] = np.maximum(fixed[:, k0] - prefix[:, n_eff], 0.0)
        pred = class_labels[np.argmin(res2, axis=1)]
        acc = float(np.mean(pred == truth))
        if acc > best_acc:
            best_count, best_acc = n_eff, acc
    return int(best_count)


def evaluate(results, truth) -> dict:
    """Accuracy and a square confusion-count table over the label universe."""
    results = list(results)
    truth = [int(t) for t in truth]
    if len(results) != len(truth):
        raise InputError("results and truth lengths differ")
    if not results:
        raise InputError("nothing to evaluate")
    universe = sorted(set(truth).union(*[set(r.labels) for r in results]))
    index = {lab: i for i, lab in enumerate(universe)}
    confusion = np.zeros((len(universe), len(universe)), dtype=int)
    hits = 0
    for r, t in zip(results, truth):
        confusion[index[t], index[r.label]] += 1
        hits += int(r.label == t)
    return {"accuracy": hits / len(results), "labels": tuple(universe),
            "confusion": confusion}


def synthetic_kl_samples(abscissae, mean, eigenfunctions, eigenvalues,
                         n_samples: int, rng, tag: str = "original",
                         density_id: str | None = None) -> list:
    """Draw curves mean + sum_i sqrt(eigenvalue_i) * Z_i * eigenfunction_i.

    Z are independent standard normals from ``rng``; ``eigenfunctions`` is an
    array of mode shapes sampled on the same mesh as ``mean`` (first axis
    indexes the mode). Useful for generating data with a known spectrum.
    """
    mean = np.asarray(mean, dtype=float)
    modes = np.asarray(eigenfunctions, dtype=float)
    lam = np.asarray(eigenvalues, dtype=float)
    if n_samples < 1:
        raise InputError("need at least one sample")
    if modes.ndim != mean.ndim + 1 or modes.shape[1:] != mean.shape:
        raise InputError("mode shapes must match the mean mesh")
    if lam.shape != (modes.shape[0],):
        raise InputError("one eigenvalue per mode is required")
    if np.any(lam < 0):
        raise InputError("eigenvalues cannot be negative")
    scores = rng.standard_normal((n_samples, lam.size)) * np.sqrt(lam)
    values = mean[None] + np.tensordot(scores, modes, axes=(1, 0))
    return [FunctionalSample(abscissae, v, tag, density_id) for v in values]
