"""End-to-end orchestration: ingest and split a labeled dataset, select
knot candidates per class, estimate their densities, apply the topology
transform, fit shared-lattice FPCA models, tune component counts, and
evaluate, writing every artifact along the way.

Identical configuration and seed produce byte-identical artifacts.
"""
from __future__ import annotations

import dataclasses
import math
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from .density import (
    cdf_from_density,
    density_from_values,
    estimate_density,
)
from .errors import ConfigurationError, DataFormatError, SplineFdaError
from .fpca import (
    ClassifierModel,
    classify,
    evaluate,
    fit_class_fpca,
    project_eigenspace,
    sample_coefficients,
    select_components,
)
from .imaging import (
    column_major_sequence,
    gradient_image,
    hilbert_map,
    image_to_sequence,
)
from .io import (
    DatasetManifest,
    ModelArchive,
    canonical_json,
    config_hash,
    load_csv_curves,
    load_idx,
    load_idx_labels,
    save_csv_curves,
    save_model,
)
from .knots import (
    KnotCandidateSet,
    extract_knots,
    fit_tree,
    noise_reference_curve,
    select_knot_count,
    stopping_curve,
)
from .splines import BasisSpec, orthonormalize, uniform_knots
from .tensor import TensorBasisSpec, TensorCoefficients, tensor_evaluate_grid
from .transforms import FunctionalSample, domain_transform, state_transform

__all__ = [
    "PipelineConfig",
    "run_pipeline",
    "ingest_dataset",
    "preprocess_images",
    "classify_archive",
    "evaluate_archive",
    "render_svg_curves",
]

TRANSFORM_CHOICES = ("state", "domain", "none")
_STAGES = ("knot-selection", "density", "transform", "basis")


@dataclass(frozen=True)
class PipelineConfig:
    """Declarative description of one classification run."""

    manifest: DatasetManifest
    transform: str = "state"
    degree: int = 2
    n_interior: int = 12
    candidates: tuple = (1, 2, 3, 4, 5, 6)
    ddk_max_knots: int = 20
    ddk_sample_cap: int = 50
    ddk_noise_trials: int = 20
    density_grid: int = 201
    density_floor: float | None = None
    bandwidth: float | None = None
    uniform_density: bool = False
    plot_samples: int = 3
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.manifest, DatasetManifest):
            raise ConfigurationError("config needs a dataset manifest")
        if self.transform not in TRANSFORM_CHOICES:
            raise ConfigurationError(
                f"transform must be one of {TRANSFORM_CHOICES}")
        if int(self.degree) < 1:
            raise ConfigurationError("spline degree must be at least 1")
        if int(self.n_interior) < int(self.degree):
            raise ConfigurationError(
                "the lattice needs at least as many interior knots as the "
                "degree")
        cands = tuple(int(c) for c in self.candidates)
        if not cands or any(c < 0 for c in cands):
            raise ConfigurationError(
                "candidates must be a non-empty list of counts >= 0")
        for name, low in (("ddk_max_knots", 2), ("ddk_sample_cap", 1),
                          ("ddk_noise_trials", 1), ("density_grid", 2),
                          ("plot_samples", 0)):
            if int(getattr(self, name)) < low:
                raise ConfigurationError(f"{name} must be at least {low}")
        for name in ("density_floor", "bandwidth"):
            value = getattr(self, name)
            if value is not None and float(value) <= 0.0:
                raise ConfigurationError(f"{name} must be positive")
        if isinstance(self.seed, bool) or int(self.seed) != self.seed:
            raise ConfigurationError("seed must be an integer")
        object.__setattr__(self, "transform", str(self.transform))
        object.__setattr__(self, "degree", int(self.degree))
        object.__setattr__(self, "n_interior", int(self.n_interior))
        object.__setattr__(self, "candidates", cands)
        for name in ("ddk_max_knots", "ddk_sample_cap", "ddk_noise_trials",
                     "density_grid", "plot_samples", "seed"):
            object.__setattr__(self, name, int(getattr(self, name)))
        for name in ("density_floor", "bandwidth"):
            value = getattr(self, name)
            object.__setattr__(self, name,
                               None if value is None else float(value))
        object.__setattr__(self, "uniform_density", bool(self.uniform_density))

    def to_dict(self) -> dict:
        out = {"manifest": self.manifest.to_dict()}
        for field in dataclasses.fields(self):
            if field.name == "manifest":
                continue
            value = getattr(self, field.name)
            out[field.name] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        if not isinstance(d, dict):
            raise ConfigurationError("config must be a mapping")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
        if "manifest" not in d:
            raise ConfigurationError("config is missing the dataset manifest")
        mdict = d["manifest"]
        if not isinstance(mdict, dict):
            raise ConfigurationError("manifest must be a mapping")
        if "seed" not in mdict:
            mdict = {**mdict, "seed": d.get("seed", 0)}
        kwargs = {k: v for k, v in d.items() if k != "manifest"}
        if "candidates" in kwargs:
            kwargs["candidates"] = tuple(kwargs["candidates"])
        return cls(manifest=DatasetManifest.from_dict(mdict), **kwargs)

    def with_seed(self, seed: int) -> "PipelineConfig":
        manifest = DatasetManifest.from_dict(
            {**self.manifest.to_dict(), "seed": int(seed)})
        return dataclasses.replace(self, manifest=manifest, seed=int(seed))


@contextmanager
def _stage(name: str):
    """Annotate any package error with the stage that raised it."""
    try:
        yield
    except SplineFdaError as exc:
        raise type(exc)(f"[stage {name}] {exc}") from exc


# --------------------------------------------------------------------------
# Ingestion

def preprocess_images(images, gradient=False, hilbert=False,
                      column_major=False):
    """Images to functional samples: optional gradient filter, then either a
    Hilbert-curve or column-major 1D read-out, else a 2D lattice sample."""
    samples = []
    hmap = None
    for image in images:
        if gradient:
            image = gradient_image(image)
        if hilbert:
            if hmap is None:
                side = max(image.height, image.width)
                hmap = hilbert_map(max(1, math.ceil(math.log2(side))))
            samples.append(image_to_sequence(image, hmap))
        elif column_major:
            samples.append(column_major_sequence(image))
        else:
            samples.append(FunctionalSample(
                (np.linspace(0.0, 1.0, image.height),
                 np.linspace(0.0, 1.0, image.width)), image.pixels))
    return samples


def ingest_dataset(manifest: DatasetManifest):
    """Load the manifest's data source into functional samples plus labels."""
    if manifest.data_format == "csv-curves":
        samples = load_csv_curves(manifest.sources["csv-curves"])
        labels = load_idx_labels(manifest.sources["idx-labels"])
        if len(samples) != len(labels):
            raise DataFormatError(
                f"{len(samples)} curves but {len(labels)} labels")
        return samples, labels
    images, labels = load_idx(manifest.sources["idx-images"],
                              manifest.sources["idx-labels"])
    return preprocess_images(images, manifest.gradient, manifest.hilbert,
                             manifest.column_major), labels


def _split_classes(config: PipelineConfig, samples, labels):
    train_idx, val_idx, test_idx = config.manifest.split_indices(len(samples))
    for name, part in (("training", train_idx), ("validation", val_idx),
                       ("test", test_idx)):
        if part.size == 0:
            raise ConfigurationError(
                f"the {name} subset is empty at {len(samples)} samples")
    class_labels = sorted({int(labels[i]) for i in train_idx})
    if len(class_labels) < 2:
        raise ConfigurationError(
            "the training split holds fewer than 2 classes")
    by_class = {lab: [samples[i] for i in train_idx if int(labels[i]) == lab]
                for lab in class_labels}
    for lab, group in by_class.items():
        if len(group) < 2:
            raise ConfigurationError(
                f"class {lab} has {len(group)} training samples; need >= 2")
    return train_idx, val_idx, test_idx, class_labels, by_class


# --------------------------------------------------------------------------
# Per-class stages

def _tree_data(sample: FunctionalSample):
    if sample.d == 1:
        return sample.abscissae[0], sample.values
    mesh = np.meshgrid(*sample.abscissae, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh]), sample.values.ravel()


def _class_knot_candidates(by_class, config: PipelineConfig):
    """Per class: tree-based knot candidates pooled over capped training
    curves, with the count of each curve's knots picked where its error
    drop falls to the Monte-Carlo pure-noise reference."""
    noise_cache = {}
    knot_sets, stopping, counts = {}, {}, {}
    for lab, group in by_class.items():
        chosen = group[:config.ddk_sample_cap]
        pooled, per_curve, curve_errors = [], [], []
        reference = None
        for sample in chosen:
            X, y = _tree_data(sample)
            reference = noise_cache.get(y.size)
            if reference is None:
                reference = noise_reference_curve(
                    y.size, config.ddk_max_knots, config.ddk_noise_trials,
                    config.seed)
                noise_cache[y.size] = reference
            curve = stopping_curve(X, y, max_leaves=config.ddk_max_knots,
                                   domain=sample.domain)
            count = select_knot_count(curve, reference)
            tree = fit_tree(X, y, max_leaves=count, min_cell_points=1,
                            domain=sample.domain)
            pooled.append(extract_knots(tree).points)
            per_curve.append(count)
            curve_errors.append(curve.relative_errors)
        knot_sets[lab] = KnotCandidateSet(np.vstack(pooled), chosen[0].domain)
        stopping[lab] = {
            "leaf_counts": reference.leaf_counts.tolist(),
            "mean_relative_errors": np.mean(curve_errors, axis=0).tolist(),
            "noise_reference": reference.relative_errors.tolist(),
        }
        counts[lab] = per_curve
    return knot_sets, stopping, counts


def _uniform_density(domain, grid_size: int):
    grids = tuple(np.linspace(lo, hi, grid_size) for lo, hi in domain)
    return density_from_values(domain, grids,
                               np.ones(tuple(g.size for g in grids)))


def _class_densities(by_class, knot_sets, config: PipelineConfig):
    densities = {}
    for lab, group in by_class.items():
        if config.transform == "none" or config.uniform_density:
            densities[lab] = _uniform_density(group[0].domain,
                                              config.density_grid)
        else:
            densities[lab] = estimate_density(
                knot_sets[lab], bandwidth=config.bandwidth,
                floor=config.density_floor, grid_size=config.density_grid)
    return densities


def _transform_sample(sample, label, densities, cdfs, kind):
    tagged = dataclasses.replace(sample, density_id=f"class-{label}")
    if kind == "state":
        return state_transform(tagged, densities[label])
    return domain_transform(tagged, cdfs[label])


def _shared_basis(transformed, config: PipelineConfig) -> TensorBasisSpec:
    pool = [s for group in transformed.values() for s in group]
    d = pool[0].d
    axes = []
    for a in range(d):
        lo = min(s.domain[a][0] for s in pool)
        hi = max(s.domain[a][1] for s in pool)
        axis = orthonormalize(BasisSpec(uniform_knots(lo, hi,
                                                      config.n_interior),
                                        config.degree))
        mesh = min(s.abscissae[a].size for s in pool)
        if mesh < axis.dimension:
            raise ConfigurationError(
                f"axis {a}: lattice dimension {axis.dimension} exceeds the "
                f"{mesh}-point sample mesh")
        axes.append(axis)
    return TensorBasisSpec(tuple(axes))


# --------------------------------------------------------------------------
# Artifact emission

def _write_stopping_csvs(out: Path, stopping: dict, artifacts: list) -> None:
    for lab, diag in stopping.items():
        counts = np.asarray(diag["leaf_counts"], dtype=float)
        name = f"stopping_class{lab}.csv"
        save_csv_curves(
            [FunctionalSample((counts,), diag["mean_relative_errors"]),
             FunctionalSample((counts,), diag["noise_reference"])],
            out / name)
        artifacts.append(name)


def _write_density_csvs(out: Path, densities: dict, artifacts: list) -> None:
    for lab, g in densities.items():
        if g.d == 1:
            name = f"knot_density_class{lab}.csv"
            save_csv_curves([FunctionalSample((g.grids[0],), g.values)],
                            out / name)
            artifacts.append(name)
            continue
        for a in range(2):
            marginal = trapezoid(g.values, g.grids[1 - a], axis=1 - a)
            name = f"knot_density_class{lab}_axis{a}.csv"
            save_csv_curves([FunctionalSample((g.grids[a],), marginal)],
                            out / name)
            artifacts.append(name)


def _write_transform_csvs(out: Path, transformed: dict, limit: int,
                          artifacts: list) -> None:
    for lab, group in transformed.items():
        preview = group[:limit]
        if not preview or preview[0].d != 1:
            continue
        name = f"transformed_class{lab}.csv"
        save_csv_curves([FunctionalSample((s.abscissae[0],), s.values)
                         for s in preview], out / name)
        artifacts.append(name)


def _write_basis_csvs(out: Path, basis: TensorBasisSpec,
                      artifacts: list) -> None:
    for a, axis in enumerate(basis.axes):
        spec = axis.spec
        xs = np.linspace(spec.a, spec.b, 513)
        table = axis.matrix(xs)
        name = f"basis_axis{a}.csv"
        save_csv_curves([FunctionalSample((xs,), table[:, j])
                         for j in range(table.shape[1])], out / name)
        artifacts.append(name)


def _write_approx_csvs(out: Path, classifier, samples, labels, test_idx,
                       densities, cdfs, limit: int, artifacts: list) -> None:
    kind = classifier.transform_kind
    basis = classifier.basis
    for j, i in enumerate(test_idx[:limit]):
        lab = int(labels[i])
        if lab not in classifier.labels or samples[i].d != 1:
            continue
        moved = _transform_sample(samples[i], lab, densities, cdfs, kind)
        coeff = sample_coefficients(moved, basis)
        model = classifier.classes[classifier.class_index(lab)]
        recon = project_eigenspace(coeff, model)
        values = tensor_evaluate_grid(
            TensorCoefficients(basis, recon.reshape(basis.shape)),
            moved.abscissae)
        name = f"approx_test{j}.csv"
        save_csv_curves([moved,
                         FunctionalSample((moved.abscissae[0],), values)],
                        out / name)
        artifacts.append(name)


# --------------------------------------------------------------------------
# Orchestration

def run_pipeline(config: PipelineConfig, out_dir, stop_after=None) -> dict:
    """Execute the stages in order, writing plot CSVs as each stage lands
    and the model archive plus metrics at the end.

    ``stop_after`` (one of "knot-selection", "density", "transform",
    "basis") truncates the run for stage-level debugging.
    """
    if stop_after is not None and stop_after not in _STAGES:
        raise ConfigurationError(f"stop_after must be one of {_STAGES}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = config.manifest
    artifacts: list = []

    with _stage("ingest"):
        samples, labels = ingest_dataset(manifest)
    with _stage("split"):
        train_idx, val_idx, test_idx, class_labels, by_class = \
            _split_classes(config, samples, labels)

    stopping, knot_counts = {}, {}
    knot_sets = {}
    if config.transform != "none":
        with _stage("knot-selection"):
            knot_sets, stopping, knot_counts = \
                _class_knot_candidates(by_class, config)
            _write_stopping_csvs(out, stopping, artifacts)
    if stop_after == "knot-selection":
        return {"out_dir": str(out), "artifacts": artifacts,
                "knot_counts": {str(k): v for k, v in knot_counts.items()}}

    with _stage("density"):
        densities = _class_densities(by_class, knot_sets, config)
        _write_density_csvs(out, densities, artifacts)
    if stop_after == "density":
        return {"out_dir": str(out), "artifacts": artifacts}

    kind = "domain" if config.transform == "domain" else "state"
    with _stage("transform"):
        cdfs = ({lab: cdf_from_density(densities[lab])
                 for lab in class_labels} if kind == "domain" else None)
        transformed = {lab: [_transform_sample(s, lab, densities, cdfs, kind)
                             for s in by_class[lab]]
                       for lab in class_labels}
        _write_transform_csvs(out, transformed, config.plot_samples,
                              artifacts)
    if stop_after == "transform":
        return {"out_dir": str(out), "artifacts": artifacts}

    with _stage("basis"):
        basis = _shared_basis(transformed, config)
        _write_basis_csvs(out, basis, artifacts)
    if stop_after == "basis":
        return {"out_dir": str(out), "artifacts": artifacts}

    with _stage("fpca"):
        class_models = tuple(fit_class_fpca(transformed[lab], basis,
                                            label=lab)
                             for lab in class_labels)
        classifier = ClassifierModel(
            class_models, tuple(densities[lab] for lab in class_labels),
            basis, kind,
            cdfs=None if cdfs is None
            else tuple(cdfs[lab] for lab in class_labels))

    with _stage("component-selection"):
        validation = [(samples[i], int(labels[i])) for i in val_idx]
        selected = {}
        for lab in class_labels:
            index = classifier.class_index(lab)
            chosen = select_components(classifier.classes[index], validation,
                                       config.candidates, classifier)
            classifier = classifier.with_class_components(lab, chosen)
            selected[lab] = chosen

    with _stage("evaluate"):
        truth = [int(labels[i]) for i in test_idx]
        results = [classify(samples[i], classifier) for i in test_idx]
        metrics = evaluate(results, truth)
        _write_approx_csvs(out, classifier, samples, labels, test_idx,
                           densities, cdfs, config.plot_samples, artifacts)

    with _stage("write"):
        digest = config_hash(config.to_dict())
        diagnostics = {
            "stopping_curves": {str(k): v for k, v in stopping.items()},
            "knot_counts": {str(k): v for k, v in knot_counts.items()},
            "selected_components": {str(k): int(v)
                                    for k, v in selected.items()},
        }
        provenance = {
            "config_hash": digest,
            "seed": config.seed,
            "transform": config.transform,
            "data_format": manifest.data_format,
            "gradient": manifest.gradient,
            "hilbert": manifest.hilbert,
            "column_major": manifest.column_major,
        }
        save_model(ModelArchive(classifier, diagnostics, provenance),
                   out / "model.json")
        artifacts.append("model.json")
        payload = {
            "accuracy": float(metrics["accuracy"]),
            "labels": [int(lab) for lab in metrics["labels"]],
            "confusion": np.asarray(metrics["confusion"]).astype(int).tolist(),
            "selected_components": {str(k): int(v)
                                    for k, v in selected.items()},
            "retained": {str(lab): int(cls.retained) for lab, cls in
                         zip(classifier.labels, classifier.classes)},
            "counts": {"train": int(train_idx.size),
                       "validation": int(val_idx.size),
                       "test": int(test_idx.size)},
            "transform": config.transform,
            "config_hash": digest,
            "seed": config.seed,
        }
        (out / "metrics.json").write_text(canonical_json(payload) + "\n")
        artifacts.append("metrics.json")

    report = dict(payload)
    report["out_dir"] = str(out)
    report["artifacts"] = artifacts
    return report


def classify_archive(archive: ModelArchive, data_path, labels_path=None,
                     out_dir=None) -> dict:
    """Classify curves or images with a saved model, reproducing the
    preprocessing recorded in the archive's provenance."""
    classifier = archive.classifier
    truth = None
    if str(data_path).endswith(".csv"):
        samples = load_csv_curves(data_path)
        if labels_path is not None:
            truth = load_idx_labels(labels_path)
    else:
        if labels_path is None:
            raise ConfigurationError("IDX image data needs a label file")
        images, truth = load_idx(data_path, labels_path)
        prov = archive.provenance
        samples = preprocess_images(images, prov.get("gradient", False),
                                    prov.get("hilbert", False),
                                    prov.get("column_major", False))
    results = [classify(s, classifier) for s in samples]
    report = {
        "labels": [int(lab) for lab in classifier.labels],
        "predicted": [int(r.label) for r in results],
        "weights": [r.weights.tolist() for r in results],
    }
    if truth is not None:
        if len(truth) != len(results):
            raise DataFormatError(f"{len(results)} samples but "
                                  f"{len(truth)} labels")
        metrics = evaluate(results, truth)
        report["accuracy"] = float(metrics["accuracy"])
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "predictions.json").write_text(canonical_json(report) + "\n")
        lines = ["sample,predicted," + ",".join(
            f"weight_{lab}" for lab in classifier.labels)]
        for i, r in enumerate(results):
            cells = [str(i), str(int(r.label))]
            cells += [format(w, ".17g") for w in r.weights]
            lines.append(",".join(cells))
        (out / "predictions.csv").write_text("\n".join(lines) + "\n")
        report["artifacts"] = ["predictions.json", "predictions.csv"]
        report["out_dir"] = str(out)
    return report


def evaluate_archive(config: PipelineConfig, archive: ModelArchive,
                     out_dir=None) -> dict:
    """Score a saved model on the test subset of the config's dataset."""
    with _stage("ingest"):
        samples, labels = ingest_dataset(config.manifest)
    with _stage("split"):
        _, _, test_idx = config.manifest.split_indices(len(samples))
        if test_idx.size == 0:
            raise ConfigurationError("the test subset is empty")
    with _stage("evaluate"):
        truth = [int(labels[i]) for i in test_idx]
        results = [classify(samples[i], archive.classifier)
                   for i in test_idx]
        metrics = evaluate(results, truth)
    report = {
        "accuracy": float(metrics["accuracy"]),
        "labels": [int(lab) for lab in metrics["labels"]],
        "confusion": np.asarray(metrics["confusion"]).astype(int).tolist(),
        "test_count": int(test_idx.size),
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics_eval.json").write_text(canonical_json(report) + "\n")
        report["out_dir"] = str(out)
    return report


# --------------------------------------------------------------------------
# Static renderings

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


def render_svg_curves(csv_path, svg_path, width=640, height=400) -> None:
    """Plain polyline SVG of a plot-data CSV (deterministic text output)."""
    curves = load_csv_curves(csv_path)
    pad = 40.0
    xs = curves[0].abscissae[0]
    lo_x, hi_x = float(xs[0]), float(xs[-1])
    lo_y = min(float(c.values.min()) for c in curves)
    hi_y = max(float(c.values.max()) for c in curves)
    span_x = max(hi_x - lo_x, 1e-12)
    span_y = max(hi_y - lo_y, 1e-12)

    def sx(v):
        return pad + (v - lo_x) / span_x * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - lo_y) / span_y * (height - 2 * pad)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" '
             f'height="{height - 2 * pad}" fill="none" stroke="#888"/>']
    for j, curve in enumerate(curves):
        color = _PALETTE[j % len(_PALETTE)]
        points = " ".join(
            f"{format(sx(float(x)), '.2f')},{format(sy(float(y)), '.2f')}"
            for x, y in zip(curve.abscissae[0], curve.values))
        parts.append(f'<polyline fill="none" stroke="{color}" '
                     f'stroke-width="1.5" points="{points}"/>')
    parts.append("</svg>")
    Path(svg_path).write_text("\n".join(parts) + "\n")
