"""Dataset ingestion, curve CSV exchange, and canonical model persistence.

The model archive is JSON with sorted keys and 17-significant-digit floats,
so identical models serialize to identical bytes and every double survives
a save/load round trip exactly.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .density import CdfModel, DensityModel
from .errors import ConfigurationError, DataFormatError, InputError
from .fpca import ClassifierModel, FpcaClassModel
from .imaging import ImageGrid
from .splines import BasisSpec, KnotVector, OrthonormalBasis, gram_matrix
from .tensor import TensorBasisSpec
from .transforms import FunctionalSample

__all__ = [
    "DatasetManifest",
    "ModelArchive",
    "FORMAT_VERSION",
    "SOURCE_FORMATS",
    "load_idx",
    "load_idx_labels",
    "write_idx_images",
    "write_idx_labels",
    "load_csv_curves",
    "save_csv_curves",
    "save_model",
    "load_model",
    "canonical_json",
    "config_hash",
]

FORMAT_VERSION = 1
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
SOURCE_FORMATS = ("idx-images", "idx-labels", "csv-curves")
_SPLIT_TOL = 1e-9


@dataclass(frozen=True)
class DatasetManifest:
    """Where a labeled dataset lives and how to split and preprocess it.

    ``sources`` maps source formats to paths: image data pairs "idx-images"
    with "idx-labels", curve data pairs "csv-curves" with "idx-labels" (the
    label channel is format-agnostic bytes). A fixed seed fixes the split.
    """

    sources: dict
    split: tuple
    seed: int
    gradient: bool = False
    hilbert: bool = False
    column_major: bool = False

    def __post_init__(self):
        sources = dict(self.sources)
        unknown = set(sources) - set(SOURCE_FORMATS)
        if unknown:
            raise ConfigurationError(f"unknown source formats {sorted(unknown)}")
        if "idx-labels" not in sources:
            raise ConfigurationError("a labeled dataset needs an idx-labels source")
        data_keys = [k for k in ("idx-images", "csv-curves") if k in sources]
        if len(data_keys) != 1:
            raise ConfigurationError(
                "exactly one of idx-images or csv-curves must be given")
        sources = {k: str(v) for k, v in sources.items()}
        split = tuple(float(f) for f in self.split)
        if len(split) != 3:
            raise ConfigurationError("split needs train/validation/test fractions")
        if any(f <= 0 for f in split):
            raise ConfigurationError("split fractions must all be positive")
        if abs(sum(split) - 1.0) > _SPLIT_TOL:
            raise ConfigurationError(f"split fractions sum to {sum(split)}, not 1")
        if isinstance(self.seed, bool) or int(self.seed) != self.seed:
            raise ConfigurationError("seed must be an integer")
        if data_keys[0] == "csv-curves" and (self.gradient or self.hilbert
                                             or self.column_major):
            raise ConfigurationError("image preprocessing flags need image data")
        if self.hilbert and self.column_major:
            raise ConfigurationError("hilbert and column-major are exclusive")
        object.__setattr__(self, "sources", sources)
        object.__setattr__(self, "split", split)
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "gradient", bool(self.gradient))
        object.__setattr__(self, "hilbert", bool(self.hilbert))
        object.__setattr__(self, "column_major", bool(self.column_major))

    @property
    def data_format(self) -> str:
        return "idx-images" if "idx-images" in self.sources else "csv-curves"

    def split_indices(self, n: int):
        """Disjoint train/validation/test index arrays partitioning range(n)."""
        if n < 0:
            raise InputError("dataset size cannot be negative")
        perm = np.random.default_rng(self.seed).permutation(n)
        n_train = int(round(self.split[0] * n))
        n_val = min(int(round(self.split[1] * n)), n - n_train)
        cut = n_train + n_val
        return perm[:n_train], perm[n_train:cut], perm[cut:]

    def to_dict(self) -> dict:
        return {"sources": dict(self.sources), "split": list(self.split),
                "seed": self.seed, "gradient": self.gradient,
                "hilbert": self.hilbert, "column_major": self.column_major}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        if not isinstance(d, dict):
            raise ConfigurationError("manifest must be a mapping")
        known = {"sources", "split", "seed", "gradient", "hilbert", "column_major"}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown manifest keys {sorted(unknown)}")
        for key in ("sources", "split", "seed"):
            if key not in d:
                raise ConfigurationError(f"manifest is missing {key!r}")
        return cls(sources=d["sources"], split=tuple(d["split"]), seed=d["seed"],
                   gradient=d.get("gradient", False),
                   hilbert=d.get("hilbert", False),
                   column_major=d.get("column_major", False))


# --------------------------------------------------------------------------
# IDX files (big-endian magic + dimensions + byte payload)

def _read_file(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc


def _idx_header(buf: bytes, path, magic: int, n_dims: int, kind: str):
    if len(buf) < 4:
        raise DataFormatError(f"{path}: truncated magic number at byte {len(buf)}")
    found = int.from_bytes(buf[:4], "big")
    if found != magic:
        raise DataFormatError(
            f"{path}: magic {found:#010x} at byte 0, expected {magic:#010x} "
            f"for {kind}")
    end = 4 + 4 * n_dims
    if len(buf) < end:
        raise DataFormatError(
            f"{path}: truncated dimension header at byte {len(buf)}")
    dims = [int.from_bytes(buf[4 + 4 * i:8 + 4 * i], "big") for i in range(n_dims)]
    return dims, end


def _idx_payload(buf: bytes, path, offset: int, count: int) -> bytes:
    if len(buf) < offset + count:
        raise DataFormatError(
            f"{path}: truncated payload at byte {len(buf)}, "
            f"expected {offset + count} bytes")
    if len(buf) > offset + count:
        raise DataFormatError(
            f"{path}: trailing data at byte {offset + count}")
    return buf[offset:offset + count]


def load_idx_labels(path):
    """Read an IDX label file into a list of small ints."""
    buf = _read_file(path)
    (n,), off = _idx_header(buf, path, IDX_LABELS_MAGIC, 1, "labels")
    return [int(b) for b in _idx_payload(buf, path, off, n)]


def load_idx(images_path, labels_path):
    """Read an IDX image/label file pair into unit-scaled grids and labels."""
    img_buf = _read_file(images_path)
    (n_img, rows, cols), off = _idx_header(img_buf, images_path,
                                           IDX_IMAGES_MAGIC, 3, "images")
    if n_img > 0 and (rows == 0 or cols == 0):
        raise DataFormatError(
            f"{images_path}: zero image dimension {rows}x{cols} in header")
    payload = _idx_payload(img_buf, images_path, off, n_img * rows * cols)
    pixels = np.frombuffer(payload, dtype=np.uint8).astype(float) / 255.0
    pixels = pixels.reshape(n_img, rows, cols)

    labels = load_idx_labels(labels_path)
    if n_img != len(labels):
        raise DataFormatError(
            f"{images_path} holds {n_img} images but {labels_path} holds "
            f"{len(labels)} labels")
    return [ImageGrid(p) for p in pixels], labels


def _as_pixel_array(image) -> np.ndarray:
    arr = image.pixels if isinstance(image, ImageGrid) else np.asarray(image,
                                                                       dtype=float)
    if arr.ndim != 2:
        raise InputError("images must be 2D pixel arrays")
    return arr


def write_idx_images(images, path) -> None:
    """Write unit-scaled images as IDX bytes (inverse of load_idx scaling)."""
    arrays = [_as_pixel_array(im) for im in images]
    if not arrays:
        raise InputError("need at least one image")
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise InputError("all images must share one shape")
    stack = np.stack(arrays)
    if stack.min() < 0.0 or stack.max() > 1.0:
        raise InputError("pixel values must lie in [0, 1]")
    header = (IDX_IMAGES_MAGIC.to_bytes(4, "big")
              + len(arrays).to_bytes(4, "big")
              + shape[0].to_bytes(4, "big") + shape[1].to_bytes(4, "big"))
    Path(path).write_bytes(header + np.rint(stack * 255.0).astype(np.uint8)
                           .tobytes())


def write_idx_labels(labels, path) -> None:
    labels = [int(lab) for lab in labels]
    if not labels:
        raise InputError("need at least one label")
    if any(not 0 <= lab <= 255 for lab in labels):
        raise InputError("labels must fit in one byte")
    header = IDX_LABELS_MAGIC.to_bytes(4, "big") + len(labels).to_bytes(4, "big")
    Path(path).write_bytes(header + bytes(labels))


# --------------------------------------------------------------------------
# CSV curves: header x,y_1,...,y_m then one row per abscissa

def load_csv_curves(path) -> list:
    """Read curves sharing one abscissa column from a headed CSV file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    header = rows[0]
    if len(header) < 2:
        raise DataFormatError(
            f"{path}: line 1: need an abscissa column and at least one curve")
    try:
        float(header[0])
    except ValueError:
        pass
    else:
        raise DataFormatError(f"{path}: line 1: missing header row")
    width = len(header)
    body = []
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise DataFormatError(
                f"{path}: line {line_no}: expected {width} columns, "
                f"got {len(row)}")
        try:
            body.append([float(cell) for cell in row])
        except ValueError:
            bad = next(c for c in row if not _is_number(c))
            raise DataFormatError(
                f"{path}: line {line_no}: non-numeric cell {bad!r}") from None
    if len(body) < 2:
        raise DataFormatError(f"{path}: need at least 2 data rows")
    table = np.asarray(body)
    try:
        return [FunctionalSample((table[:, 0],), table[:, j])
                for j in range(1, width)]
    except InputError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def save_csv_curves(samples, path) -> None:
    """Emit 1D curves sharing one mesh in the load_csv_curves format."""
    samples = list(samples)
    if not samples:
        raise InputError("need at least one curve")
    if any(s.d != 1 for s in samples):
        raise InputError("only 1D curves can be written to curve CSV")
    xs = samples[0].abscissae[0]
    if any(not np.array_equal(s.abscissae[0], xs) for s in samples[1:]):
        raise InputError("curves must share one abscissa mesh")
    lines = ["x," + ",".join(f"y_{j + 1}" for j in range(len(samples)))]
    for i, x in enumerate(xs):
        cells = [_format_float(x)]
        cells += [_format_float(s.values[i]) for s in samples]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# Canonical JSON

def _format_float(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise DataFormatError("non-finite number cannot be serialized")
    s = format(x, ".17g")
    if not any(c in s for c in ".eE"):
        s += ".0"
    return s


def _emit(obj, out: list) -> None:
    if obj is None:
        out.append("null")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_format_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, np.ndarray):
        _emit(obj.tolist(), out)
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _emit(item, out)
        out.append("]")
    elif isinstance(obj, dict):
        if any(not isinstance(k, str) for k in obj):
            raise DataFormatError("mapping keys must be strings")
        out.append("{")
        for i, key in enumerate(sorted(obj)):
            if i:
                out.append(",")
            out.append(json.dumps(key))
            out.append(":")
            _emit(obj[key], out)
        out.append("}")
    else:
        raise DataFormatError(f"cannot serialize {type(obj).__name__}")


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, no whitespace, exact float round trip."""
    out = []
    _emit(obj, out)
    return "".join(out)


def config_hash(config) -> str:
    """Stable hex digest of any canonical-JSON-serializable configuration."""
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


# --------------------------------------------------------------------------
# Model archive

@dataclass(frozen=True)
class ModelArchive:
    """A trained classifier plus fit diagnostics and provenance."""

    classifier: ClassifierModel
    diagnostics: dict
    provenance: dict
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.format_version != FORMAT_VERSION:
            raise DataFormatError(
                f"unsupported format version {self.format_version!r}, "
                f"this build writes {FORMAT_VERSION}")
        if not isinstance(self.classifier, ClassifierModel):
            raise InputError("archive needs a ClassifierModel")
        object.__setattr__(self, "diagnostics", dict(self.diagnostics))
        object.__setattr__(self, "provenance", dict(self.provenance))


def _axis_payload(basis: OrthonormalBasis) -> dict:
    return {"degree": int(basis.spec.degree),
            "knots": basis.spec.knots.knots,
            "change_of_basis": basis.change_of_basis}


def _axis_from(d: dict) -> OrthonormalBasis:
    spec = BasisSpec(KnotVector(np.asarray(d["knots"], dtype=float)),
                     int(d["degree"]))
    matrix = np.asarray(d["change_of_basis"], dtype=float)
    return OrthonormalBasis(spec, matrix, gram_matrix(spec))


def _density_payload(g: DensityModel) -> dict:
    return {"domain": [list(box) for box in g.domain],
            "grids": [grid for grid in g.grids], "values": g.values,
            "bandwidth": list(g.bandwidth), "floor": g.floor}


def _density_from(d: dict) -> DensityModel:
    return DensityModel(tuple(tuple(box) for box in d["domain"]),
                        tuple(np.asarray(g, dtype=float) for g in d["grids"]),
                        np.asarray(d["values"], dtype=float),
                        tuple(d["bandwidth"]), float(d["floor"]))


def _cdf_payload(c: CdfModel) -> dict:
    return {"domain": [list(box) for box in c.domain],
            "grids": [grid for grid in c.grids], "marginal": c.marginal,
            "conditional": c.conditional}


def _cdf_from(d: dict) -> CdfModel:
    conditional = d["conditional"]
    return CdfModel(tuple(tuple(box) for box in d["domain"]),
                    tuple(np.asarray(g, dtype=float) for g in d["grids"]),
                    np.asarray(d["marginal"], dtype=float),
                    None if conditional is None
                    else np.asarray(conditional, dtype=float))


def _class_payload(m: FpcaClassModel) -> dict:
    return {"label": m.label, "mean": m.mean, "eigenvalues": m.eigenvalues,
            "eigenvectors": m.eigenvectors, "n_components": m.n_components,
            "density_id": m.density_id, "transform_kind": m.transform_kind}


def _class_from(d: dict) -> FpcaClassModel:
    return FpcaClassModel(
        label=int(d["label"]), mean=np.asarray(d["mean"], dtype=float),
        eigenvalues=np.asarray(d["eigenvalues"], dtype=float),
        eigenvectors=np.asarray(d["eigenvectors"],
                                dtype=float).reshape(len(d["mean"]), -1),
        n_components=int(d["n_components"]), density_id=str(d["density_id"]),
        transform_kind=str(d["transform_kind"]))


def _classifier_payload(clf: ClassifierModel) -> dict:
    return {"transform_kind": clf.transform_kind,
            "classes": [_class_payload(c) for c in clf.classes],
            "densities": [_density_payload(g) for g in clf.densities],
            "cdfs": (None if clf.cdfs is None
                     else [_cdf_payload(c) for c in clf.cdfs]),
            "basis": {"axes": [_axis_payload(ax) for ax in clf.basis.axes]}}


def _classifier_from(d: dict) -> ClassifierModel:
    basis = TensorBasisSpec(tuple(_axis_from(a) for a in d["basis"]["axes"]))
    cdfs = d["cdfs"]
    return ClassifierModel(
        classes=tuple(_class_from(c) for c in d["classes"]),
        densities=tuple(_density_from(g) for g in d["densities"]),
        basis=basis, transform_kind=str(d["transform_kind"]),
        cdfs=None if cdfs is None else tuple(_cdf_from(c) for c in cdfs))


def save_model(archive: ModelArchive, path) -> None:
    """Write the archive as canonical JSON; identical archives give
    identical bytes."""
    payload = {"format_version": archive.format_version,
               "classifier": _classifier_payload(archive.classifier),
               "diagnostics": archive.diagnostics,
               "provenance": archive.provenance}
    Path(path).write_text(canonical_json(payload) + "\n")


def load_model(path) -> ModelArchive:
    """Parse a model archive; every stored double is recovered bit-exactly."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except ValueError as exc:
        raise DataFormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise DataFormatError(f"{path}: archive must be a JSON object")
    version = obj.get("format_version")
    if version != FORMAT_VERSION:
        raise DataFormatError(
            f"{path}: unsupported format version {version!r}, "
            f"expected {FORMAT_VERSION}")
    try:
        classifier = _classifier_from(obj["classifier"])
        return ModelArchive(classifier, obj.get("diagnostics", {}),
                            obj.get("provenance", {}))
    except (KeyError, TypeError, ValueError, InputError) as exc:
        raise DataFormatError(f"{path}: malformed model archive: {exc}") from exc
