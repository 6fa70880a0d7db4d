"""Shared dataset builders for pipeline and acceptance tests."""
from pathlib import Path

import numpy as np

from splinefda import (
    save_csv_curves,
    synthetic_kl_samples,
    write_idx_images,
    write_idx_labels,
)

CURVE_GRID = np.linspace(0.0, 1.0, 301)
CURVE_MODES = np.stack([np.sqrt(2.0) * np.sin(k * np.pi * CURVE_GRID)
                        for k in (1, 2, 3)])
CURVE_SPECTRUM = np.array([0.08, 0.04, 0.02])


def write_curve_dataset(root: Path, n_per_class: int, seed: int = 2026):
    """Two-class 1D dataset: 3 KL modes per class around separated means.

    Returns (curves_path, labels_path); class labels alternate 0, 1.
    """
    rng = np.random.default_rng(seed)
    class0 = synthetic_kl_samples((CURVE_GRID,),
                                  1.5 + np.sin(2.0 * np.pi * CURVE_GRID),
                                  CURVE_MODES, CURVE_SPECTRUM, n_per_class,
                                  rng)
    class1 = synthetic_kl_samples((CURVE_GRID,),
                                  1.5 + np.cos(2.0 * np.pi * CURVE_GRID),
                                  CURVE_MODES, CURVE_SPECTRUM, n_per_class,
                                  rng)
    curves, labels = [], []
    for a, b in zip(class0, class1):
        curves.extend([a, b])
        labels.extend([0, 1])
    curves_path = root / "curves.csv"
    labels_path = root / "labels.idx"
    save_csv_curves(curves, curves_path)
    write_idx_labels(labels, labels_path)
    return curves_path, labels_path


def _trouser(rng):
    img = np.zeros((28, 28))
    shift = rng.integers(-2, 3)
    width = rng.integers(3, 5)
    gap = rng.integers(3, 6)
    left = 14 + shift - gap // 2 - width
    top = rng.integers(2, 5)
    img[top:26, left:left + width] = 0.85
    img[top:26, left + width + gap:left + 2 * width + gap] = 0.85
    img[top:top + 4, left:left + 2 * width + gap] = 0.9
    return img


def _pullover(rng):
    img = np.zeros((28, 28))
    shift = rng.integers(-2, 3)
    half = rng.integers(6, 9)
    img[7:25, 14 + shift - half:14 + shift + half] = 0.8
    img[8:14, 3:25] = np.maximum(img[8:14, 3:25], 0.75)
    img[6:8, 14 + shift - 3:14 + shift + 3] = 0.0
    return img


def write_wardrobe_dataset(root: Path, n_per_class: int, seed: int = 7):
    """Two-class 28x28 grayscale IDX pair: jittered trouser-like versus
    pullover-like shapes under pixel noise. A seeded stand-in with the
    byte layout of the public clothing benchmark, usable offline.
    """
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for _ in range(n_per_class):
        for lab, maker in ((0, _trouser), (1, _pullover)):
            img = maker(rng) + rng.normal(0.0, 0.05, (28, 28))
            images.append(np.clip(img, 0.0, 1.0))
            labels.append(lab)
    images_path = root / "images.idx"
    labels_path = root / "image-labels.idx"
    write_idx_images(images, images_path)
    write_idx_labels(labels, labels_path)
    return images_path, labels_path


def curve_config(curves_path, labels_path, **overrides) -> dict:
    config = {
        "manifest": {
            "sources": {"csv-curves": str(curves_path),
                        "idx-labels": str(labels_path)},
            "split": [0.5, 0.25, 0.25],
            "seed": 11,
        },
        "transform": "state",
        "degree": 2,
        "n_interior": 16,
        "candidates": [1, 2, 3, 4],
        "ddk_max_knots": 12,
        "ddk_sample_cap": 10,
        "ddk_noise_trials": 5,
        "density_grid": 201,
        "plot_samples": 2,
        "seed": 11,
    }
    manifest_keys = {"sources", "split", "seed_manifest", "gradient",
                     "hilbert", "column_major"}
    for key, value in overrides.items():
        if key in manifest_keys:
            config["manifest"][key.removesuffix("_manifest")] = value
        else:
            config[key] = value
    return config


def wardrobe_config(images_path, labels_path, **overrides) -> dict:
    config = {
        "manifest": {
            "sources": {"idx-images": str(images_path),
                        "idx-labels": str(labels_path)},
            "split": [0.5, 0.25, 0.25],
            "seed": 3,
            "gradient": True,
            "hilbert": True,
        },
        "transform": "state",
        "degree": 2,
        "n_interior": 12,
        "candidates": [1, 2, 3],
        "ddk_max_knots": 15,
        "ddk_sample_cap": 8,
        "ddk_noise_trials": 3,
        "density_grid": 201,
        "plot_samples": 0,
        "seed": 3,
    }
    for key, value in overrides.items():
        if key in ("gradient", "hilbert", "column_major", "split"):
            config["manifest"][key] = value
        else:
            config[key] = value
    return config
