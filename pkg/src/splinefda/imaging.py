"""2D-to-1D image representations: Hilbert-curve linearization and the
central-difference gradient magnitude.

The Hilbert walk keeps consecutive sequence entries grid-adjacent, so local
image structure stays local in the 1D sample; column stacking is kept as the
comparison baseline.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .transforms import FunctionalSample

__all__ = [
    "ImageGrid",
    "HilbertMap",
    "hilbert_map",
    "image_to_sequence",
    "sequence_to_image",
    "column_major_sequence",
    "gradient_image",
    "pad_to_square",
]

MAX_ORDER = 12


@dataclass(frozen=True)
class ImageGrid:
    """Real-valued pixel lattice; pixels[i, j] is row i, column j."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=float)
        if pixels.ndim != 2 or pixels.size == 0:
            raise InputError("pixels must form a non-empty 2D array")
        object.__setattr__(self, "pixels", pixels)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def _rotate(s, x, y, rx, ry):
    swap = ry == 0
    flip = swap & (rx == 1)
    xf = np.where(flip, s - 1 - x, x)
    yf = np.where(flip, s - 1 - y, y)
    return np.where(swap, yf, xf), np.where(swap, xf, yf)


def _index_to_cell(order: int, t: np.ndarray):
    side = 1 << order
    t = np.asarray(t, dtype=np.int64).copy()
    i = np.zeros_like(t)
    j = np.zeros_like(t)
    s = 1
    while s < side:
        rx = 1 & (t // 2)
        ry = 1 & (t ^ rx)
        i, j = _rotate(s, i, j, rx, ry)
        i = i + s * rx
        j = j + s * ry
        t = t // 4
        s *= 2
    return i, j


def _cell_to_index(order: int, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    side = 1 << order
    i = np.asarray(i, dtype=np.int64).copy()
    j = np.asarray(j, dtype=np.int64).copy()
    d = np.zeros_like(i)
    s = side // 2
    while s > 0:
        rx = ((i & s) > 0).astype(np.int64)
        ry = ((j & s) > 0).astype(np.int64)
        d += s * s * ((3 * rx) ^ ry)
        i, j = _rotate(s, i, j, rx, ry)
        s //= 2
    return d


@dataclass(frozen=True)
class HilbertMap:
    """Bijection between curve indices and cells of a 2^order square grid.

    The order-1 walk starts at (0,0) and steps along the second axis first:
    (0,0), (0,1), (1,1), (1,0).
    """

    order: int

    @property
    def size(self) -> int:
        return 1 << self.order

    def forward(self, i, j) -> np.ndarray:
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        if np.any(i < 0) or np.any(j < 0) or np.any(i >= self.size) \
                or np.any(j >= self.size):
            raise InputError("cell outside the grid")
        return _cell_to_index(self.order, i, j)

    def backward(self, t):
        t = np.asarray(t, dtype=np.int64)
        if np.any(t < 0) or np.any(t >= self.size ** 2):
            raise InputError("index outside the curve")
        return _index_to_cell(self.order, t)


def hilbert_map(order: int) -> HilbertMap:
    if not 1 <= order <= MAX_ORDER:
        raise InputError(f"order must be in [1, {MAX_ORDER}]")
    return HilbertMap(int(order))


def pad_to_square(img: ImageGrid, side: int, fill: float = 0.0) -> ImageGrid:
    """Center the image on a side x side canvas; excess goes bottom/right."""
    if img.height > side or img.width > side:
        raise InputError(f"image larger than {side} x {side}")
    top = (side - img.height) // 2
    left = (side - img.width) // 2
    pixels = np.full((side, side), fill)
    pixels[top:top + img.height, left:left + img.width] = img.pixels
    return ImageGrid(pixels)


def image_to_sequence(img: ImageGrid, hmap: HilbertMap) -> FunctionalSample:
    """Pixels read along the curve, on abscissae t/(4^order - 1) in [0,1]."""
    if img.height != hmap.size or img.width != hmap.size:
        img = pad_to_square(img, hmap.size)
    n_cells = hmap.size ** 2
    i, j = hmap.backward(np.arange(n_cells))
    return FunctionalSample((np.linspace(0.0, 1.0, n_cells),),
                            img.pixels[i, j])


def sequence_to_image(seq: FunctionalSample, hmap: HilbertMap) -> ImageGrid:
    """Inverse placement of sequence values along the curve."""
    values = np.asarray(seq.values, dtype=float).ravel()
    n_cells = hmap.size ** 2
    if values.size != n_cells:
        raise InputError(f"sequence length {values.size}, curve has {n_cells} cells")
    i, j = hmap.backward(np.arange(n_cells))
    pixels = np.empty((hmap.size, hmap.size))
    pixels[i, j] = values
    return ImageGrid(pixels)


def column_major_sequence(img: ImageGrid) -> FunctionalSample:
    """Column-stacking baseline vectorizer."""
    values = img.pixels.ravel(order="F")
    return FunctionalSample((np.linspace(0.0, 1.0, values.size),), values)


def gradient_image(img: ImageGrid) -> ImageGrid:
    """Central-difference gradient magnitude with replicate borders."""
    if img.height < 3 or img.width < 3:
        raise InputError("gradient needs at least a 3 x 3 image")
    padded = np.pad(img.pixels, 1, mode="edge")
    di = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2.0
    dj = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2.0
    return ImageGrid(np.sqrt(di ** 2 + dj ** 2))
