"""Image-quality metrics and event-interval diagnostics.

``mse`` and ``ssim`` compare grayscale images on the unit intensity
range.  SSIM is evaluated over 8x8 *non-overlapping* windows, which
keeps it deterministic and dependency-free; scores are therefore not
interchangeable with implementations built on the 11x11 Gaussian
sliding window.

``loe`` (lightness-order error) measures how well relative brightness
order is preserved between two images.  Positions are drawn from a
nearest-neighbour downsample capped at ``sample_grid`` per axis, and
the score is the number of strictly inverted ordered pairs divided by
the number of sampled positions.  Ties on either side never count as
inversions, so any strictly increasing remap of an image leaves its
order — and the score — untouched.  Magnitudes scale with the sample
count: compare scores only at a fixed geometry and grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import EventStream, SensorGeometry, validate

__all__ = [
    "GrayImage",
    "mse",
    "ssim",
    "loe",
    "interval_histogram",
]

_SSIM_C1 = 0.01 ** 2
_SSIM_C2 = 0.03 ** 2


@dataclass(frozen=True)
class GrayImage:
    """A grayscale image with intensities in [0, 1]."""

    geometry: SensorGeometry
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        expected = (self.geometry.height, self.geometry.width)
        if values.shape != expected:
            raise ValueError(
                f"image shape {values.shape} does not match geometry {expected}"
            )
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("image intensities must lie in [0, 1]")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_array(cls, values: np.ndarray) -> "GrayImage":
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("expected a 2-D intensity array")
        h, w = values.shape
        return cls(SensorGeometry(w, h), values)


def _check_pair(a: GrayImage, b: GrayImage) -> None:
    if a.geometry != b.geometry:
        raise ValueError(
            f"geometry mismatch: {a.geometry} vs {b.geometry}"
        )


def mse(a: GrayImage, b: GrayImage) -> float:
    """Mean squared error between two images of the same geometry."""
    _check_pair(a, b)
    d = a.values - b.values
    return float(np.mean(d * d))


def ssim(a: GrayImage, b: GrayImage, *, window: int = 8) -> float:
    """Structural similarity averaged over non-overlapping windows.

    Both images are cropped to whole windows; each window contributes
    the standard luminance/contrast/structure product with stabilizers
    C1 = 0.01^2 and C2 = 0.03^2 for the [0, 1] range.
    """
    _check_pair(a, b)
    if window < 1:
        raise ValueError("window must be at least 1 pixel")
    h, w = a.values.shape
    if h < window or w < window:
        raise ValueError(
            f"image {w}x{h} is smaller than the {window}x{window} window"
        )
    ny, nx = h // window, w // window

    def tiles(img: np.ndarray) -> np.ndarray:
        v = img[: ny * window, : nx * window]
        v = v.reshape(ny, window, nx, window).transpose(0, 2, 1, 3)
        return v.reshape(ny * nx, window * window)

    ta, tb = tiles(a.values), tiles(b.values)
    mu_a = ta.mean(axis=1)
    mu_b = tb.mean(axis=1)
    da = ta - mu_a[:, None]
    db = tb - mu_b[:, None]
    var_a = np.mean(da * da, axis=1)
    var_b = np.mean(db * db, axis=1)
    cov = np.mean(da * db, axis=1)
    score = ((2.0 * mu_a * mu_b + _SSIM_C1) * (2.0 * cov + _SSIM_C2)) / (
        (mu_a * mu_a + mu_b * mu_b + _SSIM_C1) * (var_a + var_b + _SSIM_C2)
    )
    return float(score.mean())


def _sample_indices(length: int, cap: int) -> np.ndarray:
    take = min(length, cap)
    return np.floor((np.arange(take) + 0.5) * (length / take)).astype(np.intp)


def loe(reference: GrayImage, test: GrayImage, sample_grid: int = 100) -> float:
    """Lightness-order error: strict pairwise inversions per position.

    Returns 0 exactly when every sampled ordered pair keeps the same
    strict order in both images.
    """
    _check_pair(reference, test)
    if sample_grid < 2:
        raise ValueError("sample_grid must be at least 2")
    ys = _sample_indices(reference.geometry.height, sample_grid)
    xs = _sample_indices(reference.geometry.width, sample_grid)
    ra = reference.values[np.ix_(ys, xs)].ravel()
    rb = test.values[np.ix_(ys, xs)].ravel()
    inversions = 0
    chunk = max(1, 4_000_000 // max(ra.size, 1))
    for start in range(0, ra.size, chunk):
        da = ra[start : start + chunk, None] - ra[None, :]
        db = rb[start : start + chunk, None] - rb[None, :]
        inversions += int(np.count_nonzero(da * db < 0.0))
    return inversions / ra.size


def interval_histogram(stream: EventStream, bucket_edges) -> np.ndarray:
    """Histogram of per-pixel consecutive-event intervals.

    ``bucket_edges`` must be strictly increasing; ``counts[i]`` covers
    intervals in ``[edges[i], edges[i+1])``, with the last bucket
    open-ended.  Intervals below the first edge are dropped.
    """
    edges = np.asarray(bucket_edges, dtype=np.float64)
    if edges.ndim != 1 or edges.size == 0:
        raise ValueError("bucket_edges must be a non-empty 1-D sequence")
    if np.any(np.diff(edges) <= 0):
        raise ValueError("bucket_edges must be strictly increasing")
    problem = validate(stream)
    if problem is not None:
        raise ValueError(f"invalid stream: {problem.reason} at {problem.index}")

    counts = np.zeros(edges.size, dtype=np.int64)
    if len(stream) < 2:
        return counts
    pix = stream.pixel_ids()
    order = np.lexsort((stream.t, pix))
    t_s = stream.t[order].astype(np.int64)
    pix_s = pix[order]
    same = pix_s[1:] == pix_s[:-1]
    intervals = (t_s[1:] - t_s[:-1])[same]
    if intervals.size:
        idx = np.searchsorted(edges, intervals, side="right") - 1
        idx = idx[idx >= 0]
        counts += np.bincount(idx, minlength=edges.size)
    return counts
