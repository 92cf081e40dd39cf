"""Candidate regions, distance maps, patch features and patch selection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage as ndi
from skimage.filters import threshold_otsu

from . import kernels
from .errors import InvalidArgumentError

DEFAULT_BINS = 8


@dataclass
class PatchFeature:
    pixel: tuple  # (row, col, slice index)
    vector: np.ndarray
    label: int | None = None


def candidate_region(image):
    """Binary head mask: Otsu threshold, largest component, closing, hole fill."""
    image = np.asarray(image, dtype=np.float64)
    if image.size == 0 or image.max() <= image.min():
        return np.zeros(image.shape, dtype=bool)
    fg = image > threshold_otsu(image)
    lab, n = ndi.label(fg)
    if n == 0:
        return np.zeros(image.shape, dtype=bool)
    sizes = np.bincount(lab.ravel())
    sizes[0] = 0
    mask = lab == int(np.argmax(sizes))
    mask = ndi.binary_closing(mask, structure=np.ones((3, 3), bool), iterations=2)
    return ndi.binary_fill_holes(mask)


def distance_transform(mask):
    """Exact Euclidean distance from each mask pixel to the nearest non-mask pixel.

    Zero outside the mask. When the mask covers the whole frame the pixels just
    outside the image are treated as the exterior.
    """
    mask = np.asarray(mask) != 0
    if not mask.any():
        return np.zeros(mask.shape)
    if mask.all():
        padded = np.pad(mask, 1)
        return np.sqrt(kernels.edt_sq(padded))[1:-1, 1:-1]
    return np.sqrt(kernels.edt_sq(mask))


def normalize_distances(dist_maps):
    """Scale a stack of distance maps by its overall maximum (no-op if all zero)."""
    top = max((float(np.max(d)) for d in dist_maps), default=0.0)
    if top <= 0:
        return [np.asarray(d, dtype=np.float64) for d in dist_maps]
    return [np.asarray(d, dtype=np.float64) / top for d in dist_maps]


def _check_width(w):
    if w < 1 or w % 2 == 0:
        raise InvalidArgumentError(f"patch width must be odd and positive, got {w}")


def extract_feature(image, dist, z, w):
    """Intensity patch followed by distance patch around pixel ``z=(row, col)``.

    Both halves are row-major; pixels outside the image contribute 0.
    """
    _check_width(w)
    coords = np.asarray([z], dtype=np.intp)
    return extract_features(image, dist, coords, w)[:, 0]


def extract_features(image, dist, coords, w):
    """Feature matrix ``(2w^2, n)`` for pixel coordinates ``coords`` of shape (n, 2).

    Pass ``dist=None`` for intensity-only features ``(w^2, n)``.
    """
    _check_width(w)
    coords = np.asarray(coords, dtype=np.intp).reshape(-1, 2)
    h = w // 2
    parts = [np.asarray(image, dtype=np.float64)]
    if dist is not None:
        parts.append(np.asarray(dist, dtype=np.float64))
    blocks = []
    for arr in parts:
        win = sliding_window_view(np.pad(arr, h), (w, w))
        blocks.append(win[coords[:, 0], coords[:, 1]].reshape(len(coords), w * w))
    return np.ascontiguousarray(np.concatenate(blocks, axis=1).T)


def partition_index(t, T, P):
    """Map slice ``t`` of a ``T``-slice stack to one of ``P`` contiguous groups."""
    if P < 1 or T < 1:
        raise InvalidArgumentError("partition_index: T and P must be positive")
    if P > T:
        raise InvalidArgumentError(f"partition_index: P={P} exceeds stack length T={T}")
    if not 0 <= t < T:
        raise InvalidArgumentError(f"partition_index: slice {t} outside [0, {T})")
    return (t * P) // T


def _allocate(avail, q):
    # round-robin over bins so each gets floor/ceil(q/B) when it can
    alloc = np.zeros_like(avail)
    remaining = int(min(q, avail.sum()))
    while remaining > 0:
        open_bins = np.flatnonzero(alloc < avail)
        take = open_bins[:remaining]
        alloc[take] += 1
        remaining -= len(take)
    return alloc


def select_pixels(labels, dist, cls, q, bins=DEFAULT_BINS, seed=0):
    """Pixels of class ``cls`` sampled uniformly over its distance range.

    The class's distance span [min, max] is cut into ``bins`` equal-width bins
    and the quota is spread evenly across them, overflow going to bins that
    still have pixels. Returns an (n, 2) array of (row, col).
    """
    if q < 0:
        raise InvalidArgumentError("select_pixels: quota must be >= 0")
    if bins < 1:
        raise InvalidArgumentError("select_pixels: need at least one bin")
    coords = np.argwhere(np.asarray(labels) == cls)
    if q == 0 or len(coords) == 0:
        return np.zeros((0, 2), dtype=np.intp)
    vals = np.asarray(dist)[coords[:, 0], coords[:, 1]]
    lo, hi = float(vals.min()), float(vals.max())
    if hi > lo:
        idx = np.clip(((vals - lo) / (hi - lo) * bins).astype(np.intp), 0, bins - 1)
    else:
        idx = np.zeros(len(vals), dtype=np.intp)
    avail = np.bincount(idx, minlength=bins)
    alloc = _allocate(avail, q)
    rng = np.random.default_rng(seed)
    chosen = []
    for b in range(bins):
        if alloc[b]:
            members = np.flatnonzero(idx == b)
            chosen.append(members[rng.permutation(len(members))[: alloc[b]]])
    return coords[np.concatenate(chosen)]


def select_patches(image, labels, dist, cls, q, w, bins=DEFAULT_BINS, seed=0,
                   slice_index=0, dist_feature=None):
    """Distance-stratified training patches of class ``cls`` from one slice.

    ``dist`` drives the stratification; ``dist_feature`` (defaults to ``dist``)
    fills the distance half of each feature vector.
    """
    pix = select_pixels(labels, dist, cls, q, bins, seed)
    if len(pix) == 0:
        return []
    feats = extract_features(image, dist if dist_feature is None else dist_feature, pix, w)
    return [
        PatchFeature((int(r), int(c), slice_index), feats[:, i], cls)
        for i, (r, c) in enumerate(pix)
    ]
