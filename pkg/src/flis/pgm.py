"""Binary PGM (P5) reading/writing and the on-disk stack layout.

A stack directory holds ``images/`` and, for labelled data, ``labels/``; an
optional ``masks/`` holds known head masks (nonzero = inside). Slices are
ordered lexicographically by filename (base of skull first).
"""
from __future__ import annotations

import os
import re
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError

_HEADER = re.compile(rb"P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+"
                     rb"(?:#[^\n]*\n\s*)*(\d+)\s")


def read_pgm(path):
    """Return ``(array, maxval)``; 16-bit data is big-endian per the format."""
    data = Path(path).read_bytes()
    m = _HEADER.match(data)
    if not m:
        raise InvalidArgumentError(f"{path}: not a binary PGM (P5) file")
    width, height, maxval = (int(g) for g in m.groups())
    if not 0 < maxval < 65536:
        raise InvalidArgumentError(f"{path}: bad maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    body = data[m.end():]
    need = width * height * dtype.itemsize
    if len(body) < need:
        raise InvalidArgumentError(f"{path}: truncated pixel data")
    arr = np.frombuffer(body[:need], dtype=dtype).reshape(height, width)
    return arr.astype(np.int64), maxval


def write_pgm(path, arr, maxval=None):
    arr = np.asarray(arr)
    if maxval is None:
        maxval = 255 if arr.max(initial=0) <= 255 else 65535
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(np.clip(arr, 0, maxval).astype(dtype).tobytes())


def write_image(path, image):
    """Store a [0, 1] intensity slice as 16-bit PGM."""
    write_pgm(path, np.rint(np.clip(image, 0.0, 1.0) * 65535).astype(np.int64), 65535)


def read_image(path):
    arr, maxval = read_pgm(path)
    return arr / float(maxval)


def _slices(directory):
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == ".pgm")


def read_stack(stack_dir, with_labels=True):
    """Load ``(images, labels)`` from a stack directory; labels None if not asked."""
    stack_dir = Path(stack_dir)
    img_dir = stack_dir / "images"
    if not img_dir.is_dir():
        raise FileNotFoundError(f"images not found: {img_dir}")
    images = [read_image(p) for p in _slices(img_dir)]
    if not images:
        raise InvalidArgumentError(f"no PGM slices in {img_dir}")
    labels = None
    if with_labels:
        lab_dir = stack_dir / "labels"
        if not lab_dir.is_dir():
            raise FileNotFoundError(f"labels not found: {lab_dir}")
        labels = [read_pgm(p)[0].astype(np.uint8) for p in _slices(lab_dir)]
        if len(labels) != len(images):
            raise InvalidArgumentError(f"{stack_dir}: image/label slice counts differ")
        if any(lab.max(initial=0) > 3 for lab in labels):
            raise InvalidArgumentError(f"{stack_dir}: label values must be in 0..3")
    return images, labels


def read_masks(stack_dir):
    """Head masks from ``<stack>/masks`` as boolean arrays, or None if absent."""
    mask_dir = Path(stack_dir) / "masks"
    if not mask_dir.is_dir():
        return None
    return [read_pgm(p)[0] > 0 for p in _slices(mask_dir)]


def write_stack(stack_dir, images, labels=None, masks=None):
    stack_dir = Path(stack_dir)
    os.makedirs(stack_dir / "images", exist_ok=True)
    for t, img in enumerate(images):
        write_image(stack_dir / "images" / f"slice_{t:03d}.pgm", img)
    if labels is not None:
        write_labels(stack_dir / "labels", labels)
    if masks is not None:
        write_labels(stack_dir / "masks", [np.asarray(m, dtype=np.uint8) for m in masks])


def write_labels(directory, labels):
    os.makedirs(directory, exist_ok=True)
    for t, lab in enumerate(labels):
        write_pgm(Path(directory) / f"slice_{t:03d}.pgm", np.asarray(lab), 255)
