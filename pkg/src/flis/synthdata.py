"""Deterministic hydrocephalic-like CT phantoms with ground truth.

Each slice is an elliptical head on an empty background. Interior ventricle
blobs are CSF; crescents hugging the head boundary are subdural collections;
everything else inside the head is brain. By default the subdural intensity
band overlaps the CSF band, so intensity alone cannot separate the two fluid
classes but their position relative to the boundary can. Setting
``subdural_band`` near ``brain_band`` gives the other hard case. Labels: 0 background, 1 brain, 2 CSF, 3 subdural.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage as ndi

from .errors import InvalidArgumentError
from .imaging import distance_transform


@dataclass
class PhantomSpec:
    seed: int = 0
    T: int = 24
    width: int = 128
    height: int = 128
    brain_band: tuple = (0.50, 0.60)
    csf_band: tuple = (0.15, 0.25)
    subdural_band: tuple = (0.17, 0.30)
    min_contrast: float = 0.06  # minimum |brain - subdural| mean gap within a stack
    head_axes: tuple = (0.40, 0.34)  # max semi-axes as fractions of width/height
    crescent_thickness: float = 13.0
    crescents: tuple = (1, 2)  # min/max crescents per stack
    noise: float = 0.05
    blur: float = 0.6

    def validate(self):
        for name in ("brain_band", "csf_band", "subdural_band"):
            lo, hi = getattr(self, name)
            if not 0.0 <= lo <= hi <= 1.0:
                raise InvalidArgumentError(f"PhantomSpec.{name} must lie in [0, 1]")
        if self.T < 1 or self.width < 8 or self.height < 8:
            raise InvalidArgumentError("PhantomSpec: stack too small")
        ax, ay = self.head_axes
        # semi-axis plus centre jitter must stay inside the frame
        if not (0 < ax and 0 < ay and ax * self.width + 4 < self.width / 2
                and ay * self.height + 4 < self.height / 2):
            raise InvalidArgumentError("PhantomSpec: head ellipse exceeds image bounds")
        smallest = 0.55 * min(ax * self.width, ay * self.height) * 0.85
        if not 0 < self.crescent_thickness < 0.7 * smallest:
            raise InvalidArgumentError("PhantomSpec: crescent thickness exceeds head size")
        if self.noise < 0 or self.blur < 0:
            raise InvalidArgumentError("PhantomSpec: noise and blur must be >= 0")
        lo, hi = self.crescents
        if not 0 <= lo <= hi:
            raise InvalidArgumentError("PhantomSpec: bad crescent count range")


@dataclass
class Phantom:
    images: list
    labels: list
    masks: list
    spec: PhantomSpec = field(repr=False)


def _ellipse(shape, cy, cx, ay, ax, angle):
    yy, xx = np.mgrid[: shape[0], : shape[1]].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    c, s = np.cos(angle), np.sin(angle)
    u = c * dx + s * dy
    v = -s * dx + c * dy
    return (u / ax) ** 2 + (v / ay) ** 2 <= 1.0, np.arctan2(v / ay, u / ax)


def _angle_gap(a, b):
    return np.abs((a - b + np.pi) % (2 * np.pi) - np.pi)


def generate(spec):
    """Render one phantom stack; identical output for identical ``spec``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    H, W = spec.height, spec.width
    cy = H / 2 + rng.uniform(-3, 3)
    cx = W / 2 + rng.uniform(-3, 3)
    ax0 = spec.head_axes[0] * W * rng.uniform(0.85, 1.0)
    ay0 = spec.head_axes[1] * H * rng.uniform(0.85, 1.0)
    angle = rng.uniform(-0.3, 0.3)

    mu_b = rng.uniform(*spec.brain_band)
    mu_c = rng.uniform(*spec.csf_band)
    mu_s = rng.uniform(*spec.subdural_band)
    if abs(mu_b - mu_s) < spec.min_contrast:
        mu_s = max(0.0, mu_b - spec.min_contrast)

    vent_scale = rng.uniform(0.28, 0.45)  # ventricle size relative to head
    vent_sep = rng.uniform(0.18, 0.28)
    vent_tilt = rng.uniform(-0.25, 0.25)
    n_cres = int(rng.integers(spec.crescents[0], spec.crescents[1] + 1))
    crescents = [
        (rng.uniform(0, 2 * np.pi), rng.uniform(0.5, 1.1),
         spec.crescent_thickness * rng.uniform(0.6, 1.0), rng.uniform(0, 2 * np.pi))
        for _ in range(n_cres)
    ]

    images, labels, masks = [], [], []
    for t in range(spec.T):
        phase = np.pi * (t + 0.5) / spec.T
        size = 0.55 + 0.45 * np.sin(phase)
        mask, theta = _ellipse((H, W), cy, cx, ay0 * size, ax0 * size, angle)
        dist = distance_transform(mask)
        lab = mask.astype(np.uint8)

        vprof = max(0.0, np.sin(phase) - 0.25) / 0.75
        if vprof > 0:
            for side in (-1.0, 1.0):
                oy = side * vent_sep * ay0 * size * np.sin(angle + vent_tilt)
                ox = side * vent_sep * ax0 * size * np.cos(angle + vent_tilt)
                blob, _ = _ellipse((H, W), cy + oy, cx + ox,
                                   vent_scale * ay0 * size * (0.5 + 0.5 * vprof),
                                   0.6 * vent_scale * ax0 * size * (0.5 + 0.5 * vprof),
                                   angle + side * 0.4)
                lab[blob & (dist > spec.crescent_thickness + 3)] = 2

        for theta0, width, thick, wob in crescents:
            local = thick * (0.7 + 0.3 * np.sin(phase + wob))
            profile = np.clip(1.0 - (_angle_gap(theta, theta0) / width) ** 2, 0.0, None)
            lab[mask & (dist <= local * profile) & (lab == 1)] = 3

        img = np.zeros((H, W))
        img[lab == 1] = mu_b
        img[lab == 2] = mu_c
        img[lab == 3] = mu_s
        if spec.blur > 0:
            img = ndi.gaussian_filter(img, spec.blur)
        if spec.noise > 0:
            img = img + rng.normal(0.0, spec.noise, img.shape)
        images.append(np.clip(img, 0.0, 1.0))
        labels.append(lab)
        masks.append(mask)
    return Phantom(images, labels, masks, spec)


def phantom_suite(n_train=15, n_test=5, seed=7, **overrides):
    """Default train/test phantom split; stack ``i`` uses seed ``seed * 1000 + i``."""
    stacks = [generate(PhantomSpec(seed=seed * 1000 + i, **overrides))
              for i in range(n_train + n_test)]
    return stacks[:n_train], stacks[n_train:]
