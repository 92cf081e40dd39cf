"""Comparison methods: sparse-representation classification over raw patches,
a jointly trained label-consistent dictionary, and an intensity threshold rule.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidArgumentError, UndecidablePixelError
from .numerics import nonneg_lasso
from .train import N_CLASSES, ClassTrainingSet, PartitionModel, train_class


@dataclass
class SrcDictionary:
    """Raw training patches (columns) and the class index of each."""

    atoms: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.intp).ravel()
        if self.atoms.ndim != 2 or self.atoms.shape[1] != self.labels.size:
            raise InvalidArgumentError("SrcDictionary: one label per atom required")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= N_CLASSES):
            raise InvalidArgumentError("SrcDictionary: labels must be class indices 0..2")

    @property
    def delta(self):
        """``(3, N)`` indicator matrix selecting each class's coefficients."""
        W = np.zeros((N_CLASSES, self.labels.size))
        W[self.labels, np.arange(self.labels.size)] = 1.0
        return W


def src_probs(alpha, labels):
    """Per-class share of the nonnegative code mass."""
    alpha = np.asarray(alpha, dtype=np.float64)
    total = alpha.sum()
    if total <= 1e-12:
        raise UndecidablePixelError("sparse code is (numerically) zero")
    mass = np.bincount(np.asarray(labels, dtype=np.intp), weights=alpha, minlength=N_CLASSES)
    return mass / total


def src_classify(m, dictionary, lam):
    """Class index and class likelihoods of feature ``m`` under SRC.

    The code is nonnegative, so every likelihood is a proper fraction of the
    total coefficient mass. Raises ``UndecidablePixelError`` when the code
    vanishes.
    """
    if dictionary.labels.size == 0:
        raise InvalidArgumentError("src_classify: empty dictionary")
    if lam <= 0:
        raise InvalidArgumentError("src_classify: lam must be > 0")
    alpha = nonneg_lasso(dictionary.atoms, m, lam)
    probs = src_probs(alpha, dictionary.labels)
    return int(np.argmax(probs)), probs


def merge_training_sets(sets):
    """Stack per-class in-class samples into one joint training set."""
    Y = np.hstack([s.Y for s in sets])
    H = np.hstack([s.H for s in sets])
    return ClassTrainingSet(Y, Y[:, :0], H, H[:, :0])


def train_ddls(sets, hp, seed=0):
    """One joint dictionary of ``3K`` atoms with a joint linear classifier.

    ``sets`` is either a merged ``ClassTrainingSet`` or the three per-class
    sets. Training reuses the class trainer with the discrimination weight
    switched off, which leaves only the reconstruction and label terms.
    """
    if not isinstance(sets, ClassTrainingSet):
        sets = merge_training_sets(sets)
    model = train_class(sets, replace(hp, rho=0.0, K=N_CLASSES * hp.K), seed=seed)
    return PartitionModel(model.D, model.W), model


class ThresholdClassifier:
    """Nearest class-mean intensity rule; ties go to the lower class index."""

    def __init__(self, means=None):
        self.means = None if means is None else np.asarray(means, dtype=np.float64)

    def fit(self, values, labels):
        values = np.asarray(values, dtype=np.float64).ravel()
        labels = np.asarray(labels).ravel()
        means = []
        for c in range(N_CLASSES):
            sel = values[labels == c]
            if sel.size == 0:
                raise InvalidArgumentError(f"ThresholdClassifier: no samples of class {c}")
            means.append(sel.mean())
        self.means = np.array(means)
        return self

    def predict(self, values):
        if self.means is None:
            raise InvalidArgumentError("ThresholdClassifier: not fitted")
        values = np.asarray(values, dtype=np.float64)
        gaps = np.abs(values[..., None] - self.means)
        return np.argmin(gaps, axis=-1)
