"""Dice overlap and closed-form cost/memory estimators."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, UndefinedMetricError

CLASS_NAMES = ("brain", "csf", "subdural")


def dice(A, B):
    """``2|A n B| / (|A| + |B|)`` for two boolean pixel masks."""
    A = np.asarray(A, dtype=bool)
    B = np.asarray(B, dtype=bool)
    if A.shape != B.shape:
        raise InvalidArgumentError("dice: masks differ in shape")
    total = int(A.sum()) + int(B.sum())
    if total == 0:
        raise UndefinedMetricError("dice: both sets are empty")
    return 2.0 * int(np.logical_and(A, B).sum()) / total


def class_dice(pred, truth, classes=(1, 2, 3)):
    """Per-class dice for integer label maps; NaN where both are empty."""
    out = {}
    for c in classes:
        try:
            out[c] = dice(np.asarray(pred) == c, np.asarray(truth) == c)
        except UndefinedMetricError:
            out[c] = float("nan")
    return out


def stack_dice(pred_stack, truth_stack, classes=(1, 2, 3)):
    """Per-class dice pooled over every pixel of a stack."""
    pred = np.stack([np.asarray(p) for p in pred_stack])
    truth = np.stack([np.asarray(t) for t in truth_stack])
    return class_dice(pred, truth, classes)


def mean_sd(values):
    """Mean and sample SD ignoring NaNs (NaN, NaN when nothing is defined)."""
    v = np.asarray([x for x in values if not np.isnan(x)], dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


def write_dice_csv(rows, fh):
    """Write ``(slice, class, dice)`` rows; NaN dice is written as ``NA``."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["slice", "class", "dice"])
    for s, c, d in rows:
        w.writerow([s, c, "NA" if np.isnan(d) else f"{d:.6f}"])


def read_dice_csv(fh):
    rows = []
    for rec in csv.DictReader(fh):
        d = float("nan") if rec["dice"] == "NA" else float(rec["dice"])
        rows.append((int(rec["slice"]), rec["class"], d))
    return rows


@dataclass
class CostParams:
    N: float = 4700
    K: float = 80
    d: float = 242
    L: float = 5
    Ix: float = 512
    Iy: float = 512
    Nt: float = 15

    def __post_init__(self):
        for name in ("N", "K", "d", "L", "Ix", "Iy", "Nt"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"CostParams.{name} must be nonnegative")


def ops_flis(p):
    """Per-pixel operation count of FLIS training (shared dictionaries)."""
    return 9 * p.N * p.K * (2 * (p.d + 3) + p.L**2) / (p.Ix * p.Iy)


def ops_ddls(p):
    """Per-pixel operation count of DDLS training (one dictionary per pixel)."""
    return 9 * p.N * p.K * (2 * (p.d / 2 + 3) + p.L**2)


def mem_flis(p):
    """Bytes to store one partition's FLIS dictionary and classifier."""
    return (p.d + 3) * 3 * p.K * 16


def mem_ddls(p):
    return (p.d / 2 + 3) * 3 * p.K * 16 * p.Ix * p.Iy


def mem_src(p):
    return (p.d / 2) * (p.d / 2) * p.Nt * p.Ix * p.Iy * 16


MEM_FLIS_NOTE = (
    "note: the reference FLIS memory figure (4.8e5 bytes) is reproduced only "
    "with the intensity-only length d/2; with the full feature length d the "
    "same formula gives the larger value shown first"
)


def estimate_table(p, partitions=1):
    """Estimator rows ``(name, value)``; memory rows are scaled by ``partitions``."""
    half = CostParams(N=p.N, K=p.K, d=p.d / 2, L=p.L, Ix=p.Ix, Iy=p.Iy, Nt=p.Nt)
    return [
        ("C_FLIS", ops_flis(p)),
        ("C_DDLS", ops_ddls(p)),
        ("M_FLIS(d)", mem_flis(p) * partitions),
        ("M_FLIS(d/2)", mem_flis(half) * partitions),
        ("M_DDLS", mem_ddls(p) * partitions),
        ("M_SRC", mem_src(p) * partitions),
    ]


def format_estimates(p, partitions=1):
    buf = io.StringIO()
    buf.write(
        f"# N={p.N:g} K={p.K:g} d={p.d:g} L={p.L:g} Ix={p.Ix:g} Iy={p.Iy:g} "
        f"Nt={p.Nt:g} P={partitions}\n"
    )
    for name, value in estimate_table(p, partitions):
        buf.write(f"{name:<12} {value:.6e}\n")
    buf.write(MEM_FLIS_NOTE + "\n")
    return buf.getvalue()
