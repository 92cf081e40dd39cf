"""Training over stacks and partitions, stack segmentation, model files.

A stack is a pair ``(images, labels)`` of equally long slice lists; labels may
be ``None`` at inference. Features are patches of the slice intensity and of
its distance map (``flis``) or intensity only (``ddls``, ``src``).
"""
from __future__ import annotations

import hashlib
import logging
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .baselines import SrcDictionary, ThresholdClassifier, train_ddls
from .errors import (
    BadMagicError,
    DegenerateClassError,
    InvalidArgumentError,
    ModelFormatError,
    TruncatedModelError,
    VersionMismatchError,
)
from .imaging import (
    DEFAULT_BINS,
    candidate_region,
    distance_transform,
    extract_features,
    normalize_distances,
    partition_index,
    select_pixels,
)
from .numerics import lasso_batch
from .train import (
    CLASS_NAMES,
    N_CLASSES,
    ClassTrainingSet,
    FlisHyperParams,
    PartitionModel,
    assemble_partition_model,
    task_seed,
    train_class,
)

log = logging.getLogger(__name__)

MAGIC = b"FLIS\x01"
FORMAT_VERSION = 1
METHODS = ("flis", "ddls", "src")


@dataclass
class PipelineConfig:
    """Everything needed to reproduce a training run."""

    w: int = 11
    P: int = 12
    quota: int = 4700  # training patches per class and partition
    bins: int = DEFAULT_BINS
    seed: int = 0
    normalize_dist: bool = True
    src_atoms: int = 300  # SRC atoms kept per class and partition
    threads: int = 1
    hp: FlisHyperParams = field(default_factory=FlisHyperParams)

    def validate(self):
        if self.w < 1 or self.w % 2 == 0:
            raise InvalidArgumentError(f"w must be odd and positive, got {self.w}")
        if self.P < 1 or self.quota < 1 or self.bins < 1 or self.src_atoms < 1:
            raise InvalidArgumentError("P, quota, bins and src_atoms must be >= 1")
        if self.threads < 1:
            raise InvalidArgumentError("threads must be >= 1")
        self.hp.validate()

    def record(self):
        """Flat ``key -> value`` view used in model headers."""
        out = {k: v for k, v in asdict(self).items() if k not in ("hp", "threads")}
        out.update(asdict(self.hp))
        return out


@dataclass
class Model:
    method: str
    P: int
    w: int
    K: int
    partitions: list
    config: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION
    traces: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def d(self):
        return self.partitions[0].D.shape[0]

    def validate(self):
        if self.method not in METHODS:
            raise InvalidArgumentError(f"unknown method {self.method!r}")
        if len(self.partitions) != self.P:
            raise InvalidArgumentError("model: partition count differs from P")
        d = self.d
        for pm in self.partitions:
            if pm.D.shape[0] != d or pm.W.shape != (N_CLASSES, pm.D.shape[1]):
                raise InvalidArgumentError("model: inconsistent partition dimensions")


def slice_partition(t, T, P):
    """Partition of slice ``t``; stacks shorter than ``P`` use slice centres."""
    if T >= P:
        return partition_index(t, T, P)
    if not 0 <= t < T:
        raise InvalidArgumentError(f"slice {t} outside [0, {T})")
    return min(P - 1, int(math.floor((t + 0.5) * P / T)))


def stack_geometry(images, labels=None, normalize=True, masks=None):
    """Candidate masks and distance maps for one stack.

    ``masks`` overrides the computed candidate regions (e.g. ground-truth head
    masks). With labels the mask also covers every labelled pixel, so
    training never drops ground-truth tissue that thresholding missed.
    """
    given = masks
    masks = []
    for t, img in enumerate(images):
        m = candidate_region(img) if given is None else np.asarray(given[t]) != 0
        if labels is not None:
            m = m | (np.asarray(labels[t]) > 0)
        masks.append(m)
    dists = [distance_transform(m) for m in masks]
    if normalize:
        dists = normalize_distances(dists)
    return masks, dists


def _features(method, image, dist, coords, w):
    return extract_features(image, dist if method == "flis" else None, coords, w)


def _slice_key(p, image, labels):
    h = hashlib.sha256()
    h.update(struct.pack("<q", p))
    for a in (np.ascontiguousarray(image, dtype=np.float64), np.ascontiguousarray(labels)):
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.digest()


def gather_pools(stacks, config, method="flis"):
    """Per-partition, per-class feature matrices ``pools[p][c]`` of shape (d, n).

    Identical slices (by content and partition) are sampled once, so
    duplicating a training stack cannot change the pool. Each distinct slice
    of a partition contributes up to ``ceil(quota / n_slices)`` patches per
    class, and the pooled total is capped at ``quota``.
    """
    if not stacks:
        raise InvalidArgumentError("train: need at least one training stack")
    P = config.P
    slices = [dict() for _ in range(P)]
    for images, labels in stacks:
        if labels is None or len(labels) != len(images):
            raise InvalidArgumentError("train: every stack needs an aligned label stack")
        T = len(images)
        if T < P:
            log.warning("stack has %d slices < P=%d; mapping by slice centre", T, P)
        _, dists = stack_geometry(images, labels, config.normalize_dist)
        for t in range(T):
            p = slice_partition(t, T, P)
            key = _slice_key(p, images[t], labels[t])
            slices[p].setdefault(key, (images[t], np.asarray(labels[t]), dists[t]))
    pools = []
    for p in range(P):
        distinct = list(slices[p].values())
        per_slice = math.ceil(config.quota / max(1, len(distinct)))
        classes = []
        for c in range(N_CLASSES):
            feats = []
            for i, (img, lab, dist) in enumerate(distinct):
                coords = select_pixels(lab, dist, c + 1, per_slice, config.bins,
                                       task_seed(config.seed, p, c, i))
                if len(coords):
                    feats.append(_features(method, img, dist, coords, config.w))
            if not feats:
                raise DegenerateClassError(p, CLASS_NAMES[c])
            Y = np.hstack(feats)
            if Y.shape[1] > config.quota:
                keep = np.random.default_rng(task_seed(config.seed, p, c, 99)).choice(
                    Y.shape[1], config.quota, replace=False)
                Y = Y[:, np.sort(keep)]
            classes.append(Y)
        pools.append(classes)
    return pools


def _flis_task(pool, c, hp, seed):
    others = [pool[j] for j in range(N_CLASSES) if j != c]
    ts = ClassTrainingSet.for_class(pool[c], np.hstack(others), c)
    return train_class(ts, hp, seed=seed)


def _src_partition(pool, config, p):
    atoms, labels = [], []
    for c, Y in enumerate(pool):
        n = min(config.src_atoms, Y.shape[1])
        pick = np.random.default_rng(task_seed(config.seed, p, c, 7)).choice(
            Y.shape[1], n, replace=False)
        atoms.append(Y[:, np.sort(pick)])
        labels.append(np.full(n, c))
    src = SrcDictionary(np.hstack(atoms), np.concatenate(labels))
    return PartitionModel(src.atoms, src.delta)


def train(stacks, config=None, method="flis"):
    """Fit one model per partition from labelled stacks."""
    config = config or PipelineConfig()
    config.validate()
    if method not in METHODS:
        raise InvalidArgumentError(f"unknown method {method!r}")
    pools = gather_pools(stacks, config, method)
    P, hp = config.P, config.hp
    traces = {}
    with ThreadPoolExecutor(max_workers=config.threads) as ex:
        if method == "flis":
            futs = {(p, c): ex.submit(_flis_task, pools[p], c, hp, task_seed(config.seed, p, c))
                    for p in range(P) for c in range(N_CLASSES)}
            parts = []
            for p in range(P):
                cms = [futs[p, c].result() for c in range(N_CLASSES)]
                for c, cm in enumerate(cms):
                    traces[p, CLASS_NAMES[c]] = cm.trace
                parts.append(assemble_partition_model(*cms))
        elif method == "ddls":
            futs = [ex.submit(_ddls_task, pools[p], hp, task_seed(config.seed, p, 3))
                    for p in range(P)]
            parts = []
            for p, f in enumerate(futs):
                pm, cm = f.result()
                traces[p, "joint"] = cm.trace
                parts.append(pm)
        else:
            parts = [_src_partition(pools[p], config, p) for p in range(P)]
    model = Model(method, P, config.w, hp.K, parts, config.record(), traces=traces)
    model.validate()
    return model


def _ddls_task(pool, hp, seed):
    sets = [ClassTrainingSet.for_class(Y, Y[:, :0], c) for c, Y in enumerate(pool)]
    return train_ddls(sets, hp, seed=seed)


def classify(pm, M, lam):
    """Class index (0..2) per feature column: argmax of ``W a``, lowest index on ties."""
    X = lasso_batch(pm.D, M, lam, positive=True)
    return np.argmax(pm.W @ X, axis=0)


def segment(model, images, threads=1, masks=None):
    """Label maps (0 background, 1..3 classes) for every slice of a stack.

    ``masks`` replaces the computed candidate regions when given.
    """
    model.validate()
    if not images:
        raise InvalidArgumentError("segment: empty stack")
    T, P = len(images), model.P
    if T < P:
        log.warning("stack has %d slices < P=%d; mapping by slice centre", T, P)
    normalize = bool(model.config.get("normalize_dist", True))
    masks, dists = stack_geometry(images, None, normalize, masks)
    lam = float(model.config.get("lam", FlisHyperParams.lam))

    def one(t):
        out = np.zeros(np.shape(images[t]), dtype=np.uint8)
        coords = np.argwhere(masks[t])
        if len(coords):
            pm = model.partitions[slice_partition(t, T, P)]
            M = _features(model.method, images[t], dists[t], coords, model.w)
            out[coords[:, 0], coords[:, 1]] = classify(pm, M, lam) + 1
        return out

    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(one, range(T)))


def fit_threshold(stacks):
    """Nearest-class-mean intensity classifier from labelled stacks."""
    vals, labs = [], []
    for images, labels in stacks:
        for img, lab in zip(images, labels):
            lab = np.asarray(lab)
            sel = lab > 0
            vals.append(np.asarray(img)[sel])
            labs.append(lab[sel] - 1)
    return ThresholdClassifier().fit(np.concatenate(vals), np.concatenate(labs))


def segment_threshold(clf, images, masks=None):
    masks, _ = stack_geometry(images, None, False, masks)
    out = []
    for img, m in zip(images, masks):
        lab = np.zeros(np.shape(img), dtype=np.uint8)
        lab[m] = clf.predict(np.asarray(img)[m]) + 1
        out.append(lab)
    return out


# -- persistence ---------------------------------------------------------------

def _header(model):
    lines = {
        "version": model.version,
        "method": model.method,
        "P": model.P,
        "w": model.w,
        "K": model.K,
        "d": model.d,
        "cols": ",".join(str(pm.D.shape[1]) for pm in model.partitions),
    }
    for k, v in model.config.items():
        if k not in lines:
            lines[k] = v
    return "".join(f"{k}={_fmt(v)}\n" for k, v in lines.items()).encode("utf-8")


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(s):
    if s in ("true", "false"):
        return s == "true"
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def model_bytes(model):
    model.validate()
    head = _header(model)
    parts = [MAGIC, struct.pack("<I", len(head)), head]
    for pm in model.partitions:
        parts.append(np.ascontiguousarray(pm.D, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(pm.W, dtype="<f8").tobytes())
    return b"".join(parts)


def save_model(model, path):
    data = model_bytes(model)
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def model_from_bytes(data):
    if data[: len(MAGIC)] != MAGIC:
        raise BadMagicError("bad magic: not a model file")
    pos = len(MAGIC)
    if len(data) < pos + 4:
        raise TruncatedModelError("model truncated in header")
    (hlen,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if len(data) < pos + hlen:
        raise TruncatedModelError("model truncated in header")
    try:
        text = data[pos:pos + hlen].decode("utf-8")
        head = dict(line.split("=", 1) for line in text.splitlines() if line)
    except (UnicodeDecodeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model header: {exc}") from None
    pos += hlen
    if head.get("version") != str(FORMAT_VERSION):
        raise VersionMismatchError(
            f"model format version {head.get('version')!r}, expected {FORMAT_VERSION}")
    try:
        method, P, w, K, d = (head["method"], int(head["P"]), int(head["w"]),
                              int(head["K"]), int(head["d"]))
        cols = [int(c) for c in head["cols"].split(",")]
    except (KeyError, ValueError) as exc:
        raise ModelFormatError(f"malformed model header: {exc}") from None
    if len(cols) != P:
        raise ModelFormatError("model header: cols list length differs from P")
    parts = []
    for p, n in enumerate(cols):
        need = 8 * (d * n + N_CLASSES * n)
        if len(data) < pos + need:
            raise TruncatedModelError(f"model truncated in partition {p}", partition=p)
        D = np.frombuffer(data, "<f8", d * n, pos).reshape(d, n).astype(np.float64)
        pos += 8 * d * n
        W = np.frombuffer(data, "<f8", N_CLASSES * n, pos).reshape(N_CLASSES, n).astype(np.float64)
        pos += 8 * N_CLASSES * n
        parts.append(PartitionModel(D, W))
    if pos != len(data):
        raise ModelFormatError(f"model file has {len(data) - pos} trailing bytes")
    skip = {"version", "method", "P", "w", "K", "d", "cols"}
    config = {k: _parse_value(v) for k, v in head.items() if k not in skip}
    config["K"] = K
    model = Model(method, P, w, K, parts, config)
    model.validate()
    return model


def load_model(path):
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())


def config_from_record(record):
    """Rebuild a ``PipelineConfig`` from a model's flat config record."""
    top = {f.name for f in fields(PipelineConfig)} - {"hp"}
    hp_keys = {f.name for f in fields(FlisHyperParams)}
    cfg = PipelineConfig(**{k: v for k, v in record.items() if k in top})
    cfg.hp = FlisHyperParams(**{k: v for k, v in record.items() if k in hp_keys})
    return cfg
