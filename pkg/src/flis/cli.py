"""Command-line entry point: ``flis {train,segment,estimate,phantom,bench}``.

Exit codes: 0 success, 1 internal failure, 2 bad input, 3 bad model file.
Every failure prints a single ``error: ...`` line on stderr.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import pgm, pipeline
from .errors import DegenerateClassError, FlisError, InvalidArgumentError, ModelFormatError
from .evaluation import (
    CLASS_NAMES,
    CostParams,
    class_dice,
    format_estimates,
    mean_sd,
    stack_dice,
    write_dice_csv,
)
from .synthdata import PhantomSpec, phantom_suite
from .train import FlisHyperParams

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_FORMAT = 0, 1, 2, 3

_TOP_KEYS = {f.name: f.type for f in fields(pipeline.PipelineConfig) if f.name != "hp"}
_HP_KEYS = {f.name: f.type for f in fields(FlisHyperParams)}


def _convert(key, raw, typ):
    typ = str(typ)
    try:
        if "bool" in typ:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if "int" in typ:
            return int(raw)
        return float(raw)
    except ValueError:
        raise InvalidArgumentError(f"config key {key!r}: bad value {raw!r}") from None


def parse_pairs(lines, source="config"):
    """``key=value`` lines into a dict; blank lines and ``#`` comments skipped."""
    out = {}
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgumentError(f"{source}:{n}: expected key=value, got {line!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def build_config(path=None, overrides=(), **flags):
    """RunConfig from an optional file, ``--set`` overrides, then explicit flags."""
    pairs = {}
    if path:
        pairs.update(parse_pairs(Path(path).read_text().splitlines(), str(path)))
    pairs.update(parse_pairs(overrides, "--set"))
    pairs.update({k: str(v) for k, v in flags.items() if v is not None})
    cfg = pipeline.PipelineConfig()
    for k, raw in pairs.items():
        if k in _TOP_KEYS:
            setattr(cfg, k, _convert(k, raw, _TOP_KEYS[k]))
        elif k in _HP_KEYS:
            setattr(cfg.hp, k, _convert(k, raw, _HP_KEYS[k]))
        else:
            raise InvalidArgumentError(f"unknown config key {k!r}")
    cfg.validate()
    return cfg


def _load_stacks(dirs, with_labels=True):
    return [pgm.read_stack(d, with_labels) for d in dirs]


def _checksum(data):
    return hashlib.sha256(data).hexdigest()


def cmd_train(args):
    cfg = build_config(args.config, args.set, seed=args.seed, threads=args.threads)
    stacks = _load_stacks(args.stacks)
    t0 = time.perf_counter()
    model = pipeline.train(stacks, cfg, args.method)
    data = pipeline.model_bytes(model)
    Path(args.out).write_bytes(data)
    for (p, name), tr in sorted(model.traces.items(), key=lambda kv: (kv[0][0], str(kv[0][1]))):
        rho = ",".join(f"{r:.4g}" for r in tr.rho_eff) or "-"
        obj = ",".join(f"{o:.6g}" for o in tr.objective)
        print(f"partition={p} class={name} L={tr.L} converged={tr.converged} "
              f"best_iter={tr.best_iter} rho_eff=[{rho}] objective=[{obj}]")
    print(f"model={args.out} method={model.method} sha256={_checksum(data)} "
          f"seconds={time.perf_counter() - t0:.1f}")
    return EXIT_OK


def cmd_segment(args):
    model = pipeline.load_model(args.model)
    if args.method and args.method != model.method:
        raise InvalidArgumentError(
            f"model was trained with method {model.method!r}, not {args.method!r}")
    images, _ = pgm.read_stack(args.stack, with_labels=False)
    masks = None if args.no_masks else pgm.read_masks(args.stack)
    labels = pipeline.segment(model, images, threads=args.threads, masks=masks)
    pgm.write_labels(args.out, labels)
    print(f"wrote {len(labels)} label slices to {args.out}")
    if args.truth:
        _, truth = pgm.read_stack(args.truth, with_labels=True)
        if len(truth) != len(labels):
            raise InvalidArgumentError("truth stack length differs from segmented stack")
        rows = []
        for t, (pred, gt) in enumerate(zip(labels, truth)):
            per = class_dice(pred, gt)
            rows.extend((t, CLASS_NAMES[c - 1], per[c]) for c in (1, 2, 3))
        csv_path = args.dice_csv or str(Path(args.out) / "dice.csv")
        with open(csv_path, "w", newline="") as fh:
            write_dice_csv(rows, fh)
        overall = stack_dice(labels, truth)
        print("stack dice " + " ".join(f"{CLASS_NAMES[c - 1]}={overall[c]:.4f}"
                                       for c in (1, 2, 3)))
        print(f"dice report: {csv_path}")
    return EXIT_OK


_COST_KEYS = {f.name for f in fields(CostParams)}


def cmd_estimate(args):
    pairs = {}
    if args.params:
        pairs.update(parse_pairs(Path(args.params).read_text().splitlines(), args.params))
    for k in _COST_KEYS:
        v = getattr(args, k)
        if v is not None:
            pairs[k] = str(v)
    P = int(pairs.pop("P", 1))
    if args.P is not None:
        P = args.P
    unknown = set(pairs) - _COST_KEYS
    if unknown:
        raise InvalidArgumentError(f"unknown estimator key {sorted(unknown)[0]!r}")
    try:
        p = CostParams(**{k: float(v) for k, v in pairs.items()})
    except ValueError as exc:
        raise InvalidArgumentError(f"bad estimator value: {exc}") from None
    sys.stdout.write(format_estimates(p, P))
    return EXIT_OK


def phantom_overrides(lines, source="--set"):
    """PhantomSpec field overrides from ``key=value`` lines (tuples comma separated)."""
    types = {f.name: f.type for f in fields(PhantomSpec)}
    overrides = {}
    for k, v in parse_pairs(lines, source).items():
        typ = types.get(k)
        if typ is None or k == "seed":
            raise InvalidArgumentError(f"unknown phantom key {k!r}")
        try:
            overrides[k] = (tuple(float(x) for x in v.split(",")) if "tuple" in str(typ)
                            else _convert(k, v, typ))
        except ValueError:
            raise InvalidArgumentError(f"phantom key {k!r}: bad value {v!r}") from None
    return overrides


def cmd_phantom(args):
    overrides = phantom_overrides(args.set)
    train, test = phantom_suite(args.train, args.test, args.seed, **overrides)
    out = Path(args.out)
    for split, stacks in (("train", train), ("test", test)):
        for i, ph in enumerate(stacks):
            pgm.write_stack(out / split / f"stack_{i:03d}", ph.images, ph.labels, ph.masks)
    print(f"wrote {len(train)} train and {len(test)} test stacks to {out}")
    return EXIT_OK


def _run_methods(train, test, cfg, methods, use_masks=True):
    stacks = [(s.images, s.labels) for s in train]
    scores = {}
    for m in methods:
        if m == "threshold":
            clf = pipeline.fit_threshold(stacks)
            segs = [pipeline.segment_threshold(clf, s.images, s.masks if use_masks else None)
                    for s in test]
        else:
            model = pipeline.train(stacks, cfg, m)
            segs = [pipeline.segment(model, s.images, cfg.threads,
                                     s.masks if use_masks else None) for s in test]
        scores[m] = [stack_dice(sg, s.labels) for sg, s in zip(segs, test)]
    return scores


def _sweep_values(spec):
    key, _, vals = spec.partition("=")
    if not vals:
        raise InvalidArgumentError(f"--sweep expects key=v1,v2,...; got {spec!r}")
    return key.strip(), [v.strip() for v in vals.split(",") if v.strip()]


def cmd_bench(args):
    cfg = build_config(args.config, args.set, seed=args.seed, threads=args.threads)
    methods = args.methods.split(",")
    for m in methods:
        if m not in pipeline.METHODS + ("threshold",):
            raise InvalidArgumentError(f"unknown method {m!r}")
    train, test = phantom_suite(args.train, args.test, args.phantom_seed,
                                **phantom_overrides(args.phantom, "--phantom"))
    rows = []
    if args.sweep:
        key, values = _sweep_values(args.sweep)
        for v in values:
            sub = build_config(args.config, list(args.set) + [f"{key}={v}"],
                               seed=args.seed, threads=args.threads)
            scores = _run_methods(train, test, sub, methods)
            rows.extend(_rows(scores, {key: v}))
    elif args.splits > 1:
        pool = train + test
        rng = np.random.default_rng(args.seed)
        for s in range(args.splits):
            order = rng.permutation(len(pool))
            tr = [pool[i] for i in order[: len(train)]]
            te = [pool[i] for i in order[len(train):]]
            rows.extend(_rows(_run_methods(tr, te, cfg, methods), {"split": s}))
    else:
        rows.extend(_rows(_run_methods(train, test, cfg, methods), {}))
    _print_table(rows)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            keys = sorted({k for r in rows for k in r})
            w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    return EXIT_OK


def _rows(scores, extra):
    rows = []
    for m, per_stack in scores.items():
        for i, d in enumerate(per_stack):
            rows.append({**extra, "method": m, "stack": i,
                         **{CLASS_NAMES[c - 1]: d[c] for c in (1, 2, 3)}})
    return rows


def _print_table(rows):
    groups = {}
    for r in rows:
        key = tuple((k, r[k]) for k in sorted(r) if k not in ("stack", *CLASS_NAMES)
                    and k != "split")
        groups.setdefault(key, []).append(r)
    print("setting".ljust(28) + "".join(f"{n:>18}" for n in CLASS_NAMES))
    for key, rs in groups.items():
        label = " ".join(f"{k}={v}" for k, v in key)
        cells = []
        for n in CLASS_NAMES:
            m, sd = mean_sd([r[n] for r in rs])
            cells.append(f"{m:.3f} +/- {sd:.3f}".rjust(18))
        print(label.ljust(28) + "".join(cells))


def build_parser():
    ap = argparse.ArgumentParser(prog="flis", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one configuration key (repeatable)")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)

    p = sub.add_parser("train", help="train a model from labelled stacks")
    p.add_argument("stacks", nargs="+", help="stack directories with images/ and labels/")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--method", choices=pipeline.METHODS, default="flis")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("segment", help="segment a stack with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--stack", required=True)
    p.add_argument("--out", required=True, help="directory for label PGMs")
    p.add_argument("--truth", help="stack directory whose labels/ hold ground truth")
    p.add_argument("--dice-csv", help="dice report path (default <out>/dice.csv)")
    p.add_argument("--method", choices=pipeline.METHODS,
                   help="expected model method; mismatch is an input error")
    p.add_argument("--no-masks", action="store_true",
                   help="ignore <stack>/masks and compute candidate regions")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("estimate", help="closed-form cost and memory estimates")
    for k in ("N", "K", "d", "L", "Ix", "Iy", "Nt"):
        p.add_argument(f"--{k}", type=float)
    p.add_argument("--P", type=int, help="partitions multiplying the memory rows")
    p.add_argument("--params", help="key=value file of estimator parameters")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("phantom", help="write the synthetic phantom suite")
    p.add_argument("--out", required=True)
    p.add_argument("--train", type=int, default=15)
    p.add_argument("--test", type=int, default=5)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a PhantomSpec field (tuples comma separated)")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("bench", help="compare methods on the phantom suite")
    common(p)
    p.add_argument("--methods", default="flis,ddls,src,threshold")
    p.add_argument("--train", type=int, default=15)
    p.add_argument("--test", type=int, default=5)
    p.add_argument("--phantom-seed", type=int, default=7)
    p.add_argument("--phantom", action="append", default=[], metavar="KEY=VALUE",
                   help="override a PhantomSpec field of the generated suite")
    p.add_argument("--sweep", help="KEY=v1,v2,... one result row per value")
    p.add_argument("--splits", type=int, default=1,
                   help="average over this many random train/test splits")
    p.add_argument("--csv", help="write per-stack results here")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ModelFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (FileNotFoundError, NotADirectoryError, InvalidArgumentError,
            DegenerateClassError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FlisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        print(f"error: internal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
