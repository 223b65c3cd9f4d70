"""Command-line entry point: ``pas <subcommand> [--config c.json] [--seed N] [--out DIR]``.

Config files are flat JSON objects. Keys are the ``SearchConfig`` fields plus
``dataset`` (``{"tu": {"dir", "name"}}`` or ``{"synthetic": {"kind", "count",
"seed"}}``), ``folds``, ``trials``, ``arch`` and ``random_epochs``. Unknown
keys are errors. ``PAS_SEED`` overrides the config seed; ``--seed`` overrides both.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .graphdata import DatasetError, gen_synthetic, load_tu_dataset, write_tu_dataset
from .search import (
    SearchConfig,
    SearchDiverged,
    cross_validate,
    pas_search,
    random_search,
    train_architecture,
)
from .supernet import DerivedArch

log = logging.getLogger("pas")

SEARCH_KEYS = {f.name: f for f in fields(SearchConfig)}
EXTRA_KEYS = {"dataset": dict, "folds": int, "trials": int, "arch": str, "random_epochs": int,
              "compare_random": int}


class ConfigError(ValueError):
    """Malformed or unknown configuration; maps to exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _check_type(key, value, default):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, (tuple, list)):
        ok = isinstance(value, (tuple, list))
    elif isinstance(default, dict):
        ok = isinstance(value, dict)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"config key {key!r} has invalid value {value!r}")


def load_config(path):
    """Read a JSON config; returns the raw dict after key and type validation."""
    if path is None:
        return {}
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    defaults = SearchConfig()
    for key, value in raw.items():
        if key in SEARCH_KEYS:
            _check_type(key, value, getattr(defaults, key))
        elif key in EXTRA_KEYS:
            if not isinstance(value, EXTRA_KEYS[key]) or isinstance(value, bool):
                raise ConfigError(f"config key {key!r} has invalid value {value!r}")
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return raw


def resolve_seed(raw, cli_seed):
    if cli_seed is not None:
        return cli_seed
    env = os.environ.get("PAS_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"PAS_SEED must be an integer, got {env!r}") from None
    return raw.get("seed", 0)


def build_search_config(raw, seed):
    kwargs = {k: v for k, v in raw.items() if k in SEARCH_KEYS}
    kwargs["seed"] = seed
    try:
        return SearchConfig(**kwargs)
    except (ValueError, KeyError) as exc:
        bad = next((k for k in kwargs if k in str(exc)), None)
        where = f"config key {bad!r}: " if bad else "config: "
        raise ConfigError(f"{where}{exc}") from None


def load_dataset(spec):
    """Dataset from a config ``dataset`` entry; returns ``(dataset, input_files)``."""
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigError("config key 'dataset' needs exactly one of 'tu' or 'synthetic'")
    (kind, opts), = spec.items()
    if not isinstance(opts, dict):
        raise ConfigError(f"config key 'dataset.{kind}' must be an object")
    if kind == "tu":
        unknown = set(opts) - {"dir", "name", "use_node_attributes", "featureless"}
        if unknown or "dir" not in opts or "name" not in opts:
            raise ConfigError("config key 'dataset.tu' needs dir and name"
                              + (f"; unknown {sorted(unknown)}" if unknown else ""))
        ds = load_tu_dataset(opts["dir"], opts["name"],
                             use_node_attributes=opts.get("use_node_attributes", False),
                             featureless=opts.get("featureless", "constant"))
        files = sorted(Path(opts["dir"]).glob(f"{opts['name']}_*.txt"))
        return ds, files
    if kind == "synthetic":
        unknown = set(opts) - {"kind", "count", "seed"}
        if unknown or "kind" not in opts:
            raise ConfigError("config key 'dataset.synthetic' needs kind"
                              + (f"; unknown {sorted(unknown)}" if unknown else ""))
        try:
            ds = gen_synthetic(opts["kind"], opts.get("count", 200), opts.get("seed", 0))
        except ValueError as exc:
            raise ConfigError(f"config key 'dataset.synthetic': {exc}") from None
        return ds, []
    raise ConfigError(f"config key 'dataset' has unknown kind {kind!r}")


def git_blob_hash(data):
    """SHA-1 of ``data`` as git would store it as a blob."""
    h = hashlib.sha1(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()


def write_manifest(out, command, resolved, seed, inputs):
    hashes = {str(p): git_blob_hash(Path(p).read_bytes()) for p in inputs}
    combined = hashlib.sha256(json.dumps({"config": resolved, "inputs": hashes},
                                         sort_keys=True).encode()).hexdigest()
    manifest = {"command": command, "version": __version__, "seed": seed, "config": resolved,
                "inputs": hashes, "content_hash": combined}
    _write_json(out / "manifest.json", manifest)
    return manifest


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_arch(path):
    try:
        with open(path) as fh:
            return DerivedArch.from_json(json.load(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read architecture {path}: {exc.strerror}") from None
    except (json.JSONDecodeError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid architecture file {path}: {exc}") from None


# --------------------------------------------------------------------------
# subcommands


def _prepare(args, need_dataset=True):
    raw = load_config(args.config)
    for key in ("folds", "trials", "arch", "random_epochs", "compare_random"):
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    seed = resolve_seed(raw, args.seed)
    cfg = build_search_config(raw, seed)
    dataset, inputs = (None, [])
    if need_dataset:
        if "dataset" not in raw:
            raise ConfigError("config key 'dataset' is required for this command")
        dataset, inputs = load_dataset(raw["dataset"])
    if raw.get("arch"):
        inputs = inputs + [Path(raw["arch"])]
    resolved = cfg.to_dict()
    resolved.update({k: raw[k] for k in EXTRA_KEYS if k in raw})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out, args.command, resolved, seed, inputs)
    return raw, cfg, dataset, out


def cmd_search(args):
    raw, cfg, dataset, out = _prepare(args)
    derived, report, _ = pas_search(dataset, cfg)
    _write_json(out / "arch.json", derived.to_json())
    report.to_csv(out / "search_report.csv")
    summary = {"arch": derived.to_json(), "search_wall_time_seconds": report.wall_time,
               "wall_time_seconds": report.wall_time,
               "probabilities": report.final["probabilities"]}
    trials = raw.get("compare_random")
    if trials:
        rcfg = build_search_config({**raw, "epochs": raw.get("random_epochs", cfg.epochs)}, cfg.seed)
        best, _, rtime = random_search(dataset, rcfg, trials)
        summary.update({"random_wall_time_seconds": rtime, "random_trials": trials,
                        "random_arch": best.to_json()})
    _write_json(out / "summary.json", summary)
    print(f"derived architecture: {derived}")
    print(f"search wall time: {report.wall_time:.2f}s")
    return 0


def cmd_train(args):
    raw, cfg, dataset, out = _prepare(args)
    if not raw.get("arch"):
        raise ConfigError("config key 'arch' (or --arch) is required for train")
    arch = _read_arch(raw["arch"])
    from .graphdata import stratified_split
    tr, va, te = stratified_split(dataset.labels, cfg.split, cfg.seed)
    _, report = train_architecture(dataset.subset(tr), dataset.subset(va), arch, cfg,
                                   dataset.num_features, dataset.num_classes,
                                   test=dataset.subset(te) if len(te) else None)
    report.to_csv(out / "train_report.csv")
    summary = {"arch": arch.to_json(), "wall_time_seconds": report.wall_time, **report.final}
    _write_json(out / "summary.json", summary)
    print(json.dumps(report.final))
    return 0


def cmd_eval(args):
    raw, cfg, dataset, out = _prepare(args)
    if not raw.get("arch"):
        raise ConfigError("config key 'arch' (or --arch) is required for eval")
    arch = _read_arch(raw["arch"])
    k = raw.get("folds", 10)
    try:
        result = cross_validate(dataset, arch, k, cfg)
    except ValueError as exc:
        raise ConfigError(f"config key 'folds': {exc}") from None
    result.to_csv(out / "cv_results.csv")
    _write_json(out / "summary.json", {"mean": result.mean, "std": result.std, "folds": k,
                                       "arch": arch.to_json(),
                                       "wall_time_seconds": result.wall_time})
    print(f"{k}-fold test accuracy: {result.mean:.4f} +- {result.std:.4f}")
    return 0


def cmd_random(args):
    raw, cfg, dataset, out = _prepare(args)
    n = raw.get("trials", 10)
    if n < 1:
        raise ConfigError("config key 'trials' must be >= 1")
    best, trials, wall = random_search(dataset, cfg, n)
    _write_json(out / "arch.json", best.to_json())
    with open(out / "random_trials.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "val_acc", "wall_time_seconds", "arch"])
        for t in trials:
            w.writerow([t["trial"], repr(t["val_acc"]), repr(t["wall_time"]), str(t["arch"])])
    _write_json(out / "summary.json", {"arch": best.to_json(), "trials": n,
                                       "wall_time_seconds": wall})
    print(f"best of {n}: {best}")
    return 0


def cmd_gendata(args):
    seed = resolve_seed({}, args.seed)
    try:
        ds = gen_synthetic(args.kind, args.count, seed)
    except ValueError as exc:
        print(f"pas gendata: error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    name = args.name or args.kind.replace("-", "_").upper()
    write_tu_dataset(ds, out, name)
    files = sorted(out.glob(f"{name}_*.txt"))
    write_manifest(out, "gendata", {"kind": args.kind, "count": args.count, "name": name},
                   seed, files)
    print(f"wrote {len(ds)} graphs to {out}/{name}_*.txt")
    return 0


def cmd_gradcheck(args):
    from .gradsuite import TOLERANCE, run_gradient_suite
    seed = resolve_seed({}, args.seed)
    results, wall = run_gradient_suite(num_graphs=args.graphs, seed=seed,
                                       corrupt=args.corrupt_gradient)
    failed = 0
    for r in results:
        status = "ok" if r.passed else "FAIL"
        failed += not r.passed
        print(f"{status:4s} {r.name:24s} max rel err {r.error:.3e}")
    print(f"{len(results) - failed}/{len(results)} passed (tolerance {TOLERANCE:g}) in {wall:.1f}s")
    return 1 if failed else 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="random seed (overrides config and PAS_SEED)")
    common.add_argument("--out", default="runs/latest", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="pas", description="Pooling architecture search for graph classification")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("search", parents=[common], help="run the differentiable search")
    p.add_argument("--compare-random", type=int, dest="compare_random",
                   help="also time a random search with this many trials")
    p.add_argument("--random-epochs", type=int, dest="random_epochs")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("train", parents=[common], help="train one architecture on a split")
    p.add_argument("--arch")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="k-fold cross-validate an architecture")
    p.add_argument("--arch")
    p.add_argument("--folds", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("random", parents=[common], help="random-search baseline")
    p.add_argument("--trials", type=int)
    p.set_defaults(func=cmd_random)

    p = sub.add_parser("gendata", parents=[common], help="write a synthetic dataset in TU format")
    p.add_argument("--kind", default="feature-sum", choices=["feature-sum", "planted-clusters"])
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--name")
    p.set_defaults(func=cmd_gendata)

    p = sub.add_parser("gradcheck", parents=[common], help="run the finite-difference gradient suite")
    p.add_argument("--graphs", type=int, default=20)
    # test hook: perturb one check's analytic gradient
    p.add_argument("--corrupt-gradient", dest="corrupt_gradient", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"pas {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, SearchDiverged, FloatingPointError, ValueError, OSError) as exc:
        print(f"pas {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
