"""Command-line front end.

Subcommands: train a forest on a labeled CSV, export its per-path prefix
experts, adapt a model onto target data (node / path / tree), score a model
on a test CSV, and run the synthetic shift benchmark. Options come from a
flat key=value config file plus repeatable --params KEY=VALUE overrides;
unknown or mistyped keys are hard errors. All file outputs are byte-stable
for a fixed invocation.

Exit codes: 0 success, 2 bad input, 3 incompatible model artifacts,
4 solver failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bench import DomainSpec, ExperimentConfig, ShiftSpec, evaluate, run_experiment
from .data import load_csv
from .errors import ForestAdaptError, IncompatibleModelError, InvalidArgumentError, SolverConvergenceError
from .forest import ForestConfig, forest_posterior_batch, load_forest, save_forest, train_forest, tree_depth
from .node_adapt import node_adapt
from .path_adapt import export_path_svms, load_path_model, path_adapt, save_path_model
from .tree_adapt import tree_adapt

EXIT_INPUT = 2
EXIT_MODEL = 3
EXIT_SOLVER = 4

SVM_KEYS = ("reg_cost", "tol", "max_iter")

FOREST_KEYS = {
    "n_trees": int, "max_depth": int, "min_samples": int, "purity_stop": float,
    "K": int, "block_fraction": float, "decision_threshold": float, "seed": int,
    "reg_cost": float, "tol": float, "max_iter": int,
}
METHOD_KEYS = {
    "node_c1": float, "node_c2": float, "path_penalty": float, "tree_ratio": float,
}


def _float_list(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _name_list(text: str) -> tuple:
    return tuple(v.strip() for v in text.split(",") if v.strip())


BENCH_KEYS = {
    "name": str, "family": str, "dim": int, "prior_pos": float, "noise": float,
    "n_source": int, "n_target_train": int, "n_target_test": int,
    "shift_rotation": float, "shift_translation": _float_list, "shift_scale": float,
    "data_seed": int, "target_fractions": _float_list, "n_repeats": int,
    "methods": _name_list,
}


# ------------------------------------------------------------ option loading

def read_config(path: str) -> dict:
    """Flat key=value file; blank lines and # comments ignored."""
    raw: dict = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        key = key.strip()
        if not sep or not key:
            raise InvalidArgumentError(f"{path}:{ln}: expected key=value")
        if key in raw:
            raise InvalidArgumentError(f"{path}:{ln}: duplicate key {key!r}")
        raw[key] = value.strip()
    return raw


def gather_options(args, allowed: dict) -> dict:
    raw = read_config(args.config) if args.config else {}
    for item in args.params or []:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise InvalidArgumentError(f"--params wants KEY=VALUE, got {item!r}")
        raw[key.strip()] = value.strip()
    options = {}
    for key, text in raw.items():
        if key not in allowed:
            raise InvalidArgumentError(f"unknown config key {key!r}")
        try:
            options[key] = allowed[key](text)
        except ValueError as exc:
            raise InvalidArgumentError(f"bad value for {key!r}: {text!r}") from exc
    return options


def forest_config_from(options: dict, base: ForestConfig | None = None) -> ForestConfig:
    """Pop forest keys out of `options` and overlay them on `base`."""
    base = base if base is not None else ForestConfig()
    svm_kw = {k: options.pop(k) for k in SVM_KEYS if k in options}
    forest_kw = {k: options.pop(k) for k in list(options) if k in FOREST_KEYS}
    svm = replace(base.svm, **svm_kw) if svm_kw else base.svm
    return replace(base, svm=svm, **forest_kw)


# ---------------------------------------------------------------- subcommands

def cmd_train(args) -> int:
    cfg = forest_config_from(gather_options(args, FOREST_KEYS))
    data = load_csv(args.data)
    forest = train_forest(data, cfg)
    save_forest(forest, args.out)
    depths = [tree_depth(t) for t in forest.trees]
    preds = np.where(forest_posterior_batch(forest, data.X) >= cfg.decision_threshold, 1.0, -1.0)
    err = float(np.mean(preds != data.y))
    print(f"trained {len(forest.trees)} trees on {len(data.y)} samples | "
          f"depth min/mean/max = {min(depths)}/{np.mean(depths):.2f}/{max(depths)} | "
          f"training error = {err:.4f}")
    return 0


def cmd_export_paths(args) -> int:
    allowed = {k: FOREST_KEYS[k] for k in SVM_KEYS}
    options = gather_options(args, allowed)
    forest = load_forest(args.model)
    svm = replace(forest.config.svm, **options) if options else forest.config.svm
    model = export_path_svms(forest, load_csv(args.data), svm)
    save_path_model(model, args.out)
    n_prefixes = sum(len(entry.prefixes) for tree in model.trees for entry in tree)
    print(f"exported prefix experts for {len(model.trees)} trees "
          f"({n_prefixes} path stages)")
    return 0


def cmd_adapt(args) -> int:
    if args.method == "path" and not args.paths:
        raise InvalidArgumentError("--method path needs --paths")
    if args.method != "path" and args.paths:
        raise InvalidArgumentError("--paths only applies to --method path")
    options = gather_options(args, {**FOREST_KEYS, **METHOD_KEYS})
    knobs = {k: options.pop(k) for k in list(METHOD_KEYS) if k in options}
    source = load_forest(args.model)
    # adaptation reuses the source model's own config unless overridden
    cfg = forest_config_from(options, base=source.config)
    data = load_csv(args.data)
    if args.method == "node":
        adapted = node_adapt(source, data, knobs.get("node_c1", 1.0),
                             knobs.get("node_c2", 1.0), cfg)
    elif args.method == "path":
        adapted = path_adapt(source, load_path_model(args.paths), data,
                             knobs.get("path_penalty", 1.0), cfg)
    else:
        adapted = tree_adapt(source, data, knobs.get("tree_ratio", 0.5), cfg)
    save_forest(adapted, args.out)
    print(f"adapted model ({adapted.provenance}) written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    forest = load_forest(args.model)
    report = evaluate(forest, load_csv(args.data))
    text = json.dumps(report.to_dict(), sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_bench(args) -> int:
    options = gather_options(args, {**FOREST_KEYS, **METHOD_KEYS, **BENCH_KEYS})
    knobs = {k: options.pop(k) for k in list(METHOD_KEYS) if k in options}
    bench_kw = {k: options.pop(k) for k in list(BENCH_KEYS) if k in options}
    cfg = forest_config_from(options)
    if "family" not in bench_kw:
        raise InvalidArgumentError("bench config needs a family= entry")
    spec = DomainSpec(
        family=bench_kw["family"],
        dim=bench_kw.get("dim", 2),
        prior_pos=bench_kw.get("prior_pos", 0.5),
        noise=bench_kw.get("noise", 1.0),
        n_source=bench_kw.get("n_source", 1000),
        n_target_train=bench_kw.get("n_target_train", 1000),
        n_target_test=bench_kw.get("n_target_test", 1000),
        shift=ShiftSpec(rotation=bench_kw.get("shift_rotation", 0.0),
                        translation=bench_kw.get("shift_translation", ()),
                        scale=bench_kw.get("shift_scale", 1.0)),
        seed=bench_kw.get("data_seed", 0),
    )
    experiment = ExperimentConfig(
        name=bench_kw.get("name", "bench"),
        spec=spec,
        forest=cfg,
        target_fractions=bench_kw.get("target_fractions", (0.05,)),
        methods=bench_kw.get("methods", ("node", "path", "tree")),
        n_repeats=bench_kw.get("n_repeats", 5),
        node_c1=knobs.get("node_c1", 1.0),
        node_c2=knobs.get("node_c2", 1.0),
        path_penalty=knobs.get("path_penalty", 1.0),
        tree_ratio=knobs.get("tree_ratio", 0.5),
    )
    report = run_experiment(experiment)
    if args.out_csv:
        Path(args.out_csv).write_text(report.to_csv())
    if args.out_json:
        Path(args.out_json).write_text(report.to_json() + "\n")
    sys.stdout.write(report.to_csv())
    return 0


# --------------------------------------------------------------------- wiring

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forestadapt",
        description="oblique forests with linear split experts, plus "
                    "node/path/tree model transfer onto a new domain")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_options(sp):
        sp.add_argument("--config", help="flat key=value option file")
        sp.add_argument("--params", action="append", metavar="KEY=VALUE",
                        help="override one option (repeatable)")

    sp = sub.add_parser("train", help="train a forest on a labeled CSV")
    sp.add_argument("--data", required=True, help="CSV with the label first")
    sp.add_argument("--out", required=True, help="where to write the model")
    with_options(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("export-paths",
                        help="train prefix experts for every source tree path")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True, help="the source training CSV")
    sp.add_argument("--out", required=True)
    with_options(sp)
    sp.set_defaults(func=cmd_export_paths)

    sp = sub.add_parser("adapt", help="transfer a model onto target data")
    sp.add_argument("--method", required=True, choices=("node", "path", "tree"))
    sp.add_argument("--model", required=True, help="source forest")
    sp.add_argument("--data", required=True, help="target training CSV")
    sp.add_argument("--out", required=True)
    sp.add_argument("--paths", help="path-expert file (only for --method path)")
    with_options(sp)
    sp.set_defaults(func=cmd_adapt)

    sp = sub.add_parser("eval", help="score a model on a labeled CSV")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", help="also write the metrics JSON here")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("bench", help="run the synthetic shift benchmark")
    sp.add_argument("--out-csv", help="summary table destination")
    sp.add_argument("--out-json", help="per-repeat metric curves destination")
    with_options(sp)
    sp.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except IncompatibleModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except SolverConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ForestAdaptError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
