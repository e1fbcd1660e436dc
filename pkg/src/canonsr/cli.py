"""Command-line interface: run, sample, eval and bench subcommands.

Exit codes are a stable contract for scripting: 0 success, 2 usage or
configuration errors, 3 data errors.
"""

from __future__ import annotations

import argparse
import sys
import time
from typing import Optional, Sequence

import numpy as np

from .config import OPERATOR_NAMES, RunConfig
from .dataset import (DataError, DoePlan, doe_full_factorial,
                      doe_latin_hypercube, load_csv, oracle_dataset,
                      scale_target_log10, write_points_csv, ORACLE_DIMS)
from .expr import eval_basis_matrix, to_canonical_text
from .fit import ErrorReport, nmse
from .grammar import GrammarError
from .pipeline import TradeoffSet, load_model_json, run_pipeline

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

# acceptance thresholds for the synthetic benchmark suites (percent)
BENCH_TRAIN_THRESHOLD = 5.0
BENCH_TEST_THRESHOLD = 5.0


class ConfigError(ValueError):
    """Raised for malformed config files or bad flag combinations."""


# ---------------------------------------------------------------------------
# config file parsing: flat "key = value" lines with '#' comments
# ---------------------------------------------------------------------------

_INT_KEYS = {"population", "generations", "max_bases", "max_depth",
             "exp_cap", "seed", "sig_figs", "threads"}
_FLOAT_KEYS = {"B", "wb", "wvc"}
_STR_KEYS = {"grammar"}


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    values = {}
    op_weights = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key.startswith("operator.") and key.endswith(".weight"):
            op_name = key[len("operator."):-len(".weight")]
            if op_name not in OPERATOR_NAMES:
                raise ConfigError(f"{source}:{lineno}: unknown operator {op_name!r}")
            if op_name in op_weights:
                raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
            op_weights[op_name] = _parse_value(key, value, float, source, lineno)
            continue
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        if key in _INT_KEYS:
            values[key] = _parse_value(key, value, int, source, lineno)
        elif key in _FLOAT_KEYS:
            values[key] = _parse_value(key, value, float, source, lineno)
        elif key in _STR_KEYS:
            values[key] = value
        else:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
    if op_weights:
        base = RunConfig(**values)
        base.operator_weights.update(op_weights)
        return RunConfig(**{**values, "operator_weights": base.operator_weights})
    try:
        return RunConfig(**values)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def _parse_value(key, value, cast, source, lineno):
    try:
        return cast(value)
    except ValueError:
        raise ConfigError(
            f"{source}:{lineno}: key {key!r} needs a {cast.__name__}, got {value!r}") from None


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, source=path)


# ---------------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------------

def _print_front(ts: TradeoffSet, cfg: RunConfig) -> None:
    header = f"{'id':>4} {'complexity':>11} {'bases':>6} {'train%':>9} {'test%':>9}  model"
    print(header)
    for i, m in enumerate(ts.models):
        test_txt = "-" if m.test_error is None else f"{m.test_error:9.4g}"
        text = to_canonical_text(m, ts.var_names, cfg.sig_figs,
                                 log_scaled=ts.target_log_scaled, B=cfg.B)
        print(f"{i:>4} {m.complexity:>11.4g} {m.n_bases:>6} "
              f"{m.train_error:9.4g} {test_txt:>9}  {text}")


def _progress_printer(every: int):
    def cb(gen: int, total: int, archive_size: int) -> None:
        if gen % every == 0 or gen == total:
            print(f"generation {gen}/{total}: archive holds {archive_size} models")
    return cb


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    train = load_csv(args.train, args.target)
    test = load_csv(args.test, args.target)
    if args.log_target:
        train = scale_target_log10(train)
        test = scale_target_log10(test)
    progress = None if args.quiet else _progress_printer(max(1, cfg.generations // 10))
    ts = run_pipeline(cfg, train, test, out_dir=args.out, progress=progress)
    _print_front(ts, cfg)
    print(f"wrote {len(ts.models)} models to {args.out}")
    return EXIT_OK


def cmd_sample(args) -> int:
    from .dataset import load_centers_csv

    names, centers = load_centers_csv(args.centers)
    plan = DoePlan(centers=centers, dx=args.dx, budget=args.budget)
    if args.mode == "factorial":
        try:
            points = doe_full_factorial(plan)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        rng = np.random.default_rng(args.seed)
        points = doe_latin_hypercube(plan, args.n, rng)
    write_points_csv(names, points, args.out)
    print(f"wrote {points.shape[0]} design points ({points.shape[1]} variables) to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    payload = load_model_json(args.model)
    model = payload["model"]
    ds = load_csv(args.data, payload["target_name"])
    if set(ds.var_names) != set(payload["var_names"]):
        raise DataError(
            f"data variables {sorted(ds.var_names)} do not match the model's "
            f"variables {sorted(payload['var_names'])}")
    order = [ds.var_names.index(name) for name in payload["var_names"]]
    X = ds.X[:, order]

    B = payload["B"]
    pred = np.full(X.shape[0], float(model.coeffs[0]))
    for j, tree in enumerate(model.bases):
        pred = pred + float(model.coeffs[j + 1]) * eval_basis_matrix(tree, X, B)

    y = ds.y
    if payload["target_log_scaled"]:
        if np.any(y <= 0):
            raise DataError("log-scaled model, but data contains targets <= 0")
        y = np.log10(y)
        reported = np.power(10.0, pred)
    else:
        reported = pred
    report = ErrorReport(train_error_pct=model.train_error,
                         test_error_pct=nmse(pred, y, payload["train_reference"]),
                         reference=payload["train_reference"])
    print(f"nmse_pct: {report.test_error_pct!r}")
    print(f"stored_train_error_pct: {report.train_error_pct!r}")

    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write("prediction\n")
        for v in reported:
            fh.write(repr(float(v)) + "\n")
    print(f"wrote {len(reported)} predictions to {args.out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    suite = args.suite
    d = ORACLE_DIMS[suite] or 2
    names = tuple(f"x{i + 1}" for i in range(d))
    centers = np.ones(d)
    train_X = doe_full_factorial(DoePlan(centers=centers, dx=0.1))
    test_X = doe_full_factorial(DoePlan(centers=centers, dx=0.03))
    train = oracle_dataset(suite, train_X, names)
    test = oracle_dataset(suite, test_X, names)

    cfg = RunConfig(population=200, generations=args.generations, seed=args.seed,
                    threads=args.threads)
    progress = None if args.quiet else _progress_printer(max(1, cfg.generations // 10))
    started = time.perf_counter()
    ts = run_pipeline(cfg, train, test, out_dir=args.out, progress=progress)
    elapsed = time.perf_counter() - started

    _print_front(ts, cfg)
    hit = any(m.train_error <= BENCH_TRAIN_THRESHOLD
              and m.test_error is not None and m.test_error <= BENCH_TEST_THRESHOLD
              for m in ts.models)
    verdict = "PASS" if hit else "FAIL"
    print(f"{verdict}: model with train <= {BENCH_TRAIN_THRESHOLD}% and "
          f"test <= {BENCH_TEST_THRESHOLD}% "
          f"{'found' if hit else 'not found'} on suite {suite!r}")
    print(f"wall_clock_s: {elapsed:.1f}  generations: {cfg.generations}  "
          f"train_samples: {train.n_samples}  test_samples: {test.n_samples}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="canonsr",
        description="Evolve canonical-form symbolic models of tabular data.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="full modeling run: evolve, simplify, filter, export")
    p_run.add_argument("--config", help="flat key=value config file")
    p_run.add_argument("--train", required=True, help="training samples CSV")
    p_run.add_argument("--test", required=True, help="testing samples CSV")
    p_run.add_argument("--target", required=True, help="target column name")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, help="override the config seed")
    p_run.add_argument("--threads", type=int,
                       help="evaluation worker cap; 0 = one per CPU (default: config)")
    p_run.add_argument("--log-target", action="store_true",
                       help="log10-scale the target before fitting")
    p_run.add_argument("--quiet", action="store_true")
    p_run.set_defaults(fn=cmd_run)

    p_sample = sub.add_parser("sample", help="emit design-of-experiments sample points")
    p_sample.add_argument("--centers", required=True,
                          help="CSV with a header row and one row of center values")
    p_sample.add_argument("--dx", type=float, default=0.1,
                          help="relative perturbation (default 0.1)")
    p_sample.add_argument("--n", type=int, default=100,
                          help="sample count for lhs mode (default 100)")
    p_sample.add_argument("--mode", choices=("factorial", "lhs"), default="factorial")
    p_sample.add_argument("--budget", type=int, default=10000,
                          help="maximum sample count for factorial mode")
    p_sample.add_argument("--seed", type=int, default=0)
    p_sample.add_argument("--out", required=True, help="output CSV path")
    p_sample.set_defaults(fn=cmd_sample)

    p_eval = sub.add_parser("eval", help="evaluate an exported model on a data CSV")
    p_eval.add_argument("--model", required=True, help="model_<id>.json path")
    p_eval.add_argument("--data", required=True, help="samples CSV")
    p_eval.add_argument("--out", default="predictions.csv", help="predictions CSV path")
    p_eval.set_defaults(fn=cmd_eval)

    p_bench = sub.add_parser("bench", help="desk-scale synthetic benchmark run")
    p_bench.add_argument("--suite", required=True, choices=sorted(ORACLE_DIMS))
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--generations", type=int, default=100)
    p_bench.add_argument("--threads", type=int, default=1,
                         help="evaluation worker cap; 0 = one per CPU")
    p_bench.add_argument("--out", default=None, help="optional export directory")
    p_bench.add_argument("--quiet", action="store_true")
    p_bench.set_defaults(fn=cmd_bench)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, GrammarError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
