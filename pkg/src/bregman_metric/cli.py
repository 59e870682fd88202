"""Command-line entry point.

    bregman-metric <train|eval|compare-metrics|sweep|gradcheck> --config PATH
                   [--axis gamma|m --values v1,v2,...] [--model PATH]

Exit codes: 0 ok, 2 configuration or input error, 3 numeric failure,
4 shape mismatch, 5 gradient check failure. BM_THREADS caps worker
processes and BLAS threads (default 1).
"""

import argparse
import logging
import os
import sys

from threadpoolctl import threadpool_limits

from .config import SweepSpec, load_config, parse_config
from .errors import ConfigError, DegenerateInputError, DimensionError, NumericError, ParseError
from .evaluate import DistanceKind, EvalReport
from .experiments import embedding_kfold, evaluate_model, holdout_split, sweep, sweep_csv
from .gradcheck import run_gradcheck
from .matching import result_csv, result_json, run_matching
from .modelfile import ModelFormatError, load_model, save_model
from .trainer import fit

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_SHAPE = 4
EXIT_GRADCHECK = 5

log = logging.getLogger("bregman_metric")


def worker_count():
    raw = os.environ.get("BM_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"BM_THREADS must be a positive integer, got '{raw}'") from None
    if n < 1:
        raise ConfigError(f"BM_THREADS must be a positive integer, got '{raw}'")
    return n


def _training_split(run):
    dataset = run.dataset.load()
    if run.eval.protocol == "holdout":
        train_set, test_set = holdout_split(dataset, run.eval.test_fraction, run.eval.split_seed)
        return dataset, train_set, test_set
    return dataset, dataset, None


def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def cmd_train(run, args):
    _, train_set, _ = _training_split(run)
    history_path = run.output("history")
    history_path.parent.mkdir(parents=True, exist_ok=True)
    model, history = fit(train_set, run.train, history_path=history_path)
    run.output("model").parent.mkdir(parents=True, exist_ok=True)
    save_model(model, run.output("model"), run.train.seed)
    last = history.records[-1]
    print(f"trained {len(history.records)} epochs on {train_set.n} samples: "
          f"ce={last['ce_loss']:.6g} div={last['div_loss']:.6g} joint={last['joint_loss']:.6g}")
    print(f"model   -> {run.output('model')}")
    print(f"history -> {history_path}")
    return EXIT_OK


def cmd_eval(run, args):
    model_path = args.model or run.output("model")
    try:
        model, _ = load_model(model_path)
    except OSError as exc:
        raise ConfigError(f"cannot read model {model_path}: {exc.strerror}") from None
    dataset, train_set, test_set = _training_split(run)
    if model.encoder.input_dim != dataset.feature_dim:
        raise DimensionError(f"model expects {model.encoder.input_dim} features, "
                             f"data has {dataset.feature_dim}")
    if model.class_count < dataset.class_count:
        raise DimensionError(f"model has {model.class_count} classes, data has {dataset.class_count}")

    dist = DistanceKind(run.eval.distance, run.eval.direction)
    k = run.train.knn_k
    if run.eval.protocol == "holdout":
        result = evaluate_model(model, train_set, test_set, k, dist)
        report = EvalReport(result["accuracy"], result["auc"], [result], result["confusion"])
    else:
        report = embedding_kfold(model, dataset, run.eval.folds, run.eval.split_seed, k, dist)
    _write(run.output("report"), report.to_json() + "\n")
    print(f"{run.eval.protocol} {dist.tag}: accuracy={report.accuracy:.6f} auc={report.auc:.6f}")
    print(f"report -> {run.output('report')}")
    return EXIT_OK


def cmd_compare_metrics(run, args):
    result = run_matching(run.matching)
    _write(run.output("comparison_json"), result_json(result) + "\n")
    _write(run.output("comparison_csv"), result_csv(result))
    for tag in sorted(result["metrics"]):
        print(f"{tag:16s} query_accuracy={result['metrics'][tag]['query_accuracy']:.4f}")
    if "gap" in result:
        print(f"learned - best fixed ({result['best_fixed']}) = {result['gap']:+.4f}")
    return EXIT_OK


def _parse_values(text):
    return [v for v in (s.strip() for s in text.split(",")) if v]


def cmd_sweep(run, args):
    spec = run.sweep
    if args.axis is not None or args.values is not None:
        axis = args.axis or spec.axis
        values = _parse_values(args.values) if args.values is not None else spec.values
        try:
            spec = SweepSpec(axis, values, spec.parallel)
        except ValueError as exc:
            raise ConfigError(f"sweep values: {exc}") from None
    if not spec.values:
        raise ConfigError("sweep needs a non-empty list of values")
    workers = worker_count() if spec.parallel else 1
    rows = sweep(run.dataset.load(), run.train, run.eval, spec.axis, spec.values, workers)
    _write(run.output("sweep"), sweep_csv(rows))
    for r in rows:
        print(f"{spec.axis}={r['value']!r}: accuracy={r['accuracy']:.4f} auc={r['auc']:.4f}")
    print(f"sweep -> {run.output('sweep')}")
    return EXIT_OK


def cmd_gradcheck(run, args):
    spec = run.gradcheck
    report = run_gradcheck(spec.seed, spec.sizes, spec.corrupt)
    print(f"shapes: {report.shapes}")
    print(report.format_table())
    if not report.passed:
        print(f"gradient check failed for: {', '.join(report.failures)}", file=sys.stderr)
        return EXIT_GRADCHECK
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "compare-metrics": cmd_compare_metrics,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
}


def build_parser():
    p = argparse.ArgumentParser(prog="bregman-metric", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON run configuration (optional for gradcheck)")
    p.add_argument("--model", help="model file for eval (default: outputs.model of the config)")
    p.add_argument("--axis", choices=("gamma", "m"), help="sweep axis (overrides config)")
    p.add_argument("--values", help="comma-separated sweep values (overrides config)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _run(args):
    if args.config is None:
        if args.command != "gradcheck":
            raise ConfigError(f"'{args.command}' needs --config")
        run = parse_config({})
    else:
        run = load_config(args.config)
    with threadpool_limits(limits=worker_count()):
        return COMMANDS[args.command](run, args)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (NumericError, DegenerateInputError) as exc:
        return _fail(args, EXIT_NUMERIC, "numeric error", exc)
    except (DimensionError, ModelFormatError) as exc:
        return _fail(args, EXIT_SHAPE, "shape error", exc)
    except (ConfigError, ParseError, ValueError, OSError) as exc:
        return _fail(args, EXIT_CONFIG, "config error", exc)


def _fail(args, code, kind, exc):
    print(f"bregman-metric {args.command}: {kind}: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
