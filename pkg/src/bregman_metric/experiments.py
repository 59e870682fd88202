"""Fit-and-evaluate protocols: held-out split, retrained k-fold, and parameter sweeps."""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .evaluate import DistanceKind, EvalReport, combine_folds, evaluate_split, kfold_split
from .numeric import make_rng
from .trainer import fit

log = logging.getLogger(__name__)


def holdout_split(dataset, test_fraction=0.25, seed=0):
    """Shuffled train/test split; returns ``(train, test)`` Datasets."""
    n = dataset.n
    n_test = int(round(test_fraction * n))
    if not 1 <= n_test < n:
        raise ValueError(f"test_fraction {test_fraction} leaves an empty side for n={n}")
    order = make_rng(seed).permutation(n)
    return (dataset.subset(np.sort(order[n_test:]), f"{dataset.name}:train"),
            dataset.subset(np.sort(order[:n_test]), f"{dataset.name}:test"))


def _attach(dist, model):
    return dist.with_phi(model.phi) if dist.tag == "learned_bregman" else dist


def evaluate_model(model, train_set, test_set, k, dist):
    """kNN of ``test_set`` against ``train_set`` in the model's embedding space."""
    return evaluate_split(model.embed(train_set.features), train_set.labels,
                          model.embed(test_set.features), test_set.labels, k,
                          _attach(dist, model), train_set.class_count)


def embedding_kfold(model, dataset, folds, seed, k, dist):
    """k-fold kNN of an already trained model: each fold is classified
    against the embeddings of the remaining folds (no retraining)."""
    Z = model.embed(dataset.features)
    dist = _attach(dist, model)
    results = []
    for part in kfold_split(dataset.n, folds, seed):
        rest = np.setdiff1d(np.arange(dataset.n), part)
        results.append(evaluate_split(Z[rest], dataset.labels[rest], Z[part],
                                      dataset.labels[part], k, dist, dataset.class_count))
    return combine_folds(results, dataset.class_count)


def cross_validate(dataset, cfg, folds=5, seed=0, dist=None):
    """Retrain from scratch on every training fold and score the held-out fold."""
    dist = dist or DistanceKind("learned_bregman")
    results = []
    for i, part in enumerate(kfold_split(dataset.n, folds, seed)):
        rest = np.setdiff1d(np.arange(dataset.n), part)
        train_set = dataset.subset(rest, f"{dataset.name}:fold{i}:train")
        test_set = dataset.subset(part, f"{dataset.name}:fold{i}:test")
        model, _ = fit(train_set, cfg)
        results.append(evaluate_model(model, train_set, test_set, cfg.knn_k, dist))
        log.info("fold %d: accuracy %.4f", i, results[-1]["accuracy"])
    return combine_folds(results, dataset.class_count)


def run_protocol(dataset, cfg, eval_spec):
    """Full fit + evaluation under the configured protocol."""
    dist = DistanceKind(eval_spec.distance, eval_spec.direction)
    if eval_spec.protocol == "kfold":
        return cross_validate(dataset, cfg, eval_spec.folds, eval_spec.split_seed, dist)
    train_set, test_set = holdout_split(dataset, eval_spec.test_fraction, eval_spec.split_seed)
    model, _ = fit(train_set, cfg)
    result = evaluate_model(model, train_set, test_set, cfg.knn_k, dist)
    return EvalReport(result["accuracy"], result["auc"], [result], result["confusion"])


def _sweep_point(args):
    dataset, cfg, eval_spec, value = args
    report = run_protocol(dataset, cfg, eval_spec)
    return {"value": value, "accuracy": report.accuracy, "auc": report.auc}


def sweep(dataset, cfg, eval_spec, axis, values, workers=1):
    """One full fit + evaluation per value of ``axis``; everything else, the
    seed included, is held fixed. Rows come back sorted by value."""
    if axis not in ("gamma", "m"):
        raise ValueError(f"cannot sweep over '{axis}'")
    if not values:
        raise ValueError("sweep needs at least one value")
    jobs = [(dataset, replace(cfg, **{axis: v}), eval_spec, v) for v in values]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(job) for job in jobs]
    return sorted(rows, key=lambda r: r["value"])


def sweep_csv(rows):
    lines = ["value,accuracy,auc"]
    lines += [f"{r['value']!r},{r['accuracy']!r},{r['auc']!r}" for r in rows]
    return "\n".join(lines) + "\n"
