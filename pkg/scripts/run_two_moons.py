"""Two-moons end-to-end: 5-fold retrained kNN accuracy of every distance.

Trains one model per fold with the config's TrainConfig and scores the
held-out fold with each kNN distance on the same embeddings.

    python scripts/run_two_moons.py [--config configs/two_moons.json] [--out runs/two_moons/cv.json]
"""

import argparse
import json
import time
from pathlib import Path

import numpy as np

from bregman_metric.config import load_config
from bregman_metric.evaluate import DISTANCES, DistanceKind, combine_folds, kfold_split
from bregman_metric.experiments import evaluate_model
from bregman_metric.trainer import fit

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--config", type=Path, default=ROOT / "configs" / "two_moons.json")
    p.add_argument("--out", type=Path, default=ROOT / "runs" / "two_moons" / "cv.json")
    args = p.parse_args()

    run = load_config(args.config)
    data = run.dataset.load()
    per_metric = {tag: [] for tag in DISTANCES}
    start = time.perf_counter()
    for i, part in enumerate(kfold_split(data.n, run.eval.folds, run.eval.split_seed)):
        rest = np.setdiff1d(np.arange(data.n), part)
        train_set, test_set = data.subset(rest), data.subset(part)
        model, _ = fit(train_set, run.train)
        for tag in DISTANCES:
            per_metric[tag].append(
                evaluate_model(model, train_set, test_set, run.train.knn_k, DistanceKind(tag)))
        print(f"fold {i}: learned accuracy {per_metric['learned_bregman'][-1]['accuracy']:.4f}")

    summary = {}
    for tag, folds in per_metric.items():
        report = combine_folds(folds, data.class_count)
        summary[tag] = {"accuracy": report.accuracy, "auc": report.auc,
                        "mean_fold_accuracy": report.mean_fold_accuracy}
        print(f"{tag:16s} accuracy={report.accuracy:.4f} auc={report.auc:.4f}")
    print(f"elapsed {time.perf_counter() - start:.1f} s")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
