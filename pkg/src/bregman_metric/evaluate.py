"""kNN with pluggable distances, accuracy, Mann-Whitney ROC-AUC and k-fold splits."""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import DimensionError
from .numeric import FLOAT, make_rng
from .phi import pairwise_divergence

DISTANCES = ("learned_bregman", "sq_euclidean", "cosine_distance", "kl_softmax")
DIRECTIONS = ("query_first", "query_second")


@dataclass
class DistanceKind:
    """Which distance kNN uses. ``direction`` only matters for asymmetric ones:
    ``query_first`` evaluates d(query, reference)."""

    tag: str
    direction: str = "query_first"
    phi: object = None

    def __post_init__(self):
        if self.tag not in DISTANCES:
            raise ValueError(f"unknown distance '{self.tag}', expected one of {DISTANCES}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction '{self.direction}'")

    def with_phi(self, phi):
        return DistanceKind(self.tag, self.direction, phi)


def _log_softmax(A):
    A = A - A.max(axis=1, keepdims=True)
    return A - np.log(np.exp(A).sum(axis=1, keepdims=True))


def kl_softmax_matrix(P, Q):
    """KL(softmax(P_i) || softmax(Q_j)) for every pair of rows."""
    lp = _log_softmax(P)
    lq = _log_softmax(Q)
    p = np.exp(lp)
    return np.einsum("ik,ik->i", p, lp)[:, None] - p @ lq.T


def distance_matrix(kind, Q, R):
    """Distances from every query row of ``Q`` to every reference row of ``R``."""
    Q = np.asarray(Q, dtype=FLOAT)
    R = np.asarray(R, dtype=FLOAT)
    if Q.ndim != 2 or R.ndim != 2 or Q.shape[1] != R.shape[1]:
        raise DimensionError(f"query {Q.shape} and reference {R.shape} do not match")
    first, second = (Q, R) if kind.direction == "query_first" else (R, Q)
    if kind.tag == "sq_euclidean":
        diff = Q[:, None, :] - R[None, :, :]
        return np.einsum("ijk,ijk->ij", diff, diff)
    if kind.tag == "cosine_distance":
        qn = Q / np.linalg.norm(Q, axis=1, keepdims=True)
        rn = R / np.linalg.norm(R, axis=1, keepdims=True)
        return 1.0 - qn @ rn.T
    if kind.tag == "kl_softmax":
        D = kl_softmax_matrix(first, second)
    else:
        if kind.phi is None:
            raise ValueError("learned_bregman distance needs a phi")
        D = pairwise_divergence(kind.phi, first, second)
    return D if kind.direction == "query_first" else D.T


def knn_predict_batch(train_Z, train_y, Q, k, dist, class_count=None):
    """Labels and per-class vote fractions for every query row.

    Neighbours are the k smallest distances with ties going to the lower
    training index; vote ties go to the smaller class id.
    """
    train_y = np.asarray(train_y)
    n_train = train_y.shape[0]
    if k > n_train:
        raise DimensionError(f"k={k} exceeds the {n_train} training points")
    if k < 1:
        raise ValueError("k must be >= 1")
    C = int(train_y.max()) + 1 if class_count is None else class_count
    D = distance_matrix(dist, Q, train_Z)
    nearest = np.argsort(D, axis=1, kind="stable")[:, :k]
    votes = np.zeros((D.shape[0], C))
    rows = np.repeat(np.arange(D.shape[0]), k)
    np.add.at(votes, (rows, train_y[nearest].reshape(-1)), 1.0)
    scores = votes / k
    return np.argmax(votes, axis=1), scores


def knn_predict(train_Z, train_y, query_z, k, dist, class_count=None):
    labels, scores = knn_predict_batch(train_Z, train_y, np.asarray(query_z)[None, :], k,
                                       dist, class_count)
    return int(labels[0]), scores[0]


def accuracy(preds, labels):
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise DimensionError(f"{preds.shape[0]} predictions for {labels.shape[0]} labels")
    if preds.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return int(np.sum(preds == labels)) / preds.size


def roc_auc(scores, labels):
    """Binary AUC, P(score_pos > score_neg) + 0.5 P(equal), via average ranks."""
    scores = np.asarray(scores, dtype=FLOAT)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC is undefined when only one class is present")
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc_multiclass(score_matrix, labels):
    """Macro one-vs-rest AUC over the classes that have both positives and negatives."""
    score_matrix = np.asarray(score_matrix, dtype=FLOAT)
    labels = np.asarray(labels)
    if score_matrix.shape[1] == 2:
        return roc_auc(score_matrix[:, 1], labels == 1)
    aucs = [roc_auc(score_matrix[:, c], labels == c)
            for c in range(score_matrix.shape[1])
            if 0 < np.sum(labels == c) < labels.size]
    if not aucs:
        raise ValueError("AUC is undefined when only one class is present")
    return float(np.mean(aucs))


def kfold_split(n, folds, seed=0):
    """Shuffled partition of range(n) into ``folds`` parts whose sizes differ by <= 1."""
    if folds < 2 or n < folds:
        raise ValueError(f"need 2 <= folds <= n, got folds={folds}, n={n}")
    order = make_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(order, folds)]


def confusion_counts(preds, labels, class_count):
    M = np.zeros((class_count, class_count), dtype=int)
    np.add.at(M, (np.asarray(labels), np.asarray(preds)), 1)
    return M


@dataclass
class EvalReport:
    accuracy: float
    auc: float
    folds: list = field(default_factory=list)
    confusion: list = field(default_factory=list)

    @property
    def mean_fold_accuracy(self):
        return float(np.mean([f["accuracy"] for f in self.folds])) if self.folds else self.accuracy

    def to_dict(self):
        return {"accuracy": self.accuracy, "auc": self.auc, "folds": self.folds,
                "confusion": self.confusion}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def evaluate_split(train_Z, train_y, test_Z, test_y, k, dist, class_count):
    """kNN accuracy/AUC/confusion of one reference/query split, as a dict."""
    preds, scores = knn_predict_batch(train_Z, train_y, test_Z, k, dist, class_count)
    try:
        auc = roc_auc_multiclass(scores, test_y)
    except ValueError:
        auc = float("nan")
    return {
        "n_test": int(len(test_y)),
        "correct": int(np.sum(preds == np.asarray(test_y))),
        "accuracy": accuracy(preds, test_y),
        "auc": auc,
        "confusion": confusion_counts(preds, test_y, class_count).tolist(),
    }


def combine_folds(fold_results, class_count):
    """Pooled accuracy (correct / total), mean AUC and summed confusion."""
    correct = sum(f["correct"] for f in fold_results)
    total = sum(f["n_test"] for f in fold_results)
    aucs = [f["auc"] for f in fold_results if not np.isnan(f["auc"])]
    confusion = np.zeros((class_count, class_count), dtype=int)
    for f in fold_results:
        confusion += np.asarray(f["confusion"], dtype=int)
    return EvalReport(correct / total, float(np.mean(aucs)) if aucs else float("nan"),
                      list(fold_results), confusion.tolist())


def knn_accuracy(model, train_set, test_set, k, dist):
    dist = dist.with_phi(model.phi) if dist.tag == "learned_bregman" else dist
    preds, _ = knn_predict_batch(model.embed(train_set.features), train_set.labels,
                                 model.embed(test_set.features), k, dist,
                                 train_set.class_count)
    return accuracy(preds, test_set.labels)
