"""Match/non-match classification of point pairs with a learned or fixed distance.

Every matcher sees the same inputs: each 2-D point is lifted onto the unit
sphere in R^3 by ``(x, y, 1) / ||(x, y, 1)||`` and a distance d(left, right)
is thresholded. Fixed metrics have nothing to fit but the threshold; the
learned matcher first fits phi on the support pairs with the divergence
loss, each support pair forming its own class.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .datasets import derangement, make_nonlinear_matching
from .evaluate import DISTANCES, DistanceKind, distance_matrix
from .losses import build_pair_sets, divergence_loss
from .numeric import AdamState, adam_step, spawn_rngs
from .phi import GnmPhi


@dataclass
class MatchingConfig:
    grid_size: int = 20
    noise: float = 0.02
    seed: int = 0
    mapping: str = "nonlinear"
    m: int = 64
    eps_quad: float = 1e-3
    epochs: int = 500
    lr: float = 3e-3
    weight_decay: float = 1e-4
    batch_pairs: int = 32
    clamp_hinge: bool = False
    metrics: list = field(default_factory=lambda: list(DISTANCES))

    def __post_init__(self):
        unknown = set(self.metrics) - set(DISTANCES)
        if unknown:
            raise ValueError(f"unknown metrics {sorted(unknown)}")
        if self.batch_pairs < 2 or self.epochs < 1:
            raise ValueError("batch_pairs must be >= 2 and epochs >= 1")


def lift(points):
    P = np.asarray(points, dtype=float)
    Z = np.column_stack([P, np.ones(P.shape[0])])
    return Z / np.linalg.norm(Z, axis=1, keepdims=True)


def pair_distances(kind, left, right):
    """d(left_k, right_k) for aligned rows."""
    return np.diag(distance_matrix(kind, lift(left), lift(right))).copy()


def fit_threshold(d_match, d_nonmatch):
    """Threshold tau (predict match iff d <= tau) maximizing accuracy on the given pairs."""
    d = np.concatenate([d_match, d_nonmatch])
    is_match = np.concatenate([np.ones(len(d_match), bool), np.zeros(len(d_nonmatch), bool)])
    order = np.argsort(d, kind="stable")
    d, is_match = d[order], is_match[order]
    # accuracy with tau just above d[i]: matches at or below i plus non-matches above i
    correct = np.cumsum(is_match) + (np.sum(~is_match) - np.cumsum(~is_match))
    # a cut between equal distances is not realizable
    correct[:-1][d[:-1] == d[1:]] = -1
    best = int(np.argmax(correct))
    none_accepted = np.sum(~is_match)
    if none_accepted >= correct[best]:
        return float(d[0] - 1.0), none_accepted / d.size
    tau = d[best] if best == d.size - 1 else 0.5 * (d[best] + d[best + 1])
    return float(tau), correct[best] / d.size


def train_matching_phi(task, cfg):
    """Fit phi on the support pairs; returns the phi and the per-epoch mean loss."""
    phi_rng, shuffle_rng = spawn_rngs(cfg.seed, 2)
    phi = GnmPhi.init(cfg.m, 3, phi_rng, cfg.eps_quad)
    states = {name: AdamState.zeros_like(getattr(phi, name), name=f"phi.{name}")
              for name in ("beta", "bias")}
    L, R = lift(task.support_left), lift(task.support_right)
    n = L.shape[0]
    losses = []
    for _ in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_pairs):
            idx = order[start:start + cfg.batch_pairs]
            if len(idx) < 2:
                continue
            Z = np.vstack([L[idx], R[idx]])
            labels = np.tile(np.arange(len(idx)), 2)
            out = divergence_loss(phi, Z, build_pair_sets(labels), cfg.clamp_hinge)
            adam_step(phi.beta, out.grad_phi.d_beta, states["beta"], cfg.lr, cfg.weight_decay)
            adam_step(phi.bias, out.grad_phi.d_bias, states["bias"], cfg.lr, cfg.weight_decay)
            total += out.value * len(idx)
        losses.append(total / n)
    return phi, losses


def run_matching(cfg, task=None):
    """Fit and score one matcher per metric; returns a JSON-ready dict."""
    if task is None:
        task = make_nonlinear_matching(cfg.grid_size, cfg.noise, cfg.seed, cfg.mapping)
    # negatives for threshold fitting: support lefts against deranged support rights
    (neg_rng,) = spawn_rngs(cfg.seed + 1, 1)
    perm = derangement(task.support_left.shape[0], neg_rng)

    rows = {}
    for tag in cfg.metrics:
        kind = DistanceKind(tag)
        if tag == "learned_bregman":
            phi, _ = train_matching_phi(task, cfg)
            kind = kind.with_phi(phi)
        tau, support_acc = fit_threshold(
            pair_distances(kind, task.support_left, task.support_right),
            pair_distances(kind, task.support_left, task.support_right[perm]))
        d_query = pair_distances(kind, task.query_left, task.query_right)
        pred = d_query <= tau
        rows[tag] = {
            "threshold": tau,
            "support_accuracy": float(support_acc),
            "query_accuracy": float(np.mean(pred == task.query_labels.astype(bool))),
        }

    fixed = {k: v["query_accuracy"] for k, v in rows.items() if k != "learned_bregman"}
    result = {"config": asdict(cfg), "metrics": rows}
    if "learned_bregman" in rows and fixed:
        best = max(sorted(fixed), key=lambda k: fixed[k])
        result["best_fixed"] = best
        result["gap"] = rows["learned_bregman"]["query_accuracy"] - fixed[best]
    return result


def result_json(result):
    return json.dumps(result, sort_keys=True, indent=2)


def result_csv(result):
    lines = ["metric,support_accuracy,query_accuracy,threshold"]
    for tag in sorted(result["metrics"]):
        r = result["metrics"][tag]
        lines.append(f"{tag},{r['support_accuracy']!r},{r['query_accuracy']!r},{r['threshold']!r}")
    return "\n".join(lines) + "\n"
