"""Divergence loss, the softmax pair-likelihood it approximates, cross-entropy, joint objective.

Orientation of the divergence loss: for anchor ``i``, positive ``s`` and any
other index ``j`` the bracketed term is ``d(i, s) - d(i, j)``, i.e. the
negative log-likelihood direction. Minimizing it pulls same-label
embeddings below every other divergence from the anchor. The second
(negative-pair) sum keeps the printed form ``+|S(i)| * sum_k d(i, k)``.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, DimensionError, NumericError
from .numeric import FLOAT, as_mat
from .phi import PhiGrads, pairwise_divergence, pairwise_divergence_backward

log = logging.getLogger(__name__)

UNIT_NORM_TOL = 1e-9
PROB_CLAMP = 1.0 - 1e-12


@dataclass
class PairSets:
    """Per-anchor positive (same label) and negative (other label) index arrays."""

    positives: list
    negatives: list
    batch_size: int

    def masks(self):
        n = self.batch_size
        pos = np.zeros((n, n), dtype=bool)
        neg = np.zeros((n, n), dtype=bool)
        for i in range(n):
            pos[i, self.positives[i]] = True
            neg[i, self.negatives[i]] = True
        return pos, neg


def build_pair_sets(labels):
    """S(i) = same label, j != i; K(i) = different label."""
    labels = np.asarray(labels)
    n = labels.shape[0]
    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    diff = labels[:, None] != labels[None, :]
    idx = np.arange(n)
    return PairSets([idx[same[i]] for i in range(n)], [idx[diff[i]] for i in range(n)], n)


@dataclass
class LossOutput:
    value: float
    grad_embeddings: np.ndarray
    grad_phi: object = None
    terms: dict = field(default_factory=dict)


def _check_unit_rows(Z):
    norms = np.sqrt(np.einsum("ij,ij->i", Z, Z))
    bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)
    if bad.size:
        raise DegenerateInputError(
            f"rows {bad.tolist()} are not unit-norm (norms {norms[bad].tolist()})"
        )


def divergence_weights(D, pos, neg, clamp_hinge=False):
    """Coefficient matrix W with loss = sum(W * D), plus the two partial sums.

    Without the hinge the loss is linear in D and W follows in closed form:
    sum_{j != i,s} (D_is - D_ij) = (n - 1) D_is - sum_{j != i} D_ij.
    """
    n = D.shape[0]
    s_size = pos.sum(axis=1).astype(FLOAT)
    k_size = neg.sum(axis=1).astype(FLOAT)
    W_neg = s_size[:, None] * neg
    negative_term = float(np.sum(W_neg * D))

    if not clamp_hinge:
        offdiag = ~np.eye(n, dtype=bool)
        W_pair = ((n - 1) * k_size[:, None] * pos
                  - (k_size * s_size)[:, None] * offdiag)
        pair_term = float(np.sum(W_pair * D))
    else:
        # T[i, s, j] = D_is - D_ij over s in S(i), j not in {i, s}
        T = D[:, :, None] - D[:, None, :]
        valid = pos[:, :, None] & ~np.eye(n, dtype=bool)[None, :, :]
        valid &= ~np.eye(n, dtype=bool)[:, None, :]
        active = valid & (T > 0)
        weighted = k_size[:, None, None] * active
        pair_term = float(np.sum(weighted * T))
        W_pair = weighted.sum(axis=2) - weighted.sum(axis=1)
    return W_pair + W_neg, pair_term, negative_term


def divergence_loss(phi, Z, pairs, clamp_hinge=False, normalize=True, require_unit_norm=True):
    """Divergence loss over all anchor/positive/other triples of a batch.

    With ``normalize`` the total is divided by ``sum_i |S(i)| |K(i)|`` so the
    loss weight has a batch-size independent meaning; ``normalize=False``
    gives the raw weighted sum. ``require_unit_norm=False`` lifts the
    unit-norm precondition (finite-difference probes step off the sphere).
    """
    Z = as_mat(Z, "Z")
    n = Z.shape[0]
    if n < 2:
        raise DimensionError("divergence loss needs at least 2 embeddings")
    if pairs.batch_size != n:
        raise DimensionError(f"pair sets built for {pairs.batch_size} rows, got {n}")
    if require_unit_norm:
        _check_unit_rows(Z)

    pos, neg = pairs.masks()
    norm = float(np.sum(pos.sum(axis=1) * neg.sum(axis=1))) if normalize else 1.0
    if norm == 0.0:
        return LossOutput(0.0, np.zeros_like(Z), PhiGrads.zeros(phi),
                          {"pair_term": 0.0, "negative_term": 0.0, "normalizer": 0.0})

    D = pairwise_divergence(phi, Z)
    W, pair_term, negative_term = divergence_weights(D, pos, neg, clamp_hinge)
    W = W / norm
    value = (pair_term + negative_term) / norm
    if not np.isfinite(value):
        raise NumericError("divergence loss is not finite")
    dZ, _, grads = pairwise_divergence_backward(phi, W, Z)
    return LossOutput(value, dZ, grads, {
        "pair_term": pair_term / norm,
        "negative_term": negative_term / norm,
        "normalizer": norm,
    })


def _logsumexp(a, axis):
    m = np.max(a, axis=axis, keepdims=True)
    return np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(a - m), axis=axis))


def pair_log_probs(G):
    """log p(i, j) from the similarity matrix G, softmax over j != i in each row."""
    G = np.array(G, dtype=FLOAT)
    np.fill_diagonal(G, -np.inf)
    return G - _logsumexp(G, axis=1)[:, None]


def softmax_pair_loss(Z, pairs, clamp_counter=None):
    """Negative log-likelihood of the softmax pair model (value only).

    p(i, j) = exp(z_i . z_j) / sum_{l != i} exp(z_i . z_l). Probabilities
    that round to 1 are clamped to 1 - 1e-12; ``clamp_counter`` (a
    ``collections.Counter`` or dict) records how often.
    """
    Z = as_mat(Z, "Z")
    n = Z.shape[0]
    if n < 3:
        raise DimensionError("softmax pair loss needs at least 3 embeddings")
    _check_unit_rows(Z)

    log_p = pair_log_probs(Z @ Z.T)
    pos, neg = pairs.masks()
    s_size = pos.sum(axis=1)
    k_size = neg.sum(axis=1)

    total = 0.0
    for i in range(n):
        if s_size[i] and k_size[i]:
            total -= k_size[i] * np.sum(log_p[i, pos[i]])
            p_neg = np.exp(log_p[i, neg[i]])
            clamped = p_neg > PROB_CLAMP
            if clamped.any():
                log.warning("anchor %d: %d probabilities clamped to 1 - 1e-12", i, clamped.sum())
                if clamp_counter is not None:
                    clamp_counter["clamped"] = clamp_counter.get("clamped", 0) + int(clamped.sum())
                p_neg = np.minimum(p_neg, PROB_CLAMP)
            total -= s_size[i] * np.sum(np.log1p(-p_neg))
    return float(total)


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy; the gradient is taken w.r.t. the logits."""
    logits = as_mat(logits, "logits")
    labels = np.asarray(labels)
    n, C = logits.shape
    if labels.shape != (n,):
        raise DimensionError(f"expected {n} labels, got shape {labels.shape}")
    if np.any(labels < 0) or np.any(labels >= C):
        raise ValueError(f"labels must lie in [0, {C})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(n)
    value = float(-log_probs[rows, labels].mean())
    grad = np.exp(log_probs)
    grad[rows, labels] -= 1.0
    grad /= n
    return LossOutput(value, grad)


@dataclass
class JointLoss:
    """ce + gamma * div. The two gradients live on different tensors
    (logits vs. normalized embeddings), so they are kept side by side."""

    value: float
    grad_logits: np.ndarray
    grad_embeddings: object = None
    grad_phi: object = None


def joint_loss(ce, div, gamma=1.0):
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if gamma == 0 or div is None:
        return JointLoss(ce.value, ce.grad_embeddings)
    grad_phi = div.grad_phi.scaled(gamma) if div.grad_phi is not None else None
    return JointLoss(ce.value + gamma * div.value, ce.grad_embeddings,
                     gamma * div.grad_embeddings, grad_phi)
