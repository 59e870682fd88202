"""Joint training of encoder, classifier head and phi (cross-entropy + gamma * divergence loss)."""

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import encoder as enc_mod
from .errors import ConfigError, NumericError
from .losses import build_pair_sets, cross_entropy, divergence_loss, joint_loss
from .numeric import FLOAT, AdamState, adam_step, spawn_rngs
from .phi import GnmPhi

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    gamma: float = 1.0
    m: int = 32
    eps_quad: float = 1e-3
    train_eps: bool = False
    lr: float = 1e-4
    weight_decay: float = 1e-4
    decoupled_weight_decay: bool = False
    batch_size: int = 32
    epochs: int = 300
    seed: int = 0
    knn_k: int = 15
    clamp_hinge: bool = False
    normalize_div: bool = True
    # hidden widths followed by the embedding size; input size comes from the data
    encoder_dims: list = field(default_factory=lambda: [64, 32, 8])

    def __post_init__(self):
        self.encoder_dims = [int(v) for v in self.encoder_dims]
        self.validate()

    def validate(self):
        problems = []
        if self.gamma < 0:
            problems.append("gamma must be >= 0")
        if self.m < 0:
            problems.append("m must be >= 0")
        if self.eps_quad < 0 or (self.m == 0 and self.eps_quad <= 0):
            problems.append("eps_quad must be >= 0, and > 0 when m = 0")
        if self.lr < 0 or self.weight_decay < 0:
            problems.append("lr and weight_decay must be >= 0")
        if self.batch_size < 2:
            problems.append("batch_size must be >= 2")
        if self.epochs < 1:
            problems.append("epochs must be >= 1")
        if self.knn_k < 1:
            problems.append("knn_k must be >= 1")
        if not self.encoder_dims or min(self.encoder_dims) < 1:
            problems.append("encoder_dims must be a non-empty list of positive widths")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def embed_dim(self):
        return self.encoder_dims[-1]


class TrainingError(NumericError):
    def __init__(self, message, epoch=None, batch=None):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"epoch {epoch}, batch {batch}: {message}")


@dataclass
class BregmanModel:
    """Encoder, linear classifier head on the pre-normalization output, and phi."""

    encoder: enc_mod.MlpEncoder
    head_W: np.ndarray
    head_b: np.ndarray
    phi: GnmPhi

    @property
    def class_count(self):
        return self.head_W.shape[1]

    @classmethod
    def init(cls, input_dim, class_count, cfg, seed=None):
        seed = cfg.seed if seed is None else seed
        enc_rng, phi_rng, _ = spawn_rngs(seed, 3)
        encoder = enc_mod.MlpEncoder.init([input_dim] + cfg.encoder_dims, enc_rng)
        d = encoder.output_dim
        head_W = enc_rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, class_count))
        phi = GnmPhi.init(cfg.m, d, phi_rng, cfg.eps_quad)
        return cls(encoder, head_W, np.zeros(class_count), phi)

    def embed(self, X):
        z, _ = enc_mod.forward(self.encoder, np.asarray(X, dtype=FLOAT))
        return z

    def copy(self):
        return BregmanModel(self.encoder.copy(), self.head_W.copy(), self.head_b.copy(),
                            self.phi.copy())

    def parameter_blocks(self):
        """Named views of every parameter array, in serialization order."""
        blocks = []
        for k, (W, b) in enumerate(self.encoder.layers):
            blocks += [(f"encoder.{k}.W", W), (f"encoder.{k}.b", b)]
        blocks += [("head.W", self.head_W), ("head.b", self.head_b),
                   ("phi.beta", self.phi.beta), ("phi.bias", self.phi.bias)]
        return blocks


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def append(self, record):
        for key in ("ce_loss", "div_loss", "joint_loss"):
            if not np.isfinite(record[key]):
                raise NumericError(f"epoch {record['epoch']}: {key} is not finite")
        self.records.append(record)

    def column(self, key):
        return [r[key] for r in self.records]

    def write_jsonl(self, path, cfg=None):
        with open(path, "w", encoding="utf-8") as fh:
            if cfg is not None:
                fh.write(json.dumps({"type": "header", "config": asdict(cfg)}, sort_keys=True) + "\n")
            for r in self.records:
                fh.write(json.dumps(r, sort_keys=True) + "\n")


class Optimizer:
    """One AdamState per parameter block."""

    def __init__(self, model, cfg):
        self.cfg = cfg
        kw = dict(decoupled=cfg.decoupled_weight_decay)
        self.states = {name: AdamState.zeros_like(arr, name=name, **kw)
                       for name, arr in model.parameter_blocks()}
        self.eps_state = AdamState.zeros_like(np.zeros(1), name="phi.eps_quad", **kw)

    def step(self, name, params, grads):
        adam_step(params, grads, self.states[name], self.cfg.lr, self.cfg.weight_decay)


@dataclass
class StepGradients:
    ce: float
    div: float
    joint: float
    encoder: list
    head_W: np.ndarray
    head_b: np.ndarray
    phi: object = None  # PhiGrads, None when the divergence branch is off


def compute_gradients(model, Xb, yb, cfg):
    """Joint loss of one batch and its gradient w.r.t. every parameter block."""
    z, tape = enc_mod.forward(model.encoder, Xb)
    logits = tape.u @ model.head_W + model.head_b
    ce = cross_entropy(logits, yb)

    div = None
    if cfg.gamma > 0 and len(yb) >= 2:
        div = divergence_loss(model.phi, z, build_pair_sets(yb), cfg.clamp_hinge,
                              cfg.normalize_div)
    joint = joint_loss(ce, div, cfg.gamma)
    if not np.isfinite(joint.value):
        raise NumericError("joint loss is not finite")

    g_logits = joint.grad_logits
    layer_grads, _ = enc_mod.backward(model.encoder, tape, grad_z=joint.grad_embeddings,
                                      grad_u=g_logits @ model.head_W.T)
    return StepGradients(ce.value, div.value if div is not None else 0.0, joint.value,
                         layer_grads, tape.u.T @ g_logits, g_logits.sum(axis=0),
                         joint.grad_phi)


def apply_gradients(model, opt, grads, cfg):
    for k, (dW, db) in enumerate(grads.encoder):
        W, b = model.encoder.layers[k]
        opt.step(f"encoder.{k}.W", W, dW)
        opt.step(f"encoder.{k}.b", b, db)
    opt.step("head.W", model.head_W, grads.head_W)
    opt.step("head.b", model.head_b, grads.head_b)
    if grads.phi is not None:
        phi = model.phi
        opt.step("phi.beta", phi.beta, grads.phi.d_beta)
        opt.step("phi.bias", phi.bias, grads.phi.d_bias)
        if cfg.train_eps:
            eps = np.array([phi.eps_quad])
            adam_step(eps, [grads.phi.d_eps], opt.eps_state, cfg.lr, cfg.weight_decay)
            phi.eps_quad = max(float(eps[0]), cfg.eps_quad)


def train_step(model, opt, Xb, yb, cfg):
    """One batch of joint training; returns ``(ce, div, joint)`` measured before the update."""
    grads = compute_gradients(model, Xb, yb, cfg)
    apply_gradients(model, opt, grads, cfg)
    return grads.ce, grads.div, grads.joint


def train_epoch(model, X, y, cfg, rng, opt, epoch=0):
    """One pass over shuffled mini-batches. Updates ``model`` in place."""
    n = X.shape[0]
    order = rng.permutation(n)
    totals = np.zeros(3)
    for b, start in enumerate(range(0, n, cfg.batch_size)):
        idx = order[start:start + cfg.batch_size]
        try:
            losses = train_step(model, opt, X[idx], y[idx], cfg)
        except NumericError as exc:
            raise TrainingError(str(exc), epoch, b) from exc
        totals += len(idx) * np.asarray(losses)
    ce, div, joint = totals / n
    return {"epoch": epoch, "ce_loss": float(ce), "div_loss": float(div),
            "joint_loss": float(joint)}


def fit(dataset, cfg, validation=None, history_path=None):
    """Train a fresh model on ``dataset``; returns ``(model, history)``.

    ``validation`` (a Dataset) adds a per-epoch kNN accuracy to each record.
    """
    cfg.validate()
    X = np.asarray(dataset.features, dtype=FLOAT)
    y = np.asarray(dataset.labels)
    if dataset.class_count < 2:
        log.warning("dataset has a single class; the divergence term is identically zero")
    model = BregmanModel.init(X.shape[1], dataset.class_count, cfg)
    _, _, shuffle_rng = spawn_rngs(cfg.seed, 3)
    opt = Optimizer(model, cfg)
    history = TrainHistory()
    for epoch in range(cfg.epochs):
        record = train_epoch(model, X, y, cfg, shuffle_rng, opt, epoch)
        if validation is not None:
            from .evaluate import DistanceKind, knn_accuracy
            record["val_accuracy"] = knn_accuracy(
                model, dataset, validation, cfg.knn_k, DistanceKind("learned_bregman"))
        history.append(record)
    if history_path is not None:
        history.write_jsonl(history_path, cfg)
    return model, history
