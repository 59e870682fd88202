"""Finite-difference audit of every analytic gradient in the package.

Each check compares one analytic gradient block against central differences
of the matching scalar function and reports the worst elementwise relative
error (absolute floor 1e-8). Shapes are drawn at random up to the given caps.
"""

from dataclasses import dataclass, field

import numpy as np

from . import encoder as enc_mod
from .losses import build_pair_sets, cross_entropy, divergence_loss
from .numeric import finite_diff_grad, gradient_error, make_rng
from .phi import (GnmPhi, _phi_backward, bregman_div, bregman_div_grads, pairwise_divergence,
                  pairwise_divergence_backward, phi_grad, phi_hvp, phi_value, phi_values)
from .trainer import BregmanModel, TrainConfig, compute_gradients

DEFAULT_SIZES = {"n": 6, "d": 8, "m": 5}
TOLERANCE = 1e-5
ATOL = 1e-8


@dataclass
class GradcheckRow:
    block: str
    error: float
    passed: bool


@dataclass
class GradcheckReport:
    rows: list = field(default_factory=list)
    shapes: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(r.passed for r in self.rows)

    @property
    def failures(self):
        return [r.block for r in self.rows if not r.passed]

    def format_table(self):
        width = max(len(r.block) for r in self.rows)
        lines = [f"{'block':<{width}}  worst_rel_err  status"]
        for r in self.rows:
            lines.append(f"{r.block:<{width}}  {r.error:13.3e}  {'ok' if r.passed else 'FAIL'}")
        return "\n".join(lines)


def _with_param(fn, arr, value):
    """Evaluate ``fn()`` with ``arr`` temporarily overwritten by ``value``."""
    saved = arr.copy()
    arr[...] = value
    try:
        return fn()
    finally:
        arr[...] = saved


def _fd_param(fn, arr):
    return finite_diff_grad(lambda v: _with_param(fn, arr, v), arr)


def _fd_eps(phi, fn):
    def f(v):
        saved = phi.eps_quad
        phi.eps_quad = float(v[0])
        try:
            return fn()
        finally:
            phi.eps_quad = saved
    return finite_diff_grad(f, np.array([phi.eps_quad]))


def _unit_rows(rng, n, d):
    Z = rng.normal(size=(n, d))
    return Z / np.linalg.norm(Z, axis=1, keepdims=True)


def _with_random_biases(enc, rng):
    # zero biases can leave a whole ReLU layer dead and the output at u = 0
    for _, b in enc.layers:
        b[:] = 0.5 + 0.1 * rng.normal(size=b.shape)
    return enc


def draw_shapes(rng, sizes):
    return {
        "n": int(rng.integers(3, sizes["n"] + 1)),
        "d": int(rng.integers(2, sizes["d"] + 1)),
        "m": int(rng.integers(1, sizes["m"] + 1)),
        "p": int(rng.integers(2, 5)),
        "hidden": int(rng.integers(2, 7)),
        "classes": int(rng.integers(2, 4)),
    }


def _phi_checks(rng, s):
    phi = GnmPhi(rng.normal(size=(s["m"], s["d"])), rng.normal(size=s["m"]),
                 0.1 + rng.random())
    z, v = rng.normal(size=s["d"]), rng.normal(size=s["d"])
    yield "phi.grad_z", phi_grad(phi, z), finite_diff_grad(lambda t: phi_value(phi, t), z)
    yield ("phi.hvp", phi_hvp(phi, z, v),
           finite_diff_grad(lambda t: float(v @ phi_grad(phi, t)), z))

    value = lambda: phi_value(phi, z)  # noqa: E731
    P = z[None, :]
    _, a = phi_values(phi, P)
    _, pg = _phi_backward(phi, P, a, np.ones(1), np.zeros_like(P))
    yield "phi.beta", pg.d_beta, _fd_param(value, phi.beta)
    yield "phi.bias", pg.d_bias, _fd_param(value, phi.bias)
    yield "phi.eps_quad", np.array([pg.d_eps]), _fd_eps(phi, value)

    x, y = rng.normal(size=s["d"]), rng.normal(size=s["d"])
    g = bregman_div_grads(phi, x, y)
    div = lambda: bregman_div(phi, x, y)  # noqa: E731
    yield "div.x", g.d_x, finite_diff_grad(lambda t: bregman_div(phi, t, y), x)
    yield "div.y", g.d_y, finite_diff_grad(lambda t: bregman_div(phi, x, t), y)
    yield "div.beta", g.d_beta, _fd_param(div, phi.beta)
    yield "div.bias", g.d_bias, _fd_param(div, phi.bias)
    yield "div.eps_quad", np.array([g.d_eps]), _fd_eps(phi, div)

    X = rng.normal(size=(s["n"], s["d"]))
    Y = rng.normal(size=(s["n"] + 1, s["d"]))
    W = rng.normal(size=(s["n"], s["n"] + 1))
    dX, dY, pw = pairwise_divergence_backward(phi, W, X, Y)
    total = lambda: float(np.sum(W * pairwise_divergence(phi, X, Y)))  # noqa: E731
    yield ("pairwise.X", dX,
           finite_diff_grad(lambda t: float(np.sum(W * pairwise_divergence(phi, t, Y))), X))
    yield ("pairwise.Y", dY,
           finite_diff_grad(lambda t: float(np.sum(W * pairwise_divergence(phi, X, t))), Y))
    yield "pairwise.beta", pw.d_beta, _fd_param(total, phi.beta)
    yield "pairwise.bias", pw.d_bias, _fd_param(total, phi.bias)
    yield "pairwise.eps_quad", np.array([pw.d_eps]), _fd_eps(phi, total)


def _loss_checks(rng, s):
    n, C = s["n"], s["classes"]
    logits = rng.normal(size=(n, C))
    labels = rng.integers(0, C, size=n)
    ce = cross_entropy(logits, labels)
    yield ("cross_entropy.logits", ce.grad_embeddings,
           finite_diff_grad(lambda t: cross_entropy(t, labels).value, logits))

    phi = GnmPhi(rng.normal(size=(s["m"], s["d"])), rng.normal(size=s["m"]),
                 0.1 + rng.random())
    pair_labels = rng.permutation(np.arange(n) % 2)
    pairs = build_pair_sets(pair_labels)
    Z = _unit_rows(rng, n, s["d"])
    for hinge in (False, True):
        tag = "div_loss_hinge" if hinge else "div_loss"
        out = divergence_loss(phi, Z, pairs, hinge)
        value = lambda: divergence_loss(phi, Z, pairs, hinge).value  # noqa: E731
        yield (f"{tag}.Z", out.grad_embeddings,
               finite_diff_grad(lambda t: divergence_loss(phi, t, pairs, hinge,
                                                          require_unit_norm=False).value, Z))
        yield f"{tag}.beta", out.grad_phi.d_beta, _fd_param(value, phi.beta)
        yield f"{tag}.bias", out.grad_phi.d_bias, _fd_param(value, phi.bias)
        yield f"{tag}.eps_quad", np.array([out.grad_phi.d_eps]), _fd_eps(phi, value)


def _encoder_checks(rng, s):
    dims = [s["p"], s["hidden"], s["hidden"], s["d"]]
    enc = _with_random_biases(enc_mod.MlpEncoder.init(dims, rng), rng)
    X = rng.normal(size=(s["n"], s["p"]))
    gz = rng.normal(size=(s["n"], s["d"]))
    gu = rng.normal(size=(s["n"], s["d"]))

    def scalar():
        z, tape = enc_mod.forward(enc, X)
        return float(np.sum(gz * z) + np.sum(gu * tape.u))

    _, tape = enc_mod.forward(enc, X)
    grads, grad_x = enc_mod.backward(enc, tape, grad_z=gz, grad_u=gu)
    for k, (W, b) in enumerate(enc.layers):
        yield f"encoder.{k}.W", grads[k][0], _fd_param(scalar, W)
        yield f"encoder.{k}.b", grads[k][1], _fd_param(scalar, b)
    yield "encoder.input", grad_x, _fd_param(scalar, X)


def _joint_checks(rng, s):
    cfg = TrainConfig(gamma=0.5 + rng.random(), m=s["m"], eps_quad=0.05,
                      encoder_dims=[s["hidden"], s["d"]], seed=int(rng.integers(2**31)))
    model = BregmanModel.init(s["p"], s["classes"], cfg)
    _with_random_biases(model.encoder, rng)
    model.phi.bias[:] = rng.normal(size=s["m"])
    X = rng.normal(size=(s["n"], s["p"]))
    y = rng.permutation(np.arange(s["n"]) % s["classes"])
    grads = compute_gradients(model, X, y, cfg)
    value = lambda: compute_gradients(model, X, y, cfg).joint  # noqa: E731
    analytic = {}
    for k, (dW, db) in enumerate(grads.encoder):
        analytic[f"encoder.{k}.W"], analytic[f"encoder.{k}.b"] = dW, db
    analytic.update({"head.W": grads.head_W, "head.b": grads.head_b,
                     "phi.beta": grads.phi.d_beta, "phi.bias": grads.phi.d_bias})
    for name, arr in model.parameter_blocks():
        yield f"joint.{name}", analytic[name], _fd_param(value, arr)


SUITES = (_phi_checks, _loss_checks, _encoder_checks, _joint_checks)


def run_gradcheck(seed=0, sizes=None, corrupt=None, tol=TOLERANCE):
    """Run every suite; ``corrupt`` names a block whose analytic gradient is
    deliberately perturbed (a hook for testing the failure path)."""
    sizes = {**DEFAULT_SIZES, **(sizes or {})}
    rng = make_rng(seed)
    shapes = draw_shapes(rng, sizes)
    report = GradcheckReport(shapes=shapes)
    for suite in SUITES:
        for block, analytic, numeric in suite(rng, shapes):
            analytic = np.asarray(analytic, dtype=float)
            if block == corrupt:
                analytic = analytic + 1e-3 * (1.0 + np.abs(analytic))
            err = gradient_error(analytic, numeric, rtol=tol, atol=ATOL)
            report.rows.append(GradcheckRow(block, float(err), bool(err <= tol)))
    if corrupt is not None and corrupt not in {r.block for r in report.rows}:
        raise ValueError(f"unknown block '{corrupt}'")
    return report
