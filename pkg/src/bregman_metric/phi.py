"""Convex generating function built from Softplus-affine units, and its Bregman divergence.

    phi(z) = sum_j softplus(beta_j . z + b_j) + eps_quad * ||z||^2

Each unit is a convex monotone link applied to an affine map, so the sum is
convex; the quadratic floor makes it strictly convex in every direction
even when the rows of ``beta`` do not span the embedding space.

Two evaluation routes are provided: per-point functions (``phi_value``,
``bregman_div`` ...) that follow the formulas literally, and batched
routes (``pairwise_divergence``, ``pairwise_divergence_backward``) used by
the losses, the trainer and kNN.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvexityError, DimensionError, NumericError
from .numeric import FLOAT, as_mat, as_vec

CLAMP_TOLERANCE = 1e-9


def softplus(x):
    """log(1 + exp(x)) without overflow: max(x, 0) + log1p(exp(-|x|))."""
    x = np.asarray(x, dtype=FLOAT)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return float(out) if out.ndim == 0 else out


def sigmoid(x):
    """Derivative of softplus, evaluated on the branch that cannot overflow."""
    x = np.asarray(x, dtype=FLOAT)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return float(out) if out.ndim == 0 else out


def sigmoid_prime(x):
    """Second derivative of softplus, sigma(x) * (1 - sigma(x))."""
    x = np.asarray(x, dtype=FLOAT)
    e = np.exp(-np.abs(x))
    out = e / (1.0 + e) ** 2
    return float(out) if out.ndim == 0 else out


@dataclass
class GnmPhi:
    """Parameters of phi: ``beta`` (m x d), ``bias`` (m,), ``eps_quad`` >= 0."""

    beta: np.ndarray
    bias: np.ndarray
    eps_quad: float = 1e-3

    def __post_init__(self):
        self.beta = np.array(self.beta, dtype=FLOAT)
        if self.beta.ndim == 1 and self.beta.size == 0:
            self.beta = self.beta.reshape(0, 0)
        self.bias = np.array(self.bias, dtype=FLOAT).reshape(-1)
        self.eps_quad = float(self.eps_quad)
        self.validate()

    def validate(self):
        if self.beta.ndim != 2:
            raise DimensionError(f"beta must be m x d, got shape {self.beta.shape}")
        if self.bias.shape != (self.beta.shape[0],):
            raise DimensionError(f"bias length {self.bias.shape} does not match m={self.m}")
        if self.eps_quad < 0:
            raise ValueError("eps_quad must be >= 0")
        if self.m == 0 and self.eps_quad <= 0:
            raise ValueError("with m = 0 units, eps_quad must be > 0")
        if not (np.all(np.isfinite(self.beta)) and np.all(np.isfinite(self.bias))
                and np.isfinite(self.eps_quad)):
            raise NumericError("phi parameters must be finite")

    @property
    def m(self):
        return self.beta.shape[0]

    @property
    def dim(self):
        return self.beta.shape[1]

    @classmethod
    def quadratic(cls, d, eps_quad=1.0):
        """phi(z) = eps_quad * ||z||^2; with eps_quad = 1 this induces ||x - y||^2."""
        return cls(np.zeros((0, d)), np.zeros(0), eps_quad)

    @classmethod
    def init(cls, m, d, rng, eps_quad=1e-3):
        """Rows of beta ~ N(0, 1/d), biases zero."""
        beta = rng.normal(0.0, 1.0 / np.sqrt(d), size=(m, d))
        return cls(beta, np.zeros(m), eps_quad)

    def copy(self):
        return GnmPhi(self.beta.copy(), self.bias.copy(), self.eps_quad)


@dataclass
class PhiGrads:
    """Gradient w.r.t. the parameters of a GnmPhi."""

    d_beta: np.ndarray
    d_bias: np.ndarray
    d_eps: float

    @classmethod
    def zeros(cls, phi):
        return cls(np.zeros_like(phi.beta), np.zeros_like(phi.bias), 0.0)

    def scaled(self, s):
        return PhiGrads(s * self.d_beta, s * self.d_bias, s * self.d_eps)


@dataclass
class DivGrads:
    """Partials of d_phi(x, y) w.r.t. both arguments and every parameter."""

    d_x: np.ndarray
    d_y: np.ndarray
    d_beta: np.ndarray
    d_bias: np.ndarray
    d_eps: float


def _check_point(phi, z, name="z"):
    z = as_vec(z, name)
    if z.shape[0] != phi.dim:
        raise DimensionError(f"{name} has length {z.shape[0]}, phi expects {phi.dim}")
    return z


# --------------------------------------------------------------------------
# per-point route
# --------------------------------------------------------------------------

def phi_value(phi, z):
    z = _check_point(phi, z)
    a = phi.beta @ z + phi.bias
    return float(np.sum(softplus(a)) + phi.eps_quad * (z @ z))


def phi_grad(phi, z):
    z = _check_point(phi, z)
    a = phi.beta @ z + phi.bias
    return sigmoid(a) @ phi.beta + 2.0 * phi.eps_quad * z


def phi_hvp(phi, z, v):
    """Hessian of phi at ``z`` applied to ``v``."""
    z = _check_point(phi, z)
    v = _check_point(phi, v, "v")
    a = phi.beta @ z + phi.bias
    return (sigmoid_prime(a) * (phi.beta @ v)) @ phi.beta + 2.0 * phi.eps_quad * v


def _clamp(value):
    if value < -CLAMP_TOLERANCE:
        raise ConvexityError(f"Bregman divergence {value:.3e} is negative; phi is not convex")
    return max(value, 0.0)


def bregman_div(phi, x, y):
    """d_phi(x, y) = phi(x) - phi(y) - (x - y) . grad phi(y)."""
    x = _check_point(phi, x, "x")
    y = _check_point(phi, y, "y")
    value = phi_value(phi, x) - phi_value(phi, y) - (x - y) @ phi_grad(phi, y)
    return _clamp(float(value))


def bregman_div_grads(phi, x, y):
    x = _check_point(phi, x, "x")
    y = _check_point(phi, y, "y")
    diff = x - y
    ax = phi.beta @ x + phi.bias
    ay = phi.beta @ y + phi.bias
    sx, sy, spy = sigmoid(ax), sigmoid(ay), sigmoid_prime(ay)
    proj = phi.beta @ diff  # beta_j . (x - y)

    d_x = phi_grad(phi, x) - phi_grad(phi, y)
    d_y = -phi_hvp(phi, y, diff)
    d_bias = sx - sy - spy * proj
    d_beta = (np.outer(sx, x) - np.outer(sy, y)
              - np.outer(spy * proj, y) - np.outer(sy, diff))
    d_eps = float(diff @ diff)
    return DivGrads(d_x, d_y, d_beta, d_bias, d_eps)


# --------------------------------------------------------------------------
# batched route
# --------------------------------------------------------------------------

def _check_points(phi, P, name):
    P = as_mat(P, name)
    if P.shape[1] != phi.dim:
        raise DimensionError(f"{name} has {P.shape[1]} columns, phi expects {phi.dim}")
    return P


def phi_values(phi, P):
    """phi evaluated at every row of ``P``; also returns the pre-activations."""
    a = P @ phi.beta.T + phi.bias
    return softplus(a).sum(axis=1) + phi.eps_quad * np.einsum("ij,ij->i", P, P), a


def phi_grads(phi, P, a=None):
    if a is None:
        a = P @ phi.beta.T + phi.bias
    return sigmoid(a) @ phi.beta + 2.0 * phi.eps_quad * P


def pairwise_divergence(phi, X, Y=None, clamp=True):
    """Matrix D with D[i, j] = d_phi(X[i], Y[j]).

    ``Y`` defaults to ``X``; the diagonal is then exactly zero.
    """
    X = _check_points(phi, X, "X")
    Y = X if Y is None else _check_points(phi, Y, "Y")
    fx, _ = phi_values(phi, X)
    fy, ay = phi_values(phi, Y)
    gy = phi_grads(phi, Y, ay)
    diff = X[:, None, :] - Y[None, :, :]
    D = fx[:, None] - fy[None, :] - np.einsum("ijk,jk->ij", diff, gy)
    if clamp:
        worst = D.min() if D.size else 0.0
        if worst < -CLAMP_TOLERANCE:
            raise ConvexityError(f"Bregman divergence {worst:.3e} is negative; phi is not convex")
        D = np.maximum(D, 0.0)
    return D


def _phi_backward(phi, P, a, w_val, gbar):
    """Backprop of sum_i w_val[i] * phi(P_i) + sum_i gbar_i . grad phi(P_i)."""
    s = sigmoid(a)
    eps = phi.eps_quad
    a_bar = w_val[:, None] * s + sigmoid_prime(a) * (gbar @ phi.beta.T)
    dP = 2.0 * eps * (w_val[:, None] * P + gbar) + a_bar @ phi.beta
    d_beta = s.T @ gbar + a_bar.T @ P
    d_bias = a_bar.sum(axis=0)
    d_eps = float(w_val @ np.einsum("ij,ij->i", P, P) + 2.0 * np.sum(P * gbar))
    return dP, PhiGrads(d_beta, d_bias, d_eps)


def pairwise_divergence_backward(phi, W, X, Y=None):
    """Gradients of ``sum_ij W[i, j] * d_phi(X[i], Y[j])``.

    Returns ``(dX, dY, PhiGrads)``. When ``Y`` is omitted the pairs are taken
    within ``X`` and ``dY`` is already folded into ``dX`` (``dY`` is None).
    """
    same = Y is None
    Y = X if same else Y
    W = np.asarray(W, dtype=FLOAT)
    r = W.sum(axis=1)
    c = W.sum(axis=0)

    _, ax = phi_values(phi, X)
    _, ay = phi_values(phi, Y)
    gy = phi_grads(phi, Y, ay)

    # D_ij = phi(x_i) - phi(y_j) - x_i . g_j + y_j . g_j
    dX = -W @ gy
    gy_bar = c[:, None] * Y - W.T @ X
    dY = c[:, None] * gy

    dX_phi, grads_x = _phi_backward(phi, X, ax, r, np.zeros_like(X))
    dY_phi, grads_y = _phi_backward(phi, Y, ay, -c, gy_bar)
    dX = dX + dX_phi
    dY = dY + dY_phi
    grads = PhiGrads(grads_x.d_beta + grads_y.d_beta,
                     grads_x.d_bias + grads_y.d_bias,
                     grads_x.d_eps + grads_y.d_eps)
    if same:
        return dX + dY, None, grads
    return dX, dY, grads
