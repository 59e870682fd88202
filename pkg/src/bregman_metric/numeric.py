"""Small numeric toolkit: vector helpers, Adam, seeded RNG and a finite-difference oracle.

Everything runs in float64. Vectors are 1-D numpy arrays, matrices 2-D
row-major arrays; no extra wrapper types are introduced.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, DimensionError, NumericError

FLOAT = np.float64


def as_vec(v, name="vector"):
    v = np.asarray(v, dtype=FLOAT)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NumericError(f"{name} has non-finite entries")
    return v


def as_mat(a, name="matrix"):
    a = np.asarray(a, dtype=FLOAT)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{name} has non-finite entries")
    return a


def dot(a, b):
    a = as_vec(a, "a")
    b = as_vec(b, "b")
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(a @ b)


def l2_normalize(v):
    """Return ``v / ||v||``; raises DegenerateInputError for the zero vector."""
    v = as_vec(v)
    norm = np.sqrt(v @ v)
    if norm == 0.0:
        raise DegenerateInputError("cannot normalize the zero vector")
    return v / norm


# --------------------------------------------------------------------------
# RNG
# --------------------------------------------------------------------------

def make_rng(seed):
    """PCG64 generator. Same seed gives the same stream on every platform."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def spawn_rngs(seed, count):
    """``count`` statistically independent generators derived from one seed."""
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


# --------------------------------------------------------------------------
# Adam
# --------------------------------------------------------------------------

@dataclass
class AdamState:
    """Moment buffers for one parameter block."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    decoupled: bool = False
    name: str = "params"

    @classmethod
    def zeros_like(cls, params, name="params", **kwargs):
        shape = np.shape(params)
        return cls(np.zeros(shape, FLOAT), np.zeros(shape, FLOAT), name=name, **kwargs)


def adam_step(params, grads, state, lr, weight_decay=0.0):
    """One in-place Adam update of ``params``; returns ``params``.

    Weight decay is an L2 term added to the gradient unless
    ``state.decoupled`` is set, in which case the AdamW form is used.
    """
    grads = np.asarray(grads, dtype=FLOAT)
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise DimensionError(
            f"{state.name}: params {params.shape}, grads {grads.shape}, "
            f"moments {state.first_moment.shape}"
        )
    if not np.all(np.isfinite(grads)):
        raise NumericError(f"non-finite gradient in parameter block '{state.name}'")

    if weight_decay and not state.decoupled:
        grads = grads + weight_decay * params
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    state.first_moment *= b1
    state.first_moment += (1.0 - b1) * grads
    state.second_moment *= b2
    state.second_moment += (1.0 - b2) * grads * grads
    m_hat = state.first_moment / (1.0 - b1**t)
    v_hat = state.second_moment / (1.0 - b2**t)
    if weight_decay and state.decoupled:
        params -= lr * weight_decay * params
    params -= lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params


# --------------------------------------------------------------------------
# finite differences
# --------------------------------------------------------------------------

def finite_diff_grad(f, x, h=1e-5):
    """Central-difference gradient of scalar ``f`` at ``x``.

    The step for coordinate k is ``h * max(1, |x_k|)``. ``x`` may have any
    shape; the result has the same shape.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.array(x, dtype=FLOAT)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        step = h * max(1.0, abs(orig))
        flat[k] = orig + step
        f_plus = f(x)
        flat[k] = orig - step
        f_minus = f(x)
        flat[k] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError(f"function returned a non-finite value at coordinate {k}")
        gflat[k] = (f_plus - f_minus) / (2.0 * step)
    return grad


def gradient_error(analytic, numeric, rtol=1e-5, atol=1e-8):
    """Worst elementwise relative error, with an absolute floor.

    An entry counts as ``|a - n| / max(|a|, |n|, atol / rtol)``, so a
    result <= ``rtol`` means every entry is within ``rtol`` relative or
    ``atol`` absolute.
    """
    a = np.asarray(analytic, dtype=FLOAT).reshape(-1)
    n = np.asarray(numeric, dtype=FLOAT).reshape(-1)
    if a.shape != n.shape:
        raise DimensionError(f"gradient shapes differ: {a.shape} vs {n.shape}")
    if a.size == 0:
        return 0.0
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), atol / rtol)
    return float(np.max(np.abs(a - n) / scale))
