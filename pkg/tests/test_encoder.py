import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bregman_metric.encoder import MlpEncoder, backward, forward, normalize_backward
from bregman_metric.errors import DegenerateInputError, DimensionError
from bregman_metric.numeric import finite_diff_grad, gradient_error


def net(seed=0, dims=(2, 8, 4)):
    rng = np.random.default_rng(seed)
    enc = MlpEncoder.init(list(dims), rng)
    for _, b in enc.layers:
        b[:] = 0.1 * rng.normal(size=b.shape)
    return enc


def test_identity_layer_example():
    z, tape = forward(MlpEncoder([(np.eye(2), np.zeros(2))]), [3.0, 4.0])
    np.testing.assert_allclose(z, [0.6, 0.8], rtol=0, atol=1e-15)
    np.testing.assert_allclose(tape.u, [[3.0, 4.0]])


def test_zero_final_layer_is_degenerate():
    enc = MlpEncoder([(np.ones((2, 3)), np.zeros(3)), (np.zeros((3, 2)), np.zeros(2))])
    with pytest.raises(DegenerateInputError):
        forward(enc, [1.0, 2.0])


def test_unit_norm_output():
    z, _ = forward(net(), np.random.default_rng(1).normal(size=(20, 2)))
    np.testing.assert_allclose(np.linalg.norm(z, axis=1), 1.0, atol=1e-12)


def test_shapes_validated():
    with pytest.raises(DimensionError):
        MlpEncoder([(np.ones((2, 3)), np.zeros(3)), (np.ones((4, 2)), np.zeros(2))])
    with pytest.raises(DimensionError):
        forward(net(), np.ones(3))
    enc = net()
    _, tape = forward(enc, np.ones((2, 2)))
    with pytest.raises(DimensionError):
        backward(MlpEncoder(enc.layers[:1]), tape, grad_z=np.ones((2, 4)))
    with pytest.raises(DimensionError):
        backward(enc, tape, grad_z=np.ones((2, 3)))


def test_init_scales():
    enc = MlpEncoder.init([50, 400, 300], np.random.default_rng(0))
    assert enc.layers[0][0].std() == pytest.approx(np.sqrt(2 / 50), rel=0.03)
    assert enc.layers[1][0].std() == pytest.approx(np.sqrt(1 / 400), rel=0.03)
    assert enc.dims == [50, 400, 300]


def test_upstream_parallel_to_z_has_no_effect():
    enc = net()
    x = np.array([[0.3, -1.2]])
    z, tape = forward(enc, x)
    _, gx = backward(enc, tape, grad_z=3.0 * z)
    np.testing.assert_allclose(gx, 0.0, atol=1e-14)


def test_zero_upstream_zero_gradients():
    enc = net()
    _, tape = forward(enc, np.ones((3, 2)))
    grads, gx = backward(enc, tape, grad_z=np.zeros((3, 4)))
    assert all(np.all(dW == 0) and np.all(db == 0) for dW, db in grads)
    assert np.all(gx == 0)


@given(st.integers(0, 2**32 - 1))
def test_normalize_jacobian_orthogonal_to_u(seed):
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(4, 5)) * rng.uniform(0.1, 10)
    g = rng.normal(size=(4, 5))
    norm = np.linalg.norm(u, axis=1)
    gu = normalize_backward(u / norm[:, None], norm, g)
    assert np.all(np.abs(np.einsum("ij,ij->i", gu, u)) <= 1e-10 * np.linalg.norm(g) * norm)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_all_blocks_finite_difference(seed):
    enc = net(seed, (3, 6, 5, 4))
    rng = np.random.default_rng(seed + 10)
    X = rng.normal(size=(4, 3))
    gz = rng.normal(size=(4, 4))

    def f():
        return float(np.sum(gz * forward(enc, X)[0]))

    _, tape = forward(enc, X)
    grads, gx = backward(enc, tape, grad_z=gz)
    for k, (W, b) in enumerate(enc.layers):
        for analytic, arr in ((grads[k][0], W), (grads[k][1], b)):
            def g(v, arr=arr):
                saved = arr.copy()
                arr[...] = v
                try:
                    return f()
                finally:
                    arr[...] = saved
            assert gradient_error(analytic, finite_diff_grad(g, arr)) <= 1e-5
    num_x = finite_diff_grad(lambda t: float(np.sum(gz * forward(enc, t)[0])), X)
    assert gradient_error(gx, num_x) <= 1e-5


def test_single_vector_backward_squeezes():
    enc = net()
    z, tape = forward(enc, np.array([0.5, -0.5]))
    _, gx = backward(enc, tape, grad_z=np.ones(4))
    assert z.shape == (4,) and gx.shape == (2,)


def test_batch_independence_and_order():
    enc = net()
    X = np.random.default_rng(3).normal(size=(6, 2))
    Z, _ = forward(enc, X)
    rows = np.vstack([forward(enc, x)[0] for x in X])
    np.testing.assert_allclose(rows, Z, rtol=1e-14, atol=1e-15)
    perm = np.random.default_rng(4).permutation(6)
    np.testing.assert_allclose(forward(enc, X[perm])[0], Z[perm], rtol=1e-14, atol=1e-15)
