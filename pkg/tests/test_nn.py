import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qstate_vae import nn
from qstate_vae.errors import NumericError, ShapeError


def make(sizes, acts, seed=0):
    return nn.init_glorot(sizes, acts, np.random.default_rng(seed))


def test_param_layout_and_views():
    mlp = nn.MLP((3, 2, 1), ("tanh", "linear"))
    assert mlp.n_params == 3 * 2 + 2 + 2 * 1 + 1
    mlp.params[:] = np.arange(mlp.n_params, dtype=float)
    assert np.array_equal(mlp.weights[0], np.arange(6.0).reshape(2, 3))
    assert np.array_equal(mlp.biases[0], [6.0, 7.0])
    assert np.array_equal(mlp.weights[1], [[8.0, 9.0]])
    assert np.array_equal(mlp.biases[1], [10.0])
    with pytest.raises(ShapeError):
        nn.MLP((3,), ())
    with pytest.raises(ShapeError):
        mlp.bind(np.zeros(4))


def test_forward_hand_computed():
    mlp = nn.MLP((2, 2, 1), ("tanh", "linear"))
    mlp.weights[0][...] = [[1.0, 0.0], [0.0, 2.0]]
    mlp.biases[0][...] = [0.0, 1.0]
    mlp.weights[1][...] = [[1.0, -1.0]]
    mlp.biases[1][...] = [0.5]
    x = np.array([0.3, -0.2])
    expected = np.tanh(0.3) - np.tanh(-0.4 + 1.0) + 0.5
    assert mlp(x)[0] == pytest.approx(expected, abs=1e-15)
    batch = np.stack([x, 2 * x])
    assert mlp(batch).shape == (2, 1)
    assert mlp(batch)[0, 0] == pytest.approx(expected, abs=1e-15)


def test_zero_params_give_zero_output():
    mlp = nn.MLP((4, 3, 2), ("tanh", "linear"))
    assert np.array_equal(mlp(np.ones(4)), np.zeros(2))


def test_forward_shape_error():
    with pytest.raises(ShapeError):
        make((4, 2), ("linear",))(np.ones(3))


def test_glorot_bounds():
    mlp = make((16, 8, 2), ("tanh", "linear"), seed=3)
    for w in mlp.weights:
        limit = np.sqrt(6.0 / sum(w.shape))
        assert np.all(np.abs(w) <= limit)
    assert all(np.all(b == 0) for b in mlp.biases)


@pytest.mark.parametrize("sizes", [(3, 1), (4, 5, 2), (16, 16, 8, 4, 2, 6)])
def test_backward_matches_finite_differences(sizes):
    acts = ("tanh",) * (len(sizes) - 2) + ("linear",)
    mlp = make(sizes, acts, seed=len(sizes))
    rng = np.random.default_rng(1)
    x = rng.normal(size=(5, sizes[0]))
    w = rng.normal(size=(5, sizes[-1]))
    out, tape = nn.forward(mlp, x)
    grad, gx = nn.backward(mlp, tape, w)

    def loss(p):
        mlp.touch()
        return float(np.sum(mlp(x) * w))

    fd = nn.finite_diff_grad(loss, mlp.params)
    assert np.max(np.abs(grad - fd)) / max(1.0, np.max(np.abs(fd))) < 1e-7
    # input gradient by central differences
    fdx = np.empty_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += 1e-6
        xm[idx] -= 1e-6
        fdx[idx] = (np.sum(mlp(xp) * w) - np.sum(mlp(xm) * w)) / 2e-6
    assert np.max(np.abs(gx - fdx)) < 1e-7


def test_stale_tape_rejected():
    mlp = make((3, 2), ("linear",))
    _, tape = nn.forward(mlp, np.ones(3))
    mlp.params[0] += 1.0
    mlp.touch()
    with pytest.raises(ValueError):
        nn.backward(mlp, tape, np.ones(2))
    other = make((3, 2), ("linear",))
    _, tape = nn.forward(mlp, np.ones(3))
    with pytest.raises(ValueError):
        nn.backward(other, tape, np.ones(2))


def test_adam_first_step_is_lr_times_sign():
    p = np.array([1.0, -2.0, 3.0])
    g = np.array([0.5, -4.0, 0.0])
    state = nn.AdamState.zeros(3)
    nn.adam_step(p, g, state, 0.1)
    # bias-corrected first step moves every coordinate with non-zero gradient by ~lr
    assert np.allclose(p, [0.9, -1.9, 3.0], atol=1e-6)
    assert state.t == 1


def test_adam_minimises_quadratic():
    target = np.array([0.3, -1.2, 2.0])
    p = np.zeros(3)
    state = nn.AdamState.zeros(3)
    for _ in range(3000):
        nn.adam_step(p, 2 * (p - target), state, 0.01)
    assert np.allclose(p, target, atol=1e-4)


def test_adam_rejects_non_finite():
    with pytest.raises(NumericError):
        nn.adam_step(np.zeros(2), np.array([np.nan, 0.0]), nn.AdamState.zeros(2), 0.1)
    with pytest.raises(ShapeError):
        nn.adam_step(np.zeros(2), np.zeros(3), nn.AdamState.zeros(2), 0.1)


def test_finite_diff_restores_params_and_checks_step():
    p = np.array([1.0, 2.0])
    g = nn.finite_diff_grad(lambda q: float(q @ q), p)
    assert np.allclose(g, [2.0, 4.0], atol=1e-8)
    assert np.array_equal(p, [1.0, 2.0])
    with pytest.raises(ValueError):
        nn.finite_diff_grad(lambda q: 0.0, p, h=1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 6))
def test_backward_property(seed, width, n_out):
    mlp = make((3, width, n_out), ("tanh", "linear"), seed=seed)
    x = np.random.default_rng(seed).normal(size=(2, 3))
    _, tape = nn.forward(mlp, x)
    grad, _ = nn.backward(mlp, tape, np.ones((2, n_out)))
    fd = nn.finite_diff_grad(lambda p: (mlp.touch(), float(mlp(x).sum()))[1], mlp.params)
    assert np.max(np.abs(grad - fd)) < 1e-6
