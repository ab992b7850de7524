"""A small dense feed-forward network with hand-written backpropagation.

Parameters of an :class:`MLP` live in one contiguous float64 vector; the
per-layer weight and bias arrays are views into it. This keeps the Adam
update a handful of vector operations and makes checkpointing trivial.
"""

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NumericError, ShapeError

ACTIVATIONS = ("tanh", "linear")


class MLP:
    """Fully connected network, layer ``i`` maps ``sizes[i] -> sizes[i + 1]``.

    ``activations[i]`` is applied after layer ``i``. Weights are stored as
    ``(out, in)`` matrices, so a batch ``x`` of shape ``(B, in)`` maps to
    ``x @ W.T + b``.
    """

    def __init__(self, sizes: Sequence[int], activations: Sequence[str], params=None):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ShapeError(f"invalid layer sizes {sizes}")
        if len(activations) != len(sizes) - 1:
            raise ShapeError("need one activation per layer")
        for act in activations:
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        self.sizes = sizes
        self.activations = tuple(activations)
        self.version = 0
        self.bind(np.zeros(self.n_params) if params is None else params)

    @property
    def n_params(self) -> int:
        return sum(o * i + o for i, o in zip(self.sizes[:-1], self.sizes[1:]))

    def bind(self, params: np.ndarray) -> None:
        """Use ``params`` (no copy) as the parameter storage."""
        if params.shape != (self.n_params,) or params.dtype != np.float64:
            raise ShapeError(f"expected float64 vector of length {self.n_params}")
        self.params = params
        self.weights, self.biases = _views(params, self.sizes)
        self.version += 1

    def touch(self) -> None:
        """Mark parameters as modified; invalidates existing tapes."""
        self.version += 1

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)[0]


def _views(buf: np.ndarray, sizes: Sequence[int]):
    weights, biases = [], []
    off = 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        weights.append(buf[off:off + n_out * n_in].reshape(n_out, n_in))
        off += n_out * n_in
        biases.append(buf[off:off + n_out])
        off += n_out
    return weights, biases


@dataclass
class Tape:
    """Activations cached by :func:`forward` for use in :func:`backward`."""

    inputs: list
    outputs: list
    version: int
    owner: int


def init_glorot(sizes: Sequence[int], activations: Sequence[str], rng: np.random.Generator) -> MLP:
    """Glorot-uniform weights in ``+-sqrt(6 / (fan_in + fan_out))``, zero biases."""
    mlp = MLP(sizes, activations)
    for w in mlp.weights:
        n_out, n_in = w.shape
        limit = np.sqrt(6.0 / (n_in + n_out))
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    mlp.touch()
    return mlp


def forward(mlp: MLP, x: np.ndarray) -> tuple[np.ndarray, Tape]:
    """Evaluate on a single vector ``(in,)`` or a batch ``(B, in)``."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.ndim != 2 or h.shape[1] != mlp.sizes[0]:
        raise ShapeError(f"input shape {x.shape} does not match input size {mlp.sizes[0]}")
    inputs, outputs = [], []
    for w, b, act in zip(mlp.weights, mlp.biases, mlp.activations):
        inputs.append(h)
        a = h @ w.T + b
        h = np.tanh(a) if act == "tanh" else a
        outputs.append(h)
    tape = Tape(inputs, outputs, mlp.version, id(mlp))
    return (h[0] if single else h), tape


def backward(mlp: MLP, tape: Tape, grad_out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reverse pass.

    Returns ``(param_grad, input_grad)`` where ``param_grad`` has the layout
    of ``mlp.params`` and ``input_grad`` matches the shape of the forward input.
    """
    if tape.owner != id(mlp) or tape.version != mlp.version:
        raise ValueError("stale tape: parameters changed since the forward pass")
    g = np.asarray(grad_out, dtype=np.float64)
    single = g.ndim == 1
    if single:
        g = g[None, :]
    if g.shape != tape.outputs[-1].shape:
        raise ShapeError(f"output gradient shape {g.shape} != output shape {tape.outputs[-1].shape}")
    grad = np.empty(mlp.n_params)
    gw, gb = _views(grad, mlp.sizes)
    for i in range(len(mlp.weights) - 1, -1, -1):
        if mlp.activations[i] == "tanh":
            y = tape.outputs[i]
            g = g * (1.0 - y * y)
        gw[i][...] = g.T @ tape.inputs[i]
        gb[i][...] = g.sum(axis=0)
        g = g @ mlp.weights[i]
    return grad, (g[0] if single else g)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState, lr: float) -> None:
    """In-place Adam update with bias correction."""
    if params.shape != grad.shape or state.m.shape != params.shape:
        raise ShapeError("parameter, gradient and moment shapes differ")
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grad
    state.v *= b2
    state.v += (1.0 - b2) * grad * grad
    m_hat = state.m / (1.0 - b1 ** state.t)
    v_hat = state.v / (1.0 - b2 ** state.t)
    params -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    if not np.all(np.isfinite(params)):
        raise NumericError("non-finite parameters after Adam step")


def finite_diff_grad(loss_fn: Callable[[np.ndarray], float], params: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of ``loss_fn`` with respect to every entry of ``params``.

    ``params`` is perturbed in place and restored afterwards, so ``loss_fn``
    may close over the same buffer.
    """
    if not (1e-7 <= h <= 1e-3):
        raise ValueError(f"step {h} outside [1e-7, 1e-3]")
    grad = np.empty_like(params, dtype=np.float64)
    for i in range(params.size):
        orig = params.flat[i]
        params.flat[i] = orig + h
        fp = loss_fn(params)
        params.flat[i] = orig - h
        fm = loss_fn(params)
        params.flat[i] = orig
        grad.flat[i] = (fp - fm) / (2.0 * h)
    return grad
