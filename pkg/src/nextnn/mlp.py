"""Dense feed-forward networks on a flat parameter vector.

Forward evaluation, per-sample weight Jacobians (one backpropagation pass
per sample, vectorized over the batch), and the gradient of the summed
local loss. All functions are pure and safe to call concurrently.

Flat layout
-----------
Parameters are stored layer by layer. For a layer with ``fan_in`` inputs
and ``fan_out`` outputs the ``(fan_in, fan_out)`` weight matrix comes
first in row-major order, followed by the ``fan_out`` bias terms. Row
``p`` of a weight matrix therefore holds the outgoing weights of source
neuron ``p``, so per-neuron groups are contiguous index ranges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import Dataset
from .objectives import Loss

__all__ = [
    "NetArch",
    "ForwardResult",
    "init_weights",
    "forward",
    "weight_jacobian",
    "jacobian_matrix",
    "local_gradient",
    "local_cost",
    "neuron_groups",
]

OUTPUT_ACTIVATIONS = ("tanh", "sigmoid", "identity")


@dataclass(frozen=True)
class NetArch:
    """Shape of a single-output dense network with tanh hidden units."""

    input_dim: int
    hidden: tuple[int, ...] = ()
    output_activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1 or any(h < 1 for h in self.hidden):
            raise ValueError("all layer widths must be at least 1")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"output_activation must be one of {OUTPUT_ACTIVATIONS}")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, 1)

    @property
    def num_params(self) -> int:
        dims = self.layer_dims
        return sum((dims[k] + 1) * dims[k + 1] for k in range(len(dims) - 1))


@dataclass(frozen=True)
class ForwardResult:
    """Network output and the output neuron's pre-activation value."""

    output: np.ndarray | float
    pre_activation: np.ndarray | float


def init_weights(arch: NetArch, seed) -> np.ndarray:
    """Normalized uniform (Glorot) initialization with zero biases.

    Each layer's weights are drawn uniformly from
    ``+/- sqrt(6 / (fan_in + fan_out))``; deterministic per seed.
    """
    rng = np.random.default_rng(seed)
    dims = arch.layer_dims
    parts = []
    for k in range(len(dims) - 1):
        fan_in, fan_out = dims[k], dims[k + 1]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        parts.append(rng.uniform(-limit, limit, size=fan_in * fan_out))
        parts.append(np.zeros(fan_out))
    return np.concatenate(parts)


def unpack_weights(arch: NetArch, w: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views of the flat vector as per-layer ``(W, b)`` pairs."""
    w = np.asarray(w, dtype=float)
    if w.shape != (arch.num_params,):
        raise ValueError(f"expected {arch.num_params} parameters, got shape {w.shape}")
    dims = arch.layer_dims
    layers = []
    offset = 0
    for k in range(len(dims) - 1):
        fan_in, fan_out = dims[k], dims[k + 1]
        mat = w[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        bias = w[offset:offset + fan_out]
        offset += fan_out
        layers.append((mat, bias))
    return layers


def _as_batch(arch: NetArch, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != arch.input_dim:
        raise ValueError(f"input must have {arch.input_dim} features, got shape {x.shape}")
    return x, single


def _check_finite(w: np.ndarray) -> None:
    if not np.all(np.isfinite(w)):
        raise ValueError("weight vector contains non-finite entries")


def _forward_pass(layers, x):
    """Hidden activations (including the input) and the output pre-activation."""
    acts = [x]
    a = x
    for mat, bias in layers[:-1]:
        a = np.tanh(a @ mat + bias)
        acts.append(a)
    mat, bias = layers[-1]
    f_l = (a @ mat + bias)[:, 0]
    return acts, f_l


def _squash(arch: NetArch, f_l: np.ndarray) -> np.ndarray:
    if arch.output_activation == "tanh":
        return np.tanh(f_l)
    if arch.output_activation == "sigmoid":
        return 1.0 / (1.0 + np.exp(-f_l))
    return f_l


def _squash_derivative(arch: NetArch, f: np.ndarray) -> np.ndarray:
    # Derivative written in terms of the already-squashed output f.
    if arch.output_activation == "tanh":
        return 1.0 - f * f
    if arch.output_activation == "sigmoid":
        return f * (1.0 - f)
    return np.ones_like(f)


def forward(arch: NetArch, w: np.ndarray, x) -> ForwardResult:
    """Evaluate the network on one input vector or a batch of rows."""
    _check_finite(np.asarray(w, dtype=float))
    x, single = _as_batch(arch, x)
    layers = unpack_weights(arch, w)
    _, f_l = _forward_pass(layers, x)
    f = _squash(arch, f_l)
    if single:
        return ForwardResult(float(f[0]), float(f_l[0]))
    return ForwardResult(f, f_l)


def jacobian_matrix(arch: NetArch, w: np.ndarray, x, preactivation: bool = False) -> np.ndarray:
    """Per-sample gradients of the network output, stacked as ``(N, Q)``.

    Parameters
    ----------
    arch, w, x
        Network, flat parameters, and an ``(N, d)`` input batch.
    preactivation : bool
        When true, differentiate the output neuron's pre-activation
        instead of the squashed output.

    Returns
    -------
    ndarray
        Row ``m`` is the gradient of the output at sample ``m`` with
        respect to every parameter, in flat-layout order.
    """
    _check_finite(np.asarray(w, dtype=float))
    x, _ = _as_batch(arch, x)
    layers = unpack_weights(arch, w)
    acts, f_l = _forward_pass(layers, x)
    n = x.shape[0]
    jac = np.empty((n, arch.num_params))
    if preactivation:
        delta = np.ones((n, 1))
    else:
        f = _squash(arch, f_l)
        delta = _squash_derivative(arch, f)[:, None]

    # Walk the layers backwards, filling each layer's slice of the flat layout.
    offsets = []
    pos = 0
    for mat, bias in layers:
        offsets.append(pos)
        pos += mat.size + bias.size
    for k in range(len(layers) - 1, -1, -1):
        mat, bias = layers[k]
        a_prev = acts[k]
        start = offsets[k]
        grads_w = a_prev[:, :, None] * delta[:, None, :]
        jac[:, start:start + mat.size] = grads_w.reshape(n, mat.size)
        jac[:, start + mat.size:start + mat.size + bias.size] = delta
        if k > 0:
            delta = (delta @ mat.T) * (1.0 - a_prev * a_prev)
    return jac


def weight_jacobian(arch: NetArch, w: np.ndarray, x, preactivation: bool = False) -> np.ndarray:
    """Gradient of the output for one input vector; one backprop pass."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("weight_jacobian expects a single input vector")
    return jacobian_matrix(arch, w, x[None, :], preactivation=preactivation)[0]


def _output_cotangent(arch: NetArch, loss: Loss, f: np.ndarray, f_l: np.ndarray, d: np.ndarray) -> np.ndarray:
    """d(sum of losses)/d(pre-activation), per sample."""
    if loss is Loss.SQUARED:
        return 2.0 * (f - d) * _squash_derivative(arch, f)
    if loss is Loss.CROSS_ENTROPY:
        if arch.output_activation != "sigmoid":
            raise ValueError("cross-entropy loss requires a sigmoid output neuron")
        if not np.all((d == 0.0) | (d == 1.0)):
            raise ValueError("cross-entropy targets must be 0 or 1")
        # The sigmoid cancels the log derivative: d l / d f_L = f - d.
        return f - d
    raise ValueError(f"unknown loss {loss!r}")


def local_gradient(arch: NetArch, w: np.ndarray, data: Dataset, loss: Loss) -> np.ndarray:
    """Gradient of the summed local loss ``g_i(w)`` over one dataset.

    One vectorized backpropagation pass. An empty dataset contributes a
    zero vector.
    """
    _check_finite(np.asarray(w, dtype=float))
    grad = np.zeros(arch.num_params)
    if len(data) == 0:
        return grad
    x, _ = _as_batch(arch, data.inputs)
    layers = unpack_weights(arch, w)
    acts, f_l = _forward_pass(layers, x)
    f = _squash(arch, f_l)
    delta = _output_cotangent(arch, loss, f, f_l, data.targets)[:, None]

    offsets = []
    pos = 0
    for mat, bias in layers:
        offsets.append(pos)
        pos += mat.size + bias.size
    for k in range(len(layers) - 1, -1, -1):
        mat, bias = layers[k]
        a_prev = acts[k]
        start = offsets[k]
        grad[start:start + mat.size] = (a_prev.T @ delta).reshape(mat.size)
        grad[start + mat.size:start + mat.size + bias.size] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ mat.T) * (1.0 - a_prev * a_prev)
    return grad


def local_cost(arch: NetArch, w: np.ndarray, data: Dataset, loss: Loss) -> float:
    """Summed local loss ``g_i(w)`` over one dataset."""
    from .objectives import PRED_CLAMP

    if len(data) == 0:
        return 0.0
    f = forward(arch, w, data.inputs).output
    d = data.targets
    if loss is Loss.SQUARED:
        return float(np.sum((d - f) ** 2))
    if loss is Loss.CROSS_ENTROPY:
        if arch.output_activation != "sigmoid":
            raise ValueError("cross-entropy loss requires a sigmoid output neuron")
        if not np.all((d == 0.0) | (d == 1.0)):
            raise ValueError("cross-entropy targets must be 0 or 1")
        fc = np.clip(f, PRED_CLAMP, 1.0 - PRED_CLAMP)
        return float(np.sum(-d * np.log(fc) - (1.0 - d) * np.log(1.0 - fc)))
    raise ValueError(f"unknown loss {loss!r}")


def neuron_groups(arch: NetArch) -> tuple[tuple[int, int], ...]:
    """Per-neuron index ranges for group-sparse penalties.

    One group per source neuron's outgoing weights (rows of each weight
    matrix) plus one group per layer's bias unit, covering all of
    ``range(Q)`` without overlap.
    """
    dims = arch.layer_dims
    groups = []
    pos = 0
    for k in range(len(dims) - 1):
        fan_in, fan_out = dims[k], dims[k + 1]
        for _ in range(fan_in):
            groups.append((pos, pos + fan_out))
            pos += fan_out
        groups.append((pos, pos + fan_out))  # bias unit of this layer
        pos += fan_out
    return tuple(groups)


def save_weights_csv(path, vectors) -> None:
    """Dump one or more flat weight vectors as CSV rows."""
    arr = np.atleast_2d(np.asarray(vectors, dtype=float))
    np.savetxt(path, arr, delimiter=",")


def load_weights_csv(path) -> np.ndarray:
    """Read weight vectors written by :func:`save_weights_csv`."""
    return np.atleast_2d(np.loadtxt(path, delimiter=","))
