"""Dense numeric kernel: a two-layer MLP with manual backprop plus Adam.

Everything is 64-bit. The MLP maps a d-dimensional vector back to d
dimensions through one hidden layer; forward passes return an activation
record sufficient to reconstruct exact gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, InternalError, NumericError

Array = np.ndarray

ACTIVATIONS = ("relu", "linear")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8


def _f64(x) -> Array:
    return np.asarray(x, dtype=np.float64)


@dataclass(eq=False)
class MlpParams:
    """Parameters of the two-layer perceptron R^d -> R^d."""

    w1: Array  # (hidden, d)
    b1: Array  # (hidden,)
    w2: Array  # (d, hidden)
    b2: Array  # (d,)
    activation: str = "relu"

    def __post_init__(self):
        self.w1 = _f64(self.w1)
        self.b1 = _f64(self.b1)
        self.w2 = _f64(self.w2)
        self.b2 = _f64(self.b2)
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        hidden, dim = self.w1.shape
        if self.b1.shape != (hidden,) or self.w2.shape != (dim, hidden) or self.b2.shape != (dim,):
            raise ConfigError(
                f"inconsistent MLP shapes: w1 {self.w1.shape}, b1 {self.b1.shape}, "
                f"w2 {self.w2.shape}, b2 {self.b2.shape}"
            )

    @property
    def dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    def copy(self) -> "MlpParams":
        return MlpParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(), self.activation)


@dataclass(eq=False)
class MlpGrads:
    """Parameter gradients, same shapes as MlpParams."""

    w1: Array
    b1: Array
    w2: Array
    b2: Array

    def arrays(self) -> tuple[Array, Array, Array, Array]:
        return self.w1, self.b1, self.w2, self.b2

    def scaled(self, factor: float) -> "MlpGrads":
        return MlpGrads(self.w1 * factor, self.b1 * factor, self.w2 * factor, self.b2 * factor)

    def add_(self, other: "MlpGrads") -> "MlpGrads":
        self.w1 += other.w1
        self.b1 += other.b1
        self.w2 += other.w2
        self.b2 += other.b2
        return self


def grads_zeros(params: MlpParams) -> MlpGrads:
    return MlpGrads(
        np.zeros_like(params.w1),
        np.zeros_like(params.b1),
        np.zeros_like(params.w2),
        np.zeros_like(params.b2),
    )


@dataclass(eq=False)
class MlpCache:
    """Activation record from a forward pass; input to the backward pass."""

    x: Array
    pre1: Array
    act1: Array


def _activate(params: MlpParams, pre: Array) -> Array:
    if params.activation == "relu":
        return np.maximum(pre, 0.0)
    return pre


def _activate_grad(params: MlpParams, pre: Array) -> Array:
    if params.activation == "relu":
        return (pre > 0.0).astype(np.float64)
    return np.ones_like(pre)


def init_mlp(dim: int, hidden: int, seed: int, activation: str = "relu",
             output_bias: float = 0.0) -> MlpParams:
    """Seeded init: scaled-normal first layer, zero output weights.

    The zero output layer makes the initial map a constant (``output_bias``
    on every coordinate), so the downstream Q-function starts flat and the
    initial policy is uniform. A positive bias gives optimistic initial
    values: actions stay in sparse supports until observed data pulls their
    estimates down.
    """
    rng = np.random.default_rng(seed)
    w1 = rng.standard_normal((hidden, dim)) / np.sqrt(dim)
    return MlpParams(
        w1=w1,
        b1=np.zeros(hidden),
        w2=np.zeros((dim, hidden)),
        b2=np.full(dim, float(output_bias)),
        activation=activation,
    )


def mlp_forward(params: MlpParams, x: Array) -> tuple[Array, MlpCache]:
    """Evaluate the MLP on one vector; returns (output, activation record)."""
    x = _f64(x)
    if x.shape != (params.dim,):
        raise ConfigError(f"input shape {x.shape} does not match MLP dim {params.dim}")
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite MLP input")
    pre1 = params.w1 @ x + params.b1
    act1 = _activate(params, pre1)
    out = params.w2 @ act1 + params.b2
    return out, MlpCache(x=x, pre1=pre1, act1=act1)


def mlp_backward(params: MlpParams, cache: MlpCache, grad_output: Array) -> MlpGrads:
    """Exact parameter gradients of (grad_output . output) for one vector."""
    grad_output = _f64(grad_output)
    if cache.x.shape != (params.dim,) or cache.pre1.shape != (params.hidden,):
        raise InternalError("activation cache does not match parameter shapes")
    if grad_output.shape != (params.dim,):
        raise InternalError(f"grad_output shape {grad_output.shape} != ({params.dim},)")
    g_w2 = np.outer(grad_output, cache.act1)
    g_b2 = grad_output.copy()
    d_act1 = params.w2.T @ grad_output
    d_pre1 = d_act1 * _activate_grad(params, cache.pre1)
    g_w1 = np.outer(d_pre1, cache.x)
    g_b1 = d_pre1
    return MlpGrads(g_w1, g_b1, g_w2, g_b2)


def mlp_forward_batch(params: MlpParams, xs: Array) -> tuple[Array, MlpCache]:
    """Row-wise forward over a (batch, d) matrix of inputs."""
    xs = _f64(xs)
    if xs.ndim != 2 or xs.shape[1] != params.dim:
        raise ConfigError(f"batch input shape {xs.shape} does not match MLP dim {params.dim}")
    pre1 = xs @ params.w1.T + params.b1
    act1 = _activate(params, pre1)
    out = act1 @ params.w2.T + params.b2
    return out, MlpCache(x=xs, pre1=pre1, act1=act1)


def mlp_backward_batch(params: MlpParams, cache: MlpCache, grad_outputs: Array) -> MlpGrads:
    """Gradients summed over batch rows; equals summing per-row mlp_backward."""
    grad_outputs = _f64(grad_outputs)
    if cache.x.ndim != 2 or grad_outputs.shape != cache.x.shape:
        raise InternalError("batch cache/grad shapes disagree")
    g_w2 = grad_outputs.T @ cache.act1
    g_b2 = grad_outputs.sum(axis=0)
    d_act1 = grad_outputs @ params.w2
    d_pre1 = d_act1 * _activate_grad(params, cache.pre1)
    g_w1 = d_pre1.T @ cache.x
    g_b1 = d_pre1.sum(axis=0)
    return MlpGrads(g_w1, g_b1, g_w2, g_b2)


@dataclass(eq=False)
class AdamState:
    """Adam moments and constants for one MlpParams instance."""

    first_moment: MlpGrads
    second_moment: MlpGrads
    step_count: int
    learning_rate: float
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPSILON

    def copy(self) -> "AdamState":
        return replace(
            self,
            first_moment=MlpGrads(*(a.copy() for a in self.first_moment.arrays())),
            second_moment=MlpGrads(*(a.copy() for a in self.second_moment.arrays())),
        )


def init_adam(params: MlpParams, learning_rate: float) -> AdamState:
    if learning_rate <= 0:
        raise ConfigError(f"learning_rate must be positive, got {learning_rate}")
    return AdamState(
        first_moment=grads_zeros(params),
        second_moment=grads_zeros(params),
        step_count=0,
        learning_rate=learning_rate,
    )


def adam_step(state: AdamState, params: MlpParams, grads: MlpGrads) -> None:
    """One in-place Adam update with bias correction; rejects non-finite grads."""
    for g in grads.arrays():
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient passed to adam_step")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    param_arrays = (params.w1, params.b1, params.w2, params.b2)
    for p, m, v, g in zip(param_arrays, state.first_moment.arrays(), state.second_moment.arrays(), grads.arrays()):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + state.epsilon)
