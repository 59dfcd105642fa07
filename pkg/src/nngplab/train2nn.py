"""Minimal two-layer network trainer: analytic gradients plus Adam.

The network is bias-free, f(x) = b . s(W x), matching the random-feature
architecture with a single hidden layer, so an RFM fit can be used verbatim
as an initialization.  Standard initialization draws W entries from N(0, 1)
and output weights from N(0, 1/hidden), making the time-zero function a
finite-width sample of the associated Gaussian field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._rng import normals, substream
from .activation import ActivationSpec, eval as act_eval
from .rfm import Dataset, RfmFit

__all__ = [
    "TwoLayerNet",
    "AdamState",
    "forward",
    "forward_batch",
    "grad_mse",
    "adam_init",
    "adam_step",
    "init_standard",
    "init_from_rfm",
    "TrainResult",
    "train",
]


@dataclass(frozen=True)
class TwoLayerNet:
    """Hidden weights W (hidden, n), output weights b_out (hidden,)."""

    weights: np.ndarray
    b_out: np.ndarray
    spec: ActivationSpec

    @property
    def hidden(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class AdamState:
    m_w: np.ndarray
    v_w: np.ndarray
    m_b: np.ndarray
    v_b: np.ndarray
    step: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_standard(dim: int, hidden: int, spec: ActivationSpec, seed: int) -> TwoLayerNet:
    w = normals(substream(seed, "net-W", hidden, dim), (hidden, dim))
    b = normals(substream(seed, "net-b", hidden), hidden) / math.sqrt(hidden)
    return TwoLayerNet(weights=w, b_out=b, spec=spec)


def init_from_rfm(fitted: RfmFit) -> TwoLayerNet:
    """Use a depth-1, output-width-1 RFM fit as the starting network."""
    shape = fitted.fmap.shape
    if shape.depth != 1 or shape.out_width != 1:
        raise ValueError("RFM initialization requires depth 1 and n_L = 1")
    rows = np.concatenate(
        [fitted.fmap.layer_matrices(i)[0] for i in range(shape.T)], axis=0
    )
    return TwoLayerNet(
        weights=rows, b_out=fitted.weights.copy(), spec=fitted.fmap.spec
    )


def forward(net: TwoLayerNet, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (net.dim,):
        raise ValueError(f"expected input of dimension {net.dim}")
    return float(net.b_out @ act_eval(net.spec, 0, net.weights @ x))


def forward_batch(net: TwoLayerNet, points: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return act_eval(net.spec, 0, pts @ net.weights.T) @ net.b_out


def grad_mse(
    net: TwoLayerNet, inputs: np.ndarray, targets: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradient of mean((f(x) - y)^2) over the batch, for (W, b_out)."""
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float)
    if len(x) == 0:
        raise ValueError("empty batch")
    z = x @ net.weights.T
    a = act_eval(net.spec, 0, z)
    resid = a @ net.b_out - y
    scale = 2.0 / len(x)
    grad_b = scale * (a.T @ resid)
    back = (resid[:, None] * act_eval(net.spec, 1, z)) * net.b_out[None, :]
    grad_w = scale * (back.T @ x)
    return grad_w, grad_b


def adam_init(net: TwoLayerNet, lr: float) -> AdamState:
    return AdamState(
        m_w=np.zeros_like(net.weights),
        v_w=np.zeros_like(net.weights),
        m_b=np.zeros_like(net.b_out),
        v_b=np.zeros_like(net.b_out),
        step=0,
        lr=lr,
    )


def adam_step(
    state: AdamState, net: TwoLayerNet, grads: tuple[np.ndarray, np.ndarray]
) -> tuple[TwoLayerNet, AdamState]:
    """One bias-corrected Adam update; returns the new net and state."""
    grad_w, grad_b = grads
    t = state.step + 1
    m_w = state.beta1 * state.m_w + (1 - state.beta1) * grad_w
    v_w = state.beta2 * state.v_w + (1 - state.beta2) * grad_w**2
    m_b = state.beta1 * state.m_b + (1 - state.beta1) * grad_b
    v_b = state.beta2 * state.v_b + (1 - state.beta2) * grad_b**2
    c1 = 1 - state.beta1**t
    c2 = 1 - state.beta2**t
    new_w = net.weights - state.lr * (m_w / c1) / (np.sqrt(v_w / c2) + state.eps)
    new_b = net.b_out - state.lr * (m_b / c1) / (np.sqrt(v_b / c2) + state.eps)
    return (
        TwoLayerNet(weights=new_w, b_out=new_b, spec=net.spec),
        AdamState(
            m_w=m_w, v_w=v_w, m_b=m_b, v_b=v_b,
            step=t, lr=state.lr,
            beta1=state.beta1, beta2=state.beta2, eps=state.eps,
        ),
    )


@dataclass(frozen=True)
class TrainResult:
    """Per-epoch loss trace (entry 0 is the pre-training loss)."""

    epochs: tuple[int, ...]
    train_mse: tuple[float, ...]
    test_mse: tuple[float, ...]
    net: TwoLayerNet


def _mse(net: TwoLayerNet, data: Dataset | None) -> float:
    if data is None:
        return float("nan")
    return float(np.mean((forward_batch(net, data.inputs) - data.targets) ** 2))


def train(
    net: TwoLayerNet,
    data: Dataset,
    epochs: int,
    batch_size: int = 128,
    seed: int = 0,
    lr: float = 0.01,
    test_data: Dataset | None = None,
    init: RfmFit | str | None = None,
) -> TrainResult:
    """Minibatch Adam on the MSE; deterministic given the seed.

    ``init`` optionally rebuilds the starting point: "standard" redraws the
    net from the seed, and an RfmFit starts from that fit's network.
    """
    if init == "standard":
        net = init_standard(net.dim, net.hidden, net.spec, seed)
    elif isinstance(init, RfmFit):
        net = init_from_rfm(init)
    elif init is not None:
        raise ValueError("init must be None, 'standard', or an RfmFit")

    n = len(data.targets)
    state = adam_init(net, lr)
    epochs_out = [0]
    train_trace = [_mse(net, data)]
    test_trace = [_mse(net, test_data)]
    for epoch in range(1, epochs + 1):
        perm = substream(seed, "shuffle", epoch).permutation(n)
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            grads = grad_mse(net, data.inputs[idx], data.targets[idx])
            net, state = adam_step(state, net, grads)
        epochs_out.append(epoch)
        train_trace.append(_mse(net, data))
        test_trace.append(_mse(net, test_data))
    return TrainResult(
        epochs=tuple(epochs_out),
        train_mse=tuple(train_trace),
        test_mse=tuple(test_trace),
        net=net,
    )
