"""Multi-layer random feature maps and Monte-Carlo concentration probes.

A feature map consists of T independent weight blocks; block i applies L
random layers to the input and the block outputs are concatenated.  Layer-1
entries are N(0, 1) and deeper layers are N(0, 1 / n_{h-1}), so one block's
layer-h inner product

    emp_h(x, y) = (1 / n_h) sum_i a_i^{(h)}(x) a_i^{(h)}(y)

is an unbiased finite-width estimate of the corresponding infinite-width
kernel value.  All weights are regenerated on demand from counter-based
substreams keyed by (seed, block, layer), so the map is deterministic,
memory-light and order-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernel as kernel_mod
from ._rng import normals, substream
from .activation import ActivationSpec, bound_constants, eval as act_eval

__all__ = [
    "NetworkShape",
    "WeightBlock",
    "FeatureMap",
    "sample_feature_map",
    "features",
    "features_matrix",
    "empirical_kernel",
    "variance_bound",
    "VarianceProbe",
    "variance_probe",
    "DeviationRow",
    "deviation_probe",
]


@dataclass(frozen=True)
class NetworkShape:
    """Input dimension, hidden widths n_1..n_L, and block count T."""

    n0: int
    hidden: tuple[int, ...]
    T: int

    def __post_init__(self):
        if self.n0 < 1 or self.T < 1 or len(self.hidden) < 1:
            raise ValueError("need n0 >= 1, T >= 1 and at least one hidden layer")
        if any(w < 1 for w in self.hidden):
            raise ValueError("hidden widths must be >= 1")

    @property
    def depth(self) -> int:
        return len(self.hidden)

    @property
    def out_width(self) -> int:
        return self.hidden[-1]


@dataclass(frozen=True)
class WeightBlock:
    """Weight matrices W^(1)..W^(L) of one block, with its seed lineage."""

    index: int
    seed: int
    matrices: tuple[np.ndarray, ...]


def _layer_matrix(
    seed: int, block: int, layer: int, n_out: int, n_in: int
) -> np.ndarray:
    gen = substream(seed, "block", block, "layer", layer)
    w = normals(gen, (n_out, n_in))
    if layer >= 2:
        w /= math.sqrt(n_in)
    return w


@dataclass(frozen=True)
class FeatureMap:
    """A sampled ML-RFM: shape, activation, and the weight substream seed."""

    shape: NetworkShape
    spec: ActivationSpec
    seed: int

    def layer_matrices(self, block: int) -> tuple[np.ndarray, ...]:
        dims = (self.shape.n0,) + self.shape.hidden
        return tuple(
            _layer_matrix(self.seed, block, h, dims[h], dims[h - 1])
            for h in range(1, self.shape.depth + 1)
        )

    def block(self, block: int) -> WeightBlock:
        if not 0 <= block < self.shape.T:
            raise ValueError(f"block index {block} outside 0..{self.shape.T - 1}")
        return WeightBlock(
            index=block, seed=self.seed, matrices=self.layer_matrices(block)
        )


def sample_feature_map(
    shape: NetworkShape, spec: ActivationSpec, seed: int
) -> FeatureMap:
    """Sample T independent weight blocks (lazily materialized)."""
    return FeatureMap(shape=shape, spec=spec, seed=seed)


def _block_activations(
    fmap: FeatureMap, block: int, x: np.ndarray, upto: int | None = None
) -> np.ndarray:
    depth = fmap.shape.depth if upto is None else upto
    alpha = x
    for h, w in enumerate(fmap.layer_matrices(block)[:depth], start=1):
        alpha = act_eval(fmap.spec, 0, w @ alpha)
    return alpha


def features(fmap: FeatureMap, x: np.ndarray) -> np.ndarray:
    """Concatenated top-layer activations over all blocks; length T * n_L."""
    x = np.asarray(x, dtype=float)
    if x.shape != (fmap.shape.n0,):
        raise ValueError(f"expected input of dimension {fmap.shape.n0}")
    return np.concatenate(
        [_block_activations(fmap, i, x) for i in range(fmap.shape.T)]
    )


def features_matrix(fmap: FeatureMap, points: np.ndarray) -> np.ndarray:
    """Design matrix of features for many points; shape (N, T * n_L)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != fmap.shape.n0:
        raise ValueError(f"points must have dimension {fmap.shape.n0}")
    shape = fmap.shape
    if shape.depth == 1:
        # single layer: stack all block matrices and apply the activation once
        stacked = np.concatenate(
            [fmap.layer_matrices(i)[0] for i in range(shape.T)], axis=0
        )
        return act_eval(fmap.spec, 0, pts @ stacked.T)
    cols = []
    for i in range(shape.T):
        alpha = pts
        for w in fmap.layer_matrices(i):
            alpha = act_eval(fmap.spec, 0, alpha @ w.T)
        cols.append(alpha)
    return np.concatenate(cols, axis=1)


def empirical_kernel(fmap: FeatureMap, x: np.ndarray, y: np.ndarray, h: int) -> float:
    """Normalized layer-h activation inner product of block 0."""
    if not 1 <= h <= fmap.shape.depth:
        raise ValueError(f"layer index {h} outside 1..{fmap.shape.depth}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (fmap.shape.n0,) or y.shape != (fmap.shape.n0,):
        raise ValueError(f"inputs must have dimension {fmap.shape.n0}")
    ax = _block_activations(fmap, 0, x, upto=h)
    ay = _block_activations(fmap, 0, y, upto=h)
    return float(ax @ ay) / fmap.shape.hidden[h - 1]


def variance_bound(spec: ActivationSpec, widths: tuple[int, ...], h: int) -> float:
    """Layerwise variance bound 2 ||s||^4 sum_{i<=h} C^{h-i} / n_i."""
    if not 1 <= h <= len(widths):
        raise ValueError(f"layer index {h} outside 1..{len(widths)}")
    c = bound_constants(spec).c_var
    sup0 = spec.sup_norms[0]
    return 2.0 * sup0**4 * sum(c ** (h - i) / widths[i - 1] for i in range(1, h + 1))


def _stacked_block_activations(
    fmap: FeatureMap, blocks: range, points: np.ndarray, h: int
) -> np.ndarray:
    """Layer-h activations for several blocks at once; shape (B, P, n_h)."""
    dims = (fmap.shape.n0,) + fmap.shape.hidden
    w1 = np.stack(
        [_layer_matrix(fmap.seed, b, 1, dims[1], dims[0]) for b in blocks]
    )
    alpha = act_eval(fmap.spec, 0, np.einsum("bij,pj->bpi", w1, points))
    for layer in range(2, h + 1):
        wl = np.stack(
            [
                _layer_matrix(fmap.seed, b, layer, dims[layer], dims[layer - 1])
                for b in blocks
            ]
        )
        alpha = act_eval(fmap.spec, 0, np.einsum("bij,bpj->bpi", wl, alpha))
    return alpha


def _per_block_empirical(
    shape: NetworkShape,
    spec: ActivationSpec,
    seed: int,
    points: np.ndarray,
    pair_indices: list[tuple[int, int]],
    h: int,
    repetitions: int,
) -> np.ndarray:
    """Layer-h empirical kernel of each repetition; shape (R, npairs)."""
    fmap = FeatureMap(shape=shape, spec=spec, seed=seed)
    width = shape.hidden[h - 1]
    budget = 4_000_000  # floats per activation tensor chunk
    chunk = max(1, min(repetitions, budget // max(points.shape[0] * width, 1)))
    out = np.empty((repetitions, len(pair_indices)))
    for start in range(0, repetitions, chunk):
        stop = min(start + chunk, repetitions)
        alpha = _stacked_block_activations(fmap, range(start, stop), points, h)
        for col, (i, j) in enumerate(pair_indices):
            out[start:stop, col] = np.mean(alpha[:, i, :] * alpha[:, j, :], axis=1)
    return out


@dataclass(frozen=True)
class VarianceProbe:
    """Measured finite-width kernel variance against its layerwise bound."""

    h: int
    widths: tuple[int, ...]
    repetitions: int
    measured_variance: float
    theorem_bound: float

    @property
    def passed(self) -> bool:
        return self.measured_variance <= self.theorem_bound


def variance_probe(
    shape: NetworkShape,
    spec: ActivationSpec,
    x: np.ndarray,
    y: np.ndarray,
    h: int,
    repetitions: int,
    seed: int,
) -> VarianceProbe:
    """Sample variance of emp_h(x, y) over independent weight draws."""
    if repetitions < 100:
        raise ValueError("variance probe requires at least 100 repetitions")
    if not 1 <= h <= shape.depth:
        raise ValueError(f"layer index {h} outside 1..{shape.depth}")
    bound = variance_bound(spec, shape.hidden, h)  # also rejects unbounded specs
    points = np.vstack([np.asarray(x, float), np.asarray(y, float)])
    vals = _per_block_empirical(
        shape, spec, seed, points, [(0, 1)], h, repetitions
    )[:, 0]
    return VarianceProbe(
        h=h,
        widths=shape.hidden,
        repetitions=repetitions,
        measured_variance=float(np.var(vals, ddof=1)),
        theorem_bound=bound,
    )


@dataclass(frozen=True)
class DeviationRow:
    """Gap between the mean finite-width kernel and the infinite-width one."""

    pair_index: int
    emp_mean: float
    emp_stderr: float
    nngp_value: float

    @property
    def gap(self) -> float:
        return abs(self.emp_mean - self.nngp_value)

    @property
    def significant(self) -> bool:
        return self.gap > 3.0 * self.emp_stderr


def deviation_probe(
    shape: NetworkShape,
    spec: ActivationSpec,
    pairs: list[tuple[np.ndarray, np.ndarray]],
    repetitions: int,
    seed: int,
) -> list[DeviationRow]:
    """Monte-Carlo estimate of |E[emp_L] - kernel value| per point pair.

    The mean of emp_L over weight draws estimates the finite-width kernel,
    whose gap to the infinite-width recursion shrinks as the hidden widths
    grow.  Requires bounded derivatives up to order 2 (for the variance
    bound semantics) and an activation the kernel recursion can evaluate.
    """
    if repetitions < 100:
        raise ValueError("deviation probe requires at least 100 repetitions")
    bound_constants(spec)  # reject unbounded activations up front
    pts = np.vstack([np.vstack([np.asarray(a, float), np.asarray(b, float)]) for a, b in pairs])
    pair_indices = [(2 * i, 2 * i + 1) for i in range(len(pairs))]
    vals = _per_block_empirical(
        shape, spec, seed, pts, pair_indices, shape.depth, repetitions
    )
    model = kernel_mod.recursion_kernel(spec, shape.depth, shape.n0)
    rows = []
    for i, (a, b) in enumerate(pairs):
        target = kernel_mod.nngp_eval(model, np.asarray(a, float), np.asarray(b, float))
        rows.append(
            DeviationRow(
                pair_index=i,
                emp_mean=float(np.mean(vals[:, i])),
                emp_stderr=float(np.std(vals[:, i], ddof=1) / math.sqrt(repetitions)),
                nngp_value=target,
            )
        )
    return rows
