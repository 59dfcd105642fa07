"""Last-layer regression on multi-layer random features.

The feature map is frozen; only the output weights are computed, by ridge
(or plain) least squares on a supervised dataset.  The rate experiment sweeps
the block count T and fits a log-log slope to the test RMSE, which should
track T^(-1/2) for targets of known kernel-space norm.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import kernel as kernel_mod
from ._rng import substream
from .activation import ActivationSpec
from .features import FeatureMap, NetworkShape, features, features_matrix, sample_feature_map
from .sphere import HarmonicTarget, make_harmonic_target, sample_sphere, surface_area

__all__ = [
    "Dataset",
    "RfmFit",
    "fit",
    "predict",
    "predict_batch",
    "KernelComboTarget",
    "make_kernel_combo_target",
    "RateResult",
    "rate_experiment",
    "build_harmonic_dataset",
    "harmonic_mse_experiment",
]

_PREDICT_CHUNK = 8192


@dataclass(frozen=True)
class Dataset:
    """Supervised sample: inputs (N, n0), scalar targets (N,)."""

    inputs: np.ndarray
    targets: np.ndarray
    provenance: str = "custom"

    def __post_init__(self):
        if self.inputs.ndim != 2 or len(self.inputs) != len(self.targets):
            raise ValueError("inputs must be (N, n0) with matching targets")
        if len(self.targets) < 1:
            raise ValueError("dataset must be nonempty")
        if not (np.isfinite(self.inputs).all() and np.isfinite(self.targets).all()):
            raise ValueError("dataset contains non-finite values")


@dataclass(frozen=True)
class RfmFit:
    """Fitted output weights for a frozen feature map."""

    fmap: FeatureMap
    weights: np.ndarray
    ridge: float
    train_rmse: float
    min_norm_fallback: bool


def fit(fmap: FeatureMap, data: Dataset, ridge: float | None = None) -> RfmFit:
    """Least-squares output weights: argmin ||Xw - y||^2 + ridge ||w||^2.

    ridge=None applies the default 1e-8 * trace(X^T X) / cols; ridge=0 uses
    the unregularized problem and falls back to the minimum-norm solution
    when the design is rank-deficient (recorded, never silent).  The
    regularized system is solved through a QR factorization of the augmented
    matrix [X; sqrt(ridge) I].
    """
    x = features_matrix(fmap, data.inputs)
    if not np.isfinite(x).all():
        raise ValueError("design matrix contains non-finite features")
    y = np.asarray(data.targets, dtype=float)
    cols = x.shape[1]
    if ridge is None:
        ridge = 1e-8 * float(np.sum(x * x)) / cols
    if ridge < 0:
        raise ValueError("ridge must be >= 0")

    min_norm = False
    if ridge == 0.0:
        w, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
        min_norm = rank < cols
    else:
        aug = np.vstack([x, math.sqrt(ridge) * np.eye(cols)])
        rhs = np.concatenate([y, np.zeros(cols)])
        yq, r = sla.qr_multiply(aug, rhs.reshape(1, -1), mode="right")
        w = sla.solve_triangular(r, yq[0])
    if not np.isfinite(w).all():
        raise np.linalg.LinAlgError("least-squares solve produced non-finite weights")
    resid = x @ w - y
    return RfmFit(
        fmap=fmap,
        weights=w,
        ridge=float(ridge),
        train_rmse=float(np.sqrt(np.mean(resid**2))),
        min_norm_fallback=min_norm,
    )


def predict(fitted: RfmFit, x: np.ndarray) -> float:
    return float(fitted.weights @ features(fitted.fmap, np.asarray(x, dtype=float)))


def predict_batch_weights(
    fmap: FeatureMap, weights: np.ndarray, points: np.ndarray
) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty(len(pts))
    for start in range(0, len(pts), _PREDICT_CHUNK):
        stop = min(start + _PREDICT_CHUNK, len(pts))
        out[start:stop] = features_matrix(fmap, pts[start:stop]) @ weights
    return out


def predict_batch(fitted: RfmFit, points: np.ndarray) -> np.ndarray:
    return predict_batch_weights(fitted.fmap, fitted.weights, points)


@dataclass(frozen=True)
class KernelComboTarget:
    """f = sum_j a_j K(., c_j) with its exact kernel-space norm sqrt(a^T G a)."""

    model: kernel_mod.KernelModel
    centers: np.ndarray
    coeffs: np.ndarray
    rkhs_norm: float
    gram_floored: bool

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return kernel_mod.cross_gram(self.model, points, self.centers) @ self.coeffs


def make_kernel_combo_target(
    model: kernel_mod.KernelModel, centers: np.ndarray, coeffs: np.ndarray
) -> KernelComboTarget:
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    coeffs = np.asarray(coeffs, dtype=float)
    if len(centers) != len(coeffs):
        raise ValueError("one coefficient per center required")
    g = kernel_mod.gram(model, centers)
    evals, evecs = np.linalg.eigh(g)
    floored = bool(evals[0] < -1e-10 * max(float(evals[-1]), 1.0))
    if floored:
        g = (evecs * np.maximum(evals, 0.0)) @ evecs.T
    quad = float(coeffs @ g @ coeffs)
    return KernelComboTarget(
        model=model,
        centers=centers,
        coeffs=coeffs,
        rkhs_norm=math.sqrt(max(quad, 0.0)),
        gram_floored=floored,
    )


@dataclass(frozen=True)
class RateResult:
    """Per-cell RMSE table plus the fitted log-log rate."""

    rows: tuple  # (T, seed, train_rmse, test_rmse)
    t_values: tuple[int, ...]
    mean_rmse: tuple[float, ...]
    std_rmse: tuple[float, ...]
    slope: float
    intercept: float
    rkhs_norm: float


def _loglog_line(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float]:
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    return float(slope), float(intercept)


def montecarlo_weights(fmap: FeatureMap, target: "KernelComboTarget") -> np.ndarray:
    """Output weights of the averaging construction, w_i = g(theta_i) / T.

    For f = sum_j a_j K(., c_j) the representer is g(theta) =
    sum_j a_j alpha(c_j, theta), so f(x) = E[g(theta) alpha(x, theta)] and
    averaging g(theta_i) alpha(x, theta_i) over T blocks reproduces f with
    expected squared error Var[g alpha] / T <= (sup|s| ||f||_H)^2 / T.
    """
    phi_centers = features_matrix(fmap, target.centers)  # (m, T * n_L)
    return (phi_centers.T @ target.coeffs) / fmap.shape.T


def rate_experiment(
    spec: ActivationSpec,
    target,
    t_values: list[int],
    seeds: list[int],
    n_train: int,
    dim: int,
    n_test: int | None = None,
    ridge: float | None = None,
    data_seed: int = 0,
    workers: int = 1,
    mode: str = "construction",
) -> RateResult:
    """Test RMSE of single-hidden-layer random-feature models across T.

    mode="construction" (default) uses the averaging weights
    w_i = g(theta_i) / T, the estimator whose expected squared error the
    1/sqrt(T) bound controls; its RMSE tracks T^(-1/2).  mode="regression"
    fits the last layer by least squares on the training sample instead;
    least squares is strictly better than the averaging construction and
    empirically decays faster than T^(-1/2), so it is not a rate check.

    The train and test samples are drawn once (uniform on the sphere) and
    shared by every (T, seed) cell, so the sweep isolates the randomness of
    the feature draw.  Feature blocks are nested across T for a fixed seed,
    which makes per-seed curves directly comparable.
    """
    if len(t_values) < 2:
        raise ValueError("need at least two T values")
    if max(t_values) < 8 * min(t_values):
        raise ValueError("T values should span at least a factor of 8")
    if mode not in ("construction", "regression"):
        raise ValueError("mode must be 'construction' or 'regression'")
    if mode == "construction" and not isinstance(target, KernelComboTarget):
        raise ValueError("the averaging construction needs a kernel-combo target")
    if n_test is None:
        n_test = 10 * n_train
    train_pts = sample_sphere(dim, n_train, int(substream(data_seed, "rate-train").integers(2**62)))
    test_pts = sample_sphere(dim, n_test, int(substream(data_seed, "rate-test").integers(2**62)))
    y_train = np.asarray(target(train_pts), dtype=float)
    y_test = np.asarray(target(test_pts), dtype=float)
    data = Dataset(inputs=train_pts, targets=y_train, provenance="kernel_combo")

    cells = [(t, s) for t in sorted(t_values) for s in seeds]

    def run(cell):
        t, s = cell
        fmap = sample_feature_map(NetworkShape(n0=dim, hidden=(1,), T=t), spec, s)
        if mode == "construction":
            w = montecarlo_weights(fmap, target)
            fitted = RfmFit(
                fmap=fmap, weights=w, ridge=0.0,
                train_rmse=float(
                    np.sqrt(np.mean((predict_batch_weights(fmap, w, train_pts) - y_train) ** 2))
                ),
                min_norm_fallback=False,
            )
        else:
            fitted = fit(fmap, data, ridge=ridge)
        test_rmse = float(
            np.sqrt(np.mean((predict_batch(fitted, test_pts) - y_test) ** 2))
        )
        return (t, s, fitted.train_rmse, test_rmse)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, cells))
    else:
        rows = [run(cell) for cell in cells]

    ts = sorted(set(t for t, *_ in rows))
    means = [float(np.mean([r[3] for r in rows if r[0] == t])) for t in ts]
    stds = [float(np.std([r[3] for r in rows if r[0] == t])) for t in ts]
    slope, intercept = _loglog_line(np.array(ts, float), np.array(means))
    rkhs = getattr(target, "rkhs_norm", float("nan"))
    return RateResult(
        rows=tuple(rows),
        t_values=tuple(ts),
        mean_rmse=tuple(means),
        std_rmse=tuple(stds),
        slope=slope,
        intercept=intercept,
        rkhs_norm=rkhs,
    )


def build_harmonic_dataset(
    n: int,
    k: int,
    n_train: int,
    n_test: int,
    seed: int,
    normalize: bool = True,
) -> tuple[Dataset, Dataset, HarmonicTarget]:
    """Uniform sphere samples labeled by a random order-k harmonic.

    With ``normalize`` the targets are rescaled so the training targets have
    exactly unit empirical second moment; the constant-zero predictor then
    has training MSE 1.0, the baseline quoted by the experiments.
    """
    target = make_harmonic_target(n, k, seed=int(substream(seed, "target", k).integers(2**62)))
    train_pts = sample_sphere(n, n_train, int(substream(seed, "train").integers(2**62)))
    test_pts = sample_sphere(n, n_test, int(substream(seed, "test").integers(2**62)))
    y_train = target(train_pts)
    y_test = target(test_pts)
    if normalize:
        scale = math.sqrt(float(np.mean(y_train**2)))
    else:
        scale = 1.0 / math.sqrt(surface_area(n))  # population normalization
    y_train = y_train / scale
    y_test = y_test / scale
    prov = f"harmonic(k={k})"
    return (
        Dataset(inputs=train_pts, targets=y_train, provenance=prov),
        Dataset(inputs=test_pts, targets=y_test, provenance=prov),
        target,
    )


def harmonic_mse_experiment(
    specs: list[ActivationSpec],
    n: int,
    k_values: list[int],
    t_values: list[int],
    seeds: list[int],
    n_train: int,
    n_test: int,
    ridge: float | None = None,
    data_seed: int = 0,
    workers: int = 1,
) -> list[tuple]:
    """MSE table (k, activation, T, seed, train_mse, test_mse) for harmonic
    targets, shared datasets across activations and T."""
    datasets = {
        k: build_harmonic_dataset(n, k, n_train, n_test, data_seed)
        for k in k_values
    }
    cells = [
        (k, spec, t, s)
        for k in k_values
        for spec in specs
        for t in sorted(t_values)
        for s in seeds
    ]

    def run(cell):
        k, spec, t, s = cell
        train, test, _ = datasets[k]
        fmap = sample_feature_map(NetworkShape(n0=n, hidden=(1,), T=t), spec, s)
        fitted = fit(fmap, train, ridge=ridge)
        test_mse = float(np.mean((predict_batch(fitted, test.inputs) - test.targets) ** 2))
        return (k, spec.label(), t, s, fitted.train_rmse**2, test_mse)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, cells))
    return [run(cell) for cell in cells]
