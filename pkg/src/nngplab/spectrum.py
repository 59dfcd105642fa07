"""Kernel spectra from data: ranked eigenvalues, log-log slopes, and the
slow/fast decay classifier.

Rank-ordered eigenvalues mu_1 >= mu_2 >= ... repeat each order-k eigenvalue
N(n, k) times, so zonal spectra show plateaus.  The classifier thresholds the
fitted |slope| of log(mu_i) against log(i) at (n + 2/3) / (n - 1): order
eigenvalues decaying slower than k^(-n-2/3) translate into rank slopes
shallower than that value.

Empirical eigenvalues come from a Gram matrix of the random-feature kernel

    K_emp(x, y) = (1/M) sum_i s(w_i . x) s(w_i . y),  w_i ~ N(0, I_n),

on N uniform sphere points, scaled by 1/N so they approximate eigenvalues of
the integral operator under the uniform probability measure (the same
normalization ``sphere.funk_hecke`` uses, so the two are directly
comparable).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._rng import normals, substream
from .activation import ActivationSpec, eval as act_eval
from .sphere import harmonic_dim, sample_sphere

__all__ = [
    "SpectrumReport",
    "LogLogFit",
    "ranked_from_orders",
    "empirical_gram_eigenvalues",
    "empirical_spectrum",
    "loglog_fit",
    "classify_activation",
    "decay_threshold",
    "build_report",
]

_MIN_USABLE = 1e-14
_MAX_SIZE = 20000


@dataclass
class SpectrumReport:
    """Ranked eigenvalues with an optional slope fit and class label."""

    eigenvalues: np.ndarray
    n: int
    meta: dict = field(default_factory=dict)
    cut_index: int | None = None
    slope: float | None = None
    intercept: float | None = None
    class_label: str | None = None
    threshold: float | None = None
    truncation_warning: bool = False


class LogLogFit(NamedTuple):
    slope: float
    intercept: float
    cut_index: int


def decay_threshold(n: int) -> float:
    """Rank-slope magnitude separating slow from fast order-decay."""
    return (n + 2.0 / 3.0) / (n - 1.0)


def ranked_from_orders(lambdas, n: int) -> np.ndarray:
    """Expand order eigenvalues by their multiplicities and sort decreasing."""
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(lambdas < -1e-12):
        raise ValueError("significantly negative eigenvalue in input")
    lambdas = np.clip(lambdas, 0.0, None)
    reps = np.array([harmonic_dim(n, k) for k in range(len(lambdas))])
    return np.sort(np.repeat(lambdas, reps))[::-1]


def empirical_gram_eigenvalues(
    spec: ActivationSpec, points: np.ndarray, n_features: int, seed: int
) -> np.ndarray:
    """Decreasing eigenvalues of (1/N) [K_emp(x_i, x_j)] on given points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n_points, dim = points.shape
    omegas = normals(substream(seed, "spectrum-features", dim, n_features), (n_features, dim))
    phi = act_eval(spec, 0, points @ omegas.T)
    gram = phi @ phi.T
    eigs = np.linalg.eigvalsh(gram / (n_features * n_points))
    return eigs[::-1]


def empirical_spectrum(
    spec: ActivationSpec,
    n: int,
    n_points: int,
    n_features: int,
    seed: int,
) -> SpectrumReport:
    """Eigenvalues of the random-feature kernel Gram on uniform sphere points."""
    if not (16 <= n_points <= _MAX_SIZE and 16 <= n_features <= _MAX_SIZE):
        raise ValueError(f"sizes must lie in [16, {_MAX_SIZE}]")
    pts = sample_sphere(n, n_points, int(substream(seed, "spectrum-points").integers(2**62)))
    eigs = empirical_gram_eigenvalues(spec, pts, n_features, seed)
    return SpectrumReport(
        eigenvalues=eigs,
        n=n,
        meta={
            "activation": spec.label(),
            "n_points": n_points,
            "n_features": n_features,
            "seed": seed,
        },
    )


# order patterns a zonal activation kernel can produce: all orders, parity
# kernels (even/odd activations), positively homogeneous activations (all of
# 0, 1, 2 then even only), and constant-plus-odd activations
_ORDER_PATTERNS = {
    "all": lambda k: k + 1,
    "even": lambda k: k + 2,
    "odd": lambda k: k + 2,
    "homogeneous": lambda k: k + 2 if k >= 2 else k + 1,
    "odd_plus_const": lambda k: k + 2 if k >= 1 else 1,
}
_PATTERN_START = {"all": 0, "even": 0, "odd": 1, "homogeneous": 0, "odd_plus_const": 0}


def _candidate_orders(n: int, limit: int) -> list[tuple[str, list[int]]]:
    out = []
    for name, successor in _ORDER_PATTERNS.items():
        orders, total = [], 0
        k = _PATTERN_START[name]
        while True:
            width = harmonic_dim(n, k)
            if total + width > limit:
                break
            orders.append(k)
            total += width
            k = successor(k)
        if len(orders) >= 2:
            out.append((name, orders))
    return out


def _group_ranks(n: int, orders: list[int]) -> list[tuple[int, int]]:
    """(first, last) 1-based rank of each order's plateau."""
    spans, pos = [], 0
    for k in orders:
        width = harmonic_dim(n, k)
        spans.append((pos + 1, pos + width))
        pos += width
    return spans


@dataclass
class _PlateauAnalysis:
    pattern: str
    cut: int
    orders: list[int]       # trusted orders, aligned with levels
    levels: np.ndarray      # geometric-mean eigenvalue per trusted plateau
    midranks: np.ndarray    # geometric-mean rank per trusted plateau


def _plateau_analysis(eigs: np.ndarray, n: int) -> _PlateauAnalysis:
    """Trusted prefix under the plateau rule.

    Candidate order patterns are scored by the flatness of their first five
    plateaus; under the winning pattern the prefix extends while each group
    still looks like a resolved plateau, meaning either

      * its internal log-log slope stays above -1 (inclination under 45
        degrees), or
      * its internal log spread is below 0.6 of the mean log drop to the
        neighboring plateaus (well-separated spectra keep recognizable
        plateaus even once the levels smear by more than the 45-degree
        rule tolerates).

    Scanning stops at the first failing group or at the first nonpositive
    eigenvalue.
    """
    usable = int(np.argmax(eigs <= _MIN_USABLE)) if np.any(eigs <= _MIN_USABLE) else len(eigs)
    if usable < 5:
        raise ValueError("fewer than 5 usable eigenvalues")
    log_e = np.log(eigs[:usable])
    log_r = np.log(np.arange(1, usable + 1))

    def group_slope(first: int, last: int) -> float:
        if last == first:
            return 0.0
        return (log_e[last - 1] - log_e[first - 1]) / (log_r[last - 1] - log_r[first - 1])

    best = None
    best_score = None
    for name, orders in _candidate_orders(n, usable):
        spans = _group_ranks(n, orders)
        probe = [s for s in spans[:5] if s[1] > s[0]]
        if not probe:
            continue
        score = float(np.mean([log_e[f - 1] - log_e[l - 1] for f, l in probe]))
        levels_all = np.array([np.mean(log_e[f - 1 : l]) for f, l in spans])
        drops = -np.diff(levels_all)  # log gap between consecutive plateau levels
        trusted = 0
        for j, (first, last) in enumerate(spans):
            internal = log_e[first - 1] - log_e[last - 1]
            neighbors = [drops[j - 1]] if j >= 1 else []
            if j < len(drops):
                neighbors.append(drops[j])
            separated = bool(neighbors) and internal < 0.6 * float(np.mean(neighbors))
            if group_slope(first, last) <= -1.0 and not separated:
                break
            trusted += 1
        if trusted == 0 or spans[trusted - 1][1] < 5:
            continue
        if best_score is None or score < best_score:
            cut = spans[trusted - 1][1]
            levels = np.array(
                [np.exp(np.mean(log_e[f - 1 : l])) for f, l in spans[:trusted]]
            )
            mids = np.array(
                [np.exp(np.mean(log_r[f - 1 : l])) for f, l in spans[:trusted]]
            )
            best = _PlateauAnalysis(
                pattern=name, cut=cut, orders=orders[:trusted], levels=levels, midranks=mids
            )
            best_score = score
    if best is None:
        raise ValueError("plateau heuristic found no trusted prefix of length >= 5")
    return best


def _ols_loglog(eigs: np.ndarray, cut: int) -> tuple[float, float]:
    ranks = np.arange(1, cut + 1)
    keep = eigs[:cut] > _MIN_USABLE
    lx = np.log(ranks[keep])
    ly = np.log(eigs[:cut][keep])
    slope, intercept = np.polyfit(lx, ly, 1)
    return float(slope), float(intercept)


def loglog_fit(
    eigenvalues: np.ndarray, n: int | None = None, cut_rule="plateau"
) -> LogLogFit:
    """OLS of log(mu_i) on log(i) over a trusted prefix.

    ``cut_rule`` is either a fixed integer prefix length or "plateau", which
    requires ``n`` for the multiplicity pattern.
    """
    eigs = np.asarray(eigenvalues, dtype=float)
    if np.count_nonzero(eigs > _MIN_USABLE) < 5:
        raise ValueError("fewer than 5 usable eigenvalues")
    if isinstance(cut_rule, (int, np.integer)):
        cut = int(cut_rule)
        if not 2 <= cut <= len(eigs):
            raise ValueError(f"fixed cut {cut} outside 2..{len(eigs)}")
    elif cut_rule == "plateau":
        if n is None:
            raise ValueError("plateau cut rule needs the dimension n")
        cut = _plateau_analysis(eigs, n).cut
    else:
        raise ValueError(f"unknown cut rule {cut_rule!r}")
    slope, intercept = _ols_loglog(eigs, cut)
    return LogLogFit(slope=slope, intercept=intercept, cut_index=cut)


def classify_activation(slope: float, n: int, margin: float = 0.15) -> str:
    """slow_decay / fast_decay / inconclusive from the fitted rank slope."""
    if not math.isfinite(slope):
        raise ValueError("slope must be finite")
    threshold = decay_threshold(n)
    mag = abs(slope)
    if mag < threshold - margin:
        return "slow_decay"
    if mag > threshold + margin:
        return "fast_decay"
    return "inconclusive"


def _power_law_signature(analysis: _PlateauAnalysis) -> bool:
    """True when the trusted plateau levels look like a power law in the
    order k rather than geometric-or-faster decay.

    Fits log(level) against log k (power law) and against k (geometric) over
    the trusted plateaus of order >= 1 and compares RMS residuals.  Slow-
    class kernels have power-law order decay, so their small-k transient
    inflates the fitted rank slope; a fast verdict contradicted by this test
    is exactly the rank-truncation situation and deserves a warning.  Needs
    at least three trusted plateaus of positive order to discriminate.
    """
    keep = [i for i, k in enumerate(analysis.orders) if k >= 1]
    if len(keep) < 3:
        return False
    k = np.array([analysis.orders[i] for i in keep], dtype=float)
    y = np.log(analysis.levels[keep])

    def rms_resid(x: np.ndarray) -> float:
        coeffs = np.polyfit(x, y, 1)
        return float(np.sqrt(np.mean((y - np.polyval(coeffs, x)) ** 2)))

    return rms_resid(np.log(k)) < rms_resid(k)


def build_report(
    report: SpectrumReport, cut_rule="plateau", margin: float = 0.15
) -> SpectrumReport:
    """Attach slope fit, class label and the rank-truncation warning.

    With the plateau cut rule, a fast_decay label is downgraded to
    inconclusive (with the warning set) when the trusted plateau levels
    carry the power-law signature of the slow class; an inconclusive label
    with the same signature keeps its label but gains the warning.
    """
    analysis = None
    if cut_rule == "plateau":
        analysis = _plateau_analysis(report.eigenvalues, report.n)
        fit_res = loglog_fit(report.eigenvalues, n=report.n, cut_rule=analysis.cut)
    else:
        fit_res = loglog_fit(report.eigenvalues, n=report.n, cut_rule=cut_rule)
    label = classify_activation(fit_res.slope, report.n, margin=margin)
    warning = False
    if (
        analysis is not None
        and label in ("fast_decay", "inconclusive")
        and _power_law_signature(analysis)
    ):
        warning = True
        if label == "fast_decay":
            label = "inconclusive"
    report.cut_index = fit_res.cut_index
    report.slope = fit_res.slope
    report.intercept = fit_res.intercept
    report.class_label = label
    report.threshold = decay_threshold(report.n)
    report.truncation_warning = warning
    if analysis is not None:
        report.meta = {
            **report.meta,
            "plateau_pattern": analysis.pattern,
            "trusted_orders": list(analysis.orders),
        }
    return report
