"""Spherical geometry and zonal harmonic analysis on S^{n-1}.

Conventions used throughout (and worth keeping straight):

* ``gegenbauer(n, k, t)`` returns the ultraspherical polynomial of parameter
  (n - 2) / 2 normalized so that P_k(1) = 1.
* ``funk_hecke`` returns the eigenvalue of the integral operator taken with
  respect to the *uniform probability measure* on the sphere:

      lambda_k = Gamma(n/2) / (sqrt(pi) Gamma((n-1)/2))
                 * integral_{-1}^{1} f(t) P_k(t) (1 - t^2)^{(n-3)/2} dt,

  so a constant profile f = 1 gives lambda_0 = 1.  Multiply by the surface
  area ``surface_area(n)`` to convert to surface-measure eigenvalues.
* ``HarmonicTarget`` instances are normalized to unit L2 norm under the
  *surface* measure; their mean square under the uniform probability measure
  is therefore 1 / surface_area(n).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gamma as _gamma, roots_jacobi

from ._rng import normals, substream

__all__ = [
    "surface_area",
    "sample_sphere",
    "gegenbauer",
    "GegenbauerBasis",
    "harmonic_dim",
    "HarmonicTarget",
    "make_harmonic_target",
    "funk_hecke",
    "barron_lower_bound",
    "mercer_sum",
]


def surface_area(n: int) -> float:
    """Surface area of the unit sphere S^{n-1} in R^n (e.g. 4 pi for n=3)."""
    return 2.0 * math.pi ** (n / 2.0) / _gamma(n / 2.0)


def sample_sphere(n: int, count: int, seed: int) -> np.ndarray:
    """I.i.d. uniform unit vectors, as rows of a (count, n) array."""
    if n < 2:
        raise ValueError("sphere dimension requires n >= 2")
    gen = substream(seed, "sphere", n, count)
    z = normals(gen, (count, n))
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    return z / norms


@dataclass(frozen=True)
class GegenbauerBasis:
    """Recurrence coefficients for P_0..P_kmax at parameter (n-2)/2.

    With alpha = (n - 2) / 2 the polynomials normalized to P_k(1) = 1 satisfy

        P_k(t) = A_k t P_{k-1}(t) - B_k P_{k-2}(t),
        A_k = 2 (k + alpha - 1) / (k + 2 alpha - 1),
        B_k = (k - 1) / (k + 2 alpha - 1).

    For n = 2 the k = 1 coefficient degenerates; P_0 = 1 and P_1 = t are base
    cases, after which the recurrence is regular (it reduces to Chebyshev).
    """

    n: int
    kmax: int
    coef_a: tuple[float, ...]
    coef_b: tuple[float, ...]

    def table(self, t: np.ndarray) -> np.ndarray:
        """Values P_k(t) for all k <= kmax; shape (kmax + 1, len(t))."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((self.kmax + 1, t.size))
        out[0] = 1.0
        if self.kmax >= 1:
            out[1] = t
        for k in range(2, self.kmax + 1):
            out[k] = self.coef_a[k] * t * out[k - 1] - self.coef_b[k] * out[k - 2]
        return out

    def eval(self, k: int, t: np.ndarray) -> np.ndarray:
        if not 0 <= k <= self.kmax:
            raise ValueError(f"order {k} outside 0..{self.kmax}")
        return self.table(t)[k]


@lru_cache(maxsize=64)
def _basis(n: int, kmax: int) -> GegenbauerBasis:
    if n < 2:
        raise ValueError("gegenbauer requires n >= 2")
    alpha = (n - 2) / 2.0
    coef_a = [0.0, 0.0]
    coef_b = [0.0, 0.0]
    for k in range(2, kmax + 1):
        coef_a.append(2.0 * (k + alpha - 1.0) / (k + 2.0 * alpha - 1.0))
        coef_b.append((k - 1.0) / (k + 2.0 * alpha - 1.0))
    return GegenbauerBasis(
        n=n, kmax=kmax, coef_a=tuple(coef_a), coef_b=tuple(coef_b)
    )


def gegenbauer(n: int, k: int, t) -> float | np.ndarray:
    """P_k(t) with the P_k(1) = 1 normalization; |t| <= 1 required."""
    arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(np.abs(arr) > 1.0 + 1e-12):
        raise ValueError("gegenbauer argument outside [-1, 1]")
    arr = np.clip(arr, -1.0, 1.0)
    vals = _basis(n, max(k, 1)).eval(k, arr)
    if np.isscalar(t) or np.asarray(t).ndim == 0:
        return float(vals[0])
    return vals


def harmonic_dim(n: int, k: int) -> int:
    """Dimension N(n, k) of the space of order-k spherical harmonics."""
    if n < 2 or k < 0:
        raise ValueError("harmonic_dim requires n >= 2, k >= 0")
    if k == 0:
        return 1
    if k == 1:
        return n
    return math.comb(n + k - 1, k) - math.comb(n + k - 3, k - 2)


@dataclass(frozen=True)
class HarmonicTarget:
    """A random order-k spherical harmonic with unit surface-measure L2 norm.

    Y(x) = sum_j c_j P_k(x . u_j) for random unit centers u_j.  The exact L2
    normalization comes from the addition-theorem Gram matrix

        G_{jl} = (surface_area(n) / N(n, k)) P_k(u_j . u_l),

    so the certificate c^T G c = 1 holds by construction.  ``gram_floored``
    records whether the Gram needed an eigenvalue floor before normalizing.
    """

    n: int
    k: int
    centers: np.ndarray
    coeffs: np.ndarray
    seed: int
    l2_norm_certificate: float
    gram_floored: bool

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        t = np.clip(x @ self.centers.T, -1.0, 1.0)
        basis = _basis(self.n, max(self.k, 1))
        vals = basis.table(t.ravel())[self.k].reshape(t.shape)
        return vals @ self.coeffs

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "seed": self.seed,
            "centers": self.centers.tolist(),
            "coefficients": self.coeffs.tolist(),
        }

    @staticmethod
    def from_dict(payload: dict) -> "HarmonicTarget":
        return HarmonicTarget(
            n=int(payload["n"]),
            k=int(payload["k"]),
            centers=np.asarray(payload["centers"], dtype=float),
            coeffs=np.asarray(payload["coefficients"], dtype=float),
            seed=int(payload["seed"]),
            l2_norm_certificate=1.0,
            gram_floored=False,
        )


def make_harmonic_target(
    n: int, k: int, m: int | None = None, seed: int = 0
) -> HarmonicTarget:
    """Random unit-norm harmonic of order k from a zonal span of m centers.

    m defaults to 2 N(n, k); with fewer than N(n, k) centers the span cannot
    cover the full harmonic space, which is allowed but warned about.
    """
    dim = harmonic_dim(n, k)
    if m is None:
        m = 2 * dim
    if m < 1:
        raise ValueError("need at least one center")
    if m < dim:
        warnings.warn(
            f"{m} centers span at most an m-dimensional slice of the "
            f"{dim}-dimensional order-{k} harmonic space",
            stacklevel=2,
        )
    centers = sample_sphere(n, m, seed)
    raw = normals(substream(seed, "harmonic-coeffs", n, k, m), m)

    basis = _basis(n, max(k, 1))
    inner = np.clip(centers @ centers.T, -1.0, 1.0)
    g = (surface_area(n) / dim) * basis.table(inner.ravel())[k].reshape(m, m)
    g = 0.5 * (g + g.T)

    evals, evecs = np.linalg.eigh(g)
    floor = 1e-12 * max(float(evals[-1]), 1.0)
    floored = bool(evals[0] < floor)
    if floored:
        evals = np.maximum(evals, floor)
        g = (evecs * evals) @ evecs.T
    quad = float(raw @ g @ raw)
    coeffs = raw / math.sqrt(quad)
    return HarmonicTarget(
        n=n,
        k=k,
        centers=centers,
        coeffs=coeffs,
        seed=seed,
        l2_norm_certificate=1.0,
        gram_floored=floored,
    )


def funk_hecke(profile, n: int, k: int, quad_order: int | None = None) -> float:
    """Order-k eigenvalue of the zonal kernel with the given scalar profile.

    Uses Gauss-Jacobi quadrature with weight (1 - t^2)^{(n-3)/2}; see the
    module docstring for the measure normalization.  ``quad_order`` defaults
    to max(2k + 20, 64) and must be at least k + 10 (under-resolution guard).
    """
    if n < 2 or k < 0:
        raise ValueError("funk_hecke requires n >= 2, k >= 0")
    if quad_order is None:
        quad_order = max(2 * k + 20, 64)
    if quad_order < k + 10:
        raise ValueError(
            f"quad_order {quad_order} too small for order {k}; need >= {k + 10}"
        )
    beta = (n - 3) / 2.0
    nodes, weights = roots_jacobi(quad_order, beta, beta)
    pk = _basis(n, max(k, 1)).eval(k, nodes)
    fvals = np.asarray(profile(nodes), dtype=float)
    prefactor = _gamma(n / 2.0) / (math.sqrt(math.pi) * _gamma((n - 1) / 2.0))
    return float(prefactor * np.sum(weights * fvals * pk))


def barron_lower_bound(n: int, k: int) -> float:
    """Growth factor k^{n/2 + 1/3} / sqrt(log N(n, k)) of the Fourier-norm
    lower bound for random order-k harmonics (valid up to an n-dependent
    constant)."""
    if k < 2:
        raise ValueError("barron_lower_bound requires k >= 2")
    return k ** (n / 2.0 + 1.0 / 3.0) / math.sqrt(math.log(harmonic_dim(n, k)))


def mercer_sum(lambdas, n: int, t: np.ndarray) -> np.ndarray:
    """Reconstruct the zonal profile from probability-measure eigenvalues.

    f(t) = sum_k lambda_k N(n, k) P_k(t).  (In surface-measure terms the
    summand is (lambda_k^surf) (N(n, k) / surface_area(n)) P_k(t); the two
    conventions produce the same sum.)
    """
    lambdas = np.asarray(lambdas, dtype=float)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    kmax = len(lambdas) - 1
    table = _basis(n, max(kmax, 1)).table(t)
    dims = np.array([harmonic_dim(n, k) for k in range(kmax + 1)], dtype=float)
    return (lambdas * dims) @ table[: kmax + 1]
