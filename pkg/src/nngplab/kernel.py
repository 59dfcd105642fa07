"""NNGP kernel evaluation.

The depth-L kernel is built by iterating the map

    (sxx, sxy, syy)  ->  (E[s(u)s(u)], E[s(u)s(v)], E[s(v)s(v)]),
    (u, v) ~ N(0, [[sxx, sxy], [sxy, syy]]),

starting from plain inner products.  The bivariate expectation ``sigma_bar``
is computed by a tensor Gauss-Hermite rule after decorrelating the
covariance, with exact closed forms for the gaussian, cosine and sine
activations:

    gaussian:  1 / sqrt((1 + sxx) (1 + syy) - sxy^2)
    cos(ax):   exp(-a^2 (sxx + syy) / 2) * cosh(a^2 sxy)
    sin(ax):   exp(-a^2 (sxx + syy) / 2) * sinh(a^2 sxy)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .activation import (
    ActivationSpec,
    UnboundedActivationError,
    bound_constants,
    eval as act_eval,
)

__all__ = [
    "Cov2",
    "KernelModel",
    "sigma_bar",
    "nngp_eval",
    "gram",
    "deviation_bound",
    "cross_gram",
    "recursion_kernel",
    "closed_gaussian_kernel",
    "closed_cos_kernel",
    "closed_sin_kernel",
    "zonal_kernel",
    "unit_sphere_profile",
]

_PSD_TOL = 1e-8  # covariances with min eigenvalue below -_PSD_TOL are rejected
_RHO_DEGENERATE = 1.0 - 1e-9  # |correlation| above this switches to a 1-D rule
_CLOSED_FORM_NAMES = ("gaussian", "cos", "sin")


@dataclass(frozen=True)
class Cov2:
    """A 2x2 covariance [[sxx, sxy], [sxy, syy]]."""

    sxx: float
    sxy: float
    syy: float

    def min_eigenvalue(self) -> float:
        tr = self.sxx + self.syy
        det = self.sxx * self.syy - self.sxy**2
        return 0.5 * (tr - math.sqrt(max(tr * tr - 4.0 * det, 0.0)))

    def validate(self) -> None:
        if self.min_eigenvalue() < -_PSD_TOL:
            raise ValueError(
                f"non-PSD covariance: min eigenvalue {self.min_eigenvalue():.3e}"
            )


@lru_cache(maxsize=16)
def _hermegauss(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Probabilists' Gauss-Hermite nodes and weights normalized to sum 1."""
    t, w = np.polynomial.hermite_e.hermegauss(order)
    return t, w / w.sum()


def _closed_sigma_bar_arrays(
    spec: ActivationSpec, sxx: np.ndarray, sxy: np.ndarray, syy: np.ndarray
) -> np.ndarray:
    if spec.name == "gaussian":
        det = (1.0 + sxx) * (1.0 + syy) - sxy**2
        return 1.0 / np.sqrt(det)
    a2 = spec.a**2
    # cosh/sinh folded into two exponentials with non-positive arguments
    # (PSD covariance gives sxx + syy >= 2|sxy|), so nothing overflows
    lo = np.exp(-0.5 * a2 * (sxx + syy - 2.0 * sxy))
    hi = np.exp(-0.5 * a2 * (sxx + syy + 2.0 * sxy))
    if spec.name == "cos":
        return 0.5 * (lo + hi)
    if spec.name == "sin":
        return 0.5 * (lo - hi)
    raise ValueError(f"no closed form for activation {spec.name!r}")


def _quad_sigma_bar_arrays(
    spec: ActivationSpec,
    sxx: np.ndarray,
    sxy: np.ndarray,
    syy: np.ndarray,
    quad_order: int,
) -> np.ndarray:
    """Tensor Gauss-Hermite evaluation, vectorized over covariance triples."""
    t, w = _hermegauss(quad_order)
    sx = np.sqrt(np.maximum(sxx, 0.0))
    sy = np.sqrt(np.maximum(syy, 0.0))
    denom = sx * sy
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(denom > 0.0, sxy / np.where(denom > 0.0, denom, 1.0), 0.0)
    rho = np.clip(rho, -1.0, 1.0)

    out = np.empty_like(sx)
    sigma0 = float(act_eval(spec, 0, 0.0))

    point = (sx == 0.0) & (sy == 0.0)
    out[point] = sigma0 * sigma0

    only_y = (sx == 0.0) & ~point
    if np.any(only_y):
        vals = act_eval(spec, 0, sy[only_y, None] * t[None, :]) @ w
        out[only_y] = sigma0 * vals
    only_x = (sy == 0.0) & ~point
    if np.any(only_x):
        vals = act_eval(spec, 0, sx[only_x, None] * t[None, :]) @ w
        out[only_x] = sigma0 * vals

    live = ~point & ~only_x & ~only_y
    aligned = live & (np.abs(rho) >= _RHO_DEGENERATE)
    if np.any(aligned):
        # rank-1 covariance: v is a deterministic multiple of u
        u = sx[aligned, None] * t[None, :]
        v = np.sign(rho[aligned])[:, None] * sy[aligned, None] * t[None, :]
        out[aligned] = (act_eval(spec, 0, u) * act_eval(spec, 0, v)) @ w

    general = live & ~aligned
    if np.any(general):
        r = rho[general][:, None, None]
        c = np.sqrt(1.0 - rho[general] ** 2)[:, None, None]
        u = sx[general, None] * t[None, :]
        v = sy[general][:, None, None] * (r * t[None, :, None] + c * t[None, None, :])
        inner = act_eval(spec, 0, v) @ w  # (B, q)
        out[general] = np.einsum("bq,bq,q->b", act_eval(spec, 0, u), inner, w)
    return out


def sigma_bar(
    spec: ActivationSpec,
    cov: Cov2,
    quad_order: int = 40,
    method: str = "auto",
) -> float:
    """E[sigma(u) sigma(v)] for (u, v) ~ N(0, cov).

    ``method`` is one of "auto" (closed form when the activation has one,
    quadrature otherwise), "closed", or "quadrature".
    """
    cov.validate()
    if quad_order < 2:
        raise ValueError("quad_order must be >= 2")
    if method not in ("auto", "closed", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    use_closed = (
        method == "closed"
        or (method == "auto" and spec.name in _CLOSED_FORM_NAMES)
    )
    sxx = np.array([max(cov.sxx, 0.0)])
    syy = np.array([max(cov.syy, 0.0)])
    sxy = np.array([cov.sxy])
    if use_closed:
        return float(_closed_sigma_bar_arrays(spec, sxx, sxy, syy)[0])
    return float(_quad_sigma_bar_arrays(spec, sxx, sxy, syy, quad_order)[0])


@dataclass(frozen=True)
class KernelModel:
    """A positive-definite kernel evaluator.

    kind:
      * "recursion"       -- depth-L NNGP recursion for ``activation``
      * "closed_gaussian" -- depth-1 gaussian-activation kernel, closed form
      * "closed_cos"      -- depth-1 cos(ax) kernel, closed form
      * "closed_sin"      -- depth-1 sin(ax) kernel, closed form
      * "zonal_profile"   -- K(x, y) = f(x^T y); meant for unit vectors

    ``use_closed_forms`` only affects the recursion kind: when False, every
    layer goes through Gauss-Hermite quadrature even if a closed form exists.
    """

    kind: str
    dim: int
    activation: ActivationSpec | None = None
    depth: int = 1
    quad_order: int = 40
    a: float = 1.0
    profile: Callable[[np.ndarray], np.ndarray] | None = field(
        default=None, compare=False
    )
    use_closed_forms: bool = True


def recursion_kernel(
    spec: ActivationSpec,
    depth: int,
    dim: int,
    quad_order: int = 40,
    use_closed_forms: bool = True,
) -> KernelModel:
    if depth < 0:
        raise ValueError("depth must be >= 0")
    return KernelModel(
        kind="recursion",
        dim=dim,
        activation=spec,
        depth=depth,
        quad_order=quad_order,
        use_closed_forms=use_closed_forms,
    )


def closed_gaussian_kernel(dim: int) -> KernelModel:
    return KernelModel(kind="closed_gaussian", dim=dim)


def closed_cos_kernel(dim: int, a: float = 1.0) -> KernelModel:
    return KernelModel(kind="closed_cos", dim=dim, a=a)


def closed_sin_kernel(dim: int, a: float = 1.0) -> KernelModel:
    return KernelModel(kind="closed_sin", dim=dim, a=a)


def zonal_kernel(profile: Callable[[np.ndarray], np.ndarray], dim: int) -> KernelModel:
    return KernelModel(kind="zonal_profile", dim=dim, profile=profile)


def _recursion_triples(
    model: KernelModel, sxx: np.ndarray, sxy: np.ndarray, syy: np.ndarray
) -> np.ndarray:
    """Push (sxx, sxy, syy) arrays through ``depth`` layers; returns sxy."""
    spec = model.activation
    method = "auto" if model.use_closed_forms else "quadrature"
    use_closed = method == "auto" and spec.name in _CLOSED_FORM_NAMES

    def step(axx, axy, ayy):
        if use_closed:
            return _closed_sigma_bar_arrays(spec, axx, axy, ayy)
        return _quad_sigma_bar_arrays(spec, axx, axy, ayy, model.quad_order)

    sxx, sxy, syy = sxx.copy(), sxy.copy(), syy.copy()
    for _ in range(model.depth):
        new_xy = step(sxx, sxy, syy)
        new_xx = step(sxx, sxx, sxx)
        new_yy = step(syy, syy, syy)
        sxx, sxy, syy = new_xx, new_xy, new_yy
    return sxy


def nngp_eval(model: KernelModel, x: np.ndarray, y: np.ndarray) -> float:
    """Evaluate the kernel at a single pair of points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (model.dim,) or y.shape != (model.dim,):
        raise ValueError(
            f"expected two vectors of dimension {model.dim}, "
            f"got shapes {x.shape} and {y.shape}"
        )
    xx, xy, yy = float(x @ x), float(x @ y), float(y @ y)
    if model.kind == "recursion":
        if model.depth == 0:
            return xy
        return float(
            _recursion_triples(
                model, np.array([xx]), np.array([xy]), np.array([yy])
            )[0]
        )
    if model.kind == "closed_gaussian":
        return 1.0 / math.sqrt((1.0 + xx) * (1.0 + yy) - xy * xy)
    if model.kind in ("closed_cos", "closed_sin"):
        a2 = model.a**2
        scale = math.exp(-0.5 * a2 * (xx + yy))
        if model.kind == "closed_cos":
            return scale * math.cosh(a2 * xy)
        return scale * math.sinh(a2 * xy)
    if model.kind == "zonal_profile":
        return float(model.profile(np.array([xy]))[0])
    raise ValueError(f"unknown kernel kind {model.kind!r}")


def gram(model: KernelModel, points: np.ndarray) -> np.ndarray:
    """Kernel matrix on a point set; exactly symmetric by construction."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise ValueError("empty point list")
    if pts.shape[1] != model.dim:
        raise ValueError(f"points must have dimension {model.dim}")
    p = pts.shape[0]
    inner = pts @ pts.T
    diag = np.diag(inner).copy()
    iu, ju = np.triu_indices(p)

    if model.kind == "recursion" and model.depth > 0:
        vals = _recursion_triples(model, diag[iu], inner[iu, ju], diag[ju])
    elif model.kind == "recursion":  # depth 0
        vals = inner[iu, ju]
    elif model.kind == "closed_gaussian":
        vals = 1.0 / np.sqrt((1.0 + diag[iu]) * (1.0 + diag[ju]) - inner[iu, ju] ** 2)
    elif model.kind in ("closed_cos", "closed_sin"):
        spec_name = "cos" if model.kind == "closed_cos" else "sin"
        spec = ActivationSpec(name=spec_name, a=model.a, sup_norms=(1.0,) * 5)
        vals = _closed_sigma_bar_arrays(spec, diag[iu], inner[iu, ju], diag[ju])
    elif model.kind == "zonal_profile":
        vals = np.asarray(model.profile(inner[iu, ju]), dtype=float)
    else:
        raise ValueError(f"unknown kernel kind {model.kind!r}")

    out = np.empty((p, p))
    out[iu, ju] = vals
    out[ju, iu] = vals
    return out


def cross_gram(model: KernelModel, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kernel values K(a_i, b_j) as an (len(a), len(b)) matrix."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != model.dim or b.shape[1] != model.dim:
        raise ValueError(f"points must have dimension {model.dim}")
    inner = a @ b.T
    da = np.einsum("ij,ij->i", a, a)[:, None]
    db = np.einsum("ij,ij->i", b, b)[None, :]
    if model.kind == "recursion":
        if model.depth == 0:
            return inner
        shape = inner.shape
        vals = _recursion_triples(
            model,
            np.broadcast_to(da, shape).ravel(),
            inner.ravel(),
            np.broadcast_to(db, shape).ravel(),
        )
        return vals.reshape(shape)
    if model.kind == "closed_gaussian":
        return 1.0 / np.sqrt((1.0 + da) * (1.0 + db) - inner**2)
    if model.kind in ("closed_cos", "closed_sin"):
        spec_name = "cos" if model.kind == "closed_cos" else "sin"
        spec = ActivationSpec(name=spec_name, a=model.a, sup_norms=(1.0,) * 5)
        shape = inner.shape
        vals = _closed_sigma_bar_arrays(
            spec,
            np.broadcast_to(da, shape).ravel(),
            inner.ravel(),
            np.broadcast_to(db, shape).ravel(),
        )
        return vals.reshape(shape)
    if model.kind == "zonal_profile":
        return np.asarray(model.profile(inner.ravel()), dtype=float).reshape(inner.shape)
    raise ValueError(f"unknown kernel kind {model.kind!r}")


def unit_sphere_profile(model: KernelModel) -> Callable[[np.ndarray], np.ndarray]:
    """The scalar profile f with K(x, y) = f(x^T y) for unit-sphere inputs."""

    def f(t: np.ndarray) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        ones = np.ones_like(t)
        if model.kind == "recursion":
            if model.depth == 0:
                return t
            return _recursion_triples(model, ones, t, ones)
        if model.kind == "closed_gaussian":
            return 1.0 / np.sqrt(4.0 - t * t)
        if model.kind in ("closed_cos", "closed_sin"):
            a2 = model.a**2
            scale = math.exp(-a2)
            if model.kind == "closed_cos":
                return scale * np.cosh(a2 * t)
            return scale * np.sinh(a2 * t)
        if model.kind == "zonal_profile":
            return np.asarray(model.profile(t), dtype=float)
        raise ValueError(f"unknown kernel kind {model.kind!r}")

    return f


def deviation_bound(
    spec: ActivationSpec, widths: list[int] | tuple[int, ...], depth: int
) -> float:
    """Shape of the finite-width kernel deviation bound, universal constant
    set to 1.

    ``widths`` holds the hidden widths n_1 .. n_{L-1}; the bound is

        ||s||^4 max(||s''''|| ||s||, ||s'''|| ||s'||, ||s''||^2)
            * sum_j C2^(2L - 2j) (L - j) / n_j.

    It is meant for relative comparisons (scaling in the widths), not as an
    absolute certificate.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if len(widths) != depth - 1:
        raise ValueError(f"expected {depth - 1} widths (n_1..n_{{L-1}})")
    if any(w < 1 for w in widths):
        raise ValueError("widths must be >= 1")
    s = spec.sup_norms
    if not all(math.isfinite(v) for v in s):
        raise UnboundedActivationError(
            f"{spec.name}: unbounded derivative; deviation bound undefined"
        )
    if depth == 1:
        return 0.0
    c2 = bound_constants(spec).c2
    lead = s[0] ** 4 * max(s[4] * s[0], s[3] * s[1], s[2] ** 2)
    total = sum(
        c2 ** (2 * depth - 2 * j) * (depth - j) / widths[j - 1]
        for j in range(1, depth)
    )
    return lead * total
