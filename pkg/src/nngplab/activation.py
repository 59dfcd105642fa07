"""Activation functions with hand-coded derivatives and sup-norm bookkeeping.

Each activation carries its derivatives up to order 4 and the corresponding
sup-norms ``sup_norms[j] = sup_x |d^j sigma(x)|`` (``inf`` when the derivative
is unbounded or does not exist).  The sup-norms feed the concentration and
deviation bound constants used across the library.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf as _erf, expit as _expit

__all__ = [
    "ActivationSpec",
    "BoundConstants",
    "UnsupportedDerivativeError",
    "UnboundedActivationError",
    "make_activation",
    "parse_activation",
    "eval",
    "bound_constants",
    "ACTIVATION_NAMES",
]

ACTIVATION_NAMES = (
    "relu",
    "clipped_relu",
    "gaussian",
    "cos",
    "sin",
    "erf",
    "tanh",
    "sigmoid",
    "step",
)

# grid used for numerical sup-norm maximization (design: [-20, 20], step 1e-4)
_GRID_HALF_WIDTH = 20.0
_GRID_STEP = 1e-4


class UnsupportedDerivativeError(ValueError):
    """Raised when (activation, order) has no defined derivative."""


class UnboundedActivationError(ValueError):
    """Raised when a bound requires a sup-norm that is infinite."""


@dataclass(frozen=True)
class ActivationSpec:
    """A named activation, its frequency parameter, and derivative sup-norms.

    ``a`` is only meaningful for ``cos``/``sin`` (sigma(x) = cos(a x) etc.);
    other activations ignore it.  ``sup_norms`` holds the five values
    ``sup|sigma^(j)|`` for j = 0..4, with ``inf`` as the sentinel for
    unbounded or nonexistent derivatives.
    """

    name: str
    a: float
    sup_norms: tuple[float, float, float, float, float]

    def label(self) -> str:
        if self.name in ("cos", "sin"):
            return f"{self.name}:a={self.a:g}"
        return self.name


@dataclass(frozen=True)
class BoundConstants:
    """Constants entering the variance and deviation bounds.

    c_var = 4 * max(||s''|| ||s||, ||s'||^2)^2
    c1    = ||s||^2 * sqrt(max(||s''''|| ||s||, ||s'''|| ||s'||, ||s''||^2))
    c2    = max(2 ||s''|| ||s||, 2 ||s'||^2, 5/2)
    """

    c_var: float
    c1: float
    c2: float


def _d_relu(order: int, a: float, x: np.ndarray) -> np.ndarray:
    if order == 0:
        return np.maximum(x, 0.0)
    if order == 1:
        # convention: derivative at 0 is 0 (right limit is never used in bounds)
        return np.where(x > 0.0, 1.0, 0.0)
    raise UnsupportedDerivativeError(f"relu has no derivative of order {order}")


def _d_clipped_relu(order: int, a: float, x: np.ndarray) -> np.ndarray:
    if order == 0:
        return np.maximum(x, 0.0) - np.maximum(x - 1.0, 0.0)
    if order == 1:
        return np.where((x > 0.0) & (x < 1.0), 1.0, 0.0)
    raise UnsupportedDerivativeError(
        f"clipped_relu has no derivative of order {order}"
    )


def _d_step(order: int, a: float, x: np.ndarray) -> np.ndarray:
    if order == 0:
        return np.where(x > 0.0, 1.0, 0.0)
    raise UnsupportedDerivativeError(f"step has no derivative of order {order}")


def _d_gaussian(order: int, a: float, x: np.ndarray) -> np.ndarray:
    g = np.exp(-0.5 * x * x)
    # d^j exp(-x^2/2) = (-1)^j He_j(x) exp(-x^2/2), He_j probabilists' Hermite
    if order == 0:
        return g
    if order == 1:
        return -x * g
    if order == 2:
        return (x * x - 1.0) * g
    if order == 3:
        return (3.0 * x - x**3) * g
    if order == 4:
        return (x**4 - 6.0 * x * x + 3.0) * g
    raise UnsupportedDerivativeError(f"gaussian derivative order {order}")


def _d_cos(order: int, a: float, x: np.ndarray) -> np.ndarray:
    if not 0 <= order <= 4:
        raise UnsupportedDerivativeError(f"cos derivative order {order}")
    # d^j cos(ax) = a^j cos(ax + j pi/2)
    return a**order * np.cos(a * x + order * (np.pi / 2.0))


def _d_sin(order: int, a: float, x: np.ndarray) -> np.ndarray:
    if not 0 <= order <= 4:
        raise UnsupportedDerivativeError(f"sin derivative order {order}")
    return a**order * np.sin(a * x + order * (np.pi / 2.0))


def _d_erf(order: int, a: float, x: np.ndarray) -> np.ndarray:
    if order == 0:
        return _erf(x)
    c = 2.0 / math.sqrt(math.pi)
    g = np.exp(-x * x)
    if order == 1:
        return c * g
    if order == 2:
        return c * (-2.0 * x) * g
    if order == 3:
        return c * (4.0 * x * x - 2.0) * g
    if order == 4:
        return c * (12.0 * x - 8.0 * x**3) * g
    raise UnsupportedDerivativeError(f"erf derivative order {order}")


def _d_tanh(order: int, a: float, x: np.ndarray) -> np.ndarray:
    t = np.tanh(x)
    s = 1.0 - t * t  # sech^2
    if order == 0:
        return t
    if order == 1:
        return s
    if order == 2:
        return -2.0 * t * s
    if order == 3:
        return s * (6.0 * t * t - 2.0)
    if order == 4:
        return s * t * (16.0 - 24.0 * t * t)
    raise UnsupportedDerivativeError(f"tanh derivative order {order}")


def _d_sigmoid(order: int, a: float, x: np.ndarray) -> np.ndarray:
    s = _expit(x)
    if order == 0:
        return s
    d1 = s * (1.0 - s)
    if order == 1:
        return d1
    if order == 2:
        return d1 * (1.0 - 2.0 * s)
    if order == 3:
        return d1 * (1.0 - 6.0 * s + 6.0 * s * s)
    if order == 4:
        return d1 * (1.0 - 2.0 * s) * (1.0 - 12.0 * s + 12.0 * s * s)
    raise UnsupportedDerivativeError(f"sigmoid derivative order {order}")


_DERIVS = {
    "relu": _d_relu,
    "clipped_relu": _d_clipped_relu,
    "step": _d_step,
    "gaussian": _d_gaussian,
    "cos": _d_cos,
    "sin": _d_sin,
    "erf": _d_erf,
    "tanh": _d_tanh,
    "sigmoid": _d_sigmoid,
}

# orders that exist per activation; everything else raises
_MAX_ORDER = {
    "relu": 1,
    "clipped_relu": 1,
    "step": 0,
    "gaussian": 4,
    "cos": 4,
    "sin": 4,
    "erf": 4,
    "tanh": 4,
    "sigmoid": 4,
}


def _grid_sup(name: str, a: float, order: int) -> float:
    grid = np.arange(-_GRID_HALF_WIDTH, _GRID_HALF_WIDTH + _GRID_STEP, _GRID_STEP)
    return float(np.max(np.abs(_DERIVS[name](order, a, grid))))


def _sup_norms(name: str, a: float) -> tuple[float, ...]:
    inf = math.inf
    if name == "relu":
        return (inf, 1.0, inf, inf, inf)
    if name == "clipped_relu":
        return (1.0, 1.0, inf, inf, inf)
    if name == "step":
        return (1.0, inf, inf, inf, inf)
    if name in ("cos", "sin"):
        return tuple(abs(a) ** j for j in range(5))
    if name == "gaussian":
        return (1.0, math.exp(-0.5), 1.0, _grid_sup(name, a, 3), _grid_sup(name, a, 4))
    # erf / tanh / sigmoid saturate, so the order-0 sup is the limit value;
    # derivative sup-norms come from grid maximization
    sup0 = 1.0
    return (sup0,) + tuple(_grid_sup(name, a, j) for j in range(1, 5))


def make_activation(name: str, a: float = 1.0) -> ActivationSpec:
    """Build an :class:`ActivationSpec`, computing its sup-norms once."""
    if name not in _DERIVS:
        raise ValueError(f"unknown activation {name!r}; known: {ACTIVATION_NAMES}")
    if name in ("cos", "sin") and a == 0.0:
        raise ValueError("cos/sin frequency a must be nonzero")
    return ActivationSpec(name=name, a=float(a), sup_norms=_sup_norms(name, float(a)))


def parse_activation(text: str) -> ActivationSpec:
    """Parse CLI-style activation strings: ``"gaussian"``, ``"cos:a=2.0"``."""
    name, _, params = text.partition(":")
    name = name.strip()
    a = 1.0
    if params:
        for item in params.split(","):
            key, _, value = item.partition("=")
            if key.strip() != "a" or not value:
                raise ValueError(f"malformed activation parameter {item!r}")
            try:
                a = float(value)
            except ValueError as exc:
                raise ValueError(f"malformed activation parameter {item!r}") from exc
    return make_activation(name, a=a)


def eval(spec: ActivationSpec, order: int, x):
    """Evaluate the order-th derivative of the activation at x.

    x may be a scalar or an ndarray; the result matches the input shape.
    Raises :class:`UnsupportedDerivativeError` for a missing derivative
    rather than silently returning zero.
    """
    if not 0 <= order <= 4:
        raise UnsupportedDerivativeError(f"derivative order {order} outside 0..4")
    if order > _MAX_ORDER[spec.name]:
        raise UnsupportedDerivativeError(
            f"{spec.name} has no derivative of order {order}"
        )
    arr = np.asarray(x, dtype=float)
    out = _DERIVS[spec.name](order, spec.a, arr)
    if np.isscalar(x) or arr.ndim == 0:
        return float(out)
    return out


def bound_constants(spec: ActivationSpec) -> BoundConstants:
    """Variance/deviation bound constants from the stored sup-norms.

    Requires all five sup-norms to be finite; relu, clipped_relu and step
    are rejected because their higher derivatives do not exist.
    """
    s = spec.sup_norms
    if not all(math.isfinite(v) for v in s):
        raise UnboundedActivationError(
            f"{spec.name}: unbounded derivative; bound constants undefined"
        )
    c_var = 4.0 * max(s[2] * s[0], s[1] ** 2) ** 2
    c1 = s[0] ** 2 * math.sqrt(max(s[4] * s[0], s[3] * s[1], s[2] ** 2))
    c2 = max(2.0 * s[2] * s[0], 2.0 * s[1] ** 2, 2.5)
    return BoundConstants(c_var=c_var, c1=c1, c2=c2)
