"""Catalog of functionals ``T`` on random variables over a finite space.

Every functional is shifted at construction so that ``T(0) == 0``; the
shift does not change the solutions of ``T(g 1_A) = T(f 1_A)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .space import (
    Event,
    SigmaAlgebra,
    as_random_variable,
    mask_indices,
    mask_to_indicator,
)

UNAVAILABLE = "unavailable"
DEFAULT_BOUND = 10.0


class FunctionalError(ValueError):
    pass


def _check_weights(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise FunctionalError("weights must be a nonempty vector")
    if np.any(~np.isfinite(p)) or np.any(p < 0):
        raise FunctionalError("weights must be finite and nonnegative")
    if abs(p.sum() - 1.0) > 1e-12:
        raise FunctionalError(f"weights must sum to 1 (sum={p.sum()!r})")
    p = p.copy()
    p.setflags(write=False)
    return p


class Functional:
    """Base class: subclasses implement ``_raw`` and set ``n``."""

    family: str = "abstract"
    n: int
    _offset: float = 0.0

    def _raw(self, f: np.ndarray) -> float:
        raise NotImplementedError

    def _normalize(self):
        self._offset = 0.0
        self._offset = float(self._raw(np.zeros(self.n)))

    def evaluate(self, f) -> float:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.n,):
            raise FunctionalError(f"expected a vector of length {self.n}, got {f.shape}")
        value = float(self._raw(f)) - self._offset
        if np.isnan(value):
            raise FunctionalError(f"{self.family} functional returned NaN at f={f.tolist()}")
        return value

    __call__ = evaluate

    @property
    def representable(self) -> bool:
        """Whether an explicit additive utility form is known."""
        return False

    def to_dict(self) -> dict:
        return {"family": self.family}


class Linear(Functional):
    family = "linear"

    def __init__(self, weights):
        self.weights = _check_weights(weights)
        self.n = self.weights.size
        self._normalize()

    def _raw(self, f):
        return float(np.dot(self.weights, f))

    @property
    def representable(self):
        return True

    def utility(self, x):
        return np.asarray(x, dtype=float)

    def inverse_utility(self, y):
        return np.asarray(y, dtype=float)


class QuasiArithmetic(Functional):
    """``T(f) = sum_w p_w U(f_w) - U(0)`` for a strictly increasing ``U``.

    ``U`` must accept numpy arrays. When ``inverse`` is omitted the closed
    form conditional inverts ``U`` by bisection.
    """

    family = "quasi_arithmetic"

    def __init__(
        self,
        weights,
        utility: Callable,
        inverse: Callable | None = None,
        bound: float = DEFAULT_BOUND,
        name: str | None = None,
    ):
        self.weights = _check_weights(weights)
        self.n = self.weights.size
        self._u = utility
        self._u_inv = inverse
        self.bound = float(bound)
        self.name = name or getattr(utility, "__name__", "U")
        grid = np.linspace(-self.bound, self.bound, 101)
        vals = np.asarray(utility(grid), dtype=float)
        if vals.shape != grid.shape or not np.all(np.isfinite(vals)):
            raise FunctionalError("utility must map arrays to finite arrays of equal shape")
        if not np.all(np.diff(vals) > 0):
            raise FunctionalError(
                f"utility {self.name!r} is not strictly increasing on [-{self.bound}, {self.bound}]"
            )
        self._normalize()

    def _raw(self, f):
        return float(np.dot(self.weights, self._u(f)))

    @property
    def representable(self):
        return True

    def utility(self, x):
        return np.asarray(self._u(np.asarray(x, dtype=float)), dtype=float)

    def inverse_utility(self, y):
        if self._u_inv is not None:
            return np.asarray(self._u_inv(np.asarray(y, dtype=float)), dtype=float)
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return np.array([_invert_increasing(self._u, t, self.bound) for t in y])

    def to_dict(self):
        return {"family": self.family, "utility": self.name}


def _invert_increasing(u: Callable, target: float, bound: float, tol: float = 1e-12) -> float:
    lo, hi = -bound, bound
    for _ in range(200):
        if float(u(np.array([lo]))[0]) <= target:
            break
        lo *= 2
    for _ in range(200):
        if float(u(np.array([hi]))[0]) >= target:
            break
        hi *= 2
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if float(u(np.array([mid]))[0]) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class Entropic(Functional):
    """``T(f) = (1/gamma) log sum_w p_w exp(gamma f_w)``."""

    family = "entropic"

    def __init__(self, weights, gamma: float):
        self.weights = _check_weights(weights)
        if not gamma > 0:
            raise FunctionalError("gamma must be positive")
        self.gamma = float(gamma)
        self.n = self.weights.size
        self._support = self.weights > 0
        self._normalize()

    def _raw(self, f):
        p = self.weights[self._support]
        x = self.gamma * np.asarray(f, dtype=float)[self._support]
        m = x.max()
        # log1p/expm1 keeps precision when gamma is tiny
        return (m + np.log1p(np.dot(p, np.expm1(x - m)))) / self.gamma

    @property
    def representable(self):
        return True

    def utility(self, x):
        return np.exp(self.gamma * np.asarray(x, dtype=float))

    def inverse_utility(self, y):
        return np.log(np.asarray(y, dtype=float)) / self.gamma

    def to_dict(self):
        return {"family": self.family, "gamma": self.gamma}


DISTORTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "square": lambda t: np.asarray(t, dtype=float) ** 2,
    "sqrt": lambda t: np.sqrt(np.asarray(t, dtype=float)),
    "identity": lambda t: np.asarray(t, dtype=float),
}


class Choquet(Functional):
    """Choquet integral of ``f`` under the capacity ``w(P(.))``.

    Sort-and-telescope form: with values in decreasing order,
    ``C(f) = sum_i f_(i) [w(P(top i)) - w(P(top i-1))]``. Not additive for
    nonlinear ``w``, which is why it is in the catalog.
    """

    family = "choquet"

    def __init__(self, weights, distortion: Callable | str = "square"):
        self.weights = _check_weights(weights)
        self.n = self.weights.size
        if isinstance(distortion, str):
            if distortion not in DISTORTIONS:
                raise FunctionalError(f"unknown distortion {distortion!r}")
            self.distortion_name = distortion
            distortion = DISTORTIONS[distortion]
        else:
            self.distortion_name = getattr(distortion, "__name__", "w")
        self._w = distortion
        ends = np.asarray(distortion(np.array([0.0, 1.0])), dtype=float)
        if abs(ends[0]) > 1e-12 or abs(ends[1] - 1.0) > 1e-12:
            raise FunctionalError("distortion must satisfy w(0)=0 and w(1)=1")
        self._normalize()

    def _raw(self, f):
        order = np.argsort(-f, kind="stable")
        cum = np.minimum(np.cumsum(self.weights[order]), 1.0)
        cap = np.asarray(self._w(cum), dtype=float)
        inc = np.diff(np.concatenate(([0.0], cap)))
        return float(np.dot(f[order], inc))

    def to_dict(self):
        return {"family": self.family, "distortion": self.distortion_name}


class Tabulated(Functional):
    """Arbitrary user evaluation ``callback(f) -> float``.

    The callback must be pure; a determinism spot-check runs at
    construction.
    """

    family = "tabulated"

    def __init__(self, n: int, callback: Callable, weights=None, name: str = "callback"):
        self.n = int(n)
        self.weights = None if weights is None else _check_weights(weights)
        self._cb = callback
        self.name = name
        probe = np.linspace(-1.0, 1.0, self.n) if self.n > 1 else np.array([0.5])
        a, b = float(callback(probe)), float(callback(probe.copy()))
        if not (a == b or (np.isnan(a) and np.isnan(b))):
            raise FunctionalError("tabulated callback is not deterministic")
        self._normalize()

    def _raw(self, f):
        return float(self._cb(f))

    def to_dict(self):
        return {"family": self.family, "expression": self.name}


@dataclass
class ScalarSection:
    """``x -> T(x 1_A)`` for a fixed event."""

    functional: Functional
    event: Event
    bound: float = DEFAULT_BOUND

    def __post_init__(self):
        self._ind = mask_to_indicator(self.event.mask, self.functional.n)

    def __call__(self, x: float) -> float:
        return self.functional.evaluate(x * self._ind)

    def bracket(self) -> tuple[float, float]:
        return -self.bound, self.bound


def evaluate(T: Functional, f) -> float:
    return T.evaluate(as_random_variable(f, T.n))


def scalar_section(T: Functional, event: Event | int, bound: float = DEFAULT_BOUND) -> ScalarSection:
    if not isinstance(event, Event):
        event = Event(int(event), T.n)
    return ScalarSection(T, event, bound)


def closed_form_conditional(T: Functional, f, sigma: SigmaAlgebra):
    """``U^{-1} E_p[U(f) | G]`` atom by atom, or ``UNAVAILABLE``.

    Atoms of zero weight get the value 0.
    """
    if not isinstance(T, (Linear, QuasiArithmetic, Entropic)):
        return UNAVAILABLE
    f = as_random_variable(f, T.n)
    p = T.weights
    g = np.zeros(T.n)
    for a in sigma.atoms:
        idx = mask_indices(a)
        mass = p[idx].sum()
        if mass <= 0:
            continue
        if isinstance(T, Entropic):
            x = T.gamma * f[idx]
            pos = p[idx] > 0
            m = x[pos].max()
            value = (m + np.log(np.dot(p[idx], np.exp(x - m)) / mass)) / T.gamma
        else:
            mean_u = np.dot(p[idx], T.utility(f[idx])) / mass
            value = float(np.atleast_1d(T.inverse_utility(mean_u))[0])
        g[idx] = value
    return g
