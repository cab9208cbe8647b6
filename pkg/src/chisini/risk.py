"""Conditional convex risk measures, their scalarization and reconstruction.

Sign conventions, in one place:

* ``rho0(X) = E_P[rho_G(X)]``.
* The functional handed to the solver is ``T(f) = rho0(-f)``. For
  measurable ``g`` this gives ``T(g 1_A) = E_P[g 1_A]``, so ``T`` is linear
  on measurable functions and its induced probability is ``P`` itself.
* With ``m(f|G)`` the conditional Chisini mean of ``T``, cash additivity
  and locality give ``m(f|G) = rho_G(-f)``. The reconstruction is therefore
  ``rho_G(X) = m(-X|G)``.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .axioms import AxiomReport, check_g_ps
from .functionals import Tabulated
from .solver import SolverError, conditional_chisini
from .space import SigmaAlgebra, as_random_variable, mask_indices

TOL = 1e-9
TOL_ROUNDTRIP = 1e-8
TOL_QUANTIZED = 1e-6


class RiskError(ValueError):
    pass


def atom_masses(sigma: SigmaAlgebra, P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.shape != (sigma.n,):
        raise RiskError(f"expected {sigma.n} outcome probabilities, got shape {P.shape}")
    if np.any(P < 0) or abs(P.sum() - 1.0) > 1e-12:
        raise RiskError("P must be a probability vector")
    return np.array([P[mask_indices(a)].sum() for a in sigma.atoms])


class ConditionalRiskMeasure:
    """``X -> rho_G(X)``; subclasses implement ``_atom_value``."""

    family = "abstract"

    def _atom_value(self, x: np.ndarray, q: np.ndarray) -> float:
        raise NotImplementedError

    def evaluate(self, X, sigma: SigmaAlgebra, P) -> np.ndarray:
        X = as_random_variable(X, sigma.n)
        P = np.asarray(P, dtype=float)
        masses = atom_masses(sigma, P)
        vals = np.zeros(sigma.k)
        for j, a in enumerate(sigma.atoms):
            if masses[j] <= 0:
                continue
            idx = mask_indices(a)
            vals[j] = self._atom_value(X[idx], P[idx] / masses[j])
        return sigma.lift(vals)

    def to_dict(self) -> dict:
        return {"family": self.family}


@dataclass
class EntropicRM(ConditionalRiskMeasure):
    """``(1/gamma) log E_P[exp(-gamma X) | G]``."""

    gamma: float = 1.0
    family = "entropic"

    def __post_init__(self):
        if not self.gamma > 0:
            raise RiskError("gamma must be positive")

    def _atom_value(self, x, q):
        y = -self.gamma * x
        pos = q > 0
        m = y[pos].max()
        return float((m + np.log(np.dot(q[pos], np.exp(y[pos] - m)))) / self.gamma)

    def to_dict(self):
        return {"family": self.family, "gamma": self.gamma}


@dataclass
class ConditionalEV(ConditionalRiskMeasure):
    """``-E_P[X | G]``."""

    family = "conditional_ev"

    def _atom_value(self, x, q):
        return -float(np.dot(q, x))


@dataclass
class TabulatedRM(ConditionalRiskMeasure):
    """Atom-wise callback ``(values on atom, conditional weights) -> float``."""

    callback: Callable[[np.ndarray, np.ndarray], float]
    name: str = "callback"
    family = "tabulated"

    def _atom_value(self, x, q):
        return float(self.callback(x, q))

    def to_dict(self):
        return {"family": self.family, "expression": self.name}


def evaluate_conditional(rm: ConditionalRiskMeasure, X, sigma: SigmaAlgebra, P) -> np.ndarray:
    return rm.evaluate(X, sigma, P)


@dataclass
class ScalarRiskFunctional:
    evaluate: Callable[[np.ndarray], float]
    provenance: str
    n: int

    def __call__(self, X) -> float:
        return float(self.evaluate(as_random_variable(X, self.n)))


def scalarize(rm: ConditionalRiskMeasure, sigma: SigmaAlgebra, P) -> ScalarRiskFunctional:
    """``rho0(X) = E_P[rho_G(X)]``."""
    P = np.asarray(P, dtype=float)
    atom_masses(sigma, P)
    rho0 = ScalarRiskFunctional(lambda X: float(np.dot(P, rm.evaluate(X, sigma, P))),
                                "scalarized", sigma.n)
    if abs(rho0(np.zeros(sigma.n))) > TOL:
        raise RiskError("scalarized functional does not vanish at 0")
    return rho0


def mean_variance_rho0(P, coeff: float = 0.1) -> ScalarRiskFunctional:
    """``-E_P[X] + coeff Var_P(X)``; translation-invariant only for constants."""
    P = np.asarray(P, dtype=float)

    def rho(X):
        m = float(np.dot(P, X))
        return -m + coeff * float(np.dot(P, (X - m) ** 2))

    return ScalarRiskFunctional(rho, "user", P.size)


@dataclass
class CheckSuite:
    reports: list[AxiomReport] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    def get(self, name: str) -> AxiomReport:
        for r in self.reports:
            if r.axiom == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "reports": [r.to_dict() for r in self.reports]}


def _live_mask(sigma: SigmaAlgebra, P) -> np.ndarray:
    return sigma.lift((atom_masses(sigma, P) > 0).astype(float)) > 0


def _report(name, bad, witness, samples, tol, note=""):
    return AxiomReport(name, "fail" if bad else "pass", witness if bad else None,
                       samples, tol, "sampled", note)


def check_conditional_axioms(rm: ConditionalRiskMeasure, sigma: SigmaAlgebra, P,
                             rng_seed: int = 0, n_samples: int = 200, tol: float = TOL,
                             bound: float = 2.0) -> CheckSuite:
    """Sampled monotonicity, cash additivity, convexity and locality,
    asserted off zero-probability atoms."""
    rng = np.random.default_rng(rng_seed)
    n, k = sigma.n, sigma.k
    live = _live_mask(sigma, P)

    def rho(X):
        return rm.evaluate(X, sigma, P)

    def worst(a, b):
        d = (a - b)[live]
        return float(d.max(initial=-np.inf))

    found: dict[str, dict] = {}
    for _ in range(n_samples):
        X = rng.uniform(-bound, bound, n)
        Y = X + rng.uniform(0, bound, n) * (rng.random(n) < 0.5)
        c = sigma.lift(rng.uniform(-bound, bound, k))
        lam = sigma.lift(rng.random(k))
        A = sigma.atom_union(np.flatnonzero(rng.random(k) < 0.5))
        ind = sigma.lift(np.array([1.0 if a & A else 0.0 for a in sigma.atoms]))
        rX, rY = rho(X), rho(Y)

        if "Monotone" not in found and worst(rY, rX) > tol:
            found["Monotone"] = {"X": X.tolist(), "Y": Y.tolist(),
                                 "rho_X": rX.tolist(), "rho_Y": rY.tolist()}
        rc = rho(X + c)
        if "CashAdditive" not in found and np.max(np.abs(rc - (rX - c))[live], initial=0) > tol:
            found["CashAdditive"] = {"X": X.tolist(), "c": c.tolist(),
                                     "rho_X_plus_c": rc.tolist(), "rho_X": rX.tolist()}
        Z = rng.uniform(-bound, bound, n)
        rZ = rho(Z)
        mix = rho(lam * X + (1 - lam) * Z)
        if "Convex" not in found and worst(mix, lam * rX + (1 - lam) * rZ) > tol:
            found["Convex"] = {"X1": X.tolist(), "X2": Z.tolist(), "Lambda": lam.tolist(),
                               "lhs": mix.tolist(), "rhs": (lam * rX + (1 - lam) * rZ).tolist()}
        loc = rho(X * ind)
        if "Local" not in found and np.max(np.abs(loc - rX * ind)[live], initial=0) > tol:
            found["Local"] = {"X": X.tolist(), "event": A,
                              "rho_X_1A": loc.tolist(), "rho_X_times_1A": (rX * ind).tolist()}

    return CheckSuite([
        _report(name, name in found, found.get(name), n_samples, tol)
        for name in ("Monotone", "CashAdditive", "Convex", "Local")
    ])


def solver_functional(rho0: ScalarRiskFunctional) -> Tabulated:
    """``T(f) = rho0(-f)``."""
    return Tabulated(rho0.n, lambda f: rho0(-np.asarray(f, dtype=float)), name="rho0(-f)")


def _random_groups(rng, k: int) -> list[list[int]]:
    N = int(rng.integers(1, k + 1))
    labels = rng.integers(0, N, k)
    return [list(np.flatnonzero(labels == j)) for j in range(N) if np.any(labels == j)]


def check_scalarization_conditions(rho0: ScalarRiskFunctional, sigma: SigmaAlgebra, P,
                                   rng_seed: int = 0, n_samples: int = 100,
                                   tol: float = TOL, bound: float = 2.0,
                                   n_pasting: int = 5) -> CheckSuite:
    """The four conditions under which ``rho0`` is a scalarization.

    1. ``rho0(X + Y) = rho0(X) - E_P[Y]`` for measurable ``Y``.
    2. ``X1 <= X2`` implies ``rho0(X1) >= rho0(X2)``.
    3. ``f -> rho0(-f)`` satisfies G-PS (checked at sampled ``f``).
    4. Convexity with a simple measurable ``Lambda``:
       ``rho0(Lambda X1 + (1 - Lambda) X2)
       <= sum_j lambda_j rho0(X1 1_Aj) + (1 - lambda_j) rho0(X2 1_Aj)``.
    """
    rng = np.random.default_rng(rng_seed)
    P = np.asarray(P, dtype=float)
    n, k = sigma.n, sigma.k
    found: dict[str, dict] = {}
    for _ in range(n_samples):
        X = rng.uniform(-bound, bound, n)
        Y = sigma.lift(rng.uniform(-bound, bound, k))
        r = rho0(X)
        lhs, rhs = rho0(X + Y), r - float(np.dot(P, Y))
        if "Translation" not in found and abs(lhs - rhs) > tol:
            found["Translation"] = {"X": X.tolist(), "Y": Y.tolist(),
                                    "rho0_X_plus_Y": lhs, "rho0_X_minus_EY": rhs}
        X2 = X + rng.uniform(0, bound, n) * (rng.random(n) < 0.5)
        r2 = rho0(X2)
        if "Monotone" not in found and r2 > r + tol:
            found["Monotone"] = {"X1": X.tolist(), "X2": X2.tolist(),
                                 "rho0_X1": r, "rho0_X2": r2}
        Z = rng.uniform(-bound, bound, n)
        groups = _random_groups(rng, k)
        lams = rng.random(len(groups))
        gap, lam_full = convexity_gap(rho0, sigma, X, Z, groups, lams)
        if "Convex" not in found and gap > tol:
            found["Convex"] = {"X1": X.tolist(), "X2": Z.tolist(), "Lambda": lam_full.tolist(),
                               "groups": [list(map(int, g)) for g in groups], "gap": gap}

    reports = [_report(name, name in found, found.get(name), n_samples, tol)
               for name in ("Translation", "Monotone")]

    T = solver_functional(rho0)
    ps = None
    for i in range(n_pasting):
        f = rng.uniform(-bound, bound, n)
        ps = check_g_ps(T, sigma, f, rng_seed=rng_seed + i)
        if ps.verdict != "pass":
            ps.witness = dict(ps.witness or {}, f=f.tolist())
            break
    ps.axiom = "Pasting"
    ps.samples = ps.samples if ps.verdict != "pass" else ps.samples * n_pasting
    reports.append(ps)
    reports.append(_report("Convex", "Convex" in found, found.get("Convex"), n_samples, tol))
    return CheckSuite(reports)


def convexity_gap(rho0: ScalarRiskFunctional, sigma: SigmaAlgebra, X1, X2, groups, lams):
    """LHS minus RHS of the simple-Lambda convexity inequality.

    ``groups`` lists atom indices of each ``A_j``; returns the gap and the
    resulting ``Lambda`` as an outcome vector.
    """
    lam_atoms = np.zeros(sigma.k)
    total = 0.0
    for atoms, lam in zip(groups, lams):
        lam_atoms[atoms] = lam
        ind = sigma.lift(np.isin(np.arange(sigma.k), atoms).astype(float))
        total += lam * rho0(X1 * ind) + (1 - lam) * rho0(X2 * ind)
    Lam = sigma.lift(lam_atoms)
    return rho0(Lam * X1 + (1 - Lam) * X2) - total, Lam


def check_quantized_convexity(rho0: ScalarRiskFunctional, sigma: SigmaAlgebra,
                              rng_seed: int = 0, n_paths: int = 10, levels: int = 8,
                              tol: float = TOL_QUANTIZED, bound: float = 2.0) -> AxiomReport:
    """Convexity for unrestricted ``Lambda`` via its ``levels``-level quantization.

    For each random ``Lambda`` the inequality must hold for the quantized
    version, for its refinement to ``2 * levels`` levels, and for
    ``Lambda`` itself (one group per atom).
    """
    rng = np.random.default_rng(rng_seed)
    k = sigma.k
    for i in range(n_paths):
        lam = rng.random(k)
        X1 = rng.uniform(-bound, bound, sigma.n)
        X2 = rng.uniform(-bound, bound, sigma.n)
        for L in (levels, 2 * levels, None):
            if L is None:
                groups, lams = [[j] for j in range(k)], lam
            else:
                q = np.round(lam * L).astype(int)
                vals = sorted(set(q.tolist()))
                groups = [list(np.flatnonzero(q == v)) for v in vals]
                lams = np.array(vals, dtype=float) / L
            gap, _ = convexity_gap(rho0, sigma, X1, X2, groups, lams)
            if gap > tol:
                return AxiomReport("QuantizedConvex", "fail", {
                    "path": i, "levels": L, "Lambda": lam.tolist(), "gap": gap,
                }, i + 1, tol, "sampled")
    return AxiomReport("QuantizedConvex", "pass", None, n_paths, tol, "sampled")


class ReconstructedRM(ConditionalRiskMeasure):
    """``rho_G(X) = m(-X | G)`` for ``T(f) = rho0(-f)``.

    Results are cached per ``X``; the cache is guarded by a lock so
    concurrent readers see either nothing or a finished entry.
    """

    family = "reconstructed"

    def __init__(self, rho0: ScalarRiskFunctional, sigma: SigmaAlgebra, P_hint=None,
                 tol_solve: float = TOL_ROUNDTRIP):
        self.rho0 = rho0
        self.sigma = sigma
        self.T = solver_functional(rho0)
        self.tol_solve = tol_solve
        # For measurable g, T(g 1_A) = E_P[g 1_A], so T(1_A) is the induced P(A).
        self.induced_P = np.array([self.T.evaluate(sigma.lift(np.eye(sigma.k)[j]))
                                   for j in range(sigma.k)])
        self.notes: list[str] = []
        if P_hint is not None:
            hint = atom_masses(sigma, P_hint)
            gap = float(np.max(np.abs(hint - self.induced_P)))
            if gap > 1e-9:
                self.notes.append(f"induced P differs from the supplied P by {gap:.3e}")
        self._cache: dict[bytes, np.ndarray] = {}
        self._lock = threading.Lock()

    def evaluate(self, X, sigma: SigmaAlgebra | None = None, P=None) -> np.ndarray:
        if sigma is not None and sigma != self.sigma:
            raise RiskError("reconstructed measure is bound to a different sigma-algebra")
        X = as_random_variable(X, self.sigma.n)
        key = X.tobytes()
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit.copy()
        try:
            g = conditional_chisini(self.T, -X, self.sigma, tol_solve=self.tol_solve).g
        except SolverError as exc:
            raise RiskError(f"reconstruction failed at X={X.tolist()}: {exc}") from exc
        with self._lock:
            self._cache.setdefault(key, g)
        return g.copy()


def reconstruct_conditional(rho0: ScalarRiskFunctional, sigma: SigmaAlgebra,
                            P_hint=None) -> ReconstructedRM:
    rm = ReconstructedRM(rho0, sigma, P_hint)
    if np.any(np.abs(rm.evaluate(np.zeros(sigma.n))) > TOL_ROUNDTRIP):
        raise RiskError("reconstructed measure does not vanish at 0")
    return rm


@dataclass
class RoundTrip:
    residuals: list[float]
    scalar_residuals: list[float]

    @property
    def max_residual(self) -> float:
        return max(self.residuals, default=0.0)

    def to_dict(self) -> dict:
        return {"residuals": self.residuals, "scalar_residuals": self.scalar_residuals,
                "max_residual": self.max_residual}


def roundtrip(rm: ConditionalRiskMeasure, sigma: SigmaAlgebra, P, rng_seed: int = 0,
              n_X: int = 20, bound: float = 2.0) -> RoundTrip:
    """Per-``X`` atom-wise gap between ``rm`` and its reconstruction from ``rho0``,
    plus ``|E_P[rho_G(X)] - rho0(X)|`` for the reconstruction."""
    rho0 = scalarize(rm, sigma, P)
    rec = reconstruct_conditional(rho0, sigma, P)
    return roundtrip_against(rec, rho0, sigma, P, rm, rng_seed, n_X, bound)


def roundtrip_against(rec: ReconstructedRM, rho0: ScalarRiskFunctional, sigma: SigmaAlgebra,
                      P, rm: ConditionalRiskMeasure | None = None, rng_seed: int = 0,
                      n_X: int = 20, bound: float = 2.0) -> RoundTrip:
    rng = np.random.default_rng(rng_seed)
    P = np.asarray(P, dtype=float)
    live = _live_mask(sigma, P)
    res, sres = [], []
    for _ in range(n_X):
        X = rng.uniform(-bound, bound, sigma.n)
        r = rec.evaluate(X)
        if rm is not None:
            res.append(float(np.max(np.abs(r - rm.evaluate(X, sigma, P))[live], initial=0.0)))
        sres.append(abs(float(np.dot(P, r)) - rho0(X)))
    if rm is None:
        res = sres
    return RoundTrip(res, sres)
