"""Additive signed-measure representation for the representable families.

For ``Linear``, ``QuasiArithmetic`` and ``Entropic`` functionals with
weights ``p`` and utility ``U`` the additive form is

    V_A(g) = sum_{w in A} p_w (U(g_w) - U(0)) / sum_w p_w (U(1) - U(0)),

normalized so that ``V_A(0) = 0`` and ``V_Omega(1) = 1``. Event values
are atom sums, so additivity holds by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .axioms import TOL, TOL_NULL, NullEventSet, null_events
from .functionals import Entropic, Functional, Linear, QuasiArithmetic
from .solver import BisectionConfig, PreconditionError, conditional_chisini
from .space import (
    DEFAULT_EVENT_CAP,
    Event,
    SigmaAlgebra,
    as_random_variable,
    iter_event_masks,
    mask_indices,
    mask_to_indicator,
    sup_norm,
)

TOL_NORM = 1e-12
TOL_REFINE = 1e-10


class RepresentationError(ValueError):
    pass


@dataclass(frozen=True)
class SignedMeasure:
    """Additive set function on ``sigma``, stored as one value per atom."""

    sigma: SigmaAlgebra
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) != self.sigma.k:
            raise ValueError(f"expected {self.sigma.k} atom values, got {len(vals)}")
        object.__setattr__(self, "values", vals)

    def value(self, event: Event | int) -> float:
        mask = event.mask if isinstance(event, Event) else int(event)
        if not self.sigma.contains(mask):
            raise ValueError(f"event {mask:#x} is not measurable")
        return float(sum(self.values[j] for j in self.sigma.atoms_in(mask)))

    __call__ = value

    def total(self) -> float:
        return float(sum(self.values))

    def total_variation(self) -> float:
        return float(sum(abs(v) for v in self.values))

    def __sub__(self, other: "SignedMeasure") -> "SignedMeasure":
        if self.sigma != other.sigma:
            raise ValueError("measures live on different sigma-algebras")
        return SignedMeasure(self.sigma, tuple(a - b for a, b in zip(self.values, other.values)))

    def to_json(self) -> dict:
        return {"atom_masks": list(self.sigma.atoms), "values": list(self.values)}


@dataclass(frozen=True)
class PiGClassification:
    """Whether ``sigma`` has a partition with at least three non-null atoms.

    ``empty_case`` is ``case_i`` (two non-null atoms), ``case_ii`` (one) or
    ``omega_null`` (none) when it does not.
    """

    nonempty: bool
    witness_partition: SigmaAlgebra | None
    empty_case: str | None
    non_null_atoms: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "nonempty": self.nonempty,
            "empty_case": self.empty_case,
            "non_null_atoms": list(self.non_null_atoms),
            "witness_atoms": None if self.witness_partition is None
            else list(self.witness_partition.atoms),
        }


def classify_pi_g(T: Functional, sigma: SigmaAlgebra,
                  null_set: NullEventSet | None = None) -> PiGClassification:
    """Count non-null atoms of the finest partition in ``sigma``."""
    nulls = null_set if null_set is not None else null_events(T, sigma)
    live = tuple(j for j in range(sigma.k) if j not in nulls.null_atoms)
    if len(live) >= 3:
        return PiGClassification(True, sigma, None, live)
    case = {2: "case_i", 1: "case_ii", 0: "omega_null"}[len(live)]
    return PiGClassification(False, None, case, live)


def _utility_increment(T: Functional):
    """``x -> U(x) - U(0)`` for the representable families."""
    if isinstance(T, Entropic):
        gamma = T.gamma
        return lambda x: np.expm1(gamma * np.asarray(x, dtype=float))
    if isinstance(T, (Linear, QuasiArithmetic)):
        u0 = float(T.utility(np.zeros(1))[0])
        return lambda x: T.utility(np.asarray(x, dtype=float)) - u0
    raise RepresentationError(
        f"no closed-form additive representation for the {T.family} family"
    )


def v_measure(T: Functional, sigma: SigmaAlgebra, g) -> SignedMeasure:
    """``A -> V_A(g)``.

    The formula is a sum over outcomes, so ``g`` need not be measurable for
    ``sigma``; callers comparing partitions rely on this.
    """
    du = _utility_increment(T)
    g = as_random_variable(g, T.n)
    p = T.weights
    scale = float(np.dot(p, du(np.ones(T.n))))
    terms = p * du(g) / scale
    return SignedMeasure(sigma, tuple(float(terms[mask_indices(a)].sum()) for a in sigma.atoms))


def induced_probability(T: Functional, sigma: SigmaAlgebra,
                        null_set: NullEventSet | None = None) -> SignedMeasure:
    """``P(A) = V_A(1)``; checks ``P(Omega) = 1``, ``P >= 0`` and that
    ``P`` vanishes exactly on the null atoms."""
    P = v_measure(T, sigma, np.ones(T.n))
    if abs(P.total() - 1.0) > TOL_NORM:
        raise RepresentationError(f"induced probability has total mass {P.total()!r}")
    neg = [j for j, v in enumerate(P.values) if v < -TOL_NORM]
    if neg:
        raise RepresentationError(f"induced probability is negative on atoms {neg}")
    nulls = null_set if null_set is not None else null_events(T, sigma)
    zero = [j for j, v in enumerate(P.values) if abs(v) <= TOL_NORM]
    if zero != sorted(nulls.null_atoms):
        raise RepresentationError(
            f"P vanishes on atoms {zero} but the null atoms are {sorted(nulls.null_atoms)}"
        )
    return P


def _refine(sigma: SigmaAlgebra, measure: SignedMeasure, fine: SignedMeasure) -> float:
    """Largest gap between coarse atom values and sums of fine atom values."""
    gap = 0.0
    for j, a in enumerate(sigma.atoms):
        total = sum(v for b, v in zip(fine.sigma.atoms, fine.values) if b & a == b)
        gap = max(gap, abs(measure.values[j] - total))
    return gap


def v_bracket(T: Functional, f, sigma: SigmaAlgebra, cfg: BisectionConfig | None = None,
              tol: float = TOL) -> SignedMeasure:
    """``A -> V_A[f]``: ``V`` at the conditional Chisini mean of ``f``.

    Also checks that the same values arise from the discrete refinement.
    """
    g = conditional_chisini(T, f, sigma, cfg).g
    measure = v_measure(T, sigma, g)
    fine = v_measure(T, SigmaAlgebra.discrete(T.n), g)
    gap = _refine(sigma, measure, fine)
    if gap > tol:
        raise RepresentationError(f"V[f] depends on the partition (gap {gap:.3e})")
    return measure


def sample_measurable(sigma: SigmaAlgebra, rng: np.random.Generator, count: int,
                      bound: float = 2.0) -> list[np.ndarray]:
    return [sigma.lift(rng.uniform(-bound, bound, sigma.k)) for _ in range(count)]


@dataclass
class CheckReport:
    name: str
    passed: bool
    checked: int
    witness: dict | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"check": self.name, "verdict": "pass" if self.passed else "fail",
               "checked": self.checked}
        if self.witness is not None:
            out["witness"] = self.witness
        out.update(self.details)
        return out


def _sign(x: float, tol: float) -> int:
    return 0 if abs(x) <= tol else (1 if x > 0 else -1)


def check_order_preservation(T: Functional, sigma: SigmaAlgebra, f, g_samples,
                             tol: float = TOL, cap: int = DEFAULT_EVENT_CAP) -> CheckReport:
    """``T(f 1_A)`` vs ``T(g 1_A)`` orders like ``V_A[f]`` vs ``V_A(g)``."""
    f = as_random_variable(f, T.n)
    bracket = v_bracket(T, f, sigma)
    masks = list(iter_event_masks(sigma, cap))
    t_f = {m: T.evaluate(f * mask_to_indicator(m, T.n)) for m in masks}
    checked = 0
    for i, g in enumerate(g_samples):
        g = as_random_variable(g, T.n)
        vg = v_measure(T, sigma, g)
        for m in masks:
            lhs = t_f[m] - T.evaluate(g * mask_to_indicator(m, T.n))
            rhs = bracket.value(m) - vg.value(m)
            checked += 1
            if _sign(lhs, tol) != _sign(rhs, tol):
                return CheckReport("order_preservation", False, checked, {
                    "sample": i, "event": m, "T_gap": lhs, "V_gap": rhs,
                })
    return CheckReport("order_preservation", True, checked)


def check_refinement_consistency(T: Functional, sigma_fine: SigmaAlgebra,
                                 sigma_coarse: SigmaAlgebra, g_samples,
                                 tol: float = TOL_REFINE) -> CheckReport:
    """Coarse ``V_A(g)`` equals the sum of fine ``V_B(g)`` over ``B`` inside ``A``."""
    if not sigma_fine.refines(sigma_coarse):
        raise PreconditionError("sigma_fine does not refine sigma_coarse")
    worst = 0.0
    checked = 0
    for i, g in enumerate(g_samples):
        coarse = v_measure(T, sigma_coarse, g)
        fine = v_measure(T, sigma_fine, g)
        gap = _refine(sigma_coarse, coarse, fine)
        checked += sigma_coarse.k
        worst = max(worst, gap)
        if gap > tol:
            return CheckReport("refinement_consistency", False, checked,
                               {"sample": i, "gap": gap})
    return CheckReport("refinement_consistency", True, checked, details={"max_gap": worst})


def hahn_decomposition(mu: SignedMeasure) -> tuple[Event, Event]:
    """Sign split: atoms with ``mu >= 0`` form the positive set."""
    pos = mu.sigma.atom_union(j for j, v in enumerate(mu.values) if v >= 0)
    n = mu.sigma.n
    return Event(pos, n), Event(mu.sigma.full_mask & ~pos, n)


@dataclass(frozen=True)
class Improvement:
    g: np.ndarray
    epsilon: float
    omega0: Event


def increase_step(T: Functional, f, g, sigma: SigmaAlgebra, epsilon_grid=None,
                  tol: float = TOL, null_set: NullEventSet | None = None,
                  bracket: SignedMeasure | None = None) -> Improvement | None:
    """Raise a sub-solution ``g`` on the positive set of ``V[f] - V(g + eps)``.

    ``g`` must satisfy ``T(f 1_A) >= T(g 1_A)`` on every event. Returns
    ``None`` when no inequality is strict or no grid ``eps`` keeps the
    inequalities while moving a non-null atom.
    """
    f = as_random_variable(f, T.n)
    g = as_random_variable(g, T.n)
    masks = list(iter_event_masks(sigma))
    t_f = {m: T.evaluate(f * mask_to_indicator(m, T.n)) for m in masks}

    def slack(h):
        return {m: t_f[m] - T.evaluate(h * mask_to_indicator(m, T.n)) for m in masks}

    s = slack(g)
    bad = [m for m, v in s.items() if v < -tol]
    if bad:
        raise PreconditionError(f"T(f 1_A) < T(g 1_A) on event mask {bad[0]:#x}")
    if max(s.values()) <= tol:
        return None

    nulls = null_set if null_set is not None else null_events(T, sigma)
    live = sigma.atom_union(j for j in range(sigma.k) if j not in nulls.null_atoms)
    if bracket is None:
        bracket = v_bracket(T, f, sigma)
    if epsilon_grid is None:
        scale = sup_norm(f) or 1.0
        epsilon_grid = scale * 0.5 ** np.arange(41)
    for eps in epsilon_grid:
        mu = bracket - v_measure(T, sigma, g + eps)
        omega0, _ = hahn_decomposition(mu)
        if not omega0.mask & live:
            continue
        candidate = g + eps * omega0.indicator()
        if min(slack(candidate).values()) >= -tol:
            return Improvement(candidate, float(eps), omega0)
    return None
