"""Unconditional and conditional Chisini means on finite sigma-algebras.

On a finitely generated sigma-algebra the conditional mean is built atom by
atom: on each atom ``A`` solve ``T(x 1_A) = T(f 1_A)`` for a scalar ``x``,
then check the whole system ``T(g 1_B) = T(f 1_B)`` over every union ``B``
of atoms. The check is mandatory; functionals that break pasting fail it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .functionals import Functional, scalar_section
from .space import (
    DEFAULT_EVENT_CAP,
    Event,
    SigmaAlgebra,
    as_random_variable,
    atom_values_of,
    is_measurable,
    iter_event_masks,
    mask_to_indicator,
    sup_norm,
)

TOL_SOLVE = 1e-8
TOL_EQ = 1e-7
SAMPLED_UNIONS = 256


class SolverError(RuntimeError):
    pass


class BracketError(SolverError):
    def __init__(self, message, lo=None, hi=None, f_lo=None, f_hi=None, target=None):
        super().__init__(message)
        self.lo, self.hi, self.f_lo, self.f_hi, self.target = lo, hi, f_lo, f_hi, target


class NonMonotoneSection(SolverError):
    pass


class DegenerateFunctional(SolverError):
    pass


class AtomSolveError(SolverError):
    def __init__(self, message, atom: int):
        super().__init__(message)
        self.atom = atom


class PastingViolated(SolverError):
    def __init__(self, message, worst_event: int, residual: float, result=None):
        super().__init__(message)
        self.worst_event = worst_event
        self.residual = residual
        self.result = result


class PreconditionError(SolverError):
    pass


@dataclass(frozen=True)
class BisectionConfig:
    tol_x: float = 1e-12
    tol_f: float = 1e-12
    max_iter: int = 200
    expansion_factor: float = 2.0
    max_expansions: int = 60

    def __post_init__(self):
        if not (self.tol_x > 0 and self.tol_f > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True)
class Root:
    x: float
    iterations: int
    flat: bool = False


def bisect_scalar(section, target: float, lo: float, hi: float, cfg: BisectionConfig | None = None) -> Root:
    """Solve ``section(x) = target`` for a nondecreasing ``section``.

    Stops when the bracket is narrower than ``tol_x`` (or on an exact hit);
    ``tol_f`` is the slack for bracket validity and flatness. A section
    flat over the bracket and equal to the target returns ``x = 0`` with
    ``flat=True``.
    """
    cfg = cfg or BisectionConfig()
    if lo > hi:
        lo, hi = hi, lo
    f_lo, f_hi = section(lo), section(hi)
    if f_lo > f_hi + cfg.tol_f:
        raise NonMonotoneSection(
            f"section is not nondecreasing: s({lo})={f_lo} > s({hi})={f_hi}"
        )
    if f_hi - f_lo <= cfg.tol_f and abs(target - f_lo) <= cfg.tol_f and abs(target - f_hi) <= cfg.tol_f:
        return Root(0.0, 0, flat=True)

    width = max(hi - lo, 1.0)
    for _ in range(cfg.max_expansions):
        if f_lo <= target + cfg.tol_f:
            break
        hi, f_hi = lo, f_lo
        lo -= width
        width *= cfg.expansion_factor
        f_lo = section(lo)
    for _ in range(cfg.max_expansions):
        if f_hi >= target - cfg.tol_f:
            break
        lo, f_lo = hi, f_hi
        hi += width
        width *= cfg.expansion_factor
        f_hi = section(hi)
    if f_lo > target + cfg.tol_f or f_hi < target - cfg.tol_f:
        raise BracketError(
            f"could not bracket target {target!r}: s({lo})={f_lo}, s({hi})={f_hi}",
            lo, hi, f_lo, f_hi, target,
        )

    it = 0
    while it < cfg.max_iter and hi - lo > cfg.tol_x:
        it += 1
        mid = 0.5 * (lo + hi)
        f_mid = section(mid)
        if f_mid == target:
            return Root(mid, it)
        if f_mid < target:
            lo = mid
        else:
            hi = mid
    return Root(0.5 * (lo + hi), it)


def chisini_mean(T: Functional, f, cfg: BisectionConfig | None = None) -> float:
    """The scalar ``m`` with ``T(f) = T(m 1_Omega)``."""
    cfg = cfg or BisectionConfig()
    f = as_random_variable(f, T.n)
    section = scalar_section(T, (1 << T.n) - 1)
    bound = max(sup_norm(f), 1.0)
    if section(bound) - section(-bound) <= cfg.tol_f:
        raise DegenerateFunctional("degenerate functional: T(x 1_Omega) is flat")
    root = bisect_scalar(section, T.evaluate(f), -bound, bound, cfg)
    return root.x


@dataclass(frozen=True)
class Verification:
    residuals: dict[int, float]
    max_residual: float
    worst_event: int
    sampled: bool = False


@dataclass
class ConditionalMeanResult:
    g: np.ndarray
    atom_values: np.ndarray
    null_atoms: list[int]
    max_residual: float
    residuals: dict[int, float]
    iterations: list[int]
    sampled: bool = False
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "atom_values": [float(v) for v in self.atom_values],
            "null_atoms": list(self.null_atoms),
            "max_residual": float(self.max_residual),
            "residuals": {str(m): float(r) for m, r in sorted(self.residuals.items())},
            "iterations": list(self.iterations),
            "sampled": self.sampled,
        }


def _sampled_event_masks(sigma: SigmaAlgebra, rng: np.random.Generator) -> list[int]:
    k = sigma.k
    masks = {0, sigma.full_mask}
    masks.update(sigma.atoms)
    for i in range(k):
        for j in range(i + 1, k):
            masks.add(sigma.atoms[i] | sigma.atoms[j])
    for _ in range(SAMPLED_UNIONS):
        pick = rng.random(k) < 0.5
        masks.add(sigma.atom_union(np.flatnonzero(pick)))
    return sorted(masks)


def verify_system(T: Functional, f, g, sigma: SigmaAlgebra, cap: int = DEFAULT_EVENT_CAP,
                  seed: int = 0) -> Verification:
    """Residuals ``|T(f 1_A) - T(g 1_A)|`` over the events of ``sigma``.

    Above ``cap`` atoms the check covers every atom, every pair of atoms and
    256 random unions, and is flagged as sampled.
    """
    f = as_random_variable(f, T.n)
    g = as_random_variable(g, T.n)
    if sigma.k > cap:
        masks = _sampled_event_masks(sigma, np.random.default_rng(seed))
        sampled = True
    else:
        masks = list(iter_event_masks(sigma, cap))
        sampled = False
    residuals = {}
    worst, worst_mask = -1.0, 0
    for m in masks:
        ind = mask_to_indicator(m, T.n)
        r = abs(T.evaluate(f * ind) - T.evaluate(g * ind))
        residuals[m] = r
        if r > worst:
            worst, worst_mask = r, m
    return Verification(residuals, worst, worst_mask, sampled)


def conditional_chisini(
    T: Functional,
    f,
    sigma: SigmaAlgebra,
    cfg: BisectionConfig | None = None,
    tol_solve: float = TOL_SOLVE,
    null_value: float | np.ndarray = 0.0,
    atom_order=None,
    null_set=None,
    cap: int = DEFAULT_EVENT_CAP,
) -> ConditionalMeanResult:
    """Conditional Chisini mean of ``f`` given ``sigma``.

    Atoms whose section is flat get ``null_value`` (0 by convention; any
    value represents the same class). ``atom_order`` only changes the order
    in which atoms are solved. Pass ``null_set`` from
    :func:`chisini.axioms.null_events` to cross-check flat atoms; a
    mismatch is reported as a warning.
    """
    cfg = cfg or BisectionConfig()
    f = as_random_variable(f, T.n)
    if sigma.n != T.n:
        raise ValueError("sigma-algebra and functional live on different spaces")
    norm = sup_norm(f)
    probe = max(norm, 1.0)
    k = sigma.k
    null_values = np.broadcast_to(np.asarray(null_value, dtype=float), (k,))
    order = range(k) if atom_order is None else [int(j) for j in atom_order]
    if sorted(order) != list(range(k)):
        raise ValueError("atom_order must be a permutation of the atom indices")

    values = np.zeros(k)
    iters = [0] * k
    flat_atoms = []
    for j in order:
        atom = Event(sigma.atoms[j], sigma.n)
        section = scalar_section(T, atom)
        target = T.evaluate(f * atom.indicator())
        s_lo, s_hi = section(-probe), section(probe)
        if s_hi - s_lo <= cfg.tol_f:
            if abs(target) > cfg.tol_f:
                raise AtomSolveError(
                    f"atom {j} has a flat section but T(f 1_A)={target!r} is nonzero", j
                )
            values[j] = null_values[j]
            flat_atoms.append(j)
            continue
        try:
            root = bisect_scalar(section, target, -norm, norm, cfg)
        except SolverError as exc:
            raise AtomSolveError(f"atom {j}: {exc}", j) from exc
        values[j] = root.x
        iters[j] = root.iterations

    notes = []
    flat_atoms.sort()
    if null_set is not None and sorted(null_set.null_atoms) != flat_atoms:
        msg = (f"flat-section atoms {flat_atoms} differ from detected null atoms "
               f"{sorted(null_set.null_atoms)}")
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)

    g = sigma.lift(values)
    check = verify_system(T, f, g, sigma, cap)
    result = ConditionalMeanResult(
        g=g,
        atom_values=values,
        null_atoms=flat_atoms,
        max_residual=check.max_residual,
        residuals=check.residuals,
        iterations=iters,
        sampled=check.sampled,
        warnings=notes,
    )
    if check.max_residual > tol_solve:
        raise PastingViolated(
            f"pasting violated: residual {check.max_residual:.3e} on event mask "
            f"{check.worst_event:#x} exceeds {tol_solve:.1e}",
            check.worst_event, check.max_residual, result,
        )
    return result


@dataclass(frozen=True)
class UniquenessVerdict:
    passed: bool
    difference_atoms: list[int]
    offending_atoms: list[int]


def uniqueness_check(T: Functional, f, g1, g2, sigma: SigmaAlgebra, null_set,
                     tol_solve: float = TOL_SOLVE, tol_eq: float = TOL_EQ) -> UniquenessVerdict:
    """Two solutions may differ only on null atoms."""
    for name, g in (("g1", g1), ("g2", g2)):
        if not is_measurable(g, sigma):
            raise PreconditionError(f"{name} is not measurable with respect to sigma")
        check = verify_system(T, f, g, sigma)
        if check.max_residual > tol_solve:
            raise PreconditionError(
                f"{name} does not solve the system: residual {check.max_residual:.3e} "
                f"on event mask {check.worst_event:#x}"
            )
    diff = np.abs(atom_values_of(g1, sigma) - atom_values_of(g2, sigma))
    differing = [int(j) for j in np.flatnonzero(diff > tol_eq)]
    null = set(null_set.null_atoms)
    offending = [j for j in differing if j not in null]
    return UniquenessVerdict(not offending, differing, offending)


@dataclass
class TowerReport:
    tower: bool
    locality: bool
    monotone: bool
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.tower and self.locality and self.monotone


def tower_and_locality_checks(
    T: Functional,
    f,
    sigma_fine: SigmaAlgebra,
    sigma_coarse: SigmaAlgebra,
    f_upper=None,
    tol_eq: float = TOL_EQ,
    cfg: BisectionConfig | None = None,
) -> TowerReport:
    """Tower property, locality on indicators and monotonicity.

    ``f_upper`` must dominate ``f`` pointwise; it defaults to
    ``f + max(f, 0)``.
    """
    if not sigma_fine.refines(sigma_coarse):
        raise PreconditionError("sigma_fine does not refine sigma_coarse")
    f = as_random_variable(f, T.n)
    coarse = conditional_chisini(T, f, sigma_coarse, cfg)
    live = np.ones(T.n, dtype=bool)
    for j in coarse.null_atoms:
        live &= mask_to_indicator(sigma_coarse.atoms[j], T.n) == 0

    fine = conditional_chisini(T, f, sigma_fine, cfg)
    iterated = conditional_chisini(T, fine.g, sigma_coarse, cfg)
    tower_gap = float(np.max(np.abs(iterated.g - coarse.g)[live], initial=0.0))

    local_gap = 0.0
    for m in iter_event_masks(sigma_coarse):
        ind = mask_to_indicator(m, T.n)
        res = conditional_chisini(T, f * ind, sigma_coarse, cfg)
        local_gap = max(local_gap, float(np.max(np.abs(res.g - coarse.g * ind)[live], initial=0.0)))

    if f_upper is None:
        f_upper = f + np.maximum(f, 0.0)
    f_upper = as_random_variable(f_upper, T.n)
    if np.any(f_upper < f):
        raise PreconditionError("f_upper must dominate f pointwise")
    upper = conditional_chisini(T, f_upper, sigma_coarse, cfg)
    order_gap = float(np.max((coarse.g - upper.g)[live], initial=0.0))

    return TowerReport(
        tower=tower_gap <= tol_eq,
        locality=local_gap <= tol_eq,
        monotone=order_gap <= tol_eq,
        details={"tower_gap": tower_gap, "locality_gap": local_gap, "order_gap": order_gap},
    )
