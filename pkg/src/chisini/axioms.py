"""Falsification checks for the axioms a functional needs for conditional means.

Each checker returns an :class:`AxiomReport`. A ``fail`` verdict always
carries a witness that reproduces the violation when re-evaluated; a
``pass`` only means no violation was found among the tested inputs.

Small instances (at most 4 atoms and a value grid of at most 5 points) are
checked exhaustively over all grid-valued measurable functions; larger
ones by seeded random sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .functionals import Functional, scalar_section
from .space import (
    DEFAULT_EVENT_CAP,
    SigmaAlgebra,
    as_random_variable,
    disjoint_event_pairs,
    iter_event_masks,
    mask_to_indicator,
    sup_norm,
)

TOL = 1e-9
TOL_STRICT = 1e-12
TOL_NULL = 1e-10
TOL_PS = 1e-9
DEFAULT_VALUE_GRID = (-2.0, -1.0, 0.0, 1.0, 2.0)
DEFAULT_SAMPLES = 500
EXHAUSTIVE_MAX_ATOMS = 4
EXHAUSTIVE_MAX_GRID = 5
MAX_PS_PAIRS = 20000

PASS, FAIL, VACUOUS, INAPPLICABLE = "pass", "fail", "vacuous", "inapplicable"


@dataclass
class AxiomReport:
    axiom: str
    verdict: str
    witness: dict | None = None
    samples: int = 0
    tolerance: float = TOL
    mode: str = "exhaustive"
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict != FAIL

    def to_dict(self) -> dict:
        out = {"axiom": self.axiom, "verdict": self.verdict}
        if self.witness is not None:
            out["witness"] = self.witness
        out["samples"] = self.samples
        out["tolerance"] = self.tolerance
        out["mode"] = self.mode
        if self.note:
            out["note"] = self.note
        return out


@dataclass(frozen=True)
class NullEventSet:
    sigma: SigmaAlgebra
    null_atoms: tuple[int, ...]
    x_grid: tuple[float, ...]

    @property
    def null_mask(self) -> int:
        return self.sigma.atom_union(self.null_atoms)

    def is_null(self, mask: int) -> bool:
        """Events are null iff they are unions of null atoms."""
        return mask & ~self.null_mask == 0

    def to_dict(self) -> dict:
        return {"null_atoms": list(self.null_atoms), "x_grid": list(self.x_grid)}


def default_x_grid(context_norm: float = 1.0) -> tuple[float, ...]:
    c = float(context_norm) if context_norm > 0 else 1.0
    return tuple(sorted({-1.0, -0.5, 0.5, 1.0, -c, c}))


def _section_is_null(T: Functional, mask: int, x_grid, tol_null: float) -> bool:
    ind = mask_to_indicator(mask, T.n)
    return all(abs(T.evaluate(x * ind)) <= tol_null for x in x_grid)


def null_events(T: Functional, sigma: SigmaAlgebra, x_grid=None, tol_null: float = TOL_NULL,
                context_norm: float = 1.0) -> NullEventSet:
    """Atoms ``A`` with ``|T(x 1_A)| <= tol_null`` for every ``x`` in the grid."""
    grid = tuple(float(x) for x in (x_grid if x_grid is not None else default_x_grid(context_norm)))
    if not grid:
        raise ValueError("x_grid must be nonempty")
    null = tuple(j for j, a in enumerate(sigma.atoms) if _section_is_null(T, a, grid, tol_null))
    return NullEventSet(sigma, null, grid)


class _GridTable:
    """``T`` on every measurable function with atom values from ``grid``.

    Row ``r`` has atom codes ``codes[r]``; ``index = codes @ place``.
    """

    def __init__(self, T: Functional, sigma: SigmaAlgebra, grid):
        self.grid = np.asarray(grid, dtype=float)
        self.sigma = sigma
        v, k = len(self.grid), sigma.k
        self.codes = np.array(list(product(range(v), repeat=k)), dtype=int).reshape(-1, k)
        self.place = v ** np.arange(k - 1, -1, -1)
        lift = sigma.atom_of_outcome()
        self.values = np.array([T.evaluate(self.grid[c][lift]) for c in self.codes])

    def atom_values(self, row: int) -> list[float]:
        return self.grid[self.codes[row]].tolist()

    def rows_with(self, atoms_fixed, fixed_codes, free_atoms) -> np.ndarray:
        """Indices with ``atoms_fixed`` set to ``fixed_codes``; free atoms
        enumerate in product order."""
        v = len(self.grid)
        base = int(sum(c * self.place[j] for j, c in zip(atoms_fixed, fixed_codes)))
        free = list(product(range(v), repeat=len(free_atoms)))
        if not free_atoms:
            return np.array([base])
        offs = np.array(free, dtype=int) @ self.place[list(free_atoms)]
        return base + offs


def _use_exhaustive(sigma: SigmaAlgebra, grid, exhaustive):
    if exhaustive is not None:
        return bool(exhaustive)
    return sigma.k <= EXHAUSTIVE_MAX_ATOMS and len(grid) <= EXHAUSTIVE_MAX_GRID


def _atom_subsets(k: int):
    for s in range(1 << k):
        yield s, [j for j in range(k) if s >> j & 1]


def _ensure_nulls(T, sigma, null_set):
    return null_set if null_set is not None else null_events(T, sigma)


def check_g_mo(T: Functional, sigma: SigmaAlgebra, rng_seed: int = 0,
               n_samples: int = DEFAULT_SAMPLES, null_set: NullEventSet | None = None,
               value_grid=DEFAULT_VALUE_GRID, exhaustive=None,
               tol_strict: float = TOL_STRICT) -> AxiomReport:
    """``T(x 1_A + g 1_{A^c}) < T(y 1_A + g 1_{A^c})`` for ``x < y`` and non-null ``A``."""
    nulls = _ensure_nulls(T, sigma, null_set)
    k = sigma.k
    if _use_exhaustive(sigma, value_grid, exhaustive):
        table = _GridTable(T, sigma, sorted(value_grid))
        v = len(table.grid)
        count = 0
        for s, atoms in _atom_subsets(k):
            if not atoms or nulls.is_null(sigma.atom_union(atoms)):
                continue
            free = [j for j in range(k) if j not in atoms]
            for c in range(v - 1):
                lo = table.rows_with(atoms, [c] * len(atoms), free)
                hi = table.rows_with(atoms, [c + 1] * len(atoms), free)
                margin = table.values[hi] - table.values[lo]
                count += margin.size
                bad = np.flatnonzero(margin <= tol_strict)
                if bad.size:
                    i = int(bad[0])
                    return AxiomReport("G-Mo", FAIL, {
                        "event": sigma.atom_union(atoms),
                        "x": float(table.grid[c]), "y": float(table.grid[c + 1]),
                        "g_atoms": table.atom_values(int(lo[i])),
                        "T_x": float(table.values[lo[i]]), "T_y": float(table.values[hi[i]]),
                        "margin": float(margin[i]),
                    }, count, tol_strict)
        return AxiomReport("G-Mo", PASS if count else VACUOUS, None, count, tol_strict)

    rng = np.random.default_rng(rng_seed)
    bound = max(abs(min(value_grid)), abs(max(value_grid)), 1.0)
    live = [j for j in range(k) if j not in nulls.null_atoms]
    if not live:
        return AxiomReport("G-Mo", VACUOUS, None, 0, tol_strict, "sampled")
    for i in range(n_samples):
        pick = rng.random(k) < 0.5
        pick[live[rng.integers(len(live))]] = True
        ind = sigma.lift(pick.astype(float))
        x, y = np.sort(rng.uniform(-bound, bound, 2))
        g = sigma.lift(rng.uniform(-bound, bound, k))
        tx = T.evaluate(x * ind + g * (1 - ind))
        ty = T.evaluate(y * ind + g * (1 - ind))
        if not (x < y and ty - tx > tol_strict):
            return AxiomReport("G-Mo", FAIL, {
                "event": sigma.atom_union(np.flatnonzero(pick)), "x": float(x), "y": float(y),
                "g": g.tolist(), "T_x": tx, "T_y": ty, "margin": ty - tx,
            }, i + 1, tol_strict, "sampled")
    return AxiomReport("G-Mo", PASS, None, n_samples, tol_strict, "sampled")


def _ql_violation(D: np.ndarray, tol: float):
    """First ``(r1, r2, c_hyp, c_bad)`` with ``D[r1]-D[r2] <= tol`` at ``c_hyp``
    but ``> tol`` at ``c_bad``."""
    diff = D[:, None, :] - D[None, :, :]
    hyp = diff.min(axis=2) <= tol
    bad = diff.max(axis=2) > tol
    hits = np.argwhere(hyp & bad)
    if not hits.size:
        return None
    r1, r2 = (int(t) for t in hits[0])
    d = diff[r1, r2]
    return r1, r2, int(np.argmin(d)), int(np.argmax(d))


def check_g_ql(T: Functional, sigma: SigmaAlgebra, rng_seed: int = 0,
               n_samples: int = DEFAULT_SAMPLES, value_grid=DEFAULT_VALUE_GRID,
               exhaustive=None, tol: float = TOL, tails_per_sample: int = 6) -> AxiomReport:
    """Comparisons on ``A`` must not depend on the common tail off ``A``.

    Sampling can only falsify: ``pass`` means no violation was found.
    """
    k = sigma.k
    if k < 2:
        return AxiomReport("G-QL", VACUOUS, None, 0, tol, note="fewer than two atoms")
    if _use_exhaustive(sigma, value_grid, exhaustive):
        table = _GridTable(T, sigma, sorted(value_grid))
        v = len(table.grid)
        count = 0
        for s, atoms in _atom_subsets(k):
            if not atoms or len(atoms) == k:
                continue
            free = [j for j in range(k) if j not in atoms]
            heads = list(product(range(v), repeat=len(atoms)))
            D = np.stack([table.values[table.rows_with(atoms, h, free)] for h in heads])
            count += D.size
            hit = _ql_violation(D, tol)
            if hit is not None:
                r1, r2, ch, cb = hit
                tails = list(product(range(v), repeat=len(free)))
                return AxiomReport("G-QL", FAIL, {
                    "event": sigma.atom_union(atoms),
                    "event_atoms": atoms,
                    "g1_on_A": table.grid[list(heads[r1])].tolist(),
                    "g2_on_A": table.grid[list(heads[r2])].tolist(),
                    "gbar_off_A": table.grid[list(tails[ch])].tolist(),
                    "g_off_A": table.grid[list(tails[cb])].tolist(),
                    "diff_at_gbar": float(D[r1, ch] - D[r2, ch]),
                    "diff_at_g": float(D[r1, cb] - D[r2, cb]),
                }, count, tol)
        return AxiomReport("G-QL", PASS, None, count, tol, note="no violation found")

    rng = np.random.default_rng(rng_seed)
    bound = max(abs(min(value_grid)), abs(max(value_grid)), 1.0)
    for i in range(n_samples):
        pick = rng.random(k) < 0.5
        if pick.all() or not pick.any():
            pick[:] = False
            pick[rng.integers(k)] = True
        atoms = [int(j) for j in np.flatnonzero(pick)]
        free = [int(j) for j in np.flatnonzero(~pick)]
        heads = rng.uniform(-bound, bound, (2, len(atoms)))
        tails = rng.uniform(-bound, bound, (tails_per_sample, len(free)))
        D = np.empty((2, tails_per_sample))
        for r in range(2):
            for c in range(tails_per_sample):
                vals = np.empty(k)
                vals[atoms] = heads[r]
                vals[free] = tails[c]
                D[r, c] = T.evaluate(sigma.lift(vals))
        hit = _ql_violation(D, tol)
        if hit is not None:
            r1, r2, ch, cb = hit
            return AxiomReport("G-QL", FAIL, {
                "event": sigma.atom_union(atoms), "event_atoms": atoms,
                "g1_on_A": heads[r1].tolist(), "g2_on_A": heads[r2].tolist(),
                "gbar_off_A": tails[ch].tolist(), "g_off_A": tails[cb].tolist(),
                "diff_at_gbar": float(D[r1, ch] - D[r2, ch]),
                "diff_at_g": float(D[r1, cb] - D[r2, cb]),
            }, i + 1, tol, "sampled")
    return AxiomReport("G-QL", PASS, None, n_samples, tol, "sampled", "no violation found")


def reproduce_ql_witness(T: Functional, sigma: SigmaAlgebra, witness: dict) -> tuple[float, float]:
    """Recompute ``(diff_at_gbar, diff_at_g)`` from a G-QL witness."""
    atoms = witness["event_atoms"]
    free = [j for j in range(sigma.k) if j not in atoms]

    def value(head, tail):
        vals = np.empty(sigma.k)
        vals[atoms] = head
        vals[free] = tail
        return T.evaluate(sigma.lift(vals))

    g1, g2 = witness["g1_on_A"], witness["g2_on_A"]
    gbar, g = witness["gbar_off_A"], witness["g_off_A"]
    return value(g1, gbar) - value(g2, gbar), value(g1, g) - value(g2, g)


def check_g_pc(T: Functional, sigma: SigmaAlgebra, rng_seed: int = 0, n_paths: int = 10,
               tol: float = TOL, depth: int = 30, bound: float = 2.0) -> AxiomReport:
    """Continuity of ``T`` along straight lines ``g + t h`` as ``t -> 0``.

    On a finite space pointwise convergence of bounded sequences is norm
    convergence, so the axiom reduces to continuity. The first path starts
    at 0; each path is probed from both sides. A slope ``L`` is fitted on
    the coarse steps and every step must satisfy ``|dT| <= 4 L t + tol``.
    """
    rng = np.random.default_rng(rng_seed)
    k = sigma.k
    ts = 0.5 ** np.arange(depth + 1)
    note = "finite Omega: pointwise continuity reduces to continuity along paths"
    for p in range(n_paths):
        g = np.zeros(k) if p == 0 else rng.uniform(-bound, bound, k)
        h = rng.uniform(-1.0, 1.0, k)
        h /= max(np.max(np.abs(h)), 1e-12)
        g_full, h_full = sigma.lift(g), sigma.lift(h)
        base = T.evaluate(g_full)
        for sign in (1.0, -1.0):
            d = np.array([abs(T.evaluate(g_full + sign * t * h_full) - base) for t in ts])
            slope = float(np.max(d[:6] / ts[:6]))
            bad = np.flatnonzero(d > 4.0 * slope * ts + tol)
            if bad.size:
                j = int(bad[-1])
                return AxiomReport("G-PC", FAIL, {
                    "g_atoms": g.tolist(), "h_atoms": (sign * h).tolist(),
                    "t": float(ts[j]), "jump": float(d[j]), "fitted_slope": slope,
                }, (p + 1) * 2, tol, "sampled", note)
    return AxiomReport("G-PC", PASS, None, n_paths * 2, tol, "sampled", note)


def check_g_ps(T: Functional, sigma: SigmaAlgebra, f, rng_seed: int = 0,
               tol_ps: float = TOL_PS, cfg=None, max_pairs: int = MAX_PS_PAIRS) -> AxiomReport:
    """Pasting at ``f``: scalar solutions on disjoint ``A1, A2`` paste to ``A1 u A2``."""
    from .solver import BisectionConfig, SolverError, bisect_scalar

    cfg = cfg or BisectionConfig()
    f = as_random_variable(f, T.n)
    norm = sup_norm(f)
    probe = max(norm, 1.0)
    roots: dict[int, float] = {}

    def root(mask: int) -> float:
        if mask not in roots:
            section = scalar_section(T, mask)
            target = T.evaluate(f * mask_to_indicator(mask, T.n))
            if section(probe) - section(-probe) <= cfg.tol_f:
                roots[mask] = 0.0
            else:
                roots[mask] = bisect_scalar(section, target, -norm, norm, cfg).x
        return roots[mask]

    if 3 ** sigma.k > 2 * max_pairs:
        rng = np.random.default_rng(rng_seed)
        pairs = []
        for _ in range(max_pairs):
            lab = rng.integers(0, 3, sigma.k)
            m1 = sigma.atom_union(np.flatnonzero(lab == 1))
            m2 = sigma.atom_union(np.flatnonzero(lab == 2))
            if m1 and m2:
                pairs.append((m1, m2))
        mode = "sampled"
    else:
        pairs = disjoint_event_pairs(sigma)
        mode = "exhaustive"

    count = 0
    for m1, m2 in pairs:
        try:
            x1, x2 = root(m1), root(m2)
        except SolverError as exc:
            return AxiomReport("G-PS", INAPPLICABLE, {"events": [m1, m2], "error": str(exc)},
                               count, tol_ps, mode)
        i1, i2 = mask_to_indicator(m1, T.n), mask_to_indicator(m2, T.n)
        lhs = T.evaluate(f * (i1 + i2))
        rhs = T.evaluate(x1 * i1 + x2 * i2)
        count += 1
        if abs(lhs - rhs) > tol_ps:
            return AxiomReport("G-PS", FAIL, {
                "events": [m1, m2], "x": [x1, x2], "T_f": lhs, "T_x": rhs, "gap": lhs - rhs,
            }, count, tol_ps, mode)
    return AxiomReport("G-PS", PASS if count else VACUOUS, None, count, tol_ps, mode)


def check_g_nb(T: Functional, sigma: SigmaAlgebra, f, tol: float = TOL,
               cap: int = DEFAULT_EVENT_CAP) -> AxiomReport:
    """``T(-|f| 1_A) <= T(f 1_A) <= T(|f| 1_A)`` on every event."""
    f = as_random_variable(f, T.n)
    norm = sup_norm(f)
    count = 0
    for m in iter_event_masks(sigma, cap):
        ind = mask_to_indicator(m, T.n)
        lo, mid, hi = T.evaluate(-norm * ind), T.evaluate(f * ind), T.evaluate(norm * ind)
        count += 1
        if not (lo - tol <= mid <= hi + tol):
            return AxiomReport("G-NB", FAIL, {
                "event": m, "lower": lo, "value": mid, "upper": hi,
            }, count, tol)
    return AxiomReport("G-NB", PASS, None, count, tol)


def check_weak_monotone(T: Functional, sigma: SigmaAlgebra, rng_seed: int = 0,
                        n_samples: int = DEFAULT_SAMPLES, null_set: NullEventSet | None = None,
                        value_grid=DEFAULT_VALUE_GRID, exhaustive=None, tol: float = TOL,
                        tol_strict: float = TOL_STRICT) -> AxiomReport:
    """``g1 <= g2`` implies ``T(g1) <= T(g2)``, strictly when ``{g1 < g2}`` is not null."""
    nulls = _ensure_nulls(T, sigma, null_set)
    live = np.ones(sigma.k, dtype=bool)
    live[list(nulls.null_atoms)] = False

    def witness(a_vals, b_vals, ta, tb, strict):
        return {"g1_atoms": list(map(float, a_vals)), "g2_atoms": list(map(float, b_vals)),
                "T_g1": float(ta), "T_g2": float(tb), "strict_required": bool(strict)}

    if _use_exhaustive(sigma, value_grid, exhaustive):
        table = _GridTable(T, sigma, sorted(value_grid))
        C, V = table.codes, table.values
        le = np.all(C[:, None, :] <= C[None, :, :], axis=2)
        lt_live = np.any((C[:, None, :] < C[None, :, :]) & live, axis=2)
        gap = V[None, :] - V[:, None]
        weak_bad = le & (gap < -tol)
        strict_bad = le & lt_live & (gap <= tol_strict)
        bad = np.argwhere(weak_bad | strict_bad)
        count = int(le.sum())
        if bad.size:
            i, j = (int(t) for t in bad[0])
            return AxiomReport("WeakMonotone", FAIL, witness(
                table.atom_values(i), table.atom_values(j), V[i], V[j], lt_live[i, j]
            ), count, tol)
        return AxiomReport("WeakMonotone", PASS, None, count, tol)

    rng = np.random.default_rng(rng_seed)
    bound = max(abs(min(value_grid)), abs(max(value_grid)), 1.0)
    for i in range(n_samples):
        a = rng.uniform(-bound, bound, sigma.k)
        b = a + rng.uniform(0, bound, sigma.k) * (rng.random(sigma.k) < 0.5)
        ta, tb = T.evaluate(sigma.lift(a)), T.evaluate(sigma.lift(b))
        strict = bool(np.any((a < b) & live))
        if tb < ta - tol or (strict and tb - ta <= tol_strict):
            return AxiomReport("WeakMonotone", FAIL, witness(a, b, ta, tb, strict),
                               i + 1, tol, "sampled")
    return AxiomReport("WeakMonotone", PASS, None, n_samples, tol, "sampled")


def check_null_closure(null_set: NullEventSet, T: Functional, sigma: SigmaAlgebra,
                       tol_null: float = TOL_NULL, cap: int = DEFAULT_EVENT_CAP) -> AxiomReport:
    """Every union of null atoms (hence every sub-event of a null event) re-tests null."""
    atoms = list(null_set.null_atoms)
    if not atoms:
        return AxiomReport("NullClosure", VACUOUS, None, 0, tol_null, note="no null atoms")
    if len(atoms) > cap:
        raise ValueError(f"{len(atoms)} null atoms exceed the enumeration cap {cap}")
    count = 0
    for s in range(1 << len(atoms)):
        mask = sigma.atom_union([atoms[j] for j in range(len(atoms)) if s >> j & 1])
        count += 1
        if not _section_is_null(T, mask, null_set.x_grid, tol_null):
            return AxiomReport("NullClosure", FAIL, {"event": mask}, count, tol_null)
    return AxiomReport("NullClosure", PASS, None, count, tol_null)


def check_null_definition(null_set: NullEventSet, T: Functional, sigma: SigmaAlgebra,
                          rng_seed: int = 0, n_samples: int = 50, tol: float = TOL,
                          bound: float = 2.0) -> AxiomReport:
    """Compare grid-detected null atoms with the defining condition
    ``T(g1 + g2 1_N) = T(g1)`` on sampled measurable ``g1, g2``."""
    rng = np.random.default_rng(rng_seed)
    count = 0
    for j, a in enumerate(sigma.atoms):
        ind = mask_to_indicator(a, T.n)
        invariant = True
        for _ in range(n_samples):
            g1 = sigma.lift(rng.uniform(-bound, bound, sigma.k))
            g2 = sigma.lift(rng.uniform(-bound, bound, sigma.k))
            count += 1
            if abs(T.evaluate(g1 + g2 * ind) - T.evaluate(g1)) > tol:
                invariant = False
                break
        if invariant != (j in null_set.null_atoms):
            return AxiomReport("NullDefinition", FAIL, {
                "atom": j, "definition_null": invariant, "grid_null": j in null_set.null_atoms,
            }, count, tol, "sampled")
    return AxiomReport("NullDefinition", PASS, None, count, tol, "sampled")


@dataclass
class AxiomSuite:
    null_set: NullEventSet
    reports: list[AxiomReport] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    def to_dict(self) -> dict:
        return {"null_events": self.null_set.to_dict(),
                "reports": [r.to_dict() for r in self.reports]}


def run_all(T: Functional, sigma: SigmaAlgebra, f, rng_seed: int = 0,
            n_samples: int = DEFAULT_SAMPLES, value_grid=DEFAULT_VALUE_GRID,
            x_grid=None) -> AxiomSuite:
    f = as_random_variable(f, T.n)
    if x_grid is None:
        x_grid = default_x_grid(sup_norm(f))
    nulls = null_events(T, sigma, x_grid)
    reports = [
        check_g_mo(T, sigma, rng_seed, n_samples, nulls, value_grid),
        check_g_ql(T, sigma, rng_seed, n_samples, value_grid),
        check_g_pc(T, sigma, rng_seed),
        check_g_ps(T, sigma, f, rng_seed),
        check_g_nb(T, sigma, f),
        check_weak_monotone(T, sigma, rng_seed, n_samples, nulls, value_grid),
        check_null_closure(nulls, T, sigma),
    ]
    return AxiomSuite(nulls, reports)
