"""Acceptance criteria, one test each. Every test prints a PASS/FAIL line."""

import json
import subprocess
import sys
import time
from itertools import product
from pathlib import Path

import numpy as np
import pytest
from scipy.special import logsumexp

from chisini.axioms import (
    check_g_mo,
    check_g_nb,
    check_g_pc,
    check_g_ps,
    check_g_ql,
    check_weak_monotone,
    null_events,
    reproduce_ql_witness,
)
from chisini.cli import dumps, run
from chisini.functionals import Choquet, Entropic, Linear, QuasiArithmetic, Tabulated
from chisini.representation import (
    check_order_preservation,
    check_refinement_consistency,
    classify_pi_g,
    increase_step,
    induced_probability,
    sample_measurable,
    v_bracket,
    v_measure,
)
from chisini.risk import (
    ConditionalEV,
    EntropicRM,
    check_scalarization_conditions,
    reconstruct_conditional,
    roundtrip_against,
    scalarize,
)
from chisini.solver import conditional_chisini, uniqueness_check, verify_system
from chisini.space import SigmaAlgebra, iter_event_masks, partition_from_labels
from conftest import (
    live_outcomes,
    oracle_entropic,
    oracle_linear,
    oracle_quasi_arithmetic,
    random_instance,
    random_partition,
    random_weights,
    record_criterion,
)

ROOT = Path(__file__).resolve().parents[1]

NAGUMO = {
    "exp": (np.exp, np.log),
    "cubic": (lambda x: x ** 3 + x, None),
    "arctan_affine": (lambda x: 2.0 * np.arctan(x) + 0.1 * x + 1.0, None),
}


def set_partitions(n):
    """Every partition of ``range(n)`` as a label list (restricted growth strings)."""
    def grow(prefix, top):
        if len(prefix) == n:
            yield list(prefix)
            return
        for lab in range(top + 2):
            yield from grow(prefix + [lab], max(top, lab))
    yield from grow([0], 0)


def test_criterion_01_linear_oracle():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst_gap = worst_res = 0.0
    all_events = True
    for _ in range(100):
        p, sigma, f = random_instance(rng, n_max=16, k_max=6)
        res = conditional_chisini(Linear(p), f, sigma)
        worst_gap = max(worst_gap, float(np.max(np.abs(res.g - oracle_linear(p, sigma, f)))))
        worst_res = max(worst_res, res.max_residual)
        all_events &= len(res.residuals) == 2 ** sigma.k and not res.sampled
    elapsed = time.perf_counter() - start
    ok = worst_gap <= 1e-8 and worst_res <= 1e-8 and all_events and elapsed < 5.0
    record_criterion(1, "linear oracle equivalence", ok,
                     f"gap {worst_gap:.1e}, residual {worst_res:.1e}, {elapsed:.2f}s")
    assert ok


def test_criterion_02_nagumo_form():
    rng = np.random.default_rng(2)
    worst = {}
    for name, (u, inv) in NAGUMO.items():
        worst[name] = 0.0
        for _ in range(50):
            p, sigma, f = random_instance(rng, n_max=12, k_max=5)
            T = QuasiArithmetic(p, u, inv, name=name)
            g = conditional_chisini(T, f, sigma).g
            gap = float(np.max(np.abs(g - oracle_quasi_arithmetic(p, sigma, f, u))))
            worst[name] = max(worst[name], gap)
    ok = max(worst.values()) <= 1e-7
    record_criterion(2, "quasi-arithmetic (Nagumo) form", ok,
                     ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert ok


def test_criterion_03_entropic_identity():
    rng = np.random.default_rng(3)
    worst = {}
    for gamma in (0.1, 1.0, 5.0):
        worst[gamma] = 0.0
        for _ in range(50):
            p, sigma, f = random_instance(rng, n_max=12, k_max=5)
            g = conditional_chisini(Entropic(p, gamma), f, sigma).g
            worst[gamma] = max(worst[gamma],
                               float(np.max(np.abs(g - oracle_entropic(p, sigma, f, gamma)))))
    ok = max(worst.values()) <= 1e-7
    record_criterion(3, "entropic identity", ok,
                     ", ".join(f"gamma={k} {v:.1e}" for k, v in worst.items()))
    assert ok


def test_criterion_04_definition_level_residuals():
    rng = np.random.default_rng(4)
    tol_solve = 1e-8
    solves = 0
    ok = True
    worst = 0.0
    for i in range(60):
        p, sigma, f = random_instance(rng, n_max=10, k_max=6, zero_frac=0.2 if i % 2 else 0.0)
        for T in (Linear(p), Entropic(p, 2.0), QuasiArithmetic(p, lambda x: x ** 3 + x)):
            res = conditional_chisini(T, f, sigma, tol_solve=tol_solve)
            solves += 1
            masks = set(iter_event_masks(sigma))
            ok &= set(res.residuals) == masks
            # recompute independently of the solver's own bookkeeping
            for m, r in res.residuals.items():
                ind = np.array([(m >> w) & 1 for w in range(T.n)], dtype=float)
                ok &= abs(abs(T(f * ind) - T(res.g * ind)) - r) <= 1e-15
            worst = max(worst, max(res.residuals.values()))
    ok &= worst <= tol_solve
    record_criterion(4, "residuals over all generated events", ok,
                     f"{solves} solves, max residual {worst:.1e}")
    assert ok


def test_criterion_05_essential_uniqueness():
    rng = np.random.default_rng(5)
    instances_with_nulls = 0
    ok = True
    for i in range(50):
        p, sigma, f = random_instance(rng, n_max=10, k_max=6, zero_frac=0.35)
        T = Entropic(p, 1.0) if i % 2 else Linear(p)
        nulls = null_events(T, sigma)
        solves = []
        for seed in (100 + i, 200 + i):
            r = np.random.default_rng(seed)
            res = conditional_chisini(T, f, sigma, atom_order=r.permutation(sigma.k),
                                      null_value=r.uniform(-5, 5, sigma.k))
            solves.append(res.g)
        verdict = uniqueness_check(T, f, solves[0], solves[1], sigma, nulls, tol_eq=1e-7)
        ok &= verdict.passed and set(verdict.difference_atoms) <= set(nulls.null_atoms)
        instances_with_nulls += bool(verdict.difference_atoms)
    ok &= instances_with_nulls > 0
    record_criterion(5, "essential uniqueness", ok,
                     f"{instances_with_nulls}/50 instances differ on null atoms only")
    assert ok


def test_criterion_06_axiom_suite_soundness():
    rng = np.random.default_rng(6)
    grid = (-2.0, -1.0, 0.0, 1.0, 2.0)
    failures = []
    runs = 0
    for n in range(1, 5):
        p = random_weights(rng, n)
        f = rng.uniform(-2, 2, n)
        families = [Linear(p), Entropic(p, 1.0)] + [
            QuasiArithmetic(p, u, inv, name=name) for name, (u, inv) in NAGUMO.items()]
        for labels in set_partitions(n):
            sigma = partition_from_labels(n, labels)
            for T in families:
                nulls = null_events(T, sigma)
                reports = [
                    check_g_mo(T, sigma, null_set=nulls, value_grid=grid, exhaustive=True),
                    check_g_ql(T, sigma, value_grid=grid, exhaustive=True),
                    check_g_pc(T, sigma),
                    check_g_ps(T, sigma, f),
                    check_g_nb(T, sigma, f),
                    check_weak_monotone(T, sigma, null_set=nulls, value_grid=grid,
                                        exhaustive=True),
                ]
                runs += 1
                failures += [(T.family, labels, r.axiom) for r in reports
                             if r.verdict not in ("pass", "vacuous")]

    T = Choquet(np.full(3, 1 / 3), "square")
    sigma = SigmaAlgebra.discrete(3)
    ql = check_g_ql(T, sigma, value_grid=grid, exhaustive=True)
    reproduced = False
    if ql.verdict == "fail":
        at_gbar, at_g = reproduce_ql_witness(T, sigma, ql.witness)
        reproduced = at_gbar <= ql.tolerance < at_g and at_g == ql.witness["diff_at_g"]
    ok = not failures and reproduced
    record_criterion(6, "axiom suite soundness", ok,
                     f"{runs} exhaustive suites, {len(failures)} failures; "
                     f"Choquet G-QL {ql.verdict}, witness reproduced={reproduced}")
    assert ok, failures[:5]


def test_criterion_07_representation():
    rng = np.random.default_rng(7)
    worst_norm = worst_add = worst_refine = 0.0
    ok = True
    for i in range(12):
        n = int(rng.integers(3, 7))
        p = random_weights(rng, n, zero_frac=0.25 if i % 3 == 0 else 0.0)
        sigma = random_partition(rng, n, int(rng.integers(1, n + 1)))
        f = rng.uniform(-2, 2, n)
        for T in (Linear(p), Entropic(p, 0.8), QuasiArithmetic(p, np.exp, np.log)):
            zero = v_measure(T, sigma, np.zeros(n))
            worst_norm = max(worst_norm, max(abs(v) for v in zero.values),
                             abs(v_measure(T, sigma, np.ones(n)).value(sigma.full_mask) - 1.0))
            for g in sample_measurable(sigma, rng, 5):
                mu = v_measure(T, sigma, g)
                for _ in range(5):
                    a = sigma.atom_union(np.flatnonzero(rng.random(sigma.k) < 0.5))
                    b = sigma.atom_union(np.flatnonzero(rng.random(sigma.k) < 0.5)) & ~a
                    worst_add = max(worst_add, abs(mu.value(a | b) - mu.value(a) - mu.value(b)))
            gs = sample_measurable(sigma, rng, 20)
            ok &= check_order_preservation(T, sigma, f, gs).passed
            fine = SigmaAlgebra.discrete(n)
            raw = [rng.uniform(-2, 2, n) for _ in range(20)]
            for fine_s, coarse_s in ((fine, sigma), (sigma, SigmaAlgebra.trivial(n))):
                rep = check_refinement_consistency(T, fine_s, coarse_s, raw)
                ok &= rep.passed
                worst_refine = max(worst_refine, rep.details.get("max_gap", np.inf))
            nulls = null_events(T, sigma)
            P = induced_probability(T, sigma, nulls)
            ok &= [j for j, v in enumerate(P.values) if v == 0.0] == list(nulls.null_atoms)
    ok &= worst_norm <= 1e-12 and worst_add <= 1e-12 and worst_refine <= 1e-10
    record_criterion(7, "representation properties", ok,
                     f"normalization {worst_norm:.1e}, additivity {worst_add:.1e}, "
                     f"refinement {worst_refine:.1e}")
    assert ok


def test_criterion_08_increase_iteration():
    rng = np.random.default_rng(8)
    worst = 0.0
    worst_steps = 0
    for _ in range(20):
        p = random_weights(rng, 4)
        sigma = random_partition(rng, 4, int(rng.integers(1, 5)))
        f = rng.uniform(-3, 3, 4)
        T = Linear(p)
        target = conditional_chisini(T, f, sigma).g
        bracket = v_bracket(T, f, sigma)
        g = np.full(4, -np.max(np.abs(f)))
        steps = 0
        for steps in range(1, 201):
            imp = increase_step(T, f, g, sigma, bracket=bracket)
            if imp is None:
                break
            g = imp.g
        worst = max(worst, float(np.max(np.abs(g - target))))
        worst_steps = max(worst_steps, steps)
    ok = worst <= 1e-2
    record_criterion(8, "Hahn increase iteration", ok,
                     f"sup distance {worst:.1e}, at most {worst_steps} steps")
    assert ok


def test_criterion_09_scalarization_roundtrip():
    rng = np.random.default_rng(9)
    worst = {"entropic": 0.0, "conditional_ev": 0.0}
    cond_fail = []
    for i in range(50):
        n = int(rng.integers(2, 13))
        sigma = random_partition(rng, n, int(rng.integers(1, min(n, 6) + 1)))
        P = random_weights(rng, n, zero_frac=0.15 if i % 4 == 0 else 0.0)
        for rm in (EntropicRM(float(rng.uniform(0.2, 3.0))), ConditionalEV()):
            rho0 = scalarize(rm, sigma, P)
            rec = reconstruct_conditional(rho0, sigma, P)
            rt = roundtrip_against(rec, rho0, sigma, P, rm, rng_seed=i, n_X=10)
            worst[rm.family] = max(worst[rm.family], rt.max_residual)
            suite = check_scalarization_conditions(rho0, sigma, P, rng_seed=i,
                                                   n_samples=40, n_pasting=1)
            if not suite.passed:
                cond_fail.append((i, rm.family, [r.axiom for r in suite.reports if not r.passed]))
    ok = max(worst.values()) <= 1e-8 and not cond_fail
    record_criterion(9, "scalarization round-trip", ok,
                     ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
                     + f", condition failures {len(cond_fail)}")
    assert ok, cond_fail[:3]


def test_criterion_10_degenerate_cases():
    cases = [
        ("case_i", Linear([0.5, 0.5, 0.0, 0.0]), SigmaAlgebra.discrete(4)),
        ("case_i", Entropic([0.4, 0.6, 0.0], 1.0), SigmaAlgebra.from_blocks([[0], [1, 2]], 3)),
        ("case_ii", Linear(np.full(4, 0.25)), SigmaAlgebra.trivial(4)),
        ("case_ii", Entropic([0.0, 1.0, 0.0], 2.0), SigmaAlgebra.discrete(3)),
        ("omega_null", Tabulated(3, lambda f: 0.0), SigmaAlgebra.discrete(3)),
    ]
    f = {3: np.array([1.0, -2.0, 3.0]), 4: np.array([1.0, -2.0, 3.0, 0.5])}
    ok = True
    for expected, T, sigma in cases:
        cls = classify_pi_g(T, sigma)
        res = conditional_chisini(T, f[T.n], sigma)
        ok &= cls.empty_case == expected and not cls.nonempty
        ok &= res.max_residual <= 1e-8
        if expected == "omega_null":
            ok &= res.null_atoms == list(range(sigma.k)) and not res.g.any()
        live = live_outcomes(T.weights, sigma) if T.weights is not None else None
        if isinstance(T, Linear):
            ok &= np.allclose(res.g[live], oracle_linear(T.weights, sigma, f[T.n])[live])
    record_criterion(10, "degenerate cases", ok, f"{len(cases)} scenarios")
    assert ok


CANONICAL = [
    ("solve", "linear_uniform"),
    ("solve", "choquet_square"),
    ("check-axioms", "entropic"),
    ("represent", "exp_utility"),
    ("represent", "case_i"),
    ("risk-roundtrip", "risk_entropic"),
]


def test_criterion_11_cli_determinism():
    ok = True
    for command, name in CANONICAL:
        scenario = str(ROOT / "scenarios" / f"{name}.json")
        golden = (ROOT / "tests" / "golden" / f"{command}__{name}.json").read_text()
        out = subprocess.run(
            [sys.executable, "-m", "chisini.cli", command, "--scenario", scenario, "--json",
             "--seed", "0"],
            capture_output=True, text=True, check=False,
        )
        ok &= out.stdout == golden == dumps(run(command, scenario, seed=0))
        ok &= out.returncode == json.loads(golden)["exit_code"]
    record_criterion(11, "CLI golden reports byte-stable", ok, f"{len(CANONICAL)} scenarios")
    assert ok
