import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.special import logsumexp

from chisini.space import partition_from_labels


def random_partition(rng, n, k):
    labels = np.concatenate([np.arange(k), rng.integers(0, k, n - k)])
    return partition_from_labels(n, rng.permutation(labels).tolist())


def random_weights(rng, n, zero_frac=0.0):
    p = rng.random(n) + 0.05
    if zero_frac:
        p[rng.random(n) < zero_frac] = 0.0
        if not p.any():
            p[0] = 1.0
    return p / p.sum()


def random_instance(rng, n_max=16, k_max=6, zero_frac=0.0, scale=3.0):
    n = int(rng.integers(2, n_max + 1))
    k = int(rng.integers(1, min(k_max, n) + 1))
    return random_weights(rng, n, zero_frac), random_partition(rng, n, k), rng.uniform(-scale, scale, n)


# Oracles below work on raw label arrays and never call the solver.

def atom_labels(sigma):
    return sigma.atom_of_outcome()


def oracle_linear(p, sigma, f):
    lab = atom_labels(sigma)
    num = np.bincount(lab, weights=p * f, minlength=sigma.k)
    den = np.bincount(lab, weights=p, minlength=sigma.k)
    vals = np.divide(num, den, out=np.zeros(sigma.k), where=den > 0)
    return vals[lab]


def oracle_quasi_arithmetic(p, sigma, f, u):
    lab = atom_labels(sigma)
    out = np.zeros_like(f)
    for j in range(sigma.k):
        idx = lab == j
        mass = p[idx].sum()
        if mass == 0:
            continue
        target = np.dot(p[idx], u(f[idx])) / mass
        lo, hi = f[idx].min() - 1.0, f[idx].max() + 1.0
        out[idx] = brentq(lambda x: u(np.array([x]))[0] - target, lo, hi, xtol=1e-14, rtol=1e-14)
    return out


def oracle_entropic(p, sigma, f, gamma):
    lab = atom_labels(sigma)
    out = np.zeros_like(f)
    for j in range(sigma.k):
        idx = (lab == j) & (p > 0)
        if not idx.any():
            continue
        out[lab == j] = (logsumexp(gamma * f[idx], b=p[idx]) - np.log(p[idx].sum())) / gamma
    return out


def live_outcomes(p, sigma):
    lab = atom_labels(sigma)
    mass = np.bincount(lab, weights=p, minlength=sigma.k)
    return mass[lab] > 0


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str = "") -> None:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
