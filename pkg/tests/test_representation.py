import json

import numpy as np
import pytest

from chisini.axioms import null_events
from chisini.functionals import Choquet, Entropic, Linear, QuasiArithmetic
from chisini.representation import (
    RepresentationError,
    SignedMeasure,
    check_order_preservation,
    check_refinement_consistency,
    classify_pi_g,
    hahn_decomposition,
    increase_step,
    induced_probability,
    sample_measurable,
    v_bracket,
    v_measure,
)
from chisini.solver import PreconditionError, conditional_chisini
from chisini.space import SigmaAlgebra, iter_event_masks

UNIFORM4 = np.full(4, 0.25)
HALVES = SigmaAlgebra.from_blocks([[0, 1], [2, 3]], 4)


def test_signed_measure_is_additive():
    mu = SignedMeasure(SigmaAlgebra.discrete(3), (0.2, -0.1, 0.3))
    assert mu.value(0b101) == pytest.approx(0.5)
    assert mu(0) == 0.0
    assert mu.total_variation() == pytest.approx(0.6)
    assert mu.to_json() == {"atom_masks": [1, 2, 4], "values": [0.2, -0.1, 0.3]}
    with pytest.raises(ValueError):
        mu.value(0b1000)
    with pytest.raises(ValueError):
        SignedMeasure(HALVES, (1.0,))
    with pytest.raises(ValueError):
        SignedMeasure(HALVES, (1.0, 0.0)).value(0b0001)


def test_classify_pi_g_cases():
    assert classify_pi_g(Linear(UNIFORM4), SigmaAlgebra.discrete(4)).nonempty
    cls = classify_pi_g(Linear([0.5, 0.5, 0.0, 0.0]), SigmaAlgebra.discrete(4))
    assert (cls.nonempty, cls.empty_case, cls.non_null_atoms) == (False, "case_i", (0, 1))
    cls = classify_pi_g(Linear(UNIFORM4), SigmaAlgebra.trivial(4))
    assert cls.empty_case == "case_ii"
    from chisini.functionals import Tabulated
    cls = classify_pi_g(Tabulated(3, lambda f: 0.0), SigmaAlgebra.discrete(3))
    assert cls.empty_case == "omega_null"
    assert cls.witness_partition is None


def test_v_measure_examples():
    sigma = SigmaAlgebra.discrete(2)
    assert v_measure(Linear([0.5, 0.5]), sigma, [1.0, 0.0]).value(0b01) == pytest.approx(0.5)
    T = QuasiArithmetic([0.5, 0.5], np.exp, np.log)
    assert v_measure(T, sigma, [1.0, 0.0]).value(0b01) == pytest.approx(0.5, abs=1e-15)
    assert v_measure(T, sigma, [0.0, 0.0]).values == (0.0, 0.0)


def test_v_measure_entropic_matches_formula():
    p = np.array([0.1, 0.2, 0.3, 0.4])
    g = np.array([1.0, -1.0, 0.5, 2.0])
    gamma = 0.3
    mu = v_measure(Entropic(p, gamma), SigmaAlgebra.discrete(4), g)
    expected = p * (np.exp(gamma * g) - 1) / (np.exp(gamma) - 1)
    np.testing.assert_allclose(mu.values, expected, rtol=1e-13)


def test_v_measure_rejects_choquet():
    with pytest.raises(RepresentationError, match="no closed-form additive representation"):
        v_measure(Choquet(UNIFORM4), HALVES, np.zeros(4))


def test_induced_probability_examples():
    P = induced_probability(QuasiArithmetic(np.full(3, 1 / 3), np.exp, np.log),
                            SigmaAlgebra.discrete(3))
    np.testing.assert_allclose(P.values, [1 / 3] * 3, atol=1e-15)
    P = induced_probability(Linear([0.2, 0.8]), SigmaAlgebra.discrete(2))
    np.testing.assert_allclose(P.values, [0.2, 0.8])
    P = induced_probability(Entropic([0.5, 0.5, 0.0], 3.0), SigmaAlgebra.discrete(3))
    assert P.values[2] == 0.0


def test_induced_probability_checks_null_consistency():
    T = Linear([0.5, 0.5, 0.0])
    sigma = SigmaAlgebra.discrete(3)
    wrong = null_events(Linear(np.full(3, 1 / 3)), sigma)
    with pytest.raises(RepresentationError, match="vanishes"):
        induced_probability(T, sigma, wrong)


def test_v_bracket_examples():
    mu = v_bracket(Linear(UNIFORM4), [0.0, 2.0, 1.0, 5.0], HALVES)
    np.testing.assert_allclose(mu.values, [0.5, 1.5], atol=1e-12)
    g = HALVES.lift([1.0, -2.0])
    T = Entropic(UNIFORM4, 1.0)
    np.testing.assert_allclose(v_bracket(T, g, HALVES).values,
                               v_measure(T, HALVES, g).values, atol=1e-12)
    assert v_bracket(T, np.zeros(4), HALVES).values == (0.0, 0.0)


def test_v_locality_and_normalization(rng):
    p = rng.dirichlet(np.ones(5))
    sigma = SigmaAlgebra.from_blocks([[0, 1], [2], [3, 4]], 5)
    T = Entropic(p, 1.3)
    for g in sample_measurable(sigma, rng, 10):
        mu = v_measure(T, sigma, g)
        for j, a in enumerate(sigma.atoms):
            ind = sigma.lift(np.eye(sigma.k)[j])
            assert v_measure(T, sigma, g * ind).values[j] == pytest.approx(mu.values[j], abs=1e-12)
    assert v_measure(T, sigma, np.ones(5)).total() == pytest.approx(1.0, abs=1e-12)


def test_order_preservation_entropic(rng):
    p = rng.dirichlet(np.ones(4))
    T = Entropic(p, 1.0)
    sigma = SigmaAlgebra.discrete(4)
    f = rng.uniform(-2, 2, 4)
    report = check_order_preservation(T, sigma, f, sample_measurable(sigma, rng, 20))
    assert report.passed
    assert report.checked == 20 * 16


def test_order_preservation_null_event_ties():
    T = Linear([0.5, 0.5, 0.0])
    sigma = SigmaAlgebra.discrete(3)
    g = [sigma.lift([0.0, 0.0, 5.0])]
    assert check_order_preservation(T, sigma, [1.0, 2.0, -3.0], g).passed


def test_refinement_consistency():
    coarse = SigmaAlgebra.trivial(4)
    T = QuasiArithmetic(UNIFORM4, np.exp, np.log)
    report = check_refinement_consistency(T, HALVES, coarse, [np.array([1.0, 1.0, 0.0, 0.0])])
    assert report.passed
    report = check_refinement_consistency(Linear(UNIFORM4), HALVES, coarse, [np.full(4, 3.0)])
    assert report.passed
    with pytest.raises(PreconditionError):
        check_refinement_consistency(T, coarse, HALVES, [np.zeros(4)])


@pytest.mark.parametrize("values, pos", [
    ((0.2, -0.1, 0.3), 0b101),
    ((0.0, 1.0, 2.0), 0b111),
    ((-0.1, -1.0, -2.0), 0),
])
def test_hahn_decomposition(values, pos):
    mu = SignedMeasure(SigmaAlgebra.discrete(3), values)
    p, n = hahn_decomposition(mu)
    assert p.mask == pos and n.mask == 0b111 & ~pos
    for m in iter_event_masks(mu.sigma):
        if m & ~p.mask == 0:
            assert mu.value(m) >= 0
        if m & ~n.mask == 0:
            assert mu.value(m) <= 0


def test_increase_step_trivial_sigma():
    T = Linear([0.5, 0.5])
    imp = increase_step(T, [2.0, 2.0], [0.0, 0.0], SigmaAlgebra.trivial(2))
    assert imp is not None
    assert imp.omega0.mask == 0b11
    assert 0 < imp.epsilon <= 2.0
    np.testing.assert_allclose(imp.g, [imp.epsilon] * 2)


def test_increase_step_none_at_solution():
    f = np.array([0.0, 2.0, 1.0, 5.0])
    g = conditional_chisini(Linear(UNIFORM4), f, HALVES).g
    assert increase_step(Linear(UNIFORM4), f, g, HALVES) is None


def test_increase_step_one_atom_below():
    f = np.array([0.0, 2.0, 1.0, 5.0])
    g = HALVES.lift([0.5, 3.0])
    imp = increase_step(Linear(UNIFORM4), f, g, HALVES)
    assert imp.omega0.mask == 0b0011
    assert imp.g[2] == 3.0 and imp.g[0] > 0.5


def test_increase_step_precondition():
    with pytest.raises(PreconditionError, match="0xc"):
        increase_step(Linear(UNIFORM4), [0.0, 2.0, 1.0, 5.0], HALVES.lift([0.0, 4.0]), HALVES)


def test_measure_json_roundtrip():
    mu = v_bracket(Linear(UNIFORM4), [0.0, 2.0, 1.0, 5.0], HALVES)
    doc = json.loads(json.dumps(mu.to_json()))
    assert doc["atom_masks"] == [3, 12]
