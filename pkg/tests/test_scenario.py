import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eatkit.bell import parse_expression, evaluate_expression
from eatkit.scenario import (BehaviorDistribution, Scenario, binary_entropy,
                             uniform_behavior)

SC22 = Scenario((2, 2), (2, 2))

# per-pair table of the ideal maximally-violating counts
P_HI, P_LO = 426776695, 73223304
TOT = 2 * (P_HI + P_LO)
ALIGNED = np.array([[P_HI, P_LO], [P_LO, P_HI]]) / TOT


def test_scenario_derived_quantities():
    sc = Scenario((2, 3, 2), (4, 2))
    assert sc.settings_a == 3 and sc.settings_b == 2
    assert sc.outcomes_a == 3 and sc.outcomes_b == 4


def test_scenario_rejects_single_outcome():
    with pytest.raises(ValueError):
        Scenario((1, 2), (2, 2))


def test_uniform_behavior_entries():
    b = uniform_behavior(SC22)
    assert all(np.allclose(b.table[k], 0.25) for k in b.table)
    b32 = uniform_behavior(Scenario((2, 2, 2), (2, 2)))
    assert all(np.allclose(b32.table[k], 0.25) for k in b32.table)
    b_hetero = uniform_behavior(Scenario((3,), (2,)))
    assert np.allclose(b_hetero.table[(0, 0)], 1.0 / 6.0)


def test_normalization_enforced():
    table = {k: np.full((2, 2), 0.3) for k in SC22.setting_pairs()}
    with pytest.raises(ValueError, match="normalization"):
        BehaviorDistribution(SC22, table)


def test_negative_probability_rejected():
    table = {k: np.array([[0.6, 0.5], [-0.1, 0.0]]) for k in SC22.setting_pairs()}
    with pytest.raises(ValueError, match="negative"):
        BehaviorDistribution(SC22, table)


class TestMarginals:
    def test_uniform_marginals(self):
        marg = uniform_behavior(SC22).marginals()
        assert marg.pa_value(0, 0) == pytest.approx(0.5)
        assert marg.pb_value(1, 1) == pytest.approx(0.5)

    def test_ideal_counts_marginal(self):
        table = {k: ALIGNED for k in SC22.setting_pairs()}
        b = BehaviorDistribution(SC22, table)
        # (426776695 + 73223304) / 1e9 with the count total of 999999998
        assert b.marginals().pa_value(0, 0) == pytest.approx(
            (P_HI + P_LO) / TOT, abs=1e-12)

    def test_deterministic_marginal(self):
        table = {k: np.array([[1.0, 0.0], [0.0, 0.0]])
                 for k in SC22.setting_pairs()}
        b = BehaviorDistribution(SC22, table)
        assert b.marginals().pa_value(0, 1) == 1.0

    def test_average_convention_on_signaling_data(self):
        t0 = np.array([[0.5, 0.0], [0.0, 0.5]])
        t1 = np.array([[0.4, 0.1], [0.1, 0.4]])
        b = BehaviorDistribution(SC22, {(0, 0): t0, (0, 1): t0,
                                        (1, 0): t0, (1, 1): t1})
        assert not b.no_signaling.ok()
        avg = b.marginals(convention="average")
        first = b.marginals(convention="first")
        assert first.pa_value(0, 1) == pytest.approx(0.5)
        assert avg.pa_value(0, 1) == pytest.approx(0.5)  # rows still sum alike

    def test_no_signaling_witness_reported(self):
        t0 = np.array([[0.5, 0.0], [0.0, 0.5]])
        t1 = np.array([[0.3, 0.2], [0.2, 0.3]])
        b = BehaviorDistribution(SC22, {(0, 0): t0, (0, 1): t1,
                                        (1, 0): t0, (1, 1): t0})
        rep = b.no_signaling
        assert rep.max_discrepancy == pytest.approx(0.2)
        assert rep.witness is not None

    def test_strict_mode_raises(self):
        t0 = np.array([[0.5, 0.0], [0.0, 0.5]])
        t1 = np.array([[0.3, 0.2], [0.2, 0.3]])
        with pytest.raises(ValueError, match="no-signaling"):
            BehaviorDistribution(SC22, {(0, 0): t0, (0, 1): t1, (1, 0): t0,
                                        (1, 1): t0}, strict_no_signaling=True)


class TestCorrelator:
    def test_uniform_correlator_zero(self):
        assert uniform_behavior(SC22).correlator(0, 0) == 0.0

    def test_ideal_counts_correlator(self):
        b = BehaviorDistribution(SC22, {k: ALIGNED for k in SC22.setting_pairs()})
        assert b.correlator(0, 0) == pytest.approx(1 / math.sqrt(2), abs=1e-7)

    def test_perfect_correlation(self):
        t = np.array([[0.5, 0.0], [0.0, 0.5]])
        b = BehaviorDistribution(SC22, {k: t for k in SC22.setting_pairs()})
        assert b.correlator(1, 1) == 1.0

    def test_non_binary_rejected(self):
        sc = Scenario((3,), (2,))
        b = uniform_behavior(sc)
        with pytest.raises(ValueError, match="binary"):
            b.correlator(0, 0)

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_correlator_matches_expression(self, seed):
        rng = np.random.default_rng(seed)
        table = {}
        for (x, y) in SC22.setting_pairs():
            block = rng.random((2, 2))
            table[(x, y)] = block / block.sum()
        b = BehaviorDistribution(SC22, table)
        for (x, y) in SC22.setting_pairs():
            expr = parse_expression(f"C({x},{y})", SC22)
            assert b.correlator(x, y) == pytest.approx(
                evaluate_expression(expr, b), abs=1e-12)
            assert -1.0 <= b.correlator(x, y) <= 1.0


class TestConditionalEntropy:
    def test_perfectly_correlated_is_zero(self):
        t = np.array([[0.5, 0.0], [0.0, 0.5]])
        b = BehaviorDistribution(SC22, {k: t for k in SC22.setting_pairs()})
        assert b.conditional_entropy_ab(0, 0) == 0.0

    def test_product_of_uniform_bits(self):
        assert uniform_behavior(SC22).conditional_entropy_ab(0, 0) == \
            pytest.approx(1.0)

    def test_ideal_counts_entropy(self):
        b = BehaviorDistribution(SC22, {k: ALIGNED for k in SC22.setting_pairs()})
        flip = 2 * P_LO / TOT
        assert b.conditional_entropy_ab(0, 0) == pytest.approx(
            binary_entropy(flip), abs=1e-9)
        assert binary_entropy(0.1464466) == pytest.approx(0.60088, abs=5e-5)

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_entropy_range(self, seed):
        rng = np.random.default_rng(seed)
        sc = Scenario((3, 2), (2, 4))
        table = {}
        for (x, y) in sc.setting_pairs():
            block = rng.random((sc.a_config[x], sc.b_config[y]))
            table[(x, y)] = block / block.sum()
        b = BehaviorDistribution(sc, table)
        for (x, y) in sc.setting_pairs():
            h = b.conditional_entropy_ab(x, y)
            assert -1e-12 <= h <= math.log2(sc.outcomes_a) + 1e-12
