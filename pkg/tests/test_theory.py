"""Normalized margin and the margin-dominance checkers."""

from __future__ import annotations

import math

import numpy as np
import pytest

from qaea_dr.errors import ValidationError
from qaea_dr.theory import (
    InstanceConfig,
    PreconditionError,
    SyntheticInstance,
    build_instance,
    hand_instance,
    normalized_margin,
    proof_step_slacks,
    sweep_theorem1,
    sweep_theorem2,
    verify_theorem1,
    verify_theorem2,
)


class TestNormalizedMargin:
    def test_orthonormal_evaluation(self):
        v_q = np.array([1.0, 0.0])
        v1 = np.array([1.0, 0.0])
        v2 = np.array([0.0, 1.0])
        assert normalized_margin(v_q, v1, v2) == pytest.approx(1 / math.sqrt(2), abs=1e-15)

    def test_antisymmetry(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            d = int(rng.integers(2, 16))
            v_q, v1, v2 = rng.standard_normal((3, d))
            assert normalized_margin(v_q, v1, v2) == pytest.approx(
                -normalized_margin(v_q, v2, v1), abs=1e-12
            )

    def test_scale_invariance_in_query(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            d = int(rng.integers(2, 16))
            v_q, v1, v2 = rng.standard_normal((3, d))
            c = float(rng.uniform(0.1, 10.0))
            base = normalized_margin(v_q, v1, v2)
            assert normalized_margin(c * v_q, v1, v2) == pytest.approx(base, abs=1e-12)
            assert normalized_margin(-c * v_q, v1, v2) == pytest.approx(-base, abs=1e-12)

    def test_identical_texts_rejected(self):
        v = np.array([1.0, 2.0])
        with pytest.raises(ValidationError, match="v1 == v2"):
            normalized_margin(np.array([1.0, 0.0]), v, v)

    def test_zero_query_rejected(self):
        with pytest.raises(ValidationError, match="non-zero"):
            normalized_margin(np.zeros(2), np.array([1.0, 0.0]), np.array([0.0, 1.0]))


class TestHandInstance:
    def test_margin_values_exact(self):
        hand = hand_instance()
        best = normalized_margin(hand.v_q, hand.v1_gen[0], hand.v2)
        baseline = normalized_margin(hand.v_q, hand.v1, hand.v2)
        assert best == 1 / math.sqrt(3)
        assert baseline == 0.5
        assert best > baseline

    def test_checker_accepts(self):
        result = verify_theorem1(hand_instance())
        assert result.holds
        assert result.best_margin == 1 / math.sqrt(3)
        assert result.baseline_margin == 0.5


class TestBuildInstance:
    def test_orthogonality_within_tolerance(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            config = InstanceConfig(
                n_gen1=int(rng.integers(1, 5)),
                n_gen2=int(rng.integers(1, 5)),
                relevance_gap=float(rng.uniform(0, 0.3)),
                noise_scale=float(rng.uniform(0, 2)),
            )
            d = int(rng.integers(config.n_gen1 + config.n_gen2 + 2, 65))
            inst = build_instance(int(rng.integers(0, 1 << 31)), d, config)
            gens = np.concatenate([inst.v1_gen, inst.v2_gen])
            gram = gens @ gens.T
            np.fill_diagonal(gram, 0.0)
            assert np.abs(gram).max() < 1e-12
            for noise in (inst.noise1, inst.noise2):
                assert np.abs(gens @ noise).max() < 1e-12

    def test_zero_noise_degenerates_to_equal_margins(self):
        config = InstanceConfig(n_gen1=1, n_gen2=1, relevance_gap=0.1, noise_scale=0.0)
        inst = build_instance(seed=5, d=8, config=config)
        assert np.array_equal(inst.v1, inst.v1_gen[0])
        result = verify_theorem1(inst)
        assert result.best_margin == result.baseline_margin

    def test_dimension_too_small_rejected(self):
        with pytest.raises(ValidationError, match="too small"):
            build_instance(seed=0, d=3, config=InstanceConfig(n_gen1=2, n_gen2=2))

    def test_decomposition_identities(self):
        inst = build_instance(seed=9, d=16, config=InstanceConfig())
        assert np.allclose(inst.v1, inst.v1_gen[0] + inst.noise1, atol=1e-15)
        assert np.allclose(inst.v2, inst.v2_gen[0] + inst.noise2, atol=1e-15)


class TestVerifyTheorem1:
    def test_monte_carlo_small(self):
        result = sweep_theorem1(500, seed=7)
        assert result.violations == 0
        assert result.worst_slack >= -1e-9

    def test_proof_step_inequalities_hold(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            config = InstanceConfig(
                n_gen1=int(rng.integers(1, 4)),
                n_gen2=int(rng.integers(1, 4)),
                relevance_gap=float(rng.uniform(0, 0.3)),
                noise_scale=float(rng.uniform(0, 2)),
            )
            d = config.n_gen1 + config.n_gen2 + 2 + int(rng.integers(0, 20))
            inst = build_instance(int(rng.integers(0, 1 << 31)), d, config)
            for name, slack in proof_step_slacks(inst).items():
                assert slack >= -1e-9, name

    def test_condition_violation_refused_and_load_bearing(self):
        """An instance violating relevance enhancement is refused by the
        checker, and its margins actually violate the dominance claim,
        showing the condition matters."""
        e = np.eye(4)
        inst = SyntheticInstance(
            dimension=4,
            v_q=e[0] + e[1],             # aligned with the noise direction
            v1_gen=e[0:1].copy(),
            v2_gen=e[2:3].copy(),
            noise1=5.0 * e[1],           # drives <v_q, v1> far above <v_q, v1_gen[0]>
            noise2=np.zeros(4),
            v1=e[0] + 5.0 * e[1],
            v2=e[2].copy(),
        )
        with pytest.raises(PreconditionError, match="relevance enhancement"):
            verify_theorem1(inst)
        best = normalized_margin(inst.v_q, inst.v1_gen[0], inst.v2)
        baseline = normalized_margin(inst.v_q, inst.v1, inst.v2)
        assert best < baseline  # dominance fails without the condition

    def test_irrelevance_violation_refused(self):
        # the query opposes the competitor's noise, so the competitor's
        # generated vector aligns better than the competitor original
        e = np.eye(4)
        inst = SyntheticInstance(
            dimension=4,
            v_q=e[2] - e[3],
            v1_gen=e[0:1].copy(),
            v2_gen=e[2:3].copy(),
            noise1=e[1].copy(),
            noise2=e[3].copy(),
            v1=e[0] + e[1],
            v2=e[2] + e[3],
        )
        with pytest.raises(PreconditionError, match="irrelevance consistency"):
            verify_theorem1(inst)

    def test_best_index_stable_under_query_scaling(self):
        inst = build_instance(seed=11, d=24, config=InstanceConfig(n_gen1=4, n_gen2=2))
        base = verify_theorem1(inst)
        scaled = SyntheticInstance(
            dimension=inst.dimension,
            v_q=3.7 * inst.v_q,
            v1_gen=inst.v1_gen,
            v2_gen=inst.v2_gen,
            noise1=inst.noise1,
            noise2=inst.noise2,
            v1=inst.v1,
            v2=inst.v2,
        )
        assert verify_theorem1(scaled).best_index == base.best_index


class TestVerifyTheorem2:
    def test_monte_carlo_small(self):
        result = sweep_theorem2(500, seed=17)
        assert result.violations == 0
        assert result.worst_slack >= -1e-9

    def test_best_vector_may_come_from_event_subset(self):
        rng = np.random.default_rng(19)
        seen_event_best = False
        for _ in range(50):
            config = InstanceConfig(n_gen1=4, n_gen2=2, qa_count=2)
            inst = build_instance(int(rng.integers(0, 1 << 31)), 16, config)
            result = verify_theorem2(inst)
            assert result.holds
            if result.best_index >= inst.qa_count:
                seen_event_best = True
        assert seen_event_best

    def test_duplicate_subsets_give_equal_margins(self):
        """qa-set == event-set: the union's best margin equals the single
        subset's best margin exactly."""
        e = np.eye(6)
        gen = np.stack([e[0], e[1], e[0], e[1]])  # qa rows then identical event rows
        inst = SyntheticInstance(
            dimension=6,
            v_q=0.9 * e[0] + 0.4 * e[1] + 0.1 * e[2],
            v1_gen=gen,
            v2_gen=e[2:3].copy(),
            noise1=e[4].copy(),
            noise2=e[5].copy(),
            v1=e[0] + e[4],
            v2=e[2] + e[5],
            qa_count=2,
        )
        result = verify_theorem2(inst)
        assert result.holds
        qa_margins = result.member_margins[:2]
        event_margins = result.member_margins[2:]
        assert qa_margins == event_margins
        assert result.best_margin == max(qa_margins)

    def test_requires_split(self):
        inst = build_instance(seed=2, d=12, config=InstanceConfig())
        with pytest.raises(ValidationError, match="qa/event split"):
            verify_theorem2(inst)


class TestDualPathEvaluation:
    def test_margin_matches_extended_precision(self):
        mpmath = pytest.importorskip("mpmath")
        mpmath.mp.dps = 50
        rng = np.random.default_rng(23)
        for _ in range(100):
            d = int(rng.integers(2, 20))
            v_q, v1, v2 = rng.standard_normal((3, d))
            if np.array_equal(v1, v2):
                continue
            expected = _mp_margin(mpmath, v_q, v1, v2)
            assert normalized_margin(v_q, v1, v2) == pytest.approx(
                expected, abs=1e-12
            )


def _mp_margin(mpmath, v_q, v1, v2):
    q = [mpmath.mpf(float(x)) for x in v_q]
    diff = [mpmath.mpf(float(a)) - mpmath.mpf(float(b)) for a, b in zip(v1, v2)]
    num = mpmath.fsum(a * b for a, b in zip(q, diff))
    qn = mpmath.sqrt(mpmath.fsum(a * a for a in q))
    dn = mpmath.sqrt(mpmath.fsum(a * a for a in diff))
    return float(num / (qn * dn))
