import json

import numpy as np
import pytest

from egsloss import analytic, oracle
from egsloss.model import (
    TABLE_COX,
    PeriodKind,
    PeriodSpec,
    PhaseSpec,
    ScenarioError,
    SessionLayout,
    SessionTypeSpec,
)

from helpers import one_flow, random_tiny_scenario, single_phase_session

A, I = PeriodKind.ATTEMPT, PeriodKind.IDLE


def solved(sc, **kw):
    gen = oracle.build_ctmc(sc, **kw)
    return gen, oracle.stationary_distribution(gen)


class TestConstruction:
    def test_birth_death(self):
        gen = oracle.build_ctmc(one_flow((2, 2), 1, rate=3.0, session=single_phase_session(0.5)))
        assert sorted(gen.states) == [(0,), (1,)]
        q = gen.matrix().toarray()
        i0, i1 = gen.states.index((0,)), gen.states.index((1,))
        assert q[i0, i1] == 3.0 and q[i1, i0] == pytest.approx(2.0)

    def test_mm22(self):
        gen = oracle.build_ctmc(one_flow((3, 3), 2))
        assert sorted(gen.states) == [(0,), (1,), (2,)]

    def test_two_phase_chain(self):
        s = SessionTypeSpec("s", (PeriodSpec(A, (PhaseSpec(1.0, 0.5, 0.2), PhaseSpec(2.0, 0.0, 0.1))),))
        gen = oracle.build_ctmc(one_flow((1, 1), 1, session=s))
        assert sorted(gen.states) == [(0, 0), (0, 1), (1, 0)]

    @pytest.mark.parametrize("seed", range(5))
    def test_generator_rows_sum_to_zero(self, seed):
        sc = random_tiny_scenario(np.random.default_rng(seed), ["strict_single", "jump_over"][seed % 2])
        q = oracle.build_ctmc(sc).matrix()
        assert np.abs(np.asarray(q.sum(axis=1))).max() < 1e-12
        off = q - np.diag(q.diagonal())
        assert off.min() >= 0

    def test_state_cap(self):
        with pytest.raises(oracle.StateSpaceTooLarge):
            oracle.build_ctmc(one_flow((9, 9), 8), state_cap=3)

    def test_phase_cap(self):
        from egsloss import presets
        with pytest.raises(oracle.StateSpaceTooLarge):
            oracle.build_ctmc(presets.table1())

    def test_cap_is_a_scenario_error(self):
        assert issubclass(oracle.StateSpaceTooLarge, ScenarioError)


class TestStationary:
    @pytest.mark.parametrize("rate, empty", [(1.0, 1 / 2), (0.5, 2 / 3)])
    def test_mm11(self, rate, empty):
        gen, pi = solved(one_flow((2, 2), 1, rate=rate))
        assert pi[gen.states.index((0,))] == pytest.approx(empty, abs=1e-12)

    def test_mm22(self):
        gen, pi = solved(one_flow((3, 3), 2))
        got = [pi[gen.states.index((k,))] for k in range(3)]
        assert got == pytest.approx([0.4, 0.4, 0.2], abs=1e-12)

    def test_empty_scenario(self):
        gen, pi = solved(one_flow((2, 2), 1, rate=0.0))
        assert gen.size == 1 and pi.tolist() == [1.0]

    @pytest.mark.parametrize("seed", range(6))
    def test_normalized_and_balanced(self, seed):
        gen, pi = solved(random_tiny_scenario(np.random.default_rng(seed), "strict_multiple"))
        assert abs(pi.sum() - 1) < 1e-12 and pi.min() >= 0
        assert oracle.balance_residual(gen, pi) < 1e-9

    @pytest.mark.parametrize("mode", ["strict_single", "strict_multiple"])
    @pytest.mark.parametrize("seed", range(5))
    def test_product_form(self, mode, seed):
        gen, pi = solved(random_tiny_scenario(np.random.default_rng(seed + 20), mode))
        assert np.abs(oracle.product_form(gen) - pi).max() < 1e-9
        assert oracle.local_balance_residual(gen, pi) < 1e-9


class TestBlocking:
    def test_examples(self):
        assert oracle.oracle_blocking(*solved(one_flow((1, 1), 1)), 0) == 0.0
        assert oracle.oracle_blocking(*solved(one_flow((2, 2), 1)), 0) == pytest.approx(0.5, abs=1e-12)
        assert oracle.oracle_blocking(*solved(one_flow((3, 3), 2)), 0) == pytest.approx(0.2, abs=1e-12)

    def test_bad_flow(self):
        with pytest.raises(IndexError):
            oracle.oracle_blocking(*solved(one_flow((2, 2), 1)), 3)

    def test_first_call_flux_matches_pasta(self):
        gen, pi = solved(one_flow((3, 3), 2, rate=1.7))
        assert oracle.first_call_blocking(gen, pi, 0) == pytest.approx(oracle.oracle_blocking(gen, pi, 0), abs=1e-12)

    def test_no_retrials_in_strict_mode(self):
        gen, pi = solved(one_flow((3, 3), 2))
        assert np.isnan(oracle.retrial_blocking(gen, pi, 0))

    @pytest.mark.parametrize("seed", range(8))
    def test_jump_over_matches_analytic(self, seed):
        sc = random_tiny_scenario(np.random.default_rng(seed + 40), "jump_over")
        res = oracle.solve(sc)
        np.testing.assert_allclose(res.flow_blocking, analytic.blocking_probabilities(sc), atol=1e-9, rtol=0)

    @pytest.mark.parametrize("seed", range(8))
    def test_jump_over_retrials_see_steady_state(self, seed):
        sc = random_tiny_scenario(np.random.default_rng(seed + 60), "jump_over")
        res = oracle.solve(sc)
        live = ~np.isnan(res.retrial_blocking)
        np.testing.assert_allclose(res.retrial_blocking[live], res.first_call_blocking[live], atol=1e-9)
        np.testing.assert_allclose(res.first_call_blocking[sc.rates() > 0], res.flow_blocking[sc.rates() > 0],
                                   atol=1e-9)

    def test_jump_over_with_cox_attempts(self):
        s = SessionLayout("s", 2, 2, 0.5, TABLE_COX).build("jump_over", 0.3, 0.2)
        sc = one_flow((2, 2), 1, rate=0.8, session=s, mode="jump_over")
        res = oracle.solve(sc)
        assert res.flow_blocking[0] == pytest.approx(analytic.blocking_probability(sc, 0), abs=1e-9)
        assert res.retrial_blocking[0] == pytest.approx(res.first_call_blocking[0], abs=1e-9)


class TestAggregation:
    @pytest.mark.parametrize("mode", ["strict_single", "strict_multiple", "jump_over"])
    @pytest.mark.parametrize("seed", range(4))
    def test_period_law_matches_collapsed_chain(self, mode, seed):
        sc = random_tiny_scenario(np.random.default_rng(seed + 80), mode, max_nodes=3)
        assert oracle.aggregation_gap(sc) < 1e-9

    def test_collapsed_has_one_phase_per_period(self):
        sc = random_tiny_scenario(np.random.default_rng(3), "strict_single")
        col = oracle.collapsed_scenario(sc)
        for i in range(col.flow_count):
            assert all(len(p.phases) == 1 for p in col.session(i).periods)


def test_dump(tmp_path):
    gen, pi = solved(one_flow((3, 3), 2))
    path = tmp_path / "chain.json"
    oracle.dump(gen, pi, path)
    data = json.loads(path.read_text())
    assert data["phases_per_flow"] == [1]
    assert sum(s["pi"] for s in data["states"]) == pytest.approx(1.0)
