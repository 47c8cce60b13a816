import json
import math

import numpy as np
import pytest

from eevdag.graph import Dag, GraphError, enumerate_dags
from eevdag.score import CovarianceSummary, Fit, equal_variance_bic, per_node_variance_bic, sample_covariance
from eevdag.search import (
    SearchConfig,
    best_score_select,
    better_neighbours,
    default_k_schedule,
    exhaustive_search,
    gds_eev,
    residual_bias,
)
from eevdag.sem import (
    RandomModelConfig,
    new_sem,
    nonfaithful_example,
    population_covariance,
    random_model,
    rescale,
    sample,
)

S2 = np.array([[1.0, 1.0], [1.0, 2.0]])


def fake_fit(score, k=0, kind="equal"):
    dag = Dag.empty(1)
    return Fit(dag, np.zeros((1, 1)), 1.0, score, k, score, 0.0, kind, np.ones(1))


class TestResidualBias:
    def test_equal_residuals_uniform(self):
        w = residual_bias(Dag.empty(3), np.zeros((3, 3)), CovarianceSummary(2 * np.eye(3), 10))
        assert np.allclose(w, 1 / 3)

    def test_proportional(self):
        cov = CovarianceSummary(np.diag([4.0, 1.0, 1.0]), 10)
        w = residual_bias(Dag.empty(3), np.zeros((3, 3)), cov, epsilon=0.0)
        assert np.allclose(w, [4 / 6, 1 / 6, 1 / 6])

    def test_full_mix_uniform(self):
        cov = CovarianceSummary(np.diag([4.0, 1.0, 1.0]), 10)
        assert np.allclose(residual_bias(Dag.empty(3), np.zeros((3, 3)), cov, epsilon=1.0), 1 / 3)

    def test_uses_fitted_residuals(self):
        cov = CovarianceSummary(S2, 10)
        B = np.array([[0.0, 0.0], [1.0, 0.0]])
        w = residual_bias(Dag(2, frozenset({(0, 1)})), B, cov, epsilon=0.0)
        assert np.allclose(w, [0.5, 0.5])


class TestConfig:
    def test_defaults(self):
        cfg = SearchConfig().resolved(5)
        assert cfg.k_schedule == default_k_schedule(5) == [5, 10, 15, 25, 300]
        assert cfg.init_edge_prob == pytest.approx(0.25)
        assert cfg.bias_mix == 0.1

    @pytest.mark.parametrize("kw", [dict(k_schedule=[0]), dict(k_schedule=[]), dict(bias_mix=1.5),
                                    dict(max_iterations=0), dict(init_edge_prob=-0.1)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SearchConfig(**kw).resolved(4)


class TestGdsEev:
    def test_nonfaithful_recovery(self):
        m = nonfaithful_example()
        hits = 0
        for s in range(10):
            cov = sample_covariance(sample(m, 500, s))
            hits += gds_eev(cov, SearchConfig(seed=s)).best.dag == m.dag
        assert hits >= 9

    def test_empty_model(self):
        cov = sample_covariance(sample(new_sem(np.zeros((4, 4))), 10**4, 3))
        assert gds_eev(cov, SearchConfig(seed=1)).best.dag == Dag.empty(4)

    def test_single_column(self, rng):
        X = rng.normal(size=(40, 1))
        res = gds_eev(sample_covariance(X), SearchConfig(seed=0))
        assert res.best.dag == Dag.empty(1)
        assert res.best.sigma2_hat == pytest.approx(X.var())

    def test_deterministic(self):
        m = random_model(RandomModelConfig(6, 0.4, seed=2))
        cov = sample_covariance(sample(m, 300, 2))
        a = gds_eev(cov, SearchConfig(seed=(4, 5)))
        b = gds_eev(cov, SearchConfig(seed=(4, 5)))
        assert json.dumps(a.to_dict(True)) == json.dumps(b.to_dict(True))

    def test_best_is_min_over_restarts(self):
        m = random_model(RandomModelConfig(6, 0.5, seed=8))
        res = gds_eev(sample_covariance(sample(m, 200, 8)), SearchConfig(seed=8))
        assert len(res.per_restart) == 5
        assert res.best.score == min(r.fit.score for r in res.per_restart)
        assert [r.init_seed for r in res.per_restart] == [(8, i) for i in range(5)]
        assert res.evaluations == sum(r.evaluations for r in res.per_restart)

    def test_descent_and_local_optimum(self):
        for s in range(5):
            m = random_model(RandomModelConfig(6, 0.4, seed=s))
            cov = sample_covariance(sample(m, 500, s))
            res = gds_eev(cov, SearchConfig(seed=s, certify=True))
            for r in res.per_restart:
                assert all(b < a for a, b in zip(r.trace, r.trace[1:]))
                assert r.converged
                assert better_neighbours(r.fit.dag, cov) == []

    def test_pernode_variant(self):
        m = random_model(RandomModelConfig(5, 0.4, variance_spread=0.5, seed=1))
        cov = sample_covariance(sample(m, 500, 1))
        res = gds_eev(cov, SearchConfig(seed=1, score="pernode", bias_mix=1.0))
        assert res.best.kind == "pernode"
        assert better_neighbours(res.best.dag, cov, kind="pernode") == []

    def test_scaling_invariance(self):
        m = random_model(RandomModelConfig(5, 0.5, seed=12))
        d = sample(m, 400, 12)
        base = gds_eev(sample_covariance(d), SearchConfig(seed=12)).best
        for c in (0.1, 3.0, 100.0):
            fit = gds_eev(sample_covariance(rescale(d, [c] * 5)), SearchConfig(seed=12)).best
            assert fit.dag == base.dag
            assert np.allclose(fit.B_hat, base.B_hat, rtol=1e-12, atol=1e-14)
            assert fit.sigma2_hat / base.sigma2_hat == pytest.approx(c**2, rel=1e-10)

    def test_lambda_zero_dense(self):
        m = random_model(RandomModelConfig(4, 0.3, seed=0))
        cov = sample_covariance(sample(m, 30, 0))
        assert gds_eev(cov, SearchConfig(seed=0, lam=0.0)).best.dag.num_edges == 6

    def test_serialisation(self):
        res = gds_eev(CovarianceSummary(S2, 100), SearchConfig(seed=0))
        d = res.to_dict(verbose=True)
        assert "trace" in d["restarts"][0] and "trace" not in res.to_dict()["restarts"][0]
        json.dumps(d)


class TestExhaustive:
    def test_identity_gives_empty(self):
        assert exhaustive_search(CovarianceSummary(np.eye(3), 50)).dag == Dag.empty(3)

    def test_two_node_orientation(self):
        fit = exhaustive_search(CovarianceSummary(S2, 1000))
        assert fit.dag == Dag(2, frozenset({(0, 1)}))

    def test_population_recovery_p3(self):
        for s in range(50):
            m = random_model(RandomModelConfig(3, 2 / 3, seed=s))
            cov = CovarianceSummary.population(population_covariance(m))
            assert exhaustive_search(cov, 1e-6).dag == m.dag

    def test_matches_enumeration_minimum(self):
        m = random_model(RandomModelConfig(3, 0.6, seed=1))
        cov = sample_covariance(sample(m, 100, 1))
        fit = exhaustive_search(cov)
        assert fit.score == pytest.approx(min(equal_variance_bic(d, cov).score for d in enumerate_dags(3)))

    def test_cap(self):
        with pytest.raises(GraphError, match="cap"):
            exhaustive_search(CovarianceSummary(np.eye(6), 10))

    def test_greedy_never_beats_oracle(self):
        for s in range(5):
            m = random_model(RandomModelConfig(4, 0.5, seed=s))
            cov = sample_covariance(sample(m, 2000, s))
            assert gds_eev(cov, SearchConfig(seed=s)).best.score >= exhaustive_search(cov).score - 1e-6


class TestBestScoreSelect:
    def test_lower_wins(self):
        assert best_score_select([("A", fake_fit(10)), ("B", fake_fit(12))]) == "A"
        assert best_score_select([("A", fake_fit(12)), ("B", fake_fit(10))]) == "B"

    def test_tie_first(self):
        assert best_score_select([("A", fake_fit(10)), ("B", fake_fit(10))]) == "A"

    def test_empty(self):
        with pytest.raises(ValueError):
            best_score_select([])

    def test_noise_parameters_counted(self):
        # per-node fits carry p variance parameters against one for the equal-variance fit
        cov = sample_covariance(sample(nonfaithful_example(), 1000, 0))
        dag = nonfaithful_example().dag
        eq, pn = equal_variance_bic(dag, cov), per_node_variance_bic(dag, cov)
        assert pn.nll <= eq.nll
        assert pn.bic - pn.score == pytest.approx(3 * math.log(1000) / 2)
        assert best_score_select([("eev", eq), ("pernode", pn)]) == "eev"
