import math

import numpy as np
import pytest
from scipy import stats

from kpztails.errors import DomainError
from kpztails.gibbs import Hamiltonian, sample_nonintersecting_many
from kpztails.oracles import ensemble_marginals
from kpztails.rng import RngHandle


class TestQuadrature:
    def test_free_bridge_is_normal(self):
        g = np.linspace(0, 1, 5)
        (m,) = ensemble_marginals(g, [1.0], [3.0])
        x = np.array([1.0, 2.0, 3.0])
        np.testing.assert_allclose(m.cdf(x), stats.norm(2.0, math.sqrt(0.5)).cdf(x), atol=2e-3)

    def test_off_centre_site(self):
        g = np.linspace(0, 1, 5)
        (m,) = ensemble_marginals(g, [0.0], [0.0], site=1)
        assert m.quantile(0.5) == pytest.approx(0.0, abs=1e-3)
        sd = math.sqrt(2 * 0.25 * 0.75)
        assert m.quantile(stats.norm.cdf(1.0)) == pytest.approx(sd, abs=5e-3)

    @pytest.mark.parametrize("k", [1, 2])
    def test_matches_rejection(self, k):
        g = np.linspace(0, 1, 5)
        w = [1.0, 0.0][:k]
        lower = np.full(g.size, -0.5) if k == 1 else None
        samples, _ = sample_nonintersecting_many(40_000, w, w, g, lower, RngHandle(k))
        margs = ensemble_marginals(g, w, w, lower=lower)
        for i in range(k):
            edges = margs[i].quantile(np.linspace(0, 1, 9))
            p_hat = np.histogram(samples[:, i, 2], bins=edges)[0] / samples.shape[0]
            se = np.sqrt(0.125 * 0.875 / samples.shape[0])
            assert np.all(np.abs(p_hat - 0.125) < 4 * se + 1e-3)

    def test_soft_interaction_pushes_apart(self):
        g = np.linspace(0, 1, 5)
        hard = ensemble_marginals(g, [0.5, 0.0], [0.5, 0.0])
        free = ensemble_marginals(g, [0.5, 0.0], [0.5, 0.0], h=Hamiltonian(1e-3))
        assert hard[0].quantile(0.5) > free[0].quantile(0.5)

    def test_limits(self):
        with pytest.raises(DomainError):
            ensemble_marginals(np.linspace(0, 1, 5), [2.0, 1.0, 0.0], [2.0, 1.0, 0.0])
        with pytest.raises(DomainError):
            ensemble_marginals(np.linspace(0, 1, 2), [0.0], [0.0])
