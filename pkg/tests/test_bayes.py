import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phc_noma.bayes import (
    HISTORY_CAP,
    VAR_FLOOR,
    DelayBelief,
    absorb_verified_delay,
    init_belief,
    likelihood_update,
    posterior_update,
    prior_update,
)

finite = st.floats(-1e4, 1e4, allow_nan=False)
variances = st.floats(1e-3, 1e4, allow_nan=False)


class TestInit:
    def test_midpoint_unit_variance(self):
        b = init_belief((0.0, 100.0))
        assert b.u == 50.0 and b.delta2 == 1.0 and b.history == []

    def test_degenerate_range(self):
        assert init_belief((0.0, 0.0)).u == 0.0

    def test_deterministic(self):
        assert init_belief((3.0, 9.0)) == init_belief((3.0, 9.0))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            init_belief((5.0, 1.0))


class TestPriorUpdate:
    def test_copies_posterior(self):
        b = DelayBelief(u=0.0, delta2=1.0, nu=12.5, zeta2=0.3, history=[12.5])
        assert prior_update(b) == (12.5, 0.3)

    def test_first_window_falls_back_to_init(self):
        b = init_belief((0.0, 10.0))
        assert prior_update(b) == (5.0, 1.0)

    def test_chained_windows_track_last_posterior(self):
        b = init_belief((0.0, 100.0))
        for xi in (40.0, 41.0, 40.5, 40.2, 40.3):
            b = absorb_verified_delay(b, xi)
        assert prior_update(b) == (b.nu, b.zeta2)


class TestLikelihoodUpdate:
    def test_two_point_mean_and_population_variance(self):
        ups, phi2 = likelihood_update([10.0], 14.0)
        assert ups == 12.0 and phi2 == 4.0

    def test_singleton_uses_floor(self):
        ups, phi2 = likelihood_update([], 7.0)
        assert ups == 7.0 and phi2 == VAR_FLOOR == 0.25

    def test_constant_history_floor(self):
        ups, phi2 = likelihood_update([5.0, 5.0, 5.0], 5.0)
        assert ups == 5.0 and phi2 == VAR_FLOOR

    @given(st.lists(finite, min_size=1, max_size=12), finite)
    def test_order_independent(self, hist, xi):
        rng = np.random.default_rng(0)
        shuffled = list(hist)
        rng.shuffle(shuffled)
        assert likelihood_update(hist, xi) == pytest.approx(likelihood_update(shuffled, xi))


class TestPosteriorUpdate:
    def test_symmetric_fusion(self):
        nu, z2 = posterior_update(4.0, 2.0, 8.0, 2.0)
        assert nu == 6.0 and z2 == 1.0

    def test_reference_values(self):
        nu, z2 = posterior_update(5.0, 1.0, 7.0, 3.0)
        assert nu == pytest.approx(5.5) and z2 == pytest.approx(0.75)

    def test_uninformative_likelihood_limit(self):
        nu, z2 = posterior_update(5.0, 1.0, 100.0, 1e12)
        assert nu == pytest.approx(5.0, abs=1e-9)
        assert z2 == pytest.approx(1.0, rel=1e-9)

    def test_rejects_zero_variance(self):
        with pytest.raises(ValueError):
            posterior_update(0.0, 0.0, 0.0, 0.0)

    @given(finite, variances, finite, variances)
    def test_swap_symmetry(self, u, d2, ups, p2):
        assert posterior_update(u, d2, ups, p2) == pytest.approx(posterior_update(ups, p2, u, d2))

    @given(finite, variances, finite, variances)
    def test_mean_is_convex_combination(self, u, d2, ups, p2):
        nu, _ = posterior_update(u, d2, ups, p2)
        assert min(u, ups) - 1e-9 <= nu <= max(u, ups) + 1e-9

    @given(finite, variances, finite, variances)
    def test_variance_contracts(self, u, d2, ups, p2):
        _, z2 = posterior_update(u, d2, ups, p2)
        assert z2 < min(d2, p2)


class TestAbsorb:
    def test_fixed_point(self):
        b = DelayBelief(u=5.0, delta2=1.0, nu=5.0, zeta2=1.0, history=[5.0, 5.0])
        b2 = absorb_verified_delay(b, 5.0)
        assert b2.nu == 5.0

    def test_history_capped(self):
        b = init_belief((0.0, 10.0))
        for _ in range(100):
            b = absorb_verified_delay(b, 5.0)
        assert len(b.history) == HISTORY_CAP

    def test_serializable_fields(self):
        b = absorb_verified_delay(init_belief((0.0, 10.0)), 4.0)
        snapshot = (b.u, b.delta2, b.upsilon, b.phi2, b.nu, b.zeta2)
        assert all(np.isfinite(snapshot))
