"""
Unit tests for particle belief tracking
"""

import pytest

from belief import ParticleBelief, init_belief, update
from config import Settings
from errors import BeliefCollapse
from sampler import RandomStream
from tests.conftest import toy_nav_state


def location_share(project, belief, loc):
    return belief.marginals(project)["robotLocation.discrete"].get(loc, 0.0)


class TestInitBelief:
    def test_particle_count(self, toy_nav, rng):
        belief = init_belief(toy_nav, 250, rng)
        assert len(belief) == 250
        assert belief.size == 250

    def test_marginals_follow_initial_programs(self, toy_nav):
        belief = init_belief(toy_nav, 4000, RandomStream(31))
        assert location_share(toy_nav, belief, 1) == pytest.approx(0.5, abs=0.03)
        assert location_share(toy_nav, belief, 2) == pytest.approx(0.1, abs=0.03)
        assert location_share(toy_nav, belief, 3) == pytest.approx(0.4, abs=0.03)
        assert belief.marginals(toy_nav)["v1.visited"] == {False: 1.0}

    def test_rejects_empty(self, toy_nav, rng):
        with pytest.raises(ValueError):
            init_belief(toy_nav, 0, rng)

    def test_histogram(self, toy_nav, rng):
        belief = init_belief(toy_nav, 100, rng)
        assert sum(belief.histogram().values()) == 100
        assert len(belief.histogram()) <= 3


class TestUpdate:
    """Rejection filter with reinvigoration"""

    def test_failure_observation_means_lost(self, toy_nav):
        rng = RandomStream(41)
        belief = init_belief(toy_nav, 300, rng)
        posterior = update(belief, toy_nav.action("navigate(loc2)"), "eFailed", toy_nav, rng)
        assert len(posterior) == 300
        assert location_share(toy_nav, posterior, -1) == 1.0
        assert posterior.stats.reinvigorated == 0

    def test_success_shifts_mass(self, toy_nav):
        rng = RandomStream(43)
        belief = init_belief(toy_nav, 2000, rng)
        posterior = update(belief, toy_nav.action("navigate(loc2)"), "eSuccess", toy_nav, rng)
        # exact posterior puts 0.81 / 0.848 on loc2
        assert location_share(toy_nav, posterior, 2) == pytest.approx(0.955, abs=0.03)
        assert posterior.stats.accepted == 2000

    def test_unknown_observation(self, toy_nav, rng):
        belief = init_belief(toy_nav, 10, rng)
        with pytest.raises(ValueError):
            update(belief, toy_nav.action("navigate(loc2)"), "eDone", toy_nav, rng)

    def test_resamples_accepted_when_budget_runs_out(self, toy_nav):
        rng = RandomStream(47)
        belief = init_belief(toy_nav, 100, rng)
        posterior = update(belief, toy_nav.action("navigate(loc2)"), "eFailed", toy_nav, rng, retry_factor=1)
        stats = posterior.stats
        assert stats.attempts == 100
        assert 0 < stats.accepted < 100
        assert stats.resampled == 100 - stats.accepted
        assert len(posterior) == 100
        assert location_share(toy_nav, posterior, -1) == 1.0

    def test_low_acceptance_reinvigorates(self, toy_nav):
        rng = RandomStream(53)
        belief = init_belief(toy_nav, 100, rng)
        posterior = update(belief, toy_nav.action("navigate(loc2)"), "eFailed", toy_nav, rng,
                           retry_factor=1, floor=0.5)
        assert posterior.stats.reinvigorated == 100 - posterior.stats.accepted
        assert len(posterior) == 100

    def test_impossible_observation_collapses(self, toy_nav, rng):
        done = toy_nav_state(toy_nav, 3, v1=True, v2=True, v3=True)
        belief = ParticleBelief([done] * 20)
        with pytest.raises(BeliefCollapse):
            update(belief, toy_nav.action("navigate(loc1)"), "eFailed", toy_nav, rng, reinvigorate=False)

    def test_impossible_observation_reinvigorates(self, toy_nav, rng):
        done = toy_nav_state(toy_nav, 3, v1=True, v2=True, v3=True)
        belief = ParticleBelief([done] * 20)
        posterior = update(belief, toy_nav.action("navigate(loc1)"), "eFailed", toy_nav, rng, reinvigorate=True)
        assert posterior.stats.accepted == 0
        assert posterior.stats.reinvigorated == 20
        assert done not in posterior.particles

    def test_reinvigorates_from_pool(self, toy_nav, rng):
        done = toy_nav_state(toy_nav, 3, v1=True, v2=True, v3=True)
        pool = [toy_nav_state(toy_nav, -1, v1=True), toy_nav_state(toy_nav, 2, v1=True, v2=True)]
        posterior = update(ParticleBelief([done] * 20), toy_nav.action("navigate(loc1)"), "eFailed", toy_nav, rng,
                           reinvigorate=True, pool=pool)
        assert posterior.stats.reinvigorated == 20
        assert posterior.stats.from_pool == 20
        assert set(posterior.particles) <= set(pool)

    def test_settings_supply_defaults(self, toy_nav, rng, mocker):
        mocker.patch("config.settings", Settings(_env_file=None, reinvigorate=False))
        done = toy_nav_state(toy_nav, 3, v1=True, v2=True, v3=True)
        with pytest.raises(BeliefCollapse):
            update(ParticleBelief([done] * 20), toy_nav.action("navigate(loc1)"), "eFailed", toy_nav, rng)

    def test_same_seed_same_posterior(self, toy_nav):
        def run(seed):
            rng = RandomStream(seed)
            belief = init_belief(toy_nav, 200, rng)
            return update(belief, toy_nav.action("navigate(loc3)"), "eSuccess", toy_nav, rng).particles
        assert run(5) == run(5)
