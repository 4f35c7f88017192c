"""
Integration tests over the bundled scenarios
Sampling against enumeration, particle against exact belief, and the exact
oracle on the pick-and-serve variants.
"""

from collections import Counter

import pytest
from scipy import stats

from belief import init_belief, update
from explicit import (
    BeliefVector,
    build_explicit,
    canonical_state,
    enumerate_initial,
    exact_belief_update,
    oracle_plan,
)
from sampler import RandomStream, sample_initial_state
from spec_model import load_project
from tests.conftest import (
    ALL_MANIFESTS,
    exact_outcomes,
    l1_distance,
    make_state,
    sampled_outcomes,
    toy_nav_state,
)


@pytest.mark.integration
class TestScenarioFiles:
    """Every bundled manifest loads and links"""

    @pytest.mark.parametrize("manifest", ALL_MANIFESTS, ids=lambda p: p.stem + ":" + p.parent.name)
    def test_links(self, manifest):
        project = load_project(manifest)
        assert project.actions
        assert project.manifest.expected_properties

    def test_toy_nav_closure_is_small(self, toy_nav):
        assert build_explicit(toy_nav).n_states <= 64


@pytest.mark.integration
class TestSamplingMatchesEnumeration:
    """Both semantics of the same programs agree"""

    def test_initial_belief(self, toy_nav):
        exact = enumerate_initial(toy_nav).as_dict()
        rng = RandomStream(101)
        counts = Counter(canonical_state(sample_initial_state(toy_nav, rng)) for _ in range(20_000))
        assert l1_distance(counts, exact) < 0.02

    @pytest.mark.parametrize("label", ["navigate(loc1)", "navigate(loc2)", "navigate(loc3)"])
    def test_toy_nav_step(self, toy_nav, label):
        state = toy_nav_state(toy_nav, 1, v1=True)
        action = toy_nav.action(label)
        exact = exact_outcomes(toy_nav, state, action)
        counts = sampled_outcomes(toy_nav, state, action, 20_000, seed=7)
        assert l1_distance(counts, exact) < 0.03
        keys = sorted(exact, key=str)
        observed = [counts.get(k, 0) for k in keys]
        expected = [exact[k] * sum(observed) for k in keys]
        assert stats.chisquare(observed, expected).pvalue > 0.001

    def test_opponent_move(self, tictactoe):
        state = make_state(tictactoe, mover="eOpponentTurn", lastOpponentMove=-1,
                           paths={"board[4]": "eAgent"})
        action = tictactoe.action("detect()")
        exact = exact_outcomes(tictactoe, state, action)
        assert len(exact) == 8
        counts = sampled_outcomes(tictactoe, state, action, 16_000, seed=9)
        assert l1_distance(counts, exact) < 0.04

    def test_pick_step(self, pick_finer):
        state = make_state(pick_finer, robotAt="eTable2")
        action = pick_finer.action("pick()")
        exact = exact_outcomes(pick_finer, state, action)
        counts = sampled_outcomes(pick_finer, state, action, 20_000, seed=13)
        assert l1_distance(counts, exact) < 0.03


@pytest.mark.integration
class TestBeliefMatchesExact:
    def test_toy_nav_success(self, toy_nav):
        pomdp = build_explicit(toy_nav)
        action = toy_nav.action("navigate(loc2)")
        exact = exact_belief_update(pomdp, pomdp.b0, action, "eSuccess")
        rng = RandomStream(77)
        belief = update(init_belief(toy_nav, 5_000, rng), action, "eSuccess", toy_nav, rng)
        assert BeliefVector.from_particles(pomdp, belief.particles).l1(exact) < 0.06

    def test_noisy_sensing_odds(self, pick_finer):
        """Repeated grasp sensing sharpens the belief the way Bayes does"""
        pomdp = build_explicit(pick_finer)
        pick = pick_finer.action("pick()")
        sense = pick_finer.action("detect_hold_can()")
        rng = RandomStream(5)
        particles = update(init_belief(pick_finer, 5_000, rng), pick, "eDone", pick_finer, rng)
        exact = exact_belief_update(pomdp, pomdp.b0, pick, "eDone")
        for _ in range(3):
            particles = update(particles, sense, "eCanHeld", pick_finer, rng)
            exact = exact_belief_update(pomdp, exact, sense, "eCanHeld")
        approx = BeliefVector.from_particles(pomdp, particles.particles)
        holding = [i for i, s in enumerate(pomdp.states) if s.get(pick_finer.state, "holding")]
        assert approx.probs[holding].sum() == pytest.approx(exact.probs[holding].sum(), abs=0.05)


@pytest.mark.integration
class TestOracle:
    """Exact finite-horizon choices"""

    def test_finer_model_leaves_the_hard_can(self, pick_finer):
        pomdp = build_explicit(pick_finer)
        action, _ = oracle_plan(pomdp, pomdp.b0, 4)
        assert action.label == "navigate(table2)"

    def test_rough_model_picks_in_place(self, pick_rough):
        pomdp = build_explicit(pick_rough)
        action, _ = oracle_plan(pomdp, pomdp.b0, 4)
        assert action.label == "pick()"
