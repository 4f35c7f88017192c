"""
Unit tests for the episode executor and trace files
"""

from dataclasses import replace

import pytest

import executor
from am_runtime import FeedLog, SkillResponse
from belief import init_belief
from executor import (
    BatchSummary,
    EpisodeTrace,
    Outcome,
    derive_seeds,
    read_trace,
    replay_check,
    run_batch,
    run_episode,
    summarize,
    world_seed,
    write_trace,
)
from explicit import build_explicit, expected_step_reward
from harness import InProcessChannel, SkillChannel, WorldSimulator, synthesize_response
from planner import PlannerConfig
from sampler import RandomStream


class SilentSkill(SkillChannel):
    """Answers every activation with an empty response"""

    async def activate(self, request):
        return SkillResponse({}), FeedLog()


class UnreportedSkill(SkillChannel):
    """Real responses without the ground-truth report"""

    def __init__(self, world):
        self.world = world

    async def activate(self, request):
        action = self.world.decode(request)
        result = self.world.execute(action)
        return synthesize_response(self.world.project, action.skill, result.observation)


@pytest.fixture
def quick(toy_nav):
    return PlannerConfig(simulations=60, max_depth=5, gamma=toy_nav.gamma)


async def toy_episode(project, config, seed=0, channel_world="faithful", **kwargs):
    channel = InProcessChannel(WorldSimulator(project, channel_world, seed=world_seed(seed)))
    return await run_episode(project, config, channel, particles=200, seed=seed, **kwargs)


def model_reward_at_start(project, seed, particles, label):
    """Model-expected reward of the first action under the episode's initial particle belief"""
    _, belief_rng = RandomStream(seed).split(2)
    belief = init_belief(project, particles, belief_rng)
    action = project.action(label)
    return sum(expected_step_reward(project, p, action) for p in belief.particles) / len(belief)


class TestSeeds:
    def test_derive_seeds(self):
        seeds = derive_seeds(0, 5)
        assert seeds == derive_seeds(0, 5)
        assert len(set(seeds)) == 5
        assert derive_seeds(1, 5) != seeds

    def test_world_seed_is_separate(self):
        assert world_seed(7) == world_seed(7)
        assert world_seed(7) != 7


class TestRunEpisode:
    """Closed-loop episodes against in-process worlds"""

    async def test_trace_bookkeeping(self, toy_nav, quick):
        trace = await toy_episode(toy_nav, quick, seed=3, step_cap=8)
        assert 1 <= trace.length <= 8
        assert [s.index for s in trace.steps] == list(range(trace.length))
        assert trace.discounted_return == pytest.approx(trace.recompute_return())
        assert all(s.observation in ("eSuccess", "eFailed") for s in trace.steps)
        assert all(not s.flagged for s in trace.steps)
        if trace.outcome == Outcome.GOAL:
            assert trace.steps[-1].terminal
        else:
            assert trace.outcome == Outcome.STEP_CAP
            assert trace.length == 8

    async def test_belief_summary_is_normalised(self, toy_nav, quick):
        trace = await toy_episode(toy_nav, quick, seed=5, step_cap=2)
        for step in trace.steps:
            assert sum(step.belief["robotLocation.discrete"].values()) == pytest.approx(1.0)

    async def test_same_seed_same_trace(self, toy_nav, quick):
        first = await toy_episode(toy_nav, quick, seed=11, step_cap=5)
        again = await toy_episode(toy_nav, quick, seed=11, step_cap=5)
        assert first.comparable() == again.comparable()

    async def test_tree_reuse_episode(self, toy_nav, quick, mocker):
        kept = replace(quick, tree_reuse=True)
        search = mocker.spy(executor, "plan")
        first = await toy_episode(toy_nav, kept, seed=11, step_cap=4)
        again = await toy_episode(toy_nav, kept, seed=11, step_cap=4)
        assert first.comparable() == again.comparable()
        roots = [c.kwargs["root"] for c in search.call_args_list[:first.length]]
        assert roots[0] is None
        if first.length > 1:
            assert roots[1] is not None

    async def test_zero_step_cap(self, toy_nav, quick):
        trace = await toy_episode(toy_nav, quick, step_cap=0)
        assert trace.length == 0
        assert trace.outcome == Outcome.STEP_CAP
        assert trace.discounted_return == 0.0

    async def test_offline_planner(self, toy_nav, quick):
        trace = await toy_episode(toy_nav, quick, seed=2, step_cap=4, planner="offline", horizon=2)
        assert trace.planner == "offline"
        assert trace.length >= 1
        for step in trace.steps:
            assert sum(step.belief["robotLocation.discrete"].values()) == pytest.approx(1.0)

    async def test_fault_ends_episode(self, toy_nav, quick):
        trace = await run_episode(toy_nav, quick, SilentSkill(), particles=50, step_cap=5)
        assert trace.outcome == Outcome.FAULT
        assert trace.fault == "MissingResponseField"
        assert trace.fault_message
        assert trace.length == 0

    async def test_missing_report_is_flagged(self, toy_nav, quick):
        channel = UnreportedSkill(WorldSimulator(toy_nav, seed=1))
        trace = await run_episode(toy_nav, quick, channel, particles=50, step_cap=2)
        assert trace.length == 2
        assert all(s.flagged and s.world_reward is None for s in trace.steps)
        assert trace.steps[0].reward == pytest.approx(model_reward_at_start(toy_nav, 0, 50, trace.steps[0].action))
        assert trace.outcome == Outcome.STEP_CAP


class TestCustomWorld:
    """Flagged steps record what the model expects, not what the world paid"""

    async def test_particle_belief_expectation(self, toy_nav, quick):
        trace = await toy_episode(toy_nav, quick, seed=4, step_cap=3, world_name="slippery",
                                  channel_world="slippery")
        assert all(s.flagged for s in trace.steps)
        assert all(s.world_reward is not None for s in trace.steps)
        first = trace.steps[0]
        assert first.reward == pytest.approx(model_reward_at_start(toy_nav, 4, 200, first.action))
        assert trace.discounted_return == pytest.approx(trace.recompute_return())

    async def test_exact_belief_expectation(self, toy_nav, quick):
        pomdp = build_explicit(toy_nav)
        trace = await toy_episode(toy_nav, quick, seed=4, step_cap=2, planner="offline", horizon=2,
                                  pomdp=pomdp, world_name="slippery", channel_world="slippery")
        first = trace.steps[0]
        expected = float(pomdp.b0.probs @ pomdp.R[:, first.action_id])
        assert first.flagged
        assert first.reward == pytest.approx(expected)
        assert first.world_reward is not None


class TestBatch:
    async def test_run_batch(self, toy_nav, quick):
        summary = await run_batch(toy_nav, quick, episodes=2, particles=100, step_cap=4)
        assert summary.episodes == 2
        assert len(summary.traces) == 2
        assert summary.traces[0].seed != summary.traces[1].seed
        assert 0.0 <= summary.success_rate <= 1.0

    async def test_rejects_empty_batch(self, toy_nav, quick):
        with pytest.raises(ValueError):
            await run_batch(toy_nav, quick, episodes=0)

    def test_summarize(self):
        done = EpisodeTrace("p", 1, "pomcp", "faithful", 0.9, outcome=Outcome.GOAL, discounted_return=10.0)
        faulted = EpisodeTrace("p", 2, "pomcp", "faithful", 0.9, outcome=Outcome.FAULT, fault="LoopCap")
        summary = summarize([done, faulted])
        assert summary.successes == 1
        assert summary.success_rate == 0.5
        assert summary.mean_return == 5.0
        assert summary.faults == {"LoopCap": 1}
        assert ("fault: LoopCap", 1) in summary.rows()

    def test_empty_summary(self):
        assert BatchSummary(0, 0, 0.0, 0.0).success_rate == 0.0


class TestTraceFiles:
    """JSON-lines trace files and replay"""

    async def test_write_then_read(self, toy_nav, quick, tmp_path):
        trace = await toy_episode(toy_nav, quick, seed=4, step_cap=3)
        path = write_trace(trace, tmp_path / "traces" / "episode.jsonl")
        lines = path.read_text().splitlines()
        assert len(lines) == trace.length + 2
        loaded = read_trace(path)
        assert loaded.comparable() == trace.comparable()
        assert loaded.seed == 4

    async def test_replay_agrees(self, toy_nav, quick):
        trace = await toy_episode(toy_nav, quick, seed=6, step_cap=3)
        assert replay_check(toy_nav, trace) == []

    async def test_replay_spots_tampering(self, toy_nav, quick):
        trace = await toy_episode(toy_nav, quick, seed=6, step_cap=3)
        step = trace.steps[0]
        step.observation = "eFailed" if step.observation == "eSuccess" else "eSuccess"
        mismatches = replay_check(toy_nav, trace)
        assert len(mismatches) == 1
        assert mismatches[0].startswith("step 0")

    def test_headerless_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(ValueError):
            read_trace(path)
