"""
Episode executor
Closed loop of plan, activate, observe and update against a skill channel,
plus batch statistics and JSON-lines trace files.
"""

import json
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import structlog

from am_runtime import FeedLog, SkillResponse, build_activation, observe
from belief import init_belief, update
from config import get_settings
from errors import AOSError
from explicit import BeliefVector, ExplicitPOMDP, build_explicit, exact_belief_update, expected_step_reward
from harness import InProcessChannel, RemoteSkillChannel, SkillChannel, WorldSimulator
from planner import PlannerConfig, plan, plan_offline
from sampler import RandomStream, get_simulator
from spec_model import ProjectModel

logger = structlog.get_logger(__name__)


class Outcome(Enum):
    """How an episode ended"""
    GOAL = "goal"
    STEP_CAP = "step_cap"
    FAULT = "fault"


class PlannerKind(Enum):
    POMCP = "pomcp"
    OFFLINE = "offline"


@dataclass
class TraceStep:
    """One executed action"""
    index: int
    action: str
    action_id: int
    request: Dict[str, Any]
    response: Dict[str, Any]
    feeds: Dict[str, List[Any]]
    observation: str
    reward: float
    flagged: bool
    terminal: bool
    belief: Dict[str, Dict[str, float]]
    # realized by the world; differs from reward only on flagged steps
    world_reward: Optional[float] = None
    wall_ms: float = 0.0

    def comparable(self) -> Dict[str, Any]:
        """Everything except timing"""
        data = asdict(self)
        data.pop("wall_ms")
        return data


@dataclass
class EpisodeTrace:
    project: str
    seed: int
    planner: str
    world: str
    gamma: float
    steps: List[TraceStep] = field(default_factory=list)
    outcome: Outcome = Outcome.STEP_CAP
    fault: Optional[str] = None
    fault_message: Optional[str] = None
    discounted_return: float = 0.0

    @property
    def length(self) -> int:
        return len(self.steps)

    @property
    def success(self) -> bool:
        return self.outcome == Outcome.GOAL

    def recompute_return(self) -> float:
        total = 0.0
        discount = 1.0
        for step in self.steps:
            total += discount * step.reward
            discount *= self.gamma
        return total

    def actions(self) -> List[str]:
        return [s.action for s in self.steps]

    def observations(self) -> List[str]:
        return [s.observation for s in self.steps]

    def comparable(self) -> Dict[str, Any]:
        return {
            "outcome": self.outcome.value,
            "fault": self.fault,
            "discounted_return": self.discounted_return,
            "steps": [s.comparable() for s in self.steps],
        }


@dataclass
class BatchSummary:
    episodes: int
    successes: int
    mean_return: float
    mean_steps: float
    faults: Dict[str, int] = field(default_factory=dict)
    traces: List[EpisodeTrace] = field(default_factory=list)

    @property
    def success_rate(self) -> float:
        return self.successes / self.episodes if self.episodes else 0.0

    def rows(self) -> List[Tuple[str, Any]]:
        rows = [
            ("episodes", self.episodes),
            ("success rate", round(self.success_rate, 4)),
            ("mean discounted return", round(self.mean_return, 4)),
            ("mean steps", round(self.mean_steps, 2)),
        ]
        rows.extend((f"fault: {name}", count) for name, count in sorted(self.faults.items()))
        return rows


def derive_seeds(base_seed: int, n: int) -> List[int]:
    """Independent 32-bit seeds for n episodes"""
    children = np.random.SeedSequence(base_seed).spawn(n)
    return [int(child.generate_state(1)[0]) for child in children]


def world_seed(seed: int) -> int:
    """Ground-truth seed for an episode, independent of the planning streams"""
    return int(np.random.SeedSequence([seed, 1]).generate_state(1)[0])


def _key(value: Any) -> str:
    return json.dumps(value) if not isinstance(value, str) else value


def _particle_marginals(project: ProjectModel, belief) -> Dict[str, Dict[str, float]]:
    return {path: {_key(v): p for v, p in dist.items()} for path, dist in belief.marginals(project).items()}


def _particle_expected_reward(project: ProjectModel, belief, action, cache: Dict) -> float:
    total = 0.0
    for state, count in belief.histogram().items():
        key = (state, action.id)
        if key not in cache:
            cache[key] = expected_step_reward(project, state, action)
        total += count * cache[key]
    return total / belief.size


def _vector_marginals(project: ProjectModel, pomdp: ExplicitPOMDP, belief: BeliefVector) -> Dict[str, Dict[str, float]]:
    out: Dict[str, Dict[str, float]] = {path: {} for path in project.state.paths}
    for s, p in belief.support().items():
        for path, value in zip(project.state.paths, pomdp.states[s].values):
            key = _key(value)
            out[path][key] = out[path].get(key, 0.0) + p
    return {path: dict(sorted(dist.items())) for path, dist in out.items()}


# ================================
# EPISODES
# ================================

async def run_episode(project: ProjectModel, config: PlannerConfig, channel: SkillChannel,
                      particles: Optional[int] = None, step_cap: Optional[int] = None, seed: int = 0,
                      planner: Union[str, PlannerKind] = PlannerKind.POMCP, horizon: int = 4,
                      pomdp: Optional[ExplicitPOMDP] = None, world_name: str = "faithful") -> EpisodeTrace:
    """Run one closed-loop episode; runtime faults end it with the fault outcome"""
    settings = get_settings()
    planner = PlannerKind(planner)
    particles = particles or settings.particles
    step_cap = settings.step_cap if step_cap is None else step_cap
    plan_rng, belief_rng = RandomStream(seed).split(2)
    trace = EpisodeTrace(project.name, seed, planner.value, world_name, project.gamma)
    reward_cache: Dict = {}
    simulator = get_simulator(project)
    subtree = None
    log = logger.bind(project=project.name, seed=seed, planner=planner.value)

    discount = 1.0
    try:
        await channel.reset(world_seed(seed))
        if planner == PlannerKind.OFFLINE:
            pomdp = pomdp or build_explicit(project)
            exact = pomdp.b0
            particle_belief = None
        else:
            particle_belief = init_belief(project, particles, belief_rng)
            exact = None

        for index in range(step_cap):
            started = time.perf_counter()
            if planner == PlannerKind.OFFLINE:
                action = plan_offline(pomdp, exact, horizon)
            else:
                action, diagnostics = plan(project, particle_belief, config, rng=plan_rng, simulator=simulator,
                                           root=subtree)
            am = project.skills[action.skill].map
            request = build_activation(am, action)
            response, feeds = await channel.activate(request)
            observation, _ = observe(am, action, response, feeds)

            report = response.world
            if report is not None and not report.flagged:
                reward = report.reward
            elif planner == PlannerKind.OFFLINE:
                reward = float(exact.probs @ pomdp.R[:, action.id])
            else:
                reward = _particle_expected_reward(project, particle_belief, action, reward_cache)

            if planner == PlannerKind.OFFLINE:
                exact = exact_belief_update(pomdp, exact, action, observation)
                belief_summary = _vector_marginals(project, pomdp, exact)
            else:
                if config.tree_reuse:
                    subtree = diagnostics.root.child(action, observation)
                pool = subtree.pool if subtree is not None else None
                particle_belief = update(particle_belief, action, observation, project, belief_rng, pool=pool)
                belief_summary = _particle_marginals(project, particle_belief)

            terminal = report.terminal if report is not None else False
            trace.steps.append(TraceStep(
                index=index,
                action=action.label,
                action_id=action.id,
                request=request.as_dict(),
                response=dict(response.fields),
                feeds=feeds.as_dict(),
                observation=observation,
                reward=reward,
                flagged=report.flagged if report is not None else True,
                terminal=terminal,
                belief=belief_summary,
                world_reward=report.reward if report is not None else None,
                wall_ms=(time.perf_counter() - started) * 1000.0,
            ))
            trace.discounted_return += discount * reward
            discount *= project.gamma
            log.debug("Step executed", step=index, action=action.label, observation=observation, reward=reward)
            if terminal:
                trace.outcome = Outcome.GOAL
                break
    except AOSError as e:
        trace.outcome = Outcome.FAULT
        trace.fault = type(e).__name__
        trace.fault_message = str(e)
        log.warning("Episode ended by fault", fault=trace.fault, error=str(e), steps=trace.length)

    log.info("Episode finished", outcome=trace.outcome.value, steps=trace.length,
             discounted_return=round(trace.discounted_return, 4))
    return trace


async def run_batch(project: ProjectModel, config: PlannerConfig, world: str = "faithful", episodes: int = 1,
                    base_seed: int = 0, particles: Optional[int] = None, step_cap: Optional[int] = None,
                    planner: Union[str, PlannerKind] = PlannerKind.POMCP, horizon: int = 4) -> BatchSummary:
    """Independent in-process episodes with derived seeds"""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    planner = PlannerKind(planner)
    pomdp = build_explicit(project) if planner == PlannerKind.OFFLINE else None
    traces = []
    for seed in derive_seeds(base_seed, episodes):
        channel = InProcessChannel(WorldSimulator(project, world, seed=world_seed(seed)))
        traces.append(await run_episode(project, config, channel, particles, step_cap, seed,
                                        planner, horizon, pomdp, world))
    return summarize(traces)


async def run_remote_batch(project: ProjectModel, config: PlannerConfig, host: str, port: int, episodes: int = 1,
                           base_seed: int = 0, particles: Optional[int] = None, step_cap: Optional[int] = None,
                           planner: Union[str, PlannerKind] = PlannerKind.POMCP, horizon: int = 4,
                           timeout: Optional[float] = None) -> BatchSummary:
    """Episodes against a skill server, one connection each; seeds match run_batch"""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    planner = PlannerKind(planner)
    pomdp = build_explicit(project) if planner == PlannerKind.OFFLINE else None
    traces = []
    for seed in derive_seeds(base_seed, episodes):
        channel = await RemoteSkillChannel.connect(host, port, timeout)
        try:
            traces.append(await run_episode(project, config, channel, particles, step_cap, seed,
                                            planner, horizon, pomdp, f"remote:{host}:{port}"))
        finally:
            await channel.close()
    return summarize(traces)


def summarize(traces: List[EpisodeTrace]) -> BatchSummary:
    n = len(traces)
    faults = Counter(t.fault for t in traces if t.outcome == Outcome.FAULT)
    return BatchSummary(
        episodes=n,
        successes=sum(1 for t in traces if t.success),
        mean_return=sum(t.discounted_return for t in traces) / n if n else 0.0,
        mean_steps=sum(t.length for t in traces) / n if n else 0.0,
        faults=dict(faults),
        traces=traces,
    )


# ================================
# TRACE FILES
# ================================

def write_trace(trace: EpisodeTrace, path: Union[str, Path]) -> Path:
    """One JSON object per line: header, steps, summary"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        header = {"kind": "episode", "project": trace.project, "seed": trace.seed, "planner": trace.planner,
                  "world": trace.world, "gamma": trace.gamma}
        f.write(json.dumps(header) + "\n")
        for step in trace.steps:
            f.write(json.dumps({"kind": "step", **asdict(step)}) + "\n")
        summary = {"kind": "summary", "outcome": trace.outcome.value, "fault": trace.fault,
                   "fault_message": trace.fault_message, "steps": trace.length,
                   "discounted_return": trace.discounted_return}
        f.write(json.dumps(summary) + "\n")
    logger.debug("Trace written", path=str(path), steps=trace.length)
    return path


def read_trace(path: Union[str, Path]) -> EpisodeTrace:
    trace = None
    with Path(path).open(encoding="utf-8") as f:
        for line in f:
            record = json.loads(line)
            kind = record.pop("kind")
            if kind == "episode":
                trace = EpisodeTrace(**record)
            elif kind == "step":
                trace.steps.append(TraceStep(**record))
            elif kind == "summary":
                trace.outcome = Outcome(record["outcome"])
                trace.fault = record["fault"]
                trace.fault_message = record["fault_message"]
                trace.discounted_return = record["discounted_return"]
    if trace is None:
        raise ValueError(f"{path} holds no episode header")
    return trace


def replay_check(project: ProjectModel, trace: EpisodeTrace) -> List[str]:
    """Re-derive every recorded observation from its recorded response and feeds"""
    mismatches = []
    for step in trace.steps:
        action = project.actions[step.action_id]
        if action.label != step.action:
            mismatches.append(f"step {step.index}: action id {step.action_id} is {action.label}, not {step.action}")
            continue
        feeds = FeedLog()
        seq = 0
        for feed_path, payloads in step.feeds.items():
            for payload in payloads:
                seq += 1
                feeds.append(feed_path, seq, payload)
        observation, _ = observe(project.skills[action.skill].map, action, SkillResponse(dict(step.response)), feeds)
        if observation != step.observation:
            mismatches.append(f"step {step.index}: recorded {step.observation}, derived {observation}")
    return mismatches
