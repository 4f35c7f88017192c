"""
POMCP online planner
UCT search over action/observation histories with unweighted particle pools,
using the project's simulator as a generative black box.
"""

import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import structlog

from belief import ParticleBelief
from config import get_settings
from explicit import BeliefVector, ExplicitPOMDP, oracle_plan
from sampler import RandomStream, Simulator, State, get_simulator
from spec_model import GroundedAction, ProjectModel

logger = structlog.get_logger(__name__)


@dataclass
class PlannerConfig:
    simulations: int = 5_000
    max_depth: int = 20
    gamma: float = 0.95
    uct_c: Optional[float] = None
    seed: int = 0
    node_pool_cap: int = 1_000
    # carry the subtree of the executed (action, observation) into the next search
    tree_reuse: bool = False

    def __post_init__(self):
        if self.simulations < 1:
            raise ValueError("simulations must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.uct_c is not None and self.uct_c < 0:
            raise ValueError("uct_c must be >= 0")
        if self.node_pool_cap < 1:
            raise ValueError("node_pool_cap must be >= 1")

    @classmethod
    def from_settings(cls, project: Optional[ProjectModel] = None, **overrides) -> "PlannerConfig":
        settings = get_settings()
        values = settings.get_planner_config()
        values["gamma"] = project.gamma if project is not None else settings.discount
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def default_uct_c(project: ProjectModel) -> float:
    """Exploration constant scaled to the project's reward spread"""
    return max(1.0, project.reward_range() / 10.0)


class SearchNode:
    """History node: per-action statistics, children by (action, observation), particle pool"""
    __slots__ = ("visits", "counts", "values", "children", "pool", "pool_seen")

    def __init__(self, n_actions: int):
        self.visits = 0
        self.counts = [0] * n_actions
        self.values = [0.0] * n_actions
        self.children: Dict[Tuple[int, str], "SearchNode"] = {}
        self.pool: List[State] = []
        self.pool_seen = 0

    def add_particle(self, state: State, cap: int, rng: RandomStream):
        self.pool_seen += 1
        if len(self.pool) < cap:
            self.pool.append(state)
        else:
            j = rng.index(self.pool_seen)
            if j < cap:
                self.pool[j] = state

    def child(self, action: GroundedAction, observation: str) -> Optional["SearchNode"]:
        return self.children.get((action.id, observation))


@dataclass
class ActionStats:
    action: GroundedAction
    visits: int
    value: float


@dataclass
class PlanDiagnostics:
    simulations: int
    uct_c: float
    elapsed_ms: float
    root_visits: int
    tree_nodes: int
    actions: List[ActionStats] = field(default_factory=list)
    root: Optional[SearchNode] = field(default=None, repr=False)

    def rows(self) -> List[Tuple[str, int, float]]:
        return [(s.action.label, s.visits, round(s.value, 4)) for s in self.actions]


class POMCP:
    """One search from a root belief"""

    def __init__(self, simulator: Simulator, config: PlannerConfig, uct_c: float, rng: RandomStream):
        self.simulator = simulator
        self.actions = simulator.actions
        self.config = config
        self.uct_c = uct_c
        self.rng = rng
        self.nodes = 0

    def new_node(self) -> SearchNode:
        self.nodes += 1
        return SearchNode(len(self.actions))

    def select(self, node: SearchNode) -> int:
        for a, count in enumerate(node.counts):
            if count == 0:
                return a
        log_n = math.log(node.visits)
        best, best_score = 0, -math.inf
        for a, (count, value) in enumerate(zip(node.counts, node.values)):
            score = value + self.uct_c * math.sqrt(log_n / count)
            if score > best_score:
                best, best_score = a, score
        return best

    def simulate(self, state: State, node: SearchNode, depth: int) -> float:
        if depth >= self.config.max_depth:
            return 0.0
        a = self.select(node)
        result = self.simulator.step(state, self.actions[a], self.rng)
        total = result.reward
        if not result.terminal and depth + 1 < self.config.max_depth:
            key = (a, result.observation)
            child = node.children.get(key)
            if child is None:
                child = node.children[key] = self.new_node()
                future = self.simulator.rollout(result.next_state, self.config.max_depth - depth - 1,
                                                self.config.gamma, self.rng)
            else:
                future = self.simulate(result.next_state, child, depth + 1)
            if self.config.tree_reuse:
                child.add_particle(result.next_state, self.config.node_pool_cap, self.rng)
            total += self.config.gamma * future
        node.visits += 1
        node.counts[a] += 1
        node.values[a] += (total - node.values[a]) / node.counts[a]
        return total

    def search(self, belief: ParticleBelief, root: Optional[SearchNode] = None) -> SearchNode:
        if root is None:
            root = self.new_node()
        for _ in range(self.config.simulations):
            self.simulate(belief.sample(self.rng), root, 0)
        return root


def plan(project: ProjectModel, belief: ParticleBelief, config: PlannerConfig,
         rng: Optional[RandomStream] = None,
         simulator: Optional[Simulator] = None,
         root: Optional[SearchNode] = None) -> Tuple[GroundedAction, PlanDiagnostics]:
    """Run POMCP from the belief; returns the most visited root action

    root continues a subtree kept from the previous step when tree reuse is on.
    """
    if belief.size == 0:
        raise ValueError("belief is empty")
    simulator = simulator or get_simulator(project)
    rng = rng or RandomStream(config.seed)
    uct_c = config.uct_c if config.uct_c is not None else default_uct_c(project)
    start = time.perf_counter()
    search = POMCP(simulator, config, uct_c, rng)
    root = search.search(belief, root)
    best = 0
    for a, count in enumerate(root.counts):
        if count > root.counts[best]:
            best = a
    elapsed_ms = (time.perf_counter() - start) * 1000.0
    diagnostics = PlanDiagnostics(
        simulations=config.simulations,
        uct_c=uct_c,
        elapsed_ms=elapsed_ms,
        root_visits=root.visits,
        tree_nodes=search.nodes,
        actions=[ActionStats(action, root.counts[i], root.values[i]) for i, action in enumerate(simulator.actions)],
        root=root,
    )
    logger.debug("Search finished", action=simulator.actions[best].label, simulations=config.simulations,
                 nodes=search.nodes, elapsed_ms=round(elapsed_ms, 1))
    return simulator.actions[best], diagnostics


def plan_offline(pomdp: ExplicitPOMDP, belief: BeliefVector, horizon: int) -> GroundedAction:
    """Exact finite-horizon choice from an explicit model"""
    action, _ = oracle_plan(pomdp, belief, horizon)
    return action
