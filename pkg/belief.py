"""
Particle belief tracking for the online loop
"""

from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import structlog

from config import get_settings
from errors import BeliefCollapse
from sampler import RandomStream, State, get_simulator
from spec_model import GroundedAction, ProjectModel

logger = structlog.get_logger(__name__)


@dataclass
class UpdateStats:
    attempts: int = 0
    accepted: int = 0
    rejected: int = 0
    reinvigorated: int = 0
    # reinvigorated slots filled from the search tree instead of the initial belief
    from_pool: int = 0
    resampled: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.attempts if self.attempts else 0.0


@dataclass
class ParticleBelief:
    """Unweighted multiset of states with the provenance of its last update"""
    particles: List[State]
    stats: UpdateStats = field(default_factory=UpdateStats)

    @property
    def size(self) -> int:
        return len(self.particles)

    def __len__(self) -> int:
        return len(self.particles)

    def sample(self, rng: RandomStream) -> State:
        return self.particles[rng.index(len(self.particles))]

    def histogram(self) -> Counter:
        return Counter(self.particles)

    def marginals(self, project: ProjectModel) -> Dict[str, Dict[Any, float]]:
        """Per-slot value frequencies, e.g. {"robotLocation.discrete": {1: 0.5, ...}}"""
        layout = project.state
        counts: List[Counter] = [Counter() for _ in layout.paths]
        for particle in self.particles:
            for i, value in enumerate(particle.values):
                counts[i][value] += 1
        n = len(self.particles)
        return {
            path: {value: c / n for value, c in sorted(counter.items(), key=lambda kv: str(kv[0]))}
            for path, counter in zip(layout.paths, counts)
        }


def init_belief(project: ProjectModel, k: int, rng: RandomStream) -> ParticleBelief:
    """K independent draws from the initial-belief programs"""
    if k < 1:
        raise ValueError("particle count must be >= 1")
    simulator = get_simulator(project)
    return ParticleBelief([simulator.sample_initial_state(rng) for _ in range(k)])


def update(belief: ParticleBelief, action: GroundedAction, observation: str, project: ProjectModel,
           rng: RandomStream, retry_factor: Optional[int] = None, floor: Optional[float] = None,
           reinvigorate: Optional[bool] = None, pool: Optional[Sequence[State]] = None) -> ParticleBelief:
    """Rejection filter on (action, observation) with reinvigoration on starvation

    pool holds states the planner reached under the same (action, observation);
    reinvigoration draws from it when non-empty, otherwise from the initial belief.
    """
    defaults = get_settings().get_belief_config()
    retry_factor = retry_factor or defaults["retry_factor"]
    floor = defaults["floor"] if floor is None else floor
    reinvigorate = defaults["reinvigorate"] if reinvigorate is None else reinvigorate
    if observation not in project.skills[action.skill].responses:
        raise ValueError(f"'{observation}' is not a response of {action.skill}")

    simulator = get_simulator(project)
    k = belief.size
    budget = retry_factor * k
    stats = UpdateStats()
    accepted: List[State] = []
    while len(accepted) < k and stats.attempts < budget:
        stats.attempts += 1
        result = simulator.step(belief.sample(rng), action, rng)
        if result.observation == observation:
            accepted.append(result.next_state)
        else:
            stats.rejected += 1
    stats.accepted = len(accepted)

    if not accepted and not reinvigorate:
        raise BeliefCollapse(
            f"no particle reproduced {observation} after {action.label} in {stats.attempts} attempts")

    particles = list(accepted)
    if len(particles) < k:
        if not accepted or stats.acceptance_rate < floor:
            while len(particles) < k:
                if pool:
                    particles.append(pool[rng.index(len(pool))])
                    stats.from_pool += 1
                else:
                    particles.append(simulator.sample_initial_state(rng))
                stats.reinvigorated += 1
            logger.warning("Belief reinvigorated", action=action.label, observation=observation,
                           accepted=stats.accepted, attempts=stats.attempts, fresh=stats.reinvigorated,
                           from_pool=stats.from_pool)
        else:
            while len(particles) < k:
                particles.append(accepted[rng.index(len(accepted))])
                stats.resampled += 1
    return ParticleBelief(particles, stats)
