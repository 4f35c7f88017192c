"""
Pytest configuration and fixtures for the planning engine tests
"""

import copy
import json
from collections import Counter
from pathlib import Path
from typing import Any, Dict

import pytest

from config import Settings
from explicit import canonical_state, enumerate_step
from sampler import RandomStream, State, step
from spec_model import ProjectModel, link_project, load_am, load_environment, load_gsdl, load_project

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
TOY_NAV = SCENARIOS / "toy_nav" / "manifest.json"
TURTLEBOT9 = SCENARIOS / "turtlebot9" / "manifest.json"
TICTACTOE = SCENARIOS / "tictactoe" / "manifest.json"
TICTACTOE_NOISY = SCENARIOS / "tictactoe" / "manifest_noisy.json"
PICK_FINER = SCENARIOS / "pick_serve" / "manifest_finer.json"
PICK_ROUGH = SCENARIOS / "pick_serve" / "manifest_rough.json"
PICK_FOLDED = SCENARIOS / "pick_serve" / "manifest_folded.json"

ALL_MANIFESTS = [TOY_NAV, TURTLEBOT9, TICTACTOE, TICTACTOE_NOISY, PICK_FINER, PICK_ROUGH, PICK_FOLDED]


def read_json(path: Path) -> Dict[str, Any]:
    return json.loads(path.read_text(encoding="utf-8"))


def make_state(project: ProjectModel, collected: int = 0, paths: Dict[str, Any] = None, **values) -> State:
    """State from defaults with slot overrides; keyword names use __ for dots"""
    slots = list(project.state.defaults())
    overrides = dict(paths or {})
    overrides.update({key.replace("__", "."): value for key, value in values.items()})
    for path, value in overrides.items():
        slots[project.state.slot_of[path]] = value
    return State(tuple(slots), collected)


def toy_nav_state(project: ProjectModel, loc: int, v1=False, v2=False, v3=False, collected: int = 0) -> State:
    coords = {-1: (0.0, 0.0), 1: (0.0, 0.0), 2: (10.0, 0.0), 3: (5.0, 8.660254037844386)}[loc]
    return make_state(project, collected=collected, robotLocation__discrete=loc, robotLocation__x=coords[0],
                      robotLocation__y=coords[1], v1__visited=v1, v2__visited=v2, v3__visited=v3)


@pytest.fixture
def mock_settings():
    """Settings with defaults only, no environment file"""
    return Settings(_env_file=None)


@pytest.fixture
def rng():
    return RandomStream(12345)


@pytest.fixture(scope="session")
def toy_nav() -> ProjectModel:
    return load_project(TOY_NAV)


@pytest.fixture(scope="session")
def turtlebot9() -> ProjectModel:
    return load_project(TURTLEBOT9)


@pytest.fixture(scope="session")
def tictactoe() -> ProjectModel:
    return load_project(TICTACTOE)


@pytest.fixture(scope="session")
def tictactoe_noisy() -> ProjectModel:
    return load_project(TICTACTOE_NOISY)


@pytest.fixture(scope="session")
def pick_finer() -> ProjectModel:
    return load_project(PICK_FINER)


@pytest.fixture(scope="session")
def pick_rough() -> ProjectModel:
    return load_project(PICK_ROUGH)


@pytest.fixture(scope="session")
def pick_folded() -> ProjectModel:
    return load_project(PICK_FOLDED)


@pytest.fixture
def toy_nav_docs():
    """Fresh, mutable copies of the toy-nav documents"""
    base = SCENARIOS / "toy_nav"
    return {
        "env": read_json(base / "environment.json"),
        "gsdl": read_json(base / "navigate.gsdl.json"),
        "am": read_json(base / "navigate.am.json"),
    }


def link_docs(docs: Dict[str, Dict[str, Any]]) -> ProjectModel:
    docs = copy.deepcopy(docs)
    return link_project(load_environment(docs["env"]), [load_gsdl(docs["gsdl"])], [load_am(docs["am"])])


def l1_distance(empirical: Counter, exact: Dict[Any, float]) -> float:
    n = sum(empirical.values())
    keys = set(empirical) | set(exact)
    return sum(abs(empirical.get(k, 0) / n - exact.get(k, 0.0)) for k in keys)


def exact_outcomes(project: ProjectModel, state: State, action) -> Dict[Any, float]:
    """(next state, observation) -> probability, by enumeration"""
    outcomes, residual = enumerate_step(project, state, action)
    assert residual < 1e-6
    table: Counter = Counter()
    for o in outcomes:
        table[(canonical_state(o.next_state), o.observation)] += o.probability
    return dict(table)


def sampled_outcomes(project: ProjectModel, state: State, action, n: int, seed: int) -> Counter:
    rng = RandomStream(seed)
    counts: Counter = Counter()
    for _ in range(n):
        result = step(project, state, action, rng)
        counts[(canonical_state(result.next_state), result.observation)] += 1
    return counts
