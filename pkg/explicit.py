"""
Exact enumeration semantics
Programs are interpreted as transformers of discrete distributions over
immutable environments: every stochastic builtin splits execution into
weighted branches, equal environments merge, and mass below eps is moved to
a residual. On top of this the module builds the explicit POMDP of a
project by reachability closure, performs exact Bayes updates and runs a
finite-horizon belief-tree oracle.
"""

import json
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, IO, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union
from weakref import WeakKeyDictionary

import numpy as np
import structlog

from config import get_settings
from dsl import Binding, TAssign, TBinary, TCall, TCond, TConst, TIf, TRef, TUnary, TWhile, TypedProgram
from errors import (
    EvalFault,
    LoopCap,
    ObservationUnset,
    StateCapExceeded,
    TreeCapExceeded,
    UnsupportedBuiltin,
    ZeroProbabilityObservation,
)
from sampler import COMPARE_OPS, PURE_BUILTINS, Frame, State, arith_op, compile_expr, compile_program, get_simulator
from spec_model import GroundedAction, ProjectModel

logger = structlog.get_logger(__name__)


class EnumEnv(NamedTuple):
    """Immutable program environment: the three state copies plus specials"""
    s0: Tuple[Any, ...]
    s1: Tuple[Any, ...] = ()
    s2: Tuple[Any, ...] = ()
    temps: Tuple[Any, ...] = ()
    meet: bool = True
    reward: float = 0.0
    response: Optional[str] = None


@dataclass(frozen=True)
class Distribution:
    """Finite outcome distribution; residual is the truncated mass"""
    outcomes: Tuple[Tuple[Any, float], ...]
    residual: float = 0.0

    @property
    def total(self) -> float:
        return sum(p for _, p in self.outcomes)

    def as_dict(self) -> Dict[Any, float]:
        return dict(self.outcomes)

    def normalized(self) -> "Distribution":
        total = self.total
        return Distribution(tuple((v, p / total) for v, p in self.outcomes), 0.0)

    def map(self, fn) -> "Distribution":
        merged: Dict[Any, float] = {}
        for value, p in self.outcomes:
            key = fn(value)
            merged[key] = merged.get(key, 0.0) + p
        return Distribution(tuple(merged.items()), self.residual)


def canonical_state(state: State) -> State:
    """State with reals rounded to 12 decimals, used as a dedup key"""
    if any(isinstance(v, float) for v in state.values):
        return State(tuple(round(v, 12) if isinstance(v, float) else v for v in state.values), state.collected)
    return state


# ================================
# PROGRAM ENUMERATION
# ================================

_RANDOM = {"AOS.Bernoulli", "AOS.UniformInt", "AOS.UniformReal"}
_random_cache: "WeakKeyDictionary[Any, bool]" = WeakKeyDictionary()


def _is_random(node) -> bool:
    cached = _random_cache.get(node)
    if cached is not None:
        return cached
    if isinstance(node, TCall):
        result = node.name in _RANDOM or any(_is_random(a) for a in node.args)
    elif isinstance(node, TRef):
        result = any(_is_random(idx) for idx, _, _ in node.dynamic)
    elif isinstance(node, TUnary):
        result = _is_random(node.operand)
    elif isinstance(node, TBinary):
        result = _is_random(node.left) or _is_random(node.right)
    elif isinstance(node, TCond):
        result = _is_random(node.cond) or _is_random(node.then) or _is_random(node.otherwise)
    else:
        result = False
    _random_cache[node] = result
    return result


_pure_cache: "WeakKeyDictionary[Any, Callable[[Frame], Any]]" = WeakKeyDictionary()


def _pure_fn(node):
    fn = _pure_cache.get(node)
    if fn is None:
        fn = _pure_cache[node] = compile_expr(node)
    return fn


def _merge(into: Dict[Any, float], key: Any, p: float):
    into[key] = into.get(key, 0.0) + p


class Enumerator:
    """Distribution-transformer interpreter for one program run"""

    def __init__(self, params: Sequence[Any] = (), eps: Optional[float] = None, loop_cap: Optional[int] = None):
        settings = get_settings()
        self.params = params
        self.eps = settings.eps if eps is None else eps
        self.loop_cap = loop_cap or settings.loop_cap
        self.residual = 0.0

    # expressions

    def _frame(self, env: EnumEnv) -> Frame:
        fr = Frame(None, self.loop_cap)
        fr.s0, fr.s1, fr.s2 = env.s0, env.s1, env.s2
        fr.params = self.params
        fr.temps = env.temps
        fr.meet, fr.reward, fr.response = env.meet, env.reward, env.response
        return fr

    def values(self, node, env: EnumEnv) -> List[Tuple[Any, float]]:
        """Distribution of an expression's value in env"""
        if not _is_random(node):
            return [(_pure_fn(node)(self._frame(env)), 1.0)]
        if isinstance(node, TCall):
            return self._call_values(node, env)
        if isinstance(node, TUnary):
            if node.op == "!":
                return [(not v, p) for v, p in self.values(node.operand, env)]
            return [(-v, p) for v, p in self.values(node.operand, env)]
        if isinstance(node, TBinary):
            return self._binary_values(node, env)
        if isinstance(node, TCond):
            out: Dict[Any, float] = {}
            for cond, p in self.values(node.cond, env):
                for v, q in self.values(node.then if cond else node.otherwise, env):
                    _merge(out, v, p * q)
            return list(out.items())
        if isinstance(node, TRef):
            out = {}
            for slot, p in self._slots(node, env):
                _merge(out, self._read_slot(node, env, slot), p)
            return list(out.items())
        raise TypeError(f"not an expression node: {node!r}")

    def _call_values(self, node: TCall, env: EnumEnv) -> List[Tuple[Any, float]]:
        if node.name == "AOS.UniformReal":
            raise UnsupportedBuiltin("AOS.UniformReal has continuous support", node.where)
        arg_dists = [self.values(a, env) for a in node.args]
        out: Dict[Any, float] = {}
        for combo, p in _product(arg_dists):
            if node.name == "AOS.Bernoulli":
                prob = min(1.0, max(0.0, combo[0]))
                if prob > 0.0:
                    _merge(out, True, p * prob)
                if prob < 1.0:
                    _merge(out, False, p * (1.0 - prob))
            elif node.name == "AOS.UniformInt":
                lo, hi = combo
                if lo > hi:
                    raise EvalFault(f"UniformInt bounds {lo} > {hi}", node.where)
                share = p / (hi - lo + 1)
                for v in range(lo, hi + 1):
                    _merge(out, v, share)
            elif node.name == "contains":
                hay, needle = combo
                if not isinstance(hay, str) or not isinstance(needle, str):
                    raise EvalFault("contains expects strings", node.where)
                _merge(out, needle in hay, p)
            else:
                try:
                    _merge(out, PURE_BUILTINS[node.name](*combo), p)
                except (ValueError, OverflowError, TypeError) as e:
                    raise EvalFault(f"{node.name}: {e}", node.where) from None
        return list(out.items())

    def _binary_values(self, node: TBinary, env: EnumEnv) -> List[Tuple[Any, float]]:
        out: Dict[Any, float] = {}
        if node.op in ("&&", "||"):
            short = node.op == "||"
            for left, p in self.values(node.left, env):
                if left == short:
                    _merge(out, short, p)
                else:
                    for right, q in self.values(node.right, env):
                        _merge(out, right, p * q)
            return list(out.items())
        if node.op in COMPARE_OPS:
            fn = COMPARE_OPS[node.op]
        else:
            fn = arith_op(node.op, node.where, node.type.kind == "int")
        for left, p in self.values(node.left, env):
            for right, q in self.values(node.right, env):
                _merge(out, fn(left, right), p * q)
        return list(out.items())

    def _slots(self, ref: TRef, env: EnumEnv) -> List[Tuple[int, float]]:
        results = [(ref.base, 1.0)]
        for idx, stride, length in ref.dynamic:
            nxt = []
            for base, p in results:
                for i, q in self.values(idx, env):
                    if not 0 <= i < length:
                        raise EvalFault(f"index {i} out of range [0, {length})", ref.where)
                    nxt.append((base + i * stride, p * q))
            results = nxt
        return results

    def _read_slot(self, ref: TRef, env: EnumEnv, slot: int) -> Any:
        if ref.binding == Binding.PARAMETER:
            return self.params[slot]
        if ref.binding == Binding.LOCAL:
            return env.temps[slot]
        return (env.s0, env.s1, env.s2)[ref.copy][slot]

    # statements

    def _write(self, env: EnumEnv, ref: TRef, slot: int, value: Any, widen: bool) -> EnumEnv:
        if widen:
            value = float(value)
        binding = ref.binding
        if binding == Binding.MEET:
            if not isinstance(value, bool):
                raise EvalFault(f"expected bool, got {value!r}", ref.where)
            return env._replace(meet=value)
        if binding == Binding.REWARD:
            return env._replace(reward=float(value))
        if binding == Binding.RESPONSE:
            return env._replace(response=value)
        if binding == Binding.LOCAL:
            t = env.temps
            return env._replace(temps=t[:slot] + (value,) + t[slot + 1:])
        name = ("s0", "s1", "s2")[ref.copy]
        s = getattr(env, name)
        return env._replace(**{name: s[:slot] + (value,) + s[slot + 1:]})

    def _prune(self, dist: Dict[EnumEnv, float]) -> Dict[EnumEnv, float]:
        if self.eps <= 0.0:
            return dist
        kept = {}
        for env, p in dist.items():
            if p < self.eps:
                self.residual += p
            else:
                kept[env] = p
        return kept

    def run_block(self, statements: Iterable[Any], dist: Dict[EnumEnv, float]) -> Dict[EnumEnv, float]:
        for stmt in statements:
            dist = self._prune(self.run_statement(stmt, dist))
        return dist

    def run_statement(self, stmt, dist: Dict[EnumEnv, float]) -> Dict[EnumEnv, float]:
        out: Dict[EnumEnv, float] = {}
        if isinstance(stmt, TAssign):
            for env, p in dist.items():
                values = self.values(stmt.value, env)
                slots = self._slots(stmt.target, env) if stmt.target.dynamic else [(stmt.target.base, 1.0)]
                for value, q in values:
                    for slot, r in slots:
                        _merge(out, self._write(env, stmt.target, slot, value, stmt.widen), p * q * r)
            return out
        if isinstance(stmt, TIf):
            then_in: Dict[EnumEnv, float] = {}
            else_in: Dict[EnumEnv, float] = {}
            for env, p in dist.items():
                for cond, q in self.values(stmt.cond, env):
                    _merge(then_in if cond else else_in, env, p * q)
            for part in (self.run_block(stmt.then, then_in), self.run_block(stmt.otherwise, else_in)):
                for env, p in part.items():
                    _merge(out, env, p)
            return out
        if isinstance(stmt, TWhile):
            pending = dist
            iterations = 0
            while pending:
                body_in: Dict[EnumEnv, float] = {}
                for env, p in pending.items():
                    for cond, q in self.values(stmt.cond, env):
                        _merge(body_in if cond else out, env, p * q)
                body_in = self._prune(body_in)
                if not body_in:
                    break
                iterations += 1
                if iterations > self.loop_cap:
                    mass = sum(body_in.values())
                    raise LoopCap(f"loop still holds mass {mass:.3g} after {self.loop_cap} iterations", stmt.where)
                pending = self.run_block(stmt.body, body_in)
            return out
        raise TypeError(f"not a statement node: {stmt!r}")


def _product(dists: List[List[Tuple[Any, float]]]) -> Iterable[Tuple[Tuple[Any, ...], float]]:
    results: List[Tuple[Tuple[Any, ...], float]] = [((), 1.0)]
    for dist in dists:
        results = [(combo + (v,), p * q) for combo, p in results for v, q in dist]
    return results


def enumerate_program(program: TypedProgram, env: EnumEnv, eps: Optional[float] = None,
                      params: Sequence[Any] = ()) -> Distribution:
    """Exact outcome distribution of one program run starting from env"""
    enumerator = Enumerator(params, eps)
    if program.expression is not None:
        return Distribution(tuple(enumerator.values(program.expression, env)), 0.0)
    out = _run_programs(enumerator, [program], {env: 1.0})
    return Distribution(tuple(out.items()), enumerator.residual)


def _run_programs(enumerator: Enumerator, programs: Sequence[TypedProgram],
                  dist: Dict[EnumEnv, float]) -> Dict[EnumEnv, float]:
    for program in programs:
        if program.is_empty:
            continue
        start = (None,) * program.temp_count
        dist = {env._replace(temps=start): p for env, p in dist.items()}
        dist = enumerator.run_block(program.statements, dist)
        merged: Dict[EnumEnv, float] = {}
        for env, p in dist.items():
            _merge(merged, env._replace(temps=()), p)
        dist = merged
    return dist


# ================================
# STEP ENUMERATION
# ================================

@dataclass(frozen=True)
class StepOutcome:
    next_state: State
    observation: str
    probability: float
    reward: float
    terminal: bool


def enumerate_initial(project: ProjectModel, eps: Optional[float] = None) -> Distribution:
    """Initial-belief distribution over canonical states"""
    enumerator = Enumerator((), eps)
    dist = _run_programs(enumerator, project.initial_belief, {EnumEnv(project.state.defaults()): 1.0})
    states: Dict[State, float] = {}
    for env, p in dist.items():
        _merge(states, canonical_state(State(env.s0)), p)
    return Distribution(tuple(states.items()), enumerator.residual)


def enumerate_step(project: ProjectModel, state: State, action: GroundedAction,
                   eps: Optional[float] = None) -> Tuple[List[StepOutcome], float]:
    """All (next state, observation) outcomes of one step with their probability and mean reward"""
    simulator = get_simulator(project)
    skill = project.skills[action.skill]
    if simulator.is_terminal(state):
        return [StepOutcome(state, skill.responses[0], 1.0, 0.0, True)], 0.0
    enumerator = Enumerator(action.param_values, eps)
    start = EnumEnv(state.values, state.values)
    dist = _run_programs(enumerator, project.extrinsic, {start: 1.0})
    dist = {env._replace(s2=env.s1): p for env, p in dist.items()}
    dist = _run_programs(enumerator, skill.preconditions, dist)
    dist = _run_programs(enumerator, skill.dynamics, dist)

    mass: Dict[Tuple[State, str], float] = {}
    reward_mass: Dict[Tuple[State, str], float] = {}
    terminal: Dict[State, bool] = {}
    for env, p in dist.items():
        if env.response is None:
            raise ObservationUnset(f"{action.skill} dynamics did not assign __moduleResponse", action.label)
        reward = env.reward + (0.0 if env.meet else skill.penalty)
        collected = state.collected
        goal = False
        fr = Frame(None)
        fr.s2 = env.s2
        for special in project.special_states:
            if compile_program(special.program)(fr):
                goal = goal or special.goal
                if special.one_time:
                    bit = 1 << special.index
                    if collected & bit:
                        continue
                    collected |= bit
                reward += special.reward
        key = (canonical_state(State(env.s2, collected)), env.response)
        _merge(mass, key, p)
        _merge(reward_mass, key, p * reward)
        terminal[key[0]] = goal
    outcomes = [
        StepOutcome(s, o, p, reward_mass[(s, o)] / p if p > 0 else 0.0, terminal[s])
        for (s, o), p in mass.items()
    ]
    return outcomes, enumerator.residual


def expected_step_reward(project: ProjectModel, state: State, action: GroundedAction,
                         eps: Optional[float] = None) -> float:
    """Model reward of one step from state, in expectation over its outcomes"""
    outcomes, _ = enumerate_step(project, state, action, eps)
    total = sum(o.probability for o in outcomes)
    return sum(o.probability * o.reward for o in outcomes) / total if total > 0 else 0.0


# ================================
# EXPLICIT POMDP
# ================================

class BeliefVector:
    """Probability vector over explicit state indices"""

    def __init__(self, probs: Union[np.ndarray, Sequence[float]]):
        self.probs = np.asarray(probs, dtype=float)

    @classmethod
    def point_mass(cls, n: int, index: int) -> "BeliefVector":
        probs = np.zeros(n)
        probs[index] = 1.0
        return cls(probs)

    @classmethod
    def from_particles(cls, pomdp: "ExplicitPOMDP", particles: Iterable[State]) -> "BeliefVector":
        """Histogram of particles over the explicit state index; unknown states are ignored"""
        counts = np.zeros(len(pomdp.states))
        for particle in particles:
            index = pomdp.index.get(canonical_state(particle))
            if index is not None:
                counts[index] += 1
        return cls(counts / counts.sum()) if counts.sum() > 0 else cls(counts)

    def normalized(self) -> "BeliefVector":
        return BeliefVector(self.probs / self.probs.sum())

    def support(self) -> Dict[int, float]:
        return {int(i): float(self.probs[i]) for i in np.flatnonzero(self.probs)}

    def l1(self, other: "BeliefVector") -> float:
        return float(np.abs(self.probs - other.probs).sum())

    def __len__(self) -> int:
        return len(self.probs)


@dataclass
class ExplicitPOMDP:
    """Enumerated S, A, T, O, R, b0 tables of a project

    joint[s][a] lists (s', o, p) with p = P(s', o | s, a); T and O are
    derived views of it.
    """
    states: List[State]
    actions: Tuple[GroundedAction, ...]
    observations: Tuple[str, ...]
    joint: List[List[List[Tuple[int, int, float]]]]
    R: np.ndarray
    b0: BeliefVector
    terminal: np.ndarray
    gamma: float
    index: Dict[State, int] = field(default_factory=dict)
    _observation_tables: Dict[int, Dict[int, Dict[int, float]]] = field(default_factory=dict, repr=False)

    @property
    def n_states(self) -> int:
        return len(self.states)

    def T(self, s: int, a: int) -> Dict[int, float]:
        row: Dict[int, float] = {}
        for s2, _, p in self.joint[s][a]:
            _merge(row, s2, p)
        return row

    def O(self, s2: int, a: int) -> Dict[int, float]:
        """P(o | s', a), marginalised uniformly over source states reaching s'"""
        table = self._observation_tables.get(a)
        if table is None:
            num: Dict[int, Dict[int, float]] = {}
            for s in range(self.n_states):
                for t, o, p in self.joint[s][a]:
                    _merge(num.setdefault(t, {}), o, p)
            table = {}
            for t, row in num.items():
                den = sum(row.values())
                table[t] = {o: p / den for o, p in row.items()}
            self._observation_tables[a] = table
        return table.get(s2, {})


def build_explicit(project: ProjectModel, eps: Optional[float] = None,
                   max_states: Optional[int] = None) -> ExplicitPOMDP:
    """Enumerate the reachable state space from the initial belief under all actions"""
    settings = get_settings()
    eps = settings.eps if eps is None else eps
    max_states = max_states or settings.max_states
    simulator = get_simulator(project)
    observations = project.observations
    obs_index = {o: i for i, o in enumerate(observations)}

    initial = enumerate_initial(project, eps).normalized()
    states: List[State] = []
    index: Dict[State, int] = {}

    def intern(state: State) -> int:
        i = index.get(state)
        if i is None:
            if len(states) >= max_states:
                raise StateCapExceeded(f"more than {max_states} reachable states")
            i = index[state] = len(states)
            states.append(state)
        return i

    b0 = {intern(s): p for s, p in initial.outcomes}
    joint: List[List[List[Tuple[int, int, float]]]] = []
    rewards: List[List[float]] = []
    visited = 0
    while visited < len(states):
        s = visited
        visited += 1
        row_joint = []
        row_reward = []
        for action in project.actions:
            outcomes, _ = enumerate_step(project, states[s], action, eps)
            total = sum(o.probability for o in outcomes)
            entries = []
            expected = 0.0
            for outcome in outcomes:
                p = outcome.probability / total
                entries.append((intern(outcome.next_state), obs_index[outcome.observation], p))
                expected += p * outcome.reward
            row_joint.append(entries)
            row_reward.append(expected)
        joint.append(row_joint)
        rewards.append(row_reward)

    n = len(states)
    b0_probs = np.zeros(n)
    for i, p in b0.items():
        b0_probs[i] = p
    terminal = np.array([simulator.is_terminal(s) for s in states], dtype=bool)
    logger.info("Explicit model built", project=project.name, states=n, actions=len(project.actions),
                observations=len(observations))
    return ExplicitPOMDP(states, project.actions, observations, joint, np.array(rewards), BeliefVector(b0_probs),
                         terminal, project.gamma, index)


def _posteriors(pomdp: ExplicitPOMDP, belief: Dict[int, float], a: int) -> Dict[int, Dict[int, float]]:
    """Unnormalised next-state vectors keyed by observation"""
    out: Dict[int, Dict[int, float]] = {}
    for s, b in belief.items():
        for s2, o, p in pomdp.joint[s][a]:
            row = out.setdefault(o, {})
            row[s2] = row.get(s2, 0.0) + b * p
    return out


def exact_belief_update(pomdp: ExplicitPOMDP, belief: BeliefVector, action: Union[int, GroundedAction],
                        observation: Union[int, str]) -> BeliefVector:
    """Bayes update b'(s') ∝ Σ_s b(s) P(s', o | s, a)"""
    a = action.id if isinstance(action, GroundedAction) else action
    o = pomdp.observations.index(observation) if isinstance(observation, str) else observation
    unnormalised = _posteriors(pomdp, belief.support(), a).get(o, {})
    total = sum(unnormalised.values())
    if total <= 0.0:
        raise ZeroProbabilityObservation(
            f"observation {pomdp.observations[o]} has zero likelihood after {pomdp.actions[a].label}")
    probs = np.zeros(pomdp.n_states)
    for s2, p in unnormalised.items():
        probs[s2] = p / total
    return BeliefVector(probs)


def oracle_plan(pomdp: ExplicitPOMDP, belief: BeliefVector, horizon: int,
                tree_cap: Optional[int] = None) -> Tuple[GroundedAction, float]:
    """Exact finite-horizon expectimax over the action/observation belief tree"""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    tree_cap = tree_cap or get_settings().oracle_tree_cap
    size = (len(pomdp.actions) * len(pomdp.observations)) ** horizon
    if size > tree_cap:
        raise TreeCapExceeded(f"belief tree of {size} nodes exceeds cap {tree_cap}")
    memo: Dict[Tuple[Tuple[Tuple[int, float], ...], int], Tuple[int, float]] = {}

    def value(b: Dict[int, float], h: int) -> Tuple[int, float]:
        key = (tuple(sorted((s, round(p, 12)) for s, p in b.items())), h)
        cached = memo.get(key)
        if cached is not None:
            return cached
        best_action, best_value = 0, -np.inf
        for a in range(len(pomdp.actions)):
            q = sum(p * pomdp.R[s, a] for s, p in b.items())
            if h > 1:
                for o, row in _posteriors(pomdp, b, a).items():
                    mass = sum(row.values())
                    if mass <= 0.0:
                        continue
                    q += pomdp.gamma * mass * value({s: p / mass for s, p in row.items()}, h - 1)[1]
            if q > best_value + 1e-9 * max(1.0, abs(best_value)):
                best_action, best_value = a, q
        memo[key] = (best_action, best_value)
        return memo[key]

    a, v = value(belief.support(), horizon)
    return pomdp.actions[a], float(v)


# ================================
# EXPORT
# ================================

def export_pomdp(pomdp: ExplicitPOMDP, out: IO[str], layout=None):
    """Write the tabular text format documented in docs/export_format.md"""
    out.write("# explicit POMDP export\n")
    out.write(f"discount: {pomdp.gamma!r}\n")
    out.write("values: reward\n")
    out.write(f"states: {pomdp.n_states}\n")
    out.write(f"actions: {len(pomdp.actions)}\n")
    out.write(f"observations: {len(pomdp.observations)}\n")
    for i, state in enumerate(pomdp.states):
        body = state.as_dict(layout) if layout is not None else list(state.values)
        flag = " terminal" if pomdp.terminal[i] else ""
        out.write(f"state {i} {json.dumps(body, separators=(',', ':'))} collected={state.collected}{flag}\n")
    for action in pomdp.actions:
        out.write(f"action {action.id} {action.label}\n")
    for i, symbol in enumerate(pomdp.observations):
        out.write(f"observation {i} {symbol}\n")
    out.write("start: " + " ".join(repr(float(p)) for p in pomdp.b0.probs) + "\n")
    for s in range(pomdp.n_states):
        for a in range(len(pomdp.actions)):
            for s2, p in sorted(pomdp.T(s, a).items()):
                out.write(f"T: {a} {s} {s2} {p!r}\n")
    for a in range(len(pomdp.actions)):
        reached = sorted({s2 for s in range(pomdp.n_states) for s2, _, _ in pomdp.joint[s][a]})
        for s2 in reached:
            for o, p in sorted(pomdp.O(s2, a).items()):
                out.write(f"O: {a} {s2} {o} {p!r}\n")
    for s in range(pomdp.n_states):
        for a in range(len(pomdp.actions)):
            out.write(f"R: {a} {s} {float(pomdp.R[s, a])!r}\n")
