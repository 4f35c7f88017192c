"""
Sampling semantics
Typed programs are compiled once into Python closures and executed against a
seeded RandomStream to draw initial states and environment steps.
"""

import math
import operator
import time
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple
from weakref import WeakKeyDictionary

import numpy as np
import structlog

from config import get_settings
from dsl import (
    Binding,
    Layout,
    TAssign,
    TBinary,
    TCall,
    TCond,
    TConst,
    TIf,
    TRef,
    TUnary,
    TWhile,
    TypedProgram,
)
from errors import EvalFault, LoopCap, MissingResponseField, ObservationUnset
from spec_model import GroundedAction, ProjectModel

logger = structlog.get_logger(__name__)

_BLOCK = 4096


class RandomStream:
    """Seeded uniform source backed by numpy's PCG64

    Draws are served from a pre-generated block; identical seeds give
    identical sequences. Child streams come from SeedSequence.spawn.
    """

    def __init__(self, seed=0):
        self.seed_seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed_seq))
        self._buf: List[float] = []
        self._pos = 0
        self.draws = 0

    @property
    def seed(self):
        return self.seed_seq.entropy

    def random(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self._gen.random(_BLOCK).tolist()
            self._pos = 0
        value = self._buf[self._pos]
        self._pos += 1
        self.draws += 1
        return value

    def integers(self, low: int, high: int) -> int:
        """Uniform integer in [low, high], both ends inclusive"""
        return low + int(self.random() * (high - low + 1))

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def index(self, n: int) -> int:
        return int(self.random() * n)

    def split(self, n: int) -> List["RandomStream"]:
        return [RandomStream(child) for child in self.seed_seq.spawn(n)]


@dataclass(frozen=True)
class State:
    """Flat slot values plus the bitmask of collected one-time rewards"""
    values: Tuple[Any, ...]
    collected: int = 0

    def as_dict(self, layout: Layout) -> Dict[str, Any]:
        return dict(zip(layout.paths, self.values))

    def get(self, layout: Layout, path: str) -> Any:
        return self.values[layout.slot_of[path]]


@dataclass(frozen=True)
class StepResult:
    next_state: State
    observation: str
    reward: float
    terminal: bool
    met_precondition: bool
    action_reward: float = 0.0
    penalty: float = 0.0
    special_rewards: Tuple[Tuple[int, float], ...] = ()


class Frame:
    """Mutable evaluation context shared by compiled closures"""
    __slots__ = ("s0", "s1", "s2", "params", "temps", "locals", "input",
                 "meet", "reward", "response", "rng", "loop_cap")

    def __init__(self, rng: Optional[RandomStream] = None, loop_cap: int = 10_000):
        self.s0: List[Any] = []
        self.s1: List[Any] = []
        self.s2: List[Any] = []
        self.params: Sequence[Any] = ()
        self.temps: List[Any] = []
        self.locals: Dict[str, Any] = {}
        self.input: Any = None
        self.meet = True
        self.reward = 0.0
        self.response: Optional[str] = None
        self.rng = rng
        self.loop_cap = loop_cap


# ================================
# COMPILER
# ================================

_clamp_reported: set = set()


def _fault_bool(value, where: str) -> bool:
    if not isinstance(value, bool):
        raise EvalFault(f"expected bool, got {value!r}", where)
    return value


def trunc_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def lookup_input(data: Any, path: str, where: str = "") -> Any:
    """Resolve a dotted field path in a response or feed payload"""
    if not path:
        return data
    if isinstance(data, dict) and path in data:
        return data[path]
    current = data
    for part in path.split("."):
        if not isinstance(current, dict) or part not in current:
            raise MissingResponseField(f"field '{path}' missing from input", where)
        current = current[part]
    return current


_STORAGE = {0: "s0", 1: "s1", 2: "s2"}


def _storage(ref: TRef) -> str:
    if ref.binding in (Binding.STATE, Binding.STATE_, Binding.STATE__):
        return _STORAGE[ref.copy]
    if ref.binding == Binding.PARAMETER:
        return "params"
    return "temps"


def _slot_fn(ref: TRef) -> Optional[Callable[[Frame], int]]:
    if not ref.dynamic:
        return None
    base, where = ref.base, ref.where
    parts = [(compile_expr(idx), stride, length) for idx, stride, length in ref.dynamic]

    def slot(fr: Frame) -> int:
        s = base
        for index_fn, stride, length in parts:
            i = index_fn(fr)
            if not 0 <= i < length:
                raise EvalFault(f"index {i} out of range [0, {length})", where)
            s += i * stride
        return s
    return slot


def _compile_read(ref: TRef) -> Callable[[Frame], Any]:
    binding, where = ref.binding, ref.where
    if binding == Binding.MEET:
        return lambda fr: fr.meet
    if binding == Binding.REWARD:
        return lambda fr: fr.reward
    if binding == Binding.RESPONSE:
        def read_response(fr: Frame):
            if fr.response is None:
                raise ObservationUnset("__moduleResponse read before assignment", where)
            return fr.response
        return read_response
    if binding == Binding.INPUT:
        name = ref.name
        return lambda fr: lookup_input(fr.input, name, where)
    if binding == Binding.LOCAL and not ref.temp:
        name = ref.name

        def read_local(fr: Frame):
            try:
                return fr.locals[name]
            except KeyError:
                raise EvalFault(f"local '{name}' read before it is bound", where) from None
        return read_local
    get = operator.attrgetter(_storage(ref))
    base = ref.base
    slot = _slot_fn(ref)
    if slot is None:
        return lambda fr: get(fr)[base]
    return lambda fr: get(fr)[slot(fr)]


def _compile_write(ref: TRef, widen: bool) -> Callable[[Frame, Any], None]:
    binding, where = ref.binding, ref.where
    if binding == Binding.MEET:
        def write_meet(fr, v):
            fr.meet = _fault_bool(v, where)
        return write_meet
    if binding == Binding.REWARD:
        def write_reward(fr, v):
            fr.reward = float(v)
        return write_reward
    if binding == Binding.RESPONSE:
        def write_response(fr, v):
            fr.response = v
        return write_response
    get = operator.attrgetter(_storage(ref))
    base = ref.base
    slot = _slot_fn(ref)
    if slot is None:
        if widen:
            def write_static_real(fr, v):
                get(fr)[base] = float(v)
            return write_static_real

        def write_static(fr, v):
            get(fr)[base] = v
        return write_static

    def write_dynamic(fr, v):
        get(fr)[slot(fr)] = float(v) if widen else v
    return write_dynamic


def arith_op(op: str, where: str, integer: bool) -> Callable[[Any, Any], Any]:
    if op == "+":
        return operator.add
    if op == "-":
        return operator.sub
    if op == "*":
        return operator.mul
    if op == "/":
        def divide(a, b):
            if b == 0:
                raise EvalFault("division by zero", where)
            return trunc_div(a, b) if integer else a / b
        return divide

    def modulo(a, b):
        if b == 0:
            raise EvalFault("modulo by zero", where)
        return a - b * trunc_div(a, b)
    return modulo


COMPARE_OPS = {
    "==": operator.eq, "!=": operator.ne,
    "<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge,
}

PURE_BUILTINS = {
    "sqrt": math.sqrt, "pow": math.pow, "abs": abs,
    "min": min, "max": max, "floor": math.floor,
}


def _compile_binary(node: TBinary) -> Callable[[Frame], Any]:
    left = compile_expr(node.left)
    right = compile_expr(node.right)
    where, op = node.where, node.op
    if node.op in ("&&", "||"):
        checked = node.left.type.kind == "any" or node.right.type.kind == "any"
        if node.op == "&&":
            if checked:
                return lambda fr: _fault_bool(left(fr), where) and _fault_bool(right(fr), where)
            return lambda fr: left(fr) and right(fr)
        if checked:
            return lambda fr: _fault_bool(left(fr), where) or _fault_bool(right(fr), where)
        return lambda fr: left(fr) or right(fr)
    if node.op in COMPARE_OPS:
        cmp = COMPARE_OPS[node.op]
        if node.op in ("==", "!="):
            return lambda fr: cmp(left(fr), right(fr))

        def ordered(fr):
            try:
                return cmp(left(fr), right(fr))
            except TypeError:
                raise EvalFault(f"cannot compare with '{op}'", where) from None
        return ordered
    fn = arith_op(node.op, where, node.type.kind == "int")
    if node.left.type.kind != "any" and node.right.type.kind != "any":
        return lambda fr: fn(left(fr), right(fr))

    def checked_arith(fr):
        try:
            return fn(left(fr), right(fr))
        except TypeError:
            raise EvalFault(f"operands of '{op}' are not numeric", where) from None
    return checked_arith


def _compile_call(node: TCall) -> Callable[[Frame], Any]:
    args = [compile_expr(a) for a in node.args]
    where = node.where
    name = node.name
    if name == "AOS.Bernoulli":
        (p_fn,) = args

        def bernoulli(fr):
            p = p_fn(fr)
            if p < 0.0 or p > 1.0:
                if where not in _clamp_reported:
                    _clamp_reported.add(where)
                    logger.warning("Bernoulli probability clamped", probability=p, location=where)
                p = min(1.0, max(0.0, p))
            return fr.rng.random() < p
        return bernoulli
    if name == "AOS.UniformInt":
        lo_fn, hi_fn = args

        def uniform_int(fr):
            lo, hi = lo_fn(fr), hi_fn(fr)
            if lo > hi:
                raise EvalFault(f"UniformInt bounds {lo} > {hi}", where)
            return fr.rng.integers(lo, hi)
        return uniform_int
    if name == "AOS.UniformReal":
        lo_fn, hi_fn = args
        return lambda fr: fr.rng.uniform(lo_fn(fr), hi_fn(fr))
    if name == "contains":
        hay_fn, needle_fn = args

        def contains(fr):
            hay, needle = hay_fn(fr), needle_fn(fr)
            if not isinstance(hay, str) or not isinstance(needle, str):
                raise EvalFault("contains expects strings", where)
            return needle in hay
        return contains
    pure = PURE_BUILTINS[name]

    def call(fr):
        try:
            return pure(*(a(fr) for a in args))
        except (ValueError, OverflowError, TypeError) as e:
            raise EvalFault(f"{name}: {e}", where) from None
    return call


def compile_expr(node) -> Callable[[Frame], Any]:
    if isinstance(node, TConst):
        value = node.value
        return lambda fr: value
    if isinstance(node, TRef):
        return _compile_read(node)
    if isinstance(node, TUnary):
        operand = compile_expr(node.operand)
        if node.op == "!":
            if node.operand.type.kind == "any":
                where = node.where
                return lambda fr: not _fault_bool(operand(fr), where)
            return lambda fr: not operand(fr)
        return lambda fr: -operand(fr)
    if isinstance(node, TBinary):
        return _compile_binary(node)
    if isinstance(node, TCond):
        cond = compile_expr(node.cond)
        then = compile_expr(node.then)
        otherwise = compile_expr(node.otherwise)
        return lambda fr: then(fr) if cond(fr) else otherwise(fr)
    if isinstance(node, TCall):
        return _compile_call(node)
    raise TypeError(f"not an expression node: {node!r}")


def _compile_block(statements) -> Callable[[Frame], None]:
    fns = [_compile_statement(s) for s in statements]
    if len(fns) == 1:
        return fns[0]

    def block(fr):
        for fn in fns:
            fn(fr)
    return block


def _compile_statement(node) -> Callable[[Frame], None]:
    if isinstance(node, TAssign):
        value = compile_expr(node.value)
        write = _compile_write(node.target, node.widen)
        return lambda fr: write(fr, value(fr))
    if isinstance(node, TIf):
        cond = compile_expr(node.cond)
        then = _compile_block(node.then)
        otherwise = _compile_block(node.otherwise)

        def branch(fr):
            if cond(fr):
                then(fr)
            else:
                otherwise(fr)
        return branch
    if isinstance(node, TWhile):
        cond = compile_expr(node.cond)
        body = _compile_block(node.body)
        where = node.where

        def loop(fr):
            count = 0
            while cond(fr):
                count += 1
                if count > fr.loop_cap:
                    raise LoopCap(f"loop exceeded {fr.loop_cap} iterations", where)
                body(fr)
        return loop
    raise TypeError(f"not a statement node: {node!r}")


_compiled: "WeakKeyDictionary[TypedProgram, Callable[[Frame], Any]]" = WeakKeyDictionary()


def compile_program(program: TypedProgram) -> Callable[[Frame], Any]:
    """Closure for a typed program; expression programs return their value"""
    cached = _compiled.get(program)
    if cached is not None:
        return cached
    if program.expression is not None:
        fn = compile_expr(program.expression)
    else:
        body = _compile_block(program.statements)
        n = program.temp_count
        if n:
            def fn(fr):
                fr.temps = [None] * n
                body(fr)
        else:
            fn = body
    _compiled[program] = fn
    return fn


def evaluate(program: TypedProgram, frame: Frame) -> Any:
    return compile_program(program)(frame)


# ================================
# SIMULATOR
# ================================

class Simulator:
    """Generative model of a linked project: initial states and steps"""

    def __init__(self, project: ProjectModel, loop_cap: Optional[int] = None):
        self.project = project
        self.loop_cap = loop_cap or get_settings().loop_cap
        self.actions: Tuple[GroundedAction, ...] = project.actions
        self.gamma = project.gamma
        self._initial = [compile_program(p) for p in project.initial_belief]
        self._extrinsic = [compile_program(p) for p in project.extrinsic]
        self._specials = [
            (s.index, s.reward, s.one_time, s.goal, compile_program(s.program))
            for s in project.special_states
        ]
        self._goals = [fn for _, _, _, goal, fn in self._specials if goal]
        self._skills = {
            name: (
                [compile_program(p) for p in skill.preconditions],
                [compile_program(p) for p in skill.dynamics],
                skill.penalty,
                skill.responses[0],
            )
            for name, skill in project.skills.items()
        }
        self._defaults = project.state.defaults()

    def sample_initial_state(self, rng: RandomStream) -> State:
        fr = Frame(rng, self.loop_cap)
        fr.s0 = list(self._defaults)
        for fn in self._initial:
            fn(fr)
        return State(tuple(fr.s0))

    def is_terminal(self, state: State) -> bool:
        if not self._goals:
            return False
        fr = Frame(None, self.loop_cap)
        fr.s2 = state.values
        return any(fn(fr) for fn in self._goals)

    def step(self, state: State, action: GroundedAction, rng: RandomStream) -> StepResult:
        first_response = self._skills[action.skill][3]
        if self.is_terminal(state):
            return StepResult(state, first_response, 0.0, True, True)
        fr = self.begin_step(state, action, rng)
        self.run_dynamics(action, fr)
        return self.finish_step(state, action, fr)

    def begin_step(self, state: State, action: GroundedAction, rng: RandomStream) -> Frame:
        """Run extrinsic changes and preconditions; the frame is ready for dynamics"""
        fr = Frame(rng, self.loop_cap)
        fr.s0 = state.values
        fr.s1 = list(state.values)
        for fn in self._extrinsic:
            fn(fr)
        fr.s2 = list(fr.s1)
        fr.params = action.param_values
        for fn in self._skills[action.skill][0]:
            fn(fr)
        return fr

    def run_dynamics(self, action: GroundedAction, fr: Frame):
        for fn in self._skills[action.skill][1]:
            fn(fr)

    def finish_step(self, state: State, action: GroundedAction, fr: Frame) -> StepResult:
        """Apply the penalty and special-state rewards to a frame after dynamics"""
        if fr.response is None:
            raise ObservationUnset(f"{action.skill} dynamics did not assign __moduleResponse", action.label)
        met = fr.meet
        applied_penalty = 0.0 if met else self._skills[action.skill][2]
        collected = state.collected
        triggered = []
        terminal = False
        for index, reward, one_time, goal, fn in self._specials:
            if fn(fr):
                if goal:
                    terminal = True
                if one_time:
                    bit = 1 << index
                    if collected & bit:
                        continue
                    collected |= bit
                triggered.append((index, reward))
        total = fr.reward + applied_penalty + sum(r for _, r in triggered)
        return StepResult(
            next_state=State(tuple(fr.s2), collected),
            observation=fr.response,
            reward=total,
            terminal=terminal,
            met_precondition=met,
            action_reward=fr.reward,
            penalty=applied_penalty,
            special_rewards=tuple(triggered),
        )

    def rollout(self, state: State, depth: int, gamma: float, rng: RandomStream) -> float:
        """Discounted return of uniformly random actions until depth or a terminal state"""
        total = 0.0
        discount = 1.0
        actions = self.actions
        for _ in range(depth):
            if self.is_terminal(state):
                break
            result = self.step(state, actions[rng.index(len(actions))], rng)
            total += discount * result.reward
            discount *= gamma
            state = result.next_state
            if result.terminal:
                break
        return total


def get_simulator(project: ProjectModel) -> Simulator:
    if project.simulator is None:
        project.simulator = Simulator(project)
    return project.simulator


def sample_initial_state(project: ProjectModel, rng: RandomStream) -> State:
    return get_simulator(project).sample_initial_state(rng)


def step(project: ProjectModel, state: State, action: GroundedAction, rng: RandomStream) -> StepResult:
    return get_simulator(project).step(state, action, rng)


def rollout(project: ProjectModel, state: State, depth: int, gamma: float, rng: RandomStream) -> float:
    if depth < 0:
        raise ValueError("depth must be >= 0")
    return get_simulator(project).rollout(state, depth, gamma, rng)


def bench_sampler(project: ProjectModel, n_steps: int, seed: int = 0) -> float:
    """Single-thread step throughput in steps per second"""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    simulator = get_simulator(project)
    rng = RandomStream(seed)
    actions = simulator.actions
    state = simulator.sample_initial_state(rng)
    start = time.perf_counter()
    for _ in range(n_steps):
        result = simulator.step(state, actions[rng.index(len(actions))], rng)
        state = result.next_state
        if result.terminal:
            state = simulator.sample_initial_state(rng)
    elapsed = time.perf_counter() - start
    rate = n_steps / elapsed if elapsed > 0 else float("inf")
    logger.info("Sampler benchmark finished", project=project.name, steps=n_steps, rate=round(rate, 1))
    return rate
