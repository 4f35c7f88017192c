"""
Abstraction-map runtime
Turns grounded actions into activation requests and raw skill output
(response fields plus data-feed messages) into model observations.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import structlog

from errors import EvalFault, MissingParameter, ProtocolViolation
from sampler import Frame, evaluate
from spec_model import GroundedAction, LinkedMap, LocalBinding

logger = structlog.get_logger(__name__)

LocalEnv = Dict[str, Any]

_KIND_CHECKS = {
    "bool": lambda v: isinstance(v, bool),
    "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "real": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "string": lambda v: isinstance(v, str),
}


@dataclass(frozen=True)
class ActivationRequest:
    endpoint: str
    fields: Tuple[Tuple[str, Any], ...] = ()

    def as_dict(self) -> Dict[str, Any]:
        return dict(self.fields)


@dataclass
class SkillResponse:
    fields: Dict[str, Any] = field(default_factory=dict)
    # ground-truth report, only set by simulated worlds
    world: Optional[Any] = None


@dataclass
class FeedLog:
    """Data-feed messages captured during one activation window"""
    messages: Dict[str, List[Tuple[int, Any]]] = field(default_factory=dict)

    def append(self, path: str, seq: int, payload: Any):
        log = self.messages.setdefault(path, [])
        if log and seq <= log[-1][0]:
            raise ProtocolViolation(f"feed '{path}' sequence {seq} not after {log[-1][0]}")
        log.append((seq, payload))

    def payloads(self, path: str) -> List[Any]:
        return [payload for _, payload in self.messages.get(path, [])]

    def __len__(self) -> int:
        return sum(len(v) for v in self.messages.values())

    def as_dict(self) -> Dict[str, List[Any]]:
        return {path: self.payloads(path) for path in self.messages}


def _frame(action: Optional[GroundedAction], locals_env: LocalEnv) -> Frame:
    fr = Frame()
    fr.params = action.param_values if action is not None else ()
    fr.locals = locals_env
    return fr


def _checked(binding: LocalBinding, value: Any) -> Any:
    check = _KIND_CHECKS.get(binding.type.kind)
    if check is not None and not check(value):
        raise EvalFault(f"local '{binding.name}' expects {binding.type}, got {value!r}", binding.program.origin)
    if binding.type.kind == "real":
        return float(value)
    return value


def _parameter_locals(am: LinkedMap, action: GroundedAction) -> LocalEnv:
    if action.skill != am.spec.name:
        raise MissingParameter(f"action {action.label} does not belong to skill {am.spec.name}")
    env: LocalEnv = {}
    fr = _frame(action, env)
    for binding in am.locals:
        if binding.kind == "parameter":
            env[binding.name] = evaluate(binding.program, fr)
    return env


def build_activation(am: LinkedMap, action: GroundedAction) -> ActivationRequest:
    """Resolve parameter locals, then evaluate every endpoint field over them"""
    env = _parameter_locals(am, action)
    fr = _frame(action, env)
    fields = tuple((name, evaluate(program, fr)) for name, program in am.fields)
    return ActivationRequest(am.endpoint, fields)


def bind_locals(am: LinkedMap, response: SkillResponse, feeds: FeedLog, action: GroundedAction) -> LocalEnv:
    """Bind every AM local from parameters, the skill response and folded feed messages"""
    env = _parameter_locals(am, action)
    fr = _frame(action, env)
    for binding in am.locals:
        if binding.kind == "response":
            fr.input = response.fields
            env[binding.name] = _checked(binding, evaluate(binding.program, fr))
        elif binding.kind == "feed":
            env[binding.name] = binding.initial
            for payload in feeds.payloads(binding.feed_path):
                fr.input = payload
                env[binding.name] = _checked(binding, evaluate(binding.program, fr))
    fr.input = None
    return env


def derive_observation(am: LinkedMap, locals_env: LocalEnv, action: Optional[GroundedAction] = None) -> str:
    """First response rule whose condition holds"""
    fr = _frame(action, locals_env)
    for symbol, program in am.rules:
        holds = evaluate(program, fr)
        if not isinstance(holds, bool):
            raise EvalFault(f"response condition for {symbol} is not bool", program.origin)
        if holds:
            return symbol
    # unreachable for linked maps: the final rule is a literal true
    return am.rules[-1][0]


def observe(am: LinkedMap, action: GroundedAction, response: SkillResponse, feeds: FeedLog) -> Tuple[str, LocalEnv]:
    locals_env = bind_locals(am, response, feeds, action)
    return derive_observation(am, locals_env, action), locals_env
