"""
Skill harness
Simulated worlds with their own ground truth, response synthesis, and the
line-delimited JSON wire protocol used by external skill processes.
"""

import asyncio
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, List, Literal, Optional, Tuple

import structlog
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from am_runtime import ActivationRequest, FeedLog, SkillResponse, build_activation
from config import get_settings
from dsl import Scope, SectionKind, compile_source
from errors import (
    ConnectionLost,
    DslError,
    LinkError,
    ProtocolViolation,
    SkillTimeout,
    UnknownEndpoint,
)
from sampler import RandomStream, State, StepResult, compile_program, get_simulator
from spec_model import GroundedAction, ProjectModel, WorldSpec

logger = structlog.get_logger(__name__)

FAITHFUL = WorldSpec(Mode="faithful", Description="model-faithful replay of the project's own dynamics")


@dataclass(frozen=True)
class WorldReport:
    """Ground-truth bookkeeping attached to simulated responses"""
    reward: float
    terminal: bool
    flagged: bool = False

    def as_dict(self) -> Dict[str, Any]:
        return {"reward": self.reward, "terminal": self.terminal, "flagged": self.flagged}


# ================================
# WORLD SIMULATOR
# ================================

@dataclass(frozen=True)
class _CompiledOutcome:
    probability: float
    program: Any
    reward: float


@dataclass(frozen=True)
class _CompiledRow:
    when: Any
    outcomes: Tuple[_CompiledOutcome, ...]


class WorldSimulator:
    """Ground truth for in-process skills

    Faithful mode executes the project's own step. Custom mode replaces the
    dynamics of overridden skills with the manifest's outcome tables; rows
    are matched first-to-last on the pre-action state.
    """

    def __init__(self, project: ProjectModel, world: str = "faithful", seed: int = 0,
                 initial_state: Optional[State] = None):
        self.project = project
        self.world_name = world
        self.seed = seed
        self.pinned_state = initial_state
        self.spec = self._world_spec(project, world)
        self.simulator = get_simulator(project)
        self.rng = RandomStream(seed)
        self.state = initial_state if initial_state is not None else self.simulator.sample_initial_state(self.rng)
        self.terminal = self.simulator.is_terminal(self.state)
        self.endpoints = {skill.map.endpoint: name for name, skill in project.skills.items()}
        self.overrides = {skill: self._compile_rows(skill, rows) for skill, rows in self.spec.overrides.items()}
        self.last: Optional[StepResult] = None
        self._requests: Dict[str, List[Tuple[ActivationRequest, GroundedAction]]] = {}

    def fresh(self, seed: Optional[int] = None) -> "WorldSimulator":
        """Same world restarted from its initial belief (or pinned start state)"""
        return WorldSimulator(self.project, self.world_name, self.seed if seed is None else seed, self.pinned_state)

    @staticmethod
    def _world_spec(project: ProjectModel, world: str) -> WorldSpec:
        worlds = project.manifest.worlds if project.manifest else {}
        if world in worlds:
            return worlds[world]
        if world == "faithful":
            return FAITHFUL
        raise LinkError("ManifestError", f"unknown world '{world}'", "Worlds")

    def _compile_rows(self, skill_name: str, rows) -> Tuple[_CompiledRow, ...]:
        skill = self.project.skills[skill_name]
        scope = Scope(types=self.project.types, state=self.project.state, params=skill.params,
                      responses=skill.responses, skill=skill_name)
        compiled = []
        for i, row in enumerate(rows):
            path = f"Worlds.{self.world_name}.Overrides.{skill_name}[{i}]"
            try:
                when = compile_source(f"__meetPrecondition = ({row.when});", SectionKind.PRECONDITION, scope,
                                      f"{path}.When")
                outcomes = tuple(
                    _CompiledOutcome(
                        o.probability,
                        compile_source(f"{o.assign}\n__moduleResponse = {o.response};", SectionKind.DYNAMICS,
                                       scope, f"{path}.Outcomes[{j}]"),
                        o.reward,
                    )
                    for j, o in enumerate(row.outcomes)
                )
            except DslError as e:
                raise LinkError("ManifestError", e.message, e.path or path) from None
            compiled.append(_CompiledRow(when, outcomes))
        return tuple(compiled)

    def execute(self, action: GroundedAction) -> StepResult:
        """Advance ground truth by one action"""
        rows = self.overrides.get(action.skill)
        if rows is None or self.terminal:
            result = self.simulator.step(self.state, action, self.rng)
        else:
            result = self._custom_step(action, rows)
        self.state = result.next_state
        self.terminal = result.terminal
        self.last = result
        return result

    def _custom_step(self, action: GroundedAction, rows: Tuple[_CompiledRow, ...]) -> StepResult:
        fr = self.simulator.begin_step(self.state, action, self.rng)
        met = fr.meet
        for row in rows:
            fr.meet = True
            compile_program(row.when)(fr)
            if fr.meet:
                break
        else:
            fr.meet = met
            self.simulator.run_dynamics(action, fr)
            return self.simulator.finish_step(self.state, action, fr)
        fr.meet = met
        u = self.rng.random()
        chosen = row.outcomes[-1]
        acc = 0.0
        for outcome in row.outcomes:
            acc += outcome.probability
            if u < acc:
                chosen = outcome
                break
        compile_program(chosen.program)(fr)
        fr.reward = chosen.reward
        return self.simulator.finish_step(self.state, action, fr)

    def decode(self, request: ActivationRequest) -> GroundedAction:
        """Grounded action whose activation equals the request"""
        skill = self.endpoints.get(request.endpoint)
        if skill is None:
            raise UnknownEndpoint(f"no skill registered at endpoint '{request.endpoint}'")
        candidates = self._requests.get(skill)
        if candidates is None:
            am = self.project.skills[skill].map
            candidates = self._requests[skill] = [(build_activation(am, a), a) for a in self.project.skill_actions(skill)]
        for built, action in candidates:
            if built == request:
                return action
        raise ProtocolViolation(f"request for '{request.endpoint}' matches no grounded action")

    def invoke(self, request: ActivationRequest) -> Tuple[SkillResponse, FeedLog]:
        action = self.decode(request)
        result = self.execute(action)
        response, feeds = synthesize_response(self.project, action.skill, result.observation)
        response.world = WorldReport(result.reward, result.terminal, flagged=action.skill in self.overrides)
        return response, feeds


def synthesize_response(project: ProjectModel, skill: str, observation: str) -> Tuple[SkillResponse, FeedLog]:
    """Raw skill output for a model observation, from the manifest's response table"""
    table = project.manifest.skill_responses.get(skill, {}) if project.manifest else {}
    entry = table.get(observation)
    if entry is None:
        logger.warning("No synthesized response configured", skill=skill, observation=observation)
        return SkillResponse({}), FeedLog()
    feeds = FeedLog()
    seq = 0
    for path, payloads in entry.feeds.items():
        for payload in payloads:
            seq += 1
            feeds.append(path, seq, payload)
    return SkillResponse(dict(entry.fields)), feeds


# ================================
# WIRE PROTOCOL
# ================================

class WireMessage(BaseModel):
    """One line of the wire protocol"""
    model_config = ConfigDict(extra="forbid")

    kind: Literal["activate", "response", "feed", "reset"]
    id: int
    endpoint: Optional[str] = None
    fields: Optional[Dict[str, Any]] = None
    path: Optional[str] = None
    seq: Optional[int] = None
    payload: Any = None
    world: Optional[Dict[str, Any]] = None
    seed: Optional[int] = None

    @model_validator(mode="after")
    def check_kind(self):
        if self.kind == "activate" and self.endpoint is None:
            raise ValueError("activate requires endpoint")
        if self.kind == "feed" and (self.path is None or self.seq is None):
            raise ValueError("feed requires path and seq")
        if self.kind == "reset" and self.seed is None:
            raise ValueError("reset requires seed")
        if self.kind in ("activate", "response") and self.fields is None:
            self.fields = {}
        return self


def encode_message(message: WireMessage) -> bytes:
    return (message.model_dump_json(exclude_none=True) + "\n").encode("utf-8")


def decode_message(line: bytes) -> WireMessage:
    try:
        data = json.loads(line.decode("utf-8"))
        return WireMessage.model_validate(data)
    except (UnicodeDecodeError, json.JSONDecodeError, ValidationError) as e:
        raise ProtocolViolation(f"malformed message: {e}") from None


class SkillChannel(ABC):
    """Where activation requests go and raw skill output comes from"""

    @abstractmethod
    async def activate(self, request: ActivationRequest) -> Tuple[SkillResponse, FeedLog]:
        ...

    async def reset(self, seed: int):
        """Start a new episode whose ground truth is seeded with seed"""

    async def close(self):
        pass


class InProcessChannel(SkillChannel):
    def __init__(self, world: WorldSimulator):
        self.world = world

    async def reset(self, seed: int):
        self.world = self.world.fresh(seed)

    async def activate(self, request: ActivationRequest) -> Tuple[SkillResponse, FeedLog]:
        return self.world.invoke(request)


class RemoteSkillChannel(SkillChannel):
    """Client side of the wire protocol; one activation in flight at a time"""

    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter,
                 timeout: Optional[float] = None):
        self.reader = reader
        self.writer = writer
        self.timeout = timeout or get_settings().wire_timeout_seconds
        self.next_id = 1
        self.completed: set = set()

    @classmethod
    async def connect(cls, host: str, port: int, timeout: Optional[float] = None) -> "RemoteSkillChannel":
        try:
            reader, writer = await asyncio.open_connection(host, port)
        except OSError as e:
            raise ConnectionLost(f"cannot connect to {host}:{port}: {e}") from None
        logger.info("Connected to skill server", host=host, port=port)
        return cls(reader, writer, timeout)

    async def _read(self) -> WireMessage:
        line = await self.reader.readline()
        if not line:
            raise ConnectionLost("skill server closed the connection")
        return decode_message(line)

    async def _exchange(self, request_id: int) -> Tuple[SkillResponse, FeedLog]:
        feeds = FeedLog()
        while True:
            message = await self._read()
            if message.id in self.completed:
                raise ProtocolViolation(f"{message.kind} for already completed activation {message.id}")
            if message.id != request_id:
                raise ProtocolViolation(f"{message.kind} for unknown activation {message.id}")
            if message.kind == "feed":
                feeds.append(message.path, message.seq, message.payload)
            elif message.kind == "response":
                response = SkillResponse(dict(message.fields or {}))
                if message.world is not None:
                    response.world = WorldReport(**message.world)
                return response, feeds
            else:
                raise ProtocolViolation(f"unexpected {message.kind} from skill server")

    async def _request(self, message: WireMessage) -> Tuple[SkillResponse, FeedLog]:
        try:
            self.writer.write(encode_message(message))
            await self.writer.drain()
        except (ConnectionError, OSError) as e:
            raise ConnectionLost(f"send failed: {e}") from None
        try:
            result = await asyncio.wait_for(self._exchange(message.id), self.timeout)
        except asyncio.TimeoutError:
            raise SkillTimeout(f"no response to {message.kind} {message.id} within {self.timeout}s") from None
        self.completed.add(message.id)
        return result

    def _take_id(self) -> int:
        request_id = self.next_id
        self.next_id += 1
        return request_id

    async def activate(self, request: ActivationRequest) -> Tuple[SkillResponse, FeedLog]:
        return await self._request(WireMessage(kind="activate", id=self._take_id(), endpoint=request.endpoint,
                                               fields=request.as_dict()))

    async def reset(self, seed: int):
        await self._request(WireMessage(kind="reset", id=self._take_id(), seed=seed))

    async def close(self):
        self.writer.close()
        try:
            await self.writer.wait_closed()
        except (ConnectionError, OSError):
            pass


async def _handle_connection(template: WorldSimulator, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
    """Each connection gets its own ground truth; reset restarts it under a new seed"""
    peer = writer.get_extra_info("peername")
    world = template.fresh()
    logger.info("Skill client connected", peer=str(peer))
    try:
        while True:
            line = await reader.readline()
            if not line:
                break
            try:
                message = decode_message(line)
                if message.kind == "reset":
                    world = template.fresh(message.seed)
                    logger.debug("World reset", peer=str(peer), seed=message.seed)
                    writer.write(encode_message(WireMessage(kind="response", id=message.id)))
                    await writer.drain()
                    continue
                if message.kind != "activate":
                    raise ProtocolViolation(f"server expects activate or reset, got {message.kind}")
                request = ActivationRequest(message.endpoint, tuple(message.fields.items()))
                response, feeds = world.invoke(request)
            except (ProtocolViolation, UnknownEndpoint) as e:
                logger.warning("Closing connection after bad request", peer=str(peer), error=str(e))
                break
            for path, log in feeds.messages.items():
                for seq, payload in log:
                    writer.write(encode_message(WireMessage(kind="feed", id=message.id, path=path, seq=seq,
                                                            payload=payload)))
            world_report = response.world.as_dict() if response.world is not None else None
            writer.write(encode_message(WireMessage(kind="response", id=message.id, fields=response.fields,
                                                    world=world_report)))
            await writer.drain()
    finally:
        writer.close()
        logger.info("Skill client disconnected", peer=str(peer))


async def serve(world: WorldSimulator, host: str = "127.0.0.1", port: int = 0) -> asyncio.AbstractServer:
    """Expose a world over the wire protocol; port 0 picks a free port"""
    server = await asyncio.start_server(lambda r, w: _handle_connection(world, r, w), host, port)
    sockets = server.sockets or []
    if sockets:
        logger.info("Skill server listening", address=str(sockets[0].getsockname()), world=world.world_name)
    return server


async def connect(host: str, port: int, timeout: Optional[float] = None) -> RemoteSkillChannel:
    return await RemoteSkillChannel.connect(host, port, timeout)
