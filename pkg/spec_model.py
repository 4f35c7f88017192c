"""
Skill documentation models
Loads, validates and links Environment, GSDL and AM documents into a ProjectModel
"""

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path as FilePath
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import structlog
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from dsl import (
    Layout,
    Literal as LiteralNode,
    Scope,
    SectionKind,
    TypeTable,
    TypedProgram,
    ValueType,
    parse_program,
    print_program,
    typecheck,
)
from errors import BindError, DslError, LinkError, SchemaError, UndeclaredSymbolError

logger = structlog.get_logger(__name__)

DocumentSource = Union[str, bytes, dict, FilePath]


# ================================
# DOCUMENT SCHEMAS
# ================================

class DocModel(BaseModel):
    """Base for documentation models: unknown fields rejected, no coercion"""
    model_config = ConfigDict(extra="forbid", populate_by_name=True, strict=True, frozen=True)


class GsdlMain(DocModel):
    name: str = Field(alias="Name")
    type: str = Field(alias="Type")
    description: str = Field("", alias="Description")


class EnumTypeDecl(DocModel):
    type_name: str = Field(alias="TypeName")
    values: Tuple[str, ...] = Field(alias="Values", min_length=1)


class VariableDecl(DocModel):
    name: str = Field(alias="Name")
    type: str = Field(alias="Type")


class CompoundTypeDecl(DocModel):
    type_name: str = Field(alias="TypeName")
    variables: Tuple[VariableDecl, ...] = Field(alias="Variables", min_length=1)


class ParameterDomain(DocModel):
    type: str = Field(alias="Type")
    values: Tuple[Any, ...] = Field(alias="Values")
    names: Optional[Tuple[str, ...]] = Field(None, alias="Names")

    @model_validator(mode="after")
    def check_names(self):
        if self.names is not None and len(self.names) != len(self.values):
            raise ValueError("Names must have one entry per value")
        return self


class CodeEntry(DocModel):
    assignment_code: str = Field(alias="AssignmentCode")


class SpecialStateDecl(DocModel):
    condition: str = Field(alias="StateConditionCode")
    reward: float = Field(alias="Reward")
    one_time: bool = Field(False, alias="IsOneTimeReward")
    goal: bool = Field(False, alias="IsGoalState")


def _check_main_type(main: GsdlMain, expected: str) -> GsdlMain:
    if main.type != expected:
        raise ValueError(f"Type must be '{expected}', got '{main.type}'")
    return main


def _check_unique(names: Sequence[str], what: str):
    seen = set()
    for name in names:
        if name in seen:
            raise ValueError(f"{what} '{name}' declared twice")
        seen.add(name)


class EnvironmentSpec(DocModel):
    """Global document: types, state variables, initial belief, extrinsic changes, rewards"""
    main: GsdlMain = Field(alias="GsdlMain")
    enum_types: Tuple[EnumTypeDecl, ...] = Field((), alias="EnumTypes")
    compound_types: Tuple[CompoundTypeDecl, ...] = Field((), alias="CompoundTypes")
    state_variables: Tuple[VariableDecl, ...] = Field(alias="GlobalVariablesDeclaration")
    parameter_domains: Tuple[ParameterDomain, ...] = Field((), alias="ParameterDomains")
    initial_belief: Tuple[CodeEntry, ...] = Field((), alias="InitialBeliefStateAssignments")
    extrinsic: Tuple[CodeEntry, ...] = Field((), alias="ExtrinsicChangesDynamicModel")
    special_states: Tuple[SpecialStateDecl, ...] = Field((), alias="SpecialStates")
    discount: float = Field(0.95, alias="Discount")

    @field_validator("main")
    @classmethod
    def validate_main(cls, v: GsdlMain) -> GsdlMain:
        return _check_main_type(v, "Environment")

    @field_validator("discount")
    @classmethod
    def validate_discount(cls, v: float) -> float:
        if not 0.0 < v <= 1.0:
            raise ValueError("Discount must lie in (0, 1]")
        return v

    @field_validator("state_variables")
    @classmethod
    def validate_state_variables(cls, v):
        _check_unique([d.name for d in v], "state variable")
        return v


class PreconditionsDecl(DocModel):
    assignments: Tuple[CodeEntry, ...] = Field((), alias="GlobalVariablePreconditionAssignments")
    penalty: float = Field(0.0, alias="ViolatingPreconditionPenalty")

    @field_validator("penalty")
    @classmethod
    def validate_penalty(cls, v: float) -> float:
        if v > 0:
            raise ValueError("ViolatingPreconditionPenalty must be <= 0")
        return v


class SkillModelSpec(DocModel):
    """GSDL document of one skill"""
    main: GsdlMain = Field(alias="GsdlMain")
    parameters: Tuple[VariableDecl, ...] = Field((), alias="GlobalVariableModuleParameters")
    responses: Tuple[str, ...] = Field(alias="ModuleResponses", min_length=1)
    preconditions: PreconditionsDecl = Field(default_factory=PreconditionsDecl, alias="Preconditions")
    dynamics: Tuple[CodeEntry, ...] = Field((), alias="NextStateAssignments")

    @field_validator("main")
    @classmethod
    def validate_main(cls, v: GsdlMain) -> GsdlMain:
        return _check_main_type(v, "GSDL")

    @field_validator("parameters")
    @classmethod
    def validate_parameters(cls, v):
        _check_unique([p.name for p in v], "parameter")
        return v

    @field_validator("responses")
    @classmethod
    def validate_responses(cls, v):
        _check_unique(v, "response")
        return v

    @property
    def name(self) -> str:
        return self.main.name


class ResponseRule(DocModel):
    response: str = Field(alias="Response")
    condition: str = Field(alias="ConditionCodeWithLocalVariables")


class ModuleResponseDecl(DocModel):
    rules: Tuple[ResponseRule, ...] = Field(alias="ResponseRules", min_length=1)


class EndpointField(DocModel):
    name: str = Field(alias="FieldName")
    code: str = Field(alias="AssignFieldCode")


class EndpointDecl(DocModel):
    name: str = Field(alias="EndpointName")
    fields: Tuple[EndpointField, ...] = Field((), alias="Fields")


class ModuleActivationDecl(DocModel):
    endpoint: EndpointDecl = Field(alias="Endpoint")


class LocalVariableDecl(DocModel):
    """One AM local: from a GSDL parameter, from the skill response, or folded over a data feed"""
    name: str = Field(alias="LocalVariableName")
    type: Optional[str] = Field(None, alias="Type")
    from_parameter: Optional[str] = Field(None, alias="FromGlobalVariable")
    from_response: bool = Field(False, alias="FromSkillResponse")
    feed_path: Optional[str] = Field(None, alias="DataFeedPath")
    initial_value: Optional[Union[bool, int, float, str]] = Field(None, alias="InitialValue")
    code: Optional[str] = Field(None, alias="AssignmentCode")

    @model_validator(mode="after")
    def check_kind(self):
        kinds = [self.from_parameter is not None, self.from_response, self.feed_path is not None]
        if sum(kinds) != 1:
            raise ValueError("exactly one of FromGlobalVariable, FromSkillResponse, DataFeedPath is required")
        if (self.from_response or self.feed_path is not None) and not self.code:
            raise ValueError("AssignmentCode is required for response and data-feed locals")
        if self.feed_path is not None and self.initial_value is None:
            raise ValueError("InitialValue is required for data-feed locals")
        return self

    @property
    def kind(self) -> str:
        if self.from_parameter is not None:
            return "parameter"
        return "response" if self.from_response else "feed"


class AbstractionMapSpec(DocModel):
    """AM document of one skill"""
    main: GsdlMain = Field(alias="GsdlMain")
    module_response: ModuleResponseDecl = Field(alias="ModuleResponse")
    activation: ModuleActivationDecl = Field(alias="ModuleActivation")
    locals: Tuple[LocalVariableDecl, ...] = Field((), alias="LocalVariablesInitialization")

    @field_validator("main")
    @classmethod
    def validate_main(cls, v: GsdlMain) -> GsdlMain:
        return _check_main_type(v, "AM")

    @property
    def name(self) -> str:
        return self.main.name


# ================================
# MANIFEST
# ================================

class SkillPair(DocModel):
    gsdl: str = Field(alias="Gsdl")
    am: str = Field(alias="Am")


class SynthesizedResponse(DocModel):
    """Raw skill output a simulated skill emits for one model observation"""
    fields: Dict[str, Any] = Field(default_factory=dict, alias="Fields")
    feeds: Dict[str, Tuple[Any, ...]] = Field(default_factory=dict, alias="Feeds")


class WorldOutcome(DocModel):
    probability: float = Field(alias="Probability")
    assign: str = Field("", alias="Assign")
    response: str = Field(alias="Response")
    reward: float = Field(0.0, alias="Reward")

    @field_validator("probability")
    @classmethod
    def validate_probability(cls, v: float) -> float:
        if not 0.0 <= v <= 1.0:
            raise ValueError("Probability must lie in [0, 1]")
        return v


class WorldRow(DocModel):
    when: str = Field("true", alias="When")
    outcomes: Tuple[WorldOutcome, ...] = Field(alias="Outcomes", min_length=1)

    @model_validator(mode="after")
    def check_mass(self):
        total = sum(o.probability for o in self.outcomes)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"outcome probabilities sum to {total}, expected 1")
        return self


class WorldSpec(DocModel):
    mode: Literal["faithful", "custom"] = Field("faithful", alias="Mode")
    description: str = Field("", alias="Description")
    overrides: Dict[str, Tuple[WorldRow, ...]] = Field(default_factory=dict, alias="Overrides")


class ExpectedProperty(DocModel):
    name: str = Field(alias="Name")
    provenance: Literal["PAPER", "DERIVED", "TRIVIAL"] = Field(alias="Provenance")
    description: str = Field("", alias="Description")
    seed: int = Field(0, alias="Seed")
    tolerance: Optional[float] = Field(None, alias="Tolerance")


class Manifest(DocModel):
    name: str = Field(alias="Name")
    description: str = Field("", alias="Description")
    environment: str = Field(alias="Environment")
    skills: Tuple[SkillPair, ...] = Field(alias="Skills", min_length=1)
    skill_responses: Dict[str, Dict[str, SynthesizedResponse]] = Field(default_factory=dict, alias="SkillResponses")
    worlds: Dict[str, WorldSpec] = Field(default_factory=dict, alias="Worlds")
    expected_properties: Tuple[ExpectedProperty, ...] = Field((), alias="ExpectedProperties")


# ================================
# LOADING
# ================================

def _error_path(loc: Tuple[Union[str, int], ...]) -> str:
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += f".{part}" if out else str(part)
    return out


def _read(source: DocumentSource) -> dict:
    if isinstance(source, dict):
        return source
    if isinstance(source, FilePath):
        source = source.read_text(encoding="utf-8")
    try:
        data = json.loads(source)
    except json.JSONDecodeError as e:
        raise SchemaError(f"malformed JSON: {e.msg} at line {e.lineno} column {e.colno}") from None
    if not isinstance(data, dict):
        raise SchemaError("document must be a JSON object")
    return data


def _validate(model: type, source: DocumentSource):
    data = _read(source)
    try:
        # JSON mode so strict tuples accept arrays
        return model.model_validate_json(json.dumps(data))
    except ValidationError as e:
        first = e.errors()[0]
        raise SchemaError(first["msg"], _error_path(first["loc"])) from None


def load_environment(document: DocumentSource) -> EnvironmentSpec:
    """Load an Environment document; program sources are kept verbatim"""
    return _validate(EnvironmentSpec, document)


def load_gsdl(document: DocumentSource) -> SkillModelSpec:
    return _validate(SkillModelSpec, document)


def load_am(document: DocumentSource) -> AbstractionMapSpec:
    return _validate(AbstractionMapSpec, document)


def load_manifest(path: Union[str, FilePath]) -> Manifest:
    path = FilePath(path)
    if not path.is_file():
        raise LinkError("ManifestError", f"manifest not found: {path}")
    return _validate(Manifest, path)


def _normalize_code(code: str, section: SectionKind) -> str:
    return print_program(parse_program(code, section))


def _dump(spec: DocModel) -> str:
    return json.dumps(spec.model_dump(by_alias=True, mode="json"), indent=2)


def dump_environment(spec: EnvironmentSpec, normalize: bool = False) -> str:
    """Serialize to JSON; with normalize, program sources are pretty-printed"""
    if normalize:
        spec = spec.model_copy(update={
            "initial_belief": tuple(
                CodeEntry(AssignmentCode=_normalize_code(c.assignment_code, SectionKind.INITIAL_BELIEF))
                for c in spec.initial_belief),
            "extrinsic": tuple(
                CodeEntry(AssignmentCode=_normalize_code(c.assignment_code, SectionKind.EXTRINSIC))
                for c in spec.extrinsic),
            "special_states": tuple(
                s.model_copy(update={"condition": _normalize_code(s.condition, SectionKind.SPECIAL_STATE_CONDITION)})
                for s in spec.special_states),
        })
    return _dump(spec)


def dump_gsdl(spec: SkillModelSpec, normalize: bool = False) -> str:
    if normalize:
        spec = spec.model_copy(update={
            "preconditions": spec.preconditions.model_copy(update={"assignments": tuple(
                CodeEntry(AssignmentCode=_normalize_code(c.assignment_code, SectionKind.PRECONDITION))
                for c in spec.preconditions.assignments)}),
            "dynamics": tuple(
                CodeEntry(AssignmentCode=_normalize_code(c.assignment_code, SectionKind.DYNAMICS))
                for c in spec.dynamics),
        })
    return _dump(spec)


def dump_am(spec: AbstractionMapSpec, normalize: bool = False) -> str:
    if normalize:
        spec = spec.model_copy(update={
            "module_response": ModuleResponseDecl(ResponseRules=tuple(
                r.model_copy(update={"condition": _normalize_code(r.condition, SectionKind.AM_EXPRESSION)})
                for r in spec.module_response.rules)),
        })
    return _dump(spec)


# ================================
# LINKED MODEL
# ================================

@dataclass(frozen=True)
class GroundedAction:
    """A skill with every parameter bound to a domain value"""
    id: int
    skill: str
    bindings: Tuple[Tuple[str, Any], ...]
    labels: Tuple[str, ...]
    param_values: Tuple[Any, ...] = field(repr=False, compare=False)

    @property
    def label(self) -> str:
        return f"{self.skill}({', '.join(self.labels)})" if self.labels else f"{self.skill}()"

    def binding(self, name: str) -> Any:
        return dict(self.bindings)[name]

    def __str__(self) -> str:
        return self.label


@dataclass(frozen=True)
class SpecialState:
    index: int
    reward: float
    one_time: bool
    goal: bool
    program: TypedProgram


@dataclass(frozen=True)
class LocalBinding:
    """Compiled AM local; program is an AmExpression"""
    name: str
    kind: str
    type: ValueType
    program: TypedProgram
    feed_path: Optional[str] = None
    initial: Any = None


@dataclass(frozen=True)
class LinkedMap:
    spec: AbstractionMapSpec
    endpoint: str
    fields: Tuple[Tuple[str, TypedProgram], ...]
    locals: Tuple[LocalBinding, ...]
    rules: Tuple[Tuple[str, TypedProgram], ...]

    @property
    def feed_paths(self) -> Tuple[str, ...]:
        return tuple(b.feed_path for b in self.locals if b.kind == "feed")


@dataclass(frozen=True)
class LinkedSkill:
    spec: SkillModelSpec
    params: Layout
    responses: Tuple[str, ...]
    preconditions: Tuple[TypedProgram, ...]
    dynamics: Tuple[TypedProgram, ...]
    penalty: float
    map: LinkedMap

    @property
    def name(self) -> str:
        return self.spec.name


@dataclass(eq=False)
class ProjectModel:
    """Linked Environment + skills with the grounded action catalog"""
    environment: EnvironmentSpec
    types: TypeTable
    state: Layout
    initial_belief: Tuple[TypedProgram, ...]
    extrinsic: Tuple[TypedProgram, ...]
    special_states: Tuple[SpecialState, ...]
    skills: Dict[str, LinkedSkill]
    actions: Tuple[GroundedAction, ...]
    manifest: Optional[Manifest] = None
    base_dir: Optional[FilePath] = None
    # sampler.get_simulator memo; the project and its simulator reference each other
    simulator: Any = field(default=None, init=False, repr=False)

    @property
    def name(self) -> str:
        return self.manifest.name if self.manifest else self.environment.main.name

    @property
    def gamma(self) -> float:
        return self.environment.discount

    @property
    def maps(self) -> Dict[str, LinkedMap]:
        return {name: skill.map for name, skill in self.skills.items()}

    @property
    def observations(self) -> Tuple[str, ...]:
        """All observation symbols in skill then declaration order, deduplicated"""
        seen: Dict[str, None] = {}
        for skill in self.skills.values():
            for symbol in skill.responses:
                seen.setdefault(symbol, None)
        return tuple(seen)

    def action(self, label: str) -> GroundedAction:
        for action in self.actions:
            if action.label == label:
                return action
        raise KeyError(label)

    def skill_actions(self, skill: str) -> Tuple[GroundedAction, ...]:
        return tuple(a for a in self.actions if a.skill == skill)

    def find_action(self, skill: str, bindings: Dict[str, Any]) -> Optional[GroundedAction]:
        for action in self.skill_actions(skill):
            if dict(action.bindings) == bindings:
                return action
        return None

    def reward_range(self) -> float:
        """Spread of special-state rewards, penalties and zero"""
        values = [0.0] + [s.reward for s in self.special_states] + [k.penalty for k in self.skills.values()]
        return max(values) - min(values)


# ================================
# LINKING
# ================================

def _compile(source: str, section: SectionKind, scope: Scope, path: str) -> TypedProgram:
    try:
        return typecheck(parse_program(source, section), scope, path)
    except UndeclaredSymbolError as e:
        if e.observation:
            raise LinkError("UndeclaredObservation", f"'{e.symbol}' is not a declared module response", e.path or path) from None
        raise LinkError("ProgramError", e.message, e.path or path) from None
    except DslError as e:
        where = path if not e.path else (e.path if e.path.startswith(path) else f"{path}:{e.path}")
        raise LinkError("ProgramError", e.message, where) from None


def _build_types(env: EnvironmentSpec) -> Tuple[TypeTable, Layout]:
    names = [e.type_name for e in env.enum_types] + [c.type_name for c in env.compound_types]
    seen = set()
    for name in names:
        if name in seen:
            raise LinkError("DuplicateName", f"type '{name}' declared twice", "EnumTypes/CompoundTypes")
        seen.add(name)
    try:
        types = TypeTable(
            enums={e.type_name: e.values for e in env.enum_types},
            records={c.type_name: [(v.name, v.type) for v in c.variables] for c in env.compound_types},
        )
    except BindError as e:
        kind = "DuplicateName" if "twice" in e.message else "UnresolvedType"
        raise LinkError(kind, e.message, "CompoundTypes") from None
    entries = []
    for i, decl in enumerate(env.state_variables):
        try:
            entries.append((decl.name, types.resolve(decl.type)))
        except BindError as e:
            raise LinkError("UnresolvedType", e.message, f"GlobalVariablesDeclaration[{i}].Type") from None
    return types, Layout(types, entries)


def _domain_values(env: EnvironmentSpec, types: TypeTable) -> Dict[str, Tuple[Tuple[str, Any, List[Any]], ...]]:
    """type text -> ((label, literal, flattened slots), ...)"""
    domains = {}
    for i, domain in enumerate(env.parameter_domains):
        if domain.type in domains:
            raise LinkError("DuplicateName", f"domain for '{domain.type}' declared twice", f"ParameterDomains[{i}]")
        try:
            vtype = types.resolve(domain.type)
        except BindError as e:
            raise LinkError("UnresolvedType", e.message, f"ParameterDomains[{i}].Type") from None
        entries = []
        for j, value in enumerate(domain.values):
            path = f"ParameterDomains[{i}].Values[{j}]"
            try:
                checked = types.check_literal(vtype, value, path)
            except DslError as e:
                raise SchemaError(e.message, e.path or path) from None
            label = domain.names[j] if domain.names else json.dumps(value, separators=(",", ":"))
            entries.append((label, value, types.flatten_literal(vtype, checked)))
        domains[domain.type] = tuple(entries)
    return domains


def _link_map(am: AbstractionMapSpec, skill: SkillModelSpec, types: TypeTable, state: Layout,
              params: Layout) -> LinkedMap:
    name = am.name
    scope = Scope(types=types, state=state, params=params, responses=skill.responses, skill=name)
    local_names = [decl.name for decl in am.locals]
    for i, local_name in enumerate(local_names):
        if local_name in local_names[:i] or local_name in params:
            raise LinkError("DuplicateName", f"local '{local_name}' declared twice or shadows a parameter",
                            f"{name}.LocalVariablesInitialization[{i}]")

    locals_out = []
    for i, decl in enumerate(am.locals):
        path = f"{name}.LocalVariablesInitialization[{i}]"
        if decl.kind == "parameter":
            root = decl.from_parameter.split(".")[0].split("[")[0]
            if root not in params:
                raise LinkError("MissingParameter", f"'{decl.from_parameter}' is not a parameter of {name}",
                                f"{path}.FromGlobalVariable")
            program = _compile(decl.from_parameter, SectionKind.AM_EXPRESSION, scope, f"{path}.FromGlobalVariable")
            vtype = program.expression.type
            initial = None
        else:
            initial = decl.initial_value
            if decl.kind == "feed":
                declared = decl.type or {bool: "bool", int: "int", float: "real", str: "string"}[type(initial)]
            else:
                declared = decl.type
            if declared is not None:
                try:
                    vtype = types.resolve(declared)
                except BindError as e:
                    raise LinkError("UnresolvedType", e.message, f"{path}.Type") from None
                if decl.kind == "feed":
                    try:
                        initial = types.check_literal(vtype, initial, f"{path}.InitialValue")
                    except DslError as e:
                        raise SchemaError(e.message, e.path) from None
                scope.locals[decl.name] = vtype
            program = _compile(decl.code, SectionKind.AM_EXPRESSION, scope, f"{path}.AssignmentCode")
            if declared is None:
                vtype = program.expression.type
        scope.locals[decl.name] = vtype
        locals_out.append(LocalBinding(decl.name, decl.kind, vtype, program, decl.feed_path, initial))

    fields = []
    for i, f in enumerate(am.activation.endpoint.fields):
        fields.append((f.name, _compile(f.code, SectionKind.AM_EXPRESSION, scope,
                                        f"{name}.ModuleActivation.Endpoint.Fields[{i}]")))

    rules = []
    for i, rule in enumerate(am.module_response.rules):
        path = f"{name}.ModuleResponse.ResponseRules[{i}]"
        if rule.response not in skill.responses:
            raise LinkError("UndeclaredObservation", f"'{rule.response}' is not a declared module response of {name}",
                            f"{path}.Response")
        program = _compile(rule.condition, SectionKind.AM_EXPRESSION, scope, f"{path}.ConditionCodeWithLocalVariables")
        if program.expression.type.kind not in ("bool", "any"):
            raise LinkError("ProgramError", "response condition must be bool", path)
        rules.append((rule.response, program))
    last = am.module_response.rules[-1]
    last_expr = parse_program(last.condition, SectionKind.AM_EXPRESSION).expression
    if not (isinstance(last_expr, LiteralNode) and last_expr.value is True):
        raise LinkError("CatchAllMissing", "the final response rule must have condition true",
                        f"{name}.ModuleResponse.ResponseRules[{len(rules) - 1}]")
    return LinkedMap(am, am.activation.endpoint.name, tuple(fields), tuple(locals_out), tuple(rules))


def link_project(env: EnvironmentSpec, gsdls: Sequence[SkillModelSpec], ams: Sequence[AbstractionMapSpec],
                 manifest: Optional[Manifest] = None) -> ProjectModel:
    """Parse and typecheck every program, verify cross-document invariants, ground actions"""
    types, state = _build_types(env)
    env_scope = Scope(types=types, state=state)

    initial = tuple(
        _compile(c.assignment_code, SectionKind.INITIAL_BELIEF, env_scope, f"InitialBeliefStateAssignments[{i}]")
        for i, c in enumerate(env.initial_belief))
    extrinsic = tuple(
        _compile(c.assignment_code, SectionKind.EXTRINSIC, env_scope, f"ExtrinsicChangesDynamicModel[{i}]")
        for i, c in enumerate(env.extrinsic))
    specials = tuple(
        SpecialState(i, s.reward, s.one_time, s.goal,
                     _compile(s.condition, SectionKind.SPECIAL_STATE_CONDITION, env_scope, f"SpecialStates[{i}]"))
        for i, s in enumerate(env.special_states))
    domains = _domain_values(env, types)

    skill_names = [g.name for g in gsdls]
    for i, name in enumerate(skill_names):
        if name in skill_names[:i]:
            raise LinkError("DuplicateName", f"skill '{name}' declared twice", f"{name}.GsdlMain.Name")
    ams_by_name: Dict[str, AbstractionMapSpec] = {}
    for am in ams:
        if am.name in ams_by_name:
            raise LinkError("DuplicateName", f"abstraction map '{am.name}' declared twice", f"{am.name}.GsdlMain.Name")
        if am.name not in skill_names:
            raise LinkError("MissingSkill", f"abstraction map '{am.name}' has no GSDL", f"{am.name}.GsdlMain.Name")
        ams_by_name[am.name] = am

    skills: Dict[str, LinkedSkill] = {}
    actions: List[GroundedAction] = []
    for gsdl in gsdls:
        name = gsdl.name
        if name not in ams_by_name:
            raise LinkError("MissingMap", f"skill '{name}' has no abstraction map", f"{name}.GsdlMain.Name")
        clash = [r for r in gsdl.responses if r in types.symbols]
        if clash:
            raise LinkError("DuplicateName", f"responses {clash} clash with enum symbols", f"{name}.ModuleResponses")
        param_entries = []
        for i, p in enumerate(gsdl.parameters):
            try:
                param_entries.append((p.name, types.resolve(p.type)))
            except BindError as e:
                raise LinkError("UnresolvedType", e.message, f"{name}.GlobalVariableModuleParameters[{i}].Type") from None
        params = Layout(types, param_entries)
        scope = Scope(types=types, state=state, params=params, responses=gsdl.responses, skill=name)
        preconditions = tuple(
            _compile(c.assignment_code, SectionKind.PRECONDITION, scope,
                     f"{name}.Preconditions.GlobalVariablePreconditionAssignments[{i}]")
            for i, c in enumerate(gsdl.preconditions.assignments))
        dynamics = tuple(
            _compile(c.assignment_code, SectionKind.DYNAMICS, scope, f"{name}.NextStateAssignments[{i}]")
            for i, c in enumerate(gsdl.dynamics))
        linked_map = _link_map(ams_by_name[name], gsdl, types, state, params)
        skills[name] = LinkedSkill(gsdl, params, gsdl.responses, preconditions, dynamics,
                                   gsdl.preconditions.penalty, linked_map)

        per_param = []
        for i, p in enumerate(gsdl.parameters):
            if not domains.get(p.type):
                raise LinkError("EmptyParameterDomain", f"no values for parameter type '{p.type}'",
                                f"{name}.GlobalVariableModuleParameters[{i}]")
            per_param.append(domains[p.type])
        for combo in itertools.product(*per_param):
            slots: List[Any] = []
            for _, _, flat in combo:
                slots.extend(flat)
            actions.append(GroundedAction(
                id=len(actions),
                skill=name,
                bindings=tuple((p.name, value) for p, (_, value, _) in zip(gsdl.parameters, combo)),
                labels=tuple(label for label, _, _ in combo),
                param_values=tuple(slots),
            ))

    project = ProjectModel(env, types, state, initial, extrinsic, specials, skills, tuple(actions), manifest)
    if manifest is not None:
        _check_manifest_tables(project, manifest)
    logger.debug("Project linked", skills=len(skills), actions=len(actions), state_slots=state.size)
    return project


def _check_manifest_tables(project: ProjectModel, manifest: Manifest):
    for skill, table in manifest.skill_responses.items():
        if skill not in project.skills:
            raise LinkError("ManifestError", f"unknown skill '{skill}'", f"SkillResponses.{skill}")
        for symbol in table:
            if symbol not in project.skills[skill].responses:
                raise LinkError("UndeclaredObservation", f"'{symbol}' is not a response of {skill}",
                                f"SkillResponses.{skill}.{symbol}")
    for world_name, world in manifest.worlds.items():
        for skill, rows in world.overrides.items():
            if skill not in project.skills:
                raise LinkError("ManifestError", f"unknown skill '{skill}'", f"Worlds.{world_name}.Overrides.{skill}")
            for i, row in enumerate(rows):
                for j, outcome in enumerate(row.outcomes):
                    if outcome.response not in project.skills[skill].responses:
                        raise LinkError("UndeclaredObservation", f"'{outcome.response}' is not a response of {skill}",
                                        f"Worlds.{world_name}.Overrides.{skill}[{i}].Outcomes[{j}].Response")


def load_project(manifest_path: Union[str, FilePath]) -> ProjectModel:
    """Load a manifest and every document it references, then link"""
    manifest_path = FilePath(manifest_path)
    manifest = load_manifest(manifest_path)
    base = manifest_path.parent

    def read(rel: str, what: str) -> FilePath:
        path = base / rel
        if not path.is_file():
            raise LinkError("ManifestError", f"{what} file not found: {rel}", str(manifest_path))
        return path

    env = load_environment(read(manifest.environment, "environment"))
    gsdls = [load_gsdl(read(pair.gsdl, "GSDL")) for pair in manifest.skills]
    ams = [load_am(read(pair.am, "AM")) for pair in manifest.skills]
    for pair, gsdl, am in zip(manifest.skills, gsdls, ams):
        if gsdl.name != am.name:
            raise LinkError("NameMismatch", f"GSDL '{gsdl.name}' paired with AM '{am.name}'", pair.am)
    project = link_project(env, gsdls, ams, manifest)
    project.base_dir = base
    logger.info("Project loaded", project=project.name, actions=len(project.actions))
    return project
