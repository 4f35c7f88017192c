"""
Front-end for the embedded generative-model language
Lexes, parses, pretty-prints and type-checks program sources found in
Environment, GSDL and AM documents.

The surface syntax is C-like so documentation snippets read verbatim:

    __meetPrecondition = oDesiredLocation.discrete != state.robotLocation.discrete;
    int i = AOS.UniformInt(0, 8);
    while (state_.board[i] != eEmpty) i = AOS.UniformInt(0, 8);

The full grammar lives in docs/grammar.md.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterator, List, Optional, Sequence, Tuple, Union

from errors import BindError, ProgramSyntaxError, ProgramTypeError, UndeclaredSymbolError, WriteError


# ================================
# VALUE TYPES
# ================================

SCALAR_KINDS = ("bool", "int", "real", "string", "enum", "any")

_PRIMITIVE_ALIASES = {
    "bool": "bool",
    "int": "int",
    "real": "real",
    "float": "real",
    "double": "real",
    "string": "string",
}


@dataclass(frozen=True)
class ValueType:
    """Type of a state variable, parameter, local or expression"""
    kind: str
    name: str = ""
    elem: Optional["ValueType"] = None
    length: int = 0

    @property
    def is_scalar(self) -> bool:
        return self.kind in SCALAR_KINDS

    @property
    def is_numeric(self) -> bool:
        return self.kind in ("int", "real", "any")

    def __str__(self) -> str:
        if self.kind == "array":
            return f"{self.elem}[{self.length}]"
        if self.kind in ("enum", "record"):
            return self.name
        return self.kind


BOOL = ValueType("bool")
INT = ValueType("int")
REAL = ValueType("real")
STRING = ValueType("string")
ANY = ValueType("any")

_ARRAY_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*(?:\[\d+\])*)\s*\[\s*(\d+)\s*\]\s*$")


class TypeTable:
    """Enum and record declarations of one environment"""

    def __init__(
        self,
        enums: Optional[Dict[str, Sequence[str]]] = None,
        records: Optional[Dict[str, Sequence[Tuple[str, str]]]] = None,
    ):
        self.enums: Dict[str, Tuple[str, ...]] = {k: tuple(v) for k, v in (enums or {}).items()}
        self.symbols: Dict[str, str] = {}
        for enum_name, symbols in self.enums.items():
            if not symbols:
                raise BindError(f"enum '{enum_name}' declares no symbols")
            for symbol in symbols:
                if symbol in self.symbols:
                    raise BindError(f"enum symbol '{symbol}' declared twice")
                self.symbols[symbol] = enum_name
        raw_records = {k: tuple(v) for k, v in (records or {}).items()}
        clash = set(raw_records) & set(self.enums)
        if clash:
            raise BindError(f"type names declared twice: {sorted(clash)}")
        self._raw_records = raw_records
        self.records: Dict[str, Tuple[Tuple[str, ValueType], ...]] = {}
        for name in raw_records:
            self._resolve_record(name, ())

    def _resolve_record(self, name: str, stack: Tuple[str, ...]) -> Tuple[Tuple[str, ValueType], ...]:
        if name in self.records:
            return self.records[name]
        if name in stack:
            raise BindError(f"record '{name}' contains itself")
        fields = []
        seen = set()
        for field_name, type_text in self._raw_records[name]:
            if field_name in seen:
                raise BindError(f"record '{name}' declares field '{field_name}' twice")
            seen.add(field_name)
            fields.append((field_name, self._resolve(type_text, stack + (name,))))
        self.records[name] = tuple(fields)
        return self.records[name]

    def _resolve(self, text: str, stack: Tuple[str, ...]) -> ValueType:
        text = text.strip()
        match = _ARRAY_RE.match(text)
        if match:
            length = int(match.group(2))
            if length < 1:
                raise BindError(f"array length must be >= 1 in '{text}'")
            return ValueType("array", elem=self._resolve(match.group(1), stack), length=length)
        if text in _PRIMITIVE_ALIASES:
            return ValueType(_PRIMITIVE_ALIASES[text])
        if text in self.enums:
            return ValueType("enum", name=text)
        if text in self._raw_records:
            self._resolve_record(text, stack)
            return ValueType("record", name=text)
        raise BindError(f"unresolved type '{text}'")

    def resolve(self, text: str) -> ValueType:
        """Resolve a type name such as `int`, `tLocation` or `tCell[9]`"""
        return self._resolve(text, ())

    def fields(self, vtype: ValueType) -> Tuple[Tuple[str, ValueType], ...]:
        return self.records[vtype.name]

    def size(self, vtype: ValueType) -> int:
        """Number of scalar slots a value of this type occupies"""
        if vtype.kind == "record":
            return sum(self.size(t) for _, t in self.fields(vtype))
        if vtype.kind == "array":
            return vtype.length * self.size(vtype.elem)
        return 1

    def field_offset(self, vtype: ValueType, field_name: str) -> Tuple[int, ValueType]:
        offset = 0
        for name, ftype in self.fields(vtype):
            if name == field_name:
                return offset, ftype
            offset += self.size(ftype)
        raise KeyError(field_name)

    def default(self, vtype: ValueType):
        """Default scalar value: false, 0, 0.0, "" or the first enum symbol"""
        if vtype.kind == "bool":
            return False
        if vtype.kind == "int":
            return 0
        if vtype.kind == "real":
            return 0.0
        if vtype.kind == "string":
            return ""
        if vtype.kind == "enum":
            return self.enums[vtype.name][0]
        raise ValueError(f"no scalar default for {vtype}")

    def leaves(self, vtype: ValueType, prefix: str) -> Iterator[Tuple[str, ValueType]]:
        """Flatten a value into (path, scalar type) pairs in slot order"""
        if vtype.kind == "record":
            for name, ftype in self.fields(vtype):
                yield from self.leaves(ftype, f"{prefix}.{name}")
        elif vtype.kind == "array":
            for i in range(vtype.length):
                yield from self.leaves(vtype.elem, f"{prefix}[{i}]")
        else:
            yield prefix, vtype

    def check_literal(self, vtype: ValueType, value, path: str = "") -> object:
        """Validate a JSON literal against a type; returns the normalised value"""
        if vtype.kind == "bool":
            if isinstance(value, bool):
                return value
        elif vtype.kind == "int":
            if isinstance(value, int) and not isinstance(value, bool):
                return value
        elif vtype.kind == "real":
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                return float(value)
        elif vtype.kind == "string":
            if isinstance(value, str):
                return value
        elif vtype.kind == "enum":
            if isinstance(value, str) and value in self.enums[vtype.name]:
                return value
        elif vtype.kind == "record":
            if isinstance(value, dict):
                names = [n for n, _ in self.fields(vtype)]
                unknown = set(value) - set(names)
                if unknown:
                    raise ProgramTypeError(f"unknown fields {sorted(unknown)} for {vtype}", path)
                return {
                    n: self.check_literal(t, value[n], f"{path}.{n}") if n in value else None
                    for n, t in self.fields(vtype)
                }
        elif vtype.kind == "array":
            if isinstance(value, list) and len(value) == vtype.length:
                return [self.check_literal(vtype.elem, v, f"{path}[{i}]") for i, v in enumerate(value)]
        raise ProgramTypeError(f"literal {value!r} does not match type {vtype}", path)

    def flatten_literal(self, vtype: ValueType, value) -> List[object]:
        """Scalar slot values of a checked literal; missing record fields take defaults"""
        if vtype.kind == "record":
            out: List[object] = []
            for name, ftype in self.fields(vtype):
                sub = value.get(name) if isinstance(value, dict) else None
                if sub is None:
                    out.extend(self.default(t) for _, t in self.leaves(ftype, ""))
                else:
                    out.extend(self.flatten_literal(ftype, sub))
            return out
        if vtype.kind == "array":
            out = []
            for item in value:
                out.extend(self.flatten_literal(vtype.elem, item))
            return out
        return [value]


class Layout:
    """Slot layout of a group of named variables (state variables or skill parameters)"""

    def __init__(self, types: TypeTable, entries: Sequence[Tuple[str, ValueType]]):
        self.types = types
        self.entries: Tuple[Tuple[str, ValueType], ...] = tuple(entries)
        self.offsets: Dict[str, int] = {}
        self.var_types: Dict[str, ValueType] = {}
        self.paths: List[str] = []
        self.slot_types: List[ValueType] = []
        offset = 0
        for name, vtype in self.entries:
            if name in self.offsets:
                raise BindError(f"variable '{name}' declared twice")
            self.offsets[name] = offset
            self.var_types[name] = vtype
            for path, leaf in types.leaves(vtype, name):
                self.paths.append(path)
                self.slot_types.append(leaf)
            offset += types.size(vtype)
        self.size = offset
        self.slot_of: Dict[str, int] = {p: i for i, p in enumerate(self.paths)}

    def __contains__(self, name: str) -> bool:
        return name in self.offsets

    def defaults(self) -> Tuple[object, ...]:
        return tuple(self.types.default(t) for t in self.slot_types)


# ================================
# SECTIONS AND PERMISSIONS
# ================================

class SectionKind(Enum):
    """Document section a program belongs to"""
    INITIAL_BELIEF = "InitialBelief"
    EXTRINSIC = "Extrinsic"
    PRECONDITION = "Precondition"
    DYNAMICS = "Dynamics"
    SPECIAL_STATE_CONDITION = "SpecialStateCondition"
    AM_EXPRESSION = "AmExpression"


class Binding(Enum):
    """Binding class of a resolved variable path"""
    STATE = "state"
    STATE_ = "state_"
    STATE__ = "state__"
    PARAMETER = "parameter"
    MEET = "__meetPrecondition"
    REWARD = "__reward"
    RESPONSE = "__moduleResponse"
    LOCAL = "local"
    INPUT = "__input"


EXPRESSION_SECTIONS = frozenset({SectionKind.SPECIAL_STATE_CONDITION, SectionKind.AM_EXPRESSION})

# section -> (readable, writable)
PERMISSIONS: Dict[SectionKind, Tuple[FrozenSet[Binding], FrozenSet[Binding]]] = {
    SectionKind.INITIAL_BELIEF: (
        frozenset({Binding.STATE, Binding.LOCAL}),
        frozenset({Binding.STATE, Binding.LOCAL}),
    ),
    SectionKind.EXTRINSIC: (
        frozenset({Binding.STATE, Binding.STATE_, Binding.LOCAL}),
        frozenset({Binding.STATE_, Binding.LOCAL}),
    ),
    SectionKind.PRECONDITION: (
        frozenset({Binding.STATE, Binding.STATE_, Binding.PARAMETER, Binding.MEET, Binding.LOCAL}),
        frozenset({Binding.MEET, Binding.LOCAL}),
    ),
    SectionKind.DYNAMICS: (
        frozenset({
            Binding.STATE, Binding.STATE_, Binding.STATE__, Binding.PARAMETER,
            Binding.MEET, Binding.REWARD, Binding.RESPONSE, Binding.LOCAL,
        }),
        frozenset({Binding.STATE__, Binding.REWARD, Binding.RESPONSE, Binding.LOCAL}),
    ),
    SectionKind.SPECIAL_STATE_CONDITION: (
        frozenset({Binding.STATE, Binding.STATE__}),
        frozenset(),
    ),
    SectionKind.AM_EXPRESSION: (
        frozenset({Binding.LOCAL, Binding.PARAMETER, Binding.INPUT}),
        frozenset(),
    ),
}

_STATE_COPIES = {"state": Binding.STATE, "state_": Binding.STATE_, "state__": Binding.STATE__}
_SPECIALS = {"__meetPrecondition": Binding.MEET, "__reward": Binding.REWARD, "__moduleResponse": Binding.RESPONSE}


# ================================
# LEXER
# ================================

KEYWORDS = {"if", "else", "while", "true", "false", "True", "False", "and", "or", "not"}
TYPE_KEYWORDS = {"int", "real", "bool", "string", "float", "double"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<real>\d+\.\d*(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+|\.\d+(?:[eE][+-]?\d+)?)
  | (?P<int>\d+)
  | (?P<string>"(?:[^"\\\n]|\\.)*"|'(?:[^'\\\n]|\\.)*')
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>&&|\|\||==|!=|<=|>=|[-+*/%<>!?:=;(){}\[\],.])
    """,
    re.VERBOSE | re.DOTALL,
)

_ESCAPES = {"n": "\n", "t": "\t", "\\": "\\", '"': '"', "'": "'"}


@dataclass(frozen=True)
class Token:
    kind: str  # int, real, string, ident, keyword, op, eof
    text: str
    line: int
    column: int
    value: object = None


def tokenize(source: str) -> List[Token]:
    """Split a program source into tokens; positions are 1-based"""
    tokens: List[Token] = []
    pos = 0
    line = 1
    line_start = 0
    while pos < len(source):
        match = _TOKEN_RE.match(source, pos)
        if not match:
            raise ProgramSyntaxError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1)
        kind = match.lastgroup
        text = match.group()
        column = pos - line_start + 1
        if kind == "int":
            tokens.append(Token("int", text, line, column, int(text)))
        elif kind == "real":
            tokens.append(Token("real", text, line, column, float(text)))
        elif kind == "string":
            body = text[1:-1]
            value = re.sub(r"\\(.)", lambda m: _ESCAPES.get(m.group(1), m.group(1)), body)
            tokens.append(Token("string", text, line, column, value))
        elif kind == "ident":
            tokens.append(Token("keyword" if text in KEYWORDS else "ident", text, line, column))
        elif kind == "op":
            tokens.append(Token("op", text, line, column))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = pos + text.rfind("\n") + 1
        pos = match.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# ================================
# AST
# ================================

@dataclass(frozen=True)
class Node:
    line: int = field(default=0, compare=False, kw_only=True)
    column: int = field(default=0, compare=False, kw_only=True)


@dataclass(frozen=True)
class Literal(Node):
    value: object
    kind: str  # bool, int, real, string


@dataclass(frozen=True)
class FieldAccess(Node):
    name: str


@dataclass(frozen=True)
class IndexAccess(Node):
    index: "Expr"


@dataclass(frozen=True)
class Path(Node):
    """Variable path `root.field[index]...`; a bare root may also be an enum symbol"""
    root: str
    accessors: Tuple[Union[FieldAccess, IndexAccess], ...] = ()

    @property
    def dotted(self) -> str:
        out = self.root
        for acc in self.accessors:
            out += f".{acc.name}" if isinstance(acc, FieldAccess) else "[...]"
        return out


@dataclass(frozen=True)
class Unary(Node):
    op: str
    operand: "Expr"


@dataclass(frozen=True)
class Binary(Node):
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Ternary(Node):
    cond: "Expr"
    then: "Expr"
    otherwise: "Expr"


@dataclass(frozen=True)
class Call(Node):
    name: str
    args: Tuple["Expr", ...]


Expr = Union[Literal, Path, Unary, Binary, Ternary, Call]


@dataclass(frozen=True)
class Assign(Node):
    target: Path
    value: Expr


@dataclass(frozen=True)
class Declare(Node):
    type_name: str
    name: str
    value: Optional[Expr] = None


@dataclass(frozen=True)
class If(Node):
    cond: Expr
    then: "Stmt"
    otherwise: Optional["Stmt"] = None


@dataclass(frozen=True)
class Block(Node):
    statements: Tuple["Stmt", ...]


@dataclass(frozen=True)
class While(Node):
    cond: Expr
    body: "Stmt"


Stmt = Union[Assign, Declare, If, Block, While]


@dataclass(frozen=True)
class Program:
    """Parsed program: statements, or a single expression for expression sections"""
    section: SectionKind
    statements: Tuple[Stmt, ...] = ()
    expression: Optional[Expr] = None
    source: str = field(default="", compare=False)


# ================================
# PARSER
# ================================

_OP_ALIASES = {"and": "&&", "or": "||", "not": "!"}
_BINARY_LEVELS = (
    ("||",),
    ("&&",),
    ("==", "!="),
    ("<", "<=", ">", ">="),
    ("+", "-"),
    ("*", "/", "%"),
)


class Parser:
    """Recursive-descent parser over a token list"""

    def __init__(self, tokens: List[Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def _advance(self) -> Token:
        token = self.tokens[self.pos]
        if token.kind != "eof":
            self.pos += 1
        return token

    def _is_op(self, *ops: str) -> bool:
        tok = self.current
        if tok.kind == "op" and tok.text in ops:
            return True
        return tok.kind == "keyword" and _OP_ALIASES.get(tok.text) in ops

    def _op_text(self, tok: Token) -> str:
        return _OP_ALIASES.get(tok.text, tok.text)

    def _fail(self, expected: Sequence[str]):
        tok = self.current
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise ProgramSyntaxError(f"unexpected {found}", tok.line, tok.column, expected)

    def _expect(self, op: str) -> Token:
        if self.current.kind == "op" and self.current.text == op:
            return self._advance()
        self._fail([op])

    def _expect_ident(self) -> Token:
        if self.current.kind == "ident":
            return self._advance()
        self._fail(["identifier"])

    # statements

    def parse_statements(self) -> Tuple[Stmt, ...]:
        statements = []
        while self.current.kind != "eof":
            statements.append(self.parse_statement())
        return tuple(statements)

    def parse_statement(self) -> Stmt:
        tok = self.current
        pos = {"line": tok.line, "column": tok.column}
        if tok.kind == "op" and tok.text == "{":
            self._advance()
            body = []
            while not (self.current.kind == "op" and self.current.text == "}"):
                if self.current.kind == "eof":
                    self._fail(["}"])
                body.append(self.parse_statement())
            self._advance()
            return Block(tuple(body), **pos)
        if tok.kind == "op" and tok.text == ";":
            self._advance()
            return Block((), **pos)
        if tok.kind == "keyword" and tok.text == "if":
            self._advance()
            self._expect("(")
            cond = self.parse_expression()
            self._expect(")")
            then = self.parse_statement()
            otherwise = None
            if self.current.kind == "keyword" and self.current.text == "else":
                self._advance()
                otherwise = self.parse_statement()
            return If(cond, then, otherwise, **pos)
        if tok.kind == "keyword" and tok.text == "while":
            self._advance()
            self._expect("(")
            cond = self.parse_expression()
            self._expect(")")
            return While(cond, self.parse_statement(), **pos)
        if tok.kind == "ident" and tok.text in TYPE_KEYWORDS and self.tokens[self.pos + 1].kind == "ident":
            self._advance()
            name = self._expect_ident().text
            value = None
            if self.current.kind == "op" and self.current.text == "=":
                self._advance()
                value = self.parse_expression()
            self._expect(";")
            return Declare(tok.text, name, value, **pos)
        if tok.kind == "ident":
            target = self.parse_path()
            self._expect("=")
            value = self.parse_expression()
            self._expect(";")
            return Assign(target, value, **pos)
        self._fail(["statement", "{", "if", "while", "identifier", ";"])

    # expressions

    def parse_expression(self) -> Expr:
        tok = self.current
        cond = self._parse_binary(0)
        if self._is_op("?"):
            self._advance()
            then = self.parse_expression()
            self._expect(":")
            otherwise = self.parse_expression()
            return Ternary(cond, then, otherwise, line=tok.line, column=tok.column)
        return cond

    def _parse_binary(self, level: int) -> Expr:
        if level == len(_BINARY_LEVELS):
            return self._parse_unary()
        left = self._parse_binary(level + 1)
        while self._is_op(*_BINARY_LEVELS[level]):
            tok = self._advance()
            right = self._parse_binary(level + 1)
            left = Binary(self._op_text(tok), left, right, line=tok.line, column=tok.column)
        return left

    def _parse_unary(self) -> Expr:
        if self._is_op("!", "-", "+"):
            tok = self._advance()
            operand = self._parse_unary()
            op = self._op_text(tok)
            if op == "+":
                return operand
            return Unary(op, operand, line=tok.line, column=tok.column)
        return self._parse_primary()

    def _parse_primary(self) -> Expr:
        tok = self.current
        pos = {"line": tok.line, "column": tok.column}
        if tok.kind in ("int", "real", "string"):
            self._advance()
            return Literal(tok.value, tok.kind, **pos)
        if tok.kind == "keyword" and tok.text in ("true", "True", "false", "False"):
            self._advance()
            return Literal(tok.text in ("true", "True"), "bool", **pos)
        if tok.kind == "op" and tok.text == "(":
            self._advance()
            inner = self.parse_expression()
            self._expect(")")
            return inner
        if tok.kind == "ident":
            path = self.parse_path()
            if self.current.kind == "op" and self.current.text == "(":
                if any(isinstance(a, IndexAccess) for a in path.accessors):
                    self._fail(["operator"])
                name = path.root + "".join(f".{a.name}" for a in path.accessors)
                self._advance()
                args = []
                if not (self.current.kind == "op" and self.current.text == ")"):
                    args.append(self.parse_expression())
                    while self.current.kind == "op" and self.current.text == ",":
                        self._advance()
                        args.append(self.parse_expression())
                self._expect(")")
                return Call(name, tuple(args), **pos)
            return path
        self._fail(["literal", "identifier", "("])

    def parse_path(self) -> Path:
        tok = self._expect_ident()
        accessors = []
        while self.current.kind == "op" and self.current.text in (".", "["):
            acc_tok = self._advance()
            if acc_tok.text == ".":
                accessors.append(FieldAccess(self._expect_ident().text, line=acc_tok.line, column=acc_tok.column))
            else:
                index = self.parse_expression()
                self._expect("]")
                accessors.append(IndexAccess(index, line=acc_tok.line, column=acc_tok.column))
        return Path(tok.text, tuple(accessors), line=tok.line, column=tok.column)


def parse_program(source: str, section: SectionKind) -> Program:
    """Parse a program source for the given section"""
    parser = Parser(tokenize(source))
    if section in EXPRESSION_SECTIONS:
        expression = parser.parse_expression()
        if parser.current.kind == "op" and parser.current.text == ";":
            parser._advance()
        if parser.current.kind != "eof":
            parser._fail(["end of input"])
        return Program(section, expression=expression, source=source)
    return Program(section, statements=parser.parse_statements(), source=source)


# ================================
# PRINTER
# ================================

def _literal_text(lit: Literal) -> str:
    if lit.kind == "bool":
        return "true" if lit.value else "false"
    if lit.kind == "string":
        escaped = lit.value.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t")
        return f'"{escaped}"'
    if lit.kind == "real":
        return repr(float(lit.value))
    return str(lit.value)


def print_expression(expr: Expr) -> str:
    if isinstance(expr, Literal):
        return _literal_text(expr)
    if isinstance(expr, Path):
        out = expr.root
        for acc in expr.accessors:
            out += f".{acc.name}" if isinstance(acc, FieldAccess) else f"[{print_expression(acc.index)}]"
        return out
    if isinstance(expr, Unary):
        return f"{expr.op}({print_expression(expr.operand)})"
    if isinstance(expr, Binary):
        return f"({print_expression(expr.left)} {expr.op} {print_expression(expr.right)})"
    if isinstance(expr, Ternary):
        return (
            f"({print_expression(expr.cond)} ? {print_expression(expr.then)}"
            f" : {print_expression(expr.otherwise)})"
        )
    if isinstance(expr, Call):
        return f"{expr.name}({', '.join(print_expression(a) for a in expr.args)})"
    raise TypeError(f"not an expression: {expr!r}")


def _print_statement(stmt: Stmt, indent: int) -> List[str]:
    pad = "    " * indent
    if isinstance(stmt, Assign):
        return [f"{pad}{print_expression(stmt.target)} = {print_expression(stmt.value)};"]
    if isinstance(stmt, Declare):
        if stmt.value is None:
            return [f"{pad}{stmt.type_name} {stmt.name};"]
        return [f"{pad}{stmt.type_name} {stmt.name} = {print_expression(stmt.value)};"]
    if isinstance(stmt, Block):
        lines = [f"{pad}{{"]
        for inner in stmt.statements:
            lines.extend(_print_statement(inner, indent + 1))
        return lines + [f"{pad}}}"]
    if isinstance(stmt, If):
        lines = [f"{pad}if ({print_expression(stmt.cond)})"]
        lines.extend(_print_statement(stmt.then, indent + 1))
        if stmt.otherwise is not None:
            lines.append(f"{pad}else")
            lines.extend(_print_statement(stmt.otherwise, indent + 1))
        return lines
    if isinstance(stmt, While):
        return [f"{pad}while ({print_expression(stmt.cond)})"] + _print_statement(stmt.body, indent + 1)
    raise TypeError(f"not a statement: {stmt!r}")


def print_program(program: Program) -> str:
    """Render a program back to source; the output reparses to an equal tree"""
    if program.expression is not None:
        return print_expression(program.expression)
    lines: List[str] = []
    for stmt in program.statements:
        lines.extend(_print_statement(stmt, 0))
    return "\n".join(lines)


# ================================
# TYPED PROGRAMS
# ================================

@dataclass(frozen=True, eq=False)
class TConst:
    value: object
    type: ValueType


@dataclass(frozen=True, eq=False)
class TRef:
    """Resolved variable reference

    copy selects the state copy (0, 1, 2) for state bindings; base is the
    static slot offset into the state, parameter or temporary vector; dynamic
    holds (index expression, stride, length) for non-constant array indices;
    name is used by locals, input fields and specials.
    """
    binding: Binding
    type: ValueType
    copy: int = -1
    base: int = 0
    dynamic: Tuple[Tuple[object, int, int], ...] = ()
    name: str = ""
    temp: bool = False
    where: str = ""


@dataclass(frozen=True, eq=False)
class TUnary:
    op: str
    operand: object
    type: ValueType
    where: str = ""


@dataclass(frozen=True, eq=False)
class TBinary:
    op: str
    left: object
    right: object
    type: ValueType
    where: str = ""


@dataclass(frozen=True, eq=False)
class TCond:
    cond: object
    then: object
    otherwise: object
    type: ValueType


@dataclass(frozen=True, eq=False)
class TCall:
    name: str
    args: Tuple[object, ...]
    type: ValueType
    where: str = ""


@dataclass(frozen=True, eq=False)
class TAssign:
    target: TRef
    value: object
    widen: bool = False
    where: str = ""


@dataclass(frozen=True, eq=False)
class TIf:
    cond: object
    then: Tuple[object, ...]
    otherwise: Tuple[object, ...]


@dataclass(frozen=True, eq=False)
class TWhile:
    cond: object
    body: Tuple[object, ...]
    where: str = ""


@dataclass(frozen=True, eq=False)
class TypedProgram:
    """Checked program ready for sampling or enumeration semantics"""
    program: Program
    section: SectionKind
    origin: str
    statements: Tuple[object, ...] = ()
    expression: Optional[object] = None
    temp_types: Tuple[ValueType, ...] = ()
    reads: FrozenSet[Binding] = frozenset()
    writes: FrozenSet[Binding] = frozenset()

    @property
    def temp_count(self) -> int:
        return len(self.temp_types)

    @property
    def is_empty(self) -> bool:
        return not self.statements and self.expression is None


@dataclass
class Scope:
    """Names visible to the typechecker"""
    types: TypeTable
    state: Layout
    params: Optional[Layout] = None
    responses: Tuple[str, ...] = ()
    skill: str = ""
    locals: Dict[str, ValueType] = field(default_factory=dict)

    @property
    def response_type(self) -> ValueType:
        return ValueType("enum", name=f"{self.skill}:responses")


BUILTINS = {
    "AOS.Bernoulli", "AOS.UniformInt", "AOS.UniformReal",
    "sqrt", "pow", "abs", "min", "max", "floor", "contains",
}
RANDOM_BUILTINS = frozenset({"AOS.Bernoulli", "AOS.UniformInt", "AOS.UniformReal"})


def _assignable(target: ValueType, value: ValueType) -> bool:
    if value.kind == "any" or target == value:
        return True
    return target.kind == "real" and value.kind == "int"


class _Checker:
    def __init__(self, scope: Scope, section: SectionKind, origin: str):
        self.scope = scope
        self.section = section
        self.origin = origin
        self.readable, self.writable = PERMISSIONS[section]
        self.temps: Dict[str, int] = {}
        self.temp_types: List[ValueType] = []
        self.reads: set = set()
        self.writes: set = set()

    def where(self, node: Node) -> str:
        return f"{self.origin}:{node.line}:{node.column}"

    # paths

    def _resolve_root(self, path: Path) -> Tuple[Binding, Optional[ValueType], int, bool]:
        root = path.root
        if root in _STATE_COPIES:
            return _STATE_COPIES[root], None, 0, False
        if root in _SPECIALS:
            binding = _SPECIALS[root]
            vtype = {Binding.MEET: BOOL, Binding.REWARD: REAL, Binding.RESPONSE: self.scope.response_type}[binding]
            return binding, vtype, 0, False
        if root == "__input":
            return Binding.INPUT, ANY, 0, False
        if root in self.temps:
            return Binding.LOCAL, self.temp_types[self.temps[root]], self.temps[root], True
        if self.section == SectionKind.AM_EXPRESSION and root in self.scope.locals:
            return Binding.LOCAL, self.scope.locals[root], 0, False
        if self.scope.params is not None and root in self.scope.params:
            return Binding.PARAMETER, self.scope.params.var_types[root], self.scope.params.offsets[root], False
        raise UndeclaredSymbolError(root, self.where(path))

    def resolve_path(self, path: Path, write: bool) -> TRef:
        binding, vtype, base, temp = self._resolve_root(path)
        allowed = self.writable if write else self.readable
        if binding not in allowed:
            verb = "written" if write else "read"
            err = WriteError if write else BindError
            raise err(f"'{path.root}' ({binding.value}) cannot be {verb} in {self.section.value}", self.where(path))
        (self.writes if write else self.reads).add(binding)
        accessors = list(path.accessors)
        if binding in (Binding.STATE, Binding.STATE_, Binding.STATE__):
            if not accessors or not isinstance(accessors[0], FieldAccess):
                raise BindError(f"'{path.root}' must be followed by a state variable name", self.where(path))
            first = accessors.pop(0)
            layout = self.scope.state
            if first.name not in layout:
                raise BindError(f"unknown state variable '{first.name}'", self.where(path))
            vtype = layout.var_types[first.name]
            base = layout.offsets[first.name]
        if binding == Binding.INPUT:
            names = []
            for acc in accessors:
                if not isinstance(acc, FieldAccess):
                    raise BindError("input fields are addressed by name", self.where(path))
                names.append(acc.name)
            return TRef(binding, ANY, name=".".join(names), where=self.where(path))
        if binding == Binding.LOCAL and not temp:
            if accessors:
                raise BindError(f"local '{path.root}' is scalar", self.where(path))
            return TRef(binding, vtype, name=path.root, where=self.where(path))
        types = self.scope.types
        dynamic = []
        for acc in accessors:
            if isinstance(acc, FieldAccess):
                if vtype.kind != "record":
                    raise BindError(f"'{acc.name}' accessed on non-record {vtype}", self.where(acc))
                try:
                    offset, vtype = types.field_offset(vtype, acc.name)
                except KeyError:
                    raise BindError(f"record {vtype} has no field '{acc.name}'", self.where(acc)) from None
                base += offset
            else:
                if vtype.kind != "array":
                    raise BindError(f"index applied to non-array {vtype}", self.where(acc))
                index = self.check_expr(acc.index)
                if index.type.kind != "int":
                    raise ProgramTypeError(f"array index must be int, got {index.type}", self.where(acc))
                stride = types.size(vtype.elem)
                if isinstance(index, TConst):
                    if not 0 <= index.value < vtype.length:
                        raise BindError(f"index {index.value} out of range for {vtype}", self.where(acc))
                    base += index.value * stride
                else:
                    dynamic.append((index, stride, vtype.length))
                vtype = vtype.elem
        if not vtype.is_scalar:
            raise ProgramTypeError(f"compound value '{path.dotted}' of type {vtype} used as scalar", self.where(path))
        copy = {Binding.STATE: 0, Binding.STATE_: 1, Binding.STATE__: 2}.get(binding, -1)
        if self.section == SectionKind.SPECIAL_STATE_CONDITION and copy >= 0:
            copy = 2
        return TRef(binding, vtype, copy=copy, base=base, dynamic=tuple(dynamic),
                    name=path.root, temp=temp, where=self.where(path))

    # expressions

    def check_expr(self, expr: Expr):
        if isinstance(expr, Literal):
            return TConst(expr.value, ValueType(expr.kind))
        if isinstance(expr, Path):
            if not expr.accessors and self._is_symbol(expr.root):
                return self._symbol(expr.root)
            return self.resolve_path(expr, write=False)
        if isinstance(expr, Unary):
            operand = self.check_expr(expr.operand)
            if expr.op == "!":
                self._require(operand.type, ("bool",), expr, "operand of '!'")
                return TUnary("!", operand, BOOL, self.where(expr))
            self._require(operand.type, ("int", "real"), expr, "operand of unary '-'")
            if isinstance(operand, TConst):
                return TConst(-operand.value, operand.type)
            return TUnary("-", operand, operand.type if operand.type.kind != "any" else REAL, self.where(expr))
        if isinstance(expr, Binary):
            return self._check_binary(expr)
        if isinstance(expr, Ternary):
            cond = self.check_expr(expr.cond)
            self._require(cond.type, ("bool",), expr, "ternary condition")
            then = self.check_expr(expr.then)
            otherwise = self.check_expr(expr.otherwise)
            return TCond(cond, then, otherwise, self._unify(then.type, otherwise.type, expr))
        if isinstance(expr, Call):
            return self._check_call(expr)
        raise ProgramTypeError(f"unsupported expression {expr!r}", self.origin)

    def _is_symbol(self, name: str) -> bool:
        if name in self.temps or name in _STATE_COPIES or name in _SPECIALS or name == "__input":
            return False
        if self.section == SectionKind.AM_EXPRESSION and name in self.scope.locals:
            return False
        if self.scope.params is not None and name in self.scope.params:
            return False
        return name in self.scope.types.symbols or name in self.scope.responses

    def _symbol(self, name: str) -> TConst:
        if name in self.scope.types.symbols:
            return TConst(name, ValueType("enum", name=self.scope.types.symbols[name]))
        return TConst(name, self.scope.response_type)

    def _require(self, vtype: ValueType, kinds: Sequence[str], node: Node, what: str):
        if vtype.kind != "any" and vtype.kind not in kinds:
            raise ProgramTypeError(f"{what} must be {'/'.join(kinds)}, got {vtype}", self.where(node))

    def _unify(self, a: ValueType, b: ValueType, node: Node) -> ValueType:
        if a.kind == "any":
            return b
        if b.kind == "any" or a == b:
            return a
        if {a.kind, b.kind} == {"int", "real"}:
            return REAL
        raise ProgramTypeError(f"incompatible types {a} and {b}", self.where(node))

    def _check_binary(self, expr: Binary):
        left = self.check_expr(expr.left)
        right = self.check_expr(expr.right)
        op = expr.op
        if op in ("&&", "||"):
            self._require(left.type, ("bool",), expr, f"operands of '{op}'")
            self._require(right.type, ("bool",), expr, f"operands of '{op}'")
            return TBinary(op, left, right, BOOL, self.where(expr))
        if op in ("==", "!="):
            self._unify(left.type, right.type, expr)
            return TBinary(op, left, right, BOOL, self.where(expr))
        if op in ("<", "<=", ">", ">="):
            self._require(left.type, ("int", "real"), expr, f"operands of '{op}'")
            self._require(right.type, ("int", "real"), expr, f"operands of '{op}'")
            return TBinary(op, left, right, BOOL, self.where(expr))
        if op == "%":
            self._require(left.type, ("int",), expr, "operands of '%'")
            self._require(right.type, ("int",), expr, "operands of '%'")
            return TBinary(op, left, right, INT, self.where(expr))
        self._require(left.type, ("int", "real"), expr, f"operands of '{op}'")
        self._require(right.type, ("int", "real"), expr, f"operands of '{op}'")
        result = INT if left.type.kind == "int" and right.type.kind == "int" else REAL
        return TBinary(op, left, right, result, self.where(expr))

    def _check_call(self, expr: Call):
        name = expr.name
        if name not in BUILTINS:
            raise BindError(f"unknown builtin '{name}'", self.where(expr))
        if name in RANDOM_BUILTINS and self.section in EXPRESSION_SECTIONS:
            raise BindError(f"{name} is not allowed in {self.section.value} expressions", self.where(expr))
        args = [self.check_expr(a) for a in expr.args]
        signatures = {
            "AOS.Bernoulli": ((("int", "real"),), BOOL),
            "AOS.UniformInt": ((("int",), ("int",)), INT),
            "AOS.UniformReal": ((("int", "real"), ("int", "real")), REAL),
            "sqrt": ((("int", "real"),), REAL),
            "pow": ((("int", "real"), ("int", "real")), REAL),
            "floor": ((("int", "real"),), INT),
            "contains": ((("string",), ("string",)), BOOL),
            "abs": ((("int", "real"),), None),
            "min": ((("int", "real"), ("int", "real")), None),
            "max": ((("int", "real"), ("int", "real")), None),
        }
        params, result = signatures[name]
        if len(args) != len(params):
            raise ProgramTypeError(f"{name} expects {len(params)} argument(s), got {len(args)}", self.where(expr))
        for i, (arg, kinds) in enumerate(zip(args, params)):
            self._require(arg.type, kinds, expr, f"argument {i + 1} of {name}")
        if result is None:
            kinds = {a.type.kind for a in args}
            result = REAL if "real" in kinds or "any" in kinds else INT
        return TCall(name, tuple(args), result, self.where(expr))

    # statements

    def check_statement(self, stmt: Stmt) -> Tuple[object, ...]:
        if isinstance(stmt, Block):
            out: List[object] = []
            for inner in stmt.statements:
                out.extend(self.check_statement(inner))
            return tuple(out)
        if isinstance(stmt, Assign):
            target = self.resolve_path(stmt.target, write=True)
            try:
                value = self.check_expr(stmt.value)
            except UndeclaredSymbolError as exc:
                if target.binding != Binding.RESPONSE:
                    raise
                raise UndeclaredSymbolError(exc.symbol, exc.path, observation=True) from None
            if not _assignable(target.type, value.type):
                raise ProgramTypeError(f"cannot assign {value.type} to {target.type}", self.where(stmt))
            widen = target.type.kind == "real" and value.type.kind in ("int", "any")
            return (TAssign(target, value, widen, self.where(stmt)),)
        if isinstance(stmt, Declare):
            if stmt.name in self.temps:
                raise BindError(f"local '{stmt.name}' declared twice", self.where(stmt))
            if self._is_symbol(stmt.name) or stmt.name in _STATE_COPIES or stmt.name in _SPECIALS:
                raise BindError(f"local '{stmt.name}' shadows a model name", self.where(stmt))
            vtype = ValueType(_PRIMITIVE_ALIASES[stmt.type_name])
            value = self.check_expr(stmt.value) if stmt.value is not None else TConst(self.scope.types.default(vtype), vtype)
            if not _assignable(vtype, value.type):
                raise ProgramTypeError(f"cannot initialise {vtype} with {value.type}", self.where(stmt))
            slot = len(self.temp_types)
            self.temps[stmt.name] = slot
            self.temp_types.append(vtype)
            self.writes.add(Binding.LOCAL)
            target = TRef(Binding.LOCAL, vtype, base=slot, name=stmt.name, temp=True, where=self.where(stmt))
            return (TAssign(target, value, vtype.kind == "real", self.where(stmt)),)
        if isinstance(stmt, If):
            cond = self.check_expr(stmt.cond)
            self._require(cond.type, ("bool",), stmt, "if condition")
            then = self.check_statement(stmt.then)
            otherwise = self.check_statement(stmt.otherwise) if stmt.otherwise is not None else ()
            return (TIf(cond, then, otherwise),)
        if isinstance(stmt, While):
            cond = self.check_expr(stmt.cond)
            self._require(cond.type, ("bool",), stmt, "while condition")
            return (TWhile(cond, self.check_statement(stmt.body), self.where(stmt)),)
        raise ProgramTypeError(f"unsupported statement {stmt!r}", self.origin)


def typecheck(program: Program, scope: Scope, origin: str = "<program>") -> TypedProgram:
    """Resolve names and types; enforce the section's write permissions"""
    checker = _Checker(scope, program.section, origin)
    if program.expression is not None:
        expression = checker.check_expr(program.expression)
        if expression.type.kind not in ("bool", "any") and program.section == SectionKind.SPECIAL_STATE_CONDITION:
            raise ProgramTypeError(f"state condition must be bool, got {expression.type}", origin)
        return TypedProgram(program, program.section, origin, expression=expression,
                            reads=frozenset(checker.reads), writes=frozenset(checker.writes))
    statements: List[object] = []
    for stmt in program.statements:
        statements.extend(checker.check_statement(stmt))
    return TypedProgram(
        program, program.section, origin,
        statements=tuple(statements),
        temp_types=tuple(checker.temp_types),
        reads=frozenset(checker.reads),
        writes=frozenset(checker.writes),
    )


def compile_source(source: str, section: SectionKind, scope: Scope, origin: str = "<program>") -> TypedProgram:
    """Parse and typecheck in one go"""
    return typecheck(parse_program(source, section), scope, origin)
