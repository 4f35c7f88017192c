"""
Error taxonomy for the skill planning engine
Every error carries an optional path: a document field path or a program location
"""

from typing import Iterable, Optional


class AOSError(Exception):
    """Base class for all engine errors"""

    def __init__(self, message: str, path: Optional[str] = None):
        self.message = message
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


# ================================
# DOCUMENTS
# ================================

class SchemaError(AOSError):
    """Document does not follow the documented schema"""


class LinkError(AOSError):
    """Cross-document invariant violated while linking a project"""

    def __init__(self, kind: str, message: str, path: Optional[str] = None):
        self.kind = kind
        super().__init__(f"{kind}: {message}", path)


# ================================
# LANGUAGE
# ================================

class DslError(AOSError):
    """Base class for front-end errors of the model language"""


class ProgramSyntaxError(DslError):
    def __init__(self, message: str, line: int, column: int, expected: Iterable[str] = ()):
        self.line = line
        self.column = column
        self.expected = tuple(sorted(set(expected)))
        detail = f"{message} at {line}:{column}"
        if self.expected:
            detail += f" (expected one of: {', '.join(self.expected)})"
        super().__init__(detail, f"{line}:{column}")


class ProgramTypeError(DslError):
    pass


class BindError(DslError):
    pass


class UndeclaredSymbolError(BindError):
    """Identifier is neither a variable nor a declared enum/observation symbol"""

    def __init__(self, symbol: str, path: Optional[str] = None, observation: bool = False):
        self.symbol = symbol
        self.observation = observation
        super().__init__(f"undeclared identifier '{symbol}'", path)


class WriteError(DslError):
    pass


# ================================
# RUNTIME
# ================================

class RuntimeFault(AOSError):
    """Fault raised while executing a program"""


class EvalFault(RuntimeFault):
    pass


class LoopCap(RuntimeFault):
    pass


class ObservationUnset(RuntimeFault):
    pass


class UnsupportedBuiltin(RuntimeFault):
    pass


# ================================
# EXPLICIT MODEL
# ================================

class StateCapExceeded(AOSError):
    pass


class TreeCapExceeded(AOSError):
    pass


class ZeroProbabilityObservation(AOSError):
    pass


# ================================
# BELIEF / EXECUTION
# ================================

class BeliefCollapse(AOSError):
    pass


class MissingParameter(AOSError):
    pass


class MissingResponseField(AOSError):
    pass


class UnknownEndpoint(AOSError):
    pass


class SkillTimeout(AOSError):
    pass


class ConnectionLost(AOSError):
    pass


class ProtocolViolation(AOSError):
    pass
