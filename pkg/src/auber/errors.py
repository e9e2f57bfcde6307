"""Exception hierarchy. Each class carries a short category used by the CLI."""


class AuberError(Exception):
    category = "error"


class ShapeError(AuberError, ValueError):
    category = "shape"


class InputError(AuberError, ValueError):
    category = "input"


class ParseError(InputError):
    category = "parse"


class PolicyError(AuberError, RuntimeError):
    category = "policy"


class StateError(AuberError, RuntimeError):
    category = "state"


class FormatError(AuberError, ValueError):
    category = "format"


class GenerationError(AuberError, RuntimeError):
    category = "generation"
