"""
Exception hierarchy for causescope.

Input-validation errors also subclass ValueError so callers that only
catch ValueError keep working.
"""


class CauseScopeError(Exception):
    """Base class for every error raised by causescope."""


# Graph / model

class GraphError(CauseScopeError, ValueError):
    pass


class CycleDetected(GraphError):
    def __init__(self, cycle: list[str]):
        self.cycle = cycle
        super().__init__(f"Causal graph has a cycle: {' -> '.join(cycle)}")


class UnknownEndpoint(GraphError):
    def __init__(self, edge: tuple[str, str], missing: str):
        self.edge = edge
        self.missing = missing
        super().__init__(f"Edge {edge[0]} -> {edge[1]} references unknown feature {missing!r}")


class LengthOutOfRange(CauseScopeError, ValueError):
    pass


# Simulator / benchmark

class SimSpecError(CauseScopeError, ValueError):
    pass


class NotTransitivelyClosed(SimSpecError):
    pass


class PredicateReferencesUnknownFeature(SimSpecError):
    pass


class NotAntichain(SimSpecError):
    pass


class TooManyFeatures(CauseScopeError, ValueError):
    pass


# Adapters

class AdapterError(CauseScopeError):
    pass


class AdapterTimeout(AdapterError):
    pass


class MalformedResponse(AdapterError):
    pass


class AdapterUnavailable(AdapterError):
    """The external system could not be reached at all (spawn failed, connection refused)."""


# Interventions

class NoDistinctCandidate(CauseScopeError):
    pass


class RemoteUnavailable(CauseScopeError):
    pass


# Influence / search / oracle

class OutcomeNotPass(CauseScopeError, ValueError):
    pass


class EmptyCandidates(CauseScopeError, ValueError):
    pass


class BaselineFails(CauseScopeError):
    pass


class BudgetTooSmall(CauseScopeError, ValueError):
    pass


class NondeterministicSUT(CauseScopeError):
    pass


# Aggregation / applications

class NotAMember(CauseScopeError, ValueError):
    pass


class MismatchedIdSets(CauseScopeError, ValueError):
    pass


class TooFewFeatures(CauseScopeError, ValueError):
    pass


class NOutOfRange(CauseScopeError, ValueError):
    pass


class ZeroBaseline(CauseScopeError, ValueError):
    pass


class MissingContext(CauseScopeError, ValueError):
    pass


# Configuration / CLI

class ConfigError(CauseScopeError, ValueError):
    pass


class ParseError(ConfigError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field is not None:
            location.append(f"field {field!r}")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}")


class InvariantViolation(ConfigError):
    pass


class UsageError(CauseScopeError):
    pass


class UnknownFeature(CauseScopeError, ValueError):
    pass
