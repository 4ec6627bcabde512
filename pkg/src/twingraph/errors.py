"""Exception hierarchy shared by all pipeline stages.

Every error carries a stable machine-readable ``code`` and an optional
``path`` locating the offending element (ID-Short path, archive entry,
file name, or node id). ``to_json()`` is the wire form the CLI prints on
stderr.
"""

from __future__ import annotations


class TwinError(Exception):
    """Base class for all domain errors raised by this package."""

    code = "TwinError"

    def __init__(self, message: str, *, path: str | None = None):
        super().__init__(message)
        self.message = message
        self.path = path

    def __str__(self) -> str:
        if self.path:
            return f"{self.message} (at {self.path})"
        return self.message

    def to_json(self) -> dict:
        payload = {"code": self.code, "message": self.message}
        if self.path is not None:
            payload["path"] = self.path
        return payload


class DocumentSyntaxError(TwinError):
    """Input text is not well-formed (JSON syntax, not schema)."""

    code = "SyntaxError"


class SchemaError(TwinError):
    """Well-formed document violating the canonical schema or a type invariant."""

    code = "SchemaError"


class NotFoundError(TwinError):
    """ID-Short path resolution failed at some segment."""

    code = "NotFound"


class ArchiveError(TwinError):
    """AASX package is corrupt, missing its manifest, or internally inconsistent."""

    code = "ArchiveError"


class ValidationError(TwinError):
    """A value-level constraint failed outside of document parsing."""

    code = "ValidationError"


class TransportError(TwinError):
    """Network failure talking to a shell server, after retries."""

    code = "TransportError"


class AggregateShellError(TwinError):
    """One or more shells failed to fetch/parse; the rest were retrieved.

    ``shells`` holds the successfully fetched shells in listing order and
    ``failures`` the per-shell errors as ``(shell_id, TwinError)`` pairs.
    """

    code = "AggregateError"

    def __init__(self, message: str, *, shells: list, failures: list):
        super().__init__(message)
        self.shells = shells
        self.failures = failures


class CycleError(TwinError):
    """Bill-of-material references form a cycle; ``cycle`` lists it, e.g. [A, B, A]."""

    code = "CycleError"

    def __init__(self, message: str, *, cycle: list):
        super().__init__(message, path="/".join(cycle))
        self.cycle = list(cycle)


class DanglingReferenceError(TwinError):
    """A BOM entry references an asset id with no ingested shell."""

    code = "DanglingReference"


class ConsistencyError(TwinError):
    """Cross-artifact mismatch (sequence vs hierarchy, graph vs sequence)."""

    code = "ConsistencyError"


class UnknownUnitError(TwinError):
    """Unit symbol absent from the registry."""

    code = "UnknownUnit"


class IncompatibleUnitsError(TwinError):
    """No pure conversion factor exists between two known units.

    ``kind`` is ``"dimension"`` (exponent vectors differ) or ``"affine"``
    (offset units such as °C cannot be related by a factor alone).
    """

    code = "IncompatibleUnits"

    def __init__(self, message: str, *, kind: str):
        super().__init__(message)
        self.kind = kind


class DirectionError(TwinError):
    """Caller passed ports in the wrong roles (output/input swapped)."""

    code = "DirectionError"


class NoSurrogateError(TwinError):
    """Descriptor has no surrogate attached."""

    code = "NoSurrogate"


class MissingInputError(TwinError):
    """Surrogate evaluation is missing a value for a named input port."""

    code = "MissingInput"


class OutOfRangeError(TwinError):
    """Strict-mode surrogate evaluation got an input outside its port range."""

    code = "OutOfRange"


class SignalMismatchError(TwinError):
    """Simulated and measured telemetry do not carry the same signal names."""

    code = "SignalMismatch"


class EmptyWindowError(TwinError):
    """Fewer than two samples fall inside the comparison window."""

    code = "EmptyWindow"


class InfeasibleError(TwinError):
    """No model configuration satisfies the constraints and budget."""

    code = "Infeasible"


class DegenerateFitError(TwinError):
    """Least-squares refit was rank-deficient."""

    code = "DegenerateFit"


class UsageError(TwinError):
    """Command line invoked incorrectly."""

    code = "UsageError"
