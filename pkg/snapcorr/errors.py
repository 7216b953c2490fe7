"""Error types raised by snapcorr operations."""

from __future__ import annotations


class SnapcorrError(Exception):
    """Base class for every error raised deliberately by snapcorr."""


class InputError(SnapcorrError, ValueError):
    """Invalid input: bad shapes, non-finite data, malformed files.

    *line* is the 1-indexed line of a parsed file and *field* a dotted
    config path; either is prefixed to the message when given.
    """

    def __init__(
        self, message: str, *, line: int | None = None,
        field: str | None = None,
    ) -> None:
        self.line = line
        self.field = field
        prefix = ""
        if field:
            prefix += f"{field}: "
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)


class ConfigError(InputError):
    """A JSON config or scenario failed validation."""


class NotPSDError(SnapcorrError, ValueError):
    """A matrix that must be positive semidefinite is not."""


class DomainError(SnapcorrError, ValueError):
    """Input outside the domain of a nonlinear map."""


class LogBranchError(DomainError):
    """The principal matrix logarithm does not exist or is ill-conditioned."""


class InconsistentFactorizationError(SnapcorrError, ValueError):
    """Two factorizations do not factor the same correlation."""


class StructureError(SnapcorrError, ValueError):
    """Internally inconsistent composite object (e.g. TT bond mismatch)."""


class GasLawDomainError(DomainError):
    """The piston gas law base 1 + (gamma-1)/2 * v/c0 became non-positive."""

    def __init__(
        self, message: str, *, t: float | None = None,
        param_index: int | None = None,
    ) -> None:
        self.t = t
        self.param_index = param_index
        parts = []
        if param_index is not None:
            parts.append(f"parameter {param_index}")
        if t is not None:
            parts.append(f"t={t:.6g}")
        prefix = f"[{', '.join(parts)}] " if parts else ""
        super().__init__(prefix + message)

    def at_parameter(self, index: int) -> "GasLawDomainError":
        """Return a copy of this error tagged with a parameter index."""
        base = str(self)
        if base.startswith("["):
            base = base.split("] ", 1)[1]
        return GasLawDomainError(base, t=self.t, param_index=index)
