"""Exception hierarchy shared by every package."""

from typing import Optional


class DecoqError(Exception):
    """Base class for all library errors."""


class DimensionMismatchError(DecoqError, ValueError):
    """Operands do not live on the same space."""


class FactorizationError(DimensionMismatchError):
    """An operator does not fit the system/environment factorization."""


class HermiticityError(DecoqError, ValueError):
    """A Hamiltonian or observable that must be Hermitian is not."""


class InvalidChainError(DecoqError, ValueError):
    """A Lie chain names an unknown vector field or is too long."""


class DecompositionError(DecoqError, ValueError):
    """The interaction was not supplied as a sum of system/environment products."""


class NormDefectError(DecoqError, RuntimeError):
    """Propagation lost unitarity beyond the configured bound."""


class FeedbackLawError(DecoqError, ValueError):
    """A feedback law references outputs the model does not define."""


class ConfigError(DecoqError):
    """Invalid runtime configuration."""


class ScenarioError(DecoqError):
    """Scenario file could not be parsed, validated or built."""

    def __init__(self, message: str, line: Optional[int] = None,
                 column: Optional[int] = None, key: Optional[str] = None):
        self.message = message
        self.line = line
        self.column = column
        self.key = key
        super().__init__(self._format())

    def _format(self) -> str:
        where = []
        if self.key:
            where.append(f"at '{self.key}'")
        if self.line is not None:
            where.append(f"line {self.line}")
        if self.column is not None:
            where.append(f"column {self.column}")
        return f"{self.message} ({', '.join(where)})" if where else self.message
