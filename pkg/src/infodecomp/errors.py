"""Exception hierarchy shared across the package."""


class InfodecompError(Exception):
    """Base class for all package errors."""


class DomainError(InfodecompError):
    """An input value violates a documented precondition (non-finite, out of range)."""


class ShapeMismatchError(InfodecompError):
    """Two fields that must share a shape do not."""

    def __init__(self, name: str, expected, got):
        super().__init__(f"{name}: expected shape {tuple(expected)}, got {tuple(got)}")
        self.name = name
        self.expected = tuple(expected)
        self.got = tuple(got)


class UnsupportedConditionError(InfodecompError):
    """A denoiser was asked to evaluate a condition kind it cannot realize."""


class UnknownPhraseError(InfodecompError):
    """A prior provider has no entry for the requested phrase/context pair."""


class ZeroProbabilityError(InfodecompError):
    """A phrase prior of exactly zero probability was supplied or served."""


class TrainingDivergedError(InfodecompError):
    """Toy denoiser training produced a non-finite loss."""

    def __init__(self, step: int, loss: float):
        super().__init__(f"non-finite training loss {loss!r} at step {step}")
        self.step = step
        self.loss = loss


class BridgeTransportError(InfodecompError):
    """The bridge server could not be reached or the connection failed."""


class BridgeProtocolError(InfodecompError):
    """The bridge server answered, but outside the documented protocol."""
