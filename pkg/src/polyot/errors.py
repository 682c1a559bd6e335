"""Exception types raised across the package."""


class PolyOTError(Exception):
    """Base class for all errors raised by polyot."""


class DegeneratePolygonError(PolyOTError, ValueError):
    """Polygon has too few distinct vertices or zero perimeter."""


class InvalidPermutationError(PolyOTError, ValueError):
    """Index mapping is not a bijection of the expected length."""


class ShapeError(PolyOTError, ValueError):
    """Operand dimensions do not agree."""


class NonConvergenceError(PolyOTError, RuntimeError):
    """Sinkhorn did not reach the marginal tolerance within its budget."""


class SampleParseError(PolyOTError, ValueError):
    """One or more dataset lines failed validation.

    ``errors`` holds ``(line_number, message)`` pairs, 1-based.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        lines = "; ".join(f"line {n}: {msg}" for n, msg in self.errors)
        super().__init__(f"{len(self.errors)} malformed line(s): {lines}")


class MissingPredictionError(PolyOTError, KeyError):
    """Some sample ids have no predicted polygon."""

    def __init__(self, ids):
        self.ids = list(ids)
        super().__init__(f"missing predictions for ids: {', '.join(self.ids)}")

    def __str__(self):
        return self.args[0]
