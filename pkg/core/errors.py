"""Exception hierarchy for distopt.

Structural failures (bad shapes, singular systems, failed local solves) raise
one of these; solver outcomes such as divergence are reported through
``SolveResult.status`` instead.
"""

from typing import Any, Optional


class DistOptError(Exception):
    """Base class for all distopt errors.

    Attributes:
        partial_trace: Records of an outer loop aborted by this error, set by the
            solver that raised it; None otherwise.
    """

    partial_trace: Optional[Any] = None


class EvaluationError(DistOptError):
    """A user function returned a non-finite value.

    Attributes:
        coordinate: Stencil coordinate being perturbed, if any.
        block: Block index whose function failed, if any.
    """

    def __init__(
        self,
        message: str,
        coordinate: Optional[int] = None,
        block: Optional[int] = None,
    ) -> None:
        super().__init__(message)
        self.coordinate = coordinate
        self.block = block


class SingularDerivativeError(DistOptError):
    """Newton-Raphson hit a derivative below the floor."""

    def __init__(self, message: str, iterate: float) -> None:
        super().__init__(message)
        self.iterate = iterate


class NonConvergenceError(DistOptError):
    """An iteration budget ran out before the tolerance was met."""

    def __init__(self, message: str, last_iterate: object, residual: float = float("nan")) -> None:
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class NotPositiveSemidefiniteError(DistOptError):
    """A weighting matrix is not symmetric positive semidefinite."""


class DimensionError(DistOptError):
    """Shapes of a problem, iterate or system do not agree."""

    def __init__(self, message: str, block_index: Optional[int] = None) -> None:
        super().__init__(message)
        self.block_index = block_index


class SingularKktError(DistOptError):
    """A KKT matrix is singular or numerically rank deficient.

    Attributes:
        condition: Condition number estimate (inf when exactly singular).
        rank: Estimated numerical rank.
        size: Dimension of the KKT matrix.
        iteration: Outer iteration at which the solve failed, if known.
    """

    def __init__(
        self,
        message: str,
        condition: float,
        rank: int,
        size: int,
        iteration: Optional[int] = None,
    ) -> None:
        super().__init__(message)
        self.condition = condition
        self.rank = rank
        self.size = size
        self.iteration = iteration


class CoordinationInfeasibleError(DistOptError):
    """Linearized active constraints in the coordination QP are inconsistent."""

    def __init__(
        self,
        message: str,
        block_index: Optional[int] = None,
        iteration: Optional[int] = None,
    ) -> None:
        super().__init__(message)
        self.block_index = block_index
        self.iteration = iteration


class BlockFailureError(DistOptError):
    """A local step failed; the outer loop aborts."""

    def __init__(self, message: str, block_index: int, iteration: Optional[int] = None) -> None:
        super().__init__(message)
        self.block_index = block_index
        self.iteration = iteration


class PartitionError(DistOptError):
    """A dataset cannot be split into the requested number of blocks."""


class UnsupportedProblemError(DistOptError):
    """A solver was handed a problem outside its scope."""


class ManifestError(DistOptError):
    """A problem or run manifest is malformed."""


class TaskFailureError(DistOptError):
    """One or more block tasks raised.

    Attributes:
        failures: Mapping of task index to the exception it raised.
    """

    def __init__(self, failures: dict[int, BaseException]) -> None:
        self.failures = dict(sorted(failures.items()))
        indices = ", ".join(str(i) for i in self.failures)
        first = next(iter(self.failures.values()))
        super().__init__(f"{len(self.failures)} task(s) failed (indices: {indices}); first: {first}")

    @property
    def indices(self) -> list[int]:
        """Failing task indices in ascending order."""
        return list(self.failures)
