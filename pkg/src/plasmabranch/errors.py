"""Exception types raised by the solvers."""


class DomainError(ValueError):
    """Unsupported domain kind, bad resolution or a field/domain mismatch."""


class SolverError(RuntimeError):
    """Base class for numerical failures."""


class NonContractionError(SolverError):
    """The Picard map stopped contracting."""


class BracketError(SolverError):
    """The mass deficit does not change sign on the search interval."""


class SingularLinearizationError(SolverError):
    """The bordered Newton matrix could not be factorized."""


class PositivityLossError(SolverError):
    """An iterate left the admissible set alpha + lambda*psi > 0."""


class ConvergenceError(SolverError):
    """An iteration exhausted its budget without meeting tolerance."""


class BoundViolationError(SolverError):
    """The stream function exceeded the a priori sup bound."""


class ContinuationError(SolverError):
    """Step underflow, fold limit or loss of transversality."""
