"""Exception hierarchy shared by all modules."""


class SpdeInvError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(SpdeInvError, ValueError):
    """An argument lies outside its admissible range."""


class DomainError(SpdeInvError, ValueError):
    """A spatial point lies outside the box domain."""


class ContractError(SpdeInvError):
    """An input violates a structural contract (symmetry, shape)."""


class NumericalError(SpdeInvError):
    """A numerical stage failed (eigensolver, divergence, rank loss)."""


class DivergenceError(NumericalError):
    """Non-finite values appeared while time stepping."""

    def __init__(self, step, path_seed=None, path=None):
        self.step = step
        self.path_seed = path_seed
        self.path = path
        msg = f"non-finite state at step {step}"
        if path is not None:
            msg += f" (path {path}, seed {path_seed})"
        super().__init__(msg)


class SpectralPositivityError(NumericalError):
    """A matrix whose logarithm is required has non-positive eigenvalues."""


class DataError(SpdeInvError):
    """Dataset is incomplete or malformed."""


class CoverageError(DataError):
    """The (i, j) pair family does not cover every required pair."""

    def __init__(self, missing):
        self.missing = list(missing)
        shown = ", ".join(f"{i}:{j}" for i, j in self.missing[:10])
        more = "" if len(self.missing) <= 10 else f" (+{len(self.missing) - 10} more)"
        super().__init__(f"missing theta pairs: {shown}{more}")
