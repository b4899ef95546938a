"""Exception types raised across the package."""


class MomentDesignError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(MomentDesignError, ValueError):
    pass


class DegreeOverflow(MomentDesignError, ValueError):
    pass


class BasisOverflow(MomentDesignError, OverflowError):
    pass


class MissingCompactnessCertificate(MomentDesignError, ValueError):
    pass


class SamplingExhausted(MomentDesignError, RuntimeError):
    pass


class NonSymmetricInput(MomentDesignError, ValueError):
    pass


class SingularMatrix(MomentDesignError, ValueError):
    pass


class EigMultiplicityAmbiguous(MomentDesignError, ValueError):
    """Least eigenvalue is not simple; carries the flagged subgradient choice."""

    def __init__(self, message, subgradient=None):
        super().__init__(message)
        self.subgradient = subgradient


class UnsupportedCriterion(MomentDesignError, ValueError):
    pass


class MatchConstraintInfeasible(MomentDesignError, RuntimeError):
    pass


class ExtractionUnstable(MomentDesignError, RuntimeError):
    pass


class NoAtomsExtracted(MomentDesignError, RuntimeError):
    pass


class IllConditionedVandermonde(MomentDesignError, RuntimeError):
    pass


class CertificateResidualTooLarge(MomentDesignError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class UnsupportedDimension(MomentDesignError, ValueError):
    pass


class SolverFailure(MomentDesignError, RuntimeError):
    """A conic solve ended without an Optimal status."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class RankDeficientBasis(MomentDesignError, ValueError):
    pass
