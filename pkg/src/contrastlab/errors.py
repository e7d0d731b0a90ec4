"""Exception types shared across the package."""


class ContrastLabError(Exception):
    """Base class for all package-specific errors."""


class DegenerateInputError(ContrastLabError, ValueError):
    """Input is structurally valid but numerically unusable (e.g. zero-norm
    embedding passed to a cosine score, or a batch too small for the
    requested statistic)."""


class RankDeficiencyError(ContrastLabError, ValueError):
    """A dictionary matrix that must have full column rank does not
    (smallest singular value below the rank tolerance)."""


class UnsupportedSimilarityError(ContrastLabError, ValueError):
    """The requested operation has no analytic form for this similarity
    kind; use the finite-difference path instead."""


class NonFiniteScoreError(ContrastLabError, ValueError):
    """A score matrix contains NaN or infinity."""


class DivergenceError(ContrastLabError, RuntimeError):
    """Training loss exceeded the divergence threshold or became
    non-finite."""


class ConfigValidationError(ContrastLabError, ValueError):
    """One or more experiment-config constraints are violated.

    ``problems`` lists every violation at once, each prefixed with the
    offending field path.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
