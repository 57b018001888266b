"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Array dimensions do not agree."""


class InvalidSparsityError(ValueError):
    pass


class InstanceTooLargeError(ValueError):
    """An exhaustive enumeration would exceed its configured cap."""


class DegenerateSampleError(ValueError):
    """Zero input row together with zero error; the sample carries no information."""


class SingularParametersError(ValueError):
    pass


class DivergenceError(ArithmeticError):
    """An iterative solver produced a non-finite or runaway value.

    ``iteration`` is the 1-based iteration at which the problem was detected.
    """

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class RankError(ArithmeticError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration
