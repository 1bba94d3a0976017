"""Exception types shared across the package."""


class ModelDomainError(ValueError):
    """Parameters are valid numbers but fall outside the attack model's domain."""


class ConvergenceError(RuntimeError):
    """A numerical routine failed to reach its requested tolerance.

    ``partial`` carries the best available value when one exists.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
