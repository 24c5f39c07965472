"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """An iterative routine diverged or a numeric contract failed.

    Raised for solver divergence, non-finite values in computed results,
    singular designs, and similar failures that are not caused by bad
    user input. The command line maps this to exit code 3.
    """
