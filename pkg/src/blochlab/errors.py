"""Failure types shared across the package.

Numerical failures (resolution, probe, integration, construction) are kept
distinct from plain input-validation errors (``ValueError``): the CLI maps
the former to a dedicated exit code.
"""


class NumericalFailure(RuntimeError):
    """A computation could not reach its accuracy/consistency target."""


class ResolutionFailure(NumericalFailure):
    """A scan or contour grid was too coarse and refinement was exhausted."""


class IntegrationFailure(NumericalFailure):
    """An ODE integration collapsed before reaching the endpoint."""

    def __init__(self, message, reached):
        super().__init__(f"{message} (reached x = {reached:.6g})")
        self.reached = reached


class ProbeFailure(NumericalFailure):
    """A complex-line probe could not produce a trustworthy winding number."""


class ConstructionFailure(NumericalFailure):
    """An engineered potential/eigenfunction pair failed its sanity checks."""


class TruncationDominated(NumericalFailure):
    """A finite sum was evaluated where truncation exceeds the error budget."""

    def __init__(self, message, tau):
        super().__init__(f"{message} (tau = {tau:.6g})")
        self.tau = tau
