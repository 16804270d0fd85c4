"""Exception hierarchy shared across the package."""


class WireTrapError(Exception):
    """Base class for all domain errors raised by this package."""


class SingularityError(WireTrapError):
    """Evaluation point inside the exclusion radius of a wire."""

    def __init__(self, wire_index: int, distance: float, eps_axis: float):
        self.wire_index = wire_index
        self.distance = distance
        self.eps_axis = eps_axis
        super().__init__(
            f"point is {distance:.3e} m from wire {wire_index} "
            f"(exclusion radius {eps_axis:.3e} m)"
        )


class QuantizationAxisError(WireTrapError):
    """Static field magnitude below the zero threshold: no quantization axis."""


class NonDifferentiablePointError(WireTrapError):
    """Gradient requested at a point where detuning and Rabi frequency both vanish."""


class UnsupportedConfigurationError(WireTrapError):
    """Scene requests a feature outside the supported model (e.g. RF phase offsets)."""


class EmptyMeshError(WireTrapError):
    """Isosurface level outside the sampled value range."""


class MinimumNotFoundError(WireTrapError):
    """1-D search found no interior minimum in the given range."""


class NoBracketError(WireTrapError):
    """Root bracket endpoints do not straddle the target."""


class SaddleConvergenceError(WireTrapError):
    """Elastic-band relaxation did not converge; carries the best result found."""

    def __init__(self, message: str, best_result=None):
        self.best_result = best_result
        super().__init__(message)


class ConfigError(WireTrapError):
    """Scene configuration is missing, malformed, or violates an invariant."""

    def __init__(self, key: str, reason: str):
        self.key = key
        self.reason = reason
        super().__init__(f"config key '{key}': {reason}")
