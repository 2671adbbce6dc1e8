"""Exception hierarchy for the solver."""


class HrnlseError(Exception):
    """Base class for all solver errors."""


class InvalidMeshError(HrnlseError):
    """Node list is not strictly increasing or endpoints are wrong."""


class MeshTangledError(HrnlseError):
    """A mesh update produced a non-monotone node ordering.

    Raised by the mesh solve; the driver treats it as a step rejection.
    """


class NewtonDivergedError(HrnlseError):
    """Newton iteration failed to converge within the iteration budget."""


class StepsizeUnderflowError(HrnlseError):
    """Repeated step halvings drove the time step below the floor."""


class EquidistributionError(HrnlseError):
    """de Boor iteration hit its cap without meeting the mesh tolerance."""


class InitialisationFailedError(HrnlseError):
    """Initial node-count search could not place the indicator in its band."""

    def __init__(self, message, closest_eta=None):
        super().__init__(message)
        self.closest_eta = closest_eta


class ConfigError(HrnlseError):
    """Configuration file or override is malformed.

    Carries the offending key path when one is known.
    """

    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key
