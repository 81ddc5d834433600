class GkdvError(Exception):
    """
    Base class for numerical failures of the laboratory. Carries the measured
    quantity and the limit it violated when there is one.
    """

    def __init__(self, message, value=None, limit=None):
        super().__init__(message)
        self.value = value
        self.limit = limit


class ConfigError(GkdvError):
    pass


# Profiles / linear operator
class GridTooSmall(GkdvError):
    pass


class BiorthogonalityFailure(GkdvError):
    pass


class RatioOverflow(GkdvError):
    pass


# Spectral data and Jost solutions
class BranchAmbiguity(GkdvError):
    pass


class DegenerateRoots(GkdvError):
    pass


class NonConvergence(GkdvError):
    pass


class ContractionFailure(GkdvError):
    pass


class LimitNotSettled(GkdvError):
    pass


class IllConditionedMatch(GkdvError):
    pass


# Resolvent
class NearSingular(GkdvError):
    pass


class NotProjected(GkdvError):
    pass


# Time evolution and modulation
class BlowupDetected(GkdvError):
    pass


class ResolutionLoss(GkdvError):
    pass


class NewtonDivergence(GkdvError):
    pass


class TubeExit(GkdvError):
    pass
