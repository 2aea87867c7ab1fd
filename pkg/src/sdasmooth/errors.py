"""Exception hierarchy.

Everything raised on purpose by the package derives from :class:`SDAError`,
so callers (and the CLI) can separate bad input from programming errors.
"""


class SDAError(Exception):
    pass


class InputError(SDAError):
    """Invalid arguments, shapes or files. CLI exit code 2."""


class NumericalError(SDAError):
    """A computation could not be carried out reliably. CLI exit code 3."""


class DomainError(InputError, ValueError):
    pass


class GridTooCoarse(InputError, ValueError):
    pass


class ShapeError(InputError, ValueError):
    pass


class DataError(InputError, ValueError):
    pass


class EmptyCluster(SDAError):
    pass


class DegenerateDesign(NumericalError):
    pass


class TooFewPoints(InputError, ValueError):
    pass


class QuadratureError(NumericalError):
    pass


class SeparationViolated(InputError, ValueError):
    pass


class InvalidWeights(InputError, ValueError):
    pass


class AssumptionViolated(InputError, ValueError):
    pass


class ConfigError(InputError):
    pass
