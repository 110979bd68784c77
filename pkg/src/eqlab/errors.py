"""Exception hierarchy for the lab.

Numerical contract violations derive from :class:`NumericalError` so the
CLI can map them to exit code 2; configuration problems derive from
:class:`ConfigError` (exit code 1).
"""


class LabError(Exception):
    pass


class NumericalError(LabError):
    pass


class DegenerateStencil(NumericalError):
    pass


class InvalidEpsilon(NumericalError):
    pass


class OutOfDomain(NumericalError):
    pass


class QuadratureFailure(NumericalError):
    pass


class NotPD(NumericalError):
    pass


class IllConditioned(NumericalError):
    pass


class UndefinedSpace(NumericalError):
    """Raised when an operation needs d_p >= 1 but the section space is empty."""


class BallTouchesAtom(NumericalError):
    pass


class NonConvexProfile(NumericalError):
    pass


class NotToric(NumericalError):
    pass


class NumericallyDegenerate(NumericalError):
    pass


class PositiveDimensional(NumericalError):
    pass


class PTooLarge(NumericalError):
    pass


class ConfigError(LabError):
    def __init__(self, message, key=None, line=None):
        self.message = message
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class CacheCorrupt(LabError):
    pass


class IoFailure(LabError):
    pass
