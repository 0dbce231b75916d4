"""Exception hierarchy shared across the toolkit.

ValidationError subclasses map to CLI exit code 2 (bad inputs),
NumericalError subclasses to exit code 3 (solver/optimizer failure).
"""


class VpregError(Exception):
    pass


class ValidationError(VpregError):
    pass


class NumericalError(VpregError):
    pass


class DomainMismatch(ValidationError):
    pass


class DegenerateDomain(ValidationError):
    pass


class NonPositiveJD(ValidationError):
    pass


class MassMismatch(ValidationError):
    pass


class NonSolenoidalCurl(ValidationError):
    pass


class ZeroBaselineMI(ValidationError):
    pass


class EmptyCohort(ValidationError):
    pass


class MissingHeader(ValidationError):
    pass


class SizeMismatch(ValidationError):
    pass


class UnknownKind(ValidationError):
    pass


class NonFiniteData(ValidationError):
    pass


class BadMagic(ValidationError):
    pass


class UnsupportedDatatype(ValidationError):
    pass


class DimOverflow(ValidationError):
    pass


class FoldingDetected(NumericalError):
    pass


class Stalled(NumericalError):
    pass
