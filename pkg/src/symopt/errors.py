"""Exception types shared by every module."""


class SymoptError(Exception):
    """Base class for all errors raised by the package."""


class InvalidInput(SymoptError, ValueError):
    pass


class NotPSD(SymoptError, ValueError):
    pass


class ZeroDirection(SymoptError, ValueError):
    """A polar factor of the zero matrix was requested."""


class InvalidConfig(SymoptError, ValueError):
    pass


class SingularGram(SymoptError, ArithmeticError):
    pass


class ShapeError(SymoptError, ValueError):
    pass


class ZeroEntry(SymoptError, ValueError):
    pass
