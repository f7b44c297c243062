class BsdeLabError(Exception):
    """Base class for all errors raised by bsdelab."""


class InvalidArgument(BsdeLabError, ValueError):
    pass


class NumericalFailure(BsdeLabError, ArithmeticError):
    """A numerical step broke down (NaN, overflow, rank-deficient regression).

    ``node`` and ``path`` locate the failure when known.
    """

    def __init__(self, message, node=None, path=None, module=None):
        super().__init__(message)
        self.node = node
        self.path = path
        self.module = module
