from __future__ import annotations


class FglsError(ValueError):
    """Base class for input/validation problems raised by fglsreg."""


class NumericalError(FglsError, ArithmeticError):
    """A well-formed input that the numerics cannot handle (non-PD, rank loss, ...)."""


class GridMismatchError(FglsError):
    def __init__(self, detail: str = "") -> None:
        msg = "incompatible grids"
        super().__init__(f"{msg}: {detail}" if detail else msg)
