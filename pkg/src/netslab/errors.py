"""Exception types shared across the package.

The CLI maps these onto exit codes (input -> 2, numerical -> 4).
"""


class InputError(ValueError):
    """Malformed or inconsistent user input."""


class ContractError(ValueError):
    """An operation was called outside its precondition."""


class NumericalError(ArithmeticError):
    """A non-finite value or factorization failure during fitting."""

    def __init__(self, message, slot=None, network=None, term=None):
        super().__init__(message)
        self.slot = slot
        self.network = network
        self.term = term
