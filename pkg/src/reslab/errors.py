"""Exception types shared across the package."""


class ReslabError(Exception):
    pass


class DimensionMismatch(ReslabError, ValueError):
    pass


class SupportMismatch(ReslabError, ValueError):
    pass


class BudgetExceeded(ReslabError, RuntimeError):
    """A requested grid, basis or LP would exceed the configured size budget."""

    def __init__(self, what, required, budget):
        self.what = what
        self.required = required
        self.budget = budget
        super().__init__(f"{what} requires {required} (budget {budget})")


class NotBoolean(ReslabError, ValueError):
    pass


class InsufficientSamples(ReslabError, ValueError):
    def __init__(self, m, required):
        self.m = m
        self.required = required
        super().__init__(f"under-determined fit: m={m}, need m >= {required}")
