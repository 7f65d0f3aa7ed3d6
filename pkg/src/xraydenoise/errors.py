"""Exception types shared across the toolkit."""


class ContractError(ValueError):
    """An operation was called with arguments that violate its preconditions."""


class FormatError(ContractError):
    """A file exists but does not parse under the declared format."""


class DegenerateInputError(ContractError):
    """Statistical input that cannot support the requested estimate."""


class NumericFailure(RuntimeError):
    """A numeric invariant broke (NaN/Inf in activations, gradients or loss)."""
