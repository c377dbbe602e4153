"""Exception types shared across the simulator and the learner."""


class ConfigError(ValueError):
    """Invalid or unknown configuration values."""


class ContractViolation(ValueError):
    """A caller broke an operation's precondition."""


class SingularChannelError(ArithmeticError):
    """The channel Gram matrix is too ill-conditioned to invert."""


class TrainingDivergenceError(FloatingPointError):
    """A non-finite loss, gradient or parameter appeared during training."""
