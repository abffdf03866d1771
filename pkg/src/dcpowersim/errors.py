"""Exception types shared across the simulator."""


class ConfigurationError(ValueError):
    """Invalid or incomplete configuration.

    Raised by the loaders and model constructors; the message lists every
    violation found, one per line, so a bad document can be fixed in one pass.
    """
