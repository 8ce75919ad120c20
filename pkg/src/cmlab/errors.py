"""Exception hierarchy shared across the package.

Both error classes subclass :class:`ValueError` so that callers who do not
care about the distinction can keep catching the builtin, while the CLI maps
them onto distinct exit codes (config problems vs. numeric/precondition
failures at run time).
"""


class CmlabError(ValueError):
    """Base class for all errors raised by this package."""


class ConfigError(CmlabError):
    """A experiment configuration is malformed or references unknown options.

    Messages start with the dotted path of the offending field, e.g.
    ``"schedule: expected 'ou', 've', or {'csv': path}"``.
    """


class NumericError(CmlabError):
    """A numeric precondition or runtime numeric check failed.

    Examples: evaluating a schedule outside its domain, a quantile search
    that does not bracket, a designed time schedule with colliding points,
    quadrature truncation mass above tolerance.
    """
