"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericalError -> 3.
"""


class CcspError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(CcspError):
    """Invalid configuration file, flag combination, or hyperparameter."""


class DataError(CcspError):
    """Malformed manifest, trial file, or inconsistent dataset contents."""


class NumericalError(CcspError):
    """Numerical failure: non-finite values, singular matrices, bad designs."""


class FilterDesignError(NumericalError):
    """Band edges or order make the IIR design infeasible."""


class ModelStateError(CcspError):
    """Model used in the wrong lifecycle state (e.g. predict before finalize)."""
