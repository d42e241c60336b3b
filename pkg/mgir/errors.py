class MgirError(Exception):
    """Base class for every error raised by the pipeline."""

    def __init__(self, message, extra_info=''):
        super().__init__(message)
        self.extra_info = extra_info


class DimensionError(MgirError):
    """Raise when tensor extents do not fit an operation."""

    def __init__(self, message, axis=None, extra_info=''):
        super().__init__(message, extra_info)
        self.axis = axis


class RankError(DimensionError):
    """Raise when a tensor has the wrong number of axes or elements."""


class EmptyAxisError(DimensionError):
    """Raise when a reduction axis has no elements."""


class EmptyGridError(DimensionError):
    """Raise when a sampled grid has a zero extent."""


class ParameterError(MgirError):
    """Raise when a scalar argument is outside its domain."""


class UnsupportedKernelError(ParameterError):
    """Raise when a kernel shape cannot honour the requested padding."""


class ConfigurationError(MgirError):
    """Raise when a configuration is invalid. All failures are listed in errors."""

    def __init__(self, message, errors=None, extra_info=''):
        self.errors = list(errors) if errors else [message]
        if errors:
            message = message + ': ' + '; '.join(self.errors)
        super().__init__(message, extra_info)


class TapeError(MgirError):
    """Raise when the autodiff tape is used out of order."""


class NonFiniteError(MgirError):
    """Raise when a NaN or Inf value shows up in checked mode."""


class TrainingAbortedError(MgirError):
    """Raise when training cannot continue, e.g. on a non-finite loss."""


class BudgetError(MgirError):
    """Raise when a request exceeds the configured resource budget."""

    def __init__(self, message, limit=None, extra_info=''):
        super().__init__(message, extra_info)
        self.limit = limit


class NormalizationError(MgirError):
    """Raise when blending weights do not sum to one."""


class UndefinedMetricError(MgirError):
    """Raise when a metric has no defined value for the inputs."""


class FormatError(MgirError):
    """Raise when a binary file is malformed. offset is the failing byte position."""

    def __init__(self, message, offset=None, extra_info=''):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message, extra_info)
        self.offset = offset
