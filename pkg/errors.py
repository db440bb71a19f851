"""
Errors - shared exception taxonomy for the mobility toolkit
"""


class MobilityError(Exception):
    """Base class for every error raised by the toolkit"""


class IdentifierError(MobilityError, KeyError):
    """Unknown station, edge or vehicle identifier"""

    def __str__(self) -> str:
        # KeyError quotes its argument; keep messages readable
        return str(self.args[0]) if self.args else ""


class DomainError(MobilityError, ValueError):
    """A value is outside the domain an operation accepts"""


class InsufficientSamplesError(DomainError):
    """Too few samples to compute a statistic or fit a model"""


class UndefinedCorrelationError(DomainError):
    """Correlation requested on a zero-variance sample"""


class SchemaError(MobilityError, ValueError):
    """Malformed file, record layout or feature schema"""


class NotTrainedError(MobilityError, RuntimeError):
    """Model used before it saw any training data"""


class FeedbackRejected(MobilityError, ValueError):
    """Feedback that cannot be applied to a predictor bundle"""


class ConfigError(MobilityError, ValueError):
    """Configuration key or value outside the documented range"""


class PipelineError(MobilityError):
    """A pipeline stage cannot run; `code` is machine readable"""

    def __init__(self, code: str, reason: str):
        super().__init__(f"{code}: {reason}")
        self.code = code
        self.reason = reason
