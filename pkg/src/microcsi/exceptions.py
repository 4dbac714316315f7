"""Exception and warning classes raised across the package."""


class MicroCsiError(Exception):
    """Base class for all package errors."""


class IllConditionedError(MicroCsiError, ValueError):
    """The partial DFT of a tap set is (numerically) rank deficient."""


class DeepFadeError(MicroCsiError, ValueError):
    """A channel estimate has a near-zero subcarrier, so division is unsafe.

    This usually means the line-of-sight assumption does not hold for the
    measurement; callers are expected to drop it.
    """

    def __init__(self, message, chain_index=None, subcarrier=None):
        super().__init__(message)
        self.chain_index = chain_index
        self.subcarrier = subcarrier


class EmptyBatchError(MicroCsiError, ValueError):
    """Every member of a micro-CSI batch was rejected by the gradient filter."""


class ConstantFingerprintError(MicroCsiError, ValueError):
    """A denoised fingerprint has zero spread and cannot be normalized."""


class InsufficientDataError(MicroCsiError, ValueError):
    """Not enough measurements to build the requested fingerprints."""


class ParseError(MicroCsiError, ValueError):
    def __init__(self, line, reason):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class DimensionError(ParseError):
    """A record does not carry exactly one value per used subcarrier."""


class MicroCsiWarning(UserWarning):
    pass


class ZeroNoiseWarning(MicroCsiWarning):
    """Two training-symbol copies are identical; the SNR is reported as +inf."""


class EmptySubcarrierWarning(MicroCsiWarning):
    """Z-score filtering kept no value on a subcarrier; the unfiltered mean was used."""


class NotConvergedWarning(MicroCsiWarning):
    """The measurement stream ran out before the fingerprint estimate settled."""
