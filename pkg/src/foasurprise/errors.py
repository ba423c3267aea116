"""Exception hierarchy.

Every error maps onto one of three CLI exit codes: configuration problems (2),
bad or inconsistent data (3) and numerical failures (4).
"""


class FoaSurpriseError(Exception):
    exit_code = 1


class ConfigError(FoaSurpriseError, ValueError):
    exit_code = 2


class DataError(FoaSurpriseError, ValueError):
    exit_code = 3


class NumericalError(FoaSurpriseError, ArithmeticError):
    exit_code = 4


class InvalidDimensionError(ConfigError):
    pass


class InvalidFeatureError(ConfigError):
    pass


class InvalidHorizonError(ConfigError):
    pass


class InvalidEpochError(ConfigError):
    pass


class UnknownStrategyError(ConfigError):
    pass


class InvalidSceneError(DataError):
    pass


class InvalidRotationError(DataError):
    pass


class InvalidWindowError(DataError):
    pass


class DegenerateEdgeError(DataError):
    pass


class InvalidBatchError(DataError):
    pass


class TraceTooShortError(DataError):
    pass


class UnnormalizedMapError(DataError):
    pass


class EmptyViewportError(DataError):
    pass


class LengthMismatchError(DataError):
    pass


class FoaParseError(DataError):
    pass


class MagicMismatchError(FoaParseError):
    pass


class ChannelCountError(FoaParseError):
    pass


class TruncatedPayloadError(FoaParseError):
    pass


class CheckpointError(DataError):
    pass
