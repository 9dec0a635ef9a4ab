# Housing Recession Impact - Exceptions
# =====================================
#
# InputError subclasses mean the run cannot proceed (CLI exit code 2).
# AnalysisError subclasses mean one region cannot be scored; batch code
# records them as skips.

from typing import Optional


class HousingImpactError(Exception):
    """Base class for every error raised by this package."""


class InputError(HousingImpactError):
    """Invalid input file or configuration."""


class AnalysisError(HousingImpactError):
    """A computation is undefined for the data it was given."""


class InvalidParameterError(HousingImpactError, ValueError):
    """A documented precondition on an argument does not hold."""


# ingest ---------------------------------------------------------------------

class EmptyInputError(InputError):
    pass


class MalformedRowError(InputError):
    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


class DuplicateObservationError(InputError):
    def __init__(self, region_code: str, month: str):
        self.region_code = region_code
        self.month = month
        super().__init__(f"duplicate observation for region {region_code} at {month}")


class OutOfRangeError(InputError):
    pass


class GapTooLargeError(AnalysisError):
    def __init__(self, region_code: str, start_month: str, length: int, max_gap: int):
        self.region_code = region_code
        self.start_month = start_month
        self.length = length
        super().__init__(
            f"region {region_code}: gap of {length} months starting {start_month} exceeds max_gap={max_gap}"
        )


# time series ----------------------------------------------------------------

class SeriesTooShortError(AnalysisError):
    pass


class AnchorCountMismatchError(InvalidParameterError):
    pass


class ConstantSeriesError(AnalysisError):
    pass


# aub ------------------------------------------------------------------------

class NoLocalMaxError(AnalysisError):
    pass


class KTooLargeError(InputError):
    pass


# arima ----------------------------------------------------------------------

class OptimizerDivergedError(AnalysisError):
    pass


class AllFitsFailedError(AnalysisError):
    pass


class SplitOutOfRangeError(AnalysisError):
    pass


# pca ------------------------------------------------------------------------

class NothingLeftError(InputError):
    pass


class DegenerateColumnError(InputError):
    pass


class PcaConvergenceError(AnalysisError):
    pass


class LabelCountMismatchError(InvalidParameterError):
    pass


# stats ----------------------------------------------------------------------

class ConstantXError(AnalysisError):
    pass


class LengthMismatchError(InvalidParameterError):
    pass


class EmptyJoinError(InputError):
    pass


# choropleth -----------------------------------------------------------------

class UnmappableRegionError(AnalysisError):
    pass


class TooFewYearsError(InputError):
    pass


# cli ------------------------------------------------------------------------

class ConfigError(InputError):
    """Invalid run configuration (flags or --config file)."""
