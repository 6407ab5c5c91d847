"""Exception hierarchy shared across stagerbench modules."""


class StagerBenchError(ValueError):
    """Base class for every error raised by stagerbench."""


# edf_io
class EdfError(StagerBenchError):
    pass


class TruncatedHeader(EdfError):
    pass


class MalformedNumericField(EdfError):
    pass


class InconsistentHeaderBytes(EdfError):
    pass


class InvalidSignalSpec(EdfError):
    pass


class TruncatedRecord(EdfError):
    pass


class OddByteCount(EdfError):
    pass


class ChannelNotFound(EdfError):
    pass


# sigprep
class ZeroRate(StagerBenchError):
    pass


class EmptyTrace(StagerBenchError):
    pass


class InvalidBand(StagerBenchError):
    pass


class ZeroVariance(StagerBenchError):
    pass


class MismatchedChannelLengths(StagerBenchError):
    pass


class WrongFrameLength(StagerBenchError):
    pass


# core
class UnknownStageCode(StagerBenchError):
    pass


class NegativeAhi(StagerBenchError):
    pass


class InvalidProbabilities(StagerBenchError):
    pass


# ensemble / metrics / error analysis
class EmptyStagerSet(StagerBenchError):
    pass


class LengthMismatch(StagerBenchError):
    pass


class WeightDimensionMismatch(StagerBenchError):
    pass


class NoLabels(StagerBenchError):
    pass


class DegenerateKappa(StagerBenchError):
    pass


class SingleStager(StagerBenchError):
    pass


class IndexOutOfRange(StagerBenchError, IndexError):
    pass


# clinical
class EmptyHypnogram(StagerBenchError):
    pass


class TooFewPairs(StagerBenchError):
    pass


# cohort
class InvalidStochasticMatrix(StagerBenchError):
    pass


class PipelineFailure(StagerBenchError):
    """Raised when no recording of a run could be processed."""
