"""Exception types raised across the toolkit."""


class FlowSSMError(Exception):
    """Base class for all toolkit errors."""


class DataError(FlowSSMError):
    """Input data is malformed or violates a format contract."""


# packet_io
class BadMagic(DataError):
    pass


class TruncatedRecord(DataError):
    pass


class UnsupportedLinkType(DataError):
    pass


class OversizedPacket(DataError):
    pass


# flow_assembly / field_codec
class NotIPv4(DataError):
    pass


class NotEthernet(DataError):
    pass


class HeaderTruncated(DataError):
    pass


# byte_tokenizer
class UnknownLabel(DataError):
    pass


class CorpusFormatError(DataError):
    pass


# ssm_core / train_engine
class SequenceTooLong(DataError):
    pass


class EmptyCorpus(DataError):
    pass


class ModelFormatError(DataError):
    pass


# trace_generator
class SeedTooLong(DataError):
    pass


class InvalidSeed(DataError):
    pass


# similarity_eval
class EmptyInput(DataError):
    pass
