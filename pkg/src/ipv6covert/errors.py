"""Exception hierarchy shared by every ipv6covert module."""


class CovertError(Exception):
    """Base class for all errors raised by this package."""


class PcapFormatError(CovertError, ValueError):
    """The capture file is not a readable classic pcap."""


class TruncatedRecordError(PcapFormatError):
    def __init__(self, index: int, detail: str = ""):
        self.index = index
        msg = f"truncated pcap record at index {index}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class PacketParseError(CovertError, ValueError):
    """Raw bytes could not be decoded as an IPv6 packet."""


class NotIPv6Error(PacketParseError):
    pass


class TruncatedPacketError(PacketParseError):
    pass


class InvalidKeyError(CovertError, ValueError):
    pass


class InvalidSecretError(CovertError, ValueError):
    pass


class IneligibleCarrierError(CovertError, ValueError):
    """A packet cannot carry the requested channel."""


class CapacityError(CovertError, ValueError):
    """Not enough carrier packets for the message."""


class InjectionInfeasibleError(CovertError, ValueError):
    def __init__(self, channel, detail: str = ""):
        self.channel = channel
        name = getattr(channel, "value", channel)
        msg = f"cannot inject {name} channel"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class FeatureCsvError(CovertError, ValueError):
    def __init__(self, line: int, detail: str):
        self.line = line
        super().__init__(f"line {line}: {detail}")


class TrainingError(CovertError, ValueError):
    """Training data is unusable (empty, single class, bad shape)."""


class ModelFormatError(CovertError, ValueError):
    """A serialized model could not be loaded."""
