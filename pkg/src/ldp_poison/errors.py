class LdpError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(LdpError, ValueError):
    pass


class DomainError(LdpError, ValueError):
    """An item or target lies outside the protocol domain."""


class ProtocolError(LdpError, TypeError):
    """A report does not match the protocol it is used with."""


class EmptyInputError(LdpError, ValueError):
    pass


class NotApplicableError(LdpError):
    """A protocol/defense/attack combination the collector cannot run."""


class IngestionError(LdpError):
    pass


class DegeneratePartitionError(LdpError):
    pass
