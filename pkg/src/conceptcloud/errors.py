"""Exception taxonomy shared across the pipeline.

Each class carries the process exit status the CLI maps it to:
2 = validation, 3 = gateway, 4 = data integrity.
"""


class CloudError(Exception):
    exit_code = 1


class ValidationError(CloudError):
    """Bad arguments, config, or preconditions caught before any work."""

    exit_code = 2


class GatewayError(CloudError):
    """Completion backend failures: transport, replay misses, bad output."""

    exit_code = 3


class TransportError(GatewayError):
    """Retriable network or endpoint failure."""


class FixtureMissError(GatewayError):
    """No recorded response for a request digest; re-record the fixtures."""


class ResponseFormatError(GatewayError):
    """Model output does not match the expected response shape."""


class DataIntegrityError(CloudError):
    """A stored artifact violates its invariants."""

    exit_code = 4


class SchemaError(DataIntegrityError):
    """Persisted file does not match the schema this version expects."""


class StaleTableError(DataIntegrityError):
    """Assignment table was built against an older vocabulary version."""
