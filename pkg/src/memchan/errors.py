"""Exception types shared across the package."""


class ResourceCapError(RuntimeError):
    """Raised when a computation would exceed a configured size cap."""


class ConfigError(ValueError):
    """Raised for malformed or inconsistent run configurations.

    ``field`` names the offending config entry (dotted path) when known.
    """

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
