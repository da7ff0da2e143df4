"""Exception types shared across the package."""


class EstimationError(RuntimeError):
    """A test could not be carried out because estimation or posterior
    sampling failed on the observed sample.

    The harness records such repetitions as missing p-values.
    """


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class ResultParseError(ValueError):
    """Malformed result or data file."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)
