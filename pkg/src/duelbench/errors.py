"""Exception types shared across the package."""


class DuelBenchError(Exception):
    pass


class ConfigError(DuelBenchError, ValueError):
    """Invalid configuration or out-of-range parameters."""


class ParseError(ConfigError):
    """Function text does not match the prefix grammar.

    ``offset`` is 1-based; a missing token at end of input reports len(text) + 1.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class MalformedFunctionError(DuelBenchError):
    pass


class DegenerateDataError(DuelBenchError, ValueError):
    """Data cannot support the requested fit, split or fold layout."""


class UndefinedMetricError(DuelBenchError, ValueError):
    pass


class ShapeError(DuelBenchError, ValueError):
    pass
