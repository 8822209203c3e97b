"""Exception hierarchy shared by the library, CLI and service.

The CLI maps these onto its exit codes: :class:`MissingDataError` -> 2,
:class:`FormatError` and :class:`ConfigError` -> 3.
"""


class CamoBenchError(Exception):
    pass


class FormatError(CamoBenchError, ValueError):
    """Malformed file content. ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class AnnotationError(FormatError):
    """Well-formed but invalid annotation, e.g. a present box with w <= 0."""


class MissingDataError(CamoBenchError, FileNotFoundError):
    pass


class ConfigError(CamoBenchError, ValueError):
    pass


class EmptyEvaluationError(CamoBenchError, ValueError):
    pass


class NonFiniteError(CamoBenchError, FloatingPointError):
    pass


class FixtureError(CamoBenchError):
    pass
