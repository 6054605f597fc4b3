"""Exception hierarchy shared by all gazemap modules."""


class GazemapError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(GazemapError):
    """Invalid configuration value or unknown configuration key."""


class ParseError(GazemapError):
    """Malformed input file (scene manifest, mesh, fixation log)."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix += f"{path}: "
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)


class GazeOutsideFrustumError(GazemapError):
    """The 4-sigma gaze cone does not fully intersect the near clip plane."""


class InvalidFrustumError(GazemapError):
    """Degenerate frustum bounds (left >= right, bottom >= top, or bad n/f)."""


class LayoutMismatchError(GazemapError):
    """A persisted density map does not match the current scene layout."""
