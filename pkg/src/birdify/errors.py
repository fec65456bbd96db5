"""Exception types raised across the package."""


class BirdifyError(Exception):
    """Base class for all package errors."""


class NonPositiveApparentHeight(BirdifyError, ValueError):
    pass


class BehindCamera(BirdifyError, ValueError):
    pass


class DegenerateAtOrigin(BirdifyError, ValueError):
    pass


class InsufficientHistory(BirdifyError, ValueError):
    pass


class NoDetections(BirdifyError, ValueError):
    pass


class SearchSpaceTooLarge(BirdifyError, ValueError):
    pass


class MissingBootstrap(BirdifyError, KeyError):
    def __init__(self, track_id, frame=None):
        self.track_id = track_id
        self.frame = frame
        msg = f"no bootstrap position for track {track_id!r}"
        if frame is not None:
            msg += f" at frame {frame}"
        super().__init__(msg)

    def __str__(self):
        return self.args[0]


class NonMonotonicFrames(BirdifyError, ValueError):
    pass


class LengthMismatch(BirdifyError, ValueError):
    pass


class IdMismatch(BirdifyError, ValueError):
    pass


class ParseError(BirdifyError, ValueError):
    def __init__(self, path, line, column, reason):
        self.path = str(path)
        self.line = line
        self.column = column
        self.reason = reason
        super().__init__(f"{self.path}:{line}: column {column!r}: {reason}")


class EmptyDataset(BirdifyError, ValueError):
    pass


class DegenerateExtent(BirdifyError, ValueError):
    pass


class ObserverNotFound(BirdifyError, KeyError):
    def __str__(self):
        return f"observer {self.args[0]!r} not in trajectories"


class ConfigError(BirdifyError, ValueError):
    pass
