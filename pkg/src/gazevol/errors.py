"""Exception hierarchy; each class carries the CLI exit code it maps to."""


class GazeVolError(Exception):
    exit_code = 3


class InputError(GazeVolError, ValueError):
    """Malformed or inconsistent input data (files, parameters)."""

    exit_code = 1


class AlignmentError(GazeVolError):
    """Homography could not be estimated or applied."""

    exit_code = 2


class DegenerateConfigurationError(AlignmentError):
    pass


class InvariantError(GazeVolError):
    """An internal invariant was violated."""

    exit_code = 3
