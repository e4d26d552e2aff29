"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: data-type failures exit 3, numeric
failures exit 4.
"""


class GraphFuseError(Exception):
    """Base class for all package errors."""


class ShapeError(GraphFuseError, ValueError):
    pass


class SizeError(ShapeError):
    pass


class DecodeError(GraphFuseError, OSError):
    pass


class FormatError(GraphFuseError, ValueError):
    pass


class GraphError(GraphFuseError, ValueError):
    pass


class DataError(GraphFuseError):
    """Problems with a dataset listing (orphans, empty directories)."""


class CheckpointError(GraphFuseError):
    pass


class NumericError(GraphFuseError, ArithmeticError):
    pass
