"""Exception hierarchy shared across the package.

Everything raised on purpose derives from :class:`RoadAnomalyError`, so
callers (including the CLI) can catch one base class. Plain I/O failures
(missing files, unwritable paths) are left to the builtin ``OSError``.
"""


class RoadAnomalyError(Exception):
    """Base class for errors raised by this package."""


class FormatError(RoadAnomalyError):
    """A serialized tensor is malformed: bad magic, unknown dtype code,
    out-of-range rank, nonzero reserved bytes, zero dims, or a payload
    whose length disagrees with the header."""


class ValidationError(RoadAnomalyError):
    """An in-memory value violates its contract (shape, dtype, range,
    finiteness, or an out-of-range configuration field)."""


class ShapeError(RoadAnomalyError):
    """Two arrays that must agree on shape do not."""


class SchemaError(RoadAnomalyError):
    """A class schema is unusable: unknown preset, non-dense targets,
    too many classes, or references to classes that do not exist."""


class DegenerateError(RoadAnomalyError):
    """A metric was asked for on data where it is undefined, e.g. ranking
    metrics with an empty positive or negative class."""


class TrainingError(RoadAnomalyError):
    """Optimization produced a non-finite loss or could not proceed."""


class ConfigError(RoadAnomalyError):
    """A config file is malformed or contains keys the command does not
    recognize."""
