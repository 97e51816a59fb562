"""Exception hierarchy shared by every tidyroom module."""

from __future__ import annotations


class RearrangeError(Exception):
    """Base class for all domain errors raised by tidyroom."""


class InvalidScene(RearrangeError, ValueError):
    """A scene, object, floor plan or noise spec violates its invariants."""


class ClassMultisetMismatch(RearrangeError):
    """Two scenes do not contain the same number of objects per class."""


class VariantMismatch(RearrangeError):
    """A scene does not have the structure expected by a Table-Chair variant."""


class ShapeMismatch(RearrangeError):
    """Tensor or parameter shapes are incompatible."""


class NonScalarLoss(RearrangeError):
    """backward() was called on a tensor holding more than one value."""


class ClassOutOfRange(RearrangeError):
    """An object's class_id or shape_id is outside the configured vocabulary."""


class DegeneratePolygon(RearrangeError):
    """A floor plan has zero perimeter or degenerate edges."""


class DegenerateInput(RearrangeError):
    """PSLQ was given an all-zero or non-finite vector."""


class UntrainedParams(RearrangeError):
    """Parameters do not match the shapes implied by a DenoiserConfig."""


class TooFewObjects(RearrangeError):
    """A scene has fewer objects than the requested subset size."""


class EmptyDataset(RearrangeError):
    """The training data source produced no scenes."""


class ConfigError(RearrangeError):
    """Configuration is malformed, has unknown keys, or violates constraints."""


class IncompatibleCheckpoint(RearrangeError):
    """A checkpoint file cannot be used with the requested configuration."""


class MismatchedSets(RearrangeError):
    """Prediction and ground-truth scene directories do not pair up."""
