"""Exception hierarchy for the floormap pipeline."""


class FloormapError(Exception):
    """Base class for all pipeline errors."""


# ingest
class MalformedHeader(FloormapError):
    pass


class NonFiniteCoordinate(FloormapError):
    pass


class EmptyCloud(FloormapError):
    pass


class NonPositiveVoxel(FloormapError):
    pass


# ceiling
class DegenerateGeometry(FloormapError):
    pass


# density
class TooFewPoints(FloormapError):
    pass


class DegenerateExtent(FloormapError):
    pass


class PointOutsideFrame(FloormapError):
    pass


class EmptyCounts(FloormapError):
    pass


class IoFailure(FloormapError):
    pass


# prompts
class EmptyRaster(FloormapError):
    pass


# segmentation
class BackendUnavailable(FloormapError):
    pass


class FrameMismatch(FloormapError):
    pass


class DecodeFailure(FloormapError):
    pass


# mask filtering
class DimensionMismatch(FloormapError):
    pass


class NoCandidates(FloormapError):
    pass


# contour
class MultipleComponents(FloormapError):
    pass


class DegenerateAfterMerge(FloormapError):
    pass


# topology
class OverlappingRooms(FloormapError):
    pass


# evaluation
class EmptyGroundTruth(FloormapError):
    pass


# synthetic generation
class InvalidLayout(FloormapError):
    pass


class StageError(FloormapError):
    """Wraps an error raised inside a pipeline stage with the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}': {cause}")
        self.stage = stage
        self.cause = cause
