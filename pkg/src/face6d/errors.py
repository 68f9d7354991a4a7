"""Exception hierarchy shared by all face6d modules."""


class Face6dError(Exception):
    """Base class for all errors raised by this package."""


class InvariantViolation(Face6dError):
    """A domain type was constructed with data that breaks its invariants."""


class NonPositiveDepth(Face6dError):
    """A point lies at or behind the camera plane (Z <= 1e-9 m)."""

    def __init__(self, index, depth):
        self.index = index
        self.depth = depth
        super().__init__(f"point {index} has non-positive depth {depth:.3e} m")


class DegenerateConfiguration(Face6dError):
    """Point configuration does not determine the requested fit."""


class DegenerateTriangle(Face6dError):
    """Triangle signed area below the 1e-12 px^2 floor."""


class DegenerateGeometry(Face6dError):
    """World points are collinear/coincident (or planar where forbidden)."""


class BehindCamera(Face6dError):
    """Recovered pose places at least half of the points at Z <= 0."""


class NoConsensus(Face6dError):
    """RANSAC found no hypothesis with at least 4 inliers."""


class PixelOutsideFace(Face6dError):
    """A sampled pixel is not covered by any projected triangle."""

    def __init__(self, index):
        self.index = index
        super().__init__(f"pixel {index} lies outside every projected triangle")


class InvalidPixel(Face6dError):
    """A UV lookup hit a pixel with zero validity weight."""

    def __init__(self, index):
        self.index = index
        super().__init__(f"uv coordinate {index} maps to a pixel with weight 0")


class EmptyMask(Face6dError):
    """Segmentation mask has no set pixel to sample from."""


class EmptyInput(Face6dError):
    """An aggregation was asked to run over zero samples."""


class EmptyMesh(Face6dError):
    """Mesh has no vertices."""


class InvalidDimension(Face6dError):
    """Encoding dimension is not a positive multiple of 4."""


class DimensionMismatch(Face6dError):
    """Two containers that must agree in shape do not."""


class NotAProbabilityRow(Face6dError):
    """A correspondence row has negative entries or does not sum to 1."""

    def __init__(self, row, detail=""):
        self.row = row
        super().__init__(f"row {row} is not a probability distribution{detail}")


class ParseError(Face6dError):
    """Malformed input file."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class UVOverlapWarning(UserWarning):
    """Two triangles wrote conflicting values to the same UV pixel."""
