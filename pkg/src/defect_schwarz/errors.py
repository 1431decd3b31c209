"""Exception hierarchy shared by all modules."""


class DefectSchwarzError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(DefectSchwarzError, ValueError):
    """Invalid mesh, model or experiment parameters."""


class DimensionError(DefectSchwarzError, ValueError):
    """Operand shapes do not match."""


class TripletIndexError(DefectSchwarzError, IndexError):
    def __init__(self, position, row, col, nrows, ncols):
        self.position = position
        self.row = row
        self.col = col
        super().__init__(
            f"triplet #{position} ({row}, {col}) out of range for a {nrows}x{ncols} matrix"
        )


class SymmetryError(DefectSchwarzError, ValueError):
    """An operator expected to be symmetric is not."""


class SpdViolationError(DefectSchwarzError, ValueError):
    """A matrix or quadratic form expected to be positive definite is not.

    Usually a sign of wrong boundary handling or a non-elliptic coefficient.
    """


class SizeGuardError(DefectSchwarzError, ValueError):
    """Dense computation requested above the desk-scale size guard."""


class PcgDivergenceError(DefectSchwarzError, ArithmeticError):
    def __init__(self, iteration, message):
        self.iteration = iteration
        super().__init__(f"iteration {iteration}: {message}")


class IndefinitePreconditionerError(PcgDivergenceError):
    """<z, r> <= 0 during PCG: the preconditioner is not positive definite."""


class DegenerateOperatorError(DefectSchwarzError, ValueError):
    """Reference operator maps a test vector to zero."""


class CacheFormatError(DefectSchwarzError, ValueError):
    """Dictionary cache file is malformed or belongs to other parameters."""
