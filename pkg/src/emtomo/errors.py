"""Exception hierarchy shared by all emtomo modules.

Every error raised on a documented failure path derives from
:class:`TomographyError`.  The ``category`` attribute groups errors the way
the command line tool reports them (and maps them to exit codes there):
``"guard"`` for numerical-safety refusals, ``"config"`` for bad parameters,
``"format"`` for unreadable files.
"""


class TomographyError(Exception):
    """Base class for all errors raised by this package."""

    category = "guard"


class ValidationError(TomographyError):
    """Inconsistent or out-of-range parameters."""

    category = "config"


class FileFormatError(TomographyError):
    """A record, kernel cache, or grid file failed to parse or validate."""

    category = "format"


class CutoffTooLargeError(TomographyError):
    """Photon-number cutoff beyond the supported evaluation range."""


class ColumnDeficitError(TomographyError):
    """Kernel columns lose too much probability on the binned range."""


class ModelZeroError(TomographyError):
    """Counts observed in a bin where the model density is exactly zero."""


class TruncationError(TomographyError):
    """State or distribution does not fit the requested truncation."""


class TabulationRangeError(TomographyError):
    """Sampling density keeps leaking outside the tabulated range."""


class EmptyHistogramError(TomographyError):
    """Histogram holds no counts, so there is nothing to reconstruct."""


class ShiftOverflowError(TomographyError):
    """Too many shifted samples fall outside the histogram range."""
