"""Maximum-likelihood homodyne tomography.

Simulate balanced homodyne detection of small optical states, recover
phase-space-displaced photon-number distributions from the (lossy) samples
by expectation-maximization, and assemble Wigner functions point by point,
with exact reference values available for every step.
"""

from .em import (
    EmDiagnostics,
    Histogram,
    PhotonDistribution,
    default_cutoff,
    em_step,
    log_likelihood,
    reconstruct_photon_distribution,
)
from .errors import (
    ColumnDeficitError,
    CutoffTooLargeError,
    EmptyHistogramError,
    FileFormatError,
    ModelZeroError,
    ShiftOverflowError,
    TabulationRangeError,
    TomographyError,
    TruncationError,
    ValidationError,
)
from .fock_kernel import (
    BinGrid,
    KernelMatrix,
    build_kernel_matrix,
    fock_wavefunction,
    fock_wavefunctions,
    load_kernel,
    load_or_build_kernel,
    lossy_fock_quadrature_density,
    save_kernel,
)
from .homodyne import (
    HomodyneRecord,
    StateSpec,
    apply_loss_channel,
    cat_state,
    coherent_state,
    fock_state,
    load_record,
    make_state,
    quadrature_density,
    sample_homodyne,
    save_record_binary,
    save_record_text,
    shift_and_histogram,
    vacuum_state,
)
from .oracle import (
    DisplacementAmplitudes,
    displaced_photon_distribution,
    displacement_amplitudes,
    s_ordered_quasidistribution,
    wigner_exact,
    wigner_exact_grid,
)
from .pipeline import (
    PointDiagnostics,
    ReconstructionConfig,
    WignerGrid,
    compare_wigner_grids,
    load_wigner_grid,
    oracle_wigner_grid,
    reconstruct_wigner_grid,
    reconstruct_wigner_point,
    save_wigner_grid,
    wigner_from_distribution,
    write_gnuplot_files,
)

__version__ = "0.1.0"

__all__ = [
    "BinGrid",
    "ColumnDeficitError",
    "CutoffTooLargeError",
    "DisplacementAmplitudes",
    "EmDiagnostics",
    "EmptyHistogramError",
    "FileFormatError",
    "Histogram",
    "HomodyneRecord",
    "KernelMatrix",
    "ModelZeroError",
    "PhotonDistribution",
    "PointDiagnostics",
    "ReconstructionConfig",
    "ShiftOverflowError",
    "StateSpec",
    "TabulationRangeError",
    "TomographyError",
    "TruncationError",
    "ValidationError",
    "WignerGrid",
    "apply_loss_channel",
    "build_kernel_matrix",
    "cat_state",
    "coherent_state",
    "compare_wigner_grids",
    "default_cutoff",
    "displaced_photon_distribution",
    "displacement_amplitudes",
    "em_step",
    "fock_state",
    "fock_wavefunction",
    "fock_wavefunctions",
    "load_kernel",
    "load_or_build_kernel",
    "load_record",
    "load_wigner_grid",
    "log_likelihood",
    "lossy_fock_quadrature_density",
    "make_state",
    "oracle_wigner_grid",
    "quadrature_density",
    "reconstruct_photon_distribution",
    "reconstruct_wigner_grid",
    "reconstruct_wigner_point",
    "s_ordered_quasidistribution",
    "sample_homodyne",
    "save_kernel",
    "save_record_binary",
    "save_record_text",
    "save_wigner_grid",
    "shift_and_histogram",
    "vacuum_state",
    "wigner_exact",
    "wigner_exact_grid",
    "wigner_from_distribution",
    "write_gnuplot_files",
]
