"""Fock-state quadrature densities and binned measurement kernels.

Conventions
-----------
Quadratures are scaled so the vacuum variance is 1/2, i.e. the harmonic
oscillator eigenfunctions are

    psi_n(x) = (2^n n! sqrt(pi))^{-1/2} H_n(x) exp(-x^2/2),

and a Fock state |n> has quadrature support out to roughly sqrt(2n+1).
With detection efficiency ``eta`` the n-photon quadrature density becomes a
binomial mixture of ideal densities,

    A_n(x) = sum_k C(n,k) eta^k (1-eta)^{n-k} psi_k(x)^2,

which is the form used throughout for production code.  The equivalent
Gaussian-smearing form (convolving psi_n(x/sqrt(eta))^2 with a normal kernel
of variance (1-eta)/2) is provided as an independent cross-check route.

A :class:`KernelMatrix` collects per-bin integrals A[nu][n] of A_n over a
uniform :class:`BinGrid`; these are the response matrices consumed by the
expectation-maximization reconstruction.
"""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .errors import ColumnDeficitError, CutoffTooLargeError, FileFormatError, ValidationError

logger = logging.getLogger(__name__)

# Above this the recurrence is still finite but callers almost certainly
# passed a nonsense cutoff; refuse instead of burning memory.
MAX_FOCK_N = 10_000

_KERNEL_MAGIC = b"EMTKERN1"
_KERNEL_VERSION = 1
_KERNEL_HEADER = struct.Struct("<8sIIddqqd8x")  # 64 bytes


def _check_order_n(n: int) -> int:
    if not isinstance(n, (int, np.integer)):
        raise ValidationError(f"photon number must be an integer, got {n!r}")
    if n < 0:
        raise ValidationError(f"photon number must be >= 0, got {n}")
    if n > MAX_FOCK_N:
        raise CutoffTooLargeError(
            f"photon number {n} exceeds the supported maximum {MAX_FOCK_N}"
        )
    return int(n)


def fock_wavefunctions(n_max: int, x) -> np.ndarray:
    """Evaluate psi_0 .. psi_n_max at the given quadrature values.

    Parameters
    ----------
    n_max : int
        Highest photon number to evaluate (inclusive).
    x : array_like
        Quadrature values; any shape.

    Returns
    -------
    ndarray
        Array of shape ``(n_max + 1,) + shape(x)`` with psi_n along axis 0.

    Notes
    -----
    Uses the stable three-term recurrence

        psi_n = sqrt(2/n) x psi_{n-1} - sqrt((n-1)/n) psi_{n-2},

    never forming Hermite polynomial coefficients, so it stays accurate and
    overflow-free for large n.  The recurrence maps x -> -x to an exact sign
    flip, so psi_n(-x) == (-1)^n psi_n(x) holds bit-for-bit.
    """
    n_max = _check_order_n(n_max)
    xs = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xs)):
        raise ValidationError("quadrature values must be finite")
    out = np.empty((n_max + 1,) + xs.shape, dtype=float)
    out[0] = np.pi ** (-0.25) * np.exp(-0.5 * xs * xs)
    if n_max >= 1:
        out[1] = np.sqrt(2.0) * xs * out[0]
    for n in range(2, n_max + 1):
        out[n] = np.sqrt(2.0 / n) * xs * out[n - 1] - np.sqrt((n - 1) / n) * out[n - 2]
    return out


def fock_wavefunction(n: int, x):
    """Harmonic oscillator eigenfunction psi_n(x) (vacuum variance 1/2)."""
    n = _check_order_n(n)
    xs = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xs)):
        raise ValidationError("quadrature values must be finite")
    # Rolling two-term version of the recurrence in fock_wavefunctions.
    prev = np.pi ** (-0.25) * np.exp(-0.5 * xs * xs)
    if n == 0:
        return prev if np.ndim(x) else float(prev)
    cur = np.sqrt(2.0) * xs * prev
    for k in range(2, n + 1):
        cur, prev = np.sqrt(2.0 / k) * xs * cur - np.sqrt((k - 1) / k) * prev, cur
    return cur if np.ndim(x) else float(cur)


def _binomial_mixture_matrix(n_max: int, eta: float) -> np.ndarray:
    """Lower-triangular M with M[n, k] = C(n,k) eta^k (1-eta)^(n-k)."""
    ns = np.arange(n_max + 1)
    m = np.zeros((n_max + 1, n_max + 1))
    for n in ns:
        m[n, : n + 1] = binom.pmf(np.arange(n + 1), n, eta)
    return m


def _check_eta(eta: float) -> float:
    eta = float(eta)
    if not 0.0 < eta <= 1.0:
        raise ValidationError(f"efficiency must lie in (0, 1], got {eta}")
    return eta


def lossy_fock_quadrature_density(n: int, x, eta: float):
    """Quadrature density of Fock state |n> detected with efficiency eta.

    Computed as the binomial mixture sum_k C(n,k) eta^k (1-eta)^(n-k)
    psi_k(x)^2; for eta == 1 this reduces to psi_n(x)^2 exactly.
    """
    n = _check_order_n(n)
    eta = _check_eta(eta)
    psi2 = fock_wavefunctions(n, x) ** 2
    if eta == 1.0:
        out = psi2[n]
    else:
        weights = binom.pmf(np.arange(n + 1), n, eta)
        out = np.tensordot(weights, psi2, axes=(0, 0))
    return out if np.ndim(x) else float(out)


def lossy_fock_quadrature_density_convolution(
    n: int, x, eta: float, *, quad_order: int = 200, tail_sigmas: float = 10.0
):
    """Same density as :func:`lossy_fock_quadrature_density`, via smearing.

    Direct numerical convolution of eta^{-1/2} psi_n(x'/sqrt(eta))^2 with a
    Gaussian of variance (1-eta)/2.  Kept as an independent route for
    cross-checks; the mixture form is what production code uses.  Evaluation
    uses |x| (the density is even) so the two routes stay comparable on
    symmetric grids.
    """
    n = _check_order_n(n)
    eta = _check_eta(eta)
    xs = np.abs(np.asarray(x, dtype=float))
    if eta == 1.0:
        out = fock_wavefunctions(n, xs)[n] ** 2
        return out if np.ndim(x) else float(out)
    var = 0.5 * (1.0 - eta)
    sigma = np.sqrt(var)
    # Integrate over the Gaussian window; the ideal density is bounded so a
    # +-10 sigma window leaves a tail far below 1e-12.
    t, w = np.polynomial.legendre.leggauss(quad_order)
    u = tail_sigmas * sigma * t  # offsets from x
    gauss = np.exp(-(u * u) / (2.0 * var)) / np.sqrt(2.0 * np.pi * var)
    pts = xs[..., None] - u  # shape x-shape + (quad_order,)
    psi = fock_wavefunction(n, (pts / np.sqrt(eta)).ravel())
    # density of the eta-scaled variable: psi_n(x'/sqrt(eta))^2 / sqrt(eta)
    ideal = np.reshape(np.asarray(psi) ** 2, pts.shape) / np.sqrt(eta)
    out = (tail_sigmas * sigma) * np.sum(w * gauss * ideal, axis=-1)
    return out if np.ndim(x) else float(out)


@dataclass(frozen=True)
class BinGrid:
    """Uniform binning of a quadrature interval.

    ``edges`` are built as center + (k - bin_count/2) * width, which makes a
    symmetric grid (x_min == -x_max) mirror-exact in floating point; several
    symmetry invariants of the kernel rely on that.
    """

    x_min: float
    x_max: float
    bin_count: int

    def __post_init__(self):
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)):
            raise ValidationError("bin range must be finite")
        if not self.x_max > self.x_min:
            raise ValidationError(
                f"empty bin range: x_min={self.x_min}, x_max={self.x_max}"
            )
        if int(self.bin_count) < 1:
            raise ValidationError(f"bin_count must be >= 1, got {self.bin_count}")
        object.__setattr__(self, "x_min", float(self.x_min))
        object.__setattr__(self, "x_max", float(self.x_max))
        object.__setattr__(self, "bin_count", int(self.bin_count))

    @property
    def width(self) -> float:
        return (self.x_max - self.x_min) / self.bin_count

    @property
    def edges(self) -> np.ndarray:
        center = 0.5 * (self.x_min + self.x_max)
        offsets = (np.arange(self.bin_count + 1) - 0.5 * self.bin_count) * self.width
        return center + offsets

    @property
    def centers(self) -> np.ndarray:
        edges = self.edges
        return 0.5 * (edges[:-1] + edges[1:])

    def bin_indices(self, x: np.ndarray) -> np.ndarray:
        """Map samples to bin indices; out-of-range samples map to -1."""
        xs = np.asarray(x, dtype=float)
        idx = np.floor((xs - self.x_min) / self.width).astype(np.int64)
        # right edge belongs to the last bin
        idx[xs == self.x_max] = self.bin_count - 1
        idx[(xs < self.x_min) | (xs > self.x_max)] = -1
        return idx


@dataclass(frozen=True)
class KernelMatrix:
    """Bin-integrated lossy Fock densities A[nu][n] on a :class:`BinGrid`."""

    grid: BinGrid
    n_max: int
    eta: float
    entries: np.ndarray  # shape (bin_count, n_max + 1)
    column_deficits: np.ndarray  # 1 - column sums, shape (n_max + 1,)

    def __post_init__(self):
        expected = (self.grid.bin_count, self.n_max + 1)
        if self.entries.shape != expected:
            raise ValidationError(
                f"kernel entries shape {self.entries.shape} != {expected}"
            )

    @property
    def column_sums(self) -> np.ndarray:
        return 1.0 - self.column_deficits


def _ideal_bin_integrals(grid: BinGrid, n_max: int, order: int) -> np.ndarray:
    """Per-bin Gauss-Legendre integrals of psi_n^2, shape (bins, n_max+1).

    Nodes and weights are symmetrized and each bin's quadrature sum is folded
    over node pairs (j, order-1-j) before accumulation, so that on a
    symmetric grid mirror bins produce bit-identical rows.
    """
    t, w = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (t - t[::-1])
    w = 0.5 * (w + w[::-1])
    edges = grid.edges
    centers = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * grid.width
    pts = centers[:, None] + half * t[None, :]  # (bins, order)
    psi2 = fock_wavefunctions(n_max, pts.ravel()) ** 2
    psi2 = psi2.reshape(n_max + 1, grid.bin_count, order)
    vals = w[None, None, :] * psi2
    h = order // 2
    folded = vals[..., :h] + vals[..., ::-1][..., :h]
    if order % 2:
        folded = np.concatenate([folded, vals[..., h : h + 1]], axis=-1)
    return half * np.sum(folded, axis=-1).T  # (bins, n_max+1)


def build_kernel_matrix(
    grid: BinGrid,
    n_max: int,
    eta: float,
    *,
    max_column_deficit: float | None = 1e-6,
    initial_quad_order: int = 8,
    quad_tol: float = 1e-12,
) -> KernelMatrix:
    """Integrate the lossy Fock densities over every bin of a grid.

    Parameters
    ----------
    grid : BinGrid
        Uniform quadrature binning.
    n_max : int
        Largest photon number (columns run 0 .. n_max).
    eta : float
        Detection efficiency in (0, 1].
    max_column_deficit : float or None
        Refuse (raise :class:`ColumnDeficitError`) if any column sums to less
        than ``1 - max_column_deficit``: the reconstruction silently loses
        probability when the grid does not cover the cutoff's support.  Pass
        ``None`` to skip the check, e.g. to reproduce published runs whose
        grid clips the highest columns.
    initial_quad_order : int
        Starting Gauss-Legendre order; doubled until entries move < quad_tol.
    quad_tol : float
        Convergence tolerance for the order-doubling loop.

    Returns
    -------
    KernelMatrix
    """
    n_max = _check_order_n(n_max)
    eta = _check_eta(eta)
    order = max(2, int(initial_quad_order))
    if order % 2:
        order += 1
    ideal = _ideal_bin_integrals(grid, n_max, order)
    while True:
        order *= 2
        if order > 512:
            raise ValidationError(
                "bin quadrature did not converge; bins are too coarse for "
                f"n_max={n_max}"
            )
        refined = _ideal_bin_integrals(grid, n_max, order)
        delta = float(np.max(np.abs(refined - ideal)))
        ideal = refined
        if delta < quad_tol:
            break
    logger.debug("kernel quadrature converged at order %d (delta %.3g)", order, delta)
    if eta == 1.0:
        entries = ideal
    else:
        entries = ideal @ _binomial_mixture_matrix(n_max, eta).T
    deficits = 1.0 - entries.sum(axis=0)
    if max_column_deficit is not None:
        worst = int(np.argmax(deficits))
        if deficits[worst] > max_column_deficit:
            raise ColumnDeficitError(
                f"kernel column n={worst} sums to {1.0 - deficits[worst]:.6g} "
                f"(deficit {deficits[worst]:.3g} > {max_column_deficit:.3g}); "
                "widen the bin range or lower the cutoff"
            )
    return KernelMatrix(grid=grid, n_max=n_max, eta=eta, entries=entries,
                        column_deficits=deficits)


def save_kernel(path: str, kernel: KernelMatrix) -> None:
    """Write a kernel to the binary cache format.

    Layout: a 64-byte little-endian header (magic ``EMTKERN1``, version,
    flags, x_min, x_max, bin_count, n_max, eta) followed by the entries as
    row-major float64.
    """
    header = _KERNEL_HEADER.pack(
        _KERNEL_MAGIC,
        _KERNEL_VERSION,
        0,
        kernel.grid.x_min,
        kernel.grid.x_max,
        kernel.grid.bin_count,
        kernel.n_max,
        kernel.eta,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(kernel.entries, dtype="<f8").tobytes())


def load_kernel(path: str) -> KernelMatrix:
    """Read a kernel cache file written by :func:`save_kernel`."""
    with open(path, "rb") as fh:
        header = fh.read(_KERNEL_HEADER.size)
        if len(header) != _KERNEL_HEADER.size:
            raise FileFormatError(f"{path}: truncated kernel header")
        magic, version, _flags, x_min, x_max, bins, n_max, eta = _KERNEL_HEADER.unpack(header)
        if magic != _KERNEL_MAGIC:
            raise FileFormatError(f"{path}: not a kernel cache file")
        if version != _KERNEL_VERSION:
            raise FileFormatError(f"{path}: unsupported kernel version {version}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if bins < 1 or n_max < 0:
        raise FileFormatError(f"{path}: invalid kernel dimensions {bins} x {n_max + 1}")
    if data.size != bins * (n_max + 1):
        raise FileFormatError(
            f"{path}: expected {bins * (n_max + 1)} entries, found {data.size}"
        )
    entries = data.reshape(bins, n_max + 1).astype(float)
    if not np.all(np.isfinite(entries)):
        raise FileFormatError(f"{path}: kernel entries contain non-finite values")
    grid = BinGrid(x_min, x_max, bins)
    return KernelMatrix(grid=grid, n_max=int(n_max), eta=float(eta), entries=entries,
                        column_deficits=1.0 - entries.sum(axis=0))


def load_or_build_kernel(
    path: str | None,
    grid: BinGrid,
    n_max: int,
    eta: float,
    **build_kwargs,
) -> KernelMatrix:
    """Fetch a kernel from a cache file, rebuilding on miss or key mismatch."""
    if path is None:
        return build_kernel_matrix(grid, n_max, eta, **build_kwargs)
    if os.path.exists(path):
        try:
            cached = load_kernel(path)
        except FileFormatError:
            logger.warning("kernel cache %s unreadable; rebuilding", path)
        else:
            if (
                cached.grid == grid
                and cached.n_max == n_max
                and cached.eta == float(eta)
            ):
                logger.debug("kernel cache hit: %s", path)
                return cached
            logger.info("kernel cache %s keyed differently; rebuilding", path)
    kernel = build_kernel_matrix(grid, n_max, eta, **build_kwargs)
    save_kernel(path, kernel)
    return kernel
