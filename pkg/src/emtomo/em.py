"""Expectation-maximization recovery of photon-number distributions.

Given a histogram of (phase-averaged, shifted) quadrature samples with bin
frequencies p_nu and a kernel A[nu][n] of bin-integrated n-photon densities,
the iteration

    rho_n  <-  rho_n * sum_nu A[nu][n] p_nu / (A rho)_nu

increases the log-likelihood  L(rho) = sum_nu p_nu ln (A rho)_nu  at every
step and converges to the maximum-likelihood photon-number distribution.
Bins with zero counts drop out of the update, and each iterate is
renormalized by its own sum to absorb the small probability the kernel
columns lose to the finite bin range.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyHistogramError,
    ModelZeroError,
    ValidationError,
)
from .fock_kernel import BinGrid, KernelMatrix

logger = logging.getLogger(__name__)

# Cadence (in iterations) of the plateau test; the stopping rule compares
# log-likelihood gains across windows of this many iterations.
PLATEAU_WINDOW = 100


@dataclass
class Histogram:
    """Binned quadrature samples.

    ``overflow`` counts samples that fell outside the grid and were dropped;
    it is carried along so downstream guards can reject reconstructions that
    lost too much data.
    """

    grid: BinGrid
    counts: np.ndarray
    overflow: int = 0

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.shape != (self.grid.bin_count,):
            raise ValidationError(
                f"counts shape {counts.shape} does not match {self.grid.bin_count} bins"
            )
        if np.any(counts < 0):
            raise ValidationError("histogram counts must be non-negative")
        self.counts = counts.astype(np.int64)
        self.overflow = int(self.overflow)

    @classmethod
    def from_samples(cls, grid: BinGrid, samples) -> "Histogram":
        xs = np.asarray(samples, dtype=float).ravel()
        idx = grid.bin_indices(xs)
        inside = idx >= 0
        counts = np.bincount(idx[inside], minlength=grid.bin_count)
        return cls(grid=grid, counts=counts, overflow=int(np.count_nonzero(~inside)))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def frequencies(self) -> np.ndarray:
        """Relative frequencies p_nu (they sum to 1 over the grid)."""
        total = self.total
        if total == 0:
            raise EmptyHistogramError("histogram holds no counts")
        return self.counts / total


@dataclass
class PhotonDistribution:
    """A photon-number probability vector rho_0 .. rho_n_max."""

    probs: np.ndarray
    atol: float = 1e-12

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise ValidationError("photon distribution must be a nonempty vector")
        if not np.all(np.isfinite(probs)):
            raise ValidationError("photon distribution contains non-finite entries")
        if np.any(probs < 0):
            raise ValidationError("photon distribution has negative entries")
        if abs(probs.sum() - 1.0) > self.atol:
            raise ValidationError(
                f"photon distribution sums to {probs.sum()!r}, outside tolerance {self.atol}"
            )
        self.probs = probs

    @property
    def n_max(self) -> int:
        return self.probs.size - 1

    def mean(self) -> float:
        return float(np.arange(self.probs.size) @ self.probs)


@dataclass
class EmDiagnostics:
    """Progress record of one EM run."""

    iterations_run: int
    trace_iterations: np.ndarray
    loglik_trace: np.ndarray
    final_loglik: float
    converged: bool
    stop_reason: str
    renorm_correction: float = 0.0  # largest |1 - sum| absorbed by renormalization

    def as_table(self) -> str:
        lines = ["# iteration loglik"]
        for it, ll in zip(self.trace_iterations, self.loglik_trace):
            lines.append(f"{int(it)} {ll:.17g}")
        return "\n".join(lines) + "\n"

    def save_table(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(self.as_table())


def _check_pair(frequencies: np.ndarray, entries: np.ndarray, rho: np.ndarray):
    p = np.asarray(frequencies, dtype=float)
    a = np.asarray(entries, dtype=float)
    r = np.asarray(rho, dtype=float)
    if a.ndim != 2:
        raise ValidationError("kernel entries must be a 2-d array")
    if p.shape != (a.shape[0],):
        raise ValidationError(
            f"frequency vector length {p.shape} does not match {a.shape[0]} kernel rows"
        )
    if r.shape != (a.shape[1],):
        raise ValidationError(
            f"distribution length {r.shape} does not match {a.shape[1]} kernel columns"
        )
    return p, a, r


def log_likelihood_frequencies(frequencies, entries, rho) -> float:
    """L = sum_nu p_nu ln (A rho)_nu with the 0 ln 0 convention."""
    p, a, r = _check_pair(frequencies, entries, rho)
    active = p > 0
    model = a[active] @ r
    if np.any(model <= 0.0):
        raise ModelZeroError(
            "model density vanishes on a bin with observed counts"
        )
    return float(p[active] @ np.log(model))


def em_step_frequencies(frequencies, entries, rho) -> np.ndarray:
    """One expectation-maximization update of the photon distribution."""
    p, a, r = _check_pair(frequencies, entries, rho)
    active = p > 0
    model = a[active] @ r
    if np.any(model <= 0.0):
        raise ModelZeroError("model density vanishes on a bin with observed counts")
    new = r * (a[active].T @ (p[active] / model))
    s = new.sum()
    if not s > 0:
        raise ModelZeroError("update annihilated the distribution")
    if abs(1.0 - s) > 1e-12:
        logger.debug("EM renormalization correction %.3g", 1.0 - s)
    return new / s


def log_likelihood(hist: Histogram, kernel: KernelMatrix, rho) -> float:
    """Histogram-level wrapper around :func:`log_likelihood_frequencies`."""
    if hist.grid != kernel.grid:
        raise ValidationError("histogram and kernel use different bin grids")
    return log_likelihood_frequencies(hist.frequencies(), kernel.entries, rho)


def em_step(hist: Histogram, kernel: KernelMatrix, rho) -> np.ndarray:
    """Histogram-level wrapper around :func:`em_step_frequencies`."""
    if hist.grid != kernel.grid:
        raise ValidationError("histogram and kernel use different bin grids")
    return em_step_frequencies(hist.frequencies(), kernel.entries, rho)


def reconstruct_photon_distribution(
    hist: Histogram,
    kernel: KernelMatrix,
    *,
    max_iter: int = 10_000,
    plateau_tol: float | None = None,
    record_every: int = 100,
) -> tuple[PhotonDistribution, EmDiagnostics]:
    """Run EM from the flat start until plateau or the iteration budget.

    Parameters
    ----------
    hist, kernel
        Binned data and the matching response matrix (grids must agree).
    max_iter : int
        Iteration budget.
    plateau_tol : float or None
        If a float, stop once the log-likelihood gain over the trailing
        100-iteration window drops below it.  ``None`` (default) disables the
        plateau rule and always runs ``max_iter`` iterations, which is the
        right mode for reproducing fixed-iteration published runs.
    record_every : int
        Cadence of the diagnostic log-likelihood trace.

    Returns
    -------
    (PhotonDistribution, EmDiagnostics)

    Notes
    -----
    The flat start is deliberate and not configurable: the update rescales
    each rho_n multiplicatively, so any entry started at zero stays zero
    forever.
    """
    if hist.grid != kernel.grid:
        raise ValidationError("histogram and kernel use different bin grids")
    if max_iter < 1:
        raise ValidationError(f"max_iter must be >= 1, got {max_iter}")
    if record_every < 1:
        raise ValidationError(f"record_every must be >= 1, got {record_every}")
    p = hist.frequencies()
    active = p > 0
    a_act = np.ascontiguousarray(kernel.entries[active])
    p_act = p[active]
    dim = kernel.n_max + 1
    rho = np.full(dim, 1.0 / dim)

    def loglik(r: np.ndarray) -> float:
        model = a_act @ r
        if np.any(model <= 0.0):
            raise ModelZeroError("model density vanishes on a bin with observed counts")
        return float(p_act @ np.log(model))

    trace_its = [0]
    trace_ll = [loglik(rho)]
    prev_window_ll = trace_ll[0]
    worst_renorm = 0.0
    converged = False
    stop_reason = "max-iterations"
    it = 0
    while it < max_iter:
        it += 1
        model = a_act @ rho
        if np.any(model <= 0.0):
            raise ModelZeroError("model density vanishes on a bin with observed counts")
        rho = rho * (a_act.T @ (p_act / model))
        s = rho.sum()
        if not s > 0:
            raise ModelZeroError("update annihilated the distribution")
        worst_renorm = max(worst_renorm, abs(1.0 - s))
        rho /= s
        at_record = it % record_every == 0 or it == max_iter
        at_window = plateau_tol is not None and it % PLATEAU_WINDOW == 0
        if at_record or at_window:
            ll = loglik(rho)
            if at_record:
                trace_its.append(it)
                trace_ll.append(ll)
            if at_window:
                if ll - prev_window_ll < plateau_tol:
                    converged = True
                    stop_reason = "plateau"
                    if not at_record:
                        trace_its.append(it)
                        trace_ll.append(ll)
                    break
                prev_window_ll = ll
    diag = EmDiagnostics(
        iterations_run=it,
        trace_iterations=np.asarray(trace_its, dtype=np.int64),
        loglik_trace=np.asarray(trace_ll, dtype=float),
        final_loglik=trace_ll[-1],
        converged=converged,
        stop_reason=stop_reason,
        renorm_correction=worst_renorm,
    )
    return PhotonDistribution(rho), diag


def default_cutoff(localization_radius: float) -> int:
    """Photon-number cutoff that covers a phase-space disc of given radius.

    A state localized within radius r of the origin (in the convention where
    a coherent state alpha sits at (sqrt(2) Re alpha, sqrt(2) Im alpha)) has
    negligible support above n = r^2 / 2, so the cutoff is ceil(r^2 / 2).  A
    relative epsilon keeps radii that land exactly on a ring (r = sqrt(2n))
    from rounding one level up through floating-point noise.
    """
    r = float(localization_radius)
    if not (np.isfinite(r) and r > 0):
        raise ValidationError(f"localization radius must be positive, got {r}")
    half_sq = 0.5 * r * r
    return int(math.ceil(half_sq - 1e-12 * max(1.0, half_sq)))
