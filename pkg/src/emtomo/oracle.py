"""Reconstruction-independent reference values for validating the pipeline.

Everything here is computed directly from the density matrix, never from
histograms or EM output, so these values can arbitrate whether a
reconstruction is right.  The central object is the photon-number
distribution of the displaced state,

    rho_n(q, p) = <n| D(beta)^dag rho D(beta) |n>,    beta = (q + i p)/sqrt(2),

from which the Wigner function follows as W = (1/pi) sum_n (-1)^n rho_n and
s-ordered smoothings by Gaussian convolution.  Phase-space coordinates are
scaled so a coherent state alpha is centered at (sqrt(2) Re alpha,
sqrt(2) Im alpha) and the vacuum Wigner function is exp(-q^2-p^2)/pi.

Displacement matrix elements use the associated-Laguerre closed form

    <m|D(beta)|n> = sqrt(n!/m!) beta^{m-n} e^{-|beta|^2/2} L_n^{(m-n)}(|beta|^2)

(for m >= n; the transpose-conjugate relation covers m < n) with the
factorial ratio evaluated through gammaln.  The textbook two-term
recurrences in m or n look cheaper but shed digits catastrophically beyond
|beta| of about 2 at the block sizes needed here, while this form stays at
machine precision (it is cross-checked against a matrix exponential in the
test suite).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from .em import PhotonDistribution
from .errors import TruncationError, ValidationError
from .homodyne import StateSpec

logger = logging.getLogger(__name__)

# Displaced-distribution mass allowed above the cutoff before refusing.
DISPLACED_TAIL_TOL = 1e-8


@dataclass(frozen=True)
class DisplacementAmplitudes:
    """Matrix block <m|D(beta)|n>, m < rows, n < cols."""

    beta: complex
    rows: int
    cols: int
    entries: np.ndarray

    def column_norm_defects(self) -> np.ndarray:
        """1 - sum_m |D_mn|^2 per column; tends to 0 as rows grow."""
        return 1.0 - np.sum(np.abs(self.entries) ** 2, axis=0)


def displacement_amplitudes(beta: complex, rows: int, cols: int) -> DisplacementAmplitudes:
    """Evaluate the displacement operator block <m|D(beta)|n>."""
    if rows < 1 or cols < 1:
        raise ValidationError("displacement block must have at least one row and column")
    beta = complex(beta)
    if beta == 0:
        entries = np.eye(rows, cols, dtype=complex)
        return DisplacementAmplitudes(beta=beta, rows=rows, cols=cols, entries=entries)
    m = np.arange(rows)[:, None]
    n = np.arange(cols)[None, :]
    lo = np.minimum(m, n)
    hi = np.maximum(m, n)
    k = hi - lo
    x = abs(beta) ** 2
    log_mag = 0.5 * (gammaln(lo + 1.0) - gammaln(hi + 1.0)) - 0.5 * x
    lag = eval_genlaguerre(lo, k, x)
    factor = np.where(m >= n, beta, -np.conj(beta)) ** k
    entries = np.exp(log_mag) * lag * factor
    return DisplacementAmplitudes(beta=beta, rows=rows, cols=cols, entries=entries)


def _displaced_diagonals(state: StateSpec, qs: np.ndarray, ps: np.ndarray,
                         n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Displaced photon distributions for a batch of phase-space points.

    Returns (probs, tails): probs has shape (len(qs), n_max + 1), tails the
    probability above the cutoff at each point (can be tiny-negative from
    rounding).
    """
    qs = np.asarray(qs, dtype=float).ravel()
    ps = np.asarray(ps, dtype=float).ravel()
    if qs.shape != ps.shape:
        raise ValidationError("q and p batches must have equal length")
    if not (np.all(np.isfinite(qs)) and np.all(np.isfinite(ps))):
        raise ValidationError("phase-space points must be finite")
    d = state.dim
    cols = n_max + 1
    m = np.arange(d)[:, None]
    n = np.arange(cols)[None, :]
    lo = np.minimum(m, n)
    hi = np.maximum(m, n)
    k = hi - lo
    log_ratio = 0.5 * (gammaln(lo + 1.0) - gammaln(hi + 1.0))
    probs = np.empty((qs.size, cols))
    tails = np.empty(qs.size)
    # Chunked so the (points, d, cols) Laguerre workspace stays modest.
    chunk = max(1, int(2_000_000 / (d * cols)))
    for start in range(0, qs.size, chunk):
        qb = qs[start : start + chunk]
        pb = ps[start : start + chunk]
        beta = (qb + 1j * pb) / np.sqrt(2.0)
        x = np.abs(beta) ** 2
        lag = eval_genlaguerre(lo[None, :, :], k[None, :, :], x[:, None, None])
        mag = np.exp(log_ratio[None, :, :] - 0.5 * x[:, None, None]) * lag
        base = np.where(m[None, :, :] >= n[None, :, :], beta[:, None, None],
                        -np.conj(beta)[:, None, None])
        blocks = mag * base ** k[None, :, :]
        zero = beta == 0
        if np.any(zero):
            blocks[zero] = np.eye(d, cols)
        # rho_n = (column n)^dag rho (column n)
        probs[start : start + chunk] = np.einsum(
            "pmn,mk,pkn->pn", blocks.conj(), state.rho, blocks
        ).real
        tails[start : start + chunk] = 1.0 - probs[start : start + chunk].sum(axis=1)
    return probs, tails


def displaced_photon_distribution(
    state: StateSpec, q: float, p: float, n_max: int, *,
    tail_tol: float = DISPLACED_TAIL_TOL,
) -> tuple[PhotonDistribution, float]:
    """Photon statistics of the state displaced to center (q, p) at origin.

    Returns the distribution over 0..n_max together with the probability
    mass above the cutoff.  Raises :class:`TruncationError` when that tail
    exceeds ``tail_tol``; the distribution is left un-renormalized (the tail
    is part of the answer, not an error to hide).
    """
    probs, tails = _displaced_diagonals(state, [q], [p], n_max)
    tail = max(float(tails[0]), 0.0)
    if tail > tail_tol:
        raise TruncationError(
            f"displaced distribution at (q={q:g}, p={p:g}) leaves {tail:.3g} "
            f"above n_max={n_max}; raise the cutoff"
        )
    dist = PhotonDistribution(np.clip(probs[0], 0.0, None), atol=10.0 * tail_tol)
    return dist, tail


def wigner_exact(state: StateSpec, q: float, p: float, n_max: int, *,
                 tail_tol: float = DISPLACED_TAIL_TOL) -> float:
    """Exact Wigner function value via the displaced parity expectation."""
    dist, _tail = displaced_photon_distribution(state, q, p, n_max, tail_tol=tail_tol)
    signs = 1.0 - 2.0 * (np.arange(n_max + 1) % 2)
    return float(signs @ dist.probs) / np.pi


def wigner_exact_grid(state: StateSpec, qs, ps, n_max: int, *,
                      tail_tol: float = DISPLACED_TAIL_TOL) -> np.ndarray:
    """Vectorized :func:`wigner_exact` over flat arrays of points."""
    probs, tails = _displaced_diagonals(state, qs, ps, n_max)
    worst = float(tails.max())
    if worst > tail_tol:
        at = int(np.argmax(tails))
        raise TruncationError(
            f"displaced distribution leaves {worst:.3g} above n_max={n_max} "
            f"at point index {at}; raise the cutoff"
        )
    signs = 1.0 - 2.0 * (np.arange(n_max + 1) % 2)
    return (probs @ signs) / np.pi


def s_ordered_quasidistribution(
    state: StateSpec, q: float, p: float, s_abs: float, n_max: int, *,
    quad_order: int = 64,
) -> float:
    """Quasidistribution of negative order parameter -|s| at one point.

    Computed by Gaussian convolution of the Wigner function,

        P(q, p; -s) = (1/(pi s)) int W(q', p') exp(-((q-q')^2+(p-p')^2)/s),

    over a window large enough that the neglected Gaussian tail is below
    1e-9 of the total.  s_abs = 1 gives the Husimi function; s_abs -> 0
    approaches the Wigner function itself.
    """
    s = float(s_abs)
    if not (np.isfinite(s) and s > 0):
        raise ValidationError(f"s_abs must be positive, got {s_abs}")
    if quad_order < 4:
        raise ValidationError(f"quad_order must be >= 4, got {quad_order}")
    # Window where exp(-R^2/s) reaches 1e-12; |W| <= 1/pi keeps the
    # neglected mass well under 1e-9.
    radius = np.sqrt(s * np.log(1e12))
    t, w = np.polynomial.legendre.leggauss(quad_order)
    qq = q + radius * t
    pp = p + radius * t
    qg, pg = np.meshgrid(qq, pp, indexing="ij")
    wg = np.outer(w, w) * radius * radius
    wig = wigner_exact_grid(state, qg.ravel(), pg.ravel(), n_max).reshape(qg.shape)
    gauss = np.exp(-((qg - q) ** 2 + (pg - p) ** 2) / s)
    return float(np.sum(wg * gauss * wig) / (np.pi * s))
