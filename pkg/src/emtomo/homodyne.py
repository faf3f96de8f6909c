"""Homodyne measurement simulation for finite-dimensional states.

States are density matrices in the Fock basis (:class:`StateSpec`).  The
quadrature density at local-oscillator phase theta under detection
efficiency eta is

    h(x; theta) = sum_{m,n} (L_eta rho)_{mn} e^{i(n-m) theta} psi_m(x) psi_n(x),

where L_eta is the Fock-basis loss channel; equivalently the kernel of
Gaussian smearing applied to the scaled ideal density.  Sampling draws from
a tabulated density by inverse transform, with one child random stream per
phase so records are reproducible and per-phase streams are independent.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .em import Histogram
from .errors import (
    EmptyHistogramError,
    FileFormatError,
    TabulationRangeError,
    TruncationError,
    ValidationError,
)
from .fock_kernel import BinGrid, fock_wavefunctions

logger = logging.getLogger(__name__)

_RECORD_MAGIC = b"EMTOREC1"
_RECORD_VERSION = 1
_RECORD_HEADER = struct.Struct("<8sIIdqq64s")

# Normalized population allowed above the truncation when building states.
STATE_TAIL_TOL = 1e-10
# Density mass allowed outside the tabulated sampling range.
TAB_TAIL_TOL = 1e-9


@dataclass
class StateSpec:
    """Density matrix in the Fock basis, validated on construction."""

    dim: int
    rho: np.ndarray

    def __post_init__(self):
        self.dim = int(self.dim)
        if self.dim < 1:
            raise ValidationError(f"state dimension must be >= 1, got {self.dim}")
        rho = np.asarray(self.rho, dtype=complex)
        if rho.shape != (self.dim, self.dim):
            raise ValidationError(
                f"density matrix shape {rho.shape} != ({self.dim}, {self.dim})"
            )
        if not np.all(np.isfinite(rho.view(float))):
            raise ValidationError("density matrix contains non-finite entries")
        if np.max(np.abs(rho - rho.conj().T)) > 1e-12:
            raise ValidationError("density matrix is not hermitian")
        if abs(np.trace(rho).real - 1.0) > 1e-10:
            raise ValidationError(f"density matrix trace {np.trace(rho).real!r} != 1")
        if np.min(np.linalg.eigvalsh(rho)) < -1e-10:
            raise ValidationError("density matrix has a negative eigenvalue")
        self.rho = rho

    def photon_probabilities(self) -> np.ndarray:
        return np.real(np.diag(self.rho)).copy()


def _pure_state(amplitudes: np.ndarray, dim: int) -> StateSpec:
    """Truncate an amplitude vector to dim, guarding the discarded tail."""
    norm_sq = float(np.vdot(amplitudes, amplitudes).real)
    if norm_sq <= 0:
        raise ValidationError("state amplitudes vanish")
    tail = float(np.vdot(amplitudes[dim:], amplitudes[dim:]).real) / norm_sq
    if tail > STATE_TAIL_TOL:
        raise TruncationError(
            f"truncation to dim={dim} discards population {tail:.3g} "
            f"(> {STATE_TAIL_TOL:g}); raise dim"
        )
    c = amplitudes[:dim] / np.sqrt(np.vdot(amplitudes[:dim], amplitudes[:dim]).real)
    return StateSpec(dim=dim, rho=np.outer(c, c.conj()))


def vacuum_state(dim: int = 1) -> StateSpec:
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0] = 1.0
    return StateSpec(dim=dim, rho=rho)


def fock_state(n: int, dim: int | None = None) -> StateSpec:
    if n < 0:
        raise ValidationError(f"photon number must be >= 0, got {n}")
    if dim is None:
        dim = n + 1
    if n >= dim:
        raise TruncationError(f"Fock state |{n}> does not fit in dim={dim}")
    rho = np.zeros((dim, dim), dtype=complex)
    rho[n, n] = 1.0
    return StateSpec(dim=dim, rho=rho)


def _coherent_amplitudes(alpha: complex, count: int) -> np.ndarray:
    """c_n = exp(-|alpha|^2/2) alpha^n / sqrt(n!), evaluated in log space."""
    ns = np.arange(count)
    if alpha == 0:
        out = np.zeros(count, dtype=complex)
        out[0] = 1.0
        return out
    log_mag = -0.5 * abs(alpha) ** 2 + ns * np.log(abs(alpha)) - 0.5 * gammaln(ns + 1.0)
    return np.exp(log_mag) * np.exp(1j * ns * np.angle(alpha))


def coherent_state(alpha: complex, dim: int) -> StateSpec:
    """Coherent state |alpha> truncated to dim levels.

    dim should be at least |alpha|^2 + 10 sqrt(|alpha|^2 + 1); smaller values
    trip the truncation guard once the discarded Poisson tail exceeds 1e-10.
    """
    work = max(2 * dim, dim + 32)
    return _pure_state(_coherent_amplitudes(complex(alpha), work), dim)


def cat_state(alpha: complex, relative_phase: float, dim: int) -> StateSpec:
    """Superposition |alpha> + e^{i phi} |-alpha>, normalized and truncated.

    relative_phase = pi gives the odd cat (only odd photon numbers), 0 the
    even cat.
    """
    alpha = complex(alpha)
    phi = float(relative_phase)
    work = max(2 * dim, dim + 32)
    plus = _coherent_amplitudes(alpha, work)
    minus = _coherent_amplitudes(-alpha, work)
    amps = plus + np.exp(1j * phi) * minus
    if np.vdot(amps, amps).real < 1e-30:
        raise ValidationError(
            "cat amplitudes vanish (alpha=0 with relative_phase=pi has no content)"
        )
    return _pure_state(amps, dim)


def suggest_dim(kind: str, *, n: int | None = None, alpha: complex = 0j) -> int:
    """Truncation that keeps the state tail below the construction guard."""
    if kind == "vacuum":
        return 1
    if kind == "fock":
        return int(n) + 1
    mean = abs(alpha) ** 2
    return int(np.ceil(mean + 10.0 * np.sqrt(mean + 1.0))) + 1


def make_state(kind: str, dim: int | None = None, *, n: int | None = None,
               alpha: complex = 0j, relative_phase: float = 0.0) -> StateSpec:
    """Dispatch on a state-kind name; used by the command line layer."""
    if kind == "vacuum":
        return vacuum_state(dim if dim is not None else 1)
    if kind == "fock":
        if n is None:
            raise ValidationError("fock state needs a photon number n")
        return fock_state(int(n), dim)
    if dim is None:
        dim = suggest_dim(kind, alpha=alpha)
    if kind == "coherent":
        return coherent_state(alpha, dim)
    if kind == "cat":
        return cat_state(alpha, relative_phase, dim)
    raise ValidationError(f"unknown state kind {kind!r}")


def apply_loss_channel(state: StateSpec, eta: float) -> StateSpec:
    """Fock-basis beam-splitter loss of transmissivity eta.

    (L_eta rho)_{mn} = sum_k sqrt(C(m+k,k) C(n+k,k)) eta^{(m+n)/2} (1-eta)^k
    rho_{m+k, n+k}; trace is preserved to machine precision.
    """
    eta = float(eta)
    if not 0.0 < eta <= 1.0:
        raise ValidationError(f"efficiency must lie in (0, 1], got {eta}")
    if eta == 1.0:
        return StateSpec(dim=state.dim, rho=state.rho.copy())
    d = state.dim
    g = gammaln(np.arange(d + 1) + 1.0)
    log_eta = np.log(eta)
    log_loss = np.log1p(-eta)
    out = np.zeros((d, d), dtype=complex)
    for k in range(d):
        m = np.arange(d - k)
        # sqrt(C(m+k, k)) eta^(m/2) (1-eta)^(k/2)
        v = np.exp(0.5 * (g[m + k] - g[m] - g[k]) + 0.5 * m * log_eta + 0.5 * k * log_loss)
        out[: d - k, : d - k] += np.outer(v, v) * state.rho[k:, k:]
    return StateSpec(dim=d, rho=out)


def quadrature_density(state: StateSpec, theta: float, x, eta: float = 1.0):
    """Homodyne outcome density h(x; theta) at efficiency eta."""
    lossy = state if eta == 1.0 else apply_loss_channel(state, eta)
    xs = np.asarray(x, dtype=float)
    psi = fock_wavefunctions(lossy.dim - 1, xs.ravel())
    phases = np.exp(1j * float(theta) * np.arange(lossy.dim))
    c = phases[:, None] * psi
    h = np.einsum("mx,mx->x", c.conj(), lossy.rho @ c).real
    h = h.reshape(xs.shape)
    return h if np.ndim(x) else float(h)


@dataclass
class HomodyneRecord:
    """Phase-tagged quadrature samples from one simulated (or real) run."""

    eta: float
    thetas: np.ndarray
    xs: np.ndarray
    seed: int
    source: str = ""

    def __post_init__(self):
        self.eta = float(self.eta)
        if not 0.0 < self.eta <= 1.0:
            raise ValidationError(f"record efficiency must lie in (0, 1], got {self.eta}")
        thetas = np.asarray(self.thetas, dtype=float).ravel()
        xs = np.asarray(self.xs, dtype=float).ravel()
        if thetas.shape != xs.shape:
            raise ValidationError("thetas and xs must have equal length")
        if thetas.size == 0:
            raise ValidationError("record holds no samples")
        if not (np.all(np.isfinite(thetas)) and np.all(np.isfinite(xs))):
            raise ValidationError("record contains non-finite samples")
        self.thetas = thetas
        self.xs = xs
        self.seed = int(self.seed)

    @property
    def sample_count(self) -> int:
        return self.xs.size


def _tabulated_cdf(dens: np.ndarray, grid: np.ndarray):
    """Normalized piecewise-linear CDF over the tabulation grid."""
    dens = np.clip(dens, 0.0, None)
    dx = grid[1] - grid[0]
    seg = 0.5 * (dens[:-1] + dens[1:]) * dx
    cdf = np.concatenate([[0.0], np.cumsum(seg)])
    total = cdf[-1]
    return dens / total, cdf / total


def _invert_cdf(u: np.ndarray, dens: np.ndarray, cdf: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Inverse-transform sampling on a piecewise-linear density table."""
    dx = grid[1] - grid[0]
    idx = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, grid.size - 2)
    r = u - cdf[idx]
    d0 = dens[idx]
    slope = (dens[idx + 1] - d0) / dx
    # Within a cell the CDF is quadratic: r = d0 t + slope t^2 / 2.
    lin = np.abs(slope) < 1e-14
    safe_d0 = np.where(d0 > 0, d0, 1.0)
    safe_slope = np.where(lin, 1.0, slope)
    disc = np.sqrt(np.maximum(d0**2 + 2.0 * slope * r, 0.0))
    t = np.where(lin, r / safe_d0, (disc - d0) / safe_slope)
    return grid[idx] + np.clip(t, 0.0, dx)


def sample_homodyne(
    state: StateSpec,
    phase_count: int,
    events_per_phase: int,
    eta: float,
    seed: int,
    *,
    tab_range: float = 8.0,
    tab_step: float = 1e-3,
    source: str | None = None,
) -> HomodyneRecord:
    """Draw homodyne samples at equally spaced phases in [0, pi).

    Per phase, the lossy density is tabulated on [-tab_range, tab_range]
    (widened by half-steps of 1.5x, up to 8 times, while more than 1e-9 of
    the probability lies outside) and sampled by inverse transform.  Each
    phase uses its own child of ``numpy.random.SeedSequence(seed)``, so
    results are reproducible and independent across phases.
    """
    if phase_count < 1:
        raise ValidationError(f"phase_count must be >= 1, got {phase_count}")
    if events_per_phase < 1:
        raise ValidationError(f"events_per_phase must be >= 1, got {events_per_phase}")
    eta = float(eta)
    if not 0.0 < eta <= 1.0:
        raise ValidationError(f"efficiency must lie in (0, 1], got {eta}")
    lossy = apply_loss_channel(state, eta)
    thetas = np.pi * np.arange(phase_count) / phase_count
    children = np.random.SeedSequence(seed).spawn(phase_count)

    def tab_grid(r: float) -> np.ndarray:
        points = int(np.ceil(2.0 * r / tab_step)) + 1
        return np.linspace(-r, r, points)

    base_grid = tab_grid(tab_range)
    base_psi = fock_wavefunctions(lossy.dim - 1, base_grid)
    ns = np.arange(lossy.dim)
    all_x = np.empty(phase_count * events_per_phase)
    for j, theta in enumerate(thetas):
        grid, psi = base_grid, base_psi
        radius = tab_range
        for attempt in range(9):
            c = np.exp(1j * theta * ns)[:, None] * psi
            dens = np.einsum("mx,mx->x", c.conj(), lossy.rho @ c).real
            outside = 1.0 - np.trapezoid(np.clip(dens, 0.0, None), grid)
            if outside <= TAB_TAIL_TOL:
                break
            if attempt == 8:
                raise TabulationRangeError(
                    f"density tail {outside:.3g} still outside [-{radius:g}, {radius:g}] "
                    "after widening; state may be unnormalizable at this truncation"
                )
            radius *= 1.5
            logger.debug("phase %d: widening tabulation range to %.3g", j, radius)
            grid = tab_grid(radius)
            psi = fock_wavefunctions(lossy.dim - 1, grid)
        dens, cdf = _tabulated_cdf(dens, grid)
        rng = np.random.default_rng(children[j])
        u = rng.random(events_per_phase)
        all_x[j * events_per_phase : (j + 1) * events_per_phase] = _invert_cdf(
            u, dens, cdf, grid
        )
    all_thetas = np.repeat(thetas, events_per_phase)
    if source is None:
        source = f"simulated dim={state.dim} eta={eta:g}"
    return HomodyneRecord(eta=eta, thetas=all_thetas, xs=all_x, seed=int(seed),
                          source=source)


def shift_and_histogram(record: HomodyneRecord, q: float, p: float,
                        grid: BinGrid) -> Histogram:
    """Bin x - sqrt(eta) (q cos theta + p sin theta) over the whole record.

    The shift centers the statistics of the state displaced by -(q + ip)
    (in phase-space coordinates), which is what makes a single phase-averaged
    histogram carry the displaced photon-number distribution.
    """
    shift = np.sqrt(record.eta) * (
        q * np.cos(record.thetas) + p * np.sin(record.thetas)
    )
    hist = Histogram.from_samples(grid, record.xs - shift)
    if hist.total == 0:
        raise EmptyHistogramError(
            "every shifted sample fell outside the bin grid"
        )
    return hist


def save_record_text(path: str, record: HomodyneRecord) -> None:
    """Plain-text record: eta=, seed=, source= headers, then theta,x lines."""
    with open(path, "w") as fh:
        fh.write(f"eta={record.eta:.17g}\n")
        fh.write(f"seed={record.seed}\n")
        fh.write(f"source={record.source}\n")
        for theta, x in zip(record.thetas, record.xs):
            fh.write(f"{theta:.17g},{x:.17g}\n")


def load_record_text(path: str) -> HomodyneRecord:
    header: dict[str, str] = {}
    thetas: list[float] = []
    xs: list[float] = []
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" in line and "," not in line:
                key, _, value = line.partition("=")
                header[key.strip()] = value.strip()
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise FileFormatError(f"{path}:{lineno}: expected 'theta,x', got {line!r}")
            try:
                thetas.append(float(parts[0]))
                xs.append(float(parts[1]))
            except ValueError as exc:
                raise FileFormatError(f"{path}:{lineno}: {exc}") from exc
    for key in ("eta", "seed"):
        if key not in header:
            raise FileFormatError(f"{path}: missing {key}= header")
    try:
        eta = float(header["eta"])
        seed = int(header["seed"])
    except ValueError as exc:
        raise FileFormatError(f"{path}: malformed header: {exc}") from exc
    try:
        return HomodyneRecord(eta=eta, thetas=np.asarray(thetas), xs=np.asarray(xs),
                              seed=seed, source=header.get("source", ""))
    except ValidationError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


def save_record_binary(path: str, record: HomodyneRecord) -> None:
    """Binary record: 104-byte header then little-endian (theta, x) pairs."""
    source = record.source.encode("utf-8")[:64]
    header = _RECORD_HEADER.pack(
        _RECORD_MAGIC, _RECORD_VERSION, 0, record.eta, record.seed,
        record.sample_count, source,
    )
    pairs = np.empty((record.sample_count, 2), dtype="<f8")
    pairs[:, 0] = record.thetas
    pairs[:, 1] = record.xs
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(pairs.tobytes())


def load_record_binary(path: str) -> HomodyneRecord:
    with open(path, "rb") as fh:
        header = fh.read(_RECORD_HEADER.size)
        if len(header) != _RECORD_HEADER.size:
            raise FileFormatError(f"{path}: truncated record header")
        magic, version, _flags, eta, seed, count, source = _RECORD_HEADER.unpack(header)
        if magic != _RECORD_MAGIC:
            raise FileFormatError(f"{path}: not a binary homodyne record")
        if version != _RECORD_VERSION:
            raise FileFormatError(f"{path}: unsupported record version {version}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if count < 1 or data.size != 2 * count:
        raise FileFormatError(
            f"{path}: expected {2 * count} floats of sample data, found {data.size}"
        )
    pairs = data.reshape(count, 2)
    try:
        return HomodyneRecord(
            eta=float(eta), thetas=pairs[:, 0].copy(), xs=pairs[:, 1].copy(),
            seed=int(seed), source=source.rstrip(b"\x00").decode("utf-8", "replace"),
        )
    except ValidationError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


def load_record(path: str) -> HomodyneRecord:
    """Load a record, sniffing text vs binary from the leading bytes."""
    with open(path, "rb") as fh:
        lead = fh.read(len(_RECORD_MAGIC))
    if lead == _RECORD_MAGIC:
        return load_record_binary(path)
    return load_record_text(path)
