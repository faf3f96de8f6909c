"""End-to-end Wigner reconstruction from homodyne records.

One phase-space point (q, p) costs one histogram of shifted samples plus one
EM run; the Wigner value is assembled from the recovered displaced
photon-number distribution as W = (1/pi) sum_n (-1)^n rho_n.  A grid scan
repeats that point recipe (the expensive kernel is built once and shared),
failing soft on individual points so a single pathological corner cannot
destroy an overnight scan.

This module deliberately computes the parity sum itself rather than calling
into :mod:`emtomo.oracle`: the oracle is the arbiter the pipeline is checked
against, so the two sides share no evaluation code.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone

import numpy as np

from .em import default_cutoff, reconstruct_photon_distribution
from .errors import (
    EmptyHistogramError,
    FileFormatError,
    ModelZeroError,
    ShiftOverflowError,
    TruncationError,
    ValidationError,
)
from .fock_kernel import BinGrid, KernelMatrix, load_or_build_kernel
from .homodyne import HomodyneRecord, StateSpec, shift_and_histogram
from .oracle import _displaced_diagonals

logger = logging.getLogger(__name__)

# Fraction of shifted samples allowed to fall off the bin grid before a
# point reconstruction is refused as unreliable.
MAX_OVERFLOW_FRACTION = 1e-3


def wigner_from_distribution(probs) -> float:
    """Parity-weighted sum (1/pi) sum_n (-1)^n rho_n."""
    p = np.asarray(probs, dtype=float)
    signs = 1.0 - 2.0 * (np.arange(p.size) % 2)
    return float(signs @ p) / np.pi


@dataclass
class ReconstructionConfig:
    """Everything a grid reconstruction needs besides the record itself.

    The photon-number cutoff comes either from ``n_max`` directly or from
    ``localization_radius`` (the phase-space radius the state and all
    evaluation points live within) via ceil(r^2 / 2); set exactly one.
    """

    eta: float
    x_min: float = -8.0
    x_max: float = 8.0
    bin_count: int = 16000
    n_max: int | None = None
    localization_radius: float | None = None
    max_iter: int = 10_000
    plateau_tol: float | None = None
    record_every: int = 100
    q_min: float = -2.0
    q_max: float = 2.0
    q_steps: int = 21
    p_min: float = -2.0
    p_max: float = 2.0
    p_steps: int = 21
    seed: int = 0
    record_path: str | None = None
    output_path: str | None = None
    kernel_cache: str | None = None
    max_column_deficit: float | None = 1e-6

    def __post_init__(self):
        if not 0.0 < float(self.eta) <= 1.0:
            raise ValidationError(f"efficiency must lie in (0, 1], got {self.eta}")
        if (self.n_max is None) == (self.localization_radius is None):
            raise ValidationError(
                "set exactly one of n_max and localization_radius"
            )
        for name in ("q", "p"):
            lo = getattr(self, f"{name}_min")
            hi = getattr(self, f"{name}_max")
            steps = getattr(self, f"{name}_steps")
            if steps < 1:
                raise ValidationError(f"{name}_steps must be >= 1, got {steps}")
            if hi < lo:
                raise ValidationError(f"{name}_max < {name}_min")
            if hi == lo and steps > 1:
                raise ValidationError(f"degenerate {name} range with {steps} steps")
        if self.max_iter < 1:
            raise ValidationError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.record_every < 1:
            raise ValidationError(f"record_every must be >= 1, got {self.record_every}")

    def resolve_cutoff(self) -> int:
        if self.n_max is not None:
            n = int(self.n_max)
            if n < 0:
                raise ValidationError(f"n_max must be >= 0, got {self.n_max}")
            return n
        return default_cutoff(self.localization_radius)

    def bin_grid(self) -> BinGrid:
        return BinGrid(self.x_min, self.x_max, self.bin_count)

    def q_axis(self) -> np.ndarray:
        return np.linspace(self.q_min, self.q_max, self.q_steps)

    def p_axis(self) -> np.ndarray:
        return np.linspace(self.p_min, self.p_max, self.p_steps)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ReconstructionConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        if "eta" not in data:
            raise ValidationError("config must set eta")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str) -> "ReconstructionConfig":
        try:
            with open(path, "r") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ValidationError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)


@dataclass
class PointDiagnostics:
    """Per-point bookkeeping from a Wigner reconstruction."""

    iterations: int
    final_loglik: float
    overflow_fraction: float
    rho_tail: float
    converged: bool
    stop_reason: str
    error: str | None = None


def reconstruct_wigner_point(
    record: HomodyneRecord,
    q: float,
    p: float,
    kernel: KernelMatrix,
    *,
    max_iter: int = 10_000,
    plateau_tol: float | None = None,
    record_every: int = 100,
) -> tuple[float, PointDiagnostics]:
    """Reconstruct W(q, p) from a record via shift + histogram + EM.

    Returns the Wigner value and diagnostics (EM iterations, final
    log-likelihood, overflow fraction, occupancy of the top two photon
    levels as a truncation health measure).
    """
    if abs(kernel.eta - record.eta) > 1e-12:
        raise ValidationError(
            f"kernel efficiency {kernel.eta!r} does not match record efficiency "
            f"{record.eta!r}"
        )
    hist = shift_and_histogram(record, q, p, kernel.grid)
    overflow_fraction = hist.overflow / record.sample_count
    if overflow_fraction > MAX_OVERFLOW_FRACTION:
        raise ShiftOverflowError(
            f"{overflow_fraction:.3%} of shifted samples left the bin grid at "
            f"(q={q:g}, p={p:g}) (limit {MAX_OVERFLOW_FRACTION:.1%}); widen the grid"
        )
    dist, diag = reconstruct_photon_distribution(
        hist, kernel, max_iter=max_iter, plateau_tol=plateau_tol,
        record_every=record_every,
    )
    w = wigner_from_distribution(dist.probs)
    point = PointDiagnostics(
        iterations=diag.iterations_run,
        final_loglik=diag.final_loglik,
        overflow_fraction=float(overflow_fraction),
        rho_tail=float(dist.probs[-2:].sum()),
        converged=diag.converged,
        stop_reason=diag.stop_reason,
    )
    return w, point


@dataclass
class WignerGrid:
    """Wigner values and per-point diagnostics on a rectangular grid."""

    qs: np.ndarray
    ps: np.ndarray
    values: np.ndarray  # shape (len(qs), len(ps)); NaN where a point failed
    iterations: np.ndarray
    final_loglik: np.ndarray
    overflow_fraction: np.ndarray
    rho_tail: np.ndarray
    failures: dict = field(default_factory=dict)  # (i, j) -> message
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.qs = np.asarray(self.qs, dtype=float).ravel()
        self.ps = np.asarray(self.ps, dtype=float).ravel()
        shape = (self.qs.size, self.ps.size)
        for name in ("values", "iterations", "final_loglik", "overflow_fraction",
                     "rho_tail"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != shape:
                raise ValidationError(f"{name} shape {arr.shape} != {shape}")


def reconstruct_wigner_grid(
    record: HomodyneRecord,
    config: ReconstructionConfig,
    *,
    kernel: KernelMatrix | None = None,
) -> WignerGrid:
    """Scan the configured (q, p) grid, reconstructing every point.

    The kernel is built (or loaded from ``config.kernel_cache``) once.
    Per-point numerical failures (overflow, empty histogram, truncation) are
    recorded in ``failures`` and leave NaN in ``values``; they do not abort
    the scan unless every point fails.
    """
    if abs(config.eta - record.eta) > 1e-12:
        raise ValidationError(
            f"config efficiency {config.eta!r} does not match record efficiency "
            f"{record.eta!r}"
        )
    n_max = config.resolve_cutoff()
    if kernel is None:
        kernel = load_or_build_kernel(
            config.kernel_cache, config.bin_grid(), n_max, config.eta,
            max_column_deficit=config.max_column_deficit,
        )
    qs = config.q_axis()
    ps = config.p_axis()
    shape = (qs.size, ps.size)
    values = np.full(shape, np.nan)
    iterations = np.zeros(shape, dtype=np.int64)
    final_loglik = np.full(shape, np.nan)
    overflow = np.full(shape, np.nan)
    rho_tail = np.full(shape, np.nan)
    failures: dict = {}
    last_error: Exception | None = None
    for i, qv in enumerate(qs):
        for j, pv in enumerate(ps):
            try:
                w, point = reconstruct_wigner_point(
                    record, float(qv), float(pv), kernel,
                    max_iter=config.max_iter, plateau_tol=config.plateau_tol,
                    record_every=config.record_every,
                )
            except (ShiftOverflowError, EmptyHistogramError, ModelZeroError,
                    TruncationError) as exc:
                failures[(i, j)] = str(exc)
                last_error = exc
                logger.warning("point (%g, %g) failed: %s", qv, pv, exc)
                continue
            values[i, j] = w
            iterations[i, j] = point.iterations
            final_loglik[i, j] = point.final_loglik
            overflow[i, j] = point.overflow_fraction
            rho_tail[i, j] = point.rho_tail
        logger.info("grid row %d/%d done", i + 1, qs.size)
    if len(failures) == qs.size * ps.size:
        raise type(last_error)(
            f"every grid point failed; last error: {last_error}"
        )
    meta = {str(k): _meta_str(v) for k, v in config.to_dict().items()}
    meta["kind"] = "reconstruction"
    meta["eta"] = _meta_str(config.eta)
    meta["n_max"] = _meta_str(n_max)
    return WignerGrid(
        qs=qs, ps=ps, values=values, iterations=iterations,
        final_loglik=final_loglik, overflow_fraction=overflow,
        rho_tail=rho_tail, failures=failures, meta=meta,
    )


def oracle_wigner_grid(state: StateSpec, qs, ps, n_max: int, *,
                       tail_tol: float = 1e-8) -> WignerGrid:
    """Exact Wigner values on a grid, shaped like a reconstruction result.

    Diagnostic columns carry zeros except rho_tail, which records the true
    probability the displaced distribution leaves above the cutoff.  Points
    whose tail exceeds ``tail_tol`` are not trustworthy at this cutoff; they
    come back NaN with a ``failures`` entry, mirroring how reconstruction
    grids fail soft.
    """
    qs = np.asarray(qs, dtype=float).ravel()
    ps = np.asarray(ps, dtype=float).ravel()
    qg, pg = np.meshgrid(qs, ps, indexing="ij")
    probs, tails = _displaced_diagonals(state, qg.ravel(), pg.ravel(), n_max)
    signs = 1.0 - 2.0 * (np.arange(n_max + 1) % 2)
    values = ((probs @ signs) / np.pi).reshape(qg.shape)
    shape = qg.shape
    tails = np.clip(tails.reshape(shape), 0.0, None)
    failures: dict = {}
    for i, j in zip(*np.nonzero(tails > tail_tol)):
        failures[(int(i), int(j))] = (
            f"displaced tail {tails[i, j]:.3g} above n_max={n_max}"
        )
        values[i, j] = np.nan
    return WignerGrid(
        qs=qs, ps=ps, values=values,
        iterations=np.zeros(shape, dtype=np.int64),
        final_loglik=np.zeros(shape),
        overflow_fraction=np.zeros(shape),
        rho_tail=tails,
        failures=failures,
        meta={"kind": "oracle", "n_max": str(n_max)},
    )


def _meta_str(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        # repr gives the shortest string that round-trips exactly
        return repr(value)
    return str(value)


_GRID_MAGIC_LINE = "# emtomo wigner grid v1"
_GRID_COLUMNS = "q p w iterations final_loglik overflow_fraction rho_tail"


def save_wigner_grid(path: str, grid: WignerGrid) -> None:
    """Write a grid as a plain-text table.

    Output is deterministic for identical inputs except the timestamp, which
    stays confined to its own comment line.
    """
    lines = [_GRID_MAGIC_LINE]
    lines.append(f"# generated: {datetime.now(timezone.utc).isoformat()}")
    for key in sorted(grid.meta):
        lines.append(f"# meta {key}={grid.meta[key]}")
    lines.append(f"# q_steps: {grid.qs.size}")
    lines.append(f"# p_steps: {grid.ps.size}")
    for (i, j), message in sorted(grid.failures.items()):
        lines.append(f"# failed {i} {j} {message}")
    lines.append(f"# columns: {_GRID_COLUMNS}")
    for i, qv in enumerate(grid.qs):
        for j, pv in enumerate(grid.ps):
            lines.append(
                f"{qv:.17g} {pv:.17g} {grid.values[i, j]:.17g} "
                f"{int(grid.iterations[i, j])} {grid.final_loglik[i, j]:.17g} "
                f"{grid.overflow_fraction[i, j]:.17g} {grid.rho_tail[i, j]:.17g}"
            )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_wigner_grid(path: str) -> WignerGrid:
    """Read a grid table written by :func:`save_wigner_grid`."""
    meta: dict = {}
    failures: dict = {}
    q_steps = p_steps = None
    rows: list[list[float]] = []
    with open(path, "r") as fh:
        first = fh.readline().rstrip("\n")
        if first != _GRID_MAGIC_LINE:
            raise FileFormatError(f"{path}: not a wigner grid file")
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("meta "):
                    key, _, value = body[5:].partition("=")
                    meta[key.strip()] = value.strip()
                elif body.startswith("q_steps:"):
                    q_steps = int(body.split(":", 1)[1])
                elif body.startswith("p_steps:"):
                    p_steps = int(body.split(":", 1)[1])
                elif body.startswith("failed "):
                    parts = body.split(" ", 3)
                    if len(parts) >= 3:
                        failures[(int(parts[1]), int(parts[2]))] = (
                            parts[3] if len(parts) > 3 else ""
                        )
                continue
            parts = line.split()
            if len(parts) != 7:
                raise FileFormatError(
                    f"{path}:{lineno}: expected 7 columns, got {len(parts)}"
                )
            try:
                rows.append([float(v) for v in parts])
            except ValueError as exc:
                raise FileFormatError(f"{path}:{lineno}: {exc}") from exc
    if q_steps is None or p_steps is None:
        raise FileFormatError(f"{path}: missing q_steps/p_steps headers")
    if len(rows) != q_steps * p_steps:
        raise FileFormatError(
            f"{path}: expected {q_steps * p_steps} rows, found {len(rows)}"
        )
    data = np.asarray(rows)
    qs = data[:: p_steps, 0]
    ps = data[:p_steps, 1]
    def grab(col):
        return data[:, col].reshape(q_steps, p_steps)
    return WignerGrid(
        qs=qs, ps=ps, values=grab(2),
        iterations=grab(3).astype(np.int64),
        final_loglik=grab(4), overflow_fraction=grab(5), rho_tail=grab(6),
        failures=failures, meta=meta,
    )


def compare_wigner_grids(a: WignerGrid, b: WignerGrid) -> dict:
    """Error norms between two grids sharing the same axes.

    Points that are NaN in either grid (failed reconstructions) are skipped
    and counted.  Returns max_abs, rms, mean_abs, compared_points,
    skipped_points.
    """
    if a.qs.size != b.qs.size or a.ps.size != b.ps.size:
        raise ValidationError("grids have different shapes")
    if (np.max(np.abs(a.qs - b.qs)) > 1e-9) or (np.max(np.abs(a.ps - b.ps)) > 1e-9):
        raise ValidationError("grids are sampled at different points")
    diff = a.values - b.values
    ok = np.isfinite(diff)
    if not np.any(ok):
        raise ValidationError("grids share no finite points to compare")
    d = diff[ok]
    return {
        "max_abs": float(np.max(np.abs(d))),
        "rms": float(np.sqrt(np.mean(d * d))),
        "mean_abs": float(np.mean(np.abs(d))),
        "compared_points": int(d.size),
        "skipped_points": int(diff.size - d.size),
    }


def write_gnuplot_files(grid: WignerGrid, out_prefix: str) -> tuple[str, str]:
    """Emit a gnuplot-ready data file and driver script for a grid.

    Returns (data_path, script_path); run ``gnuplot <script>`` to render.
    """
    dat_path = f"{out_prefix}.dat"
    gp_path = f"{out_prefix}.gp"
    with open(dat_path, "w") as fh:
        fh.write("# q p w\n")
        for i, qv in enumerate(grid.qs):
            for j, pv in enumerate(grid.ps):
                fh.write(f"{qv:.17g} {pv:.17g} {grid.values[i, j]:.17g}\n")
            fh.write("\n")
    kind = grid.meta.get("kind", "wigner")
    with open(gp_path, "w") as fh:
        fh.write(
            "set title 'Wigner function (%s)'\n"
            "set xlabel 'q'\n"
            "set ylabel 'p'\n"
            "set pm3d at s\n"
            "set hidden3d\n"
            "set contour base\n"
            "splot '%s' using 1:2:3 with pm3d notitle\n"
            "pause -1 'press return to close'\n" % (kind, dat_path)
        )
    return dat_path, gp_path
