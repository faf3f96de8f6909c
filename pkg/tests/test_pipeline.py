import numpy as np
import pytest

from emtomo import (
    BinGrid,
    HomodyneRecord,
    ReconstructionConfig,
    ShiftOverflowError,
    ValidationError,
    WignerGrid,
    build_kernel_matrix,
    coherent_state,
    compare_wigner_grids,
    load_wigner_grid,
    oracle_wigner_grid,
    reconstruct_wigner_grid,
    reconstruct_wigner_point,
    sample_homodyne,
    save_wigner_grid,
    vacuum_state,
    wigner_exact,
    wigner_from_distribution,
    write_gnuplot_files,
)

ONE_OVER_PI = 1.0 / np.pi


@pytest.fixture(scope="module")
def vacuum_record():
    return sample_homodyne(vacuum_state(), 4, 25_000, 0.85, 1001)


@pytest.fixture(scope="module")
def vacuum_kernel():
    return build_kernel_matrix(BinGrid(-9.0, 9.0, 900), 8, 0.85)


def small_config(**overrides):
    base = dict(
        eta=0.85, x_min=-9.0, x_max=9.0, bin_count=900, n_max=8,
        max_iter=300, q_min=-1.0, q_max=1.0, q_steps=3,
        p_min=-1.0, p_max=1.0, p_steps=3,
    )
    base.update(overrides)
    return ReconstructionConfig(**base)


def test_wigner_from_distribution_alternates_signs():
    assert wigner_from_distribution([1.0, 0.0]) == pytest.approx(ONE_OVER_PI)
    assert wigner_from_distribution([0.0, 1.0]) == pytest.approx(-ONE_OVER_PI)
    assert wigner_from_distribution([0.5, 0.5]) == pytest.approx(0.0, abs=1e-15)


def test_config_validation():
    with pytest.raises(ValidationError):
        small_config(eta=0.0)
    with pytest.raises(ValidationError):
        small_config(n_max=None)  # no cutoff source at all
    with pytest.raises(ValidationError):
        small_config(localization_radius=3.0)  # both cutoff sources
    with pytest.raises(ValidationError):
        small_config(q_steps=0)
    with pytest.raises(ValidationError):
        small_config(max_iter=0)
    cfg = small_config(n_max=None, localization_radius=4.0)
    assert cfg.resolve_cutoff() == 8


def test_config_json_round_trip(tmp_path):
    cfg = small_config(plateau_tol=1e-8, kernel_cache="k.bin")
    path = tmp_path / "cfg.json"
    import json

    path.write_text(json.dumps(cfg.to_dict()))
    back = ReconstructionConfig.from_file(str(path))
    assert back == cfg
    path.write_text("{not json")
    with pytest.raises(ValidationError):
        ReconstructionConfig.from_file(str(path))
    path.write_text(json.dumps({"eta": 0.9, "n_max": 5, "bogus_key": 1}))
    with pytest.raises(ValidationError):
        ReconstructionConfig.from_file(str(path))


def test_point_reconstruction_hits_vacuum_wigner(vacuum_record, vacuum_kernel):
    w, diag = reconstruct_wigner_point(vacuum_record, 0.0, 0.0, vacuum_kernel,
                                       max_iter=2_000)
    assert w == pytest.approx(ONE_OVER_PI, abs=0.01)
    assert diag.overflow_fraction == 0.0
    assert diag.rho_tail < 1e-3
    assert diag.iterations == 2_000
    w_off, _ = reconstruct_wigner_point(vacuum_record, 1.0, 1.0, vacuum_kernel,
                                        max_iter=2_000)
    assert w_off == pytest.approx(wigner_exact(vacuum_state(), 1.0, 1.0, 20), abs=0.012)


def test_point_eta_mismatch_rejected(vacuum_record):
    kernel = build_kernel_matrix(BinGrid(-9.0, 9.0, 900), 8, 0.9)
    with pytest.raises(ValidationError):
        reconstruct_wigner_point(vacuum_record, 0.0, 0.0, kernel)


def test_point_overflow_guard(vacuum_record):
    tight = build_kernel_matrix(BinGrid(-1.0, 1.0, 100), 0, 0.85,
                                max_column_deficit=None)
    with pytest.raises(ShiftOverflowError):
        reconstruct_wigner_point(vacuum_record, 0.0, 0.0, tight, max_iter=5)


def test_reconstruction_magnitude_bound(vacuum_record, vacuum_kernel):
    for q, p in [(0.0, 0.0), (1.5, -0.5), (-2.0, 2.0)]:
        w, _ = reconstruct_wigner_point(vacuum_record, q, p, vacuum_kernel,
                                        max_iter=400)
        assert abs(w) <= ONE_OVER_PI * (1.0 + 1e-6)


def test_grid_scan_matches_pointwise_calls(vacuum_record, vacuum_kernel):
    cfg = small_config(max_iter=150)
    grid = reconstruct_wigner_grid(vacuum_record, cfg, kernel=vacuum_kernel)
    # recompute a few points in scrambled order; purity means bit equality
    for i, j in [(2, 1), (0, 0), (1, 2)]:
        w, _ = reconstruct_wigner_point(
            vacuum_record, float(grid.qs[i]), float(grid.ps[j]), vacuum_kernel,
            max_iter=150,
        )
        assert w == grid.values[i, j]


def test_grid_fail_soft_records_failures(vacuum_record):
    # a grid too narrow for far displacement points: those overflow, the
    # near ones still reconstruct
    kernel = build_kernel_matrix(BinGrid(-4.0, 4.0, 400), 6, 0.85,
                                 max_column_deficit=None)
    cfg = ReconstructionConfig(
        eta=0.85, x_min=-4.0, x_max=4.0, bin_count=400, n_max=6, max_iter=50,
        q_min=0.0, q_max=3.5, q_steps=2, p_min=0.0, p_max=0.0, p_steps=1,
    )
    grid = reconstruct_wigner_grid(vacuum_record, cfg, kernel=kernel)
    assert (0, 0) not in grid.failures
    assert (1, 0) in grid.failures
    assert np.isnan(grid.values[1, 0])
    assert np.isfinite(grid.values[0, 0])


def test_grid_all_points_failing_raises(vacuum_record):
    kernel = build_kernel_matrix(BinGrid(-4.0, 4.0, 400), 6, 0.85,
                                 max_column_deficit=None)
    cfg = ReconstructionConfig(
        eta=0.85, x_min=-4.0, x_max=4.0, bin_count=400, n_max=6, max_iter=50,
        q_min=30.0, q_max=31.0, q_steps=2, p_min=0.0, p_max=0.0, p_steps=1,
    )
    with pytest.raises(ShiftOverflowError):
        reconstruct_wigner_grid(vacuum_record, cfg, kernel=kernel)


def test_grid_eta_mismatch_rejected(vacuum_record):
    cfg = small_config(eta=0.9)
    with pytest.raises(ValidationError):
        reconstruct_wigner_grid(vacuum_record, cfg)


def test_oracle_grid_marks_truncation_failures():
    grid = oracle_wigner_grid(vacuum_state(), [0.0, 3.0], [0.0, 3.0], 6)
    assert np.isfinite(grid.values[0, 0])
    assert np.isnan(grid.values[1, 1])
    assert (1, 1) in grid.failures
    assert grid.rho_tail[1, 1] > 1e-8


def test_grid_file_round_trip(tmp_path, vacuum_record, vacuum_kernel):
    cfg = small_config(max_iter=60)
    grid = reconstruct_wigner_grid(vacuum_record, cfg, kernel=vacuum_kernel)
    grid.failures[(0, 1)] = "synthetic failure note"
    grid.values[0, 1] = np.nan
    path = str(tmp_path / "grid.txt")
    save_wigner_grid(path, grid)
    back = load_wigner_grid(path)
    assert np.array_equal(back.qs, grid.qs)
    assert np.array_equal(back.ps, grid.ps)
    assert np.array_equal(back.values, grid.values, equal_nan=True)
    assert np.array_equal(back.iterations, grid.iterations)
    assert np.array_equal(back.final_loglik, grid.final_loglik)
    assert back.failures[(0, 1)] == "synthetic failure note"
    assert back.meta["kind"] == "reconstruction"
    assert back.meta["n_max"] == "8"


def test_grid_file_deterministic_apart_from_timestamp(tmp_path, vacuum_record,
                                                      vacuum_kernel):
    cfg = small_config(max_iter=60)
    a = str(tmp_path / "a.txt")
    b = str(tmp_path / "b.txt")
    save_wigner_grid(a, reconstruct_wigner_grid(vacuum_record, cfg, kernel=vacuum_kernel))
    save_wigner_grid(b, reconstruct_wigner_grid(vacuum_record, cfg, kernel=vacuum_kernel))
    keep = lambda line: not line.startswith("# generated:")
    la = [l for l in open(a).read().splitlines() if keep(l)]
    lb = [l for l in open(b).read().splitlines() if keep(l)]
    assert la == lb


def test_grid_file_rejects_malformed(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("not a grid\n")
    from emtomo import FileFormatError

    with pytest.raises(FileFormatError):
        load_wigner_grid(str(bad))
    headerless = tmp_path / "no_steps.txt"
    headerless.write_text("# emtomo wigner grid v1\n0 0 0 0 0 0 0\n")
    with pytest.raises(FileFormatError):
        load_wigner_grid(str(headerless))


def test_compare_grids_norms_and_validation():
    qs = np.linspace(-1, 1, 3)
    ps = np.linspace(-1, 1, 3)
    mk = lambda vals: WignerGrid(
        qs=qs, ps=ps, values=vals,
        iterations=np.zeros((3, 3), dtype=np.int64),
        final_loglik=np.zeros((3, 3)), overflow_fraction=np.zeros((3, 3)),
        rho_tail=np.zeros((3, 3)),
    )
    a = mk(np.zeros((3, 3)))
    b = mk(np.full((3, 3), 0.125))
    same = compare_wigner_grids(a, a)
    assert same["max_abs"] == 0.0 and same["rms"] == 0.0
    norms = compare_wigner_grids(a, b)
    assert norms["max_abs"] == pytest.approx(0.125)
    assert norms["rms"] == pytest.approx(0.125)
    assert norms["compared_points"] == 9
    vals = np.zeros((3, 3))
    vals[1, 1] = np.nan
    norms = compare_wigner_grids(a, mk(vals))
    assert norms["compared_points"] == 8
    assert norms["skipped_points"] == 1
    with pytest.raises(ValidationError):
        compare_wigner_grids(a, WignerGrid(
            qs=qs + 0.5, ps=ps, values=np.zeros((3, 3)),
            iterations=np.zeros((3, 3), dtype=np.int64),
            final_loglik=np.zeros((3, 3)), overflow_fraction=np.zeros((3, 3)),
            rho_tail=np.zeros((3, 3)),
        ))


def test_reconstruction_against_oracle_grid(vacuum_record, vacuum_kernel):
    cfg = small_config(max_iter=2_000)
    recon = reconstruct_wigner_grid(vacuum_record, cfg, kernel=vacuum_kernel)
    exact = oracle_wigner_grid(vacuum_state(), recon.qs, recon.ps, 20)
    norms = compare_wigner_grids(recon, exact)
    assert norms["max_abs"] < 0.02
    assert norms["skipped_points"] == 0


def test_gnuplot_emission(tmp_path):
    grid = oracle_wigner_grid(coherent_state(0.5, 12), np.linspace(-1, 1, 4),
                              np.linspace(-1, 1, 5), 20)
    prefix = str(tmp_path / "wig")
    dat, gp = write_gnuplot_files(grid, prefix)
    dat_lines = open(dat).read().strip("\n").split("\n")
    # header + 4 blocks of 5 rows separated by blanks
    assert dat_lines[0].startswith("#")
    assert dat_lines.count("") == 3
    assert sum(1 for l in dat_lines if l and not l.startswith("#")) == 20
    script = open(gp).read()
    assert "splot" in script and "pm3d" in script
