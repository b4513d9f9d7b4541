import numpy as np
import pytest

from motionflow.errors import DataError, ShapeError
from motionflow.metrics import (MetricsReport, boundary_jump_stats,
                                coefficient_correlation, energy_distance,
                                pearson, read_report_csv, sliced_wasserstein,
                                velocity_error, write_report_table)

RNG = np.random.default_rng(31337)


def test_pearson_perfect_and_anticorrelated():
    x = RNG.standard_normal(200)
    assert abs(pearson(x, 2 * x + 3) - 1.0) <= 1e-12
    assert abs(pearson(x, -x) + 1.0) <= 1e-12
    assert pearson(x, np.full(200, 2.0)) == 0.0


def test_energy_distance_zero_for_identical_samples():
    x = RNG.standard_normal((300, 4))
    assert energy_distance(x, x.copy()) <= 1e-8


def test_energy_distance_detects_mean_shift():
    x = RNG.standard_normal((400, 4))
    y = RNG.standard_normal((400, 4))
    same = energy_distance(x, y)
    shifted = energy_distance(x, y + 2.0)
    assert shifted > 5 * same
    assert shifted > 1.0


def test_energy_distance_symmetry_and_errors():
    x = RNG.standard_normal((100, 3))
    y = RNG.standard_normal((120, 3)) + 0.3
    assert abs(energy_distance(x, y) - energy_distance(y, x)) <= 1e-12
    with pytest.raises(ShapeError):
        energy_distance(x, RNG.standard_normal((100, 2)))
    with pytest.raises(ShapeError):
        energy_distance(x[:1], y)


def test_energy_distance_subsampling_is_deterministic():
    x = RNG.standard_normal((3000, 2))
    y = RNG.standard_normal((3000, 2)) + 0.1
    assert energy_distance(x, y, max_points=500) == energy_distance(x, y, max_points=500)


def test_sliced_wasserstein_agrees_on_shift_direction():
    x = RNG.standard_normal((500, 3))
    y = RNG.standard_normal((500, 3))
    near = sliced_wasserstein(x, y)
    far = sliced_wasserstein(x, y + 1.5)
    assert far > 3 * near


def test_coefficient_correlation_oracle_self_is_one():
    trajs = [RNG.standard_normal((40, 5)) for _ in range(3)]
    assert abs(coefficient_correlation(trajs, [t.copy() for t in trajs]) - 1.0) <= 1e-12
    noise = [RNG.standard_normal((40, 5)) for _ in range(3)]
    assert abs(coefficient_correlation(trajs, noise)) <= 0.2


def test_boundary_jump_stats_continuous_vs_jumpy():
    t = np.linspace(0, 4 * np.pi, 80)
    smooth = np.stack([np.sin(t), np.cos(t)], axis=1)
    windows = [smooth[:40], smooth[40:]]
    stats = boundary_jump_stats(windows)
    assert stats["jump_ratio"] <= 1.5

    jumpy = [smooth[:40], smooth[40:] + 5.0]
    assert boundary_jump_stats(jumpy)["jump_ratio"] > 10


def test_velocity_error_shift_invariance():
    a = RNG.standard_normal((30, 4))
    assert velocity_error(a, a + 7.0) <= 1e-12
    assert velocity_error(a, a[::-1]) > 0


def test_report_csv_json_agree(tmp_path):
    rows = [
        {"axis": "nfe", "value": 2, "coeff_corr": 0.91234, "calls": 20},
        {"axis": "nfe", "value": 10, "coeff_corr": 0.95678, "calls": 100},
    ]
    write_report_table(rows, tmp_path / "t.csv", tmp_path / "t.json")
    back = read_report_csv(tmp_path / "t.csv")
    import json
    jback = json.loads((tmp_path / "t.json").read_text())
    for r_csv, r_json, r_orig in zip(back, jback, rows):
        for key in r_orig:
            assert r_csv[key] == r_orig[key], key
            assert r_json[key] == r_orig[key], key


def test_report_table_rejects_inconsistent_rows(tmp_path):
    with pytest.raises(DataError):
        write_report_table([{"a": 1}, {"b": 2}], tmp_path / "x.csv", tmp_path / "x.json")
    with pytest.raises(DataError):
        write_report_table([], tmp_path / "x.csv", tmp_path / "x.json")


def test_metrics_report_row_and_json(tmp_path):
    rep = MetricsReport(config_hash="abc123", seed=5,
                        scalars={"coeff_corr": 0.9})
    row = rep.row()
    assert row["config_hash"] == "abc123" and row["coeff_corr"] == 0.9
    rep.to_json(tmp_path / "rep.json")
    import json
    assert json.loads((tmp_path / "rep.json").read_text())["seed"] == 5
