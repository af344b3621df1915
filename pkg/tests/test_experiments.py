"""Sweep bookkeeping, result emission, config validation, and resumability.

Training-heavy paths run with zero or tiny epoch counts at width 8: row
accounting, seeding, persistence, and invariants do not depend on how long
the networks train.
"""

import json

import numpy as np
import pytest

from hodyne import experiments as ex
from hodyne.limits import db_to_linear, p_err_helstrom, p_err_homodyne


def tiny_spec(kind="message-amplitude", **overrides):
    base = dict(
        message_db=(-10.5,),
        target_db=(9.0,),
        widths=(8,),
        gnn_epochs=0,
        cnn_epochs=0,
        base_seed=5,
        replicates=1,
        test_per_key=3,
    )
    base.update(overrides)
    return ex.default_spec(kind, **base)


@pytest.fixture(scope="module")
def message_rows():
    spec = tiny_spec(message_db=(-10.5, -9.3), replicates=2)
    return ex.sweep_message_amplitude(spec), spec


class TestDefaultGrids:
    def test_target_grid(self):
        grid = ex.target_amplitude_grid()
        assert len(grid) == 17
        assert grid[0] == -15.0
        assert grid[-1] == pytest.approx(9.08)

    def test_message_grid(self):
        grid = ex.message_amplitude_grid()
        assert len(grid) == 15
        assert grid[0] == -15.0
        assert grid[-1] == pytest.approx(-9.12)

    def test_scan_widths(self):
        widths = ex.scan_range_widths()
        assert len(widths) == 14
        assert widths[0] == 30
        assert widths[-1] == 4

    def test_default_spec_counts(self):
        spec = ex.default_spec("target-amplitude")
        jobs = ex.SweepRunner(spec).row_jobs()
        # 17 target levels x 3 message levels per replicate: the 51 denoisers
        assert len(jobs) == 51 * spec.replicates


class TestSweepSpec:
    def test_bad_kind(self):
        with pytest.raises(ValueError):
            ex.SweepSpec(kind="bogus", message_db=(-10.5,))

    def test_odd_width(self):
        with pytest.raises(ValueError):
            tiny_spec(widths=(9,))

    def test_empty_levels(self):
        with pytest.raises(ValueError):
            tiny_spec(message_db=())


class TestDeriveSeed:
    def test_deterministic_and_distinct(self):
        a = ex.derive_seed(5, "noisy", "-10.50")
        assert a == ex.derive_seed(5, "noisy", "-10.50")
        others = {
            ex.derive_seed(5, "test", "-10.50"),
            ex.derive_seed(5, "noisy", "-9.30"),
            ex.derive_seed(6, "noisy", "-10.50"),
            ex.derive_seed(5, 1, "noisy", "-10.50"),
        }
        assert a not in others
        assert len(others) == 4
        assert 0 <= a < 2**64


class TestBookkeeping:
    def test_single_point_target_sweep_gives_two_rows(self):
        spec = tiny_spec("target-amplitude", target_db=(-3.0,))
        rows = ex.sweep_target_amplitude(spec)
        assert len(rows) == 2
        assert {r.variant for r in rows} == {"hd-cnn", "hd-gnn-cnn"}
        assert all(r.coordinate == -3.0 for r in rows)

    def test_message_sweep_row_count(self, message_rows):
        rows, spec = message_rows
        # levels x variants x replicates
        assert len(rows) == 2 * 2 * 2

    def test_scan_range_coordinates(self):
        spec = tiny_spec("scan-range", widths=(8, 6))
        rows = ex.sweep_scan_range(spec)
        assert len(rows) == 4
        coords = sorted({r.coordinate for r in rows})
        assert coords == pytest.approx([2 * 36 / 900, 2 * 64 / 900])

    def test_kind_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ex.sweep_message_amplitude(tiny_spec("scan-range"))


class TestRowInvariants:
    def test_relative_hd_recomputed_from_limits(self, message_rows):
        rows, _ = message_rows
        for row in rows:
            a = db_to_linear(row.coordinate)  # message sweep: coordinate is the level
            expected = p_err_homodyne(a) - p_err_helstrom(a)
            assert row.p_relative_hd == pytest.approx(expected, abs=1e-12)
            assert row.p_hel == pytest.approx(p_err_helstrom(a), abs=1e-12)

    def test_variants_share_limits(self, message_rows):
        rows, _ = message_rows
        by_cell = {}
        for r in rows:
            by_cell.setdefault((r.coordinate, r.replicate), []).append(r)
        for cell in by_cell.values():
            assert len(cell) == 2
            a, b = cell
            assert a.p_hel == b.p_hel
            assert a.p_relative_hd == b.p_relative_hd

    def test_composition(self, message_rows):
        rows, _ = message_rows
        for r in rows:
            assert r.p_err >= r.p_network - 1e-15
            assert r.p_relative == pytest.approx(r.p_err - r.p_hel, abs=1e-15)


class TestEmitResults:
    def test_csv_shape_and_round_trip(self, tmp_path, message_rows):
        rows, _ = message_rows
        path = tmp_path / "results.csv"
        ex.emit_results(rows[:2], path)
        lines = path.read_text().strip().split("\n")
        assert len(lines) == 3
        assert lines[0] == ",".join(ex.RESULT_FIELDS)
        parsed = ex.read_results(path)
        for row, back in zip(rows[:2], parsed):
            for name in ex.RESULT_FIELDS:
                assert back[name] == getattr(row, name)  # 17 digits round-trip exactly

    def test_plot_written(self, tmp_path, message_rows):
        rows, _ = message_rows
        ex.emit_results(rows, tmp_path / "r.csv", plot_path=tmp_path / "r.png")
        assert (tmp_path / "r.png").stat().st_size > 0

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            ex.emit_results([], tmp_path / "r.csv")


class TestParseConfig:
    def test_unknown_key_named(self):
        with pytest.raises(ex.ConfigError) as err:
            ex.parse_config({"sweep": "message-amplitude", "bogus_key": 1})
        assert "bogus_key" in str(err.value)

    def test_missing_sweep(self):
        with pytest.raises(ex.ConfigError):
            ex.parse_config({})

    def test_wrong_type(self):
        with pytest.raises(ex.ConfigError) as err:
            ex.parse_config({"sweep": "message-amplitude", "gnn_epochs": "many"})
        assert "gnn_epochs" in str(err.value)

    def test_train_per_key_pinned(self):
        with pytest.raises(ex.ConfigError):
            ex.parse_config({"sweep": "message-amplitude", "train_per_key": 100})

    def test_round_trip(self):
        spec, options = ex.parse_config(
            {"sweep": "message-amplitude", "message_db": [-10.5], "width": 8, "gnn_epochs": 2}
        )
        assert spec.kind == "message-amplitude"
        assert spec.widths == (8,)
        assert spec.gnn_epochs == 2
        assert options["out_dir"] == "runs"


MINIMAL_CONFIG = {
    "sweep": "message-amplitude",
    "message_db": [-10.5],
    "width": 8,
    "gnn_epochs": 2,
    "cnn_epochs": 1,
    "replicates": 1,
    "base_seed": 9,
    "test_per_key": 5,
}


class TestRunConfig:
    @pytest.fixture(scope="class")
    def first_run(self, tmp_path_factory):
        out = tmp_path_factory.mktemp("runs")
        cfg_path = out / "config.json"
        raw = dict(MINIMAL_CONFIG, out_dir=str(out))
        cfg_path.write_text(json.dumps(raw))
        run_dir = ex.run_config(cfg_path)
        return cfg_path, run_dir

    def test_artifacts_exist(self, first_run):
        _, run_dir = first_run
        assert (run_dir / "config.snapshot").exists()
        assert (run_dir / "results.csv").exists()
        assert list((run_dir / "datasets").glob("*.qhd"))
        assert list((run_dir / "models").glob("*.qnn"))
        rows = ex.read_results(run_dir / "results.csv")
        assert len(rows) == 2

    def test_idempotent_rerun(self, first_run):
        cfg_path, run_dir = first_run
        before_csv = (run_dir / "results.csv").read_bytes()
        model_times = {p: p.stat().st_mtime_ns for p in (run_dir / "models").glob("*.qnn")}
        rerun_dir = ex.run_config(cfg_path)
        assert rerun_dir == run_dir
        assert (run_dir / "results.csv").read_bytes() == before_csv
        for p, t in model_times.items():
            assert p.stat().st_mtime_ns == t  # models were not retrained

    def test_row_resume_regenerates_identically(self, first_run):
        cfg_path, run_dir = first_run
        before_csv = (run_dir / "results.csv").read_bytes()
        row_files = list((run_dir / "results").glob("*.json"))
        assert row_files
        row_files[0].unlink()
        gnn_models = list((run_dir / "models").glob("gnn_*.qnn"))
        gnn_models[0].unlink()
        ex.run_config(cfg_path)
        assert (run_dir / "results.csv").read_bytes() == before_csv

    def test_fresh_directory_reproduces_csv(self, first_run, tmp_path):
        cfg_path, run_dir = first_run
        raw = json.loads(cfg_path.read_text())
        raw["out_dir"] = str(tmp_path / "other")
        other_cfg = tmp_path / "cfg.json"
        other_cfg.write_text(json.dumps(raw))
        other_dir = ex.run_config(other_cfg)
        a = (run_dir / "results.csv").read_text().strip().split("\n")
        b = (other_dir / "results.csv").read_text().strip().split("\n")
        assert a == b


class TestMultiLevelCsvGrouping:
    def test_scan_range_emits_one_csv_per_message_level(self, tmp_path):
        raw = {
            "sweep": "scan-range",
            "message_db": [-10.5, -9.3],
            "widths": [8],
            "gnn_epochs": 0,
            "cnn_epochs": 0,
            "replicates": 1,
            "test_per_key": 2,
            "base_seed": 3,
            "out_dir": str(tmp_path),
        }
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(raw))
        run_dir = ex.run_config(cfg)
        files = sorted(p.name for p in run_dir.glob("results*.csv"))
        assert files == ["results_m-10.50.csv", "results_m-9.30.csv"]
        for f in files:
            assert len(ex.read_results(run_dir / f)) == 2
