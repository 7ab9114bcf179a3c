"""
Utility Tests
Description: Configuration, metrics collection, artifact I/O, sweeps and errors
"""

import json

import pydantic
import pytest

from moreau_w2.utils.config import THREADS_ENV, ExperimentConfig, get_config, numeric_config, worker_count
from moreau_w2.utils.errors import ArtifactIOError, NoConvergence, SolverStall, ValidationError
from moreau_w2.utils.io import format_number, read_csv_table, read_json, write_csv_table
from moreau_w2.utils.metrics import MetricsCollector
from moreau_w2.utils.sweep import run_rows


class TestConfig:
    """Tolerances and experiment settings"""

    def test_override_is_restored(self):
        """numeric_config restores the previous tolerances on exit"""
        before = get_config().tie_tol
        with numeric_config(tie_tol=1e-6) as cfg:
            assert cfg.tie_tol == 1e-6
            assert get_config().tie_tol == 1e-6
        assert get_config().tie_tol == before

    def test_defaults(self):
        """Default sweep grid and seed"""
        config = ExperimentConfig(command="bounds-check")
        assert config.deltas == [0.5, 0.25, 0.1, 0.05, 0.01]
        assert config.seed_list == [0]

    def test_seeds_replace_seed(self):
        """--seeds wins over --seed"""
        assert ExperimentConfig(command="w2", seed=3, seeds=[1, 2]).seed_list == [1, 2]

    @pytest.mark.parametrize(
        "field, value",
        [("delta", 1.0), ("deltas", []), ("n", 0), ("seed", -1), ("tol", 0.0), ("max_iter", 0)],
    )
    def test_rejects_bad_values(self, field, value):
        """Invalid settings fail before any computation"""
        with pytest.raises(pydantic.ValidationError):
            ExperimentConfig(command="envelope", **{field: value})

    def test_unknown_command(self):
        """Only the known subcommands are accepted"""
        with pytest.raises(pydantic.ValidationError):
            ExperimentConfig(command="plot")

    def test_worker_count_from_environment(self, monkeypatch):
        """MOREAU_W2_THREADS caps the sweep workers"""
        monkeypatch.setenv(THREADS_ENV, "3")
        assert worker_count() == 3
        monkeypatch.setenv(THREADS_ENV, "many")
        assert worker_count() == 1


class TestMetricsCollector:
    """Timers and solver statistics"""

    def test_record_solve(self):
        """Solves accumulate iterations and track the worst gap"""
        collector = MetricsCollector()
        collector.record_solve(iterations=4, gap=1e-10, converged=True)
        collector.record_solve(iterations=6, gap=3e-9, converged=False)
        metrics = collector.get_all_metrics()["solver"]
        assert metrics["solves"] == 2
        assert metrics["total_iterations"] == 10
        assert metrics["max_gap"] == 3e-9
        assert metrics["convergence_rate"] == 50.0

    def test_nested_timers(self):
        """Wall time is the longest timer, not the sum of nested ones"""
        collector = MetricsCollector()
        collector.start_timer("run")
        collector.start_timer("sweep")
        inner = collector.stop_timer("sweep")
        outer = collector.stop_timer("run")
        assert outer >= inner
        assert collector.wall_time == pytest.approx(outer)

    def test_stop_unknown_timer(self):
        """Stopping a timer that never started returns zero"""
        assert MetricsCollector().stop_timer("missing") == 0.0

    def test_run_metadata(self):
        """Metadata carries versions, tolerances and extra fields"""
        meta = MetricsCollector().run_metadata("w2", {"a": "a.csv"}, seed=5, flagged=False)
        assert meta["command"] == "w2"
        assert meta["seed"] == 5
        assert meta["flagged"] is False
        assert meta["tolerances"]["delta_band"] == 1e-6
        assert "numpy" in meta["versions"]

    def test_save_metrics(self, tmp_path):
        """Saved metrics read back as the collector's snapshot"""
        collector = MetricsCollector()
        collector.record_solve(iterations=3, gap=1e-9, converged=True)
        path = tmp_path / "metrics" / "run.json"
        collector.save_metrics(path)
        saved = json.loads(path.read_text())
        assert saved["solver"]["solves"] == 1
        assert saved["solver"]["total_iterations"] == 3

    def test_report(self):
        """Report is a table naming every metric"""
        report = MetricsCollector().generate_report()
        assert "Solves" in report and "Sweep rows" in report


class TestArtifactIO:
    """CSV and JSON artifacts"""

    def test_number_format(self):
        """Floats use their shortest round-trip text"""
        assert format_number(0.1) == "0.1"
        assert format_number(3) == "3"
        assert format_number(True) == "true"

    def test_csv_round_trip(self, tmp_path):
        """A written table reads back with its header"""
        path = tmp_path / "nested" / "table.csv"
        write_csv_table(path, ["a", "b"], [[1, 0.5], [2, 0.25]])
        header, values = read_csv_table(path)
        assert header == ["a", "b"]
        assert values.tolist() == [[1.0, 0.5], [2.0, 0.25]]

    def test_row_length_mismatch(self, tmp_path):
        """Rows must match the header"""
        with pytest.raises(ArtifactIOError):
            write_csv_table(tmp_path / "t.csv", ["a", "b"], [[1]])

    def test_json_file_and_inline(self, tmp_path):
        """read_json accepts inline text or a path"""
        path = tmp_path / "g.json"
        path.write_text(json.dumps({"mean": [0]}))
        assert read_json(str(path)) == read_json('{"mean": [0]}')

    def test_json_not_an_object(self):
        """Top-level JSON must be an object"""
        with pytest.raises(ArtifactIOError):
            read_json("[1, 2]")

    def test_undecodable_csv(self, tmp_path):
        """Bytes that are not UTF-8 are an I/O error"""
        path = tmp_path / "bad.csv"
        path.write_bytes(b"x0\n0.0\n\xff\xfe\n")
        with pytest.raises(ArtifactIOError):
            read_csv_table(path)

    def test_undecodable_json_file(self, tmp_path):
        """A JSON file that is not UTF-8 is an I/O error"""
        path = tmp_path / "bad.json"
        path.write_bytes(b"\xff\xfe{}")
        with pytest.raises(ArtifactIOError):
            read_json(str(path))


class TestSweeps:
    """Row evaluation"""

    @pytest.mark.parametrize("workers", [1, 4])
    def test_order_is_preserved(self, workers):
        """Results come back in key order whatever the worker count"""
        assert run_rows(lambda k: k * k, [3, 1, 2, 5], workers=workers) == [9, 1, 4, 25]

    def test_empty_sweep(self):
        """No keys, no rows"""
        assert run_rows(lambda k: k, [], workers=2) == []


class TestErrors:
    """Exit codes and machine-readable errors"""

    def test_exit_codes(self):
        """Validation 1, solver 2, I/O 3"""
        assert ValidationError("x").exit_code == 1
        assert SolverStall("x").exit_code == 2
        assert NoConvergence("x").exit_code == 2
        assert ArtifactIOError("x").exit_code == 3

    def test_to_dict(self):
        """Details are carried into the JSON form"""
        data = ValidationError("bad input", row=2).to_dict()
        assert data == {"error": "ValidationError", "message": "bad input", "details": {"row": 2}, "exit_code": 1}
