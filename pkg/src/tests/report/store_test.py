import json
import logging

from depcag.model.reports import MapValue, RunRecord
from depcag.report.store import ReportStore, render


def make_record(value=0.5, seed=0):
    report = MapValue(map="H", t=0.0, argument=[0.5], value=[value], error_bar=1e-9)
    return RunRecord(command="conjugacy", config_hash="ab" * 32, seed=seed, constants={"K": 1.2}, report=report)


class TestStore:
    def test_save_and_load(self, tmp_path):
        store = ReportStore(tmp_path)
        path = store.save(make_record(), tmp_path / "sub" / "run.json")
        assert path.exists()
        assert not list(path.parent.glob("*.tmp"))
        loaded = store.load(path)
        assert loaded == make_record()

    def test_bare_name_resolves_under_results_dir(self, tmp_path):
        store = ReportStore(tmp_path / "results")
        path = store.save(make_record(), "run.json")
        assert path == tmp_path / "results" / "run.json"
        assert store.load("run.json").report.value == [0.5]

    def test_relative_path_with_directory_kept(self, tmp_path):
        store = ReportStore(tmp_path)
        assert store.resolve("out/run.json").as_posix() == "out/run.json"

    def test_render_is_deterministic(self):
        a, b = render(make_record()), render(make_record())
        assert a == b
        assert a.endswith("\n")
        assert list(json.loads(a)) == sorted(json.loads(a))

    def test_render_tracks_content(self):
        assert render(make_record(seed=1)) != render(make_record(seed=2))

    def test_missing_file(self, tmp_path, caplog):
        with caplog.at_level(logging.ERROR):
            assert ReportStore(tmp_path).load(tmp_path / "absent.json") is None

    def test_unknown_report_type(self, tmp_path):
        data = json.loads(render(make_record()))
        data["report"]["report_type"] = "telemetry"
        path = tmp_path / "odd.json"
        path.write_text(json.dumps(data))
        assert ReportStore(tmp_path).load(path) is None

    def test_malformed_report(self, tmp_path):
        data = json.loads(render(make_record()))
        del data["report"]["value"]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(data))
        assert ReportStore(tmp_path).load(path) is None
