from __future__ import annotations

import json

import pytest

from aigiqa.errors import EmptyReportList, UnwritablePath
from aigiqa.reports import (
    EvalReport,
    config_hash,
    current_timestamp,
    emit_report,
    parse_reports,
    reports_to_markdown,
    sorted_reports,
)


def _report(variant="full", plcc=0.9, srcc=0.86, krcc=0.68, **kw):
    return EvalReport(
        dataset="agiqa-3k", target_dim="quality",
        plcc=plcc, srcc=srcc, krcc=krcc, variant=variant,
        timestamp="2025-01-01T00:00:00+00:00", **kw,
    )


class TestEvalReport:
    def test_metrics_must_be_in_unit_interval(self):
        with pytest.raises(ValueError):
            _report(plcc=1.5)

    def test_dict_round_trip(self):
        r = _report(setting="ViT-B/16, 16, 6 adjectives", config_hash="ab12")
        assert EvalReport.from_dict(r.to_dict()) == r


class TestConfigHash:
    def test_deterministic(self):
        cfg = {"lr": 0.002, "epochs": 100, "words": ["bad", "good"]}
        assert config_hash(cfg) == config_hash(dict(cfg))

    def test_sensitive_to_every_field(self):
        base = {"lr": 0.002, "epochs": 100}
        assert config_hash(base) != config_hash({**base, "lr": 0.003})
        assert config_hash(base) != config_hash({**base, "epochs": 99})
        assert config_hash(base) != config_hash({**base, "extra": 1})

    def test_key_order_irrelevant(self):
        assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})


class TestTimestamps:
    def test_source_date_epoch_pins_time(self, monkeypatch):
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
        assert current_timestamp() == "1970-01-01T00:00:00+00:00"
        assert current_timestamp() == current_timestamp()

    def test_wall_clock_otherwise(self, monkeypatch):
        monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)
        assert current_timestamp().startswith("2")


class TestEmission:
    def test_json_round_trip(self, tmp_path):
        reports = [_report(), _report(variant="no_regression", plcc=0.81)]
        path = emit_report(reports, "json", tmp_path / "r.json")
        assert parse_reports(path) == sorted_reports(reports)

    def test_csv_round_trip(self, tmp_path):
        reports = [_report(plcc=0.8978123456789, srcc=0.1, krcc=-0.25)]
        path = emit_report(reports, "csv", tmp_path / "r.csv")
        assert parse_reports(path) == reports

    def test_rows_ordered_by_variant(self, tmp_path):
        reports = [
            _report(variant="category_type"),
            _report(variant="full"),
            _report(variant="backbone_swap"),
            _report(variant="no_regression"),
            _report(variant="context_length"),
            _report(variant="category_length"),
        ]
        path = emit_report(reports, "json", tmp_path / "r.json")
        ordered = [r["variant"] for r in json.loads(path.read_text())]
        assert ordered == [
            "full", "no_regression", "backbone_swap",
            "context_length", "category_length", "category_type",
        ]

    def test_markdown_table_shape(self):
        text = reports_to_markdown([_report(), _report(variant="no_regression")])
        lines = text.strip().splitlines()
        assert len(lines) == 4  # header + separator + 2 rows
        assert lines[0].startswith("| Variant |")
        assert "0.9000" in lines[2]

    def test_plot_written(self, tmp_path):
        out = emit_report([_report(), _report(variant="no_regression")], "plot", tmp_path / "r.png")
        assert out.stat().st_size > 0

    def test_empty_list_rejected(self, tmp_path):
        with pytest.raises(EmptyReportList):
            emit_report([], "json", tmp_path / "r.json")

    def test_unwritable_path(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(UnwritablePath):
            emit_report([_report()], "json", blocker / "nested.json")

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            emit_report([_report()], "yaml", tmp_path / "r.yaml")

    def test_parse_unknown_suffix(self, tmp_path):
        path = tmp_path / "r.txt"
        path.write_text("nope")
        with pytest.raises(ValueError):
            parse_reports(path)
