import json
import re

import numpy as np
import pytest

from caring import io
from caring.calibrators import CaringCalibrator, FitConfig, TemperatureScaler, fit_caring
from caring.core import Dataset
from caring.errors import DataError
from caring.metrics import (
    BinStats,
    ClassManifest,
    ClassReport,
    ReliabilityReport,
    bin_stats,
    ece,
    per_class_report,
    reliability_report,
)
from caring.synth import SynthSpec, gen_global
from oracles import random_dataset


def write_lines(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))


def bar_heights(svg):
    """{bin index: data-accuracy} for each bar in a reliability diagram."""
    return {int(b): float(a) for b, a in re.findall(r'data-bin="(\d+)"[^>]*data-accuracy="([0-9.]+)"', svg)}


def bar_counts(svg):
    return {int(b): int(c) for b, c in re.findall(r'data-bin="(\d+)" data-count="(\d+)"', svg)}


def hand_report():
    bins = bin_stats([0.95, 0.95, 0.65, 0.65], [True, False, True, True], 10)
    return ReliabilityReport(bins, ece(bins, 4), 0.5, 0.75, 4)


class TestPredictions:
    def test_two_lines(self, tmp_path):
        p = tmp_path / "p.jsonl"
        write_lines(p, [
            {"id": "a", "label": 0, "logits": [1, 2, 3], "features": [0.5, 1]},
            {"id": "b", "label": 2, "logits": [0, 0, 1], "features": [1, 1]},
        ])
        ds, manifest = io.read_predictions(p)
        assert len(ds) == 2 and ds.num_classes == 3 and ds.feature_dim == 2
        assert manifest is None
        assert ds.ids == ("a", "b")

    def test_length_error_names_line(self, tmp_path):
        p = tmp_path / "p.jsonl"
        rec = {"id": "x", "label": 0, "logits": [1, 2, 3], "features": []}
        bad = dict(rec, logits=[1, 2, 3, 4])
        write_lines(p, [rec, rec, rec, rec, bad])
        with pytest.raises(DataError, match="line 5: logits length 4 ≠ 3"):
            io.read_predictions(p)

    @pytest.mark.parametrize(
        "line,msg",
        [
            ("{not json", "line 1: invalid JSON"),
            ('{"id": "a", "label": 0, "logits": [1, NaN], "features": []}', "line 1: 'logits' contains a non-finite"),
            ('{"id": "a", "label": 5, "logits": [1, 2], "features": []}', "line 1: label 5 out of range"),
            ('{"id": "a", "logits": [1, 2], "features": []}', "line 1: missing field 'label'"),
            ('{"id": "a", "label": 0, "logits": [1, "x"], "features": []}', "line 1: 'logits' contains a non-numeric"),
        ],
    )
    def test_bad_records(self, tmp_path, line, msg):
        p = tmp_path / "p.jsonl"
        p.write_text(line + "\n")
        with pytest.raises(DataError, match=re.escape(msg)):
            io.read_predictions(p)

    def test_feature_mismatch(self, tmp_path):
        p = tmp_path / "p.jsonl"
        write_lines(p, [
            {"id": "a", "label": 0, "logits": [1, 2], "features": [1]},
            {"id": "b", "label": 0, "logits": [1, 2], "features": [1, 2]},
        ])
        with pytest.raises(DataError, match="line 2: features length 2 ≠ 1"):
            io.read_predictions(p)

    def test_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        ds = Dataset(rng.standard_normal((40, 5)) * 1e3, rng.standard_normal((40, 7)) * 1e-7, rng.integers(0, 5, 40))
        manifest = ClassManifest(list("abcde"), [5, 4, 3, 2, 1])
        io.write_predictions(ds, tmp_path / "p.jsonl", manifest)
        again, m2 = io.read_predictions(tmp_path / "p.jsonl")
        assert again == ds
        assert m2 == manifest

    def test_manifest_class_mismatch(self, tmp_path):
        ds = random_dataset(np.random.default_rng(0), 3, 4)
        io.write_predictions(ds, tmp_path / "p.jsonl", ClassManifest(["a", "b"], [1, 1]))
        with pytest.raises(DataError, match="manifest lists 2 classes"):
            io.read_predictions(tmp_path / "p.jsonl")

    def test_calibrated_output(self, tmp_path):
        ds = Dataset([[2.0, 1.0, 0.0]], [[0.0]], [0])
        io.write_calibrated_predictions(ds, TemperatureScaler(2.0), tmp_path / "out.jsonl")
        rec = json.loads((tmp_path / "out.jsonl").read_text())
        assert rec["pred"] == 0 and rec["temperature"] == 2.0
        assert rec["confidence"] == pytest.approx(0.5065, abs=1e-4)


class TestCalibratorFiles:
    def test_temperature_roundtrip(self, tmp_path):
        io.save_calibrator(TemperatureScaler(2.5), tmp_path / "t.json")
        assert io.load_calibrator(tmp_path / "t.json").tau == 2.5

    def test_caring_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        cal = CaringCalibrator(rng.normal(size=(7, 4)), rng.normal(size=7), rng.normal(size=7), rng.normal())
        io.save_calibrator(cal, tmp_path / "c.json")
        again = io.load_calibrator(tmp_path / "c.json")
        z = rng.normal(size=(100, 4))
        np.testing.assert_array_equal(again.temperatures(z), cal.temperatures(z))
        for name, value in cal.params().items():
            assert np.array_equal(again.params()[name], value)

    def test_unknown_kind(self, tmp_path):
        (tmp_path / "h.json").write_text(json.dumps({"kind": "histogram", "format_version": 1}))
        with pytest.raises(DataError, match="unsupported calibrator kind"):
            io.load_calibrator(tmp_path / "h.json")

    def test_unknown_version(self, tmp_path):
        (tmp_path / "v.json").write_text(json.dumps({"kind": "temperature", "tau": 1.0, "format_version": 2}))
        with pytest.raises(DataError, match="format_version"):
            io.load_calibrator(tmp_path / "v.json")

    def test_schema_fields(self, tmp_path):
        io.save_calibrator(CaringCalibrator.identity(3, 2), tmp_path / "c.json")
        data = json.loads((tmp_path / "c.json").read_text())
        assert data["kind"] == "caring" and data["hidden_dim"] == 2 and data["feature_dim"] == 3
        assert data["format_version"] == 1
        assert set(data) == {"kind", "w1", "b1", "w2", "b2", "hidden_dim", "feature_dim", "format_version"}


class TestReports:
    def test_class_csv_row(self, tmp_path):
        reports = [ClassReport(0, "classX", 2, 0.0, 0.9, 0.9, 0.9)]
        io.write_report(reports, tmp_path / "c.csv")
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[0] == "class,n,recall,mean_conf,delta_acc,ece"
        assert lines[1] == "classX,2,0.0000,0.9000,0.9000,0.9000"

    def test_bin_csv_empty_rows(self, tmp_path):
        io.write_report(hand_report(), tmp_path / "b.csv")
        lines = (tmp_path / "b.csv").read_text().splitlines()
        assert lines[0] == "bin_low,bin_high,count,accuracy,mean_confidence,gap"
        assert len(lines) == 11
        assert lines[1] == "0.0000,0.1000,0,,,"
        assert lines[10] == "0.9000,1.0000,2,0.5000,0.9500,0.4500"

    def test_json_roundtrip(self, tmp_path):
        ds = random_dataset(np.random.default_rng(1), 200, 6)
        report = reliability_report(ds, np.full(200, 1.7), 15, "custom")
        io.write_report(report, tmp_path / "r.json")
        assert io.read_report(tmp_path / "r.json") == report
        classes = per_class_report(ds)
        io.write_report(classes, tmp_path / "c.json")
        assert io.read_report(tmp_path / "c.json") == classes

    def test_deterministic(self, tmp_path):
        io.write_report(hand_report(), tmp_path / "a.csv")
        io.write_report(hand_report(), tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_unwritable(self, tmp_path):
        with pytest.raises(OSError):
            io.write_report(hand_report(), tmp_path / "missing" / "r.csv")

    def test_trace_roundtrip(self, tmp_path):
        ds = gen_global(SynthSpec(300, 4, 2.0, seed=1))
        _, trace = fit_caring(ds, FitConfig.caring(epochs=4, hidden_dim=4))
        io.write_trace(trace, tmp_path / "t.csv")
        assert io.read_trace(tmp_path / "t.csv") == trace
        assert (tmp_path / "t.csv").read_text().splitlines()[0] == "epoch,nll,ece,mean_temperature,std_temperature"


class TestTables:
    def test_class_table_row_format(self):
        # Table 2 row for sitting_still: 2797 samples, recall 95.1, mean conf 97.96, dAcc 2.86, ECE 2.86
        r = ClassReport(0, "sitting_still", 2797, 0.951, 0.9796, 0.9796 - 0.951, 0.0286)
        table = io.format_class_table([("I3D", [r])])
        row = table.splitlines()[2]
        assert re.fullmatch(r"sitting_still \|\s+2797\s+95\.10 \|\s+97\.96\s+2\.86\s+2\.86", row)

    def test_summary_table(self):
        rep = hand_report()
        table = io.format_summary_table([("Raw", rep, rep)], "Synthetic - All Classes")
        lines = table.splitlines()
        assert lines[0] == "Synthetic - All Classes"
        assert "ECE val" in lines[1] and "NLL test" in lines[1]
        assert lines[3].split() == ["Raw", "|", "40.00", "40.00", "|", "0.50", "0.50"]


class TestSvg:
    def test_hand_diagram(self, tmp_path):
        io.write_reliability_diagram(hand_report(), tmp_path / "d.svg")
        svg = (tmp_path / "d.svg").read_text()
        assert bar_heights(svg) == {6: 1.0, 9: 0.5}
        assert "ECE = 0.4000" in svg
        assert 'class="diagonal"' in svg
        assert svg.startswith("<?xml")

    def test_calibrated_bars_on_diagonal(self):
        bins = [BinStats(i, i / 4, (i + 1) / 4, 4, (i + 0.5) / 4, (i + 0.5) / 4) for i in range(4)]
        svg = io.reliability_diagram_svg(ReliabilityReport(bins, 0.0, 0.1, 0.5, 16))
        for rect in re.findall(r"<rect class=\"bar\"[^>]*>", svg):
            acc = float(re.search(r'data-accuracy="([0-9.]+)"', rect).group(1))
            conf = float(re.search(r'data-confidence="([0-9.]+)"', rect).group(1))
            assert acc == conf

    def test_diagram_deterministic(self, tmp_path):
        io.write_reliability_diagram(hand_report(), tmp_path / "a.svg")
        io.write_reliability_diagram(hand_report(), tmp_path / "b.svg")
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()

    def test_histogram_all_confident(self, tmp_path):
        ds = Dataset([[800.0, 0.0]] * 7, np.zeros((7, 1)), [0] * 7)
        io.write_confidence_histogram(ds, None, tmp_path / "h.svg")
        assert bar_counts((tmp_path / "h.svg").read_text()) == {9: 7}

    def test_histogram_uniform_logits(self, tmp_path):
        ds = Dataset([[0.0, 0.0]] * 5, np.zeros((5, 1)), [0, 1, 0, 1, 1])
        io.write_confidence_histogram(ds, None, tmp_path / "h.svg")
        assert bar_counts((tmp_path / "h.svg").read_text()) == {5: 5}

    def test_histogram_spreads_after_calibration(self):
        ds = gen_global(SynthSpec(5000, 10, 2.5, seed=0))
        raw = io.histogram_counts(ds)
        cal = io.histogram_counts(ds, np.full(len(ds), 2.5))
        assert raw[9] > cal[9]
        assert raw == [b.count for b in reliability_report(ds).bins]
        assert cal == [b.count for b in reliability_report(ds, np.full(len(ds), 2.5)).bins]
        svg = io.confidence_histogram_svg(raw)
        assert bar_counts(svg) == {i: c for i, c in enumerate(raw) if c}
