import csv

import pytest

from golden_rows import REP_ROWS
from vton_eval.core import CorrelationEntry, CorrelationReport, MethodAggregate
from vton_eval.report import (
    ReportError,
    render_text_table,
    representation_table,
    write_correlation_report,
    write_report,
)
from vton_eval.rep_metrics import aggregate_overall, aggregate_rep


def make_aggregates():
    a = MethodAggregate(method_id="good", sample_count=5)
    a.vlm = {"s_bg": 4.5, "s_id": 4.2, "s_tex": 4.1, "s_shape": 4.4,
             "s_real": 4.3, "s_avg": 4.3}
    a.s_global = 0.95
    a.s_rep = [0.93, 0.91, 0.9, 0.88]
    a.s_rep_excluded = [0, 0, 0, 0]
    a.s_rep_mean = 0.905
    a.s_overall = 0.9275
    a.psnr = 33.0
    a.ssim = 0.97
    a.fid = 4.0
    a.human = {"s_bg": 4.6, "s_id": 4.4, "s_tex": 4.2, "s_shape": 4.5,
               "s_real": 4.4, "s_avg": 4.42}
    b = MethodAggregate(method_id="bad", sample_count=5)
    b.vlm = {"s_bg": 3.0, "s_id": 2.8, "s_tex": 2.1, "s_shape": 2.9,
             "s_real": 2.5, "s_avg": 2.66}
    b.s_global = 0.7
    b.s_rep = [0.6, 0.55, 0.5, 0.45]
    b.s_rep_excluded = [0, 0, 1, 2]
    b.s_rep_mean = 0.525
    b.s_overall = 0.6125
    b.psnr = 14.0
    b.ssim = 0.6
    b.fid = 60.0
    b.human = {"s_bg": 3.2, "s_id": 2.9, "s_tex": 2.0, "s_shape": 2.7,
               "s_real": 2.4, "s_avg": 2.64}
    return [a, b]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestWriteReport:
    def test_emits_tables_and_figure(self, tmp_path):
        written = write_report(make_aggregates(), tmp_path)
        names = {p.split("/")[-1] for p in written}
        assert {"table_semantic.csv", "table_representation.csv",
                "table_pixel.csv", "exclusions.csv", "fig_scores.png"} <= names
        assert (tmp_path / "fig_scores.png").stat().st_size > 0

    def test_ranking_consistent_with_means(self, tmp_path):
        write_report(make_aggregates(), tmp_path)
        rows = read_csv(tmp_path / "table_representation.csv")
        by_method = {r["method"]: float(r["s_overall"]) for r in rows}
        assert by_method["good"] > by_method["bad"]
        text = (tmp_path / "table_representation.txt").read_text()
        assert "0.927*" in text  # best s_overall marked

    def test_lower_better_marking_in_pixel_table(self, tmp_path):
        write_report(make_aggregates(), tmp_path)
        text = (tmp_path / "table_pixel.txt").read_text()
        # fid 4.0 is best because lower is better there.
        assert "4.000*" in text

    def test_empty_aggregates_error(self, tmp_path):
        with pytest.raises(ReportError, match="no results"):
            write_report([], tmp_path)

    def test_published_rows_through_report_path(self, tmp_path):
        aggregates = []
        for method, row in REP_ROWS.items():
            agg = MethodAggregate(method_id=method)
            agg.s_global = row[0]
            agg.s_rep = list(row[1:5])
            agg.s_rep_mean = aggregate_rep(row[1:5])
            agg.s_overall = aggregate_overall(row[0], agg.s_rep_mean)
            aggregates.append(agg)
        write_report(aggregates, tmp_path)
        rows = read_csv(tmp_path / "table_representation.csv")
        for row in rows:
            want = REP_ROWS[row["method"]]
            assert abs(float(row["s_rep_mean"]) - want[5]) <= 0.001
            assert abs(float(row["s_overall"]) - want[6]) <= 0.001


class TestCorrelationReport:
    def test_tables_written(self, tmp_path):
        report = CorrelationReport(
            human_column="s_avg", level="method", n=9,
            entries={"s_avg": CorrelationEntry(0.85, 0.72, 0.83),
                     "-fid": CorrelationEntry(0.87, 0.72, 0.59)},
            skipped={"-lpips": "metric missing for at least one method"})
        written = write_correlation_report({"core": report}, make_aggregates(), tmp_path)
        names = {p.split("/")[-1] for p in written}
        assert {"correlation_core.csv", "correlation_core.txt",
                "fig_correlation.png"} <= names
        rows = read_csv(tmp_path / "correlation_core.csv")
        metrics = {r["metric"] for r in rows}
        assert {"s_avg", "-fid", "-lpips"} <= metrics
        lpips_row = next(r for r in rows if r["metric"] == "-lpips")
        assert lpips_row["rho_s"] == ""


def test_render_text_table_alignment():
    rows = [{"m": "a", "x": 1.0}, {"m": "bb", "x": 2.0}]
    text = render_text_table("demo", ["m", "x"], rows)
    lines = text.splitlines()
    assert lines[0] == "demo"
    assert "2.000*" in text
    assert "1.000^" in text
