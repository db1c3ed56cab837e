import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dscope.classifiers import ClassifierSpec, fit
from dscope.corpus import UNCLASSIFIED
from dscope.errors import DataError
from dscope.store import TweetRecord, write_store
from dscope.surveillance import (
    DailyDistribution,
    TimelineSeries,
    aggregate_daily,
    batch_classify,
    emit_report,
    load_report,
    rolling_average,
    smooth_series,
)

from conftest import topic_corpus


@pytest.fixture(scope="module")
def small_model():
    X, y, _ = topic_corpus(3, 15, dim=12, seed=0, noise=0.3)
    spec = ClassifierSpec(family="logreg", hyperparameters={"c": 10.0})
    return fit(spec, X, y)


def _write_query_store(tmp_path, n, dim, seed=1, meta=False):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(n, dim)).astype(np.float32)
    path = tmp_path / "q.bin"
    records = None
    if meta:
        records = [
            TweetRecord(record_id=f"t{i}", date=dt.date(2020, 2, 1) + dt.timedelta(days=i % 5), row=i)
            for i in range(n)
        ]
    write_store(m, path, meta=records)
    return path, records


class TestBatchClassify:
    def test_empty_store(self, tmp_path, small_model):
        path = tmp_path / "q.bin"
        write_store(np.empty((0, 12), dtype=np.float32), path)
        assert list(batch_classify(small_model, path)) == []

    def test_chunking_invariance(self, tmp_path, small_model):
        path, _ = _write_query_store(tmp_path, 500, 12)
        one = list(batch_classify(small_model, path, chunk_size=1))
        whole = list(batch_classify(small_model, path, chunk_size=500))
        mid = list(batch_classify(small_model, path, chunk_size=33))
        assert one == whole == mid
        assert [r for r, _, _ in whole] == list(range(500))

    def test_threshold_one_rejects_everything_uncertain(self, tmp_path, small_model):
        # Softmax confidence on finite logits is strictly below 1.
        path, _ = _write_query_store(tmp_path, 200, 12)
        labels = {label for _, label, _ in batch_classify(small_model, path, threshold=1.0)}
        assert labels == {UNCLASSIFIED}

    def test_no_threshold_keeps_model_labels(self, tmp_path, small_model):
        path, _ = _write_query_store(tmp_path, 50, 12)
        labels = {label for _, label, _ in batch_classify(small_model, path)}
        assert labels <= set(small_model.classes)

    def test_dim_mismatch_fails_before_output(self, tmp_path, small_model):
        path, _ = _write_query_store(tmp_path, 10, 7)
        with pytest.raises(DataError, match="dim"):
            batch_classify(small_model, path)

    def test_thread_count_does_not_change_output(self, tmp_path, small_model):
        path, _ = _write_query_store(tmp_path, 300, 12)
        seq = list(batch_classify(small_model, path, chunk_size=64, n_threads=1))
        par = list(batch_classify(small_model, path, chunk_size=64, n_threads=4))
        assert seq == par

    def test_progress_logged_every_interval(self, tmp_path, small_model, caplog, monkeypatch):
        import logging

        import dscope.surveillance as sv

        monkeypatch.setattr(sv, "_PROGRESS_EVERY", 100)
        monkeypatch.setattr(sv, "_INFERENCE_BLOCK", 100)
        path, _ = _write_query_store(tmp_path, 250, 12)
        with caplog.at_level(logging.INFO, logger="dscope.surveillance"):
            list(batch_classify(small_model, path, chunk_size=100))
        progress = [r for r in caplog.records if "classified" in r.message]
        assert len(progress) == 2  # after rows 100 and 200


class TestAggregateDaily:
    def test_single_tweet_one_hot(self):
        records = [TweetRecord(record_id="a", date=dt.date(2020, 3, 1), row=0)]
        series = aggregate_daily([(0, "Travel", 0.9)], records, ["Donate", "Travel"])
        assert len(series.days) == 1
        day = series.days[0]
        assert day.support == 1
        assert day.proportions.tolist() == [0.0, 1.0]

    def test_hand_counted_proportions(self):
        records = [TweetRecord(record_id=str(i), date=dt.date(2020, 3, 1), row=i) for i in range(4)]
        preds = [(0, "A", 1.0), (1, "A", 1.0), (2, "B", 1.0), (3, "C", 1.0)]
        series = aggregate_daily(preds, records, ["A", "B", "C"])
        assert series.days[0].proportions.tolist() == [0.5, 0.25, 0.25]

    def test_reference_window_has_71_days(self):
        # 26 January through 5 April 2020 inclusive (2020 is a leap year).
        records = [TweetRecord(record_id="a", date=dt.date(2020, 1, 26), row=0)]
        series = aggregate_daily(
            [(0, "A", 1.0)],
            records,
            ["A"],
            date_range=(dt.date(2020, 1, 26), dt.date(2020, 4, 5)),
        )
        assert len(series.days) == 71

    def test_missing_metadata_names_row(self):
        with pytest.raises(DataError, match="row 3"):
            aggregate_daily([(3, "A", 1.0)], [], ["A"])

    def test_gaps_emit_zero_support_days(self):
        records = [
            TweetRecord(record_id="a", date=dt.date(2020, 3, 1), row=0),
            TweetRecord(record_id="b", date=dt.date(2020, 3, 4), row=1),
        ]
        series = aggregate_daily([(0, "A", 1.0), (1, "A", 1.0)], records, ["A"])
        assert [d.date.day for d in series.days] == [1, 2, 3, 4]
        assert [d.support for d in series.days] == [1, 0, 0, 1]
        assert series.days[1].proportions.tolist() == [0.0]

    def test_unclassified_excluded_from_denominator(self):
        records = [TweetRecord(record_id=str(i), date=dt.date(2020, 3, 1), row=i) for i in range(3)]
        preds = [(0, "A", 0.9), (1, UNCLASSIFIED, 0.1), (2, "B", 0.8)]
        series = aggregate_daily(preds, records, ["A", "B"])
        day = series.days[0]
        assert day.support == 2
        assert day.unclassified == 1
        assert day.proportions.tolist() == [0.5, 0.5]

    def test_proportions_sum_to_one_with_support(self):
        rng = np.random.default_rng(0)
        records = [
            TweetRecord(record_id=str(i), date=dt.date(2020, 2, 1) + dt.timedelta(days=int(rng.integers(0, 10))), row=i)
            for i in range(200)
        ]
        preds = [(i, ["A", "B", "C"][rng.integers(0, 3)], 1.0) for i in range(200)]
        series = aggregate_daily(preds, records, ["A", "B", "C"])
        for day in series.days:
            if day.support:
                assert abs(day.proportions.sum() - 1.0) <= 1e-9
                # proportions * support recovers integer per-category counts
                counts = day.proportions * day.support
                assert np.allclose(counts, np.round(counts), atol=1e-9)
            else:
                assert np.all(day.proportions == 0.0)

    def test_outside_range_ignored(self):
        records = [
            TweetRecord(record_id="a", date=dt.date(2020, 1, 1), row=0),
            TweetRecord(record_id="b", date=dt.date(2020, 3, 1), row=1),
        ]
        series = aggregate_daily(
            [(0, "A", 1.0), (1, "A", 1.0)],
            records,
            ["A"],
            date_range=(dt.date(2020, 3, 1), dt.date(2020, 3, 2)),
        )
        assert len(series.days) == 2
        assert series.days[0].support == 1

    def test_non_contiguous_series_rejected(self):
        with pytest.raises(ValueError, match="contiguous"):
            TimelineSeries(
                categories=("A",),
                days=(
                    DailyDistribution(date=dt.date(2020, 1, 1), proportions=np.zeros(1)),
                    DailyDistribution(date=dt.date(2020, 1, 3), proportions=np.zeros(1)),
                ),
            )


class TestRollingAverage:
    def test_constant_series(self):
        out = rolling_average([2.5] * 6, 3)
        assert np.allclose(out, 2.5)

    def test_window_one_is_identity(self):
        vals = [3.0, 1.0, 4.0, 1.0]
        assert rolling_average(vals, 1).tolist() == vals

    def test_hand_example(self):
        assert rolling_average([1, 2, 3, 4], 3).tolist() == [1.0, 1.5, 2.0, 3.0]

    def test_window_validation(self):
        with pytest.raises(ValueError):
            rolling_average([1.0], 0)

    @settings(max_examples=50, deadline=None)
    @given(
        vals=st.lists(st.floats(min_value=-100, max_value=100), min_size=1, max_size=30),
        window=st.integers(min_value=1, max_value=10),
        scale=st.floats(min_value=-5, max_value=5),
    )
    def test_commutes_with_scaling(self, vals, window, scale):
        lhs = rolling_average([v * scale for v in vals], window)
        rhs = rolling_average(vals, window) * scale
        assert np.allclose(lhs, rhs, atol=1e-9)

    def test_smooth_series_shape(self):
        records = [
            TweetRecord(record_id=str(i), date=dt.date(2020, 3, 1) + dt.timedelta(days=i), row=i)
            for i in range(7)
        ]
        preds = [(i, "A", 1.0) for i in range(7)]
        series = aggregate_daily(preds, records, ["A", "B"])
        smoothed = smooth_series(series, 7)
        assert smoothed.shape == (7, 2)
        assert np.allclose(smoothed[:, 0], 1.0)


class TestReports:
    def _series(self):
        records = [
            TweetRecord(record_id=str(i), date=dt.date(2020, 3, 1) + dt.timedelta(days=i % 2), row=i)
            for i in range(6)
        ]
        preds = [(i, ["A", "B"][i % 2], 0.8) for i in range(5)] + [(5, UNCLASSIFIED, 0.1)]
        return aggregate_daily(preds, records, ["A", "B"])

    def test_csv_line_count(self, tmp_path):
        series = self._series()
        path = tmp_path / "report.csv"
        emit_report(series, "csv", path)
        lines = path.read_text().splitlines()
        assert len(lines) == 1 + len(series.days)
        assert lines[0] == "date,A,B,support,unclassified"

    def test_csv_roundtrip(self, tmp_path):
        series = self._series()
        path = tmp_path / "report.csv"
        emit_report(series, "csv", path)
        back = load_report(path)
        assert back.categories == series.categories
        assert len(back.days) == len(series.days)
        for a, b in zip(series.days, back.days):
            assert a.date == b.date
            assert a.support == b.support
            assert a.unclassified == b.unclassified
            assert np.allclose(a.proportions, b.proportions, atol=1e-6)

    def test_json_roundtrip(self, tmp_path):
        series = self._series()
        path = tmp_path / "report.json"
        emit_report(series, "json", path)
        back = load_report(path)
        assert back.categories == series.categories
        for a, b in zip(series.days, back.days):
            assert np.allclose(a.proportions, b.proportions, atol=1e-6)

    def test_empty_series_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        emit_report(TimelineSeries(categories=("A",), days=()), "csv", path)
        assert path.read_text().splitlines() == ["date,A,support,unclassified"]

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            emit_report(TimelineSeries(categories=("A",), days=()), "xml", tmp_path / "x")
