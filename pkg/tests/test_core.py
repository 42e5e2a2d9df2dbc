import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mhbench import syngen
from mhbench.core import (Dataset, DatasetImportError, SampleWindow, SeverityLevel, SplitError, ValidationError,
                          class_counts, phq4_to_severity, read_dataset, split_dataset, split_sizes,
                          split_user_temporal, write_dataset)
from mhbench.schema import load_schema
from oracles import split_counts


def window(pid="u0", start=0, score=0, fill=1.0):
    return SampleWindow(pid, start, np.full((14, 35), fill), score)


@pytest.mark.parametrize("score,level", [(0, "Normal"), (3, "Normal"), (4, "Mild"), (6, "Mild"),
                                         (7, "Moderate"), (9, "Moderate"), (10, "Severe"), (12, "Severe")])
def test_phq4_brackets(score, level):
    assert phq4_to_severity(score).word == level


@pytest.mark.parametrize("bad", [-1, 13, 2.5, True])
def test_phq4_out_of_range_names_value(bad):
    with pytest.raises(ValidationError, match=str(bad)):
        phq4_to_severity(bad)


def test_phq4_monotone_and_total():
    levels = [phq4_to_severity(s) for s in range(13)]
    assert levels == sorted(levels)
    assert set(levels) == set(SeverityLevel)


def test_severity_order_and_words():
    assert list(SeverityLevel) == sorted(SeverityLevel)
    assert [s.word for s in SeverityLevel] == ["Normal", "Mild", "Moderate", "Severe"]
    assert SeverityLevel.from_word("moderate") is SeverityLevel.MODERATE


def test_window_label_and_shape_checks():
    assert window(score=8).label is SeverityLevel.MODERATE
    with pytest.raises(ValidationError):
        SampleWindow("u", 0, np.zeros((13, 35)), 0)
    with pytest.raises(ValidationError):
        SampleWindow("u", 0, np.full((14, 35), np.nan), 0)


def test_window_days_are_consecutive_records():
    days = window(start=28).days()
    assert [d.day_index for d in days] == list(range(28, 42))
    assert len(days[0].features) == 35
    assert list(days[0].features) == list(load_schema().names)


def test_dataset_orders_users_and_rejects_duplicates():
    ds = Dataset((window("b", 14), window("a", 0), window("b", 0)))
    assert ds.users == ("a", "b")
    assert [s.start_day for s in ds.user_samples("b")] == [0, 14]
    with pytest.raises(ValueError):
        Dataset((window("a", 0), window("a", 0)))


@pytest.mark.parametrize("n,expected", [(206, (144, 20, 42)), (10, (7, 1, 2)), (3, (1, 1, 1)), (20, (14, 2, 4))])
def test_split_sizes_examples(n, expected):
    assert split_sizes(n) == expected


def test_split_sizes_match_oracle():
    for n in range(3, 400):
        assert split_sizes(n) == split_counts(n), n


def test_split_rejects_short_users():
    ds = Dataset((window("a", 0), window("a", 14), window("b", 0), window("b", 14), window("b", 28)))
    with pytest.raises(SplitError, match="a"):
        split_user_temporal(ds)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(3, 40), min_size=1, max_size=6))
def test_split_is_temporal_partition(sizes):
    samples = [window(f"u{i}", 14 * k) for i, n in enumerate(sizes) for k in range(n)]
    ds = Dataset(tuple(samples))
    a = split_user_temporal(ds)
    for u, n in zip(ds.users, sizes):
        buckets = [a.bucket_of(s) for s in ds.user_samples(u)]
        order = {"train": 0, "val": 1, "test": 2}
        assert [order[b] for b in buckets] == sorted(order[b] for b in buckets)
        assert a.counts(u) == split_counts(n)
    tr, va, te = split_dataset(ds)
    assert len(tr) + len(va) + len(te) == len(ds)
    assert not ({s.key for s in tr} & {s.key for s in te})


def test_class_counts():
    assert set(class_counts(Dataset(())).values()) == {0}
    c = class_counts(Dataset((window(score=11),)))
    assert c[SeverityLevel.SEVERE] == 1 and sum(c.values()) == 1


def test_csv_round_trip_is_bit_exact(tmp_path, small_dataset):
    path = write_dataset(small_dataset, tmp_path / "d.csv")
    again, skipped = read_dataset(path)
    assert len(skipped) == 0
    assert again == small_dataset
    assert again.fingerprint() == small_dataset.fingerprint()
    assert again.provenance == "synthetic"


def test_csv_missing_column_is_named(tmp_path, small_dataset):
    path = write_dataset(small_dataset, tmp_path / "d.csv")
    rows = list(csv.reader(path.open()))
    drop = rows[0].index("audio_voice")
    with (tmp_path / "bad.csv").open("w", newline="") as fh:
        csv.writer(fh).writerows([r[:drop] + r[drop + 1:] for r in rows])
    with pytest.raises(DatasetImportError, match="audio_voice"):
        read_dataset(tmp_path / "bad.csv")


def test_csv_incomplete_window_is_skipped(tmp_path, small_dataset):
    path = write_dataset(small_dataset, tmp_path / "d.csv")
    lines = path.read_text().splitlines()
    # drop the last day of the first window
    del lines[14]
    (tmp_path / "short.csv").write_text("\n".join(lines) + "\n")
    ds = syngen.import_ces_csv(tmp_path / "short.csv")
    first = small_dataset.samples[0]
    assert len(ds) == len(small_dataset) - 1
    assert first.key not in {s.key for s in ds}


def test_csv_malformed_row_reports_row_number(tmp_path, small_dataset):
    path = write_dataset(small_dataset, tmp_path / "d.csv")
    lines = path.read_text().splitlines()
    cells = lines[3].split(",")
    cells[5] = "oops"
    lines[3] = ",".join(cells)
    (tmp_path / "bad.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetImportError, match=r"\[4\]"):
        read_dataset(tmp_path / "bad.csv")
