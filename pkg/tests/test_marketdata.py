import datetime as dt

import numpy as np
import pytest

from stressscore.config import resolve_path
from stressscore.errors import DataError
from stressscore.marketdata import Factor, ReturnMatrix, ingest_curve, tenor_years, to_returns


def write(path, text):
    path.write_text(text)
    return path


def test_tenor_years():
    assert tenor_years("6M") == 0.5
    assert tenor_years("3y") == 3.0
    with pytest.raises(ValueError):
        tenor_years("3W")


def test_factor_label_round_trip():
    f = Factor("AAA", "6M")
    assert str(f) == "AAA:6M"
    assert Factor.parse("AAA:6m") == f
    with pytest.raises(ValueError):
        Factor.parse("AAA6M")


def test_ingest_sorts_filters_and_skips_comments(tmp_path):
    p = write(tmp_path / "c.csv",
              "# source: test\nDATE,1Y,2Y,10Y\n2020-01-03,1.0,2.0,9\n\n2020-01-02,0.5,1.5,9\n2020-01-06,na,1.0,9\n")
    s = ingest_curve(p, "X", ["1Y", "2Y"])
    assert s.pillars == ("1Y", "2Y")
    assert s.dates == (dt.date(2020, 1, 2), dt.date(2020, 1, 3))
    np.testing.assert_array_equal(s.yields, [[0.5, 1.5], [1.0, 2.0]])


def test_ingest_recognises_ecb_keys_and_semicolons():
    p = resolve_path("builtin:ecb_sample_AAA.csv", None)
    s = ingest_curve(p, "AAA")
    assert s.pillars == ("6M", "1Y", "2Y", "3Y", "4Y", "5Y")
    assert len(s.dates) == 20


def test_ingest_column_map(tmp_path):
    p = write(tmp_path / "c.csv", "day;short;long\n2020-01-02;1;2\n2020-01-03;1.5;2.5\n")
    s = ingest_curve(p, "X", ["1Y", "5Y"], date_column="day", column_map={"short": "1Y", "long": "5Y"})
    assert s.yields.shape == (2, 2)


@pytest.mark.parametrize("text, match", [
    ("DATE,1Y\n2020-01-02,1\n2020-01-03,abc\n", "line 3, column '1Y'"),
    ("DATE,1Y\n2020-01-02,1\n2020-01-02,2\n", "duplicate dates"),
    ("DATE,1Y\n2020-01-02,1\n", "fewer than 2"),
    ("DATE,2Y\n2020-01-02,1\n2020-01-03,2\n", "unknown pillar"),
    ("WHEN,1Y\n2020-01-02,1\n2020-01-03,2\n", "no date column"),
])
def test_ingest_errors(tmp_path, text, match):
    p = write(tmp_path / "c.csv", text)
    with pytest.raises(DataError, match=match):
        ingest_curve(p, "X", ["1Y"])


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="missing file"):
        ingest_curve(tmp_path / "nope.csv", "X")


def test_to_returns_inner_join_and_differences(tmp_path):
    a = ingest_curve(write(tmp_path / "a.csv", "DATE,1Y\n2020-01-02,1\n2020-01-03,1.5\n2020-01-06,1.25\n"), "A", ["1Y"])
    b = ingest_curve(write(tmp_path / "b.csv", "DATE,1Y\n2020-01-03,3\n2020-01-06,2\n2020-01-07,2\n"), "B", ["1Y"])
    r = to_returns([a, b])
    assert r.factor_labels == (Factor("A", "1Y"), Factor("B", "1Y"))
    assert r.window == ("2020-01-03", "2020-01-06")
    np.testing.assert_array_equal(r.rows, [[-0.25, -1.0]])
    assert r.last_levels()[Factor("B", "1Y")] == 2.0


def test_to_returns_disjoint_dates(tmp_path):
    a = ingest_curve(write(tmp_path / "a.csv", "DATE,1Y\n2020-01-02,1\n2020-01-03,1\n"), "A", ["1Y"])
    b = ingest_curve(write(tmp_path / "b.csv", "DATE,1Y\n2021-01-02,1\n2021-01-03,1\n"), "B", ["1Y"])
    with pytest.raises(DataError, match="empty date intersection"):
        to_returns([a, b])


def test_return_matrix_subset_and_readonly():
    labels = [Factor("A", "1Y"), Factor("B", "1Y")]
    r = ReturnMatrix.from_rows(labels, np.arange(6.0).reshape(3, 2))
    sub = r.subset([Factor("B", "1Y")])
    np.testing.assert_array_equal(sub.rows[:, 0], [1, 3, 5])
    with pytest.raises(ValueError):
        r.rows[0, 0] = 1.0
    with pytest.raises(KeyError):
        r.index(Factor("C", "1Y"))
