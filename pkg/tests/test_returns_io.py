import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liqprem.returns_io import (
    AlignmentError,
    ParseError,
    RateLookupError,
    RateSeries,
    ReturnSeries,
    equal_weight_buy_and_hold,
    load_rates,
    load_returns,
    rate_at,
    write_series,
)
from liqprem.synthetic import business_days


def write_csv(path, rows, header="date,value"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n", encoding="utf-8")
    return path


def test_levels_flat(tmp_path):
    s = load_returns(write_csv(tmp_path / "a.csv", ["2020-01-01,100", "2020-01-02,100"]), "levels")
    assert s.log_returns.tolist() == [0.0]
    assert str(s.dates[0]) == "2020-01-02"
    assert s.source_id == "a"


def test_simple_returns(tmp_path):
    s = load_returns(write_csv(tmp_path / "b.csv", ["2020-01-02,0.01"]), "simple_returns")
    assert s.log_returns[0] == pytest.approx(math.log(1.01), abs=1e-15)


def test_log_returns_pass_through(tmp_path):
    s = load_returns(write_csv(tmp_path / "c.csv", ["2020-01-02,-0.02", "2020-01-03,0.5"]), "log")
    assert s.log_returns.tolist() == [-0.02, 0.5]


def test_blank_value_names_row_two(tmp_path):
    path = write_csv(tmp_path / "d.csv", ["2020-01-01,100", "2020-01-02,", "2020-01-03,101"])
    with pytest.raises(ParseError, match=r"row 2\b"):
        load_returns(path, "levels")


@pytest.mark.parametrize(
    "rows, pattern",
    [
        (["2020-01-01,1", "2020-13-02,1"], r"row 2 .*malformed date"),
        (["2020-01-02,1", "2020-01-01,1"], r"row 2 .*does not follow"),
        (["2020-01-02,1", "2020-01-02,1"], r"row 2 .*does not follow"),
        (["2020-01-01,abc"], r"row 1 .*non-numeric"),
        (["2020-01-01,nan"], r"row 1 .*non-finite"),
        (["2020-01-01,1", "", "2020-01-03,1"], r"row 2 .*empty row"),
    ],
)
def test_parse_errors(tmp_path, rows, pattern):
    path = write_csv(tmp_path / "e.csv", rows)
    with pytest.raises(ParseError, match=pattern):
        load_returns(path, "log")


def test_bad_header(tmp_path):
    with pytest.raises(ParseError, match="header"):
        load_returns(write_csv(tmp_path / "f.csv", ["2020-01-01,1"], header="day,ret"), "log")


def test_unknown_format(tmp_path):
    with pytest.raises(ParseError, match="format"):
        load_returns(write_csv(tmp_path / "g.csv", ["2020-01-01,1"]), "percent")


def test_simple_return_below_minus_one(tmp_path):
    with pytest.raises(ParseError):
        load_returns(write_csv(tmp_path / "h.csv", ["2020-01-01,-1.0"]), "simple")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(1e-3, 1e6), min_size=2, max_size=60))
def test_levels_round_trip(levels):
    dates = business_days("2021-01-04", len(levels))
    s = ReturnSeries.from_levels(dates, levels)
    rebuilt = s.levels(base=levels[0])
    assert np.allclose(rebuilt, levels[1:], rtol=1e-12, atol=0)


def test_file_round_trip(tmp_path):
    s = ReturnSeries(business_days("2021-01-04", 5), [0.01, -0.02, 0.0, 1e-17, 0.3], "x")
    write_series(tmp_path / "x.csv", s)
    back = load_returns(tmp_path / "x.csv", "log")
    assert np.array_equal(back.dates, s.dates)
    assert np.array_equal(back.log_returns, s.log_returns)


def test_series_validation():
    with pytest.raises(ParseError):
        ReturnSeries(business_days("2021-01-04", 2), [0.0, np.inf])
    with pytest.raises(ParseError):
        ReturnSeries(np.array(["2021-01-05", "2021-01-04"], dtype="datetime64[D]"), [0.0, 0.0])
    with pytest.raises(ParseError):
        ReturnSeries(business_days("2021-01-04", 2), [0.0])


def test_window_is_half_open():
    s = ReturnSeries(business_days("2021-01-04", 10), np.arange(10) / 100)
    w = s.window("2021-01-05", "2021-01-08")
    assert [str(d) for d in w.dates] == ["2021-01-05", "2021-01-06", "2021-01-07"]


def test_equal_weight_identical_series():
    s = ReturnSeries(business_days("2021-01-04", 50), np.random.default_rng(0).normal(0, 0.01, 50), "a")
    port = equal_weight_buy_and_hold([s, s, s])
    assert np.allclose(port.log_returns, s.log_returns, atol=1e-15)


def test_equal_weight_flat_and_doubling():
    days = business_days("2021-01-04", 20)
    flat = ReturnSeries(days, np.zeros(20))
    double = ReturnSeries(days, np.full(20, math.log(2) / 20))
    port = equal_weight_buy_and_hold([flat, double])
    assert port.levels()[-1] == pytest.approx(1.5, rel=1e-14)


def test_equal_weight_no_rebalancing():
    days = business_days("2021-01-04", 2)
    a = ReturnSeries(days, [math.log(2), 0.0])
    b = ReturnSeries(days, [0.0, math.log(2)])
    # day 1: (2 + 1) / 2 = 1.5; day 2: (2 + 2) / 2 = 2
    assert equal_weight_buy_and_hold([a, b]).levels() == pytest.approx([1.5, 2.0], rel=1e-15)


def test_equal_weight_alignment_is_intersection():
    days = business_days("2021-01-04", 10)
    a = ReturnSeries(days, np.full(10, 0.01))
    b = ReturnSeries(days[[0, 2, 3, 5, 6, 9]], np.full(6, 0.02))
    c = ReturnSeries(days[2:], np.full(8, 0.0))
    port = equal_weight_buy_and_hold([a, b, c])
    assert np.array_equal(port.dates, np.intersect1d(np.intersect1d(a.dates, b.dates), c.dates))
    # the portfolio starts just before day 2, the first common date; a's day-4 return (missing
    # from b) still accrues by day 5
    levels = port.levels()
    assert levels[0] == pytest.approx((math.exp(0.01) + math.exp(0.02) + 1) / 3, rel=1e-14)
    assert levels[2] == pytest.approx((math.exp(0.04) + math.exp(0.06) + 1) / 3, rel=1e-14)


def test_equal_weight_errors():
    a = ReturnSeries(business_days("2021-01-04", 3), np.zeros(3))
    b = ReturnSeries(business_days("2022-01-04", 3), np.zeros(3))
    with pytest.raises(AlignmentError):
        equal_weight_buy_and_hold([a, b])
    with pytest.raises(AlignmentError):
        equal_weight_buy_and_hold([a])


def test_rate_at():
    rates = RateSeries(np.array(["2020-01-01", "2020-02-01", "2020-03-01"], dtype="datetime64[D]"), [0.01, 0.02, 0.03])
    assert rate_at(rates, "2020-02-01") == 0.02
    assert rate_at(rates, "2020-02-15") == 0.02
    assert rate_at(rates, "2030-01-01") == 0.03
    with pytest.raises(RateLookupError):
        rate_at(rates, "2019-12-31")


def test_load_rates(tmp_path):
    rates = load_rates(write_csv(tmp_path / "r.csv", ["2020-01-01,0.01", "2021-01-01,0.02"]))
    assert rate_at(rates, "2020-06-30") == 0.01
    assert RateSeries.constant(0.03).annual_rates.tolist() == [0.03]
