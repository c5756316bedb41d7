import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from hybridsizer.market_data import (DataError, MarketSeries, PvSeries, dump_json, episode_window, load_json,
                                     load_series, monthly_windows, resample_and_scale, write_csv)

from conftest import hourly, make_data


def _csv(path, rows, cols=("timestamp", "lambda_e", "lambda_res", "lambda_up", "lambda_dn", "p_avail")):
    pd.DataFrame(rows, columns=cols).to_csv(path, index=False)
    return path


def test_three_row_csv_loads(tmp_path):
    p = _csv(tmp_path / "d.csv", [["2021-01-01T00:00", 30, 1, 2, 3, 0.0],
                                  ["2021-01-01T01:00", 31, 1, 2, 3, 0.5],
                                  ["2021-01-01T02:00", -5, 1, 2, 3, 1.0]])
    market, pv = load_series(p)
    assert len(market) == len(pv) == 3
    assert market.dt_hours == 1.0
    assert market.lambda_e.tolist() == [30, 31, -5]
    assert pv.p_avail.tolist() == [0.0, 0.5, 1.0]


def test_custom_schema(tmp_path):
    p = _csv(tmp_path / "d.csv", [["2021-01-01T00:00", 30, 1, 2, 3, 0.0], ["2021-01-01T01:00", 31, 1, 2, 3, 0.5]],
             cols=("ts", "lmp", "rsv", "ru", "rd", "pv"))
    market, pv = load_series(p, {"timestamp": "ts", "lambda_e": "lmp", "lambda_res": "rsv", "lambda_up": "ru",
                                 "lambda_dn": "rd", "p_avail": "pv"})
    assert market.lambda_up.tolist() == [2, 2]


def test_negative_reserve_price_names_row(tmp_path):
    p = _csv(tmp_path / "d.csv", [["2021-01-01T00:00", 30, 1, 2, 3, 0.0], ["2021-01-01T01:00", 30, -1, 2, 3, 0.0]])
    with pytest.raises(DataError, match="lambda_res at row 1"):
        load_series(p)


def test_missing_value_rejected(tmp_path):
    p = _csv(tmp_path / "d.csv", [["2021-01-01T00:00", 30, 1, 2, 3, 0.0], ["2021-01-01T01:00", None, 1, 2, 3, 0.0]])
    with pytest.raises(DataError, match="row 1"):
        load_series(p)


def test_malformed_value_rejected(tmp_path):
    p = _csv(tmp_path / "d.csv", [["2021-01-01T00:00", "abc", 1, 2, 3, 0.0]])
    with pytest.raises(DataError, match="malformed"):
        load_series(p)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_series("/nonexistent/data.csv")


def test_non_monotone_timestamps(tmp_path):
    p = _csv(tmp_path / "d.csv", [["2021-01-01T01:00", 30, 1, 2, 3, 0.0], ["2021-01-01T00:00", 30, 1, 2, 3, 0.0]])
    with pytest.raises(DataError, match="strictly increasing"):
        load_series(p)


def test_irregular_spacing(tmp_path):
    p = _csv(tmp_path / "d.csv", [["2021-01-01T00:00", 30, 1, 2, 3, 0.0], ["2021-01-01T01:00", 30, 1, 2, 3, 0.0],
                                  ["2021-01-01T03:00", 30, 1, 2, 3, 0.0]])
    with pytest.raises(DataError, match="irregular"):
        load_series(p)


def test_missing_column(tmp_path):
    p = tmp_path / "d.csv"
    pd.DataFrame({"timestamp": ["2021-01-01T00:00"], "lambda_e": [1]}).to_csv(p, index=False)
    with pytest.raises(DataError, match="missing columns"):
        load_series(p)


def test_five_minute_data_resampled_to_hourly(tmp_path):
    n = 24 * 12
    ts = np.datetime64("2021-01-01T00:00:00", "s") + np.arange(n) * np.timedelta64(300, "s")
    df = pd.DataFrame({"timestamp": pd.DatetimeIndex(ts).strftime("%Y-%m-%dT%H:%M:%S"),
                       "lambda_e": 50.0, "lambda_res": 1.0, "lambda_up": 2.0, "lambda_dn": 3.0,
                       "p_avail": np.linspace(0, 1, n)})
    df.to_csv(tmp_path / "d.csv", index=False)
    market, pv = load_series(tmp_path / "d.csv")
    assert market.dt_hours == pytest.approx(5 / 60)
    m1, p1 = resample_and_scale(market, pv, 1.0)
    assert len(m1) == n // 12
    np.testing.assert_allclose(m1.lambda_e, 50.0)


def test_resample_half_steps_hand_mean():
    ts = np.datetime64("2021-01-01T00:00:00", "s") + np.arange(4) * np.timedelta64(1800, "s")
    z = np.zeros(4)
    market = MarketSeries(ts, [10, 20, 30, 50], z, z, z, 0.5)
    pv = PvSeries(ts, [10, 20, 30, 50], 0.5)
    m, p = resample_and_scale(market, pv, 1.0)
    assert m.lambda_e.tolist() == [15.0, 40.0]
    assert p.p_avail.tolist() == [15.0, 40.0]


def test_resample_rescales_pv_to_nameplate():
    market, pv = make_data(np.zeros(4), [0.0, 0.4, 0.8, 0.2])
    _, p = resample_and_scale(market, pv, 1.0, 11.0)
    assert p.p_avail.max() == pytest.approx(8.8)
    assert p.nameplate == 11.0
    np.testing.assert_allclose(p.p_avail, 11.0 * np.array([0.0, 0.4, 0.8, 0.2]))


def test_rescale_respects_reference_nameplate():
    market, pv = make_data(np.zeros(2), [0.0, 5.0], nameplate=10.0)
    _, p = resample_and_scale(market, pv, 1.0, 12.0)
    assert p.p_avail.tolist() == [0.0, 6.0]
    assert p.profile_for(6.0).tolist() == [0.0, 3.0]


def test_normalized_profile_scales_to_design():
    market, pv = make_data(np.zeros(3), [0.0, 0.8, 0.4], nameplate=1.0)
    assert pv.profile_for(11.0).max() == pytest.approx(8.8)


def test_resample_rejects_non_integer_ratio():
    market, pv = make_data(np.zeros(6), np.zeros(6))
    with pytest.raises(DataError):
        resample_and_scale(market, pv, 1.5)


def test_resample_drops_trailing_partial_bin():
    market, pv = make_data(np.arange(5.0), np.zeros(5))
    m, _ = resample_and_scale(market, pv, 2.0)
    assert m.lambda_e.tolist() == [0.5, 2.5]


@given(st.lists(st.floats(0, 100), min_size=1, max_size=10).flatmap(
    lambda bins: st.tuples(st.just(len(bins)), st.lists(st.floats(0, 100), min_size=4 * len(bins),
                                                        max_size=4 * len(bins)))))
def test_resampling_preserves_pv_energy(arg):
    nbins, values = arg
    ts = np.datetime64("2021-01-01T00:00:00", "s") + np.arange(len(values)) * np.timedelta64(900, "s")
    z = np.zeros(len(values))
    market = MarketSeries(ts, z, z, z, z, 0.25)
    pv = PvSeries(ts, values, 0.25)
    _, p = resample_and_scale(market, pv, 1.0)
    src = sum(values) * 0.25
    assert abs(p.p_avail.sum() * 1.0 - src) <= 1e-9 * max(1.0, src)


def test_episode_window_annualization():
    assert episode_window(200, 168, 1.0, 0).W_anu == pytest.approx(8760 / 168)
    assert episode_window(200, 168, 1.0, 0).W_anu == pytest.approx(52.142857142857)
    assert episode_window(8760, 8760, 1.0, 0).W_anu == 1.0


def test_episode_window_bounds():
    with pytest.raises(ValueError):
        episode_window(250, 200, 1.0, 100)
    with pytest.raises(ValueError):
        episode_window(10, 0, 1.0, 0)


def test_csv_round_trip(tmp_path):
    market, pv = make_data([1.5, -2.25, 3.0], [0.0, 0.1, 0.2], [1, 2, 3], [0, 0, 1], [4, 4, 4])
    write_csv(tmp_path / "a.csv", market, pv)
    m2, p2 = load_series(tmp_path / "a.csv")
    write_csv(tmp_path / "b.csv", m2, p2)
    m3, p3 = load_series(tmp_path / "b.csv")
    assert m2 == market and p2 == PvSeries(pv.timestamps, pv.p_avail, 1.0)
    assert m3 == m2 and p3 == p2
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_json_round_trip(tmp_path):
    market, pv = make_data([1.5, -2.25, 3.0], [0.0, 0.1, 0.2], nameplate=12.0)
    dump_json(market, tmp_path / "m.json")
    dump_json(pv, tmp_path / "p.json")
    assert load_json(tmp_path / "m.json") == market
    assert load_json(tmp_path / "p.json") == pv


def test_monthly_windows_partition_a_year():
    n = 8760
    market = MarketSeries(hourly(n, "2022-01-01T00:00:00"), np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n), 1.0)
    ws = monthly_windows(market)
    assert len(ws) == 12
    assert ws[0].start == 1 and ws[0].T == 31 * 24 - 1
    assert ws[1].start == 31 * 24 and ws[1].T == 28 * 24
    assert ws[-1].start + ws[-1].T == n


def test_series_are_immutable():
    market, pv = make_data([1.0, 2.0], [0.0, 1.0])
    with pytest.raises(ValueError):
        market.lambda_e[0] = 5.0
    with pytest.raises(ValueError):
        pv.p_avail[0] = 5.0
