import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from tvpfx import evaluation as ev
from tvpfx.errors import AggregationError
from tvpfx.forecasting import ForecastRecord

from oracles import bartlett_lrv_double_sum

# Fixture U values, TR_on TVP, window A, h = 8 (17 currencies)
TABLE_U = [0.634, 0.691, 0.838, 1.194, 1.188, 0.983, 0.961, 0.735, 1.612, 1.478,
           0.853, 0.635, 1.543, 0.473, 0.618, 0.673, 1.330]


def _records(pred, real, h=1, currency="X", model="M", window="W"):
    origins = pd.period_range("1990Q1", periods=len(real), freq="Q-DEC").astype(str)
    return [ForecastRecord(currency, model, window, o, h, float(p), float(r))
            for o, p, r in zip(origins, pred, real)]


def test_u_of_random_walk_is_one(rng):
    real = rng.standard_normal(30)
    assert ev.theil_u(_records(np.zeros(30), real)) == 1.0


def test_u_of_perfect_forecast_is_zero(rng):
    real = rng.standard_normal(10)
    assert ev.theil_u(_records(real, real)) == 0.0


def test_u_undefined_when_nothing_moves():
    with pytest.raises(ev.UndefinedBenchmarkError):
        ev.theil_u(_records([0.1, 0.2], [0.0, 0.0]))


def test_u_formula(rng):
    pred, real = rng.standard_normal(20), rng.standard_normal(20)
    expected = np.sqrt(np.mean((pred - real) ** 2)) / np.sqrt(np.mean(real ** 2))
    assert ev.theil_u(_records(pred, real)) == pytest.approx(expected, rel=1e-14)


def test_dm_matches_brute_force_lrv(rng):
    pred, real = rng.standard_normal(25), rng.standard_normal(25)
    recs = _records(pred, real, h=4)
    d = real ** 2 - (real - pred) ** 2
    lrv = bartlett_lrv_double_sum(d, 3)
    assert abs(ev.newey_west_lrv(d, 3) - lrv) < 1e-10
    assert abs(ev.dm_test(recs) - d.mean() / np.sqrt(lrv / 25)) < 1e-10


def test_dm_zero_when_model_is_rw(rng):
    assert ev.dm_test(_records(np.zeros(12), rng.standard_normal(12))) == 0.0


def test_dm_positive_when_errors_halved(rng):
    real = rng.standard_normal(20)
    assert ev.dm_test(_records(0.5 * real, real)) > 0


def test_dm_needs_eight_records(rng):
    assert np.isnan(ev.dm_test(_records(np.zeros(7), rng.standard_normal(7))))


def test_dm_antisymmetry(rng):
    d = rng.standard_normal(30)
    assert ev.dm_statistic(-d, 2) == pytest.approx(-ev.dm_statistic(d, 2), rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), c=st.floats(1e-3, 1e3), h=st.sampled_from([1, 4, 8]))
def test_scale_invariance(seed, c, h):
    rng = np.random.default_rng(seed)
    pred, real = rng.standard_normal(16), rng.standard_normal(16)
    a = _records(pred, real, h)
    b = _records(c * pred, c * real, h)
    assert ev.theil_u(a) == pytest.approx(ev.theil_u(b), rel=1e-10)
    da, db = ev.dm_test(a), ev.dm_test(b)
    assert (np.isnan(da) and np.isnan(db)) or da == pytest.approx(db, rel=1e-8, abs=1e-12)


def test_euro_pooling_and_dm_average():
    recs = [ForecastRecord("Euro", "M", "B", f"2000Q{q}", 1, 0.0, r, member=m)
            for q in (1, 2, 3, 4) for m, r in (("Germany", 1.0), ("France", 3.0))]
    recs = [ForecastRecord(r.currency, r.model, r.window, r.origin, r.horizon, 1.0,
                           r.realized, member=r.member) for r in recs]
    # pooled: errors 0 and 2 -> model MSE 2, RW MSE 5
    assert ev.theil_u(recs) == pytest.approx(np.sqrt(2 / 5))
    d = ev.loss_differentials(recs)
    assert len(d) == 4 and d[0] == pytest.approx(((1 - 0) + (9 - 4)) / 2)


def test_recursive_u_series(rng):
    pred, real = rng.standard_normal(15), rng.standard_normal(15)
    recs = _records(pred, real)
    u = ev.recursive_u_series(recs)
    assert len(u) == 15
    assert u.iloc[-1] == pytest.approx(ev.theil_u(recs), rel=1e-14)
    assert ev.recursive_u_series(_records([0.0], [0.5])).iloc[0] == 1.0


def test_recursive_u_decreasing_tail():
    # early forecasts poor, later ones perfect -> U falls after the switch
    real = np.ones(12)
    pred = np.concatenate([np.full(4, -1.0), np.ones(8)])
    u = ev.recursive_u_series(_records(pred, real)).to_numpy()
    assert np.all(np.diff(u[4:]) < 0)


def test_summary_table_fixture():
    s = ev.summarize_window(TABLE_U)
    assert s.n_U_lt_1 == 11
    assert s.median_U == 0.853
    assert s.marker == "[‡]"


def test_summary_edge_cases():
    assert ev.summarize_window([1.0, 1.0, 1.0]).n_U_lt_1 == 0
    assert ev.summarize_window([0.5, 1.0, 2.0]).median_U == 1.0
    assert ev.summarize_window([0.5, 1.0, 2.0, 4.0]).median_U == 1.5
    with pytest.raises(AggregationError):
        ev.summarize_window([])


def test_summary_dm_count_is_strict():
    cells = [ev.EvalCell(c, "M", "A", 8, 0.9, dm, 16, 1.0, 1.0)
             for c, dm in (("a", 1.282), ("b", 1.2821), ("c", float("nan")), ("d", 3.0))]
    assert ev.summarize_window(cells).n_DM_gt_threshold == 2


@settings(max_examples=30, deadline=None)
@given(st.permutations(TABLE_U))
def test_summary_permutation_invariant(us):
    s = ev.summarize_window(us)
    assert (s.n_U_lt_1, s.median_U) == (11, 0.853)


def test_summary_rejects_duplicate_currency():
    cells = [ev.EvalCell("a", "M", "A", 1, 0.9, 0.0, 16, 1.0, 1.0)] * 2
    with pytest.raises(AggregationError):
        ev.summarize_window(cells)


def test_evaluate_and_report_roundtrip(tmp_path, rng):
    recs = []
    for c in ("Japan", "UK", "Korea"):
        real = rng.standard_normal(16)
        recs += _records(real + 0.5 * rng.standard_normal(16), real, h=8, currency=c,
                         model="TR_on-tvp", window="A")
    cells = ev.evaluate_records(recs)
    summaries = ev.summarize(cells)
    ev.write_eval(cells, summaries, tmp_path, recs)
    back = pd.read_csv(tmp_path / "summary.csv", float_precision="round_trip")
    assert back["median_U"].iloc[0] == summaries[0].median_U
    text = ev.format_report(summaries)
    assert "No. of U's<1" in text and "Median U" in text
    assert f"{summaries[0].median_U:.3f}" in text
    ru = pd.read_csv(tmp_path / "recursive_u.csv")
    assert len(ru) == 48
