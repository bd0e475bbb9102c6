from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from tvpfx import dataio
from tvpfx import forecasting as fc
from tvpfx.errors import AggregationError, ConfigError, InsufficientDataError, SingularDesignError
from tvpfx.gibbs import GibbsConfig, PriorSpec, parameterize_priors

from oracles import quarterly, within_slope


def _zs(rng, n=60, beta=(0.1, 0.5), noise=0.1, h=1):
    z = quarterly(rng.standard_normal(n))
    ds = beta[0] + beta[1] * z.to_numpy()[:-h] + noise * rng.standard_normal(n - h)
    s = np.concatenate([np.zeros(h), np.zeros(n - h)])
    # build s so that s_{t+h} - s_t = ds_t (h = 1 keeps this a simple cumsum)
    assert h == 1
    s[1:] = np.cumsum(ds)
    return z, quarterly(s)


def test_direct_pairs_alignment(rng):
    z, s = _zs(rng)
    origin = z.index[40]
    zz, ds = fc.direct_pairs(z, s, 1, origin)
    assert zz.index[-1] == origin - 1
    assert_allclose(ds.iloc[-1], s.loc[origin] - s.loc[origin - 1])
    zz4, _ = fc.direct_pairs(z, s, 4, origin, start=z.index[5])
    assert zz4.index[0] == z.index[5] and zz4.index[-1] == origin - 4


def test_ols_forecast_matches_normal_equations(rng):
    z, s = _zs(rng)
    origin = z.index[50]
    zz, ds = fc.direct_pairs(z, s, 1, origin)
    X = np.column_stack([np.ones(len(zz)), zz])
    b = np.linalg.solve(X.T @ X, X.T @ ds.to_numpy())
    pred = fc.ols_direct_forecast(z, s, 1, origin)
    assert abs(pred - (b[0] + b[1] * z.loc[origin])) < 1e-10


def test_ols_forecast_on_exact_line():
    z = quarterly([0.0, 1.0, 2.0, 3.0, 4.0, 10.0])
    s = quarterly(np.concatenate([[0.0], np.cumsum(1.0 + 2.0 * z.to_numpy()[:-1])]))
    assert fc.ols_direct_forecast(z, s, 1, z.index[-1]) == pytest.approx(21.0)


def test_ols_forecast_needs_four_pairs():
    z = quarterly([0.0, 1.0, 2.0, 3.0])
    with pytest.raises(InsufficientDataError):
        fc.ols_direct_forecast(z, quarterly([0, 1, 3, 4]), 1, z.index[-1])


def test_ols_uncorrelated_forecast_is_mean(rng):
    n = 4000
    z = quarterly(rng.standard_normal(n))
    ds = 0.3 + rng.standard_normal(n - 1)
    s = quarterly(np.concatenate([[0.0], np.cumsum(ds)]))
    pred = fc.ols_direct_forecast(z, s, 1, z.index[-1])
    assert pred == pytest.approx(0.3, abs=0.1)


def test_tvp_zero_z_forecast_is_intercept(rng):
    z = quarterly(np.zeros(40))
    s = quarterly(np.cumsum(0.2 + 0.1 * rng.standard_normal(40)))
    prior = PriorSpec(np.zeros(2), np.eye(2), 0.01, 5, np.eye(2) * 1e-4, 10, 1.0)
    pred, draws = fc._tvp_fit(z, s, 1, z.index[-1], prior, GibbsConfig(300, 100, seed=0))
    assert pred == draws.posterior_mean_states[-1, 0]
    assert pred == pytest.approx(0.2, abs=0.1)


def test_tvp_forecast_tracks_noiseless_dgp(rng):
    z, s = _zs(rng, n=80, beta=(0.0, 1.0), noise=1e-3)
    zz, ds = fc.direct_pairs(z, s, 1, z.index[20])
    prior = parameterize_priors(ds.to_numpy(), np.column_stack([np.ones(len(zz)), zz]))
    origin = z.index[-1]
    pred = fc.tvp_direct_forecast(z, s, 1, origin, prior, GibbsConfig(seed=3), start=z.index[21])
    assert pred == pytest.approx(z.loc[origin], abs=0.01)


def test_tvp_with_q_zero_matches_ols(rng):
    z, s = _zs(rng, n=120, noise=0.5)
    prior = PriorSpec(np.zeros(2), np.eye(2) * 1e6, 0.25, 2, np.zeros((2, 2)), 10, 0.0)
    cfg = GibbsConfig(1700, 300, seed=1, sample_q=False)
    origin = z.index[-1]
    pred = fc.tvp_direct_forecast(z, s, 1, origin, prior, cfg)
    ols = fc.ols_direct_forecast(z, s, 1, origin)
    assert pred == pytest.approx(ols, abs=0.02)


def _panel_data(rng, N, T=30, beta=0.7, omega=None):
    idx = pd.period_range("1990Q1", periods=T, freq="Q-DEC")
    omega = rng.standard_normal(N) if omega is None else np.asarray(omega)
    z = pd.DataFrame(rng.standard_normal((T, N)), index=idx, columns=[f"c{i}" for i in range(N)])
    s = pd.DataFrame(0.0, index=idx, columns=z.columns)
    for i, c in enumerate(z.columns):
        ds = omega[i] + beta * z[c].to_numpy()[:-1] + 0.3 * rng.standard_normal(T - 1)
        s[c] = np.concatenate([[0.0], np.cumsum(ds)])
    return z, s


def test_lsdv_within_equivalence_50_panels():
    rng = np.random.default_rng(99)
    for _ in range(50):
        N = int(rng.integers(1, 7))
        z, s = _panel_data(rng, N, T=int(rng.integers(6, 40)))
        origin = z.index[-1]
        fit = fc.lsdv_fit(z, s, 1, origin)
        ys, zs, gs = [], [], []
        for c in z.columns:
            zz, ds = fc.direct_pairs(z[c], s[c], 1, origin)
            ys.append(ds.to_numpy()), zs.append(zz.to_numpy()), gs.append([c] * len(ds))
        oracle = within_slope(np.concatenate(ys), np.concatenate(zs), np.concatenate(gs))
        assert abs(fit.beta - oracle) < 1e-10


def test_lsdv_residuals_orthogonal(rng):
    z, s = _panel_data(rng, 4)
    fit = fc.lsdv_fit(z, s, 1, z.index[-1])
    n = len(fit.residuals) // 4
    for j in range(4):
        assert abs(fit.residuals[j * n:(j + 1) * n].sum()) < 1e-10


def test_lsdv_single_country_is_ols(rng):
    z, s = _panel_data(rng, 1)
    origin = z.index[-1]
    pred = fc.lsdv_panel_forecast(z, s, 1, origin)
    assert abs(pred["c0"] - fc.ols_direct_forecast(z["c0"], s["c0"], 1, origin)) < 1e-10


def test_lsdv_recovers_country_constants(rng):
    omega = np.array([-0.5, 0.0, 0.8])
    z, s = _panel_data(rng, 3, T=400, beta=0.0, omega=omega)
    fit = fc.lsdv_fit(z, s, 1, z.index[-1])
    assert_allclose(fit.omega.to_numpy(), omega, atol=0.1)


def test_lsdv_errors(rng):
    z, s = _panel_data(rng, 3)
    with pytest.raises(InsufficientDataError):
        fc.lsdv_fit(z, s, 1, z.index[1])
    zc = pd.DataFrame(1.0, index=z.index, columns=z.columns)
    with pytest.raises(SingularDesignError):
        fc.lsdv_fit(zc, s, 1, z.index[-1])


def _rec(c, pred, real, origin="2000Q1", h=1):
    return fc.ForecastRecord(c, "M", "B", origin, h, pred, real)


def test_euro_aggregate_mean_and_pooling():
    recs = [_rec("Germany", 0.02, 0.05), _rec("France", -0.02, 0.01)]
    out = fc.euro_aggregate(recs, ["Germany", "France"])
    assert [r.predicted for r in out] == [0.0, 0.0]
    assert {r.member: r.realized for r in out} == {"Germany": 0.05, "France": 0.01}
    same = fc.euro_aggregate([_rec("Germany", 0.3, 0), _rec("France", 0.3, 0)],
                             ["Germany", "France"])
    assert all(r.predicted == pytest.approx(0.3) for r in same)


def test_euro_aggregate_eight_members(rng):
    preds = rng.standard_normal(8)
    reals = rng.standard_normal(8)
    recs = [_rec(m, p, r) for m, p, r in zip(fc.EURO_MEMBERS, preds, reals)]
    out = fc.euro_aggregate(recs, fc.EURO_MEMBERS)
    assert out[0].predicted == pytest.approx(preds.mean())
    pooled = np.sqrt(np.mean([(r.realized - r.predicted) ** 2 for r in out]))
    assert pooled == pytest.approx(np.sqrt(np.mean((reals - preds.mean()) ** 2)))


def test_euro_aggregate_missing_member():
    with pytest.raises(AggregationError, match="France"):
        fc.euro_aggregate([_rec("Germany", 0.0, 0.0)], ["Germany", "France"])


def test_window_definitions():
    assert len(fc.WINDOWS["A"]) == 16
    assert len(fc.WINDOWS["A"].currencies) == 17
    assert len(fc.WINDOWS["B"].currencies) == 10 and len(fc.WINDOWS["C"].currencies) == 10
    cfg = fc.HarnessConfig(scheme="rolling")
    assert [cfg.window_length(fc.WINDOWS[w]) for w in "ABC"] == [64, 80, 112]


def test_model_spec_parse():
    m = fc.ModelSpec.parse("TR_en_u-panel")
    assert m.fundamental.kind == "TR_en" and m.fundamental.estimation == "constant_ols"
    assert m.id == "TR_en_u-panel"
    assert fc.ModelSpec.parse("TR_on-tvp").fundamental.estimation == "tvp_bayes"
    with pytest.raises(ValueError):
        fc.ModelSpec.parse("TR_on-lasso")


def test_derive_seed_stable():
    assert fc.derive_seed(1, "a", 2) == fc.derive_seed(1, "a", 2)
    assert fc.derive_seed(1, "a", 2) != fc.derive_seed(1, "a", 3)
    assert fc.derive_seed(1, "a") != fc.derive_seed(2, "a")


WINDOW = fc.WindowSpec("T", "1994Q1", "1996Q4", ("Alpha", "Beta"))


def test_harness_counts_and_realized(small_panel):
    recs = fc.run_harness(fc.ModelSpec.parse("PPP-ols"), WINDOW, [1, 4], small_panel)
    assert len(recs) == 2 * 2 * 12
    for r in recs:
        s = small_panel[r.currency]["s"]
        o = dataio.quarter(r.origin)
        assert r.realized == s.loc[o + r.horizon] - s.loc[o]
        assert r.rw_predicted == 0.0


def test_harness_window_a_has_16_origins():
    from tvpfx import synthetic
    sp = synthetic.generate(synthetic.SyntheticConfig(seed=2, end="1998Q4",
                                                      countries=("Japan", "UK")))
    panel = dataio.build_panel(sp.raw, sp.base_country)
    w = fc.WindowSpec("A", "1995Q1", "1998Q4", ("Japan", "UK"))
    recs = fc.run_harness(fc.ModelSpec.parse("UIRP-ols"), w, [1], panel)
    assert len({r.origin for r in recs if r.currency == "Japan"}) == 16


def test_rolling_and_recursive_counts_match(small_panel):
    m = fc.ModelSpec.parse("TR_on-ols")
    rec = fc.run_harness(m, WINDOW, [1, 8], small_panel, fc.HarnessConfig())
    rol = fc.run_harness(m, WINDOW, [1, 8], small_panel,
                         fc.HarnessConfig(scheme="rolling", rolling_length=40))
    assert len(rec) == len(rol)
    assert [r.predicted for r in rec] != [r.predicted for r in rol]


def test_estimation_window_bounds():
    cfg = fc.HarnessConfig(scheme="rolling", rolling_length=20)
    o = dataio.quarter("1990Q1")
    assert cfg.estimation_start(o, WINDOW) == o - 19
    assert cfg.estimation_start(dataio.quarter("1982Q1"), WINDOW) == dataio.quarter("1979Q1")
    assert fc.HarnessConfig().estimation_start(o, WINDOW) == dataio.quarter("1979Q1")


def test_window_beyond_data_is_config_error(small_panel):
    w = fc.WindowSpec("X", "1995Q1", "1999Q4", ("Alpha",))
    with pytest.raises(ConfigError):
        fc.run_harness(fc.ModelSpec.parse("PPP-ols"), w, [1], small_panel)
    with pytest.raises(ConfigError):
        fc.HarnessConfig(training_end="1980Q1")


def test_constant_data_gives_constant_forecasts():
    idx = pd.period_range("1972Q1", "1990Q4", freq="Q-DEC")
    n = len(idx)
    base = pd.DataFrame({c: 0.0 for c in dataio.PANEL_COLUMNS}, index=idx)
    home = base.copy()
    home["s"] = 0.01 * np.arange(n)
    home["p"] = 0.3 + 0.002 * np.arange(n) ** 1.5
    panel = dataio.SeriesPanel("Base", {"Base": base, "H": home})
    w = fc.WindowSpec("K", "1988Q1", "1990Q4", ("H",))
    recs = fc.run_harness(fc.ModelSpec.parse("PPP-ols"), w, [1], panel)
    assert_allclose([r.predicted for r in recs], 0.01, atol=1e-10)


def test_records_csv_roundtrip(tmp_path, small_panel):
    recs = fc.run_harness(fc.ModelSpec.parse("MM-panel"), WINDOW, [4], small_panel)
    path = fc.write_records(recs, tmp_path / "f.csv")
    header = path.read_text().splitlines()[0].split(",")
    assert header[:7] == ["currency", "model", "window", "origin", "h", "predicted", "realized"]
    assert fc.read_records(path) == fc.sort_records(recs)


def test_euro_window_replaces_members(small_panel):
    cfg = fc.HarnessConfig(euro_members=("Gamma", "Delta"))
    w = fc.WindowSpec("E", "1995Q1", "1996Q4", ("Alpha", fc.EURO))
    recs = fc.run_harness(fc.ModelSpec.parse("PPP-ols"), w, [1], small_panel, cfg)
    assert {r.currency for r in recs} == {"Alpha", fc.EURO}
    euro = [r for r in recs if r.currency == fc.EURO]
    assert len(euro) == 2 * 8
    assert {r.member for r in euro} == {"Gamma", "Delta"}


def test_parallel_matches_sequential(small_panel):
    models = [fc.ModelSpec.parse(m) for m in ("PPP-ols", "F1-panel", "TR_on-ols")]
    seq = fc.run_harness(models, WINDOW, [1], small_panel)
    with ProcessPoolExecutor(max_workers=2) as pool:
        par = fc.run_harness(models, WINDOW, [1], small_panel, executor=pool)
    assert seq == par


def test_tvp_harness_is_deterministic(small_panel):
    cfg = fc.HarnessConfig(total_draws=120, burn_in=20, seed=5)
    w = fc.WindowSpec("T", "1996Q1", "1996Q4", ("Alpha",))
    m = fc.ModelSpec.parse("TR_os-tvp")
    a = fc.run_harness(m, w, [1], small_panel, cfg)
    b = fc.run_harness(m, w, [1], small_panel, cfg)
    assert a == b
    c = fc.run_harness(m, w, [1], small_panel, fc.HarnessConfig(total_draws=120, burn_in=20,
                                                                 seed=6))
    assert a != c


def test_dump_draws(tmp_path, small_panel):
    cfg = fc.HarnessConfig(total_draws=60, burn_in=10, dump_draws=str(tmp_path))
    w = fc.WindowSpec("T", "1996Q4", "1996Q4", ("Alpha",))
    fc.run_harness(fc.ModelSpec.parse("PPP-tvp"), w, [1], small_panel, cfg)
    files = list(tmp_path.glob("*.npz"))
    assert len(files) == 1
    with np.load(files[0]) as d:
        assert d["states"].shape[0] == 50
