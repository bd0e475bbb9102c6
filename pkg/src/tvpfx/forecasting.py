"""Direct h-step exchange-rate forecasts and the out-of-sample harness.

The forecasting regression is ``s_{t+h} - s_t = b0 + b1 z_t + e``, fitted by
one of three approaches:

``tvp``
    random-walk coefficients estimated by Gibbs sampling,
``ols``
    single-equation constant coefficients,
``panel``
    fixed-effect (LSDV) panel with a common slope.

At origin ``T`` only pairs ``(z_t, s_{t+h} - s_t)`` with ``t + h <= T`` enter
the fit; ``z_T`` is used only to form the forecast.  Every quantity is
computed from data sliced to ``<= T``.
"""
from __future__ import annotations

import logging
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from . import fundamentals as fmod
from .dataio import EURO_CONVERSION_FACTORS, SeriesPanel, n_quarters, quarter
from .errors import (
    AggregationError,
    ConfigError,
    InsufficientDataError,
    SingularDesignError,
)
from .fundamentals import FundamentalSpec
from .gibbs import (
    DEFAULT_BURN_IN,
    DEFAULT_DRAWS,
    DEFAULT_TAU,
    GibbsConfig,
    PosteriorDraws,
    PriorSpec,
    ols,
    parameterize_priors,
    run_gibbs,
)

logger = logging.getLogger(__name__)

APPROACHES = ("tvp", "ols", "panel")
HORIZONS = (1, 4, 8, 12)
EURO = "Euro"

NON_EURO = ("Australia", "Canada", "Denmark", "UK", "Japan", "Korea", "Norway",
            "Sweden", "Switzerland")
EURO_MEMBERS = ("Austria", "Belgium", "France", "Germany", "Spain", "Italy",
                "Finland", "Netherlands")


@dataclass(frozen=True)
class WindowSpec:
    label: str
    start: str
    end: str
    currencies: tuple

    @property
    def targets(self) -> pd.PeriodIndex:
        return pd.period_range(quarter(self.start), quarter(self.end), freq="Q-DEC")

    def __len__(self) -> int:
        return n_quarters(self.start, self.end)


WINDOWS = {
    "A": WindowSpec("A", "1995Q1", "1998Q4", NON_EURO + EURO_MEMBERS),
    "B": WindowSpec("B", "1999Q1", "2013Q1", NON_EURO + (EURO,)),
    "C": WindowSpec("C", "2007Q1", "2013Q1", NON_EURO + (EURO,)),
}
ROLLING_LENGTHS = {"A": 64, "B": 80, "C": 112}


@dataclass(frozen=True)
class ModelSpec:
    fundamental: FundamentalSpec
    approach: str

    def __post_init__(self):
        if self.approach not in APPROACHES:
            raise ValueError(f"approach must be one of {APPROACHES}, got {self.approach!r}")

    @property
    def id(self) -> str:
        return f"{self.fundamental.id}-{self.approach}"

    @classmethod
    def parse(cls, text: str) -> "ModelSpec":
        """``'TR_on-tvp'``, ``'MM-panel'``, ``'F2-ols'``."""
        kind, _, approach = text.rpartition("-")
        if not kind:
            raise ValueError(f"model id {text!r} must look like KIND-APPROACH")
        est = "tvp_bayes" if approach == "tvp" else "constant_ols"
        return cls(FundamentalSpec.parse(kind, estimation=est), approach)


@dataclass(frozen=True)
class ForecastRecord:
    currency: str
    model: str
    window: str
    origin: str
    horizon: int
    predicted: float
    realized: float
    rw_predicted: float = 0.0
    member: str = ""

    @property
    def error(self) -> float:
        return self.realized - self.predicted

    @property
    def rw_error(self) -> float:
        return self.realized - self.rw_predicted


RECORD_COLUMNS = ("currency", "model", "window", "origin", "h", "predicted", "realized",
                  "rw_predicted", "member")


def records_to_frame(records: Iterable[ForecastRecord]) -> pd.DataFrame:
    rows = [asdict(r) for r in records]
    for row in rows:
        row["h"] = row.pop("horizon")
    return pd.DataFrame(rows, columns=list(RECORD_COLUMNS))


def records_from_frame(frame: pd.DataFrame) -> list[ForecastRecord]:
    frame = frame.copy()
    frame["member"] = frame["member"].fillna("").astype(str)
    return [
        ForecastRecord(
            currency=str(row.currency), model=str(row.model), window=str(row.window),
            origin=str(row.origin), horizon=int(row.h), predicted=float(row.predicted),
            realized=float(row.realized), rw_predicted=float(row.rw_predicted),
            member=row.member,
        )
        for row in frame.itertuples(index=False)
    ]


def write_records(records: Sequence[ForecastRecord], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records_to_frame(sort_records(records)).to_csv(path, index=False, float_format="%.17g")
    return path


def read_records(path) -> list[ForecastRecord]:
    return records_from_frame(pd.read_csv(path, dtype={"origin": str, "member": str},
                                          float_precision="round_trip"))


def sort_records(records: Iterable[ForecastRecord]) -> list[ForecastRecord]:
    return sorted(records, key=lambda r: (r.window, r.model, r.horizon, r.currency,
                                          r.origin, r.member))


@dataclass
class PanelFit:
    omega: pd.Series   # per-country intercepts
    beta: float        # common slope
    residuals: np.ndarray


# -- direct regressions -----------------------------------------------------

def direct_pairs(z: pd.Series, s: pd.Series, h: int, origin, start=None) -> tuple[pd.Series, pd.Series]:
    """Regression pairs ``(z_t, s_{t+h} - s_t)`` for ``start <= t <= origin - h``."""
    origin = quarter(origin)
    last = origin - h
    s = s.loc[:origin]
    ds = (s.shift(-h) - s).loc[start:last]
    zz = z.loc[start:last]
    both = pd.concat([zz.rename("z"), ds.rename("ds")], axis=1).dropna()
    return both["z"], both["ds"]


def _design(z: pd.Series) -> np.ndarray:
    return np.column_stack([np.ones(len(z)), z.to_numpy()])


def forecast_prior(z_train: pd.Series, s: pd.Series, h: int, tau: float = DEFAULT_TAU) -> PriorSpec:
    """Prior for the TVP forecasting regression from training-sample pairs.

    Only pairs whose target date also lies in the training span are used, so
    ``T0`` shrinks by ``h``.
    """
    end = z_train.index[-1]
    zz, ds = direct_pairs(z_train, s.loc[:end], h, end, start=z_train.index[0])
    return parameterize_priors(ds.to_numpy(), _design(zz), tau=tau, horizon=h)


def _tvp_fit(z, s, h, origin, prior, config, start=None) -> tuple[float, PosteriorDraws]:
    zz, ds = direct_pairs(z, s, h, origin, start)
    if len(ds) < 2:
        raise InsufficientDataError(f"only {len(ds)} regression pairs at origin {origin}")
    draws = run_gibbs(ds.to_numpy(), _design(zz), prior, config)
    b = draws.posterior_mean_states[-1]
    z_T = z.loc[quarter(origin)]
    return float(b[0] + b[1] * z_T), draws


def tvp_direct_forecast(
    z: pd.Series,
    s: pd.Series,
    h: int,
    origin,
    prior: PriorSpec,
    config: GibbsConfig,
    start=None,
) -> float:
    """Forecast of ``s_{T+h} - s_T`` from the TVP regression.

    Coefficients are projected at their last in-sample posterior mean, the
    best predictor of a random walk.
    """
    return _tvp_fit(z, s, h, origin, prior, config, start)[0]


def ols_direct_forecast(z: pd.Series, s: pd.Series, h: int, origin, start=None) -> float:
    zz, ds = direct_pairs(z, s, h, origin, start)
    if len(ds) < 4:
        raise InsufficientDataError(f"OLS forecast needs 4 pairs, got {len(ds)} at {origin}")
    coef, _, _ = ols(ds.to_numpy(), _design(zz))
    return float(coef[0] + coef[1] * z.loc[quarter(origin)])


def lsdv_fit(z: pd.DataFrame, s: pd.DataFrame, h: int, origin, start=None) -> PanelFit:
    """Least-squares dummy-variable fit of ``ds_i = omega_i + beta z_i``."""
    ys, zs, ids = [], [], []
    countries = list(z.columns)
    for j, c in enumerate(countries):
        zz, ds = direct_pairs(z[c], s[c], h, origin, start)
        if len(ds) < 2:
            raise InsufficientDataError(f"{c}: {len(ds)} usable pairs, LSDV needs 2")
        ys.append(ds.to_numpy())
        zs.append(zz.to_numpy())
        ids.append(np.full(len(ds), j))
    y = np.concatenate(ys)
    zv = np.concatenate(zs)
    idx = np.concatenate(ids)
    X = np.zeros((len(y), len(countries) + 1))
    X[np.arange(len(y)), idx] = 1.0
    X[:, -1] = zv
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise SingularDesignError("LSDV design is rank deficient (no within variation in z)")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return PanelFit(pd.Series(coef[:-1], index=countries), float(coef[-1]), y - X @ coef)


def lsdv_panel_forecast(z: pd.DataFrame, s: pd.DataFrame, h: int, origin, start=None) -> pd.Series:
    fit = lsdv_fit(z, s, h, origin, start)
    z_T = z.loc[quarter(origin)]
    return (fit.omega + fit.beta * z_T).rename("predicted")


def euro_aggregate(records: Sequence[ForecastRecord], members: Sequence[str]) -> list[ForecastRecord]:
    """Euro forecast as the unweighted mean of member forecasts.

    One output record per (member, origin, horizon): the common average
    forecast against that member's realized change, so pooled RMSFEs average
    over members and origins.
    """
    members = list(members)
    groups: dict = {}
    for r in records:
        if r.currency in members:
            groups.setdefault((r.model, r.window, r.horizon, r.origin), {})[r.currency] = r
    out = []
    for key in sorted(groups):
        got = groups[key]
        missing = [m for m in members if m not in got]
        if missing:
            raise AggregationError(f"euro aggregate at {key[3]} (h={key[2]}) is missing "
                                   f"{', '.join(missing)}")
        avg = float(np.mean([got[m].predicted for m in members]))
        for m in members:
            r = got[m]
            out.append(ForecastRecord(EURO, r.model, r.window, r.origin, r.horizon, avg,
                                      r.realized, 0.0, member=m))
    return out


# -- harness ----------------------------------------------------------------

@dataclass
class HarnessConfig:
    in_sample_start: str = "1979Q1"
    training_start: str = "1974Q1"
    training_end: str = "1978Q4"
    tau: float = DEFAULT_TAU
    total_draws: int = DEFAULT_DRAWS
    burn_in: int = DEFAULT_BURN_IN
    diag_q: bool = False
    scheme: str = "recursive"
    rolling_length: Optional[int] = None
    seed: int = 0
    euro_members: tuple = EURO_MEMBERS
    dump_draws: Optional[str] = None

    def __post_init__(self):
        if self.scheme not in ("recursive", "rolling"):
            raise ConfigError(f"scheme must be recursive or rolling, not {self.scheme!r}")
        if quarter(self.training_end) >= quarter(self.in_sample_start):
            raise ConfigError("training sample must end before the in-sample period starts")
        if self.rolling_length is not None and self.rolling_length < 8:
            raise ConfigError("rolling_length must be at least 8 quarters")
        self.euro_members = tuple(self.euro_members)

    def gibbs(self, seed: int) -> GibbsConfig:
        return GibbsConfig(self.total_draws, self.burn_in, seed, self.diag_q)

    def window_length(self, window: WindowSpec) -> int:
        if self.rolling_length is not None:
            return self.rolling_length
        if window.label in ROLLING_LENGTHS and self.in_sample_start == "1979Q1":
            return ROLLING_LENGTHS[window.label]
        return n_quarters(self.in_sample_start, window.start) - 1

    def estimation_start(self, origin: pd.Period, window: WindowSpec) -> pd.Period:
        first = quarter(self.in_sample_start)
        if self.scheme == "recursive":
            return first
        return max(first, origin - self.window_length(window) + 1)


def derive_seed(seed: int, *parts) -> int:
    """Stable per-task seed, independent of scheduling order."""
    key = zlib.crc32("|".join(str(p) for p in parts).encode())
    return int(np.random.SeedSequence(seed, spawn_key=(key,)).generate_state(1)[0])


class FundamentalBuilder:
    """Computes ``z`` for one model, caching by estimation window.

    Everything at origin ``T`` is computed from frames sliced to ``<= T``.
    """

    def __init__(self, model: ModelSpec, panel: SeriesPanel, cfg: HarnessConfig):
        self.model = model
        self.spec = model.fundamental
        self.panel = panel
        self.cfg = cfg
        self._cache: dict = {}
        self._taylor_priors: dict = {}
        self._forecast_priors: dict = {}
        self._training_z: dict = {}

    @property
    def base(self) -> str:
        return self.panel.base_country

    def _frames(self, country, end):
        return self.panel[country].loc[:end], self.panel[self.base].loc[:end]

    def _taylor(self, country, end):
        home, base = self._frames(country, end)
        return fmod.build_taylor_regressors(home, base, self.spec.kind, self.spec.gap_source,
                                            country=country)

    def training_z(self, country) -> pd.Series:
        """Fundamental deviations over the training span (for the priors)."""
        if country in self._training_z:
            return self._training_z[country]
        t0, t1 = quarter(self.cfg.training_start), quarter(self.cfg.training_end)
        if self.spec.kind in fmod.TAYLOR_KINDS:
            reg = self._taylor(country, t1)
            z = fmod.taylor_fundamental_ols(reg, self.panel[country]["s"], t0, t1).z
        else:
            z = self._window_z([country], t0, t1)[country]
        self._training_z[country] = z
        return z

    def taylor_prior(self, country) -> PriorSpec:
        if country not in self._taylor_priors:
            t0, t1 = quarter(self.cfg.training_start), quarter(self.cfg.training_end)
            self._taylor_priors[country] = fmod.taylor_training_prior(
                self._taylor(country, t1), t0, t1, self.cfg.tau)
        return self._taylor_priors[country]

    def forecast_prior(self, country, h) -> PriorSpec:
        key = (country, h)
        if key not in self._forecast_priors:
            t1 = quarter(self.cfg.training_end)
            s = self.panel[country]["s"].loc[:t1]
            self._forecast_priors[key] = forecast_prior(self.training_z(country), s, h,
                                                        self.cfg.tau)
        return self._forecast_priors[key]

    def _window_z(self, countries, start, end) -> dict:
        spec = self.spec
        out = {}
        if spec.kind in fmod.SIMPLE_KINDS:
            for c in countries:
                home, base = self._frames(c, end)
                out[c] = fmod.simple_fundamental(spec.kind, home.loc[start:], base.loc[start:]).z
        elif spec.kind == "Factor":
            s_panel = self.panel.s_matrix().loc[start:end]
            fm = fmod.extract_factors(s_panel, spec.r)
            for c in countries:
                out[c] = fmod.factor_fundamental(fm, c, s_panel[c]).z
        elif self.model.approach == "tvp":
            for c in countries:
                seed = derive_seed(self.cfg.seed, "taylor", self.model.id, c, start, end)
                fs = fmod.taylor_fundamental_tvp(
                    self._taylor(c, end), self.panel[c]["s"].loc[:end], self.taylor_prior(c),
                    self.cfg.gibbs(seed), start, end)
                out[c] = fs.z
        else:
            for c in countries:
                out[c] = fmod.taylor_fundamental_ols(
                    self._taylor(c, end), self.panel[c]["s"].loc[:end], start, end).z
        return out

    def z(self, countries, start, end) -> dict:
        """``z`` over ``[start, end]`` for each country, using data ``<= end``."""
        if self.spec.kind == "Factor":
            key = ("__factor__", start, end)
            if key not in self._cache:
                self._cache[key] = self._window_z(list(self.panel.countries), start, end)
            return {c: self._cache[key][c] for c in countries}
        out = {}
        todo = [c for c in countries if (c, start, end) not in self._cache]
        if todo:
            for c, z in self._window_z(todo, start, end).items():
                self._cache[(c, start, end)] = z
        for c in countries:
            out[c] = self._cache[(c, start, end)]
        return out


def _check_window(panel: SeriesPanel, window: WindowSpec, horizons, cfg: HarnessConfig):
    idx = panel.index
    if quarter(window.end) > idx[-1]:
        raise ConfigError(f"window {window.label} ends {window.end}, data end {idx[-1]}")
    if quarter(cfg.training_start) < idx[0]:
        raise ConfigError(f"training starts {cfg.training_start}, data start {idx[0]}")
    for h in horizons:
        first_origin = quarter(window.start) - h
        if first_origin < quarter(cfg.in_sample_start):
            raise ConfigError(f"window {window.label} at h={h} starts before the in-sample period")


def _expand(currencies, cfg: HarnessConfig) -> list:
    out = []
    for c in currencies:
        if c == EURO:
            out.extend(m for m in cfg.euro_members if m not in out)
        elif c not in out:
            out.append(c)
    return out


def run_currency_cell(
    model: ModelSpec,
    window: WindowSpec,
    currency: str,
    horizons: Sequence[int],
    panel: SeriesPanel,
    cfg: HarnessConfig,
    builder: Optional[FundamentalBuilder] = None,
) -> list[ForecastRecord]:
    """All forecasts of one single-equation model for one currency."""
    if model.approach == "panel":
        raise ValueError("use run_panel_cell for the panel approach")
    builder = builder or FundamentalBuilder(model, panel, cfg)
    s_full = panel[currency]["s"]
    records = []
    for h in horizons:
        prior = builder.forecast_prior(currency, h) if model.approach == "tvp" else None
        for target in window.targets:
            origin = target - h
            start = cfg.estimation_start(origin, window)
            z = builder.z([currency], start, origin)[currency]
            s = s_full.loc[:origin]
            if model.approach == "tvp":
                seed = derive_seed(cfg.seed, "forecast", model.id, currency, h, start, origin)
                pred, draws = _tvp_fit(z, s, h, origin, prior, cfg.gibbs(seed), start)
                if cfg.dump_draws:
                    d = Path(cfg.dump_draws)
                    d.mkdir(parents=True, exist_ok=True)
                    draws.save(d / f"{model.id}_{window.label}_{currency}_h{h}_{origin}.npz")
            else:
                pred = ols_direct_forecast(z, s, h, origin, start)
            realized = float(s_full.loc[target] - s_full.loc[origin])
            records.append(ForecastRecord(currency, model.id, window.label, str(origin), h,
                                          pred, realized))
    return records


def run_panel_cell(
    model: ModelSpec,
    window: WindowSpec,
    currencies: Sequence[str],
    horizons: Sequence[int],
    panel: SeriesPanel,
    cfg: HarnessConfig,
) -> list[ForecastRecord]:
    """LSDV forecasts for every currency of a window (Euro members separately)."""
    builder = FundamentalBuilder(model, panel, cfg)
    records = []
    for h in horizons:
        for target in window.targets:
            origin = target - h
            start = cfg.estimation_start(origin, window)
            zs = builder.z(currencies, start, origin)
            z = pd.DataFrame(zs)
            s = panel.s_matrix(list(currencies)).loc[:origin]
            preds = lsdv_panel_forecast(z, s, h, origin, start)
            for c in currencies:
                s_c = panel[c]["s"]
                realized = float(s_c.loc[target] - s_c.loc[origin])
                records.append(ForecastRecord(c, model.id, window.label, str(origin), h,
                                              float(preds[c]), realized))
    return records


@dataclass(frozen=True)
class Cell:
    """Independent unit of harness work."""
    model: str
    window: str
    currency: str  # "*" for a panel cell

    @property
    def key(self) -> tuple:
        return (self.window, self.model, self.currency)


def plan_cells(models: Sequence[ModelSpec], windows: Sequence[WindowSpec],
               cfg: HarnessConfig) -> list[Cell]:
    cells = []
    for w in windows:
        for m in models:
            if m.approach == "panel":
                cells.append(Cell(m.id, w.label, "*"))
            else:
                cells.extend(Cell(m.id, w.label, c) for c in _expand(w.currencies, cfg))
    return sorted(set(cells), key=lambda c: c.key)


def run_cell(cell: Cell, windows: dict, horizons, panel: SeriesPanel,
             cfg: HarnessConfig) -> list[ForecastRecord]:
    model = ModelSpec.parse(cell.model)
    window = windows[cell.window]
    if cell.currency == "*":
        return run_panel_cell(model, window, _expand(window.currencies, cfg), horizons,
                              panel, cfg)
    return run_currency_cell(model, window, cell.currency, horizons, panel, cfg)


def finalize_records(records: Sequence[ForecastRecord], windows: dict,
                     cfg: HarnessConfig) -> list[ForecastRecord]:
    """Replace Euro-member records by Euro aggregates where a window asks for the Euro."""
    out = []
    by_window: dict = {}
    for r in records:
        by_window.setdefault(r.window, []).append(r)
    for label, recs in by_window.items():
        window = windows[label]
        if EURO in window.currencies:
            members = set(cfg.euro_members)
            explicit = set(window.currencies) - {EURO}
            out.extend(r for r in recs if r.currency not in members or r.currency in explicit)
            out.extend(euro_aggregate(recs, cfg.euro_members))
        else:
            out.extend(recs)
    return sort_records(out)


def run_harness(
    models: Sequence[ModelSpec] | ModelSpec,
    window: WindowSpec | Sequence[WindowSpec],
    horizons: Sequence[int],
    panel: SeriesPanel,
    cfg: Optional[HarnessConfig] = None,
    executor=None,
) -> list[ForecastRecord]:
    """Run every (model, window, currency) cell and return sorted records.

    ``executor`` may be any ``concurrent.futures`` executor; results are
    merged in sorted cell order regardless of completion order.
    """
    cfg = cfg or HarnessConfig()
    models = [models] if isinstance(models, ModelSpec) else list(models)
    windows = [window] if isinstance(window, WindowSpec) else list(window)
    horizons = list(horizons)
    for w in windows:
        _check_window(panel, w, horizons, cfg)
    wmap = {w.label: w for w in windows}
    cells = plan_cells(models, windows, cfg)
    if executor is None:
        results = [run_cell(c, wmap, horizons, panel, cfg) for c in cells]
    else:
        futures = [executor.submit(run_cell, c, wmap, horizons, panel, cfg) for c in cells]
        results = [f.result() for f in futures]
    records = [r for chunk in results for r in chunk]
    return finalize_records(records, wmap, cfg)
