"""Ingest quarterly macro CSVs and build the aligned per-country panel.

Input layout: one CSV per variable, countries as columns, first column holds
quarter labels such as ``1990Q3``.  The panel is keyed by
:class:`pandas.Period` quarters throughout.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np
import pandas as pd
from scipy.linalg import solveh_banded

from .errors import (
    AlignmentError,
    DataError,
    InsufficientDataError,
    SchemaError,
)

FREQ = "Q-DEC"

REQUIRED_VARIABLES = ("exchange_rate", "interest_rate", "cpi", "ip", "money")
OPTIONAL_VARIABLES = ("unemployment",)
POSITIVE_VARIABLES = ("exchange_rate", "cpi", "ip", "money")

PANEL_COLUMNS = ("s", "i", "p", "pi", "y_gap", "u_gap", "m", "y", "q")

# Irrevocable EUR conversion factors, national currency per euro (1999-01-01).
EURO_CONVERSION_FACTORS = {
    "Austria": 13.7603,
    "Belgium": 40.3399,
    "Finland": 5.94573,
    "France": 6.55957,
    "Germany": 1.95583,
    "Italy": 1936.27,
    "Netherlands": 2.20371,
    "Spain": 166.386,
}
EURO_CUTOVER = "1999Q1"


# -- quarters ---------------------------------------------------------------

def quarter(label) -> pd.Period:
    """Parse ``'1990Q3'``, a ``(year, quarter)`` tuple or a Period."""
    if isinstance(label, pd.Period):
        return label.asfreq(FREQ)
    if isinstance(label, tuple):
        year, q = label
        if not 1 <= int(q) <= 4:
            raise ValueError(f"quarter must be in 1..4, got {q}")
        return pd.Period(year=int(year), quarter=int(q), freq=FREQ)
    text = str(label).strip().upper()
    if len(text) != 6 or text[4] != "Q" or text[5] not in "1234":
        raise ValueError(f"bad quarter label {label!r}, expected YYYYQn")
    return pd.Period(text, freq=FREQ)


def quarter_range(start, end) -> pd.PeriodIndex:
    return pd.period_range(quarter(start), quarter(end), freq=FREQ)


def n_quarters(start, end) -> int:
    return quarter(end).ordinal - quarter(start).ordinal + 1


# -- raw ingest -------------------------------------------------------------

@dataclass
class RawCountrySeries:
    country: str
    exchange_rate: Optional[pd.Series]
    interest_rate: pd.Series
    cpi: pd.Series
    ip: pd.Series
    money: pd.Series
    unemployment: Optional[pd.Series] = None

    @property
    def index(self) -> pd.PeriodIndex:
        return self.interest_rate.index

    def __len__(self) -> int:
        return len(self.index)

    def validate(self) -> None:
        for name in POSITIVE_VARIABLES:
            x = getattr(self, name)
            if x is None:
                continue
            bad = x[~(x > 0)]
            if len(bad):
                raise DataError(
                    f"{self.country}: {name} must be positive, "
                    f"got {bad.iloc[0]!r} at {bad.index[0]}"
                )
        idx = self.index
        if len(idx) > 1 and not (np.diff(idx.asi8) == 1).all():
            raise AlignmentError(f"{self.country}: dates are not consecutive quarters",
                                 country=self.country)


def read_variable_csv(path) -> pd.DataFrame:
    """Read one variable file into a frame indexed by quarter."""
    frame = pd.read_csv(path, dtype={0: str}, float_precision="round_trip")
    if frame.shape[1] < 2:
        raise SchemaError(f"{path}: expected a date column plus country columns")
    date_col = frame.columns[0]
    try:
        idx = pd.PeriodIndex([quarter(v) for v in frame[date_col]], freq=FREQ)
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from None
    frame = frame.drop(columns=date_col)
    frame.index = idx
    frame.columns = [str(c).strip() for c in frame.columns]
    if idx.has_duplicates:
        raise AlignmentError(f"{path}: duplicate quarter {idx[idx.duplicated()][0]}")
    return frame.sort_index().astype(float)


def _check_no_holes(frame: pd.DataFrame, span: pd.PeriodIndex, source: str) -> None:
    missing = span.difference(frame.index)
    if len(missing):
        q = missing.sort_values()[0]
        raise AlignmentError(f"{source}: quarter {q} is missing", quarter=q)


def load_panel(
    files: Mapping[str, str | Path],
    base_country: str,
    schema: Optional[Mapping[str, Mapping[str, str]]] = None,
) -> dict[str, RawCountrySeries]:
    """Load per-variable CSVs into one :class:`RawCountrySeries` per country.

    Parameters
    ----------
    files
        Variable name -> CSV path.  Must cover every name in
        ``REQUIRED_VARIABLES``; ``unemployment`` is optional.
    base_country
        Country whose currency is the base.  It needs no exchange-rate column.
    schema
        Optional per-variable column renames ``{variable: {csv_col: country}}``.

    All series are cut to the intersection of the files' date spans.  A
    missing row or an empty cell inside that span raises
    :class:`AlignmentError` naming the country and quarter.
    """
    schema = schema or {}
    for var in REQUIRED_VARIABLES:
        if var not in files:
            raise SchemaError(f"no file given for required variable '{var}'")

    frames = {}
    for var in REQUIRED_VARIABLES + OPTIONAL_VARIABLES:
        if var not in files:
            continue
        frame = read_variable_csv(files[var])
        if var in schema:
            frame = frame.rename(columns=dict(schema[var]))
        frames[var] = frame

    countries = [c for c in frames["exchange_rate"].columns if c != base_country]
    countries.append(base_country)

    start = max(f.index.min() for f in frames.values())
    end = min(f.index.max() for f in frames.values())
    if start > end:
        raise AlignmentError("variable files share no common quarters")
    span = pd.period_range(start, end, freq=FREQ)

    for var, frame in frames.items():
        _check_no_holes(frame, span, f"{var} file")

    out = {}
    for country in countries:
        cols = {}
        for var in REQUIRED_VARIABLES:
            if var == "exchange_rate" and country == base_country:
                cols[var] = None
                continue
            frame = frames[var]
            if country not in frame.columns:
                raise SchemaError(f"{var}: missing column '{country}'")
            cols[var] = frame.loc[span, country]
        unemp = None
        if "unemployment" in frames and country in frames["unemployment"].columns:
            u = frames["unemployment"].loc[span, country]
            if u.notna().any():
                unemp = u
        cols["unemployment"] = unemp
        for var, x in cols.items():
            if x is None:
                continue
            holes = x.index[x.isna()]
            if len(holes):
                raise AlignmentError(
                    f"{country}: {var} has no value at {holes[0]}",
                    country=country,
                    quarter=holes[0],
                )
        series = RawCountrySeries(country=country, **{k: (v.rename(k) if v is not None else None)
                                                       for k, v in cols.items()})
        series.validate()
        out[country] = series
    return out


def load_series_csv(path, column: Optional[str] = None) -> pd.Series:
    """Read a single series (first data column unless ``column`` is given)."""
    frame = read_variable_csv(path)
    col = column if column is not None else frame.columns[0]
    if col not in frame.columns:
        raise SchemaError(f"{path}: missing column '{col}'")
    return frame[col].rename(col)


# -- transforms -------------------------------------------------------------

def euro_convert(
    series: RawCountrySeries,
    factor: float,
    cutover,
    eur_rate: pd.Series,
) -> RawCountrySeries:
    """Replace the exchange rate from ``cutover`` on by ``factor * eur_rate``."""
    if not factor > 0:
        raise DataError(f"conversion factor must be positive, got {factor}")
    cut = quarter(cutover)
    x = series.exchange_rate
    if x is None:
        raise DataError(f"{series.country}: no exchange rate to convert")
    if not x.index.min() <= cut <= x.index.max():
        raise DataError(f"cutover {cut} outside {x.index.min()}..{x.index.max()}")
    after = x.index[x.index >= cut]
    eur = eur_rate.reindex(after)
    if eur.isna().any():
        q = eur.index[eur.isna()][0]
        raise AlignmentError(f"EUR rate undefined at {q}", country=series.country, quarter=q)
    out = x.copy()
    out.loc[after] = factor * eur.to_numpy()
    return RawCountrySeries(
        country=series.country,
        exchange_rate=out,
        interest_rate=series.interest_rate,
        cpi=series.cpi,
        ip=series.ip,
        money=series.money,
        unemployment=series.unemployment,
    )


def seasonal_adjust(x: pd.Series) -> pd.Series:
    """Trailing four-quarter mean; the first three values are NaN."""
    if len(x) < 4:
        raise InsufficientDataError(f"seasonal adjustment needs 4 quarters, got {len(x)}")
    return x.rolling(4, min_periods=4).mean()


def quarterly_inflation(p_log: pd.Series, scale: float = 400.0) -> pd.Series:
    """First difference of log prices times ``scale`` (400 -> annual percent)."""
    if len(p_log) < 2:
        raise InsufficientDataError("inflation needs at least 2 observations")
    return p_log.diff() * scale


def _hp_trend_values(x: np.ndarray, lamb: float) -> np.ndarray:
    n = len(x)
    # upper banded form of I + lamb * K'K, K the (n-2) x n second-difference matrix
    d0 = np.full(n, 1.0 + 6.0 * lamb)
    d0[[0, -1]] = 1.0 + lamb
    d0[[1, -2]] = 1.0 + 5.0 * lamb
    d1 = np.full(n - 1, -4.0 * lamb)
    d1[[0, -1]] = -2.0 * lamb
    d2 = np.full(n - 2, lamb)
    ab = np.zeros((3, n))
    ab[0, 2:] = d2
    ab[1, 1:] = d1
    ab[2, :] = d0
    return solveh_banded(ab, x)


def hp_trend(x, lamb: float = 1600.0) -> np.ndarray:
    """HP trend over the whole array."""
    x = np.asarray(x, dtype=float)
    if len(x) < 4:
        raise InsufficientDataError(f"HP filter needs at least 4 points, got {len(x)}")
    if not lamb > 0:
        raise ValueError("lambda must be positive")
    return _hp_trend_values(x, lamb)


def hp_gap(
    x: pd.Series,
    lamb: float = 1600.0,
    mode: str = "recursive",
    min_obs: int = 4,
) -> pd.Series:
    """Cyclical component ``x - trend`` of the Hodrick-Prescott filter.

    ``mode="full"`` filters the whole sample once.  ``mode="recursive"``
    refilters every expanding window ``x[:t+1]`` and keeps the last gap, so
    the value at ``t`` never uses data after ``t``.  Windows shorter than
    ``min_obs`` give NaN.  Leading NaNs in ``x`` are carried through.
    """
    if mode not in ("full", "recursive"):
        raise ValueError(f"unknown HP mode {mode!r}")
    if not lamb > 0:
        raise ValueError("lambda must be positive")
    valid = x.notna().to_numpy()
    if not valid.any():
        raise InsufficientDataError("HP filter got an all-missing series")
    first = int(np.argmax(valid))
    values = x.to_numpy(dtype=float)[first:]
    if np.isnan(values).any():
        raise AlignmentError("HP filter input has interior missing values")
    if len(values) < 4:
        raise InsufficientDataError(f"HP filter needs at least 4 points, got {len(values)}")
    gap = np.full(len(x), np.nan)
    if mode == "full":
        gap[first:] = values - _hp_trend_values(values, lamb)
    else:
        start = max(min_obs, 4)
        for end in range(start, len(values) + 1):
            window = values[:end]
            gap[first + end - 1] = window[-1] - _hp_trend_values(window, lamb)[-1]
    return pd.Series(gap, index=x.index, name=x.name)


def real_exchange_rate(s: pd.Series, p_home: pd.Series, p_base: pd.Series) -> pd.Series:
    """Log real exchange rate ``s + p_base - p_home``."""
    if not (s.index.equals(p_home.index) and s.index.equals(p_base.index)):
        raise AlignmentError("real exchange rate inputs are not aligned")
    return (s + p_base - p_home).rename("q")


# -- panel ------------------------------------------------------------------

@dataclass
class TransformConfig:
    hp_lambda: float = 1600.0
    hp_mode: str = "recursive"
    inflation_scale: float = 400.0
    gap_scale: float = 100.0
    euro_factors: dict = field(default_factory=dict)
    euro_cutover: str = EURO_CUTOVER


@dataclass
class SeriesPanel:
    """Transformed quarterly panel; one frame per country on a shared index.

    Frames carry the columns in ``PANEL_COLUMNS``.  The base country has
    ``s = q = 0``.  ``u_gap`` is all-NaN when unemployment is unavailable.
    """

    base_country: str
    frames: dict
    log: list = field(default_factory=list)

    @property
    def index(self) -> pd.PeriodIndex:
        return self.frames[self.base_country].index

    @property
    def countries(self) -> list:
        return [c for c in self.frames if c != self.base_country]

    def __getitem__(self, country) -> pd.DataFrame:
        return self.frames[country]

    def has_unemployment(self, country) -> bool:
        return bool(self.frames[country]["u_gap"].notna().any())

    def s_matrix(self, countries=None) -> pd.DataFrame:
        countries = countries or self.countries
        return pd.DataFrame({c: self.frames[c]["s"] for c in countries})

    def write(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for country, frame in self.frames.items():
            out = frame.copy()
            out.index = out.index.astype(str)
            out.index.name = "date"
            out.to_csv(directory / f"{country}.csv", float_format="%.17g")
        manifest = {
            "countries": self.countries,
            "base_country": self.base_country,
            "span": [str(self.index[0]), str(self.index[-1])],
            "transforms": self.log,
        }
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        return directory

    @classmethod
    def read(cls, directory) -> "SeriesPanel":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        frames = {}
        for country in manifest["countries"] + [manifest["base_country"]]:
            frame = pd.read_csv(directory / f"{country}.csv", dtype={"date": str},
                                float_precision="round_trip")
            frame.index = pd.PeriodIndex([quarter(v) for v in frame.pop("date")], freq=FREQ)
            frames[country] = frame.astype(float)
        return cls(manifest["base_country"], frames, manifest.get("transforms", []))


def build_panel(
    raw: Mapping[str, RawCountrySeries],
    base_country: str,
    config: Optional[TransformConfig] = None,
    eur_rate: Optional[pd.Series] = None,
) -> SeriesPanel:
    """Apply euro conversion, seasonal adjustment, logs and HP gaps."""
    config = config or TransformConfig()
    if base_country not in raw:
        raise DataError(f"base country '{base_country}' not in data")
    log = []
    raw = dict(raw)
    if config.euro_factors:
        if eur_rate is None:
            raise DataError("euro conversion requested but no EUR rate series given")
        for country, factor in sorted(config.euro_factors.items()):
            if country in raw:
                raw[country] = euro_convert(raw[country], factor, config.euro_cutover, eur_rate)
                log.append(f"euro_convert {country} factor={factor} cutover={config.euro_cutover}")

    def prices(r):
        return np.log(seasonal_adjust(r.cpi))

    base = raw[base_country]
    p_base = prices(base)
    frames = {}
    for country, r in raw.items():
        p = prices(r)
        y = np.log(seasonal_adjust(r.ip))
        frame = pd.DataFrame(index=r.index)
        frame["s"] = np.log(r.exchange_rate) if r.exchange_rate is not None else 0.0
        frame["i"] = r.interest_rate
        frame["p"] = p
        frame["pi"] = quarterly_inflation(p, config.inflation_scale)
        frame["y_gap"] = config.gap_scale * hp_gap(y, config.hp_lambda, config.hp_mode)
        if r.unemployment is not None:
            u = seasonal_adjust(r.unemployment)
            frame["u_gap"] = hp_gap(u, config.hp_lambda, config.hp_mode)
        else:
            frame["u_gap"] = np.nan
        frame["m"] = np.log(seasonal_adjust(r.money))
        frame["y"] = y
        if country == base_country:
            frame["q"] = 0.0
        else:
            frame["q"] = real_exchange_rate(frame["s"], p, p_base)
        frames[country] = frame[list(PANEL_COLUMNS)]
    log.append("s=log(exchange_rate); p,m,y=log of trailing 4q mean")
    log.append(f"pi=diff(p)*{config.inflation_scale}")
    log.append(f"y_gap={config.gap_scale}*hp_gap(y, lambda={config.hp_lambda}, {config.hp_mode})")
    log.append(f"u_gap=hp_gap(mean4(unemployment), lambda={config.hp_lambda}, {config.hp_mode})")
    # base first so SeriesPanel.index is well defined
    ordered = {base_country: frames.pop(base_country)}
    ordered.update(sorted(frames.items()))
    return SeriesPanel(base_country, ordered, log)
