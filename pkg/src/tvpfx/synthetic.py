"""Synthetic raw panels from a known time-varying Taylor-rule DGP.

Raw levels (CPI, industrial production, money, unemployment) are simulated
first.  Interest differentials are then set by a Taylor rule with drifting
coefficients on the *transformed* regressors the pipeline itself computes,
and exchange rates follow ``s_{t+1} - s_t = b0 + b1_t z_t + u_t`` where ``z``
is the rule-implied differential.  The data therefore carry exactly the
predictability the forecasting models look for.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from . import dataio
from .dataio import FREQ, RawCountrySeries, quarter

DEFAULT_COUNTRIES = ("Alpha", "Beta", "Gamma", "Delta")


@dataclass
class SyntheticConfig:
    countries: tuple = DEFAULT_COUNTRIES
    base_country: str = "Base"
    start: str = "1972Q1"
    end: str = "2004Q4"
    seed: int = 0
    # Taylor rule on [pi - pi*, gap - gap*, q]
    phi: tuple = (1.5, 0.5, -2.0)
    phi_drift_sd: float = 0.01
    rule_noise_sd: float = 0.25
    # exchange-rate law
    b1: float = 0.01
    b1_drift_sd: float = 0.0003
    fx_noise_sd: float = 0.02
    # macro processes
    inflation_mean: float = 3.0
    inflation_rho: float = 0.9
    inflation_sd: float = 1.0
    cycle_rho: float = 0.85
    cycle_sd: float = 0.008
    growth: float = 0.006
    without_unemployment: tuple = ()
    euro_members: tuple = ()
    eur_start: float = 1.1

    @property
    def index(self) -> pd.PeriodIndex:
        return pd.period_range(quarter(self.start), quarter(self.end), freq=FREQ)


@dataclass
class SyntheticPanel:
    raw: dict
    base_country: str
    truth: dict = field(default_factory=dict)  # per country: DataFrame of b1, phi, z
    eur_rate: Optional[pd.Series] = None

    def write(self, directory) -> dict:
        """Write one CSV per variable; return the ``{variable: path}`` map."""
        return write_raw_csvs(self.raw, self.base_country, directory, self.eur_rate)


def _ar1(rng, n, rho, sd, mean=0.0):
    x = np.empty(n)
    x[0] = mean + rng.normal(0, sd / np.sqrt(1 - rho ** 2))
    for t in range(1, n):
        x[t] = mean + rho * (x[t - 1] - mean) + rng.normal(0, sd)
    return x


def _macro(rng, cfg: SyntheticConfig, n: int) -> dict:
    pi = _ar1(rng, n, cfg.inflation_rho, cfg.inflation_sd, cfg.inflation_mean)
    log_p = np.log(100.0) + np.cumsum(pi) / 400.0
    cycle = _ar1(rng, n, cfg.cycle_rho, cfg.cycle_sd)
    log_y = np.log(100.0) + cfg.growth * np.arange(n) + cycle
    log_m = log_y + log_p + np.cumsum(rng.normal(0.0, 0.005, n))
    unemp = 6.0 - 40.0 * cycle + rng.normal(0.0, 0.1, n)
    return {"cpi": np.exp(log_p), "ip": np.exp(log_y), "money": np.exp(log_m),
            "unemployment": np.clip(unemp, 0.5, None)}


def _transformed(levels: dict, index) -> dict:
    """The pipeline's own transforms of simulated levels (recursive HP)."""
    cpi = pd.Series(levels["cpi"], index=index)
    ip = pd.Series(levels["ip"], index=index)
    p = np.log(dataio.seasonal_adjust(cpi))
    pi = dataio.quarterly_inflation(p)
    gap = 100.0 * dataio.hp_gap(np.log(dataio.seasonal_adjust(ip)))
    return {"p": p.to_numpy(), "pi": pi.to_numpy(), "gap": gap.to_numpy()}


def generate(cfg: Optional[SyntheticConfig] = None) -> SyntheticPanel:
    cfg = cfg or SyntheticConfig()
    rng = np.random.default_rng(cfg.seed)
    index = cfg.index
    n = len(index)

    base_levels = _macro(rng, cfg, n)
    bt = _transformed(base_levels, index)
    pi_b = np.nan_to_num(bt["pi"], nan=cfg.inflation_mean)
    gap_b = np.nan_to_num(bt["gap"])
    i_base = 2.0 + 1.5 * pi_b + 0.5 * gap_b + rng.normal(0, cfg.rule_noise_sd, n)

    raw = {}
    truth = {}
    for country in cfg.countries:
        lv = _macro(rng, cfg, n)
        tr = _transformed(lv, index)
        phi = np.asarray(cfg.phi) + np.cumsum(rng.normal(0, cfg.phi_drift_sd, (n, 3)), axis=0)
        b1 = cfg.b1 + np.cumsum(rng.normal(0, cfg.b1_drift_sd, n))
        d_pi = np.nan_to_num(tr["pi"] - bt["pi"])
        d_gap = np.nan_to_num(tr["gap"] - bt["gap"])
        # price level gap for q; early NaNs fall back to raw CPI logs
        p_home = np.where(np.isnan(tr["p"]), np.log(lv["cpi"]), tr["p"])
        p_base = np.where(np.isnan(bt["p"]), np.log(base_levels["cpi"]), bt["p"])
        s = np.empty(n)
        z = np.empty(n)
        s[0] = rng.normal(0.0, 0.5)
        for t in range(n):
            q = s[t] + p_base[t] - p_home[t]
            z[t] = phi[t, 0] * d_pi[t] + phi[t, 1] * d_gap[t] + phi[t, 2] * q
            if t + 1 < n:
                s[t + 1] = s[t] + b1[t] * z[t] + rng.normal(0, cfg.fx_noise_sd)
        i_home = i_base + z + rng.normal(0, cfg.rule_noise_sd, n)
        unemp = None
        if country not in cfg.without_unemployment:
            unemp = pd.Series(lv["unemployment"], index=index, name="unemployment")
        raw[country] = RawCountrySeries(
            country=country,
            exchange_rate=pd.Series(np.exp(s), index=index, name="exchange_rate"),
            interest_rate=pd.Series(i_home, index=index, name="interest_rate"),
            cpi=pd.Series(lv["cpi"], index=index, name="cpi"),
            ip=pd.Series(lv["ip"], index=index, name="ip"),
            money=pd.Series(lv["money"], index=index, name="money"),
            unemployment=unemp,
        )
        truth[country] = pd.DataFrame({"b1": b1, "phi_pi": phi[:, 0], "phi_gap": phi[:, 1],
                                       "phi_q": phi[:, 2], "z": z, "s": s}, index=index)
    raw[cfg.base_country] = RawCountrySeries(
        country=cfg.base_country,
        exchange_rate=None,
        interest_rate=pd.Series(i_base, index=index, name="interest_rate"),
        cpi=pd.Series(base_levels["cpi"], index=index, name="cpi"),
        ip=pd.Series(base_levels["ip"], index=index, name="ip"),
        money=pd.Series(base_levels["money"], index=index, name="money"),
        unemployment=pd.Series(base_levels["unemployment"], index=index, name="unemployment"),
    )

    eur = None
    if cfg.euro_members:
        eur = pd.Series(cfg.eur_start * np.exp(np.cumsum(rng.normal(0, 0.03, n))),
                        index=index, name="EUR")
    return SyntheticPanel(raw, cfg.base_country, truth, eur)


def write_raw_csvs(raw: dict, base_country: str, directory, eur_rate=None) -> dict:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    countries = [c for c in raw if c != base_country] + [base_country]
    files = {}
    for var in dataio.REQUIRED_VARIABLES + dataio.OPTIONAL_VARIABLES:
        cols = {}
        for c in countries:
            x = getattr(raw[c], var)
            if x is not None:
                cols[c] = x
        if not cols:
            continue
        frame = pd.DataFrame(cols)
        frame.index = frame.index.astype(str)
        frame.index.name = "date"
        path = directory / f"{var}.csv"
        frame.to_csv(path, float_format="%.17g")
        files[var] = path
    if eur_rate is not None:
        frame = eur_rate.rename("EUR").to_frame()
        frame.index = frame.index.astype(str)
        frame.index.name = "date"
        path = directory / "eur_rate.csv"
        frame.to_csv(path, float_format="%.17g")
        files["eur_rate"] = path
    return files


def eighteen_country_config(seed: int = 0) -> SyntheticConfig:
    """Fixture shaped like the full study: 9 floaters, 8 euro members, a base."""
    from .forecasting import EURO_MEMBERS, NON_EURO
    return SyntheticConfig(countries=NON_EURO + EURO_MEMBERS, base_country="US",
                           start="1972Q1", end="2013Q1", seed=seed,
                           euro_members=EURO_MEMBERS)


def write_fixture(directory, cfg: Optional[SyntheticConfig] = None, window_quarters: int = 24,
                  horizons=(1, 8), models=("TR_on-tvp",)) -> Path:
    """Write raw CSVs plus a ``config.yaml`` evaluating the last quarters of the sample."""
    import yaml

    cfg = cfg or SyntheticConfig()
    directory = Path(directory)
    sp = generate(cfg)
    files = sp.write(directory / "data")
    idx = cfg.index
    run = {
        "data": {"files": {k: str(Path("data") / Path(v).name) for k, v in files.items()
                           if k != "eur_rate"},
                 "base_country": cfg.base_country},
        "windows": [{"label": "S", "start": str(idx[-window_quarters]), "end": str(idx[-1]),
                     "currencies": list(cfg.countries)}],
        "horizons": list(horizons),
        "models": list(models),
        "seed": cfg.seed,
        "out": "run",
    }
    if "eur_rate" in files:
        run["data"]["eur_rate"] = str(Path("data") / "eur_rate.csv")
    path = directory / "config.yaml"
    path.write_text(yaml.safe_dump(run, sort_keys=False))
    return path


def main(argv=None) -> int:
    import argparse

    p = argparse.ArgumentParser(prog="python -m tvpfx.synthetic",
                                description="write a synthetic raw panel and run config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--end", default=SyntheticConfig.end)
    p.add_argument("--countries", nargs="+", default=list(DEFAULT_COUNTRIES))
    p.add_argument("--models", nargs="+", default=["TR_on-tvp"])
    args = p.parse_args(argv)
    cfg = SyntheticConfig(countries=tuple(args.countries), seed=args.seed, end=args.end)
    print(write_fixture(args.out, cfg, models=args.models))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
