"""Exchange-rate fundamentals ``Omega_t`` and deviations ``z_t = Omega_t - s_t``.

Taylor-rule fundamentals are the fitted interest differential of a
regression of ``i - i*`` on inflation, gap and real-exchange-rate terms
(no intercept).  Monetary, PPP and UIRP fundamentals are identities.  Factor
fundamentals are the rank-r principal-component fit of the log exchange-rate
panel.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from .errors import CapabilityError, DataError, SingularDesignError
from .gibbs import GibbsConfig, PriorSpec, ols, parameterize_priors, run_gibbs

TAYLOR_KINDS = ("TR_on", "TR_os", "TR_en")
SIMPLE_KINDS = ("MM", "PPP", "UIRP")

TAYLOR_COLUMNS = {
    "TR_on": ("d_pi", "d_gap", "q"),
    "TR_os": ("d_pi", "d_gap", "d_i_lag", "q"),
    "TR_en": ("pi", "neg_pi_base", "gap", "neg_gap_base", "q"),
}


@dataclass(frozen=True)
class FundamentalSpec:
    kind: str
    estimation: str = "none"
    gap_source: str = "output"
    r: int = 0

    def __post_init__(self):
        if self.kind in SIMPLE_KINDS:
            if self.estimation != "none":
                raise ValueError(f"{self.kind} is an identity; estimation must be 'none'")
        elif self.kind in TAYLOR_KINDS:
            if self.estimation not in ("tvp_bayes", "constant_ols"):
                raise ValueError("Taylor fundamentals need estimation tvp_bayes or constant_ols")
        elif self.kind == "Factor":
            if self.r < 1:
                raise ValueError("factor fundamentals need r >= 1")
        else:
            raise ValueError(f"unknown fundamental kind {self.kind!r}")
        if self.gap_source not in ("output", "unemployment"):
            raise ValueError(f"gap_source must be output or unemployment, not {self.gap_source!r}")

    @property
    def id(self) -> str:
        if self.kind == "Factor":
            return f"F{self.r}"
        if self.kind in TAYLOR_KINDS and self.gap_source == "unemployment":
            return f"{self.kind}_u"
        return self.kind

    @classmethod
    def parse(cls, text: str, estimation: Optional[str] = None) -> "FundamentalSpec":
        """Parse ids like ``TR_on``, ``TR_en_u``, ``MM``, ``F2``."""
        m = re.fullmatch(r"F(\d)", text)
        if m:
            return cls("Factor", "none", r=int(m.group(1)))
        if text in SIMPLE_KINDS:
            return cls(text)
        gap = "output"
        if text.endswith("_u"):
            text, gap = text[:-2], "unemployment"
        if text in TAYLOR_KINDS:
            return cls(text, estimation or "tvp_bayes", gap)
        raise ValueError(f"unknown fundamental id {text!r}")


@dataclass
class TaylorRegressors:
    dependent: pd.Series
    X: pd.DataFrame
    variant: str

    @property
    def k(self) -> int:
        return self.X.shape[1]

    def rows(self, start=None, end=None) -> tuple[pd.Series, pd.DataFrame]:
        """Complete rows within ``[start, end]``."""
        y = self.dependent.loc[start:end]
        X = self.X.loc[start:end]
        ok = y.notna() & X.notna().all(axis=1)
        return y[ok], X[ok]


@dataclass
class FundamentalSeries:
    omega: pd.Series
    z: pd.Series
    spec: FundamentalSpec
    meta: dict = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"omega": self.omega, "z": self.z, "spec": self.spec.id})


@dataclass
class FactorModel:
    factors: pd.DataFrame    # T x r
    loadings: pd.DataFrame   # N x r
    means: pd.Series         # N
    explained: np.ndarray    # r shares of total variance

    def fitted(self) -> pd.DataFrame:
        return self.factors @ self.loadings.T + self.means


def _gap_column(source: str) -> str:
    return "y_gap" if source == "output" else "u_gap"


def build_taylor_regressors(
    home: pd.DataFrame,
    base: pd.DataFrame,
    variant: str,
    gap_source: str = "output",
    country: str = "home",
) -> TaylorRegressors:
    """Design matrix of a Taylor-rule interest-differential regression.

    Columns by variant (``*`` = base country)::

        TR_on  pi - pi*, gap - gap*, q
        TR_os  pi - pi*, gap - gap*, i(-1) - i*(-1), q
        TR_en  pi, -pi*, gap, -gap*, q

    Foreign terms of TR_en enter negated so the fitted coefficients read
    directly as the home and base reaction coefficients.
    """
    if variant not in TAYLOR_KINDS:
        raise ValueError(f"unknown Taylor variant {variant!r}")
    gcol = _gap_column(gap_source)
    for name, frame in ((country, home), ("base country", base)):
        if gcol not in frame or not frame[gcol].notna().any():
            raise CapabilityError(f"{name} has no {gcol} series for the {gap_source} gap rule",
                                  country=name)
    if not home.index.equals(base.index):
        raise DataError("home and base frames are not aligned")
    dep = (home["i"] - base["i"]).rename("i_diff")
    if variant == "TR_on":
        X = pd.DataFrame({
            "d_pi": home["pi"] - base["pi"],
            "d_gap": home[gcol] - base[gcol],
            "q": home["q"],
        })
    elif variant == "TR_os":
        X = pd.DataFrame({
            "d_pi": home["pi"] - base["pi"],
            "d_gap": home[gcol] - base[gcol],
            "d_i_lag": (home["i"] - base["i"]).shift(1),
            "q": home["q"],
        })
    else:
        X = pd.DataFrame({
            "pi": home["pi"],
            "neg_pi_base": -base["pi"],
            "gap": home[gcol],
            "neg_gap_base": -base[gcol],
            "q": home["q"],
        })
    return TaylorRegressors(dep, X, variant)


def taylor_training_prior(
    regressors: TaylorRegressors,
    start,
    end,
    tau: float,
) -> PriorSpec:
    y, X = regressors.rows(start, end)
    return parameterize_priors(y.to_numpy(), X.to_numpy(), tau=tau)


def _fundamental(z: pd.Series, s: pd.Series, spec: FundamentalSpec, **meta) -> FundamentalSeries:
    z = z.rename("z")
    s = s.reindex(z.index)
    return FundamentalSeries(omega=(z + s).rename("omega"), z=z, spec=spec, meta=meta)


def taylor_fundamental_ols(
    regressors: TaylorRegressors,
    s: pd.Series,
    start=None,
    end=None,
    spec: Optional[FundamentalSpec] = None,
) -> FundamentalSeries:
    """Constant-coefficient Taylor fundamental fitted by OLS on ``[start, end]``."""
    y, X = regressors.rows(start, end)
    if len(y) < X.shape[1]:
        raise SingularDesignError(f"{len(y)} rows cannot identify {X.shape[1]} coefficients")
    coef, _, _ = ols(y.to_numpy(), X.to_numpy())
    z = pd.Series(X.to_numpy() @ coef, index=X.index)
    spec = spec or FundamentalSpec(regressors.variant, "constant_ols")
    return _fundamental(z, s, spec, coef=dict(zip(X.columns, coef)))


def taylor_fundamental_tvp(
    regressors: TaylorRegressors,
    s: pd.Series,
    prior: PriorSpec,
    config: GibbsConfig,
    start=None,
    end=None,
    spec: Optional[FundamentalSpec] = None,
) -> FundamentalSeries:
    """TVP Taylor fundamental: ``z_t`` is the posterior-mean fitted differential."""
    y, X = regressors.rows(start, end)
    draws = run_gibbs(y.to_numpy(), X.to_numpy(), prior, config)
    phi = draws.posterior_mean_states
    z = pd.Series(np.einsum("tk,tk->t", X.to_numpy(), phi), index=X.index)
    spec = spec or FundamentalSpec(regressors.variant, "tvp_bayes")
    return _fundamental(z, s, spec, phi=pd.DataFrame(phi, index=X.index, columns=X.columns),
                        draws=draws)


def simple_fundamental(kind: str, home: pd.DataFrame, base: pd.DataFrame) -> FundamentalSeries:
    """Monetary, PPP or UIRP fundamental from the identities."""
    needed = {"MM": ("m", "y"), "PPP": ("p",), "UIRP": ("i",)}
    if kind not in needed:
        raise ValueError(f"unknown simple fundamental {kind!r}")
    for col in needed[kind] + ("s",):
        if col not in home or home[col].isna().all():
            raise CapabilityError(f"{kind} needs series '{col}'")
    s = home["s"]
    if kind == "MM":
        omega = (home["m"] - base["m"]) - (home["y"] - base["y"])
    elif kind == "PPP":
        omega = home["p"] - base["p"]
    else:
        omega = (home["i"] - base["i"]) + s
    z = omega - s
    if kind == "UIRP":
        # exact: avoids (x + s) - s rounding
        z = home["i"] - base["i"]
    return FundamentalSeries(omega.rename("omega"), z.rename("z"), FundamentalSpec(kind))


def extract_factors(s_panel: pd.DataFrame, r: int) -> FactorModel:
    """Principal-component factors of a ``T x N`` log exchange-rate panel.

    Each column is demeaned over the sample.  ``factors = U_r S_r`` and
    ``loadings = V_r``, so loadings are also the regression coefficients of
    each currency on the factors.  Each loading vector is signed to have a
    non-negative sum.
    """
    if s_panel.isna().any().any():
        raise DataError("factor panel has missing values")
    T, N = s_panel.shape
    if not 1 <= r <= min(N, T):
        raise ValueError(f"r must be in 1..{min(N, T)}, got {r}")
    means = s_panel.mean()
    Xc = (s_panel - means).to_numpy()
    U, S, Vt = np.linalg.svd(Xc, full_matrices=False)
    tol = S.max() * max(T, N) * np.finfo(float).eps if len(S) else 0.0
    rank = int((S > tol).sum())
    if r > rank:
        raise SingularDesignError(f"requested {r} factors but the demeaned panel has rank {rank}")
    F = U[:, :r] * S[:r]
    L = Vt[:r].T.copy()
    flip = np.where(L.sum(axis=0) < 0, -1.0, 1.0)
    F *= flip
    L *= flip
    names = [f"f{j + 1}" for j in range(r)]
    total = (S ** 2).sum()
    explained = (S[:r] ** 2) / total if total > 0 else np.zeros(r)
    return FactorModel(
        factors=pd.DataFrame(F, index=s_panel.index, columns=names),
        loadings=pd.DataFrame(L, index=s_panel.columns, columns=names),
        means=means,
        explained=explained,
    )


def factor_fundamental(fm: FactorModel, currency, s: pd.Series) -> FundamentalSeries:
    """``Omega_i = sum_r loading_{r,i} f_r + mean_i`` for one currency."""
    if isinstance(currency, (int, np.integer)):
        currency = fm.loadings.index[currency]
    if currency not in fm.loadings.index:
        raise KeyError(f"currency {currency!r} not in factor model")
    omega = fm.factors @ fm.loadings.loc[currency] + fm.means[currency]
    s = s.reindex(omega.index)
    spec = FundamentalSpec("Factor", r=fm.factors.shape[1])
    return FundamentalSeries(omega.rename("omega"), (omega - s).rename("z"), spec)
