"""Gibbs sampler for random-walk time-varying-parameter regressions.

Priors come from an OLS fit on a training sample:

* initial state ``beta0 = b_OLS`` with covariance ``P0 = s2 (H0'H0)^{-1}``,
* ``R ~ IG`` with scale ``R0 = s2`` and ``T0 - k`` degrees of freedom,
* ``Q ~ IW(Q0, T0)`` with ``Q0 = P0 * T0 * tau``.

Each sweep draws the state path (Carter-Kohn), then ``R``, then ``Q``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

from . import statespace as ss
from .errors import (
    DegenerateTrainingError,
    InsufficientDataError,
    NumericalError,
    SingularDesignError,
    UndefinedDiagnosticError,
)

logger = logging.getLogger(__name__)

DEFAULT_TAU = 3.5e-6
DEFAULT_DRAWS = 1700
DEFAULT_BURN_IN = 300


@dataclass
class PriorSpec:
    beta0: np.ndarray
    P0: np.ndarray
    R0: float
    R_dof: int
    Q0: np.ndarray
    Q_dof: int
    tau: float

    @property
    def k(self) -> int:
        return len(self.beta0)

    @property
    def init(self) -> ss.InitialCondition:
        return ss.InitialCondition(self.beta0, self.P0)


@dataclass
class GibbsConfig:
    total_draws: int = DEFAULT_DRAWS
    burn_in: int = DEFAULT_BURN_IN
    seed: int = 0
    diag_q: bool = False
    sample_q: bool = True

    def __post_init__(self):
        if not 0 <= self.burn_in < self.total_draws:
            raise ValueError("burn_in must be in [0, total_draws)")

    @property
    def retained(self) -> int:
        return self.total_draws - self.burn_in


@dataclass
class PosteriorDraws:
    states: np.ndarray    # (D, T, k)
    R_draws: np.ndarray   # (D,)
    Q_draws: np.ndarray   # (D, k, k)

    @property
    def posterior_mean_states(self) -> np.ndarray:
        return self.states.mean(axis=0)

    @property
    def n_draws(self) -> int:
        return len(self.R_draws)

    def save(self, path) -> Path:
        path = Path(path)
        np.savez_compressed(path, states=self.states, R=self.R_draws, Q=self.Q_draws)
        return path


def ols(y: np.ndarray, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Return ``(coef, (X'X)^{-1}, rss)``; raises on a rank-deficient design."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] != len(y):
        X = X.T
    n, k = X.shape
    if np.linalg.matrix_rank(X) < k:
        raise SingularDesignError(f"design matrix ({n}x{k}) is rank deficient")
    XtX_inv = np.linalg.inv(X.T @ X)
    coef = XtX_inv @ (X.T @ y)
    resid = y - X @ coef
    return coef, XtX_inv, float(resid @ resid)


def parameterize_priors(
    y0: np.ndarray,
    H0: np.ndarray,
    tau: float = DEFAULT_TAU,
    horizon: int = 0,
) -> PriorSpec:
    """Build a :class:`PriorSpec` from training-sample OLS.

    ``y0``/``H0`` are the usable training pairs, i.e. already shortened by
    ``horizon`` for direct h-step regressions; ``T0 = len(y0)`` sets every
    degree of freedom.
    """
    y0 = np.asarray(y0, dtype=float)
    H0 = np.atleast_2d(np.asarray(H0, dtype=float))
    if H0.shape[0] != len(y0):
        H0 = H0.T
    T0, k = H0.shape
    if T0 < k + 2:
        raise InsufficientDataError(
            f"training sample has {T0} usable observations (horizon {horizon}), "
            f"needs at least {k + 2}; short by {k + 2 - T0}"
        )
    coef, XtX_inv, rss = ols(y0, H0)
    sigma2 = rss / (T0 - k)
    # exact fits leave only rounding residue
    if not rss > 1e-24 * max(float(y0 @ y0), 1e-300):
        raise DegenerateTrainingError("training regression fits exactly; residual variance is zero")
    P0 = sigma2 * XtX_inv
    P0 = 0.5 * (P0 + P0.T)
    return PriorSpec(
        beta0=coef,
        P0=P0,
        R0=sigma2,
        R_dof=T0 - k,
        Q0=P0 * T0 * tau,
        Q_dof=T0,
        tau=tau,
    )


def draw_R(y, H, beta_path, prior: PriorSpec, rng: np.random.Generator) -> float:
    """Inverse-gamma draw of the measurement variance given a state path."""
    y = np.asarray(y, dtype=float)
    beta_path = np.atleast_2d(beta_path)
    if beta_path.shape[0] != len(y):
        raise ValueError(f"state path has {beta_path.shape[0]} rows, y has {len(y)}")
    resid = y - np.einsum("tk,tk->t", np.atleast_2d(H), beta_path)
    theta1 = prior.R0 + float(resid @ resid)
    if not theta1 > 0:
        raise NumericalError("inverse-gamma scale is zero: perfect fit with R0 = 0")
    shape = 0.5 * (prior.R_dof + len(y))
    return 0.5 * theta1 / rng.gamma(shape)


def psd_cholesky(A: np.ndarray) -> np.ndarray:
    A = np.ascontiguousarray(A, dtype=float)
    L = np.empty_like(A)
    scale = max(np.trace(A) / len(A), 0.0)
    if not ss._chol_jitter(A, L, scale):
        raise NumericalError("matrix is not positive semidefinite after jitter")
    return L


def sample_inverse_wishart(scale: np.ndarray, dof: float, rng: np.random.Generator) -> np.ndarray:
    """Draw from IW(scale, dof) via the Bartlett decomposition of Wishart(dof, scale^{-1})."""
    scale = np.atleast_2d(scale)
    k = scale.shape[0]
    if dof <= k - 1:
        raise ValueError(f"inverse-Wishart needs dof > {k - 1}, got {dof}")
    prec = np.linalg.inv(scale)
    L = psd_cholesky(0.5 * (prec + prec.T))
    if np.any(np.diag(L) == 0):
        raise NumericalError("inverse-Wishart scale matrix is singular")
    A = np.zeros((k, k))
    A[np.diag_indices(k)] = np.sqrt(rng.chisquare(dof - np.arange(k)))
    rows, cols = np.tril_indices(k, -1)
    A[rows, cols] = rng.standard_normal(len(rows))
    M = L @ A  # W = M M'
    Minv = solve_triangular(M, np.eye(k), lower=True)
    Q = Minv.T @ Minv
    return 0.5 * (Q + Q.T)


def draw_Q(beta_path, prior: PriorSpec, rng: np.random.Generator, diag: bool = False) -> np.ndarray:
    """Inverse-Wishart draw of the state innovation covariance."""
    beta_path = np.atleast_2d(beta_path)
    T = beta_path.shape[0]
    if T < 2:
        raise InsufficientDataError("state path needs at least 2 periods to draw Q")
    d = np.diff(beta_path, axis=0)
    Qbar = prior.Q0 + d.T @ d
    Q = sample_inverse_wishart(Qbar, T + prior.Q_dof, rng)
    if diag:
        Q = np.diag(np.diag(Q))
    return Q


def run_gibbs(y, H, prior: PriorSpec, config: Optional[GibbsConfig] = None) -> PosteriorDraws:
    """Run one chain and return the post-burn-in draws."""
    config = config or GibbsConfig()
    y = np.ascontiguousarray(y, dtype=float)
    H = np.ascontiguousarray(np.atleast_2d(H), dtype=float)
    if H.shape[0] != len(y):
        raise ValueError(f"H has {H.shape[0]} rows, y has {len(y)}")
    T, k = H.shape
    if prior.k != k:
        raise ValueError(f"prior has {prior.k} coefficients, H has {k} columns")
    rng = np.random.default_rng(config.seed)

    D = config.retained
    states = np.empty((D, T, k))
    R_draws = np.empty(D)
    Q_draws = np.empty((D, k, k))

    beta_pred = np.empty((T, k))
    P_pred = np.empty((T, k, k))
    beta_filt = np.empty((T, k))
    P_filt = np.empty((T, k, k))
    innov = np.empty(T)
    fvar = np.empty(T)
    path = np.empty((T, k))

    R = float(prior.R0)
    Q = np.array(prior.Q0, dtype=float)
    for it in range(config.total_draws):
        fail = ss._kalman(y, H, R, Q, prior.beta0, prior.P0, beta_pred, P_pred,
                          beta_filt, P_filt, innov, fvar)
        if fail >= 0:
            raise NumericalError(f"innovation variance not positive at t={fail}, iteration {it}",
                                 t=int(fail), iteration=it)
        eps = rng.standard_normal((T, k))
        fail = ss._backward(beta_filt, P_filt, Q, eps, path)
        if fail >= 0:
            raise NumericalError(f"backward sampling failed at t={fail}, iteration {it}",
                                 t=int(fail), iteration=it)
        try:
            R = draw_R(y, H, path, prior, rng)
            if config.sample_q:
                Q = draw_Q(path, prior, rng, diag=config.diag_q)
        except NumericalError as exc:
            exc.iteration = it
            raise
        j = it - config.burn_in
        if j >= 0:
            states[j] = path
            R_draws[j] = R
            Q_draws[j] = Q
    return PosteriorDraws(states, R_draws, Q_draws)


# -- convergence diagnostics ------------------------------------------------

def spectral_density_zero(x: np.ndarray, taper: float = 0.04) -> float:
    """Bartlett-window estimate of the spectral density at frequency zero.

    The window spans ``taper * len(x)`` lags (at least one).
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    L = max(1, int(round(taper * n)))
    L = min(L, n - 1)
    xc = x - x.mean()
    s0 = xc @ xc / n
    for j in range(1, L + 1):
        s0 += 2.0 * (1.0 - j / (L + 1)) * (xc[j:] @ xc[:-j]) / n
    return float(s0)


def numerical_standard_error(x: np.ndarray, taper: float = 0.04) -> float:
    return float(np.sqrt(max(spectral_density_zero(x, taper), 0.0) / len(x)))


def geweke_diagnostic(chain, first: float = 0.1, last: float = 0.5, taper: float = 0.04) -> float:
    """Geweke z-score comparing the early and late parts of a chain."""
    chain = np.asarray(chain, dtype=float)
    n = len(chain)
    if n < 100:
        raise InsufficientDataError(f"Geweke diagnostic needs at least 100 draws, got {n}")
    a = chain[: int(first * n)]
    b = chain[n - int(last * n):]
    var = numerical_standard_error(a, taper) ** 2 + numerical_standard_error(b, taper) ** 2
    if not var > 0:
        raise UndefinedDiagnosticError("chain segments have zero variance")
    return float((a.mean() - b.mean()) / np.sqrt(var))


def relative_numerical_efficiency(chain, taper: float = 0.04) -> float:
    """Sample variance over the spectral variance; 1 for an i.i.d. chain."""
    chain = np.asarray(chain, dtype=float)
    s0 = spectral_density_zero(chain, taper)
    if not s0 > 0:
        raise UndefinedDiagnosticError("chain has zero spectral variance")
    return float(chain.var() / s0)


def convergence_report(draws: PosteriorDraws, taper: float = 0.04) -> dict:
    """Geweke z and RNE for R, diag(Q) and the final-period states."""
    series = {"R": draws.R_draws}
    k = draws.Q_draws.shape[1]
    for i in range(k):
        series[f"Q[{i},{i}]"] = draws.Q_draws[:, i, i]
        series[f"beta_T[{i}]"] = draws.states[:, -1, i]
    out = {}
    for name, x in series.items():
        try:
            out[name] = {"geweke_z": geweke_diagnostic(x, taper=taper),
                         "rne": relative_numerical_efficiency(x, taper)}
        except (UndefinedDiagnosticError, InsufficientDataError):
            out[name] = {"geweke_z": float("nan"), "rne": float("nan")}
    return out
