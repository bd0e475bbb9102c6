"""Linear Gaussian state space with random-walk states.

Observation::

    y_t = H_t beta_t + e_t,        e_t ~ N(0, R)
    beta_t = beta_{t-1} + v_t,     v_t ~ N(0, Q)

``y_t`` is scalar; ``beta_t`` has ``k`` elements.  The inner loops are
compiled with numba because the Gibbs sampler calls them thousands of times
per chain.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import NumericalError

JITTER = 1e-12
JITTER_ESCALATIONS = 3
JITTER_GROWTH = 10.0
# relative tolerance for treating a Cholesky pivot as an exact zero
PIVOT_RTOL = 1e-10


@dataclass
class StateSpaceModel:
    y: np.ndarray   # (T,)
    H: np.ndarray   # (T, k)
    R: float
    Q: np.ndarray   # (k, k)

    def __post_init__(self):
        self.y = np.ascontiguousarray(self.y, dtype=float)
        self.H = np.ascontiguousarray(np.atleast_2d(self.H), dtype=float)
        if self.H.shape[0] != len(self.y) and self.H.shape[1] == len(self.y):
            self.H = np.ascontiguousarray(self.H.T)
        self.Q = np.ascontiguousarray(np.atleast_2d(self.Q), dtype=float)
        self.R = float(self.R)
        T, k = self.H.shape
        if len(self.y) != T:
            raise ValueError(f"y has {len(self.y)} rows, H has {T}")
        if self.Q.shape != (k, k):
            raise ValueError(f"Q must be {k}x{k}, got {self.Q.shape}")
        if self.R < 0:
            raise ValueError("R must be non-negative")
        if not np.allclose(self.Q, self.Q.T, atol=1e-12, rtol=0):
            raise ValueError("Q must be symmetric")

    @property
    def T(self) -> int:
        return self.H.shape[0]

    @property
    def k(self) -> int:
        return self.H.shape[1]


@dataclass
class InitialCondition:
    beta0: np.ndarray
    P0: np.ndarray

    def __post_init__(self):
        self.beta0 = np.ascontiguousarray(np.atleast_1d(self.beta0), dtype=float)
        self.P0 = np.ascontiguousarray(np.atleast_2d(self.P0), dtype=float)
        if self.P0.shape != (len(self.beta0),) * 2:
            raise ValueError("P0 shape does not match beta0")
        if not np.allclose(self.P0, self.P0.T, atol=1e-12, rtol=0):
            raise ValueError("P0 must be symmetric")


@dataclass
class FilterOutput:
    beta_pred: np.ndarray   # (T, k)  beta_{t|t-1}
    P_pred: np.ndarray      # (T, k, k)
    beta_filt: np.ndarray   # (T, k)  beta_{t|t}
    P_filt: np.ndarray      # (T, k, k)
    innovations: np.ndarray  # (T,)
    innovation_var: np.ndarray  # (T,)


# -- compiled kernels -------------------------------------------------------

@numba.njit(cache=True)
def _chol_psd(A, L, tol):
    """Lower Cholesky factor of a PSD matrix, zero pivots allowed.

    Pivots in [-tol, tol] zero their column.  Returns False on a pivot below
    -tol (the matrix is not PSD to working precision).
    """
    k = A.shape[0]
    for i in range(k):
        for j in range(k):
            L[i, j] = 0.0
    for j in range(k):
        d = A[j, j]
        for m in range(j):
            d -= L[j, m] * L[j, m]
        if d > tol:
            ljj = np.sqrt(d)
            L[j, j] = ljj
            for i in range(j + 1, k):
                s = A[i, j]
                for m in range(j):
                    s -= L[i, m] * L[j, m]
                L[i, j] = s / ljj
        elif d < -tol:
            return False
    return True


@numba.njit(cache=True)
def _chol_jitter(A, L, scale):
    """Cholesky with the diagonal-jitter escalation policy.

    ``scale`` is a magnitude for the matrix (e.g. its trace / k); it sets both
    the zero-pivot tolerance and the first jitter size.
    """
    k = A.shape[0]
    tol = PIVOT_RTOL * scale
    if _chol_psd(A, L, tol):
        return True
    tr = 0.0
    for i in range(k):
        tr += A[i, i]
    jitter = JITTER * max(abs(tr) / k, scale)
    B = A.copy()
    for _ in range(JITTER_ESCALATIONS):
        for i in range(k):
            B[i, i] = A[i, i] + jitter
        if _chol_psd(B, L, tol):
            return True
        jitter *= JITTER_GROWTH
    return False


@numba.njit(cache=True)
def _kalman(y, H, R, Q, beta0, P0, beta_pred, P_pred, beta_filt, P_filt, innov, fvar):
    """Forward pass.  Returns -1 on success or the failing time index."""
    T, k = H.shape
    b = beta0.copy()
    P = P0.copy()
    PH = np.empty(k)
    for t in range(T):
        # predict: F = I, mu = 0
        for i in range(k):
            beta_pred[t, i] = b[i]
            for j in range(k):
                P_pred[t, i, j] = P[i, j] + Q[i, j]
        n = y[t]
        for i in range(k):
            n -= H[t, i] * b[i]
        f = R
        for i in range(k):
            s = 0.0
            for j in range(k):
                s += P_pred[t, i, j] * H[t, j]
            PH[i] = s
            f += H[t, i] * s
        innov[t] = n
        fvar[t] = f
        if not f > 0.0:
            return t
        for i in range(k):
            b[i] = beta_pred[t, i] + PH[i] * n / f
        for i in range(k):
            for j in range(k):
                P[i, j] = P_pred[t, i, j] - PH[i] * PH[j] / f
        for i in range(k):
            for j in range(i + 1, k):
                s = 0.5 * (P[i, j] + P[j, i])
                P[i, j] = s
                P[j, i] = s
        for i in range(k):
            beta_filt[t, i] = b[i]
            for j in range(k):
                P_filt[t, i, j] = P[i, j]
    return -1


@numba.njit(cache=True)
def _solve_spd(A, B):
    """Solve A X = B for symmetric positive definite A (small k)."""
    k = A.shape[0]
    L = np.zeros((k, k))
    tr = 0.0
    for i in range(k):
        tr += A[i, i]
    if not _chol_jitter(A, L, max(tr / k, 1e-300)):
        return B * np.nan
    X = B.copy()
    m = B.shape[1]
    for c in range(m):
        for i in range(k):
            s = X[i, c]
            for j in range(i):
                s -= L[i, j] * X[j, c]
            X[i, c] = s / L[i, i] if L[i, i] != 0.0 else 0.0
        for i in range(k - 1, -1, -1):
            s = X[i, c]
            for j in range(i + 1, k):
                s -= L[j, i] * X[j, c]
            X[i, c] = s / L[i, i] if L[i, i] != 0.0 else 0.0
    return X


@numba.njit(cache=True)
def _backward(beta_filt, P_filt, Q, eps, out):
    """Carter-Kohn backward sampling.  Returns -1 or the failing time index."""
    T, k = beta_filt.shape
    L = np.empty((k, k))
    cov = np.empty((k, k))
    mean = np.empty(k)

    P = P_filt[T - 1]
    tr = 0.0
    for i in range(k):
        tr += P[i, i]
    if not _chol_jitter(P, L, max(tr / k, 0.0)):
        return T - 1
    for i in range(k):
        s = beta_filt[T - 1, i]
        for j in range(i + 1):
            s += L[i, j] * eps[T - 1, j]
        out[T - 1, i] = s

    zero_q = True
    for i in range(k):
        for j in range(k):
            if Q[i, j] != 0.0:
                zero_q = False

    for t in range(T - 2, -1, -1):
        P = P_filt[t]
        tr = 0.0
        for i in range(k):
            tr += P[i, i]
        if zero_q:
            # gain P (P + 0)^-1 = I: the state is pinned to the next draw
            for i in range(k):
                out[t, i] = out[t + 1, i]
            continue
        # G = P (P + Q)^-1, computed as ((P + Q)^-1 P)' since both symmetric
        M = P + Q
        G = _solve_spd(M, P.copy()).T
        if np.isnan(G[0, 0]):
            return t
        for i in range(k):
            s = beta_filt[t, i]
            for j in range(k):
                s += G[i, j] * (out[t + 1, j] - beta_filt[t, j])
            mean[i] = s
        for i in range(k):
            for j in range(k):
                s = P[i, j]
                for m in range(k):
                    s -= G[i, m] * P[m, j]
                cov[i, j] = s
        for i in range(k):
            for j in range(i + 1, k):
                s = 0.5 * (cov[i, j] + cov[j, i])
                cov[i, j] = s
                cov[j, i] = s
        if not _chol_jitter(cov, L, max(tr / k, 0.0)):
            return t
        for i in range(k):
            s = mean[i]
            for j in range(i + 1):
                s += L[i, j] * eps[t, j]
            out[t, i] = s
    return -1


# -- public API -------------------------------------------------------------

def kalman_filter(model: StateSpaceModel, init: InitialCondition) -> FilterOutput:
    T, k = model.T, model.k
    if len(init.beta0) != k:
        raise ValueError(f"initial state has {len(init.beta0)} elements, model has {k}")
    out = FilterOutput(
        beta_pred=np.empty((T, k)),
        P_pred=np.empty((T, k, k)),
        beta_filt=np.empty((T, k)),
        P_filt=np.empty((T, k, k)),
        innovations=np.empty(T),
        innovation_var=np.empty(T),
    )
    fail = _kalman(model.y, model.H, model.R, model.Q, init.beta0, init.P0,
                   out.beta_pred, out.P_pred, out.beta_filt, out.P_filt,
                   out.innovations, out.innovation_var)
    if fail >= 0:
        raise NumericalError(
            f"innovation variance {out.innovation_var[fail]!r} is not positive at t={fail}",
            t=int(fail),
        )
    return out


def carter_kohn_draw(
    model: StateSpaceModel,
    init: InitialCondition,
    filt: FilterOutput,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw a state path ``beta_{1..T}`` (shape ``(T, k)``) from p(beta | y, R, Q).

    ``beta_T`` is drawn from the last filtered moments; earlier states from
    the backward conditionals with gain ``P_{t|t} (P_{t|t} + Q)^{-1}``.
    """
    T, k = filt.beta_filt.shape
    eps = rng.standard_normal((T, k))
    out = np.empty((T, k))
    fail = _backward(filt.beta_filt, filt.P_filt, model.Q, eps, out)
    if fail >= 0:
        raise NumericalError(f"backward sampling covariance not PSD at t={fail}", t=int(fail))
    return out


def simulate(
    H: np.ndarray,
    R: float,
    Q: np.ndarray,
    beta0: np.ndarray,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate ``(y, beta)`` from the random-walk-coefficient model."""
    H = np.atleast_2d(H)
    T, k = H.shape
    Q = np.atleast_2d(Q)
    w, v = np.linalg.eigh(Q)
    root = v * np.sqrt(np.clip(w, 0.0, None))
    steps = rng.standard_normal((T, k)) @ root.T
    beta = np.asarray(beta0, dtype=float) + np.cumsum(steps, axis=0)
    y = np.einsum("tk,tk->t", H, beta) + np.sqrt(R) * rng.standard_normal(T)
    return y, beta
