"""Independent brute-force reference implementations used by the tests."""
import numpy as np
import pandas as pd


def random_psd(rng, k, rank=None, scale=1.0):
    rank = k if rank is None else rank
    A = rng.standard_normal((k, rank))
    return scale * A @ A.T


def joint_state_moments(y, H, R, Q, beta0, P0):
    """Filtered and smoothed state moments by direct Gaussian conditioning.

    Stacks ``(beta_1..beta_T, y_1..y_T)`` with ``beta_0 ~ N(beta0, P0)``,
    ``beta_t = beta_{t-1} + v_t`` and conditions with dense linear algebra.
    """
    T, k = H.shape
    n = T * k
    cov_b = np.zeros((n, n))
    for t in range(T):
        for s in range(T):
            cov_b[t * k:(t + 1) * k, s * k:(s + 1) * k] = P0 + (min(t, s) + 1) * Q
    mean_b = np.tile(beta0, T)
    G = np.zeros((T, n))
    for t in range(T):
        G[t, t * k:(t + 1) * k] = H[t]
    cov_y = G @ cov_b @ G.T + R * np.eye(T)
    cov_by = cov_b @ G.T
    mean_y = G @ mean_b

    def condition(idx_y):
        Syy = cov_y[np.ix_(idx_y, idx_y)]
        Sby = cov_by[:, idx_y]
        K = Sby @ np.linalg.inv(Syy)
        m = mean_b + K @ (y[idx_y] - mean_y[idx_y])
        C = cov_b - K @ Sby.T
        return m, C

    filt_m, filt_P = np.empty((T, k)), np.empty((T, k, k))
    for t in range(T):
        m, C = condition(list(range(t + 1)))
        filt_m[t] = m[t * k:(t + 1) * k]
        filt_P[t] = C[t * k:(t + 1) * k, t * k:(t + 1) * k]
    m, C = condition(list(range(T)))
    smooth_m = m.reshape(T, k)
    smooth_P = np.array([C[t * k:(t + 1) * k, t * k:(t + 1) * k] for t in range(T)])
    return filt_m, filt_P, smooth_m, smooth_P


def bartlett_lrv_double_sum(d, bandwidth):
    """``(1/n) sum_i sum_j w(|i-j|) dc_i dc_j`` with Bartlett weights."""
    d = np.asarray(d, dtype=float)
    n = len(d)
    dc = d - d.mean()
    total = 0.0
    for i in range(n):
        for j in range(n):
            lag = abs(i - j)
            if lag <= bandwidth:
                total += (1.0 - lag / (bandwidth + 1)) * dc[i] * dc[j]
    return total / n


def hp_trend_dense(x, lamb):
    n = len(x)
    K = np.zeros((n - 2, n))
    for i in range(n - 2):
        K[i, i:i + 3] = (1.0, -2.0, 1.0)
    return np.linalg.solve(np.eye(n) + lamb * K.T @ K, x)


def within_slope(y, z, groups):
    """Slope of group-demeaned y on group-demeaned z."""
    y, z, groups = map(np.asarray, (y, z, groups))
    yd, zd = y.astype(float).copy(), z.astype(float).copy()
    for g in np.unique(groups):
        m = groups == g
        yd[m] -= y[m].mean()
        zd[m] -= z[m].mean()
    return float(zd @ yd / (zd @ zd))


def quarterly(values, start="2000Q1", name=None):
    idx = pd.period_range(start, periods=len(values), freq="Q-DEC")
    return pd.Series(np.asarray(values, dtype=float), index=idx, name=name)
