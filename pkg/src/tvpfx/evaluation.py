"""Forecast evaluation against the driftless random walk.

Theil's U is the ratio of model to random-walk RMSFE.  The Diebold-Mariano
statistic uses squared-error loss differentials ``d = e_rw^2 - e_model^2``
(positive favours the model) with a Newey-West long-run variance.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd

from .errors import AggregationError, NumericalError
from .forecasting import ForecastRecord

logger = logging.getLogger(__name__)

DM_THRESHOLD = 1.282
DM_MIN_RECORDS = 8


class UndefinedBenchmarkError(NumericalError):
    """The random walk has zero RMSFE, so U is undefined."""


@dataclass(frozen=True)
class EvalCell:
    currency: str
    model: str
    window: str
    horizon: int
    U: float
    DM: float          # NaN when unavailable
    n_forecasts: int
    rmsfe: float
    rmsfe_rw: float


@dataclass(frozen=True)
class WindowSummary:
    model: str
    window: str
    horizon: int
    n_cells: int
    n_U_lt_1: int
    n_DM_gt_threshold: int
    median_U: float
    threshold: float = DM_THRESHOLD

    @property
    def marker(self) -> str:
        return "[‡]" if self.median_U <= 1.0 else ""


def _errors(records: Sequence[ForecastRecord]) -> tuple[np.ndarray, np.ndarray]:
    e = np.array([r.realized - r.predicted for r in records], dtype=float)
    e_rw = np.array([r.realized - r.rw_predicted for r in records], dtype=float)
    return e, e_rw


def rmsfe(errors) -> float:
    errors = np.asarray(errors, dtype=float)
    return float(np.sqrt(np.mean(errors ** 2)))


def theil_u(records: Sequence[ForecastRecord]) -> float:
    """``RMSFE_model / RMSFE_rw`` over the given records.

    Euro records (one per member and origin) are pooled before the root.
    """
    if not len(records):
        raise ValueError("theil_u needs at least one record")
    e, e_rw = _errors(records)
    denom = rmsfe(e_rw)
    if not denom > 0:
        raise UndefinedBenchmarkError("random-walk RMSFE is zero (all realized changes are 0)")
    return rmsfe(e) / denom


def newey_west_lrv(d: np.ndarray, bandwidth: int) -> float:
    """Bartlett-kernel long-run variance with weights ``1 - j/(L+1)``."""
    d = np.asarray(d, dtype=float)
    n = len(d)
    dc = d - d.mean()
    lrv = dc @ dc / n
    for j in range(1, min(bandwidth, n - 1) + 1):
        lrv += 2.0 * (1.0 - j / (bandwidth + 1)) * (dc[j:] @ dc[:-j]) / n
    return float(lrv)


def dm_statistic(d: np.ndarray, bandwidth: int) -> float:
    """``mean(d) / sqrt(LRV / T)``; 0 when ``d`` is identically zero.

    Returns NaN (with a warning) if the long-run variance is not positive.
    """
    d = np.asarray(d, dtype=float)
    dbar = d.mean()
    lrv = newey_west_lrv(d, bandwidth)
    if lrv <= 0:
        if dbar == 0 and lrv == 0:
            return 0.0
        logger.warning("DM long-run variance %.3g is not positive; statistic unavailable", lrv)
        return float("nan")
    return float(dbar / np.sqrt(lrv / len(d)))


def loss_differentials(records: Sequence[ForecastRecord]) -> np.ndarray:
    """Per-origin ``d_t``, averaging over Euro members at a shared origin."""
    by_origin: dict = {}
    for r in records:
        d = (r.realized - r.rw_predicted) ** 2 - (r.realized - r.predicted) ** 2
        by_origin.setdefault(r.origin, []).append(d)
    return np.array([np.mean(by_origin[o]) for o in sorted(by_origin)])


def dm_test(records: Sequence[ForecastRecord], bandwidth: Optional[int] = None) -> float:
    """Diebold-Mariano statistic for one cell.

    ``bandwidth`` defaults to ``h - 1``.  Cells with fewer than eight origins
    return NaN.
    """
    d = loss_differentials(records)
    if len(d) < DM_MIN_RECORDS:
        return float("nan")
    if bandwidth is None:
        horizons = {r.horizon for r in records}
        if len(horizons) != 1:
            raise ValueError("records mix horizons; pass bandwidth explicitly")
        bandwidth = horizons.pop() - 1
    return dm_statistic(d, bandwidth)


def recursive_u_series(records: Sequence[ForecastRecord]) -> pd.Series:
    """U over the first ``j`` origins, for each ``j``; last value is the full-cell U."""
    origins = sorted({r.origin for r in records})
    by_origin: dict = {}
    for r in records:
        by_origin.setdefault(r.origin, []).append(r)
    sq = np.array([sum((r.realized - r.predicted) ** 2 for r in by_origin[o]) for o in origins])
    sq_rw = np.array([sum((r.realized - r.rw_predicted) ** 2 for r in by_origin[o])
                      for o in origins])
    num, den = np.cumsum(sq), np.cumsum(sq_rw)
    if not den[-1] > 0:
        raise UndefinedBenchmarkError("random-walk RMSFE is zero")
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.sqrt(num / den)
    return pd.Series(u, index=pd.Index(origins, name="origin"), name="U")


def _group(records: Iterable[ForecastRecord]) -> dict:
    cells: dict = {}
    for r in records:
        cells.setdefault((r.model, r.window, r.horizon, r.currency), []).append(r)
    return cells


def evaluate_records(records: Iterable[ForecastRecord], bandwidth: Optional[int] = None) -> list[EvalCell]:
    out = []
    for (model, window, h, currency), recs in sorted(_group(records).items()):
        e, e_rw = _errors(recs)
        bw = h - 1 if bandwidth is None else bandwidth
        out.append(EvalCell(currency, model, window, h, theil_u(recs), dm_test(recs, bw),
                            len({r.origin for r in recs}), rmsfe(e), rmsfe(e_rw)))
    return out


def median(values) -> float:
    v = np.sort(np.asarray(values, dtype=float))
    n = len(v)
    if n == 0:
        raise ValueError("median of an empty set")
    mid = n // 2
    return float(v[mid]) if n % 2 else float(0.5 * (v[mid - 1] + v[mid]))


def summarize_window(cells, threshold: float = DM_THRESHOLD) -> WindowSummary:
    """Count U < 1 and DM > threshold (both strict) and take the median U.

    ``cells`` may be :class:`EvalCell` objects or plain U values.
    """
    cells = list(cells)
    if not cells:
        raise AggregationError("summarize_window got no cells")
    if not isinstance(cells[0], EvalCell):
        cells = [EvalCell(str(j), "", "", 0, float(u), float("nan"), 1, float("nan"),
                          float("nan")) for j, u in enumerate(cells)]
    keys = {(c.model, c.window, c.horizon) for c in cells}
    if len(keys) != 1:
        raise AggregationError(f"cells span several model/window/horizon groups: {sorted(keys)}")
    currencies = [c.currency for c in cells]
    if len(set(currencies)) != len(currencies):
        raise AggregationError("summarize_window needs one cell per currency")
    U = np.array([c.U for c in cells])
    DM = np.array([c.DM for c in cells])
    model, window, h = keys.pop()
    return WindowSummary(
        model=model, window=window, horizon=h, n_cells=len(cells),
        n_U_lt_1=int((U < 1.0).sum()),
        n_DM_gt_threshold=int((np.nan_to_num(DM, nan=-np.inf) > threshold).sum()),
        median_U=median(U), threshold=threshold,
    )


def summarize(cells: Sequence[EvalCell], threshold: float = DM_THRESHOLD) -> list[WindowSummary]:
    groups: dict = {}
    for c in cells:
        groups.setdefault((c.window, c.model, c.horizon), []).append(c)
    return [summarize_window(groups[k], threshold) for k in sorted(groups)]


# -- output -----------------------------------------------------------------

def cells_to_frame(cells: Sequence[EvalCell]) -> pd.DataFrame:
    return pd.DataFrame([asdict(c) for c in cells])


def summaries_to_frame(summaries: Sequence[WindowSummary]) -> pd.DataFrame:
    return pd.DataFrame([asdict(s) for s in summaries])


def write_eval(cells: Sequence[EvalCell], summaries: Sequence[WindowSummary], directory,
               records: Optional[Sequence[ForecastRecord]] = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cells_to_frame(cells).to_csv(directory / "cells.csv", index=False, float_format="%.17g")
    summaries_to_frame(summaries).to_csv(directory / "summary.csv", index=False,
                                         float_format="%.17g")
    if records is not None:
        rows = []
        for (model, window, h, currency), recs in sorted(_group(records).items()):
            u = recursive_u_series(recs)
            rows.extend({"model": model, "window": window, "h": h, "currency": currency,
                         "origin": o, "U": v} for o, v in u.items())
        pd.DataFrame(rows, columns=["model", "window", "h", "currency", "origin", "U"]).to_csv(
            directory / "recursive_u.csv", index=False, float_format="%.17g")
    return directory


def format_report(summaries: Sequence[WindowSummary]) -> str:
    """Aligned text tables, one block per window, one column per model x horizon."""
    lines = []
    windows = sorted({s.window for s in summaries})
    for w in windows:
        group = sorted((s for s in summaries if s.window == w), key=lambda s: (s.model, s.horizon))
        n = group[0].n_cells
        heads = [f"{s.model} h={s.horizon}" for s in group]
        width = max([14] + [len(h) + 2 for h in heads])
        label_w = 20
        lines.append(f"Window {w} (N={n})")
        lines.append(" " * label_w + "".join(h.rjust(width) for h in heads))
        lines.append("No. of U's<1".ljust(label_w)
                     + "".join(str(s.n_U_lt_1).rjust(width) for s in group))
        lines.append(f"No. of DM>{group[0].threshold:g}".ljust(label_w)
                     + "".join(str(s.n_DM_gt_threshold).rjust(width) for s in group))
        lines.append("Median U".ljust(label_w)
                     + "".join(f"{s.median_U:.3f}{(' ' + s.marker) if s.marker else ''}".rjust(width)
                               for s in group))
        lines.append("")
    lines.append("[‡] median U <= 1")
    return "\n".join(lines) + "\n"

