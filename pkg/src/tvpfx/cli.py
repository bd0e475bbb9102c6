"""Command-line pipeline: ingest, fundamentals, forecast, evaluate, report.

Each stage reads the previous stage's directory under ``--out``::

    panel/          transformed series, one CSV per country
    fundamentals/   full-sample Omega and z per model and country
    forecasts/      forecasts.csv
    eval/           cells.csv, summary.csv, recursive_u.csv
    report.txt

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numerical error.
A ``FAILED`` file is left in the output directory when a stage fails.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import pandas as pd

from . import dataio, evaluation
from . import fundamentals as fmod
from . import forecasting as fc
from .config import RunConfig, load_config
from .errors import ConfigError, TvpfxError
from .gibbs import convergence_report

logger = logging.getLogger("tvpfx")

STAGES = ("ingest", "fundamentals", "forecast", "evaluate", "report")
SENTINEL = "FAILED"


def ingest(cfg: RunConfig) -> Path:
    raw = dataio.load_panel(cfg.files, cfg.base_country, cfg.schema)
    eur = None
    if cfg.transforms.euro_factors:
        if cfg.eur_rate is None:
            raise ConfigError("euro_conversion is on but data.eur_rate is not set")
        eur = dataio.load_series_csv(cfg.eur_rate)
    panel = dataio.build_panel(raw, cfg.base_country, cfg.transforms, eur)
    return panel.write(cfg.out / "panel")


def _panel(cfg: RunConfig) -> dataio.SeriesPanel:
    d = cfg.out / "panel"
    if not (d / "manifest.json").exists():
        raise ConfigError(f"{d} has no panel; run the ingest stage first")
    return dataio.SeriesPanel.read(d)


def _currencies(cfg: RunConfig) -> list:
    out = []
    for w in cfg.windows:
        for c in fc._expand(w.currencies, cfg.harness):
            if c not in out:
                out.append(c)
    return out


def fundamentals_stage(cfg: RunConfig) -> Path:
    """Fundamentals over the whole in-sample span, for inspection.

    Forecasts do not read these; the harness re-estimates at every origin.
    """
    panel = _panel(cfg)
    d = cfg.out / "fundamentals"
    d.mkdir(parents=True, exist_ok=True)
    start = fc.quarter(cfg.harness.in_sample_start)
    end = panel.index[-1]
    diagnostics = {}
    seen = set()
    for model in cfg.models:
        spec = model.fundamental
        if (spec, model.approach == "tvp") in seen:
            continue
        seen.add((spec, model.approach == "tvp"))
        builder = fc.FundamentalBuilder(model, panel, cfg.harness)
        currencies = [c for c in _currencies(cfg) if c in panel.frames]
        if spec.kind in fmod.TAYLOR_KINDS and model.approach == "tvp":
            for c in currencies:
                seed = fc.derive_seed(cfg.seed, "fundamental", model.id, c)
                fs = fmod.taylor_fundamental_tvp(
                    builder._taylor(c, end), panel[c]["s"], builder.taylor_prior(c),
                    cfg.harness.gibbs(seed), start, end)
                diagnostics[f"{model.id}/{c}"] = convergence_report(fs.meta["draws"])
                fs.meta["phi"].to_csv(d / f"{model.id}_{c}_phi.csv", float_format="%.17g")
                _write_fundamental(fs, d / f"{model.id}_{c}.csv")
        else:
            zs = builder.z(currencies, start, end)
            name = spec.id if spec.kind not in fmod.TAYLOR_KINDS else model.id
            for c in currencies:
                s = panel[c]["s"].reindex(zs[c].index)
                fs = fmod.FundamentalSeries((zs[c] + s).rename("omega"), zs[c], spec)
                _write_fundamental(fs, d / f"{name}_{c}.csv")
    if diagnostics:
        (d / "convergence.json").write_text(json.dumps(diagnostics, indent=2, sort_keys=True) + "\n")
    return d


def _write_fundamental(fs: fmod.FundamentalSeries, path: Path) -> None:
    frame = fs.to_frame()
    frame.index = frame.index.astype(str)
    frame.index.name = "date"
    frame.to_csv(path, float_format="%.17g")


def forecast_stage(cfg: RunConfig) -> Path:
    panel = _panel(cfg)
    missing = [c for c in _currencies(cfg) if c not in panel.frames]
    if missing:
        raise ConfigError(f"currencies not in the data: {', '.join(missing)}")
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            records = fc.run_harness(cfg.models, cfg.windows, cfg.horizons, panel, cfg.harness,
                                     executor=pool)
    else:
        records = fc.run_harness(cfg.models, cfg.windows, cfg.horizons, panel, cfg.harness)
    return fc.write_records(records, cfg.out / "forecasts" / "forecasts.csv")


def evaluate_stage(cfg: RunConfig) -> Path:
    path = cfg.out / "forecasts" / "forecasts.csv"
    if not path.exists():
        raise ConfigError(f"{path} not found; run the forecast stage first")
    records = fc.read_records(path)
    cells = evaluation.evaluate_records(records, cfg.dm_bandwidth)
    summaries = evaluation.summarize(cells, cfg.dm_threshold)
    return evaluation.write_eval(cells, summaries, cfg.out / "eval", records)


def report_stage(cfg: RunConfig) -> Path:
    path = cfg.out / "eval" / "summary.csv"
    if not path.exists():
        raise ConfigError(f"{path} not found; run the evaluate stage first")
    frame = pd.read_csv(path, dtype={"window": str, "model": str},
                        float_precision="round_trip")
    summaries = [evaluation.WindowSummary(**row) for row in frame.to_dict("records")]
    out = cfg.out / "report.txt"
    out.write_text(evaluation.format_report(summaries))
    return out


STAGE_FUNCS = {
    "ingest": ingest,
    "fundamentals": fundamentals_stage,
    "forecast": forecast_stage,
    "evaluate": evaluate_stage,
    "report": report_stage,
}


def run_pipeline(cfg: RunConfig, stages=STAGES) -> int:
    """Run the given stages; return the process exit code."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    sentinel = cfg.out / SENTINEL
    if sentinel.exists():
        sentinel.unlink()
    stage = None
    try:
        for stage in stages:
            logger.info("stage %s", stage)
            STAGE_FUNCS[stage](cfg)
    except TvpfxError as exc:
        module = type(exc).__module__.rsplit(".", 1)[-1]
        msg = f"{stage}: {type(exc).__name__}: {exc}"
        logger.error(msg)
        print(f"error [{module}] {msg}", file=sys.stderr)
        sentinel.write_text(msg + "\n")
        return exc.exit_code
    except Exception as exc:
        sentinel.write_text(f"{stage}: {type(exc).__name__}: {exc}\n")
        raise
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tvpfx", description=__doc__.split("\n")[0])
    p.add_argument("command", choices=STAGES + ("all",))
    p.add_argument("--config", default=os.environ.get("TVPFX_CONFIG"),
                   help="YAML run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, help="worker processes for forecast cells")
    p.add_argument("--out", help="artifact directory")
    p.add_argument("--dump-draws", action="store_true",
                   help="save posterior draws of every TVP forecast")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.out is not None:
        overrides["out"] = str(Path(args.out).resolve())
    if args.dump_draws:
        overrides["dump_draws"] = True
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"error [config] {exc}", file=sys.stderr)
        return exc.exit_code
    stages = STAGES if args.command == "all" else (args.command,)
    return run_pipeline(cfg, stages)


if __name__ == "__main__":
    sys.exit(main())
