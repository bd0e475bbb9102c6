"""Run configuration: a YAML file, ``TVPFX_*`` environment overrides, CLI flags.

Precedence is file < environment < flags.  An environment variable
``TVPFX_GIBBS__TOTAL_DRAWS=500`` sets ``gibbs.total_draws``; a double
underscore separates nesting levels and values are parsed as YAML scalars.
"""
from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .dataio import EURO_CONVERSION_FACTORS, EURO_CUTOVER, TransformConfig, quarter
from .errors import ConfigError
from .evaluation import DM_THRESHOLD
from .forecasting import (
    EURO_MEMBERS,
    HORIZONS,
    WINDOWS,
    HarnessConfig,
    ModelSpec,
    WindowSpec,
)
from .gibbs import DEFAULT_BURN_IN, DEFAULT_DRAWS, DEFAULT_TAU

ENV_PREFIX = "TVPFX_"

DEFAULTS = {
    "data": {"files": {}, "eur_rate": None, "base_country": "US", "schema": {}},
    "transforms": {"hp_lambda": 1600.0, "hp_mode": "recursive", "inflation_scale": 400.0,
                   "gap_scale": 100.0, "euro_conversion": False, "euro_cutover": EURO_CUTOVER},
    "sample": {"training_start": "1974Q1", "training_end": "1978Q4",
               "in_sample_start": "1979Q1"},
    "windows": ["A", "B", "C"],
    "horizons": list(HORIZONS),
    "models": ["TR_on-tvp"],
    "scheme": "recursive",
    "rolling_length": None,
    "gibbs": {"total_draws": DEFAULT_DRAWS, "burn_in": DEFAULT_BURN_IN, "tau": DEFAULT_TAU,
              "diag_q": False},
    "evaluation": {"dm_threshold": DM_THRESHOLD, "dm_bandwidth": None},
    "euro_members": list(EURO_MEMBERS),
    "seed": None,
    "jobs": 1,
    "out": "run",
    "dump_draws": False,
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out: dict = {}
    for name, value in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX) or name == ENV_PREFIX + "CONFIG":
            continue
        path = name[len(ENV_PREFIX):].lower().split("__")
        node = out
        for part in path[:-1]:
            node = node.setdefault(part, {})
        node[path[-1]] = yaml.safe_load(value)
    return out


@dataclass
class RunConfig:
    files: dict
    base_country: str
    windows: list
    horizons: list
    models: list
    harness: HarnessConfig
    transforms: TransformConfig
    out: Path
    seed: int
    eur_rate: Optional[Path] = None
    schema: dict = field(default_factory=dict)
    jobs: int = 1
    dm_threshold: float = DM_THRESHOLD
    dm_bandwidth: Optional[int] = None
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict, root: Path = Path(".")) -> "RunConfig":
        d = _merge(DEFAULTS, d)
        unknown = set(d) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if d["seed"] is None:
            raise ConfigError("seed is required (config 'seed' or --seed)")

        def path(p):
            p = Path(p)
            return p if p.is_absolute() else root / p

        data = d["data"]
        files = {k: path(v) for k, v in (data.get("files") or {}).items()}
        eur = path(data["eur_rate"]) if data.get("eur_rate") else None

        try:
            windows = []
            for w in d["windows"]:
                if isinstance(w, str):
                    if w not in WINDOWS:
                        raise ConfigError(f"unknown window label {w!r}")
                    windows.append(WINDOWS[w])
                else:
                    windows.append(WindowSpec(str(w["label"]), str(quarter(w["start"])),
                                              str(quarter(w["end"])), tuple(w["currencies"])))
            models = [ModelSpec.parse(m) for m in d["models"]]
            horizons = [int(h) for h in d["horizons"]]
            if not horizons or min(horizons) < 1:
                raise ConfigError("horizons must be positive integers")
            g, smp, tr = d["gibbs"], d["sample"], d["transforms"]
            harness = HarnessConfig(
                in_sample_start=str(quarter(smp["in_sample_start"])),
                training_start=str(quarter(smp["training_start"])),
                training_end=str(quarter(smp["training_end"])),
                tau=float(g["tau"]),
                total_draws=int(g["total_draws"]),
                burn_in=int(g["burn_in"]),
                diag_q=bool(g["diag_q"]),
                scheme=d["scheme"],
                rolling_length=d["rolling_length"],
                seed=int(d["seed"]),
                euro_members=tuple(d["euro_members"]),
            )
            if not 0 <= harness.burn_in < harness.total_draws:
                raise ConfigError("gibbs.burn_in must be in [0, total_draws)")
            if tr["hp_mode"] not in ("recursive", "full"):
                raise ConfigError(f"transforms.hp_mode must be recursive or full")
            factors = {}
            if tr["euro_conversion"]:
                factors = (dict(tr["euro_conversion"]) if isinstance(tr["euro_conversion"], dict)
                           else dict(EURO_CONVERSION_FACTORS))
            transforms = TransformConfig(
                hp_lambda=float(tr["hp_lambda"]), hp_mode=tr["hp_mode"],
                inflation_scale=float(tr["inflation_scale"]), gap_scale=float(tr["gap_scale"]),
                euro_factors=factors, euro_cutover=str(quarter(tr["euro_cutover"])),
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from None

        out = path(d["out"])
        if d["dump_draws"]:
            harness.dump_draws = str(out / "draws")
        ev = d["evaluation"]
        return cls(
            files=files, base_country=str(data["base_country"]), windows=windows,
            horizons=horizons, models=models, harness=harness, transforms=transforms,
            out=out, seed=int(d["seed"]), eur_rate=eur, schema=data.get("schema") or {},
            jobs=int(d["jobs"]), dm_threshold=float(ev["dm_threshold"]),
            dm_bandwidth=None if ev["dm_bandwidth"] is None else int(ev["dm_bandwidth"]),
            raw=d,
        )


def load_config(path=None, overrides: Optional[dict] = None, environ=None) -> RunConfig:
    """Build a :class:`RunConfig` from a YAML file, the environment and flag overrides."""
    d: dict = {}
    root = Path(".")
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        try:
            d = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        root = path.parent
    d = _merge(d, env_overrides(environ))
    d = _merge(d, overrides or {})
    return RunConfig.from_dict(d, root)
