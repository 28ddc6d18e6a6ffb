"""Run configuration for the command-line pipeline.

Values come from a YAML file, then ``WFSM_*`` environment variables, then
command-line flags, each layer overriding the previous one.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .exceptions import ConfigError
from .resources import config_hash, file_hash, resolve

ENV_PREFIX = "WFSM_"

_FILE_FIELDS = {
    "machine": "machine", "device": "params", "gear": "params", "vehicle": "params",
    "economics": "params",
}


@dataclass(frozen=True)
class RunConfig:
    machine: str = "wfsm_m6"
    device: str = "inverter_sic"
    gear: str = "gear_single_stage"
    vehicle: str = "vehicle"
    cycle: str = "synthetic_urban_highway"  # shipped name, CSV path, or "wltp"
    economics: str = "economics"
    materials: str | None = None  # directory of grade files; shipped grades when unset
    v_dc: float = 800.0
    rated_v_dc: float = 625.0
    strategy: str = "mtpl"
    grid: tuple = (17, 17, 9)
    seed: int = 0
    threads: int = 1
    out: str = "results"
    stages: dict = field(default_factory=dict)
    base_dir: str | None = None

    def __post_init__(self):
        if self.strategy not in ("mtpl", "mtpa"):
            raise ConfigError(f"strategy must be mtpl or mtpa, got {self.strategy!r}")
        if not (self.v_dc > 0 and self.rated_v_dc > 0):
            raise ConfigError("DC voltages must be > 0")
        if int(self.threads) < 1:
            raise ConfigError("threads must be >= 1")
        if int(self.seed) < 0 or int(self.seed) >= 2**64:
            raise ConfigError("seed must fit an unsigned 64-bit integer")
        object.__setattr__(self, "grid", tuple(int(g) for g in self.grid))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "threads", int(self.threads))

    def path(self, name):
        """Resolved path of a file-valued field."""
        return resolve(getattr(self, name), _FILE_FIELDS[name], self.base_dir)

    def cycle_path(self):
        if self.cycle == "wltp":
            return None
        return resolve(self.cycle, "cycle", self.base_dir)

    def validate(self):
        """Check every referenced input exists before any stage runs."""
        for name in _FILE_FIELDS:
            self.path(name)
        self.cycle_path()
        if self.materials is not None and not self.materials_dir().is_dir():
            raise ConfigError(f"materials directory {self.materials!r} not found")
        return self

    def materials_dir(self):
        p = Path(self.materials)
        if not p.is_absolute() and self.base_dir is not None:
            p = Path(self.base_dir) / p
        return p

    def library(self):
        from .materials import SurrogateGradeLibrary, default_library

        return default_library() if self.materials is None else SurrogateGradeLibrary.load(self.materials_dir())

    def stage(self, name):
        return dict(self.stages.get(name) or {})

    def to_dict(self):
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("base_dir", "threads", "out")}
        out["grid"] = list(self.grid)
        return out

    @property
    def hash(self):
        """Hash of the settings plus the content of every referenced input file."""
        data = self.to_dict()
        data["inputs"] = self.input_hashes()
        return config_hash(data)

    def input_hashes(self):
        out = {}
        for name in _FILE_FIELDS:
            out[name] = file_hash(self.path(name))
        cp = self.cycle_path()
        if cp is not None:
            out["cycle"] = file_hash(cp)
        return out


def _coerce_env(raw):
    try:
        return yaml.safe_load(raw)
    except yaml.YAMLError:
        return raw


def load_run_config(path=None, env=None, overrides=None):
    """Merge file < environment < explicit overrides into a :class:`RunConfig`.

    ``path`` may also be a run manifest, whose recorded configuration is
    replayed.
    """
    env = os.environ if env is None else env
    data, base_dir = {}, None
    path = path if path is not None else env.get(ENV_PREFIX + "CONFIG")
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {path!r} not found")
        with open(p, encoding="utf-8") as fh:
            text = fh.read()
        try:
            loaded = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
        except (ValueError, yaml.YAMLError) as exc:
            raise ConfigError(f"{path}: cannot parse: {exc}") from None
        if isinstance(loaded, dict) and "config" in loaded and "stage" in loaded:
            base_dir = loaded.get("base_dir")
            loaded = loaded["config"]
        else:
            base_dir = str(p.parent.resolve())
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: expected a mapping")
        data.update(loaded)
    known = {f.name for f in fields(RunConfig)} - {"base_dir"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{path}: unknown settings {sorted(unknown)}")
    for name in known - {"stages"}:
        key = ENV_PREFIX + name.upper()
        if key in env:
            data[name] = _coerce_env(env[key])
    for name, value in (overrides or {}).items():
        if value is not None:
            data[name] = value
    try:
        return RunConfig(base_dir=base_dir, **data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad run config: {exc}") from None
