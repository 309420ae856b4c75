"""``key = value`` pipeline configuration files.

Lines starting with ``#`` are comments; lists are comma separated. Relative
paths are resolved against the directory of the config file. Example::

    data = snapshots.snp
    workers = 4
    energy = 0.9996
    scaling = off
    b1_min = 1e-10
    b1_max = 1
    b1_num = 8
    max_growth = 1.2
    nt_p = 400
    probes = 0:120, 0:300
    output = run1
"""

import os
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .comm import DEFAULT_TIMEOUT
from .errors import ConfigError
from .pod import DEFAULT_ENERGY
from .postprocess import ProbeSet
from .rom_search import DEFAULT_MAX_GROWTH, SearchConfig

__all__ = ["PipelineConfig", "parse_config", "load_config", "BACKENDS"]

BACKENDS = ("inprocess", "mpi")
_TRUE = {"on", "true", "yes", "1"}
_FALSE = {"off", "false", "no", "0"}


@dataclass
class PipelineConfig:
    data: str = None
    workers: int = 1
    backend: str = "inprocess"
    energy: float = DEFAULT_ENERGY
    rank: int = None
    scaling: bool = False
    b1_min: float = 1e-10
    b1_max: float = 1.0
    b1_num: int = 8
    b2_min: float = 1e-4
    b2_max: float = 1e4
    b2_num: int = 8
    max_growth: float = DEFAULT_MAX_GROWTH
    nt_p: int = None
    probes: ProbeSet = field(default_factory=lambda: ProbeSet(()))
    save_field: bool = False
    output: str = None
    timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if int(self.workers) < 1:
            raise ConfigError("workers must be >= 1")
        if not 0 < self.energy <= 1:
            raise ConfigError(f"energy must lie in (0, 1], got {self.energy}")
        if self.rank is not None and int(self.rank) < 1:
            raise ConfigError("rank must be >= 1")
        for name in ("b1_min", "b1_max", "b2_min", "b2_max", "max_growth",
                     "timeout"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for lo, hi in (("b1_min", "b1_max"), ("b2_min", "b2_max")):
            if getattr(self, lo) > getattr(self, hi):
                raise ConfigError(f"{lo} exceeds {hi}")
        for name in ("b1_num", "b2_num"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.nt_p is not None and int(self.nt_p) < 2:
            raise ConfigError("nt_p must be >= 2")
        return self

    @property
    def B1(self):
        return np.logspace(np.log10(self.b1_min), np.log10(self.b1_max),
                           num=self.b1_num)

    @property
    def B2(self):
        return np.logspace(np.log10(self.b2_min), np.log10(self.b2_max),
                           num=self.b2_num)

    def search_config(self):
        return SearchConfig(B1=self.B1, B2=self.B2,
                            max_growth=self.max_growth, nt_p=self.nt_p)

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


def _parse_bool(key, value):
    v = value.lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise ConfigError(f"{key}: expected on/off, got {value!r}")


def _parse_probes(value):
    entries = []
    for item in filter(None, (s.strip() for s in value.split(","))):
        try:
            var, idx = item.split(":")
            entries.append((int(var), int(idx)))
        except ValueError:
            raise ConfigError(
                f"probes: expected 'var:index' items, got {item!r}") from None
    return ProbeSet(tuple(entries))


def _optional_int(value):
    return None if value.lower() in ("", "none", "auto") else int(value)


_PARSERS = {
    "data": str,
    "workers": int,
    "backend": str,
    "energy": float,
    "rank": _optional_int,
    "scaling": None,
    "b1_min": float,
    "b1_max": float,
    "b1_num": int,
    "b2_min": float,
    "b2_max": float,
    "b2_num": int,
    "max_growth": float,
    "nt_p": _optional_int,
    "probes": _parse_probes,
    "save_field": None,
    "output": str,
    "timeout": float,
}
assert set(_PARSERS) == {f.name for f in fields(PipelineConfig)}


def parse_config(text, base_dir=None):
    """Parse configuration text into a :class:`PipelineConfig`."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        parser = _PARSERS[key]
        try:
            values[key] = _parse_bool(key, value) if parser is None \
                else parser(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    if base_dir is not None:
        for key in ("data", "output"):
            if key in values and not os.path.isabs(values[key]):
                values[key] = os.path.join(base_dir, values[key])
    return PipelineConfig(**values)


def load_config(path):
    with open(path, encoding="utf-8") as f:
        text = f.read()
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))
