"""Experiment configuration: key=value files, validation and config hashes."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import KINDS, WITH_BOUNDARIES
from .seeding import default_seed

EXPERIMENTS = ("verify", "spectrum", "mixing-exact", "mixing-mc", "cutoff-sweep",
               "no-precutoff", "decay", "trajectories")
T_UNITS = ("abs", "scale")

# fields that change neither results nor their bytes
_NOT_HASHED = {"output", "workers", "force", "max_events", "seed_source", "master_seed"}


def _int_list(text: str) -> list[int]:
    out = []
    for tok in str(text).replace(" ", "").split(","):
        if not tok:
            continue
        if ".." in tok:
            a, b = tok.split("..")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(tok))
    return out


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in str(text).replace(" ", "").split(",") if tok]


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class ExperimentConfig:
    experiment: str
    Ns: list = field(default_factory=list)
    ks: list = field(default_factory=list)
    variant: str = WITH_BOUNDARIES
    eps: list = field(default_factory=lambda: [0.5])
    delta: float = 0.75
    K: int | None = None
    js: list = field(default_factory=lambda: [1])
    replicas: int = 1000
    coupling_replicas: int | None = None
    master_seed: int | None = None
    seed_source: str = "flag"
    # t-grid "start:stop:count"; in units of 6 N^2 log N / (pi^2 k (k^2 - 1)) when t_units=scale
    t_grid: str = "0.2:1.4:25"
    t_units: str = "scale"
    literal_range: bool = False
    start: str = "uniform"
    output: str | None = None
    workers: int | None = None
    max_events: float = 2e10
    force: bool = False

    def __post_init__(self):
        if self.master_seed is None:
            self.master_seed, self.seed_source = default_seed()
        self.validate()

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.variant not in KINDS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.experiment != "verify":
            if not self.Ns or not self.ks and self.experiment != "no-precutoff":
                raise ValueError("N and k lists must be nonempty")
        if not self.eps or any(not (0 < e < 1) for e in self.eps):
            raise ValueError("eps values must lie in (0, 1)")
        if self.replicas < 1:
            raise ValueError("replicas must be at least 1")
        if self.t_units not in T_UNITS:
            raise ValueError(f"t_units must be one of {T_UNITS}")
        self.time_grid_factors()

    def time_grid_factors(self) -> np.ndarray:
        parts = self.t_grid.split(":")
        if len(parts) == 3:
            a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
            if n < 1 or a < 0 or b < a:
                raise ValueError(f"bad t_grid {self.t_grid!r}")
            return np.linspace(a, b, n)
        vals = np.array(_float_list(self.t_grid))
        if vals.size == 0 or np.any(vals < 0) or np.any(np.diff(vals) < 0):
            raise ValueError(f"bad t_grid {self.t_grid!r}")
        return vals

    def times_for(self, N: int, k: int) -> np.ndarray:
        f = self.time_grid_factors()
        return f * time_scale(N, k) if self.t_units == "scale" else f

    # -- hashing and serialisation ------------------------------------------

    def hashed_fields(self) -> dict:
        d = dataclasses.asdict(self)
        return {key: d[key] for key in sorted(d) if key not in _NOT_HASHED}

    def config_hash(self) -> str:
        blob = json.dumps(self.hashed_fields(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def point(self, N: int, k: int) -> "ExperimentConfig":
        """The same configuration restricted to one (N, k)."""
        return dataclasses.replace(self, Ns=[N], ks=[k], output=None)

    def to_record(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("output")
        d.pop("workers")
        return d

    @classmethod
    def from_record(cls, rec: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{key: val for key, val in rec.items() if key in names})


def time_scale(N: int, k: int) -> float:
    """6 N^2 log N / (pi^2 k (k^2 - 1)), the predicted order of t_mix."""
    return 6.0 * N * N * math.log(N) / (math.pi ** 2 * k * (k * k - 1))


_PARSERS = {
    "Ns": _int_list, "N": _int_list, "ks": _int_list, "k": _int_list,
    "js": _int_list, "j": _int_list,
    "eps": _float_list, "delta": float, "K": int, "replicas": int,
    "coupling_replicas": int, "master_seed": int, "seed": int,
    "t_grid": str, "t_units": str, "variant": str, "experiment": str,
    "literal_range": _bool, "start": str, "output": str, "workers": int,
    "max_events": float, "force": _bool,
    "literal_block_range": _bool, "T": float, "sample_times": str,
}
_ALIASES = {"N": "Ns", "k": "ks", "j": "js", "seed": "master_seed",
            "literal_block_range": "literal_range"}


def parse_value(key: str, raw):
    if key not in _PARSERS:
        raise ValueError(f"unknown configuration key {key!r}")
    return _PARSERS[key](raw)


def read_config_file(path: str | Path) -> dict:
    """``key = value`` lines; '#' starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        out[_ALIASES.get(key, key)] = parse_value(key, raw)
    return normalize_time_keys(out)


def normalize_time_keys(values: dict) -> dict:
    """Fold the trajectory keys ``T`` and ``sample_times`` into an absolute t_grid."""
    values = dict(values)
    T = values.pop("T", None)
    sample = values.pop("sample_times", None)
    if sample is not None:
        values["t_grid"] = sample
        values["t_units"] = "abs"
    elif T is not None:
        values["t_grid"] = f"0:{T}:11"
        values["t_units"] = "abs"
    return values


def build_config(experiment: str, file_values: dict | None = None,
                 flag_values: dict | None = None) -> ExperimentConfig:
    """Merge file values with flags (flags win) on top of defaults."""
    merged = dict(file_values or {})
    seed_source = "file" if "master_seed" in merged else None
    for key, val in normalize_time_keys({key: v for key, v in (flag_values or {}).items()
                                         if v is not None}).items():
        if val is not None:
            merged[key] = val
            if key == "master_seed":
                seed_source = "flag"
    merged["experiment"] = experiment
    if seed_source:
        merged["seed_source"] = seed_source
    return ExperimentConfig(**merged)
