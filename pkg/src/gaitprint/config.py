"""Experiment configuration: INI-style sections of flat key = value pairs.

Every option has a default, unknown sections or keys are rejected, and the
resolved configuration hashes to a short digest stamped into every output.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .exceptions import ConfigError

METHODS = ("gridcell-logistic", "funreg")


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.split(",") if x.strip())


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.split(",") if x.strip())


def _strs(s: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


@dataclass
class DataSection:
    path: str = ""
    format: str = "delimited"  # delimited | iu | zju | canonical
    subject_column: str = "subject"
    time_column: str = "t"
    x_column: str = "x"
    y_column: str = "y"
    z_column: str = "z"
    session_column: str = ""
    activity_column: str = ""
    keep_activities: tuple[str, ...] = ()
    time_unit: str = "index"
    rate: float = 100.0
    sessions: tuple[str, ...] = ()
    zju_sensor: str = "1"
    trim_transition: float = 0.0


@dataclass
class SegmentSection:
    S: int = 100


@dataclass
class SplitSection:
    mode: str = "within-session"
    train_fraction: float = 0.75
    train_session: str = "1"
    test_session: str = "2"


@dataclass
class GridSection:
    range_lo: float = 0.0
    range_hi: float = 3.0
    cell_size: float = 0.25
    lags: tuple[int, ...] = (15, 30, 45)
    unique_frac: float = 0.10
    freq_ratio: float = 95 / 5


@dataclass
class ModelSection:
    method: str = "gridcell-logistic"


@dataclass
class FitSection:
    max_iter: int = 100
    tol: float = 1e-9
    ridge: float = 1e-6
    standardize: bool = True


@dataclass
class FunregSection:
    n_basis: int = 8
    degree: int = 3
    lag_stride: int = 1
    relative_lambdas: tuple[float, ...] = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
    isotropic: bool = True
    folds: int = 5
    selection: str = "shared"
    n_select: int = 5
    dump_dsu: bool = False


@dataclass
class CmaSection:
    alpha: float = 0.05
    n_mc: int = 2_000_000
    subjects: tuple[str, ...] = ()


@dataclass
class EvaluateSection:
    windows: tuple[int, ...] = (1, 2, 5, 10, 25, 50, 100)
    ks: tuple[int, ...] = (1, 5)


@dataclass
class OutputSection:
    dir: str = "out"


@dataclass
class RunSection:
    seed: int = 0
    jobs: int = 1


@dataclass
class ExperimentConfig:
    data: DataSection = field(default_factory=DataSection)
    segment: SegmentSection = field(default_factory=SegmentSection)
    split: SplitSection = field(default_factory=SplitSection)
    grid: GridSection = field(default_factory=GridSection)
    model: ModelSection = field(default_factory=ModelSection)
    fit: FitSection = field(default_factory=FitSection)
    funreg: FunregSection = field(default_factory=FunregSection)
    cma: CmaSection = field(default_factory=CmaSection)
    evaluate: EvaluateSection = field(default_factory=EvaluateSection)
    output: OutputSection = field(default_factory=OutputSection)
    run: RunSection = field(default_factory=RunSection)

    def validate(self) -> "ExperimentConfig":
        if self.model.method not in METHODS:
            raise ConfigError(f"unknown method {self.model.method!r}; expected one of {METHODS}")
        if self.data.format not in ("delimited", "iu", "zju", "canonical"):
            raise ConfigError(f"unknown data format {self.data.format!r}")
        if self.split.mode not in ("within-session", "cross-session"):
            raise ConfigError(f"unknown split mode {self.split.mode!r}")
        if self.segment.S < 2:
            raise ConfigError("S must be at least 2")
        if self.funreg.selection not in ("shared", "per-subject"):
            raise ConfigError(f"unknown lambda selection {self.funreg.selection!r}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        """Digest of every setting that can change a result.

        The output directory and worker count are excluded: moving a run or
        changing its parallelism must not change its outputs.
        """
        d = self.to_dict()
        del d["output"], d["run"]["jobs"]
        blob = json.dumps(d, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def out_dir(self) -> Path:
        return Path(self.output.dir)

    def to_ini(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"[{f.name}]")
            for k, v in asdict(getattr(self, f.name)).items():
                if isinstance(v, (tuple, list)):
                    v = ", ".join(str(x) for x in v)
                lines.append(f"{k} = {v}")
            lines.append("")
        return "\n".join(lines)


def _coerce(value: str, default):
    if isinstance(default, bool):
        return _bool(value)
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        if default and isinstance(default[0], int):
            return _ints(value)
        if default and isinstance(default[0], float):
            return _floats(value)
        return _strs(value)
    return value.strip()


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    cfg = ExperimentConfig()
    sections = {f.name for f in fields(cfg)}
    for name in cp.sections():
        if name not in sections:
            raise ConfigError(f"unknown config section [{name}]")
        sec = getattr(cfg, name)
        known = {f.name for f in fields(sec)}
        for key, raw in cp.items(name):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{name}]")
            try:
                setattr(sec, key, _coerce(raw, getattr(sec, key)))
            except ValueError as exc:
                raise ConfigError(f"[{name}] {key}: {exc}") from exc
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    cfg = parse_config(path.read_text())
    if cfg.data.path and not Path(cfg.data.path).is_absolute():
        cfg.data.path = str((path.parent / cfg.data.path).resolve())
    return cfg
