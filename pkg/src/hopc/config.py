"""Experiment configuration: a flat ``key=value`` text file.

Unknown keys are errors. :meth:`ExperimentConfig.echo` renders every key in
declaration order and is embedded in every artifact the experiment writes.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .io import read_keyvalue

PIPELINES = ("holistic", "stkp", "constant")
PROTOCOLS = ("none", "full-half", "half-full")


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt(conv):
    def parse(s):
        return None if s.strip().lower() in ("", "none") else conv(s)
    return parse


def _floats(s):
    return tuple(float(x) for x in s.replace(",", " ").split())


def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return " ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass(frozen=True)
class ExperimentConfig:
    """Every pipeline parameter, with the defaults used throughout the package.

    ``folds`` is ``all`` (every split of ``train_subjects`` training
    subjects) or the name of a single split such as ``5/5``. ``protocol``
    selects the frame-rate test: ``full-half`` trains on full-rate
    sequences and tests on 2x-decimated ones, ``half-full`` is the swap.
    ``data`` is ``synth`` (the built-in action suite) or ``files``.
    """

    pipeline: str = "holistic"
    seed: int = 0
    # descriptor
    r: float = 1.0
    tau: int = 2
    theta: float = 1.12
    m: int = 20
    adaptive_tau: bool = False
    delta_max: int = 6
    adaptive_r: bool = False
    radii: tuple | None = None
    n_x: int = 6
    n_y: int = 5
    n_t: int = 3
    # keypoints
    r_prime: float | None = None
    tau_prime: int | None = None
    eta_min: float = 0.05
    top_n: int | None = None
    stride: int = 1
    backend: str = "surface"
    m_x: int = 20
    m_y: int = 20
    m_t: int = 3
    # learning
    k: int = 1000
    max_iter: int = 100
    C: float = 1.0
    kernel: str = "hik"
    # protocol
    train_subjects: int | None = None
    folds: str = "all"
    protocol: str = "none"
    decimation: int = 2
    workers: int = 1
    # synthetic data
    data: str = "synth"
    synth_subjects: int = 10
    synth_duration: int = 24

    def __post_init__(self):
        checks = [
            (self.pipeline in PIPELINES, f"pipeline must be one of {PIPELINES}"),
            (self.protocol in PROTOCOLS, f"protocol must be one of {PROTOCOLS}"),
            (self.data in ("synth", "files"), "data must be synth or files"),
            (self.backend in ("surface", "hopc"), "backend must be surface or hopc"),
            (self.kernel in ("hik", "linear"), "kernel must be hik or linear"),
            (self.r > 0, "r must be positive"),
            (self.tau >= 0, "tau must be >= 0"),
            (self.theta > 1, "theta must exceed 1"),
            (self.m == 20, "only m=20 (icosahedron) is supported"),
            (self.delta_max >= 2, "delta_max must be >= 2"),
            (min(self.n_x, self.n_y, self.n_t) >= 1, "grid sizes must be >= 1"),
            (min(self.m_x, self.m_y, self.m_t) >= 1, "surface grid sizes must be >= 1"),
            (self.r_prime is None or self.r_prime > 0, "r_prime must be positive"),
            (self.tau_prime is None or self.tau_prime >= 0, "tau_prime must be >= 0"),
            (self.eta_min >= 0, "eta_min must be >= 0"),
            (self.top_n is None or self.top_n >= 1, "top_n must be >= 1"),
            (self.stride >= 1, "stride must be >= 1"),
            (self.k >= 1, "k must be >= 1"),
            (self.max_iter >= 1, "max_iter must be >= 1"),
            (self.C > 0, "C must be positive"),
            (self.decimation >= 2, "decimation must be >= 2"),
            (self.workers >= 1, "workers must be >= 1"),
            (self.synth_subjects >= 2, "synth_subjects must be >= 2"),
            (self.synth_duration >= 2, "synth_duration must be >= 2"),
            (not self.adaptive_r or (self.radii is not None and len(self.radii) >= 3),
             "adaptive_r needs radii with at least 3 entries"),
            (self.radii is None or all(b > a for a, b in zip(self.radii, self.radii[1:])),
             "radii must be strictly ascending"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @classmethod
    def parsers(cls):
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        base = {"str": str, "int": int, "float": float, "bool": _bool}
        out = {}
        for name, t in types.items():
            if name == "radii":
                out[name] = _opt(_floats)
            elif t.endswith("| None"):
                out[name] = _opt(base[t.split("|")[0].strip()])
            else:
                out[name] = base[t]
        return out

    @classmethod
    def from_mapping(cls, kv: dict) -> "ExperimentConfig":
        """Build from string values, rejecting unknown keys."""
        parsers = cls.parsers()
        unknown = sorted(set(kv) - set(parsers))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        vals = {}
        for k, v in kv.items():
            try:
                vals[k] = parsers[k](v) if isinstance(v, str) else v
            except ValueError as e:
                raise ConfigError(f"bad value for {k}: {e}") from None
        return cls(**vals)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_mapping(read_keyvalue(path))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def echo(self) -> str:
        return "".join(f"{f.name}={_fmt(getattr(self, f.name))}\n" for f in dataclasses.fields(self))

    def to_file(self, path):
        Path(path).write_text(self.echo())
