"""Experiment configuration: validation, key=value files and CSV emission.

A config file holds one ``key = value`` pair per line; ``#`` starts a comment.
Keys are the long CLI flag names with dashes or underscores, e.g.::

    model = half_line
    f = sq
    x0 = 0.5
    T = 1
    N = 100000
    formula = hess

Vectors are comma separated (``x0 = 0.1,0.2``).  Unknown keys and malformed
values are rejected with the offending line number.
"""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field, fields

from .geometry import CATALOG

SCHEMA_VERSION = 1
OUTPUT_ENV = "NEUMANN_BISMUT_OUTPUT_DIR"
FORMULAS = ("semigroup", "grad14", "grad13", "lpf", "hess", "hessgrad")
SCHEDULES = ("constant", "exponential", "ramp")

ESTIMATE_COLUMNS = (
    "command", "model", "f", "x0", "v", "T", "N", "dt", "schedule", "seed", "formula",
    "value", "std_error", "n_samples", "n_rejected", "runtime",
)


class ConfigError(ValueError):
    """Invalid configuration; ``where`` names the field or file line."""

    def __init__(self, message, where=None):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


def _vector(text):
    if isinstance(text, (list, tuple)):
        return tuple(float(t) for t in text)
    parts = [p for p in str(text).replace(" ", "").split(",") if p]
    if not parts:
        raise ValueError("empty vector")
    return tuple(float(p) for p in parts)


def _bool(text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class ExperimentConfig:
    """All inputs of one ``estimate``/``oracle`` run."""

    model: str = "half_line"
    radius: float = 1.0
    drift: float = 0.0
    f: str = "sq"
    x0: tuple = (0.5,)
    v: tuple | None = None
    T: float = 1.0
    N: int = 100_000
    dt: float = 1e-3
    schedule: str = "constant"
    schedule_K: float = 0.0
    seed: int = 0
    formula: str = "semigroup"
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    reproducible: bool = False
    output: str | None = None
    json: bool = False
    dump_paths: str | None = None

    _casts = {
        "radius": float, "drift": float, "T": float, "dt": float, "schedule_K": float,
        "N": lambda s: int(float(s)), "seed": int, "threads": int,
        "x0": _vector, "v": _vector, "reproducible": _bool, "json": _bool,
    }

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    def update(self, key, value, where=None):
        key = key.strip().replace("-", "_")
        if key not in self.keys():
            raise ConfigError(f"unknown key {key!r}", where)
        cast = self._casts.get(key, str)
        try:
            setattr(self, key, None if value is None else cast(value))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {exc}", where) from None

    def validate(self):
        """Check every field before any computation."""
        if self.model not in CATALOG:
            raise ConfigError(f"unknown model {self.model!r} (choose from {', '.join(CATALOG)})", "model")
        from .geometry import make_model

        dim = make_model(self.model).dim
        if len(self.x0) != dim:
            raise ConfigError(f"x0 needs {dim} components", "x0")
        if self.v is None:
            self.v = (1.0,) + (0.0,) * (dim - 1)
        if len(self.v) != dim:
            raise ConfigError(f"v needs {dim} components", "v")
        if self.formula not in FORMULAS:
            raise ConfigError(f"unknown formula {self.formula!r}", "formula")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"unknown schedule {self.schedule!r}", "schedule")
        for name in ("T", "dt", "radius"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise ConfigError("must be positive and finite", name)
        if self.N <= 0:
            raise ConfigError("must be positive", "N")
        if self.threads <= 0:
            raise ConfigError("must be positive", "threads")
        if self.drift < 0:
            raise ConfigError("drift rate must be non-negative", "drift")
        if self.model == "hemisphere" and self.drift:
            raise ConfigError("the hemisphere model has no drift", "drift")
        from .functions import make_function

        try:
            make_function(self.f, dim)
        except ValueError as exc:
            raise ConfigError(str(exc), "f") from None
        if self.dump_paths is not None:
            k, _, path = self.dump_paths.partition(":")
            if not k.isdigit() or not path:
                raise ConfigError("expected K:FILE", "dump_paths")
        return self


def load_config(path, cfg=None):
    """Read a key=value file into ``cfg`` (a fresh config by default)."""
    cfg = cfg or ExperimentConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(str(exc), path) from None
    for i, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected key = value", f"{path}:{i}")
        key, value = (s.strip() for s in line.split("=", 1))
        cfg.update(key, value, f"{path}:{i}")
    return cfg


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return " ".join(_fmt(float(x)) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return "" if v is None else str(v)


def csv_text(rows, columns):
    """Rows as CSV text with the ``#schema=`` header line."""
    buf = io.StringIO()
    buf.write(f"#schema={SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def resolve_output(path, command):
    """Apply the output-directory environment variable to relative or missing paths."""
    base = os.environ.get(OUTPUT_ENV)
    if path is None:
        return os.path.join(base, f"{command}.csv") if base else None
    if base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path
