"""Experiment specification, config parsing, presets and CSV output.

Config files are plain ``key = value`` lines; ``#`` starts a comment.
Values are numbers, ``true``/``false``, bare words, or multiples of pi
written ``0.95pi`` or ``0.95*pi``.  A sweep is declared as
``sweep.<name> = v1, v2, ...``; several sweeps form a Cartesian product.

Besides the :class:`~combdtc.model.ModelParams` fields two shorthand keys
are accepted, as plain settings or sweeps:

``gamma``
    sets ``gamma_l`` and ``gamma_r`` to the same value;
``mode``
    ``individual`` or ``global`` reservoirs, or ``markovian`` (a global
    reservoir with ``gamma_r = 0``).

All energies are in units of ``jz`` and all times in units of ``1/jz``.
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import logging
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .dense import check_guard
from .engine import ENGINES, AveragedSeries, RunConfig, disorder_average
from .errors import ConfigError, InvalidParameter
from .model import ModelParams

logger = logging.getLogger(__name__)

__all__ = [
    "ExperimentSpec",
    "PRESETS",
    "parse_config",
    "load_spec",
    "resolve_points",
    "validate_spec",
    "run_experiment",
    "write_csv",
]

UNITS_NOTE = "energies in units of jz, times in units of 1/jz"

INT_KEYS = {"n_sites", "bins_per_delay", "bin_dim", "max_bond", "seed", "realizations", "periods", "measure_every"}
FLOAT_KEYS = {"period", "epsilon", "jz", "jx", "hx", "gamma_l", "gamma_r", "tau", "phi", "dt", "cutoff", "gamma"}
BOOL_KEYS = {"record_sz"}
LIST_KEYS = {"phi_sites"}
PARAM_KEYS = {f.name for f in dataclasses.fields(ModelParams)} | {"gamma", "mode"}
SPEC_KEYS = {"preset", "engine", "output", "realizations", "periods", "measure_every", "record_sz", "delta_reference"}
MODES = ("individual", "global", "markovian")
PRESET_NAMES = ("fig1", "fig3a", "fig3b", "fig4a", "fig4b", "custom")


@dataclass
class ExperimentSpec:
    """Everything needed to launch one experiment.

    ``params`` holds overrides of the model defaults (including the
    ``gamma``/``mode`` shorthands); ``sweep`` is a list of
    ``(name, values)`` pairs.  When ``delta_reference`` is set, every CSV
    gains a ``delta_m`` column, ``|m_mean - m_ref|``, where ``m_ref`` is the
    run whose first sweep parameter equals that value.
    """

    preset: str = "custom"
    params: dict = field(default_factory=dict)
    run: RunConfig = field(default_factory=RunConfig)
    engine: str = "comb"
    sweep: list = field(default_factory=list)
    realizations: int = 1
    output: str = "results"
    record_sz: bool = False
    delta_reference: Optional[float] = None
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "preset": self.preset,
            "params": dict(self.params),
            "periods": self.run.periods,
            "measure_every": self.run.measure_every,
            "engine": self.engine,
            "sweep": [[name, list(values)] for name, values in self.sweep],
            "realizations": self.realizations,
            "output": self.output,
            "record_sz": self.record_sz,
            "delta_reference": self.delta_reference,
            "notes": dict(self.notes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        params = dict(d.get("params", {}))
        if params.get("phi_sites") is not None:
            params["phi_sites"] = tuple(params["phi_sites"])
        return cls(
            preset=d.get("preset", "custom"),
            params=params,
            run=RunConfig(periods=int(d.get("periods", 100)), measure_every=int(d.get("measure_every", 1))),
            engine=d.get("engine", "comb"),
            sweep=[(name, list(values)) for name, values in d.get("sweep", [])],
            realizations=int(d.get("realizations", 1)),
            output=d.get("output", "results"),
            record_sz=bool(d.get("record_sz", False)),
            delta_reference=d.get("delta_reference"),
            notes=dict(d.get("notes", {})),
        )


PRESETS: dict[str, dict] = {
    "fig1": {
        "params": {"n_sites": 40, "epsilon": 0.15, "max_bond": 64},
        "sweep": [("gamma", [0.0, 0.3, 1.0])],
        "engine": "comb",
        "realizations": 1,
        "notes": {"gamma_values": "gamma/jz in {0, 0.3, 1.0} chosen to bracket the reservoir coupling of the other presets"},
    },
    "fig3a": {
        "params": {"n_sites": 4, "mode": "markovian"},
        "sweep": [("gamma_l", [0.0, 0.5, 1.0])],
        "engine": "dense_qsse",
        "realizations": 1,
    },
    "fig3b": {
        "params": {"n_sites": 6, "phi": math.pi, "mode": "global"},
        "sweep": [("gamma", [0.0, 0.5, 1.0])],
        "engine": "dense_qsse",
        "realizations": 8,
    },
    "fig4a": {
        "params": {"n_sites": 5, "gamma": 1.0},
        "sweep": [("mode", ["individual", "global", "markovian"])],
        "engine": "dense_qsse",
        "realizations": 1,
    },
    "fig4b": {
        "params": {"n_sites": 5, "gamma": 1.0},
        "sweep": [("phi", [math.pi, 0.95 * math.pi, 0.90 * math.pi])],
        "engine": "comb",
        "realizations": 1,
        "delta_reference": math.pi,
    },
    "custom": {},
}


# ----------------------------------------------------------------------
# parsing

_PI_RE = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?\s*\*?\s*pi$")


def _parse_float(text: str) -> float:
    t = text.strip().lower()
    m = _PI_RE.match(t)
    if m:
        return (float(m.group(1)) if m.group(1) else 1.0) * math.pi
    return float(t)


def _parse_value(key: str, text: str):
    text = text.strip()
    if not text:
        raise ValueError("empty value")
    if key in INT_KEYS:
        x = float(text)
        if x != int(x):
            raise ValueError(f"expected an integer, got {text!r}")
        return int(x)
    if key in FLOAT_KEYS:
        return _parse_float(text)
    if key in BOOL_KEYS:
        low = text.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"expected true or false, got {text!r}")
        return low in ("true", "1", "yes")
    if key in LIST_KEYS:
        return tuple(_parse_float(v) for v in text.split(","))
    if key == "delta_reference":
        return _parse_float(text)
    return text


def parse_config(text: str) -> ExperimentSpec:
    """Parse and validate config text; errors carry the offending line number."""
    raw: dict[str, tuple] = {}
    sweeps: list[tuple] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", lineno)
        key, value = (part.strip() for part in body.split("=", 1))
        if key.startswith("sweep."):
            name = key[len("sweep."):]
            if name not in PARAM_KEYS:
                raise ConfigError(f"sweep parameter {name!r} is not a model parameter", lineno)
            try:
                values = [_parse_value(name, v) for v in value.split(",")]
            except ValueError as exc:
                raise ConfigError(f"invalid value for sweep.{name}: {exc}", lineno) from None
            if any(n == name for n, _, _ in sweeps):
                raise ConfigError(f"duplicate sweep over {name!r}", lineno)
            sweeps.append((name, values, lineno))
            continue
        if key not in PARAM_KEYS and key not in SPEC_KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r} (first set on line {raw[key][1]})", lineno)
        try:
            raw[key] = (_parse_value(key, value), lineno)
        except ValueError as exc:
            raise ConfigError(f"invalid value for {key}: {exc}", lineno) from None

    preset = raw.pop("preset", ("custom", None))
    if preset[0] not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {preset[0]!r}; expected one of {PRESET_NAMES}", preset[1])
    spec = _from_preset(preset[0])
    lines = {k: ln for k, (_, ln) in raw.items()}
    for key, (value, lineno) in raw.items():
        if key in PARAM_KEYS:
            spec.params[key] = value
        elif key in ("periods", "measure_every"):
            try:
                spec.run = dataclasses.replace(spec.run, **{key: value})
            except InvalidParameter as exc:
                raise ConfigError(str(exc), lineno) from None
        else:
            setattr(spec, key, value)
    if sweeps:
        # a config sweep replaces the preset's sweep over the same parameter
        names = {n for n, _, _ in sweeps}
        spec.sweep = [(n, v) for n, v in spec.sweep if n not in names] + [(n, v) for n, v, _ in sweeps]
        lines.update({f"sweep.{n}": ln for n, _, ln in sweeps})
    validate_spec(spec, lines)
    return spec


def _from_preset(name: str) -> ExperimentSpec:
    preset = PRESETS[name]
    return ExperimentSpec(
        preset=name,
        params=dict(preset.get("params", {})),
        engine=preset.get("engine", "comb"),
        sweep=[(n, list(v)) for n, v in preset.get("sweep", [])],
        realizations=preset.get("realizations", 1),
        delta_reference=preset.get("delta_reference"),
        notes=dict(preset.get("notes", {})),
    )


def load_spec(path) -> ExperimentSpec:
    """Read a config file, or a manifest written by :func:`run_experiment`."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid manifest: {exc.msg}", exc.lineno) from None
        if "spec" not in data:
            raise ConfigError("manifest has no 'spec' entry")
        spec = ExperimentSpec.from_dict(data["spec"])
        validate_spec(spec)
        return spec
    return parse_config(text)


def preset_spec(name: str, overrides: Optional[list] = None) -> ExperimentSpec:
    """Spec for a named preset with ``key=value`` overrides in config syntax."""
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {name!r}; expected one of {PRESET_NAMES}")
    lines = [f"preset = {name}"]
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        lines.append(item)
    return parse_config("\n".join(lines))


# ----------------------------------------------------------------------
# resolution and validation


def _apply_shorthands(values: dict) -> dict:
    out = dict(values)
    if "gamma" in out:
        g = out.pop("gamma")
        out["gamma_l"] = g
        out["gamma_r"] = g
    if "mode" in out:
        mode = out.pop("mode")
        if mode not in MODES:
            raise InvalidParameter(f"mode must be one of {MODES}, got {mode!r}")
        out["reservoir"] = "individual" if mode == "individual" else "global"
        if mode == "markovian":
            out["gamma_r"] = 0.0
    return out


def _label(assignment: dict) -> str:
    if not assignment:
        return "run"
    parts = []
    for name, value in assignment.items():
        text = format(value, ".6g") if isinstance(value, float) else str(value)
        parts.append(f"{name}={text}")
    return re.sub(r"[^A-Za-z0-9_.=+-]", "_", "_".join(parts))


def resolve_points(spec: ExperimentSpec) -> list[tuple[str, dict, ModelParams]]:
    """Expand the sweep into ``(label, assignment, params)`` triples in sweep order."""
    names = [n for n, _ in spec.sweep]
    grids = [v for _, v in spec.sweep]
    points = []
    for combo in itertools.product(*grids) if grids else [()]:
        assignment = dict(zip(names, combo))
        if "n_sites" not in spec.params and "n_sites" not in assignment:
            raise InvalidParameter("missing required key 'n_sites'")
        # swept values win over plain settings; markovian mode always forces gamma_r = 0
        values = {**_apply_shorthands(spec.params), **_apply_shorthands(assignment)}
        if assignment.get("mode", spec.params.get("mode")) == "markovian":
            values["gamma_r"] = 0.0
        points.append((_label(assignment), assignment, ModelParams(**values)))
    return points


def validate_spec(spec: ExperimentSpec, lines: Optional[dict] = None) -> list:
    """Check every sweep point and the engine guards; returns the resolved points."""
    lines = lines or {}

    def fail(msg, key=None):
        line = lines.get(key) if key else None
        if line is None:
            # point at the key mentioned first in the message
            hits = [(msg.find(k.split(".")[-1]), k) for k in lines if k.split(".")[-1] in msg]
            line = lines[min(hits)[1]] if hits else None
        raise ConfigError(msg, line)

    if spec.engine not in ENGINES:
        fail(f"unknown engine {spec.engine!r}; expected one of {ENGINES}", "engine")
    if spec.realizations < 1:
        fail("realizations must be >= 1", "realizations")
    for name, values in spec.sweep:
        if name not in PARAM_KEYS:
            fail(f"sweep parameter {name!r} is not a model parameter", f"sweep.{name}")
        if not values:
            fail(f"sweep over {name!r} has no values", f"sweep.{name}")
    try:
        points = resolve_points(spec)
        for _, _, p in points:
            p.half_period_steps
    except (InvalidParameter, TypeError) as exc:
        fail(str(exc))
    if spec.delta_reference is not None:
        if not spec.sweep:
            fail("delta_reference needs a sweep", "delta_reference")
        ref = spec.sweep[0][1]
        if not any(_same(v, spec.delta_reference) for v in ref):
            fail(f"delta_reference {spec.delta_reference!r} is not among the values of sweep.{spec.sweep[0][0]}",
                 "delta_reference")
    for _, _, p in points:
        _check_engine(spec.engine, p)
    return points


def _same(a, b) -> bool:
    if isinstance(a, str) or isinstance(b, str):
        return a == b
    return math.isclose(float(a), float(b), rel_tol=1e-12, abs_tol=1e-15)


def _check_engine(engine: str, p: ModelParams) -> None:
    if engine == "comb":
        if p.reservoir != "individual":
            raise ConfigError("the comb engine supports individual reservoirs only; use engine = dense_qsse")
        return
    check_guard(p, engine)


# ----------------------------------------------------------------------
# running


def _csv_header(n_sites: int, record_sz: bool, delta: bool) -> list[str]:
    cols = ["period", "time", "m_mean", "m_std", "norm_error", "max_bond"]
    if delta:
        cols.append("delta_m")
    if record_sz:
        cols += [f"sz_{i}" for i in range(n_sites)]
    return cols


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, avg: AveragedSeries, record_sz: bool = False, delta_m=None) -> None:
    """Write one averaged series with 17-significant-digit floats and ``\\n`` line endings."""
    n_sites = avg.sz_mean.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_csv_header(n_sites, record_sz, delta_m is not None))
        for k in range(len(avg.periods)):
            row = [_fmt(avg.periods[k]), _fmt(avg.times[k]), _fmt(avg.m_mean[k]), _fmt(avg.m_std[k]),
                   _fmt(avg.norm_error[k]), _fmt(avg.max_bond[k])]
            if delta_m is not None:
                row.append(_fmt(delta_m[k]))
            if record_sz:
                row += [_fmt(v) for v in avg.sz_mean[k]]
            w.writerow(row)


def run_experiment(spec: ExperimentSpec, workers: Optional[int] = None) -> dict:
    """Run every sweep point, write one CSV each plus ``manifest.json``.

    Returns the manifest.  On any failure the files written so far are
    removed before the exception propagates.
    """
    points = validate_spec(spec)
    out = Path(spec.output)
    created_dir = not out.exists()
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        results = []
        for label, assignment, p in points:
            logger.info("running %s (%s)", label, spec.engine)
            avg = disorder_average(p, spec.run, spec.realizations, spec.engine, workers)
            results.append((label, assignment, p, avg))
        ref = None
        if spec.delta_reference is not None:
            first = spec.sweep[0][0]
            ref = next(r for r in results if _same(r[1][first], spec.delta_reference))
        entries = []
        for label, assignment, p, avg in results:
            delta = None
            if ref is not None:
                # matched on every other sweep parameter
                key = {k: v for k, v in assignment.items() if k != spec.sweep[0][0]}
                match = next(r for r in results if _same(r[1][spec.sweep[0][0]], spec.delta_reference)
                             and all(_same(r[1][k], v) for k, v in key.items()))
                delta = np.abs(avg.m_mean - match[3].m_mean)
            path = out / f"{spec.preset}_{label}.csv"
            written.append(path)
            write_csv(path, avg, spec.record_sz, delta)
            entries.append({"file": path.name, "sweep": assignment, "params": p.to_dict()})
        manifest = {
            "package_version": __version__,
            "units": UNITS_NOTE,
            "engine": spec.engine,
            "seed": points[0][2].seed,
            "realizations": spec.realizations,
            "runs": entries,
            "spec": spec.to_dict(),
        }
        mpath = out / "manifest.json"
        written.append(mpath)
        mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
        return manifest
    except BaseException:
        for path in written:
            if path.exists():
                path.unlink()
        if created_dir and out.exists() and not any(out.iterdir()):
            out.rmdir()
        raise


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"cannot serialise {type(x).__name__}")


def workers_from_env() -> int:
    return int(os.environ.get("COMBDTC_WORKERS", "1"))
