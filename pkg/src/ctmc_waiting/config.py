"""JSON configs (models + plans) and report files.

A config is a JSON object::

    {
      "seed": 0,
      "output": "out",
      "models": {"x": {"states": [0, 1], "escape_rates": [1, 2],
                       "jump_matrix": [[0, 1], [1, 0]]}},
      "plans": {"lln_two_state": {"kind": "lln", "model_x": "x",
                                  "model_y": "y", "delta": 0.1,
                                  "n_grid": [200], "replicas": 200}}
    }

``model_y`` may be ``"reversed"``. Other plan keys mirror the fields of
:class:`~ctmc_waiting.estimators.ExperimentPlan`; ``schedule`` is
``{"a": .., "b": ..}``, ``gamma_model`` names a model and ``gamma_file``
points to a trajectory CSV. Every error message starts with the JSON path
of the offending item.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import fixtures, pathsim
from .core import CtmcModel
from .errors import CtmcError, ValidationError
from .estimators import EstimateReport, ExperimentPlan, Schedule

_PLAN_KEYS = {f.name for f in fields(ExperimentPlan)} - {"model_x", "model_y", "gamma_model", "gamma",
                                                         "schedule", "name"}
_TUPLE_KEYS = {"n_grid", "p_grid", "delta_grid"}


class ConfigError(ValidationError):
    """Invalid config item; ``path`` is the JSON path, e.g. ``plans.lln``."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class Config:
    models: dict = field(default_factory=dict)
    plans: dict = field(default_factory=dict)
    output: str = "out"
    seed: int = 0
    base: Path = field(default_factory=Path.cwd)


def parse_json(text: str, source: str = "<config>"):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(source, f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def load_raw(path: str | Path) -> dict:
    p = Path(path)
    data = parse_json(p.read_text(), str(p))
    if not isinstance(data, dict):
        raise ConfigError(str(p), "top level must be a JSON object")
    return data


def default_raw() -> dict:
    """Built-in config: the standard fixtures and one plan per experiment kind."""
    models = {name: m.to_dict() for name, m in fixtures.standard().items()}
    models["gamma_q"] = fixtures.two_state(1.0, 3.0).to_dict()
    two = {"model_x": "two_state_x", "model_y": "two_state_y"}
    cyc = {"model_x": "cycle", "model_y": "reversed"}
    plans = {
        "lln_two_state": {"kind": "lln", **two, "delta": 0.1, "n_grid": [200], "replicas": 200},
        "lln_cycle": {"kind": "lln", **cyc, "delta": 0.1, "n_grid": [200], "replicas": 200},
        "lln_schedule": {"kind": "lln_schedule", **two, "schedule": {"a": 1.0, "b": 1 / 3},
                         "n_grid": [50, 200, 800], "replicas": 200},
        "clt_two_state": {"kind": "clt", **two, "delta": 0.1, "n_grid": [400], "replicas": 500},
        "ldp_two_state": {"kind": "ldp_empirical", **two, "delta": 0.1, "n_grid": [200], "replicas": 2000,
                          "p_grid": [-0.5, -0.25, 0.0, 0.25, 0.5]},
        "ldp_cycle_symmetry": {"kind": "ldp_empirical", **cyc, "delta": 0.1, "n_grid": [50], "replicas": 5000,
                               "p_grid": [-0.75, -0.5, -0.25]},
        "expolaw": {"kind": "expolaw", **two, "delta": 0.5, "n_grid": [10], "replicas": 2000,
                    "n_patterns": 20},
        "shadow_functional": {"kind": "shadow", **two, "delta": 0.1, "n_grid": [200], "replicas": 200},
        "shadow_ergodic_q": {"kind": "shadow", **two, "delta": 0.1, "n_grid": [200], "replicas": 200,
                             "gamma_model": "gamma_q"},
        "naive_return": {"kind": "naive_return", "model_x": "cycle", "model_y": "cycle", "delta": None,
                         "replicas": 200, "budget": 10**7, "target_log_return": 12.0},
    }
    return {"seed": 0, "output": "out", "models": models, "plans": plans}


def _model(path: str, spec) -> CtmcModel:
    if not isinstance(spec, dict):
        raise ConfigError(path, "model must be a JSON object")
    try:
        return CtmcModel.from_dict(spec, name=path.rsplit(".", 1)[-1])
    except (CtmcError, ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from None


def _resolve(models: dict, path: str, name):
    if name not in models:
        raise ConfigError(path, f"unknown model {name!r}")
    return models[name]


def build_plan(name: str, spec, models: dict, seed: int = 0, base: Path | None = None) -> ExperimentPlan:
    path = f"plans.{name}"
    if not isinstance(spec, dict):
        raise ConfigError(path, "plan must be a JSON object")
    extra = set(spec) - _PLAN_KEYS - {"model_x", "model_y", "gamma_model", "gamma_file", "schedule"}
    if extra:
        raise ConfigError(path, f"unknown keys {sorted(extra)}")
    if "kind" not in spec:
        raise ConfigError(path, "missing required key 'kind'")
    if "model_x" not in spec:
        raise ConfigError(path, "missing required key 'model_x'")
    kw = {"seed": seed}
    for key in _PLAN_KEYS & set(spec):
        kw[key] = tuple(spec[key]) if key in _TUPLE_KEYS else spec[key]
    kw["model_x"] = _resolve(models, f"{path}.model_x", spec["model_x"])
    my = spec.get("model_y", "reversed")
    kw["model_y"] = my if my == "reversed" else _resolve(models, f"{path}.model_y", my)
    if "gamma_model" in spec:
        kw["gamma_model"] = _resolve(models, f"{path}.gamma_model", spec["gamma_model"])
    try:
        if "schedule" in spec:
            sch = spec["schedule"]
            if not isinstance(sch, dict) or set(sch) != {"a", "b"}:
                raise ConfigError(f"{path}.schedule", "schedule must be {\"a\": .., \"b\": ..}")
            kw["schedule"] = Schedule(float(sch["a"]), float(sch["b"]))
        if "gamma_file" in spec:
            gpath = Path(spec["gamma_file"])
            if base is not None and not gpath.is_absolute():
                gpath = base / gpath
            try:
                text = gpath.read_text()
            except OSError as exc:
                raise ConfigError(f"{path}.gamma_file", f"cannot read {gpath}: {exc.strerror}") from None
            kw["gamma"] = pathsim.trajectory_from_csv(text, kw["model_x"].states)
        plan = ExperimentPlan(name=name, **kw)
        return plan.validate()
    except ConfigError:
        raise
    except (CtmcError, ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from None


def check(raw: dict, base: Path | None = None) -> list[tuple[str, str | None]]:
    """Validate every item; return ``(json_path, error or None)`` pairs."""
    out = []
    models = {}
    for name, spec in (raw.get("models") or {}).items():
        try:
            models[name] = _model(f"models.{name}", spec)
            out.append((f"models.{name}", None))
        except ConfigError as exc:
            out.append((exc.path, str(exc)))
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        out.append(("seed", "seed: must be a 64-bit unsigned integer"))
        seed = 0
    for name, spec in (raw.get("plans") or {}).items():
        try:
            build_plan(name, spec, models, seed, base)
            out.append((f"plans.{name}", None))
        except ConfigError as exc:
            out.append((f"plans.{name}", str(exc)))
    return out


def load(raw: dict, base: Path | None = None) -> Config:
    """Build a :class:`Config`, raising :class:`ConfigError` on the first invalid item."""
    cfg = Config(output=raw.get("output", "out"), seed=raw.get("seed", 0), base=base or Path.cwd())
    for name, spec in (raw.get("models") or {}).items():
        cfg.models[name] = _model(f"models.{name}", spec)
    cfg.plans = dict(raw.get("plans") or {})
    return cfg


def plan_from(cfg: Config, name: str, seed: int | None = None) -> ExperimentPlan:
    if name not in cfg.plans:
        raise ConfigError(f"plans.{name}", "unknown plan")
    return build_plan(name, cfg.plans[name], cfg.models, cfg.seed if seed is None else seed, cfg.base)


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    if isinstance(v, (list, tuple)):
        return " ".join(str(x) for x in v)
    return v


def rows_to_csv(rows: list[dict]) -> str:
    keys: list[str] = []
    for r in rows:
        keys.extend(k for k in r if k not in keys)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _cell(r.get(k)) for k in keys})
    return buf.getvalue()


def columns_to_csv(header: tuple[str, str], xs, ys) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for a, b in zip(xs, ys):
        w.writerow([repr(float(a)), repr(float(b))])
    return buf.getvalue()


def write_report(report: EstimateReport, out_dir: Path, name: str) -> tuple[Path, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = out_dir / f"{name}.json"
    table = out_dir / f"{name}.csv"
    summary.write_text(json.dumps(report.summary(), indent=2, allow_nan=False) + "\n")
    table.write_text(rows_to_csv(report.rows))
    return summary, table
