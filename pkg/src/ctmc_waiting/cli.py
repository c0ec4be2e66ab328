"""Command-line front end.

Exit codes: 0 success, 1 usage or invalid input, 2 ``--strict`` run with
``|z| > 3``, 3 numeric failure (including absolute-continuity violations).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import config, core, estimators
from .errors import AbsoluteContinuityError, CtmcError, ExperimentError, NumericError, ValidationError

EXIT_OK, EXIT_USAGE, EXIT_STRICT, EXIT_NUMERIC = 0, 1, 2, 3
Z_LIMIT = 3.0


def _raw(args) -> tuple[dict, Path]:
    if args.config:
        return config.load_raw(args.config), Path(args.config).resolve().parent
    return config.default_raw(), Path.cwd()


def cmd_validate(args) -> int:
    raw, base = _raw(args)
    results = config.check(raw, base)
    for path, err in results:
        print(f"PASS {path}" if err is None else f"FAIL {err}")
    return EXIT_OK if all(err is None for _, err in results) else EXIT_USAGE


def cmd_list(args) -> int:
    raw, _ = _raw(args)
    for name, spec in (raw.get("models") or {}).items():
        print(f"model {name}: {len(spec.get('states', []))} states")
    for name, spec in (raw.get("plans") or {}).items():
        print(f"plan  {name}: {spec.get('kind', '?')}")
    return EXIT_OK


def _load_model(token: str, cfg: config.Config) -> core.CtmcModel:
    if token in cfg.models:
        return cfg.models[token]
    path = Path(token)
    if path.suffix == ".json" and path.exists():
        return config._model(token, config.parse_json(path.read_text(), token))
    raise config.ConfigError(f"models.{token}", "unknown model (neither a config name nor a .json file)")


def cmd_exact(args) -> int:
    raw, base = _raw(args)
    cfg = config.load(raw, base)
    mx = _load_model(args.model, cfg)
    if args.reversed or args.model2 is None:
        my, label = core.reverse(mx), "reversed"
    else:
        my, label = _load_model(args.model2, cfg), args.model2
    mu = core.stationary(mx)
    s = core.relative_entropy_rate(mx, my)
    out = {
        "model": args.model,
        "reference": label,
        "stationary": mu.tolist(),
        "relative_entropy_rate": s,
        "entropy_production_rate": core.entropy_production_rate(mx),
        "spectral_gap": core.spectral_gap(core.build_generator(mx)),
    }
    e_curve = core.continuous_scgf(mx, my)
    curves = {"E": e_curve}
    if args.delta is not None:
        px = core.discretized_transition_matrix(mx, args.delta)
        py = core.discretized_transition_matrix(my, args.delta)
        curves["F"] = core.discrete_scgf(px, py, mu, args.delta)
        m, v = core.discrete_mean_and_variance(px, py, mu, args.delta)
        out.update(delta=args.delta, m_delta=m, sigma2_delta=v)
    print(f"mu = {np.array2string(mu, precision=6)}")
    print(f"s(P|P~) = {s:.6f}")
    print(f"entropy production = {out['entropy_production_rate']:.6f}")
    print(f"spectral gap = {out['spectral_gap']:.6f}")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        for key, curve in curves.items():
            (out_dir / f"scgf_{key}.csv").write_text(config.columns_to_csv(("p", "value"), curve.p, curve.values))
            try:
                rate = core.legendre_transform(curve)
            except NumericError as exc:
                logging.warning("rate function for %s skipped: %s", key, exc)
                continue
            (out_dir / f"rate_{key}.csv").write_text(config.columns_to_csv(("q", "I"), rate.q, rate.values))
        (out_dir / "oracle.json").write_text(json.dumps(out, indent=2) + "\n")
    return EXIT_OK


def _summary_line(name: str, rep: estimators.EstimateReport) -> str:
    return (f"{name}: estimate={rep.estimate:.6f} stderr={rep.stderr:.6f} oracle={rep.oracle:.6f} "
            f"z={rep.z:.3f} censoring={rep.censoring_rate:.3f}")


def cmd_run(args) -> int:
    raw, base = _raw(args)
    cfg = config.load(raw, base)
    plan = config.plan_from(cfg, args.plan, args.seed)
    plan = estimators.with_overrides(
        plan,
        replicas=args.replicas,
        delta=args.delta,
        n_grid=None if args.n is None else (args.n,),
        budget=args.budget,
    ).validate()
    report = estimators.run(plan)
    out_dir = Path(args.out or cfg.output)
    try:
        config.write_report(report, out_dir, args.plan)
    except OSError as exc:
        raise config.ConfigError("output", f"cannot write to {out_dir}: {exc.strerror}") from None
    print(_summary_line(args.plan, report))
    if args.strict and not (math.isfinite(report.z) and abs(report.z) <= Z_LIMIT):
        return EXIT_STRICT
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ctmc-waiting", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_config(p):
        p.add_argument("--config", help="JSON config (default: built-in fixtures)")
        return p

    with_config(sub.add_parser("validate", help="check models and plans")).set_defaults(func=cmd_validate)
    with_config(sub.add_parser("list", help="list models and plans")).set_defaults(func=cmd_list)

    ex = with_config(sub.add_parser("exact", help="exact oracles for a model pair"))
    ex.add_argument("model")
    ex.add_argument("model2", nargs="?")
    ex.add_argument("--reversed", action="store_true", help="compare with the time reversal")
    ex.add_argument("--delta", type=float)
    ex.add_argument("--out", help="directory for curve CSVs")
    ex.set_defaults(func=cmd_exact)

    run = with_config(sub.add_parser("run", help="run a named experiment plan"))
    run.add_argument("plan")
    run.add_argument("--seed", type=int)
    run.add_argument("--replicas", type=int)
    run.add_argument("--out")
    run.add_argument("--strict", action="store_true", help="exit 2 when |z| > 3")
    run.add_argument("--delta", type=float)
    run.add_argument("--n", type=int)
    run.add_argument("--budget", type=int)
    run.set_defaults(func=cmd_run)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (NumericError, AbsoluteContinuityError, ExperimentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValidationError, CtmcError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
