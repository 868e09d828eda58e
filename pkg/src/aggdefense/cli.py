"""Command line entry point: ``aggdefense run|oracle|report``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .harness import RunConfig, default_out_dir, read_metrics, replay_oracle, run, write_report
from .scenarios import PRESETS, ConfigError, ScenarioSpec, preset

log = logging.getLogger("aggdefense")


def _load_config_file(path: Path) -> tuple[ScenarioSpec, dict]:
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    data = yaml.safe_load(path.read_text())
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    if "scenario" in data:
        scen, flags = data["scenario"], data.get("run", {}) or {}
    else:
        scen, flags = data, {}
    if isinstance(scen, str):
        return preset(scen), flags
    return ScenarioSpec.from_dict(scen, base_dir=path.parent), flags


def cmd_run(args) -> int:
    flags: dict = {}
    if args.config:
        spec, flags = _load_config_file(Path(args.config))
    elif args.preset:
        spec = preset(args.preset)
    else:
        raise ConfigError("run needs --config or --preset")
    for key in ("seed", "horizon", "box_timing", "strict_kalman_init", "barrier", "oracle", "prediction",
                "measurement_noise", "b_window"):
        val = getattr(args, key, None)
        if val is not None:
            flags[key] = val
    out = Path(args.out) if args.out else default_out_dir(spec.name)
    cfg = RunConfig(scenario=spec, out_dir=out, **flags)
    result = run(cfg)
    print(json.dumps(result.summary, indent=2, sort_keys=True))
    print(f"wrote {out}")
    return 0


def cmd_oracle(args) -> int:
    trace = Path(args.trace)
    if not (trace / "config.yaml").exists():
        raise ConfigError(f"no run found in {trace}")
    gaps, cum, total = replay_oracle(trace)
    rows = read_metrics(trace / "metrics.csv")
    logged = [float(r["cumulative_regret"]) for r in rows if r["cumulative_regret"] and int(r["t"]) >= 1]
    print(f"replayed R_T = {total!r}")
    if logged:
        diff = float(np.max(np.abs(np.array(logged) - cum)))
        print(f"in-run R_T = {logged[-1]!r}; max |difference| = {diff:.3e}")
        if diff > 1e-9:
            print("replay does not match the in-run regret", file=sys.stderr)
            return 1
    return 0


def cmd_report(args) -> int:
    trace = Path(args.trace)
    if not (trace / "metrics.csv").exists():
        raise ConfigError(f"no run found in {trace}")
    paths = write_report(trace, Path(args.out) if args.out else None)
    for p in paths.values():
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aggdefense", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario")
    r.add_argument("--config", help="YAML scenario file")
    r.add_argument("--preset", choices=sorted(PRESETS))
    r.add_argument("--seed", type=int)
    r.add_argument("--horizon", type=int)
    r.add_argument("--out", help="output directory (default $AGGDEF_OUT/<name> or runs/<name>)")
    r.add_argument("--box-timing", choices=["predicted", "strict"])
    r.add_argument("--strict-kalman-init", action="store_true", default=None)
    r.add_argument("--barrier", action=argparse.BooleanOptionalAction, default=None)
    r.add_argument("--oracle", action=argparse.BooleanOptionalAction, default=None)
    r.add_argument("--prediction", action=argparse.BooleanOptionalAction, default=None)
    r.add_argument("--measurement-noise", action=argparse.BooleanOptionalAction, default=None)
    r.add_argument("--b-window", type=int)
    r.set_defaults(func=cmd_run)

    o = sub.add_parser("oracle", help="recompute dynamic regret from a run directory")
    o.add_argument("--trace", required=True)
    o.set_defaults(func=cmd_oracle)

    rp = sub.add_parser("report", help="write plot-ready CSVs for a run directory")
    rp.add_argument("--trace", required=True)
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
