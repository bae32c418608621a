"""Command-line interface.

::

    spacepki run --scenario ipki_case1 --format csv --out case1.csv
    spacepki compare --golden
    spacepki compare --scenario comparison --schemes SPCPKI_LOCAL,IPKI_CASE1,IPKI_CASE2,RELAY_GEO
    spacepki windows --scenario revisit --pair SPC_RP:0,GROUND_STATION:0 --horizon 86400
    spacepki validate --fixture fixtures/bridge_valid.json --target SatA --anchor Grd-BCA

Bare scenario names resolve against the bundled ``scenarios/`` directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import __version__
from .actors import ActorId
from .fixtures import FixtureError, load_fixture
from .geometry import visibility_windows
from .scenarios import (
    SCHEMA_VERSION,
    Comparison,
    ConfigurationError,
    Scenario,
    SchemeId,
    compare_schemes,
    run_scenario,
    scenario_from_dict,
)
from .trust import validate_target

SCENARIO_DIR = Path(__file__).resolve().parents[2] / "scenarios"
GOLDEN_BUNDLE = ("ipki_case1", "ipki_case1_meo", "ipki_case2", "ipki_case2_meo", "relay_geo")


class CliError(Exception):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class CliConfig:
    subcommand: str
    scenario_paths: list = field(default_factory=list)
    output_path: Optional[str] = None
    output_format: str = "json"
    seed: Optional[int] = None
    duration_s: Optional[float] = None
    trace: bool = False
    schemes: list = field(default_factory=list)
    pair: Optional[str] = None
    horizon_s: float = 86_400.0
    fixture_path: Optional[str] = None
    target: Optional[str] = None
    anchor: Optional[str] = None
    at_s: float = 0.0


def resolve_scenario_path(name) -> Path:
    p = Path(name)
    if p.exists():
        return p
    for cand in (SCENARIO_DIR / name, SCENARIO_DIR / f"{name}.json"):
        if cand.exists():
            return cand
    raise CliError([f"scenario {str(name)!r} not found (also looked in {SCENARIO_DIR})"])


def load_scenario(path, seed: Optional[int] = None, duration_s: Optional[float] = None) -> Scenario:
    """Read, version-check and validate a scenario file."""
    path = resolve_scenario_path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise CliError([f"{path}: {e.strerror}"]) from e
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise CliError([f"{path}:{e.lineno}:{e.colno}: {e.msg}"]) from e
    if not isinstance(d, dict):
        raise CliError([f"{path}: top level must be an object"])
    version = d.get("schema_version")
    if version is None:
        raise CliError([f"{path}: missing schema_version"])
    if str(version).split(".")[0] != SCHEMA_VERSION.split(".")[0]:
        raise CliError([f"{path}: unsupported schema_version {version!r} (supported: {SCHEMA_VERSION})"])
    if seed is not None:
        d["seed"] = seed
    if duration_s is not None:
        d["duration_s"] = duration_s
    try:
        return scenario_from_dict(d, name=path.stem)
    except ConfigurationError as e:
        raise CliError([f"{path}: {err}" for err in e.errors]) from e


def _write(path, text: str):
    try:
        Path(path).write_text(text)
    except OSError as e:
        raise CliError([f"cannot write {path}: {e.strerror}"]) from e


def cmd_run(cfg: CliConfig) -> int:
    if len(cfg.scenario_paths) != 1:
        raise CliError(["run takes exactly one --scenario"])
    s = load_scenario(cfg.scenario_paths[0], cfg.seed, cfg.duration_s)
    report = run_scenario(s)
    text = report.to_json() if cfg.output_format == "json" else report.to_csv()
    if cfg.output_path:
        _write(cfg.output_path, text)
        t = report.summary["total_s"]
        mean = "-" if t["mean"] is None else f"{t['mean'] * 1000:.3f} ms"
        print(f"{s.name}: {report.summary['requests']} requests, "
              f"{report.summary['completed']} completed, mean total {mean} -> {cfg.output_path}",
              file=sys.stderr)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    if cfg.trace:
        trace_path = (Path(cfg.output_path).with_suffix(".trace.jsonl") if cfg.output_path
                      else Path(f"{s.name}.trace.jsonl"))
        _write(trace_path, "".join(line + "\n" for line in report.trace))
        print(f"trace -> {trace_path}", file=sys.stderr)
    return 0


def cmd_compare(cfg: CliConfig) -> int:
    if not cfg.scenario_paths:
        raise CliError(["compare needs --scenario (repeatable) or --golden"])
    scenarios = [load_scenario(p, cfg.seed, cfg.duration_s) for p in cfg.scenario_paths]
    reports = {}
    for s in scenarios:
        if cfg.schemes:
            for label, rep in compare_schemes(s, cfg.schemes).reports.items():
                reports[f"{s.name}:{label}"] = rep
        else:
            reports[f"{s.name}:{s.scheme.value}"] = run_scenario(s)
    table = Comparison(reports)
    print(table.to_text())
    if cfg.output_path:
        _write(cfg.output_path, table.to_json() if cfg.output_format == "json" else table.to_csv())
    return 0


def _resolve_node(s: Scenario, token: str) -> ActorId:
    token = token.strip()
    for n in s.nodes:
        if str(n.actor) == token or (n.entity is not None and n.entity == token):
            return n.actor
    raise CliError([f"unknown pair member {token!r}; known: {[str(n.actor) for n in s.nodes]}"])


def cmd_windows(cfg: CliConfig) -> int:
    if len(cfg.scenario_paths) != 1 or not cfg.pair:
        raise CliError(["windows needs one --scenario and --pair A,B"])
    s = load_scenario(cfg.scenario_paths[0], cfg.seed, cfg.duration_s)
    parts = cfg.pair.split(",")
    if len(parts) != 2:
        raise CliError([f"--pair expects two comma-separated names, got {cfg.pair!r}"])
    a, b = (_resolve_node(s, p) for p in parts)
    o = s.options
    wins = visibility_windows(s.node(a).geometry, s.node(b).geometry, 0.0, cfg.horizon_s, o.los,
                              o.window_step_s, o.window_tol_s)
    print(f"{a} <-> {b}: {len(wins)} window(s) in [0, {cfg.horizon_s:g}] s")
    for k, w in enumerate(wins):
        print(f"  {k:3d}  start {w.start_s:12.1f} s  end {w.end_s:12.1f} s  "
              f"duration {w.duration_s / 60.0:8.2f} min")
    return 0


def cmd_validate(cfg: CliConfig) -> int:
    if not (cfg.fixture_path and cfg.target and cfg.anchor):
        raise CliError(["validate needs --fixture, --target and --anchor"])
    fx = load_fixture(cfg.fixture_path)
    try:
        anchor = fx.anchor(cfg.anchor)
        target = fx.subject(cfg.target)
    except KeyError as e:
        raise CliError([f"{cfg.fixture_path}: {e.args[0]}"]) from e
    result = validate_target(fx.graph(), target, anchor, cfg.at_s, fx.crls, fx.policy_context())
    if cfg.output_format == "json":
        print(json.dumps(result.to_dict(), indent=2, sort_keys=True))
    else:
        print(f"status: {result.status.value}")
        print(f"path ({len(result.path)}): {' -> '.join(c.subject_name for c in result.path)}")
        for name, outcome in result.checks.items():
            print(f"  {name:<12} {outcome}")
        if result.detail:
            print(f"detail: {result.detail}")
    if not result.valid:
        print(f"error: {cfg.target} did not validate: {result.status.value}", file=sys.stderr)
        return 1
    return 0


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "windows": cmd_windows, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spacepki", description="Space PKI validation latency simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="subcommand", required=True)

    def common(sp, multi=False):
        sp.add_argument("--scenario", action="append" if multi else "store", required=not multi,
                        help="scenario file or bundled scenario name")
        sp.add_argument("--out", help="output file")
        sp.add_argument("--format", choices=("csv", "json"), default="json")
        sp.add_argument("--seed", type=int, help="override the scenario seed")
        sp.add_argument("--duration", type=float, help="override the run duration (s)")

    run = sub.add_parser("run", help="run one scenario and emit its latency report")
    common(run)
    run.add_argument("--trace", action="store_true", help="write the event trace next to the report")

    cmp_ = sub.add_parser("compare", help="run schemes side by side")
    common(cmp_, multi=True)
    cmp_.add_argument("--schemes", help="comma-separated schemes to run on each scenario")
    cmp_.add_argument("--golden", action="store_true", help="add the bundled golden latency scenarios")

    win = sub.add_parser("windows", help="list visibility windows between two nodes")
    win.add_argument("--scenario", required=True)
    win.add_argument("--pair", required=True, help="two actor ids or entity names, comma-separated")
    win.add_argument("--horizon", type=float, default=86_400.0, help="seconds from t=0")

    val = sub.add_parser("validate", help="validate a certificate offline from a fixture")
    val.add_argument("--fixture", required=True)
    val.add_argument("--target", required=True, help="subject name of the certificate to check")
    val.add_argument("--anchor", required=True, help="subject name of the trust anchor")
    val.add_argument("--at", type=float, default=0.0, help="validation time (s)")
    val.add_argument("--format", choices=("text", "json"), default="text")
    return p


def config_from_args(ns) -> CliConfig:
    scen = ns.scenario if isinstance(getattr(ns, "scenario", None), list) else (
        [ns.scenario] if getattr(ns, "scenario", None) else [])
    if getattr(ns, "golden", False):
        scen = scen + list(GOLDEN_BUNDLE)
    schemes = []
    if getattr(ns, "schemes", None):
        for x in ns.schemes.split(","):
            try:
                schemes.append(SchemeId(x.strip()))
            except ValueError:
                raise CliError([f"unknown scheme {x.strip()!r}; expected one of "
                                f"{[s.value for s in SchemeId]}"]) from None
    return CliConfig(
        subcommand=ns.subcommand, scenario_paths=scen, output_path=getattr(ns, "out", None),
        output_format=getattr(ns, "format", "json"), seed=getattr(ns, "seed", None),
        duration_s=getattr(ns, "duration", None), trace=getattr(ns, "trace", False),
        schemes=schemes, pair=getattr(ns, "pair", None),
        horizon_s=getattr(ns, "horizon", 86_400.0), fixture_path=getattr(ns, "fixture", None),
        target=getattr(ns, "target", None), anchor=getattr(ns, "anchor", None),
        at_s=getattr(ns, "at", 0.0))


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(ns)
        return COMMANDS[cfg.subcommand](cfg)
    except (CliError, FixtureError, ConfigurationError) as e:
        for err in e.errors:
            print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
