"""``dvfsim`` command line: experiment sweeps, traces and the self-test.

Every subcommand writes a table (CSV, or JSON with ``--format json``) plus a
``<name>_report.json`` summary into ``--out``. Exit status: 0 success,
2 configuration error, 3 acceptance failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__
from . import acceptance
from . import experiments as ex
from . import freqopt as fo
from .mac80154 import MacError
from .netstack import NetstackError
from .powermodel import CalibrationProfile, ClockConfig, PowerModelError, default_profile
from .simcore import Scenario, export_trace, run

EXIT_OK, EXIT_CONFIG, EXIT_ACCEPTANCE = 0, 2, 3

COLUMNS = {
    "baseline": ("radio", "lpm", "source", "mhz", "voltage_V", "seed", "average_current_mA", "energy_J",
                 "rel_current"),
    "dsme": ("gts", "dir", "source", "mhz", "voltage_V", "seed", "energy_J", "average_current_mA",
             "deadline_misses", "rel_energy"),
    "coap": ("mac", "method", "payload", "secure", "source", "mhz", "voltage_V", "seed", "requests",
             "per_request_J", "burst_s", "rel_energy"),
    "optimize": ("task", "source", "mhz", "voltage_V", "time_s", "energy_J", "edp_Js", "cycles",
                 "rel_time", "rel_energy", "rel_edp", "rel_cycles"),
}


class CliError(Exception):
    """Bad configuration supplied on the command line."""


# -- shared plumbing -----------------------------------------------------------------


def _profile(args) -> CalibrationProfile:
    if not args.profile:
        return default_profile()
    try:
        return CalibrationProfile.load(args.profile)
    except (OSError, ValueError, TypeError, KeyError) as exc:
        raise CliError(f"cannot load profile {args.profile}: {exc}") from exc


def _levels(args, profile: CalibrationProfile) -> list[ClockConfig]:
    if not args.levels:
        return profile.all_configs()
    try:
        return fo.levels_from_spec(args.levels, profile)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _base(args, default: str) -> dict:
    """Scenario dict from ``--scenario`` (a JSON path) or ``--preset``."""
    if getattr(args, "scenario", None):
        try:
            return json.loads(Path(args.scenario).read_text())
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot read scenario {args.scenario}: {exc}") from exc
    name = getattr(args, "preset", None) or default
    try:
        return ex.preset_dict(name)
    except ex.UnknownPreset:
        raise CliError(f"unknown preset {name!r}; known: {', '.join(ex.preset_names())}") from None


def _seeds(args) -> list[int]:
    return [args.seed + i for i in range(max(1, args.repeat))]


def _cfg_cols(cfg: ClockConfig) -> dict:
    return {"source": cfg.kind.value, "mhz": cfg.mhz, "voltage_V": cfg.core_voltage}


def _relative(rows: list[dict], group: Sequence[str], value: str, out: str, profile: CalibrationProfile) -> None:
    """Divide ``value`` by the f_max PLL row of the same group (None when that row is absent)."""
    ref = {}
    for r in rows:
        if r["mhz"] == profile.f_max_MHz and r["source"] == "pll":
            ref[tuple(r[g] for g in group)] = r[value]
    for r in rows:
        base = ref.get(tuple(r[g] for g in group))
        r[out] = r[value] / base if base else None


def _map(fn, cells: list, jobs: int) -> list:
    # results come back in submission order, so the collector writes a stable file
    if jobs <= 1 or len(cells) < 2:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, cells))


def _write(args, name: str, rows: list[dict], report: dict) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "json":
        table = out / f"{name}.json"
        table.write_text(json.dumps(rows, indent=2) + "\n")
    else:
        table = out / f"{name}.csv"
        with table.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=COLUMNS.get(name, tuple(rows[0]) if rows else ()), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    (out / f"{name}_report.json").write_text(json.dumps({"rows": len(rows), **report}, indent=2, default=str) + "\n")
    return table


# -- cells (module level so worker processes can pickle them) -------------------------


def _baseline_cell(cell):
    prof_d, base, radio, lpm, mhz, source, seed = cell
    profile = CalibrationProfile.from_dict(prof_d)
    cfg = profile.config(mhz, source)
    report = run(ex.scenario(base, profile, cfg, lpm=lpm, seed=seed))[1]
    return {"radio": radio, "lpm": lpm, **_cfg_cols(cfg), "seed": seed,
            "average_current_mA": report.average_current_mA, "energy_J": report.energy.energy_J}


def _dsme_cell(cell):
    prof_d, base, gts, direction, mhz, source, seed = cell
    profile = CalibrationProfile.from_dict(prof_d)
    cfg = profile.config(mhz, source)
    mac = {"gts_alternating": gts} if direction == "alt" else {"gts_spread": {"count": gts, "dir": direction}}
    if not gts:
        mac = {}
    report = run(ex.scenario(base, profile, cfg, mac=mac, seed=seed))[1]
    return {"gts": gts, "dir": direction, **_cfg_cols(cfg), "seed": seed, "energy_J": report.energy.energy_J,
            "average_current_mA": report.average_current_mA, "deadline_misses": len(report.deadline_misses)}


def _coap_cell(cell):
    prof_d, mac, method, payload, secure, mhz, source, seed = cell
    profile = CalibrationProfile.from_dict(prof_d)
    cfg = profile.config(mhz, source)
    report = ex.coap_run(profile, mac, method, payload, secure, cfg, seed=seed)
    return {"mac": mac, "method": method, "payload": payload, "secure": secure, **_cfg_cols(cfg), "seed": seed,
            "requests": len(report.requests), "per_request_J": report.per_request_mean_J,
            "burst_s": report.timing.get("burst_s")}


# -- subcommands -------------------------------------------------------------------------


def cmd_baseline(args) -> int:
    profile = _profile(args)
    levels = _levels(args, profile)
    radios = {"off": "sleep", "on": "radio_on"}
    lpms = {"on": [True], "off": [False], "both": [True, False]}[args.lpm]
    cells = [(profile.to_dict(), radios[r], r, lpm, c.mhz, c.kind.value, s)
             for r in (radios if args.radio == "both" else [args.radio]) for lpm in lpms for c in levels
             for s in _seeds(args)]
    rows = _map(_baseline_cell, cells, args.jobs)
    _relative(rows, ("radio", "lpm", "seed"), "average_current_mA", "rel_current", profile)
    path = _write(args, "baseline", rows, {"levels": [c.label() for c in levels]})
    print(f"baseline: {len(rows)} rows -> {path}")
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise CliError(f"expected a comma separated list of integers, got {text!r}") from None


def cmd_dsme(args) -> int:
    profile = _profile(args)
    levels = _levels(args, profile)
    base = _base(args, "dsme_idle")
    cells = []
    for gts in _int_list(args.gts):
        for direction in (["alt"] if gts == 0 else args.dir.split(",")):
            cells += [(profile.to_dict(), base, gts, direction, c.mhz, c.kind.value, s) for c in levels for s in _seeds(args)]
    rows = _map(_dsme_cell, cells, args.jobs)
    _relative(rows, ("gts", "dir", "seed"), "energy_J", "rel_energy", profile)
    path = _write(args, "dsme", rows, {"levels": [c.label() for c in levels]})
    rel = [{k: r[k] for k in ("gts", "dir", "source", "mhz", "seed", "rel_energy", "deadline_misses")} for r in rows]
    _write(args, "dsme_relative", rel, {"reference": f"{profile.f_max_MHz:g} MHz PLL"})
    for r in rows:
        if r["rel_energy"] is not None:
            print(f"gts {r['gts']:>2} {r['dir']:>4} {r['mhz']:>4g} MHz {r['source']:>3}: "
                  f"relative {r['rel_energy']:.3f}, misses {r['deadline_misses']}")
    print(f"dsme: {len(rows)} rows -> {path}")
    return EXIT_OK


def cmd_coap(args) -> int:
    profile = _profile(args)
    levels = _levels(args, profile)
    macs = [args.mac] if args.mac else list(ex.MAC_MODES)
    methods = [args.method.upper()] if args.method else list(ex.METHODS)
    payloads = _int_list(args.payload) if args.payload else list(ex.PAYLOADS)
    secures = [args.secure] if args.secure is not None else [False, True]
    cells = [(profile.to_dict(), mac, m, n, sec, c.mhz, c.kind.value, s)
             for mac in macs for m in methods for n in payloads for sec in secures for c in levels for s in _seeds(args)]
    rows = _map(_coap_cell, cells, args.jobs)
    _relative(rows, ("mac", "method", "payload", "secure", "seed"), "per_request_J", "rel_energy", profile)
    path = _write(args, "coap", rows, {"levels": [c.label() for c in levels]})
    for r in rows:
        print(f"{r['mac']:>4} {r['method']:>4} {r['payload']:>3} B {'coaps' if r['secure'] else 'coap ':5} "
              f"{r['mhz']:>4g} MHz {r['source']:>3}: {r['per_request_J'] * 1e6:8.1f} uJ/request"
              + (f", relative {r['rel_energy']:.3f}" if r["rel_energy"] is not None else ""))
    print(f"coap: {len(rows)} rows -> {path}")
    return EXIT_OK


def cmd_trace(args) -> int:
    profile = _profile(args)
    base = _base(args, "fft_switch")
    overrides = {"seed": args.seed}
    if args.duration is not None:
        overrides["duration_s"] = args.duration
    cfg = _levels(args, profile)[0] if args.levels else None
    scenario: Scenario = ex.scenario(base, profile, cfg, **overrides)
    trace, report = run(scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = export_trace(trace, out / "trace.csv")
    (out / "trace_report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    print(f"trace: {len(trace.segments)} segments, {report.energy.energy_J * 1e6:.3f} uJ over "
          f"{report.energy.duration_s:g} s -> {path}")
    for rid, r in report.per_request.items():
        print(f"  {rid}: {r.energy_J * 1e6:.2f} uJ")
    return EXIT_OK


def _task(args, profile: CalibrationProfile) -> fo.TaskProfile:
    if args.task_file:
        try:
            return fo.TaskProfile.from_dict(json.loads(Path(args.task_file).read_text()))
        except (OSError, ValueError, TypeError) as exc:
            raise CliError(f"cannot read task profile {args.task_file}: {exc}") from exc
    if args.task == "fft":
        return fo.fft_profile(profile)
    trace, _ = run(ex.scenario("idtx_poll", profile, ex.f_max(profile)))
    return fo.extract_request_profile(trace, "poll1")


def cmd_optimize(args) -> int:
    profile = _profile(args)
    levels = _levels(args, profile)
    task = _task(args, profile)
    rows = fo.sweep(task, levels, profile)
    table = [{"task": task.label or args.task, **{k: v for k, v in r.as_dict().items()}} for r in rows]
    best = {m.value: fo.select_optimal(rows, m).label() for m in fo.Metric}
    path = _write(args, "optimize", table, {"task": task.to_dict(), "optimal": best})
    for m, label in best.items():
        print(f"optimal for {m}: {label}")
    print(f"optimize: {len(rows)} rows -> {path}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    profile = _profile(args)
    only = set(_int_list(args.only)) if args.only else None
    results = acceptance.run_all(profile, only)
    for r in results:
        print(r.line())
    rows = [{"criterion": r.number, "title": r.title, "passed": r.passed, "detail": r.detail} for r in results]
    _write(args, "selftest", rows, {"values": {r.number: r.values for r in results}})
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return EXIT_ACCEPTANCE if failed else EXIT_OK


# -- parser --------------------------------------------------------------------------


def _bool_flag(text: str) -> bool:
    return text.lower() in ("1", "true", "yes", "on")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--profile", help="calibration profile JSON (default: shipped profile)")
    common.add_argument("--levels", help="clock levels, e.g. 24,80 or 24rc,80pll (default: all)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--repeat", type=int, default=1, help="runs per cell with consecutive seeds")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweep cells")
    scen = argparse.ArgumentParser(add_help=False)
    scen.add_argument("--preset", help=f"scenario preset ({', '.join(ex.preset_names())})")
    scen.add_argument("--scenario", help="scenario JSON file")

    ap = argparse.ArgumentParser(prog="dvfsim", description="DVFS energy experiments for an 802.15.4 node.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("baseline", parents=[common], help="radio on/off x LPM on/off x clock level")
    p.add_argument("--radio", choices=("on", "off", "both"), default="both")
    p.add_argument("--lpm", choices=("on", "off", "both"), default="both")
    p.set_defaults(fn=cmd_baseline)

    p = sub.add_parser("dsme", parents=[common, scen], help="DSME GTS count x direction x clock level")
    p.add_argument("--gts", default="0,8,16,32", help="GTS counts")
    p.add_argument("--dir", default="up,down", help="directions for non-zero counts: up, down, alt")
    p.set_defaults(fn=cmd_dsme)

    p = sub.add_parser("coap", parents=[common], help="per-request CoAP(S) energy")
    p.add_argument("--mac", choices=ex.MAC_MODES)
    p.add_argument("--method", type=str.upper, choices=ex.METHODS)
    p.add_argument("--payload", help="payload sizes in bytes, comma separated")
    p.add_argument("--secure", nargs="?", const=True, default=None, type=_bool_flag,
                   help="CoAPS only (or --secure false for plain only; default both)")
    p.set_defaults(fn=cmd_coap)

    p = sub.add_parser("trace", parents=[common, scen], help="power trace of one scenario")
    p.add_argument("--duration", type=float, help="override the scenario duration in seconds")
    p.set_defaults(fn=cmd_trace)

    p = sub.add_parser("optimize", parents=[common], help="offline frequency sweep of a task profile")
    p.add_argument("--task", choices=("fft", "idtx-request"), default="fft")
    p.add_argument("--task-file", help="task profile JSON")
    p.set_defaults(fn=cmd_optimize)

    p = sub.add_parser("selftest", parents=[common], help="run the acceptance checks")
    p.add_argument("--only", help="criterion numbers, comma separated")
    p.set_defaults(fn=cmd_selftest)
    return ap


def main(argv: Iterable[str] | None = None) -> int:
    args = build_parser().parse_args(None if argv is None else list(argv))
    try:
        return args.fn(args)
    except (CliError, PowerModelError, MacError, NetstackError, ex.UnknownPreset, ValueError, KeyError) as exc:
        print(f"dvfsim {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
