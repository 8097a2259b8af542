"""Command-line front end.

Four subcommands:

``simulate``  one scenario cell over one or more seeds, merged statistics
              written as CSV files;
``analyze``   closed-form gap-tail curves for a parameter set;
``compare``   slope and anchored-gap agreement between a measured CCDF file
              and the closed-form tail;
``report``    a preset campaign grid plus the cross-cell comparison tables.

Configuration comes from an INI file (``--config``) with ``[scenario]``,
``[sps]``, ``[channel]`` and ``[tail]`` sections, overridable key by key
with ``--set section.key=value``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .campaign import emit_tables, preset_cells, run_campaign, write_manifest
from .channel import ChannelConfig
from .engine import Simulation
from .scenario import (InvalidConfigError, ScenarioConfig, SpsConfig,
                       apply_overrides, build_world, coerce_kwargs,
                       config_hash, load_config_file)
from .tailmodel import (TailModelParams, compare_tail, fit_log_slope,
                        slippage_gamma, tail_no_slippage, tail_with_slippage)

_SECTIONS = ("scenario", "sps", "channel", "tail")


def _load_tree(args) -> dict[str, dict[str, str]]:
    tree = load_config_file(args.config) if args.config else {}
    apply_overrides(tree, args.set or [])
    for section in tree:
        if section not in _SECTIONS:
            raise InvalidConfigError(f"unknown config section [{section}]")
    return tree


def _build_configs(tree) -> tuple[ScenarioConfig, SpsConfig, ChannelConfig]:
    sc = ScenarioConfig(**coerce_kwargs(
        ScenarioConfig, tree.get("scenario", {}), "scenario"))
    sps = SpsConfig(**coerce_kwargs(SpsConfig, tree.get("sps", {}), "sps"))
    chan = ChannelConfig(**coerce_kwargs(
        ChannelConfig, tree.get("channel", {}), "channel"))
    return sc, sps, chan


def _tail_params(tree) -> TailModelParams:
    params = TailModelParams(**coerce_kwargs(
        TailModelParams, tree.get("tail", {}), "tail"))
    params.validate()
    return params


def _parse_seeds(text: str) -> tuple[int, ...]:
    """Either an explicit list ``1,2,3`` or a count ``4`` meaning seeds 1..4."""
    if "," in text:
        return tuple(int(p) for p in text.split(",") if p.strip())
    return tuple(range(1, int(text) + 1))


# -- simulate ----------------------------------------------------------------

def _write_trace(path: Path, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gen_subframe", "vehicle", "tx_subframe", "phase", "pair",
                    "origin", "c_s", "c_o"])
        w.writerows(rows)


def _cmd_simulate(args) -> int:
    tree = _load_tree(args)
    sc, sps, chan = _build_configs(tree)
    seeds = _parse_seeds(args.seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace_vids = (tuple(int(v) for v in args.trace.split(","))
                  if args.trace else ())

    merged = None
    for seed in seeds:
        world = build_world(dataclasses.replace(sc, master_seed=seed), sps)
        event_fh = (out / f"events_{seed}.bin").open("wb") if args.events else None
        try:
            sim = Simulation(world, chan, trace_vids=trace_vids,
                             event_log=event_fh)
            store = sim.run()
        finally:
            if event_fh is not None:
                event_fh.close()
        if trace_vids:
            _write_trace(out / f"trace_{seed}.csv", sim.trace_rows)
        merged = store if merged is None else merged.merge(store)

    files = merged.emit_csvs(out)
    manifest = {
        "version": __version__,
        "config_hash": config_hash(sc, sps, chan),
        "seeds": list(seeds),
        "n_vehicles": sc.n_vehicles,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    files.append(path)

    cbr = merged.cbr_mean()
    interval = merged.mean_interval_ms()
    print(f"{len(seeds)} run(s), {sc.n_vehicles} vehicles: "
          f"{merged.tx_events} tx, {merged.rx_events} rx"
          + (f", CBR {cbr:.3f}" if cbr is not None else "")
          + (f", mean interval {interval:.1f} ms" if interval is not None else ""))
    print(f"wrote {len(files)} files to {out}")
    return 0


# -- analyze -----------------------------------------------------------------

def _safe_slope(t_ms, values) -> float | None:
    try:
        return fit_log_slope(t_ms, values)
    except ValueError:
        return None


def _cmd_analyze(args) -> int:
    tree = _load_tree(args)
    params = _tail_params(tree)
    plain = tail_no_slippage(params)
    drift = tail_with_slippage(params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    path = out / "model_tail.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "t_ms", "ccdf_counters", "ccdf_with_drift"])
        for k in range(len(plain.exceed)):
            w.writerow([k, f"{k * params.interval_ms:.10g}",
                        f"{plain.exceed[k]:.10g}", f"{drift.exceed[k]:.10g}"])

    psi = params.interval_ms % params.pdb_ms
    gamma = slippage_gamma(params.t1_ms, params.pdb_ms)
    s_plain = _safe_slope(plain.t_ms, plain.exceed)
    s_drift = _safe_slope(drift.t_ms, drift.exceed)
    fmt = lambda x: "" if x is None else f"{x:.10g}"
    path2 = out / "model_summary.csv"
    with path2.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["interval_ms", "psi_ms", "gamma",
                    "slope_counters", "slope_with_drift"])
        w.writerow([f"{params.interval_ms:.10g}", f"{psi:.10g}",
                    f"{gamma:.10g}", fmt(s_plain), fmt(s_drift)])

    print(f"interval {params.interval_ms:g} ms, drift per cycle {psi:g} ms; "
          f"tail slope {fmt(s_plain) or 'n/a'} 1/s without drift, "
          f"{fmt(s_drift) or 'n/a'} 1/s with it")
    print(f"wrote {path} and {path2}")
    return 0


# -- compare -----------------------------------------------------------------

def _load_ccdf_csv(path: str) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = data[:, 0].astype(int)
    if not np.array_equal(t, np.arange(len(t))):
        raise InvalidConfigError(
            f"{path}: expected a dense 1 ms grid starting at 0")
    return data[:, 1]


def _cmd_compare(args) -> int:
    tree = _load_tree(args)
    params = _tail_params(tree)
    curve = (tail_with_slippage(params) if args.slippage == "on"
             else tail_no_slippage(params))
    sim = _load_ccdf_csv(args.sim)
    result = compare_tail(curve, sim, anchor_ms=args.anchor_ms)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "comparison.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["slope_model", "slope_sim", "slope_ratio", "rms_log_gap",
                    "anchor_ms", "slippage"])
        w.writerow([f"{result.slope_model:.10g}", f"{result.slope_sim:.10g}",
                    f"{result.slope_ratio:.10g}", f"{result.rms_log_gap:.10g}",
                    args.anchor_ms, args.slippage])

    print(f"model slope {result.slope_model:.3f} 1/s, measured "
          f"{result.slope_sim:.3f} 1/s, ratio {result.slope_ratio:.3f}, "
          f"anchored RMS log gap {result.rms_log_gap:.3f}")
    print(f"wrote {path}")
    return 0


# -- report ------------------------------------------------------------------

def _cmd_report(args) -> int:
    tree = _load_tree(args)
    cells = preset_cells(args.preset)
    for cell in cells:
        if "scenario" in tree:
            cell.scenario = dataclasses.replace(cell.scenario, **coerce_kwargs(
                ScenarioConfig, tree["scenario"], "scenario"))
        if "sps" in tree:
            cell.sps = dataclasses.replace(cell.sps, **coerce_kwargs(
                SpsConfig, tree["sps"], "sps"))
        if "channel" in tree:
            cell.chan = dataclasses.replace(cell.chan, **coerce_kwargs(
                ChannelConfig, tree["channel"], "channel"))

    seeds = _parse_seeds(args.seeds)
    result = run_campaign(cells, seeds, workers=args.workers)
    out = Path(args.out)
    for cell in result.cells:
        store = result.stores.get(cell.label)
        if store is not None:
            store.emit_csvs(out / "cells" / cell.label)
    files = emit_tables(result, out)
    write_manifest(result, out, __version__)

    for label, seed, err in result.failures:
        print(f"warning: {label} seed {seed} failed: {err}", file=sys.stderr)
    print(f"{len(result.stores)}/{len(cells)} cells completed over "
          f"{len(seeds)} seed(s); tables in {out}")
    if not result.stores:
        return 2
    return 0


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sidelink",
        description="Broadcast scheduling simulator and gap-tail analysis")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seeds_default="1"):
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override one configuration key (repeatable)")
        p.add_argument("--out", default="out", help="output directory")
        return p

    p = common(sub.add_parser("simulate", help="run one scenario cell"))
    p.add_argument("--seeds", default="1",
                   help="comma list of master seeds, or a count meaning 1..N")
    p.add_argument("--trace", metavar="VIDS",
                   help="comma list of vehicle ids to trace scheduling for")
    p.add_argument("--events", action="store_true",
                   help="write per-reception binary event logs")
    p.set_defaults(func=_cmd_simulate)

    p = common(sub.add_parser("analyze", help="closed-form gap-tail curves"))
    p.set_defaults(func=_cmd_analyze)

    p = common(sub.add_parser("compare",
                              help="measured CCDF versus the closed form"))
    p.add_argument("--sim", required=True,
                   help="measured CCDF csv (t_ms, ccdf rows on a 1 ms grid)")
    p.add_argument("--slippage", choices=("on", "off"), default="on",
                   help="include phase drift in the model tail")
    p.add_argument("--anchor-ms", type=float, default=3000.0,
                   help="time at which the model is pinned to the measurement")
    p.set_defaults(func=_cmd_compare)

    p = common(sub.add_parser("report", help="run a preset campaign grid"))
    p.add_argument("--preset", default="desk",
                   choices=("desk", "desk-tables", "paper-tables"))
    p.add_argument("--seeds", default="1",
                   help="comma list of master seeds, or a count meaning 1..N")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel worker processes")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvalidConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
