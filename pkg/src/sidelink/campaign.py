"""Multi-run orchestration: scenario cells, seed sweeps, comparison tables.

A cell is one parameter point; a campaign runs every (cell, seed) job,
merges each cell's stores in seed order (so results do not depend on
completion order), and derives the cross-cell tables.  Jobs are independent
processes when ``workers > 1``; the default stays serial because a single
run already saturates one core with vectorised work.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path

from .channel import ChannelConfig
from .engine import Simulation
from .metrics import MetricStore, relative_improvement
from .scenario import ScenarioConfig, SpsConfig, build_world, config_hash

TABLE_BINS_M = (200, 300, 400)


@dataclass
class CellSpec:
    """One scenario cell plus the grouping keys the tables join on."""

    label: str
    scenario: ScenarioConfig
    sps: SpsConfig = field(default_factory=SpsConfig)
    chan: ChannelConfig = field(default_factory=ChannelConfig)
    meta: dict = field(default_factory=dict)   # e.g. bw, density, window

    def hash(self) -> str:
        return config_hash(self.scenario, self.sps, self.chan)


def run_single(cell: CellSpec, seed: int) -> MetricStore:
    """One full simulation of a cell under one master seed."""
    sc = replace(cell.scenario, master_seed=seed)
    world = build_world(sc, cell.sps)
    return Simulation(world, cell.chan).run()


def _job(args):
    idx, cell, seed = args
    return idx, seed, run_single(cell, seed)


@dataclass
class CampaignResult:
    cells: list[CellSpec]
    stores: dict[str, MetricStore]
    seeds: tuple[int, ...]
    failures: list[tuple[str, int, str]] = field(default_factory=list)


def run_campaign(cells, seeds, workers: int = 1) -> CampaignResult:
    """Run every (cell, seed) job; failed jobs are reported, not fatal."""
    cells = list(cells)
    seeds = tuple(seeds)
    jobs = [(i, cells[i], s) for i in range(len(cells)) for s in seeds]
    done: dict[tuple[int, int], MetricStore] = {}
    failures: list[tuple[str, int, str]] = []

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_job, j): j for j in jobs}
            for fut in as_completed(futures):
                i, cell, seed = futures[fut]
                try:
                    _, _, store = fut.result()
                    done[(i, seed)] = store
                except Exception as exc:
                    failures.append((cell.label, seed, repr(exc)))
    else:
        for i, cell, seed in jobs:
            try:
                done[(i, seed)] = _job((i, cell, seed))[2]
            except Exception as exc:
                failures.append((cell.label, seed, repr(exc)))

    stores: dict[str, MetricStore] = {}
    for i, cell in enumerate(cells):
        merged: MetricStore | None = None
        for seed in seeds:
            store = done.get((i, seed))
            if store is None:
                continue
            merged = store if merged is None else merged.merge(store)
        if merged is not None:
            stores[cell.label] = merged
    return CampaignResult(cells=cells, stores=stores, seeds=seeds,
                          failures=failures)


# -- preset grids ------------------------------------------------------------

def _scenario(bw_mhz: float, density: float, length_m: float,
              duration_s: float) -> ScenarioConfig:
    return ScenarioConfig(
        highway_length_m=length_m,
        density_vpk=density,
        bandwidth_mhz=bw_mhz,
        subchannels_per_subframe=5 if bw_mhz < 15 else 10,
        duration_s=duration_s,
    )


_WINDOWS: tuple[tuple[str, tuple[int, int] | None], ...] = (
    ("off", None), ("w5-15", (5, 15)), ("w2-6", (2, 6)))


def _table_grid(length_m: float, duration_s: float) -> list[CellSpec]:
    cells = []
    for bw in (10.0, 20.0):
        for density in (100.0, 200.0, 400.0):
            for wlabel, window in _WINDOWS:
                label = f"bw{int(bw)}_d{int(density)}_{wlabel}"
                cells.append(CellSpec(
                    label=label,
                    scenario=_scenario(bw, density, length_m, duration_s),
                    sps=SpsConfig(oneshot=window),
                    meta={"bw": bw, "density": density, "window": wlabel},
                ))
    return cells


def preset_cells(name: str) -> list[CellSpec]:
    """Named study grids.

    ``desk``         two 20 MHz cells (one-shot off / [2, 6]) on a short
                     highway for quick local runs;
    ``desk-tables``  the full comparison grid at desk scale;
    ``paper-tables`` the full grid at study scale (5 km, 500 s) -- hours of
                     compute, meant for a real campaign machine.
    """
    if name == "desk":
        cells = []
        for wlabel, window in (("off", None), ("w2-6", (2, 6))):
            cells.append(CellSpec(
                label=f"desk_{wlabel}",
                scenario=_scenario(20.0, 400.0, 2000.0, 60.0),
                sps=SpsConfig(oneshot=window),
                meta={"bw": 20.0, "density": 400.0, "window": wlabel},
            ))
        return cells
    if name == "desk-tables":
        return _table_grid(length_m=2000.0, duration_s=60.0)
    if name == "paper-tables":
        return _table_grid(length_m=5000.0, duration_s=500.0)
    raise ValueError(f"unknown preset {name!r}; "
                     "expected desk, desk-tables or paper-tables")


# -- cross-cell tables -------------------------------------------------------

def _fmt(x) -> str:
    return "" if x is None else f"{x:.6g}"


def emit_tables(result: CampaignResult, outdir: str | Path) -> list[Path]:
    """Comparison tables between each one-shot variant and its off baseline.

    Cells pair up on (bw, density) from their meta; cells without meta or
    without a matching baseline only appear in the per-cell summary.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    baselines = {(c.meta.get("bw"), c.meta.get("density")): c.label
                 for c in result.cells if c.meta.get("window") == "off"}
    variants = [c for c in result.cells
                if c.meta and c.meta.get("window") != "off"]

    path = out / "gap_improvement.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bw_mhz", "density_vpk", "oneshot", "bin_m",
                    "ipg_improvement", "ia_improvement"])
        for cell in variants:
            base_label = baselines.get((cell.meta["bw"], cell.meta["density"]))
            if base_label is None or base_label not in result.stores \
                    or cell.label not in result.stores:
                continue
            base = result.stores[base_label]
            var = result.stores[cell.label]
            for bin_m in TABLE_BINS_M:
                row = [cell.meta["bw"], cell.meta["density"],
                       cell.meta["window"], bin_m]
                for curve_of in ("ipg_ccdf", "ia_ccdf"):
                    try:
                        imp = relative_improvement(
                            getattr(base, curve_of)(bin_m),
                            getattr(var, curve_of)(bin_m))
                        row.append(_fmt(imp.value))
                    except ValueError:
                        row.append("")
                w.writerow(row)
    written.append(path)

    path = out / "prr_change.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bw_mhz", "density_vpk", "oneshot", "distance_m",
                    "prr_baseline", "prr_variant", "change_abs", "change_rel"])
        for cell in variants:
            base_label = baselines.get((cell.meta["bw"], cell.meta["density"]))
            if base_label is None or base_label not in result.stores \
                    or cell.label not in result.stores:
                continue
            base = result.stores[base_label]
            var = result.stores[cell.label]
            for d in TABLE_BINS_M:
                pb, pv = base.prr_at(d), var.prr_at(d)
                missing = pb is None or pv is None
                change = None if missing else pv - pb
                rel = None if missing or pb == 0 else (pv - pb) / pb
                w.writerow([cell.meta["bw"], cell.meta["density"],
                            cell.meta["window"], d,
                            _fmt(pb), _fmt(pv), _fmt(change), _fmt(rel)])
    written.append(path)

    path = out / "gap_end_causes.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        labels = ("reselection", "slippage", "hd_ended",
                  "better_conditions", "noise")
        w.writerow(["cell", "gap_filter", *labels])
        for cell in result.cells:
            store = result.stores.get(cell.label)
            if store is None:
                continue
            for long_only, tag in ((False, "all"), (True, "gt_1s")):
                flat = store.end_cause_flat(long_only=long_only)
                w.writerow([cell.label, tag, *[flat[k] for k in labels]])
    written.append(path)

    path = out / "cells_summary.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell", "tx_events", "rx_events", "cbr_mean",
                    "mean_interval_ms", "max_itt_ms",
                    "prr_200m", "prr_300m", "prr_400m"])
        for cell in result.cells:
            store = result.stores.get(cell.label)
            if store is None:
                continue
            w.writerow([cell.label, store.tx_events, store.rx_events,
                        _fmt(store.cbr_mean()), _fmt(store.mean_interval_ms()),
                        store.itt_max,
                        *[_fmt(store.prr_at(d)) for d in TABLE_BINS_M]])
    written.append(path)
    return written


def write_manifest(result: CampaignResult, outdir: str | Path,
                   version: str) -> Path:
    """Reproducibility record: per-cell config digests, seeds, failures."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "version": version,
        "seeds": list(result.seeds),
        "cells": [
            {
                "label": c.label,
                "config_hash": c.hash(),
                "n_vehicles": c.scenario.n_vehicles,
                "completed": c.label in result.stores,
            }
            for c in result.cells
        ],
        "failures": [
            {"cell": label, "seed": seed, "error": err}
            for label, seed, err in result.failures
        ],
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path
