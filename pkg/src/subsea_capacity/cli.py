"""Command-line interface.

Every subcommand reads an optional YAML configuration (``--config``), logs the
effective configuration and writes its results to ``--out`` in ``--format``.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import __version__
from .capacity import smoothed_capacity
from .chain import EXACT, SEMI, crosscheck_se, floor_unused, propagate_chain, simulate_pump_failure
from .config import (
    DELIMITED,
    STRUCTURED,
    ConfigError,
    SweepResult,
    dump_config,
    load_config,
    load_results,
    persist_results,
    point_allocation,
    result_metadata,
    run_sweep,
    spatial_dims_curve,
    tensor_for,
    write_tables,
)
from .gn import IntegrityError
from .optimize import ConfigurationError

log = logging.getLogger("subsea_capacity")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="subsea-capacity", description="Capacity optimisation of power-feed-limited submarine links.")
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="random seed (overrides run.seed)")
    common.add_argument("--out", help="output path stem (overrides run.out)")
    common.add_argument("--format", choices=(STRUCTURED, DELIMITED), help="output format")
    common.add_argument("--threads", type=int, help="concurrent workers")
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    o = sub.add_parser("optimize", parents=[common], help="optimise one allocation at link.pump_mW")
    o.add_argument("--pump-mW", type=float)
    o.add_argument("--ase-only", action="store_true", help="disable nonlinear noise")

    for name, axis in (("sweep-pump", "pump powers in mW"), ("sweep-span", "span lengths in km"),
                       ("sweep-sdm", "numbers of spatial dimensions")):
        s = sub.add_parser(name, parents=[common], help=f"optimise over {axis}")
        s.add_argument("--values", type=_floats, help=f"comma-separated {axis}")
        s.add_argument("--ase-only", action="store_true", help="disable nonlinear noise")
        if name == "sweep-sdm":
            s.add_argument("--pump-curve", help="existing pump-sweep result (json) to interpolate")
            s.add_argument("--overheads-W", type=_floats, help="comma-separated overhead powers in W")

    v = sub.add_parser("validate-link", parents=[common], help="propagate an allocation through the chain")
    v.add_argument("--results", help="result file holding the allocation (default: config reference)")
    v.add_argument("--index", type=int, default=0, help="sweep point within --results")
    v.add_argument("--model", choices=(EXACT, SEMI), default=EXACT)
    v.add_argument("--spans", type=_ints, help="spans to record, e.g. 1,100,200,287")

    f = sub.add_parser("pump-failure", parents=[common], help="single-amplifier pump failure")
    f.add_argument("--results", help="result file holding the allocation (default: config reference)")
    f.add_argument("--index", type=int, default=0)
    f.add_argument("--nominal-mW", type=float, required=True)
    f.add_argument("--failed-mW", type=float, required=True)
    f.add_argument("--span", type=int, default=100, help="failed amplifier (1-based)")
    f.add_argument("--window", type=int, default=5)
    f.add_argument("--model", choices=(EXACT, SEMI), default=EXACT)

    sub.add_parser("build-tensor", parents=[common], help="compute and cache the GN tensor")
    return p


def _effective_config(args):
    cfg = load_config(args.config)
    run = {}
    for key in ("seed", "out", "format", "threads"):
        val = getattr(args, key, None)
        if val is not None:
            run[key] = val
    updates = {"run": run} if run else {}
    if getattr(args, "ase_only", False):
        updates["link"] = {"nonlinear": False}
    if getattr(args, "pump_mW", None) is not None:
        updates.setdefault("link", {})["pump_mW"] = args.pump_mW
    kind = {"sweep-pump": "pump", "sweep-span": "span_length", "sweep-sdm": "spatial_dims"}.get(args.command)
    if kind is not None:
        sw = {"kind": kind}
        if args.values is not None:
            sw["values"] = args.values
        if getattr(args, "overheads_W", None) is not None:
            sw["overheads_W"] = args.overheads_W
        updates["sweep"] = sw
    elif args.command == "optimize":
        pump = updates.get("link", {}).get("pump_mW", cfg.raw["link"]["pump_mW"])
        updates["sweep"] = {"kind": "pump", "values": [pump]}
    if updates:
        cfg = cfg.with_updates(**updates)
    log.info("effective configuration:\n%s", dump_config(cfg))
    return cfg


def _allocation(cfg, args):
    if args.results:
        res = load_results(args.results)
        pt = res.points[args.index]
        return point_allocation(pt), pt
    if cfg.reference is None:
        raise ConfigError("no allocation: pass --results or set reference.power_dBm in the config")
    return cfg.reference, None


def _summary_line(res: SweepResult):
    for p in res.points:
        if p.error:
            print(f"{res.kind}={p.value:g}: FAILED {p.error}")
        else:
            print(f"{res.kind}={p.value:g}: hard {p.hard_capacity / 1e12:.3f} Tb/s, smoothed "
                  f"{p.smoothed_capacity / 1e12:.3f} Tb/s, L_EDF {p.edf_length:.2f} m, "
                  f"ASE/NL {p.ase_to_nl_db:.2f} dB")


def cmd_sweep(cfg, args):
    if args.command == "sweep-sdm" and args.pump_curve:
        curve = load_results(args.pump_curve)
        if curve.kind != "pump":
            raise ConfigError(f"{args.pump_curve} is a {curve.kind} sweep, need a pump sweep")
        base = cfg.link
        pv = [p.pump_power for p in curve.points]
        cv = [p.hard_capacity for p in curve.points]
        curves = spatial_dims_curve(pv, cv, base.feed, base.total_length_km, base.spans,
                                    cfg.sweep.values, cfg.sweep.overheads)
        res = SweepResult("spatial_dims", cfg.config_hash(), cfg.seed, curve.wavelengths, curve.points)
        res.extra["pump_curve"] = {"pump_power": pv, "capacity": cv, "source": str(args.pump_curve)}
        res.extra["curves"] = {
            str(po): {"dims": list(cfg.sweep.values), "pump_power": c["pump_power"].tolist(),
                      "capacity": c["capacity"].tolist()}
            for po, c in curves.items()
        }
    else:
        res = run_sweep(cfg)
    paths = persist_results(res, cfg.out, cfg.format, cfg)
    _summary_line(res)
    if "curves" in res.extra:
        for po, c in res.extra["curves"].items():
            k = int(np.nanargmax(c["capacity"]))
            print(f"P_o={po} W: best S={c['dims'][k]:g}, {c['capacity'][k] / 1e12:.1f} Tb/s per direction")
    return paths


def cmd_validate(cfg, args):
    alloc, pt = _allocation(cfg, args)
    pump = pt.pump_power if pt is not None else cfg.pump_power
    tensor = tensor_for(cfg)
    report = smoothed_capacity(alloc, cfg.link, tensor, pump)
    alloc = floor_unused(alloc, report.used)
    record = args.spans or sorted({1, cfg.link.spans // 3, 2 * cfg.link.spans // 3, cfg.link.spans} - {0})
    state = propagate_chain(alloc, cfg.link, pump, record, model=args.model)
    diff, se_chain = crosscheck_se(state, report, cfg.link.coding_gap)
    df = cfg.link.delta_f
    cols = ["span", "wavelength_nm", "signal_dBm", "ase_dBm", "gain_dB", "gff_dB"]
    se_cols = ["wavelength_nm", "se_model", "se_chain", "difference", "used"]
    se_rows = [[wl * 1e9, float(a), float(b), float(d), bool(u)]
               for wl, a, b, d, u in zip(cfg.link.wavelengths, report.se, se_chain, diff, report.used)]
    meta = result_metadata("validate-link", cfg.config_hash(), cfg.seed)
    paths = write_tables({"chain": (cols, state.rows()), "se": (se_cols, se_rows)}, meta, cfg.out, cfg.format)
    c_model = df * report.se.sum()
    c_chain = df * se_chain.sum()
    print(f"capacity model {report.hard_capacity / 1e12:.3f} Tb/s, chain {c_chain / 1e12:.3f} Tb/s "
          f"({(c_chain - c_model) / c_model * 100 if c_model else 0:+.2f} %)")
    return paths


def cmd_failure(cfg, args):
    alloc, pt = _allocation(cfg, args)
    tensor = tensor_for(cfg)
    report = smoothed_capacity(alloc, cfg.link, tensor, args.nominal_mW * 1e-3)
    alloc = floor_unused(alloc, report.used)
    rep = simulate_pump_failure(alloc, cfg.link, args.nominal_mW * 1e-3, args.failed_mW * 1e-3, args.span,
                                args.window, args.model, used=report.used)
    wl = cfg.link.wavelengths[report.used]
    rows = [[int(s) - args.span, w * 1e9, float(d)] for s, dev in zip(rep.spans, rep.deviation_db)
            for w, d in zip(wl, dev)]
    ase = [[w * 1e9, float(d)] for w, d in zip(wl, rep.end_ase_increase_db)]
    meta = result_metadata("pump-failure", cfg.config_hash(), cfg.seed)
    paths = write_tables({"deviation": (["spans_after_failure", "wavelength_nm", "deviation_dB"], rows),
                          "ase": (["wavelength_nm", "end_ase_increase_dB"], ase)}, meta, cfg.out, cfg.format)
    worst = np.max(np.abs(rep.deviation_db), axis=1)
    for s, w in zip(rep.spans, worst):
        print(f"span +{int(s) - args.span}: max |deviation| {w:.3f} dB")
    print(f"end-of-chain ASE increase: max {rep.end_ase_increase_db.max():.3f} dB")
    return paths


def cmd_tensor(cfg, args):
    if not cfg.nonlinear:
        raise ConfigError("link.nonlinear is false; no tensor needed")
    t = tensor_for(cfg)
    print(f"tensor {t.key} for N={t.n_channels}, M={t.spans} cached in {cfg.tensor_cache}")
    return []


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _effective_config(args)
        handler = {
            "optimize": cmd_sweep,
            "sweep-pump": cmd_sweep,
            "sweep-span": cmd_sweep,
            "sweep-sdm": cmd_sweep,
            "validate-link": cmd_validate,
            "pump-failure": cmd_failure,
            "build-tensor": cmd_tensor,
        }[args.command]
        for p in handler(cfg, args):
            print(f"wrote {p}")
    except (ConfigError, ConfigurationError, IntegrityError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
