"""Run configuration, sweep orchestration and result persistence.

Configuration files are YAML mappings with one section per component. All
keys carry their unit in the name (``attenuation_dB_per_km``, ``pump_mW``
...); unknown keys are rejected. See ``docs/config.md`` for the schema.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .capacity import FeedSpec, LinkSpec, PowerAllocation, dbm_to_w, pump_power_from_budget, smoothed_capacity, w_to_dbm
from .edf import EdfSpec, load_edf_table
from .gn import FiberSpec, IntegrityError, build_tensor
from .optimize import NewtonConfig, SwarmConfig, optimize_allocation

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
STRUCTURED, DELIMITED = "json", "csv"
SWEEP_KINDS = ("pump", "span_length", "spatial_dims")


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


def default_edf_table() -> Path:
    return Path(str(resources.files("subsea_capacity") / "data" / "edf_fixture.csv"))


# section -> key -> (default, kind); kind is a type or a validator
_POS = "positive"
_NONNEG = "nonnegative"
_SCHEMA = {
    "fiber": {
        "attenuation_dB_per_km": (0.165, _POS),
        "dispersion_ps_per_nm_km": (20.0, float),
        "gamma_per_W_km": (0.8, _NONNEG),
        "span_length_km": (50.0, _POS),
        "margin_dB": (1.5, _NONNEG),
        "epsilon": (0.07, _NONNEG),
        "reference_wavelength_nm": (1550.0, _POS),
    },
    "link": {
        "total_length_km": (14350.0, _POS),
        "n_channels": (150, int),
        "channel_spacing_GHz": (50.0, _POS),
        "first_wavelength_nm": (1522.0, _POS),
        "n_sp": (1.4, _POS),
        "coding_gap_dB": (-1.0, float),
        "sigmoid_sharpness": (2.0, _POS),
        "pump_wavelength_nm": (980.0, _POS),
        "pump_mW": (60.0, _NONNEG),
        "expected_channels": (None, _POS),
        "nonlinear": (True, bool),
    },
    "edf": {
        "table": (None, str),
        "length_m": (7.0, _NONNEG),
        "er_radius_um": (1.38, _POS),
        "er_density_per_m3": (5.51e24, _POS),
        "lifetime_ms": (10.0, _POS),
        "pump_absorption_dB_per_m": (0.96 * 10 / np.log(10), _NONNEG),
        "pump_gain_dB_per_m": (0.0, _NONNEG),
    },
    "feed": {
        "voltage_kV": (12.0, _POS),
        "resistance_ohm_per_km": (1.0, _POS),
        "efficiency": (0.4, _POS),
        "overhead_W": (0.1, _NONNEG),
        "spatial_dims": (1, int),
    },
    "swarm": {
        "particles": (50, int),
        "mu1": (1.49, _POS),
        "mu2": (1.49, _POS),
        "inertia": ([0.1, 1.1], list),
        "max_iter": (500, int),
        "stall": (50, int),
    },
    "newton": {
        "enabled": (True, bool),
        "step": (1.0, _POS),
        "eig_floor": (1e-8, _POS),
        "grad_tol": (1e-9, _POS),
        "max_iter": (20, int),
        "fd_step": (1e-3, _POS),
    },
    "sweep": {
        "kind": ("pump", str),
        "values": ([20.0, 30.0, 60.0, 100.0, 200.0, 300.0], list),
        "total_pump_mW": (14350.0, _POS),
        "overheads_W": ([0.1, 0.2, 0.3], list),
    },
    "reference": {
        "power_dBm": (None, float),
        "edf_length_m": (None, _NONNEG),
    },
    "run": {
        "seed": (0, int),
        "threads": (1, int),
        "out": ("results", str),
        "format": (STRUCTURED, str),
        "tensor_cache": (".cache", str),
        "quadrature_order": (16, int),
    },
}


def _coerce(section, key, value, kind):
    where = f"{section}.{key}"
    if value is None:
        return None
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false")
        return value
    if kind is int:
        if isinstance(value, bool) or not float(value).is_integer():
            raise ConfigError(f"{where} must be an integer")
        return int(value)
    if kind is str:
        return str(value)
    if kind is list:
        if np.isscalar(value):
            value = [value]
        try:
            return [float(v) for v in value]
        except (TypeError, ValueError):
            raise ConfigError(f"{where} must be a list of numbers") from None
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where} must be a number (units: {key.split('_', 1)[-1]})") from None
    if not np.isfinite(v):
        raise ConfigError(f"{where} must be finite")
    if kind == _POS and v <= 0:
        raise ConfigError(f"{where} must be > 0 (units: {key.split('_', 1)[-1]})")
    if kind == _NONNEG and v < 0:
        raise ConfigError(f"{where} must be >= 0 (units: {key.split('_', 1)[-1]})")
    return v


def normalize(raw: dict | None) -> dict:
    """Fill defaults, coerce types and reject unknown keys."""
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping of sections")
    unknown = set(raw) - set(_SCHEMA)
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")
    out = {}
    for section, keys in _SCHEMA.items():
        given = raw.get(section) or {}
        if not isinstance(given, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        bad = set(given) - set(keys)
        if bad:
            raise ConfigError(f"unknown key(s) in {section!r}: {sorted(bad)}")
        out[section] = {k: _coerce(section, k, given.get(k, d), kind) for k, (d, kind) in keys.items()}
    sw = out["sweep"]
    if sw["kind"] not in SWEEP_KINDS:
        raise ConfigError(f"sweep.kind must be one of {SWEEP_KINDS}")
    if len(sw["values"]) == 0 or np.any(np.diff(sw["values"]) <= 0):
        raise ConfigError("sweep.values must be non-empty and strictly increasing")
    if out["run"]["format"] not in (STRUCTURED, DELIMITED):
        raise ConfigError(f"run.format must be {STRUCTURED!r} or {DELIMITED!r}")
    if out["run"]["threads"] < 1:
        raise ConfigError("run.threads must be >= 1")
    if len(out["swarm"]["inertia"]) != 2:
        raise ConfigError("swarm.inertia must be [w_lo, w_hi]")
    return out


@dataclass(frozen=True)
class SweepSpec:
    kind: str
    values: tuple
    total_pump: float  # W, span-length sweep
    overheads: tuple  # W, spatial-dimension sweep


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration, SI units except where the owning type
    stores conventional ones (``FiberSpec``)."""

    link: LinkSpec
    pump_power: float
    expected_channels: float | None
    nonlinear: bool
    swarm: SwarmConfig
    newton: NewtonConfig | None
    sweep: SweepSpec
    reference: PowerAllocation | None
    seed: int
    threads: int
    out: Path
    format: str
    tensor_cache: Path | None
    quadrature_order: int
    edf_table: Path
    raw: dict = field(repr=False, compare=False, default_factory=dict)

    @property
    def fiber(self) -> FiberSpec:
        return self.link.fiber

    def to_dict(self) -> dict:
        """Conventional-unit mapping; ``build_config(to_dict())`` reproduces it."""
        return json.loads(json.dumps(self.raw))

    def config_hash(self) -> str:
        """Hash over everything that affects results (not output, threads or
        the tensor cache location)."""
        d = self.to_dict()
        run = d["run"]
        for k in ("out", "format", "threads", "tensor_cache"):
            run.pop(k)
        d["edf_checksum"] = hashlib.sha256(self.edf_table.read_bytes()).hexdigest()
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def with_updates(self, **sections) -> "RunConfig":
        """Copy with selected ``section={key: value}`` entries replaced."""
        raw = self.to_dict()
        for sec, vals in sections.items():
            raw[sec].update(vals)
        return build_config(raw, base_dir=None)


def build_config(raw: dict | None, base_dir: str | Path | None = None) -> RunConfig:
    d = normalize(raw)
    f, lk, e, fd, sw, nw, sp, ref, run = (d[k] for k in _SCHEMA)
    table = Path(e["table"]) if e["table"] else default_edf_table()
    if base_dir is not None and not table.is_absolute():
        table = Path(base_dir) / table
    if not table.is_file():
        raise ConfigError(f"edf.table: cannot read {table}")
    e["table"] = str(table)
    try:
        fiber = FiberSpec(
            f["attenuation_dB_per_km"], f["dispersion_ps_per_nm_km"], f["gamma_per_W_km"],
            f["span_length_km"], f["margin_dB"], f["epsilon"], f["reference_wavelength_nm"],
        )
        wl, a, g = load_edf_table(table)
        pump_wl = lk["pump_wavelength_nm"] * 1e-9
        edf = EdfSpec(
            wl, a, g, e["er_radius_um"] * 1e-6, e["er_density_per_m3"], e["lifetime_ms"] * 1e-3,
            pump_wl, e["pump_absorption_dB_per_m"] * np.log(10) / 10, e["pump_gain_dB_per_m"] * np.log(10) / 10,
            e["length_m"],
        )
        feed = FeedSpec(fd["voltage_kV"] * 1e3, fd["resistance_ohm_per_km"], fd["efficiency"],
                        fd["overhead_W"], fd["spatial_dims"])
        link = LinkSpec(
            fiber, edf, pump_wl, lk["total_length_km"], lk["n_channels"], lk["channel_spacing_GHz"] * 1e9,
            lk["first_wavelength_nm"] * 1e-9, lk["n_sp"], 10 ** (lk["coding_gap_dB"] / 10),
            lk["sigmoid_sharpness"], feed,
        )
        swarm = SwarmConfig(sw["particles"], sw["mu1"], sw["mu2"], tuple(sw["inertia"]), sw["max_iter"],
                            sw["stall"], run["seed"], run["threads"])
        newton = None
        if nw["enabled"]:
            newton = NewtonConfig(nw["step"], nw["eig_floor"], nw["grad_tol"], nw["max_iter"], nw["fd_step"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    reference = None
    if ref["power_dBm"] is not None:
        length = e["length_m"] if ref["edf_length_m"] is None else ref["edf_length_m"]
        reference = PowerAllocation(np.full(link.n_channels, ref["power_dBm"]), length)
    unit = {"pump": 1e-3, "span_length": 1.0, "spatial_dims": 1.0}[sp["kind"]]
    if sp["kind"] == "spatial_dims" and any(not float(v).is_integer() or v < 1 for v in sp["values"]):
        raise ConfigError("sweep.values must be integers >= 1 for a spatial-dimension sweep")
    sweep = SweepSpec(sp["kind"], tuple(v * unit for v in sp["values"]), sp["total_pump_mW"] * 1e-3,
                      tuple(sp["overheads_W"]))
    return RunConfig(
        link=link,
        pump_power=lk["pump_mW"] * 1e-3,
        expected_channels=lk["expected_channels"],
        nonlinear=lk["nonlinear"],
        swarm=swarm,
        newton=newton,
        sweep=sweep,
        reference=reference,
        seed=run["seed"],
        threads=run["threads"],
        out=Path(run["out"]),
        format=run["format"],
        tensor_cache=Path(run["tensor_cache"]) if run["tensor_cache"] else None,
        quadrature_order=run["quadrature_order"],
        edf_table=table,
        raw=d,
    )


def load_config(path: str | Path | None) -> RunConfig:
    """Read and validate a YAML run configuration (``None``: defaults)."""
    if path is None:
        return build_config({})
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return build_config(raw, base_dir=path.parent)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


# --- sweeps -----------------------------------------------------------------


def tensor_for(cfg: RunConfig, link: LinkSpec | None = None):
    """GN tensor for ``link`` (default: the configured link), or ``None``
    when nonlinear noise is disabled."""
    if not cfg.nonlinear:
        return None
    link = cfg.link if link is None else link
    return build_tensor(link.fiber, link.delta_f, link.n_channels, link.spans,
                        order=cfg.quadrature_order, cache_dir=cfg.tensor_cache)


@dataclass
class SweepPoint:
    value: float  # axis value in SI (W, km, count)
    pump_power: float
    hard_capacity: float = np.nan
    smoothed_capacity: float = np.nan
    ase_to_nl_db: float = np.nan
    edf_length: float = np.nan
    powers_dbm: np.ndarray | None = None
    used: np.ndarray | None = None
    se: np.ndarray | None = None
    gain_db: np.ndarray | None = None
    error: str | None = None


@dataclass
class SweepResult:
    kind: str
    config_hash: str
    seed: int
    wavelengths: np.ndarray
    points: list
    extra: dict = field(default_factory=dict)  # e.g. spatial-dimension curves


def _span_link(link: LinkSpec, span_km: float) -> LinkSpec:
    # whole number of spans closest to the configured route length
    m = max(1, int(round(link.total_length_km / span_km)))
    fiber = dataclasses.replace(link.fiber, span_length_km=span_km)
    return dataclasses.replace(link, fiber=fiber, total_length_km=m * span_km)


def run_point(cfg: RunConfig, link: LinkSpec, tensor, pump_power: float, value: float, seed=None) -> SweepPoint:
    pt = SweepPoint(value, pump_power)
    try:
        if pump_power <= 0:
            raise ValueError("no pump power available at this point")
        swarm = cfg.swarm if seed is None else dataclasses.replace(cfg.swarm, seed=seed)
        res = optimize_allocation(link, tensor, pump_power, swarm, cfg.newton, cfg.expected_channels)
    except Exception as exc:  # noqa: BLE001 - recorded per point, sweep continues
        log.error("sweep point %g failed: %s", value, exc)
        pt.error = f"{type(exc).__name__}: {exc}"
        return pt
    r = res.report
    pt.hard_capacity = r.hard_capacity
    pt.smoothed_capacity = r.smoothed_capacity
    pt.ase_to_nl_db = r.ase_to_nl_db() if tensor is not None else np.inf
    pt.edf_length = res.allocation.edf_length
    pt.powers_dbm = np.array(res.allocation.powers_dbm)
    pt.used, pt.se, pt.gain_db = r.used, r.se, r.gain_db
    return pt


def spatial_dims_curve(pump_values, capacities, feed: FeedSpec, length_km, spans, dims, overheads):
    """Cable capacity ``S C(P_p(S))`` per direction for each overhead.

    ``C`` is interpolated linearly in the capacity-vs-pump curve, with
    ``C(0) = 0``; pump powers beyond the curve are rejected.
    """
    p = np.concatenate([[0.0], np.asarray(pump_values, dtype=float)])
    c = np.concatenate([[0.0], np.asarray(capacities, dtype=float)])
    ok = np.isfinite(c)
    curves = {}
    for po in overheads:
        feed_o = dataclasses.replace(feed, overhead_w=po)
        pp = np.array([pump_power_from_budget(feed_o, length_km, spans, int(s)) for s in dims])
        if np.any(pp > p[ok].max()):
            raise ValueError(
                f"pump power {pp.max() * 1e3:.1f} mW at P_o={po} W exceeds the computed pump range; "
                "extend sweep.values or the spatial dimensions"
            )
        cap = np.asarray(dims, dtype=float) * np.interp(pp, p[ok], c[ok])
        curves[float(po)] = {"pump_power": pp, "capacity": cap}
    return curves


def run_sweep(cfg: RunConfig, resume: SweepResult | None = None) -> SweepResult:
    """Optimise at every sweep value, concurrently up to ``cfg.threads``.

    Pump and spatial-dimension sweeps share one GN tensor; the span sweep
    rebuilds it per span length with the total pump per fibre held fixed.
    A ``resume`` result with a matching config hash supplies finished points.
    """
    h = cfg.config_hash()
    if resume is not None and resume.config_hash != h:
        raise IntegrityError(
            f"cannot resume: stored results were produced by config {resume.config_hash}, current config is {h}"
        )
    done = {} if resume is None else {p.value: p for p in resume.points if p.error is None}
    sw = cfg.sweep
    base = cfg.link
    jobs = []
    if sw.kind == "span_length":
        for v in sw.values:
            link = _span_link(base, v)
            jobs.append((v, link, sw.total_pump / link.spans))
    elif sw.kind == "pump":
        jobs = [(v, base, v) for v in sw.values]
    else:
        # capacity-vs-pump curve, then S * C(P_p(S)) by interpolation
        jobs = [(v, base, v) for v in _sdm_pump_grid(cfg)]
    tensors = {}

    def job(args):
        v, link, pp = args
        if v in done:
            return done[v]
        key = link.fiber.span_length_km
        if key not in tensors:
            tensors[key] = tensor_for(cfg, link)
        return run_point(cfg, link, tensors[key], pp, v)

    if cfg.threads > 1:
        # build shared tensors up front so workers only read them
        for _, link, _ in jobs:
            if link.fiber.span_length_km not in tensors:
                tensors[link.fiber.span_length_km] = tensor_for(cfg, link)
        with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
            points = list(ex.map(job, jobs))
    else:
        points = [job(j) for j in jobs]
    result = SweepResult(sw.kind, h, cfg.seed, base.wavelengths, points)
    if sw.kind == "spatial_dims":
        pv = [p.pump_power for p in points]
        cv = [p.hard_capacity for p in points]
        result.extra["pump_curve"] = {"pump_power": pv, "capacity": cv}
        curves = spatial_dims_curve(pv, cv, base.feed, base.total_length_km, base.spans, sw.values, sw.overheads)
        result.extra["curves"] = {
            str(po): {"dims": list(sw.values), "pump_power": c["pump_power"].tolist(), "capacity": c["capacity"].tolist()}
            for po, c in curves.items()
        }
    return result


def cached_sweep(cfg: RunConfig, directory: str | Path | None = None) -> SweepResult:
    """:func:`run_sweep` backed by a result file keyed by the config hash.

    Results live in ``<directory>/<kind>_<hash>.json`` (default directory:
    ``<run.tensor_cache>/results``). A stored file is reused only when its
    recorded hash matches; otherwise the sweep is run and stored.
    """
    if directory is None:
        if cfg.tensor_cache is None:
            raise ConfigError("cached_sweep needs a directory or run.tensor_cache")
        directory = cfg.tensor_cache / "results"
    h = cfg.config_hash()
    path = Path(directory) / f"{cfg.sweep.kind}_{h}.json"
    if path.is_file():
        log.info("reusing sweep results %s", path)
        return load_results(path, expected_hash=h)
    res = run_sweep(cfg)
    persist_results(res, path.with_suffix(""), STRUCTURED, cfg)
    return res


def _sdm_pump_grid(cfg: RunConfig) -> tuple:
    """Pump grid (W) of the capacity curve, covering every (S, P_o) pair."""
    sw, base = cfg.sweep, cfg.link
    need = [
        pump_power_from_budget(dataclasses.replace(base.feed, overhead_w=po), base.total_length_km, base.spans, int(s))
        for po in sw.overheads
        for s in sw.values
    ]
    top = max(need)
    grid = [g for g in _SDM_PUMP_NODES if g < top] + [top]
    return tuple(sorted(set(grid)))


_SDM_PUMP_NODES = tuple(np.array([5, 10, 15, 20, 30, 40, 50, 60, 80, 100, 140, 200, 300, 500, 1000]) * 1e-3)


# --- persistence ------------------------------------------------------------


def _versions() -> dict:
    import numba
    import scipy

    from . import __version__

    return {
        "subsea_capacity": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def _float(v):
    return None if v is None or not np.isfinite(v) else float(v)


def summary_rows(result: SweepResult):
    cols = ["axis_value", "pump_power_W", "pump_power_dBm", "hard_capacity_bps", "smoothed_capacity_bps",
            "ase_to_nl_dB", "edf_length_m", "used_channels", "error"]
    rows = []
    for p in result.points:
        used = int(np.sum(p.used)) if p.used is not None else 0
        rows.append([p.value, p.pump_power, float(w_to_dbm(p.pump_power)) if p.pump_power > 0 else None,
                     _float(p.hard_capacity), _float(p.smoothed_capacity), _float(p.ase_to_nl_db),
                     _float(p.edf_length), used, p.error])
    return cols, rows


def allocation_rows(result: SweepResult):
    cols = ["axis_value", "channel", "wavelength_nm", "power_W", "power_dBm", "gain_dB", "se_bps_per_hz", "used"]
    rows = []
    for p in result.points:
        if p.powers_dbm is None:
            continue
        w = dbm_to_w(p.powers_dbm)
        for n, wl in enumerate(result.wavelengths):
            rows.append([p.value, n, wl * 1e9, float(w[n]), float(p.powers_dbm[n]), float(p.gain_db[n]),
                         float(p.se[n]), bool(p.used[n])])
    return cols, rows


def result_metadata(kind: str, config_hash: str, seed: int) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "config_hash": config_hash,
        "seed": seed,
        "versions": _versions(),
    }


def _cell(x):
    if x is None:
        return ""
    return repr(float(x)) if isinstance(x, float) else x


def write_tables(tables: dict, meta: dict, path: str | Path, fmt: str = STRUCTURED, extra: dict | None = None):
    """Write named ``(columns, rows)`` tables; returns the written paths.

    ``json`` writes one document holding every table plus ``extra``;
    ``csv`` writes ``<stem>_<table>.csv`` per table with ``#`` metadata lines.
    """
    if fmt not in (STRUCTURED, DELIMITED):
        raise ConfigError(f"unknown format {fmt!r}")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == STRUCTURED:
            out = path.with_suffix(".json")
            doc = {"metadata": meta, "tables": {k: {"columns": c, "rows": r} for k, (c, r) in tables.items()}}
            doc.update(extra or {})
            out.write_text(json.dumps(_jsonable(doc), indent=1, allow_nan=False))
            return [out]
        written = []
        for name, (cols, rows) in tables.items():
            out = path.with_name(f"{path.stem}_{name}.csv")
            with out.open("w", newline="") as fh:
                for k, v in meta.items():
                    fh.write(f"# {k}: {json.dumps(v)}\n")
                wr = csv.writer(fh)
                wr.writerow(cols)
                wr.writerows([[_cell(x) for x in r] for r in rows])
            written.append(out)
        return written
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def _jsonable(obj):
    # non-finite floats become null so the document stays strict JSON
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    return obj


def persist_results(result: SweepResult, path: str | Path, fmt: str = STRUCTURED, config: RunConfig | None = None):
    """Write a sweep result with metadata; returns the written paths.

    Tables: ``summary`` (one row per sweep value), ``allocation`` (one row per
    sweep value and channel) and, for spatial-dimension sweeps, ``dims``.
    """
    meta = result_metadata(result.kind, result.config_hash, result.seed)
    tables = {"summary": summary_rows(result), "allocation": allocation_rows(result)}
    if "curves" in result.extra:
        cols = ["overhead_W", "spatial_dims", "pump_power_W", "capacity_bps"]
        rows = []
        for po, c in result.extra["curves"].items():
            for s, pp, cap in zip(c["dims"], c["pump_power"], c["capacity"]):
                rows.append([float(po), int(s), pp, cap])
        tables["dims"] = (cols, rows)
    extra = {}
    if config is not None:
        extra["config"] = config.to_dict()
    if result.extra:
        extra["extra"] = result.extra
    return write_tables(tables, meta, path, fmt, extra)


def load_results(path: str | Path, expected_hash: str | None = None) -> SweepResult:
    """Read a ``json`` result file written by :func:`persist_results`."""
    doc = json.loads(Path(path).read_text())
    meta = doc["metadata"]
    if expected_hash is not None and meta["config_hash"] != expected_hash:
        raise IntegrityError(
            f"{path} was produced by config {meta['config_hash']}, expected {expected_hash}; "
            "refusing to mix results from different configurations"
        )
    tabs = doc["tables"]
    s_cols = tabs["summary"]["columns"]
    a_cols = tabs["allocation"]["columns"]
    arows = tabs["allocation"]["rows"]
    wls = sorted({r[a_cols.index("wavelength_nm")] for r in arows})
    points = []
    for row in tabs["summary"]["rows"]:
        s = dict(zip(s_cols, row))
        p = SweepPoint(s["axis_value"], s["pump_power_W"], error=s["error"])
        nan = np.nan
        p.hard_capacity = nan if s["hard_capacity_bps"] is None else s["hard_capacity_bps"]
        p.smoothed_capacity = nan if s["smoothed_capacity_bps"] is None else s["smoothed_capacity_bps"]
        p.ase_to_nl_db = np.inf if s["ase_to_nl_dB"] is None else s["ase_to_nl_dB"]
        p.edf_length = nan if s["edf_length_m"] is None else s["edf_length_m"]
        mine = [dict(zip(a_cols, r)) for r in arows if r[0] == p.value]
        if mine:
            mine.sort(key=lambda r: r["channel"])
            p.powers_dbm = np.array([r["power_dBm"] for r in mine])
            p.gain_db = np.array([r["gain_dB"] for r in mine])
            p.se = np.array([r["se_bps_per_hz"] for r in mine])
            p.used = np.array([r["used"] for r in mine], dtype=bool)
        points.append(p)
    res = SweepResult(meta["kind"], meta["config_hash"], meta["seed"], np.array(wls) * 1e-9, points,
                      doc.get("extra", {}))
    return res


def point_allocation(point: SweepPoint) -> PowerAllocation:
    if point.powers_dbm is None:
        raise ValueError(f"sweep point {point.value} has no allocation ({point.error})")
    return PowerAllocation(point.powers_dbm, point.edf_length)


def report_for(cfg: RunConfig, point: SweepPoint, link: LinkSpec | None = None):
    """Re-evaluate the capacity report of a stored point."""
    link = cfg.link if link is None else link
    return smoothed_capacity(point_allocation(point), link, tensor_for(cfg, link), point.pump_power)
