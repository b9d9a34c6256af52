"""Seeded Monte-Carlo sweeps over the power budget or the SCNR threshold.

An experiment is described by an INI file::

    [system]
    n_tx = 32
    n_rf = 8
    n_users = 4
    p_t_dbm = 30
    noise_dbm = -100
    scnr_threshold_db = 10

    [sweep]
    kind = power            ; power (values in dBm) or scnr (values in dB)
    values = 20, 25, 30
    schemes = RsmaHybrid, SdmaHybrid
    profiles = HighCorrelation, LowCorrelation
    seeds = 0:50            ; "a:b" range (b excluded) and/or comma list

    [solver]
    max_outer = 200         ; any SolverOptions field

    [output]
    dir = results
    timing = false

Every (scheme, profile, sweep value, seed) is one run.  The channel draw
depends on (seed, profile) only, so all sweep values and schemes see the same
channels.  Records are sorted by that key before writing, so the output is
independent of the worker count.  ``wall_time_ms`` is written as ``nan``
unless ``timing = true``, which keeps the CSV byte-reproducible by default.
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import SchemeKind, solve_scheme
from .metrics import evaluate
from .scene import (
    ConfigError,
    CorrelationProfile,
    SystemConfig,
    build_radar_scene,
    db_to_linear,
    dbm_to_mw,
    generate_channel_set,
    make_rng,
)
from .solver import SolverOptions, Status

__all__ = [
    "CSV_COLUMNS",
    "TRACE_COLUMNS",
    "SweepKind",
    "ExperimentSpec",
    "RunRecord",
    "AggregateRow",
    "parse_config",
    "parse_config_text",
    "run_one",
    "run_experiment",
    "aggregate",
    "write_csv",
    "read_csv",
    "write_aggregate_csv",
    "write_figure_csv",
    "write_plot",
    "trace_run",
    "write_trace_csv",
]

CSV_COLUMNS = (
    "scheme", "profile", "sweep_kind", "sweep_value", "seed", "wsr_bps_hz", "scnr_in_db",
    "scnr_out_db", "feasible", "outer_iters", "inner_iters_total", "wall_time_ms", "status",
)
TRACE_COLUMNS = ("outer", "inner", "al_objective", "violation", "rho", "wsr_bps_hz", "scnr_in")
AGGREGATE_COLUMNS = (
    "scheme", "profile", "sweep_kind", "sweep_value", "n_runs", "n_feasible", "wsr_mean", "wsr_std",
)
#: Placeholder scheme in the figure table; no NOMA solver is implemented.
NOMA_PLACEHOLDER = "NomaIsac"
ERROR_STATUS = "Error"


class SweepKind:
    POWER = "PowerSweep"
    SCNR = "ScnrSweep"

    @staticmethod
    def parse(value: str) -> str:
        text = str(value).strip().lower()
        if text in ("power", "powersweep", "p_t", "pt"):
            return SweepKind.POWER
        if text in ("scnr", "scnrsweep", "gamma", "gamma0"):
            return SweepKind.SCNR
        raise ConfigError("sweep.kind", f"unknown sweep kind {value!r}; use power or scnr")


@dataclass(frozen=True)
class ExperimentSpec:
    """A fully resolved experiment.

    ``base`` is in linear units.  ``sweep_values`` keep the config's units
    (dBm for a power sweep, dB for an SCNR sweep) because they label the
    output; :meth:`config_at` converts them.
    """

    base: SystemConfig
    sweep_kind: str
    sweep_values: tuple
    schemes: tuple
    profiles: tuple
    seeds: tuple
    solver: SolverOptions = field(default_factory=SolverOptions)
    output_dir: str = "results"
    target_angle: float = 0.0
    clutter_angles: tuple = tuple(np.deg2rad((-50.0, -20.0, 40.0)))
    timing: bool = False

    def __post_init__(self):
        for key in ("sweep_values", "schemes", "profiles", "seeds"):
            if not getattr(self, key):
                raise ConfigError(f"sweep.{key.removeprefix('sweep_')}", "must not be empty")

    def config_at(self, value: float) -> SystemConfig:
        if self.sweep_kind == SweepKind.POWER:
            return dataclasses.replace(self.base, power_budget=float(dbm_to_mw(value)))
        return dataclasses.replace(self.base, scnr_threshold=float(db_to_linear(value)))

    def scene(self, cfg: SystemConfig):
        return build_radar_scene(self.target_angle, 1.0, [(a, 1.0) for a in self.clutter_angles], cfg)

    def tasks(self) -> list[tuple]:
        """All run keys ``(scheme, profile, sweep_value, seed)`` in output order."""
        keys = [
            (s.value, p.value, float(v), int(seed))
            for s in self.schemes for p in self.profiles
            for v in self.sweep_values for seed in self.seeds
        ]
        return sorted(keys)


@dataclass
class RunRecord:
    scheme: str
    profile: str
    sweep_kind: str
    sweep_value: float
    seed: int
    wsr_bps_hz: float
    scnr_in_db: float
    scnr_out_db: float
    feasible: bool
    outer_iters: int
    inner_iters_total: int
    wall_time_ms: float
    status: str

    @property
    def key(self) -> tuple:
        return (self.scheme, self.profile, self.sweep_value, self.seed)


@dataclass
class AggregateRow:
    scheme: str
    profile: str
    sweep_kind: str
    sweep_value: float
    n_runs: int
    n_feasible: int
    wsr_mean: float
    wsr_std: float


# ---------------------------------------------------------------------------
# config parsing


_SYSTEM_KEYS = {
    "n_tx": int, "n_rx": int, "n_rf": int, "n_users": int, "n_paths": int,
    "carrier_freq_hz": float, "antenna_spacing_wavelengths": float,
    "pathloss_db": float, "nlos_gain_db": float,
}


def _floats(text: str, key: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise ConfigError(key, f"expected a comma-separated list of numbers, got {text!r}") from None


def _seeds(text: str) -> tuple:
    out = []
    for part in (t.strip() for t in text.split(",")):
        if not part:
            continue
        try:
            if ":" in part:
                lo, hi = (int(t) for t in part.split(":"))
                out.extend(range(lo, hi))
            else:
                out.append(int(part))
        except ValueError:
            raise ConfigError("sweep.seeds", f"bad seed entry {part!r}") from None
    for s in out:
        if not 0 <= s < 2**64:
            raise ConfigError("sweep.seeds", f"seed {s} outside [0, 2^64)")
    return tuple(out)


def _bool(text: str, key: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"expected a boolean, got {text!r}")


def _solver_options(section) -> SolverOptions:
    fields = {f.name: f for f in dataclasses.fields(SolverOptions)}
    kwargs = {}
    for key, text in section.items():
        if key not in fields:
            raise ConfigError(f"solver.{key}", "unknown solver option")
        default = fields[key].default
        try:
            if isinstance(default, bool):
                kwargs[key] = _bool(text, f"solver.{key}")
            elif isinstance(default, int):
                kwargs[key] = int(text)
            elif isinstance(default, tuple):
                kwargs[key] = tuple(_floats(text, f"solver.{key}"))
            else:
                kwargs[key] = float(text)
        except ValueError:
            raise ConfigError(f"solver.{key}", f"bad value {text!r}") from None
    try:
        return SolverOptions(**kwargs)
    except ConfigError as err:
        raise ConfigError(f"solver.{err.key}", str(err).split(": ", 1)[-1]) from None


def parse_config_text(text: str, output_dir: str | None = None) -> ExperimentSpec:
    """Parse an experiment config given as a string (see module docstring)."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError("config", f"cannot parse: {err}") from None
    for name in parser.sections():
        if name not in ("system", "sweep", "solver", "output"):
            raise ConfigError(name, "unknown section")
    system = parser["system"] if parser.has_section("system") else {}
    sweep = parser["sweep"] if parser.has_section("sweep") else {}
    output = parser["output"] if parser.has_section("output") else {}

    kwargs = {}
    known = set(_SYSTEM_KEYS) | {
        "p_t_dbm", "noise_dbm", "echo_noise_dbm", "scnr_threshold_db", "user_weights",
        "fully_digital", "target_angle_deg", "clutter_angles_deg",
    }
    for key, text in system.items():
        if key not in known:
            raise ConfigError(f"system.{key}", "unknown key")
        if key in _SYSTEM_KEYS:
            try:
                kwargs[key] = _SYSTEM_KEYS[key](text)
            except ValueError:
                raise ConfigError(f"system.{key}", f"bad value {text!r}") from None

    def number(key, default):
        if key not in system:
            return default
        vals = _floats(system[key], f"system.{key}")
        if len(vals) != 1:
            raise ConfigError(f"system.{key}", "expected one number")
        return vals[0]

    kwargs["power_budget"] = float(dbm_to_mw(number("p_t_dbm", 30.0)))
    kwargs["user_noise_power"] = float(dbm_to_mw(number("noise_dbm", -100.0)))
    kwargs["echo_noise_power"] = float(dbm_to_mw(number("echo_noise_dbm", -100.0)))
    kwargs["scnr_threshold"] = float(db_to_linear(number("scnr_threshold_db", 10.0)))
    if "user_weights" in system:
        kwargs["user_weights"] = tuple(_floats(system["user_weights"], "system.user_weights"))
    if "fully_digital" in system:
        kwargs["fully_digital"] = _bool(system["fully_digital"], "system.fully_digital")
    try:
        base = SystemConfig(**kwargs)
    except ConfigError as err:
        raise ConfigError(f"system.{err.key}", str(err).split(": ", 1)[-1]) from None
    target = np.deg2rad(number("target_angle_deg", 0.0))
    clutter = np.deg2rad(_floats(system.get("clutter_angles_deg", "-50, -20, 40"),
                                 "system.clutter_angles_deg"))
    for key, angles in (("target_angle_deg", [target]), ("clutter_angles_deg", clutter)):
        if any(abs(a) > np.pi / 2 for a in angles):
            raise ConfigError(f"system.{key}", "angles must lie in [-90, 90] degrees")

    for key in sweep:
        if key not in ("kind", "values", "schemes", "profiles", "seeds"):
            raise ConfigError(f"sweep.{key}", "unknown key")
    kind = SweepKind.parse(sweep.get("kind", "power"))
    values = tuple(_floats(sweep.get("values", ""), "sweep.values"))
    try:
        schemes = tuple(SchemeKind.parse(s) for s in sweep.get("schemes", "RsmaHybrid").split(",") if s.strip())
    except ValueError as err:
        raise ConfigError("sweep.schemes", str(err)) from None
    try:
        profiles = tuple(CorrelationProfile.parse(p)
                         for p in sweep.get("profiles", "HighCorrelation").split(",") if p.strip())
    except ConfigError as err:
        raise ConfigError("sweep.profiles", str(err).split(": ", 1)[-1]) from None
    seeds = _seeds(sweep.get("seeds", "0:50"))
    if kind == SweepKind.POWER and not all(math.isfinite(v) for v in values):
        raise ConfigError("sweep.values", "power values must be finite")

    solver = _solver_options(parser["solver"]) if parser.has_section("solver") else SolverOptions()
    for key in output:
        if key not in ("dir", "timing"):
            raise ConfigError(f"output.{key}", "unknown key")
    timing = _bool(output.get("timing", "false"), "output.timing")
    out_dir = output_dir if output_dir is not None else output.get("dir", "results")
    return ExperimentSpec(
        base=base, sweep_kind=kind, sweep_values=values, schemes=schemes, profiles=profiles,
        seeds=seeds, solver=solver, output_dir=str(out_dir), target_angle=float(target),
        clutter_angles=tuple(float(a) for a in clutter), timing=timing,
    )


def parse_config(path, output_dir: str | None = None) -> ExperimentSpec:
    """Read and validate an experiment config file.

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    ConfigError
        On any invalid entry; ``err.key`` is ``section.key``.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FileNotFoundError(f"config file not found: {path}") from None
    return parse_config_text(text, output_dir=output_dir)


# ---------------------------------------------------------------------------
# running


def _db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else -math.inf


def run_one(spec: ExperimentSpec, key: tuple, return_result: bool = False):
    """Solve one ``(scheme, profile, sweep_value, seed)`` run.

    Any exception is caught and recorded with status ``Error``.
    """
    scheme, profile, value, seed = key
    start = time.perf_counter()
    result = None
    try:
        cfg = spec.config_at(value)
        scene = spec.scene(cfg)
        channels = generate_channel_set(cfg, profile, make_rng(seed))
        result = solve_scheme(scheme, channels, scene, cfg, spec.solver, seed=seed)
        report = evaluate(result.solution, channels, scene, cfg)
        status = result.status.value
        record = RunRecord(
            scheme, profile, spec.sweep_kind, value, seed, float(report.wsr),
            _db(report.scnr_in), _db(report.scnr_out),
            bool(report.feasible and result.status is Status.CONVERGED),
            int(result.outer_iters), int(result.inner_iters_total), math.nan, status,
        )
    except Exception as err:  # noqa: BLE001  a failed run must not abort the sweep
        record = RunRecord(scheme, profile, spec.sweep_kind, value, seed, math.nan, math.nan,
                           math.nan, False, 0, 0, math.nan, f"{ERROR_STATUS}: {type(err).__name__}")
    if spec.timing:
        record.wall_time_ms = 1e3 * (time.perf_counter() - start)
    return (record, result) if return_result else record


def _resolve_jobs(jobs: int | None) -> int:
    if jobs is None:
        env = os.environ.get("RSMA_ISAC_JOBS")
        if env:
            try:
                jobs = int(env)
            except ValueError:
                raise ConfigError("RSMA_ISAC_JOBS", f"expected an integer, got {env!r}") from None
        else:
            jobs = 1
    if jobs < 1:
        raise ConfigError("jobs", "must be >= 1")
    return jobs


def run_experiment(spec: ExperimentSpec, jobs: int | None = None, progress=None):
    """Run every task of ``spec``; returns ``(records, aggregate rows)``.

    ``jobs`` defaults to ``$RSMA_ISAC_JOBS`` or 1.  ``progress``, if given, is
    called with each finished record (in completion order).
    """
    jobs = _resolve_jobs(jobs)
    tasks = spec.tasks()
    records = []
    if jobs == 1:
        for key in tasks:
            rec = run_one(spec, key)
            records.append(rec)
            if progress:
                progress(rec)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for rec in pool.map(run_one, [spec] * len(tasks), tasks, chunksize=1):
                records.append(rec)
                if progress:
                    progress(rec)
    records.sort(key=lambda r: r.key)
    return records, aggregate(records)


def aggregate(records: Sequence[RunRecord]) -> list[AggregateRow]:
    """Mean and (population) standard deviation of the WSR per point.

    Runs whose WSR is not finite (solver errors) are left out of the mean.
    """
    groups: dict[tuple, list[RunRecord]] = {}
    for rec in records:
        groups.setdefault((rec.scheme, rec.profile, rec.sweep_kind, rec.sweep_value), []).append(rec)
    rows = []
    for key in sorted(groups):
        recs = groups[key]
        wsr = np.array([r.wsr_bps_hz for r in recs if math.isfinite(r.wsr_bps_hz)])
        mean = float(wsr.mean()) if wsr.size else math.nan
        std = float(wsr.std()) if wsr.size else math.nan
        rows.append(AggregateRow(*key, len(recs), sum(r.feasible for r in recs), mean, std))
    return rows


# ---------------------------------------------------------------------------
# output


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_rows(path, columns, rows) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
    except OSError as err:
        raise OSError(f"cannot write {path}: {err}") from err


def write_csv(records: Sequence[RunRecord], path) -> None:
    """Per-run CSV with the :data:`CSV_COLUMNS` header; floats round-trip exactly."""
    _write_rows(path, CSV_COLUMNS, ([getattr(r, c) for c in CSV_COLUMNS] for r in records))


def read_csv(path) -> list[RunRecord]:
    """Inverse of :func:`write_csv`."""
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [
            RunRecord(
                row["scheme"], row["profile"], row["sweep_kind"], float(row["sweep_value"]),
                int(row["seed"]), float(row["wsr_bps_hz"]), float(row["scnr_in_db"]),
                float(row["scnr_out_db"]), row["feasible"] == "true", int(row["outer_iters"]),
                int(row["inner_iters_total"]), float(row["wall_time_ms"]), row["status"],
            )
            for row in reader
        ]


def write_aggregate_csv(rows: Sequence[AggregateRow], path) -> None:
    _write_rows(path, AGGREGATE_COLUMNS, ([getattr(r, c) for c in AGGREGATE_COLUMNS] for r in rows))


def _series(rows: Sequence[AggregateRow]) -> dict[str, list[tuple[float, float]]]:
    out: dict[str, list[tuple[float, float]]] = {}
    for r in rows:
        out.setdefault(f"{r.scheme}/{r.profile}", []).append((r.sweep_value, r.wsr_mean))
    return {k: sorted(v) for k, v in sorted(out.items())}


def write_figure_csv(rows: Sequence[AggregateRow], path) -> None:
    """Wide table: one row per sweep value, one mean-WSR column per series.

    A ``NomaIsac/<profile>`` column of NaN is added per profile as a slot for
    a NOMA comparison, which is not implemented.
    """
    series = _series(rows)
    profiles = sorted({r.profile for r in rows})
    names = list(series) + [f"{NOMA_PLACEHOLDER}/{p}" for p in profiles]
    xs = sorted({r.sweep_value for r in rows})
    lookup = {name: dict(pts) for name, pts in series.items()}
    kind = rows[0].sweep_kind if rows else ""
    _write_rows(path, ("sweep_kind", "sweep_value", *names),
                ([kind, x, *(lookup.get(n, {}).get(x, math.nan) for n in names)] for x in xs))


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f")


def write_plot(rows: Sequence[AggregateRow], path, title: str = "") -> None:
    """SVG line chart of mean WSR versus sweep value, one polyline per series."""
    series = {k: [(x, y) for x, y in v if math.isfinite(y)] for k, v in _series(rows).items()}
    series = {k: v for k, v in series.items() if v}
    width, height = 640, 420
    left, right, top, bottom = 70, 200, 40, 60
    pw, ph = width - left - right, height - top - bottom
    xs = [x for pts in series.values() for x, _ in pts] or [0.0, 1.0]
    ys = [y for pts in series.values() for _, y in pts] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 1.0, x1 + 1.0
    pad = 0.05 * (y1 - y0) if y1 > y0 else 1.0
    y0, y1 = y0 - pad, y1 + pad

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + (1.0 - (y - y0) / (y1 - y0)) * ph

    kind = rows[0].sweep_kind if rows else ""
    xlabel = "P_T (dBm)" if kind == SweepKind.POWER else "SCNR threshold (dB)"
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left + pw / 2:.2f}" y="22" text-anchor="middle" font-size="14">{_xml(title)}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for x in sorted(set(xs)):
        out.append(f'<line x1="{sx(x):.2f}" y1="{top + ph}" x2="{sx(x):.2f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{sx(x):.2f}" y="{top + ph + 18}" text-anchor="middle">{x:g}</text>')
    for i in range(5):
        y = y0 + (y1 - y0) * i / 4
        out.append(f'<line x1="{left - 5}" y1="{sy(y):.2f}" x2="{left}" y2="{sy(y):.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{sy(y) + 4:.2f}" text-anchor="end">{y:.1f}</text>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{height - 15}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="18" y="{top + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {top + ph / 2:.2f})">mean WSR (bit/s/Hz)</text>')
    for i, (name, pts) in enumerate(series.items()):
        color = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        out.append(f'<polyline data-series="{_xml(name)}" points="{coords}" fill="none" '
                   f'stroke="{color}" stroke-width="2"/>')
        for x, y in pts:
            out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="{color}"/>')
        ly = top + 10 + 18 * i
        out.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 32}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 38}" y="{ly + 4}">{_xml(name)}</text>')
    out.append("</svg>")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(out) + "\n", encoding="utf-8", newline="\n")
    except OSError as err:
        raise OSError(f"cannot write {path}: {err}") from err


def _xml(text: str) -> str:
    return str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


# ---------------------------------------------------------------------------
# traces


def trace_run(spec: ExperimentSpec, seed: int, scheme=None, profile=None, sweep_value=None):
    """Solve one run and return ``(record, trace)``.

    Scheme, profile and sweep value default to the first ones of ``spec``.
    The trace values are in the solver's normalised units (unit power and
    noise); rates and SCNR ratios are unit-free and match the physical ones.
    """
    key = (
        SchemeKind.parse(scheme or spec.schemes[0]).value,
        CorrelationProfile.parse(profile or spec.profiles[0]).value,
        float(spec.sweep_values[0] if sweep_value is None else sweep_value),
        int(seed),
    )
    record, result = run_one(spec, key, return_result=True)
    return record, (result.trace if result is not None else [])


def write_trace_csv(trace, path) -> None:
    _write_rows(path, TRACE_COLUMNS, ([t.outer, t.inner, float(t.al_objective), float(t.violation),
                                        float(t.rho), float(t.wsr), float(t.scnr_in)] for t in trace))
