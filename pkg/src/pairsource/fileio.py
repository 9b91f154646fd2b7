"""File formats: run configuration, sweep datasets, histograms and reports.

All floats are written with ``repr`` so every file reads back to the exact
same values and rewrites byte-identically.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coincidence import DEFAULT_BIN_WIDTH, DEFAULT_WINDOW, Histogram
from .errors import ConfigError, DataError, PairSourceError
from .montecarlo import PowerPointRecord, SweepDataset
from .ratemodel import IoConfig, SourceParams
from .sweep import (
    AnalysisOptions,
    CharacterizationReport,
    CoincidenceFit,
    SweepPlan,
    default_plan,
)

DATASET_COLUMNS = ["power_mw", "repeat", "duration_s", "singles_s", "singles_i", "seed"]
HIST_COLUMNS = ["power_mw", "repeat", "bin_center_ns", "count"]
RATE_COLUMNS = [
    "power_mw",
    "duration_s",
    "repeats",
    "scr_s_hz",
    "scr_s_err_hz",
    "scr_i_hz",
    "scr_i_err_hz",
    "ccr_hz",
    "ccr_err_hz",
    "ccr_window_raw_hz",
    "ccr_window_raw_err_hz",
    "car",
    "sigma_car",
    "car_central_counts",
    "car_accidental_counts",
    "car_status",
    "std_err_floored",
]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _writer(buf):
    return csv.writer(buf, lineterminator="\n")


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _split_header(lines: list[str], path) -> tuple[dict[str, str], list[str], int]:
    meta = {}
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        body = lines[i][1:].strip()
        if "=" in body:
            key, value = body.split("=", 1)
            meta[key.strip()] = value.strip()
        i += 1
    return meta, lines[i:], i


def _need(meta: dict, key: str, path, conv=float):
    if key not in meta:
        raise DataError(f"{path}: missing header field '{key}'")
    try:
        return conv(meta[key])
    except ValueError as exc:
        raise DataError(f"{path}: bad header field '{key}': {meta[key]!r}") from exc


# ---------------------------------------------------------------- histograms


def histogram_to_csv(h: Histogram, extra: dict | None = None) -> str:
    buf = io.StringIO()
    buf.write(f"# origin_s={_fmt(float(h.origin))}\n")
    buf.write(f"# bin_width_s={_fmt(float(h.bin_width))}\n")
    buf.write(f"# n_bins={h.n_bins}\n")
    for key, value in (extra or {}).items():
        buf.write(f"# {key}={_fmt(value)}\n")
    w = _writer(buf)
    w.writerow(["bin_center_ns", "counts"])
    for center, count in zip(h.centers, h.counts):
        w.writerow([_fmt(float(center) * 1e9), _fmt(count)])
    return buf.getvalue()


def write_histogram(path, h: Histogram, extra: dict | None = None) -> None:
    _write_text(Path(path), histogram_to_csv(h, extra))


def read_histogram(path) -> tuple[Histogram, dict]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read histogram {path}: {exc}") from exc
    meta, body, offset = _split_header(lines, path)
    rows = list(csv.reader(body))
    if not rows or [c.strip() for c in rows[0]] != ["bin_center_ns", "counts"]:
        raise DataError(f"{path}: expected header 'bin_center_ns,counts'")
    centers, counts = [], []
    for k, row in enumerate(rows[1:], start=offset + 2):
        if not row:
            continue
        try:
            if len(row) != 2:
                raise ValueError("expected 2 columns")
            centers.append(float(row[0]))
            counts.append(float(row[1]))
        except ValueError as exc:
            raise DataError(f"{path}: row {k}: {exc}") from exc
    if not counts:
        raise DataError(f"{path}: no histogram rows")
    counts_arr = np.asarray(counts)
    if np.all(counts_arr == np.round(counts_arr)):
        counts_arr = counts_arr.astype(np.int64)
    if "bin_width_s" in meta:
        bw = _need(meta, "bin_width_s", path)
        origin = _need(meta, "origin_s", path)
    elif len(centers) >= 2:
        bw = (centers[1] - centers[0]) * 1e-9
        origin = centers[0] * 1e-9 - 0.5 * bw
    else:
        raise DataError(f"{path}: cannot infer bin width from a single bin without header")
    try:
        h = Histogram(origin, bw, counts_arr)
    except PairSourceError as exc:
        raise DataError(f"{path}: {exc}") from exc
    return h, meta


# ------------------------------------------------------------------ datasets


def dataset_paths(directory, config: IoConfig) -> tuple[Path, Path]:
    directory = Path(directory)
    tag = IoConfig(config).value
    return directory / f"sweep_{tag}.csv", directory / f"sweep_{tag}_hist.csv"


def _dataset_header(ds: SweepDataset) -> str:
    h = ds.points[0].histogram
    return (
        f"# config={ds.config.value}\n"
        f"# rep_period_s={_fmt(float(ds.rep_period))}\n"
        f"# origin_s={_fmt(float(h.origin))}\n"
        f"# bin_width_s={_fmt(float(h.bin_width))}\n"
        f"# n_bins={h.n_bins}\n"
    )


def write_dataset(path, ds: SweepDataset, hist_path=None) -> None:
    """Write the per-point table and a long-format histogram sidecar.

    The sidecar lists only non-zero bins; the header fixes the full binning.
    """
    path = Path(path)
    if hist_path is None:
        hist_path = path.with_name(path.stem + "_hist.csv")
    header = _dataset_header(ds)

    buf = io.StringIO()
    buf.write(header)
    buf.write(f"# histogram_file={Path(hist_path).name}\n")
    w = _writer(buf)
    w.writerow(DATASET_COLUMNS)
    for rec in ds.points:
        w.writerow(
            [_fmt(rec.p_laser), rec.repeat, _fmt(rec.duration), rec.singles_s, rec.singles_i, rec.seed]
        )
    _write_text(path, buf.getvalue())

    buf = io.StringIO()
    buf.write(header)
    w = _writer(buf)
    w.writerow(HIST_COLUMNS)
    for rec in ds.points:
        h = rec.histogram
        nz = np.flatnonzero(h.counts)
        centers = h.centers
        for k in nz:
            w.writerow([_fmt(rec.p_laser), rec.repeat, _fmt(float(centers[k]) * 1e9), _fmt(h.counts[k])])
    _write_text(Path(hist_path), buf.getvalue())


def _read_table(path: Path, columns: list[str]):
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    meta, body, offset = _split_header(lines, path)
    rows = list(csv.reader(body))
    if not rows or [c.strip() for c in rows[0]] != columns:
        raise DataError(f"{path}: expected columns {','.join(columns)}")
    return meta, rows[1:], offset + 2


def read_dataset(path, hist_path=None) -> SweepDataset:
    path = Path(path)
    meta, rows, first = _read_table(path, DATASET_COLUMNS)
    if hist_path is None:
        name = meta.get("histogram_file", path.stem + "_hist.csv")
        hist_path = path.with_name(name)
    hist_path = Path(hist_path)
    try:
        config = IoConfig(meta.get("config", ""))
    except ValueError:
        raise DataError(f"{path}: header field 'config' must be A or B") from None
    rep_period = _need(meta, "rep_period_s", path)
    origin = _need(meta, "origin_s", path)
    bw = _need(meta, "bin_width_s", path)
    n_bins = _need(meta, "n_bins", path, int)

    points = []
    index = {}
    for k, row in enumerate(rows, start=first):
        if not row:
            continue
        try:
            if len(row) != len(DATASET_COLUMNS):
                raise ValueError(f"expected {len(DATASET_COLUMNS)} columns, got {len(row)}")
            p = float(row[0])
            rec = PowerPointRecord(
                p_laser=p,
                duration=float(row[2]),
                config=config,
                singles_s=int(row[3]),
                singles_i=int(row[4]),
                histogram=Histogram(origin, bw, np.zeros(n_bins, dtype=np.int64)),
                seed=int(row[5]),
                repeat=int(row[1]),
            )
        except ValueError as exc:
            raise DataError(f"{path}: row {k}: {exc}") from exc
        if (p, rec.repeat) in index:
            raise DataError(f"{path}: row {k}: duplicate (power, repeat)")
        index[(p, rec.repeat)] = rec
        points.append(rec)

    hmeta, hrows, hfirst = _read_table(hist_path, HIST_COLUMNS)
    for key in ("origin_s", "bin_width_s", "n_bins"):
        if hmeta.get(key) != meta.get(key):
            raise DataError(f"{hist_path}: header field '{key}' disagrees with {path.name}")
    for k, row in enumerate(hrows, start=hfirst):
        if not row:
            continue
        try:
            if len(row) != len(HIST_COLUMNS):
                raise ValueError(f"expected {len(HIST_COLUMNS)} columns, got {len(row)}")
            key = (float(row[0]), int(row[1]))
            b = round((float(row[2]) * 1e-9 - origin) / bw - 0.5)
            count = int(row[3])
        except ValueError as exc:
            raise DataError(f"{hist_path}: row {k}: {exc}") from exc
        if key not in index:
            raise DataError(f"{hist_path}: row {k}: no point with power {key[0]} mW, repeat {key[1]}")
        if not 0 <= b < n_bins or count < 0:
            raise DataError(f"{hist_path}: row {k}: bin or count out of range")
        index[key].histogram.counts[b] += count
    try:
        return SweepDataset(config=config, points=points, rep_period=rep_period)
    except PairSourceError as exc:
        raise DataError(f"{path}: {exc}") from exc


# ------------------------------------------------------------------- reports


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def rates_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = _writer(buf)
    w.writerow(RATE_COLUMNS)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in RATE_COLUMNS])
    return buf.getvalue()


_INT_COLUMNS = {"repeats", "car_central_counts"}
_STR_COLUMNS = {"car_status", "std_err_floored"}


def read_rates(path) -> list[dict]:
    """Parse a ``rates_<cfg>.csv`` table back into row dictionaries."""
    path = Path(path)
    _, rows, first = _read_table(path, RATE_COLUMNS)
    out = []
    for k, row in enumerate(rows, start=first):
        if len(row) != len(RATE_COLUMNS):
            raise DataError(f"{path}: row {k}: expected {len(RATE_COLUMNS)} columns")
        rec = {}
        try:
            for col, text in zip(RATE_COLUMNS, row):
                if col in _STR_COLUMNS:
                    rec[col] = text
                elif text == "":
                    rec[col] = None
                else:
                    rec[col] = int(text) if col in _INT_COLUMNS else float(text)
        except ValueError as exc:
            raise DataError(f"{path}: row {k}: {exc}") from exc
        out.append(rec)
    return out


def write_report(report: CharacterizationReport, outdir, include_datasets: bool = True) -> Path:
    """Write the report directory and return its path.

    Contents: ``summary.json``, ``fits.json``, ``rates_<cfg>.csv`` per
    configuration and, when present, the sweep datasets and pooled
    per-power histograms under ``histograms/``.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_text(outdir / "summary.json", _json(_clean(report.summary_record())))
    _write_text(outdir / "fits.json", _json(_clean(report.fits_record())))
    for config, analysis in sorted(report.analyses.items()):
        _write_text(outdir / f"rates_{config.value}.csv", rates_to_csv(analysis.rows))
    if include_datasets:
        for config, ds in sorted(report.datasets.items()):
            csv_path, hist_path = dataset_paths(outdir, config)
            write_dataset(csv_path, ds, hist_path)
            for k, (p, group) in enumerate(ds.groups()):
                pooled = group[0].histogram
                for rec in group[1:]:
                    pooled = pooled + rec.histogram
                write_histogram(
                    outdir / "histograms" / f"{config.value}_{k:02d}.csv",
                    pooled,
                    {"config": config.value, "power_mw": p, "repeats_pooled": len(group)},
                )
    return outdir


def _clean(obj):
    """Replace non-finite floats by None so JSON stays strict."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


# ------------------------------------------------------------ configuration

SOURCE_FIELDS = {
    # config key: (SourceParams field, scale to internal units, required)
    "gamma_eff_mhz_per_mw2": ("gamma_eff", 1.0, True),
    "eta_gc_a": ("eta_gc_a", 1.0, True),
    "eta_gc_b": ("eta_gc_b", 1.0, True),
    "eta_path_s": ("eta_path_s", 1.0, True),
    "eta_path_i": ("eta_path_i", 1.0, True),
    "leak_s_hz_per_mw": ("leak_s", 1.0, False),
    "leak_i_hz_per_mw": ("leak_i", 1.0, False),
    "dark_s_hz": ("dark_s", 1.0, False),
    "dark_i_hz": ("dark_i", 1.0, False),
    "rep_rate_hz": ("rep_rate", 1.0, False),
    "jitter_fwhm_ns": ("jitter_fwhm", 1e-9, False),
}

DEFAULTS_TEXT = """\
# pairsource run configuration. Units are part of every key name.

[run]
# simulate | analyze
mode = simulate
seed = 1
output_dir = report
# worker processes for the simulation stage; output does not depend on it
workers = 1

[source]
# required in simulate mode
gamma_eff_mhz_per_mw2 = 14.7
eta_gc_a = 0.17320508075688773
eta_gc_b = 0.057735026918962574
eta_path_s = 0.3981071705534972
eta_path_i = 0.3981071705534972
# optional
leak_s_hz_per_mw = 10000.0
leak_i_hz_per_mw = 10000.0
dark_s_hz = 100.0
dark_i_hz = 100.0
rep_rate_hz = 50000000.0
jitter_fwhm_ns = 1.2

[plan]
# either max_power_mw (12 log-spaced powers from min_power_mw, time ~ 1/P^2 in [30, 300] s)
# or explicit comma-separated powers_mw with integration_time_s (one value or one per power)
max_power_mw = 3.0
min_power_mw = 0.3
n_powers = 12
repeats = 10
configs = A, B
bin_width_ns = 0.1

[analysis]
car_window_ns = 2.0
# empty means one pulse period
rate_window_ns =
# subtracted | raw
coincidence_fit = subtracted
# simulate mode takes eta_coupling from eta_gc_a * eta_gc_b; analyze mode requires it
eta_coupling =
sigma_eta_rel = 0.05

[inputs]
# analyze mode: sweep CSV files (relative paths are resolved against this file)
dataset_a =
dataset_b =
"""


@dataclass
class RunConfig:
    mode: str
    seed: int
    output_dir: Path
    workers: int = 1
    params: SourceParams | None = None
    plan: SweepPlan | None = None
    bin_width: float = DEFAULT_BIN_WIDTH
    options: AnalysisOptions = field(default_factory=AnalysisOptions)
    eta_coupling: float | None = None
    inputs: dict[IoConfig, Path] = field(default_factory=dict)


def _get(cp, section, key, conv=str, default=None, required=False):
    if not cp.has_section(section) or not cp.has_option(section, key) or cp.get(section, key).strip() == "":
        if required:
            raise ConfigError(f"missing required field [{section}] {key}")
        return default
    raw = cp.get(section, key).strip()
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for [{section}] {key} = {raw!r}: {exc}") from exc


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def load_config(path) -> RunConfig:
    path = Path(path)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    base = path.parent

    mode = _get(cp, "run", "mode", default="simulate")
    if mode not in ("simulate", "analyze"):
        raise ConfigError(f"[run] mode must be simulate or analyze, got {mode!r}")
    seed = _get(cp, "run", "seed", int, default=1)
    if seed < 0:
        raise ConfigError("[run] seed must be non-negative")
    out = Path(_get(cp, "run", "output_dir", default="report"))
    if not out.is_absolute():
        out = base / out
    workers = _get(cp, "run", "workers", int, default=1)

    rate_window_ns = _get(cp, "analysis", "rate_window_ns", float)
    try:
        options = AnalysisOptions(
            car_window=_get(cp, "analysis", "car_window_ns", float, DEFAULT_WINDOW * 1e9) * 1e-9,
            rate_window=None if rate_window_ns is None else rate_window_ns * 1e-9,
            coincidence_fit=CoincidenceFit(_get(cp, "analysis", "coincidence_fit", default="subtracted")),
            sigma_eta_rel=_get(cp, "analysis", "sigma_eta_rel", float, 0.05),
        )
    except ValueError as exc:
        raise ConfigError(f"[analysis] {exc}") from exc
    eta_coupling = _get(cp, "analysis", "eta_coupling", float)
    bin_width = _get(cp, "plan", "bin_width_ns", float, DEFAULT_BIN_WIDTH * 1e9) * 1e-9
    cfg = RunConfig(
        mode=mode,
        seed=seed,
        output_dir=out,
        workers=workers,
        bin_width=bin_width,
        options=options,
        eta_coupling=eta_coupling,
    )

    if mode == "simulate":
        values = {}
        for key, (name, scale, required) in SOURCE_FIELDS.items():
            v = _get(cp, "source", key, float, required=required)
            if v is not None:
                values[name] = v * scale
        if cp.has_section("source"):
            unknown = set(cp.options("source")) - set(SOURCE_FIELDS)
            if unknown:
                raise ConfigError(f"unknown field(s) in [source]: {', '.join(sorted(unknown))}")
        try:
            cfg.params = SourceParams(**values)
        except PairSourceError as exc:
            raise ConfigError(f"[source] {exc}") from exc
        cfg.plan = _load_plan(cp)
    else:
        for config in IoConfig:
            p = _get(cp, "inputs", f"dataset_{config.value.lower()}")
            if p is None:
                continue
            p = Path(p)
            if not p.is_absolute():
                p = base / p
            if not p.exists():
                raise ConfigError(f"[inputs] dataset_{config.value.lower()}: {p} does not exist")
            cfg.inputs[config] = p
        if not cfg.inputs:
            raise ConfigError("missing required field [inputs] dataset_a (and/or dataset_b)")
        if eta_coupling is None:
            raise ConfigError("missing required field [analysis] eta_coupling")
    return cfg


def _load_plan(cp) -> SweepPlan:
    repeats = _get(cp, "plan", "repeats", int, 10)
    configs_text = _get(cp, "plan", "configs", default="A, B")
    try:
        configs = tuple(IoConfig(c.strip()) for c in configs_text.split(",") if c.strip())
    except ValueError as exc:
        raise ConfigError(f"[plan] configs: {exc}") from exc
    powers = _get(cp, "plan", "powers_mw", _floats)
    try:
        if powers is not None:
            times = _get(cp, "plan", "integration_time_s", _floats, required=True)
            if len(times) == 1:
                times = times * len(powers)
            return SweepPlan(tuple(powers), tuple(times), repeats, configs)
        max_power = _get(cp, "plan", "max_power_mw", float, required=True)
        return default_plan(
            max_power,
            n_powers=_get(cp, "plan", "n_powers", int, 12),
            repeats=repeats,
            min_power=_get(cp, "plan", "min_power_mw", float, 0.3),
            configs=configs,
        )
    except ConfigError:
        raise
    except PairSourceError as exc:
        raise ConfigError(f"[plan] {exc}") from exc
