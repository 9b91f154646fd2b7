"""Measurement protocol and the end-to-end characterization pipeline."""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .coincidence import DEFAULT_BIN_WIDTH, DEFAULT_WINDOW, Histogram, compute_car, window_counts
from .errors import DomainError, PairSourceError, UndefinedCarError, with_context
from .extract import FitTriple, GammaEstimate, gamma_dual_config, gamma_single_config
from .fitting import RateKind, RatePoint, repeats_to_rate_point, weighted_quadratic_fit
from .montecarlo import SweepDataset, simulate_sweep
from .ratemodel import IoConfig, SourceParams

log = logging.getLogger(__name__)

MIN_POWER = 0.3  # mW
TIME_BOUNDS = (30.0, 300.0)  # s
SINGLE_CONFIG_WARNING = (
    "only one coupler configuration supplied: gamma_eff uses sqrt(eta_coupling) as the input "
    "coupler efficiency and is biased whenever the two grating couplers differ"
)


@dataclass(frozen=True)
class SweepPlan:
    powers: tuple[float, ...]  # mW
    integration_times: tuple[float, ...]  # s, one per power
    repeats: int = 10
    configs: tuple[IoConfig, ...] = (IoConfig.A, IoConfig.B)
    time_bounds: tuple[float, float] | None = TIME_BOUNDS

    def __post_init__(self):
        powers = tuple(float(p) for p in self.powers)
        times = tuple(float(t) for t in self.integration_times)
        configs = tuple(IoConfig(c) for c in self.configs)
        object.__setattr__(self, "powers", powers)
        object.__setattr__(self, "integration_times", times)
        object.__setattr__(self, "configs", configs)
        if not powers:
            raise DomainError("plan needs at least one power")
        if len(times) != len(powers):
            raise DomainError("need one integration time per power")
        if any(not p > 0.0 for p in powers):
            raise DomainError("powers must be strictly positive")
        if any(b <= a for a, b in zip(powers, powers[1:])):
            raise DomainError("powers must be strictly increasing")
        if any(not t > 0.0 for t in times):
            raise DomainError("integration times must be > 0")
        if self.time_bounds is not None:
            lo, hi = self.time_bounds
            if any(t < lo or t > hi for t in times):
                raise DomainError(f"integration times must lie in [{lo:g}, {hi:g}] s")
        if int(self.repeats) != self.repeats or self.repeats < 1:
            raise DomainError("repeats must be a positive integer")
        if not configs or len(set(configs)) != len(configs):
            raise DomainError("configs must be a non-empty list without duplicates")

    def to_record(self) -> dict:
        return {
            "powers_mw": list(self.powers),
            "integration_times_s": list(self.integration_times),
            "repeats": self.repeats,
            "configs": [c.value for c in self.configs],
        }


def default_plan(
    max_power: float,
    n_powers: int = 12,
    repeats: int = 10,
    min_power: float = MIN_POWER,
    time_bounds: tuple[float, float] = TIME_BOUNDS,
    configs=(IoConfig.A, IoConfig.B),
) -> SweepPlan:
    """Log-spaced powers with integration time ~ 1/P^2, clamped to ``time_bounds``.

    The central-peak rate is pair dominated and so grows as P^2; scaling the
    time by its inverse keeps coincidence counts per point roughly constant.
    The lowest power gets the longest time.
    """
    if not max_power > min_power:
        raise DomainError(
            f"max_power must exceed {min_power:g} mW to give >= 4 distinct powers, got {max_power!r}"
        )
    if n_powers < 4:
        raise DomainError("a quadratic fit needs at least 4 powers")
    if repeats < 2:
        raise DomainError("at least 2 repeats are needed for a standard error")
    powers = np.geomspace(min_power, max_power, n_powers)
    lo, hi = time_bounds
    times = np.clip(hi * (min_power / powers) ** 2, lo, hi)
    return SweepPlan(
        powers=tuple(float(p) for p in powers),
        integration_times=tuple(float(t) for t in times),
        repeats=repeats,
        configs=tuple(configs),
        time_bounds=time_bounds,
    )


class CoincidenceFit(str, enum.Enum):
    SUBTRACTED = "subtracted"
    RAW = "raw"


@dataclass(frozen=True)
class AnalysisOptions:
    car_window: float = DEFAULT_WINDOW  # s
    rate_window: float | None = None  # s; None means one pulse period
    coincidence_fit: CoincidenceFit = CoincidenceFit.SUBTRACTED
    sigma_eta_rel: float = 0.05

    def to_record(self) -> dict:
        return {
            "car_window_ns": self.car_window * 1e9,
            "rate_window_ns": None if self.rate_window is None else self.rate_window * 1e9,
            "coincidence_fit": CoincidenceFit(self.coincidence_fit).value,
            "sigma_eta_rel": self.sigma_eta_rel,
        }


@dataclass
class ConfigAnalysis:
    config: IoConfig
    rows: list[dict]
    fits: FitTriple
    rate_points: dict[str, list[RatePoint]] = field(repr=False)
    max_car: dict | None = None


@dataclass
class CharacterizationReport:
    analyses: dict[IoConfig, ConfigAnalysis]
    gamma: GammaEstimate
    single_config: dict[IoConfig, GammaEstimate]
    diagnostics: dict
    warnings: list[str]
    provenance: dict
    datasets: dict[IoConfig, SweepDataset] = field(default_factory=dict, repr=False)

    @property
    def fits(self) -> dict[IoConfig, FitTriple]:
        return {c: a.fits for c, a in self.analyses.items()}

    def summary_record(self) -> dict:
        return {
            "gamma": self.gamma.to_record(),
            "single_config_estimates": {
                c.value: g.to_record() for c, g in sorted(self.single_config.items())
            },
            "max_car": {c.value: a.max_car for c, a in sorted(self.analyses.items())},
            "diagnostics": self.diagnostics,
            "warnings": list(self.warnings),
            "provenance": self.provenance,
        }

    def fits_record(self) -> dict:
        return {
            c.value: {
                "signal": a.fits.s.to_record(),
                "idler": a.fits.i.to_record(),
                "coincidence": a.fits.si.to_record(),
            }
            for c, a in sorted(self.analyses.items())
        }


def params_hash(params: SourceParams) -> str:
    blob = json.dumps(params.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _pooled(records) -> Histogram:
    h = records[0].histogram
    total = Histogram(h.origin, h.bin_width, h.counts.copy())
    for rec in records[1:]:
        total = total + rec.histogram
    return total


def analyze_config(dataset: SweepDataset, options: AnalysisOptions) -> ConfigAnalysis:
    """Rate points, three quadratic fits and the per-power table for one configuration."""
    rep_period = dataset.rep_period
    if rep_period is None:
        raise DomainError("dataset lacks the pulse repetition period")
    coinc_kind = (
        RateKind.COINCIDENCE_CORRECTED
        if CoincidenceFit(options.coincidence_fit) is CoincidenceFit.SUBTRACTED
        else RateKind.COINCIDENCE_RAW
    )
    cfg = dataset.config.value
    kinds = {"s": RateKind.SIGNAL, "i": RateKind.IDLER, "si": coinc_kind}
    points: dict[str, list[RatePoint]] = {k: [] for k in kinds}
    rows = []
    best = None
    for p, group in dataset.groups():
        ctx = f"config {cfg}, power {p:g} mW"
        try:
            for key, kind in kinds.items():
                points[key].append(
                    repeats_to_rate_point(group, kind, rep_period, options.rate_window)
                )
            raw = repeats_to_rate_point(group, RateKind.COINCIDENCE_RAW, rep_period, options.car_window)
        except PairSourceError as exc:
            raise with_context(exc, f"rates ({ctx})") from exc

        pooled = _pooled(group)
        row = {
            "power_mw": p,
            "duration_s": group[0].duration,
            "repeats": len(group),
            "scr_s_hz": points["s"][-1].rate,
            "scr_s_err_hz": points["s"][-1].std_err,
            "scr_i_hz": points["i"][-1].rate,
            "scr_i_err_hz": points["i"][-1].std_err,
            "ccr_hz": points["si"][-1].rate,
            "ccr_err_hz": points["si"][-1].std_err,
            "ccr_window_raw_hz": raw.rate,
            "ccr_window_raw_err_hz": raw.std_err,
        }
        try:
            car = compute_car(pooled, rep_period, options.car_window)
            row.update(
                car=car.car,
                sigma_car=car.sigma_car,
                car_central_counts=car.central_counts,
                car_accidental_counts=car.accidental_counts,
                car_status="ok",
            )
            if best is None or car.car > best["car"]:
                best = {"power_mw": p, **car.to_record()}
        except UndefinedCarError as exc:
            row.update(
                car=None,
                sigma_car=None,
                car_central_counts=exc.n_central,
                car_accidental_counts=exc.n_accidental,
                car_status=f"undefined (lower bound {exc.car_lower_bound:g})",
            )
        floored = [k for k in kinds if points[k][-1].floored]
        row["std_err_floored"] = ";".join(floored)
        rows.append(row)

    fits = {}
    for key in kinds:
        try:
            fits[key] = weighted_quadratic_fit(points[key])
        except PairSourceError as exc:
            raise with_context(exc, f"fit {key} (config {cfg})") from exc
    return ConfigAnalysis(
        config=dataset.config,
        rows=rows,
        fits=FitTriple(fits["s"], fits["i"], fits["si"]),
        rate_points=points,
        max_car=best,
    )


def analyze_datasets(
    datasets: dict[IoConfig, SweepDataset],
    eta_coupling: float,
    options: AnalysisOptions | None = None,
    sigma_eta: float | None = None,
    provenance: dict | None = None,
) -> CharacterizationReport:
    """Analysis half of the pipeline: CAR, fits and gamma_eff extraction.

    With both configurations the dual-configuration estimate is reported.
    With only one, the single-configuration estimate is reported and a bias
    warning is attached.
    """
    options = options or AnalysisOptions()
    if not datasets:
        raise DomainError("no datasets to analyse")
    if sigma_eta is None:
        sigma_eta = options.sigma_eta_rel * eta_coupling
    analyses = {
        IoConfig(c): analyze_config(ds, options) for c, ds in sorted(datasets.items())
    }
    warnings: list[str] = []
    single = {}
    try:
        eta_in_guess = math.sqrt(eta_coupling)
        for c, a in analyses.items():
            single[c] = gamma_single_config(a.fits.s, a.fits.i, a.fits.si, eta_in_guess)
        if len(analyses) == 2:
            gamma = gamma_dual_config(
                analyses[IoConfig.A].fits, analyses[IoConfig.B].fits, eta_coupling, sigma_eta
            )
        else:
            (gamma,) = single.values()
            warnings.append(SINGLE_CONFIG_WARNING)
            log.warning(SINGLE_CONFIG_WARNING)
    except PairSourceError as exc:
        raise with_context(exc, "extract") from exc

    diagnostics = {}
    for c, a in analyses.items():
        b = a.fits.si.b
        sb = float(a.fits.si.errors[1])
        diagnostics[f"coincidence_linear_term_z_{c.value}"] = b / sb if sb > 0 else None
    return CharacterizationReport(
        analyses=analyses,
        gamma=gamma,
        single_config=single,
        diagnostics=diagnostics,
        warnings=warnings,
        provenance={
            "toolkit_version": __version__,
            "analysis": options.to_record(),
            **(provenance or {}),
        },
        datasets=dict(datasets),
    )


def run_pipeline(
    params: SourceParams,
    plan: SweepPlan,
    master_seed: int,
    options: AnalysisOptions | None = None,
    workers: int = 1,
    bin_width: float = DEFAULT_BIN_WIDTH,
    sigma_eta: float | None = None,
) -> CharacterizationReport:
    """Simulate every configuration in ``plan`` and analyse the result.

    eta_coupling comes from the ground-truth parameters, standing in for a
    direct transmission measurement.
    """
    datasets = {}
    for config in plan.configs:
        try:
            datasets[config] = simulate_sweep(
                params, plan, config, master_seed, workers=workers, bin_width=bin_width
            )
        except PairSourceError as exc:
            raise with_context(exc, "simulate") from exc
    return analyze_datasets(
        datasets,
        params.eta_coupling,
        options,
        sigma_eta=sigma_eta,
        provenance={
            "mode": "simulate",
            "master_seed": int(master_seed),
            "params": params.to_dict(),
            "params_sha256": params_hash(params),
            "plan": plan.to_record(),
            "bin_width_ns": bin_width * 1e9,
        },
    )
