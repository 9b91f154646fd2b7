"""Stochastic detection data for power sweeps.

Two generators share one output type. ``simulate_point_aggregate`` draws
Poisson totals straight from the rate model and is fast enough for
full-length sweeps. ``simulate_point_perpulse`` builds individual detection
events with pulse indices and jitter and histograms their delays, so
accidentals (including multi-pair ones) arise from the event statistics
rather than from a formula.

Delay convention: idler time minus signal time; true pairs sit at zero delay.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .coincidence import DEFAULT_BIN_WIDTH, Histogram
from .errors import DataError, DomainError, PairSourceError, RegimeError, with_context
from .ratemodel import (
    FWHM_PER_SIGMA,
    Channel,
    IoConfig,
    SourceParams,
    expected_accidental_rate,
    expected_coincidence_rate,
    expected_singles_rate,
    leak_rate,
    mean_pairs_per_pulse,
)

log = logging.getLogger(__name__)

MAX_MEAN_PAIRS = 0.5
N_SIDE_PEAKS = 3


@dataclass
class PowerPointRecord:
    p_laser: float  # mW
    duration: float  # s
    config: IoConfig
    singles_s: int
    singles_i: int
    histogram: Histogram = field(repr=False)
    seed: int
    repeat: int = 1


@dataclass
class SweepDataset:
    config: IoConfig
    points: list[PowerPointRecord]
    rep_period: float | None = None  # s

    def __post_init__(self):
        self.config = IoConfig(self.config)
        self.validate()

    def __len__(self):
        return len(self.points)

    def groups(self) -> list[tuple[float, list[PowerPointRecord]]]:
        out: list[tuple[float, list[PowerPointRecord]]] = []
        for rec in self.points:
            if out and out[-1][0] == rec.p_laser:
                out[-1][1].append(rec)
            else:
                out.append((rec.p_laser, [rec]))
        return out

    @property
    def powers(self) -> list[float]:
        return [p for p, _ in self.groups()]

    def validate(self) -> None:
        if not self.points:
            raise DataError("sweep dataset is empty")
        groups = self.groups()
        sizes = {len(g) for _, g in groups}
        if len(sizes) != 1:
            raise DataError(f"inconsistent repeat counts across powers: {sorted(sizes)}")
        powers = [p for p, _ in groups]
        if any(b <= a for a, b in zip(powers, powers[1:])):
            raise DataError("powers must be strictly increasing across groups")
        for p, recs in groups:
            reps = [r.repeat for r in recs]
            if reps != list(range(1, len(recs) + 1)):
                raise DataError(f"repeat indices at {p} mW are {reps}, expected 1..{len(recs)}")
        for rec in self.points:
            if IoConfig(rec.config) is not self.config:
                raise DataError("record configuration differs from dataset configuration")


def delay_histogram(
    rep_period: float, bin_width: float = DEFAULT_BIN_WIDTH, n_side_peaks: int = N_SIDE_PEAKS
) -> Histogram:
    """Empty histogram covering the central peak and ``n_side_peaks`` on each side."""
    per_period = rep_period / bin_width
    n_per = round(per_period)
    if n_per < 1 or abs(n_per - per_period) > 1e-6 * per_period:
        raise DomainError(
            f"bin width {bin_width:g} s does not divide the pulse period {rep_period:g} s"
        )
    n_periods = 2 * n_side_peaks + 1
    return Histogram(
        origin=-(n_side_peaks + 0.5) * rep_period,
        bin_width=rep_period / n_per,
        counts=np.zeros(n_periods * n_per, dtype=np.int64),
    )


def _check_regime(params: SourceParams, config: IoConfig, p_laser: float) -> float:
    mu = mean_pairs_per_pulse(params, config, p_laser)
    if mu >= MAX_MEAN_PAIRS:
        raise RegimeError(
            f"mean pairs per pulse {mu:.3g} >= {MAX_MEAN_PAIRS} at {p_laser:g} mW; "
            "multi-pair corrections are not modelled"
        )
    return mu


def _peak_probabilities(h: Histogram, center: float, sigma: float) -> np.ndarray:
    edges = h.origin + np.arange(h.n_bins + 1) * h.bin_width
    cdf = ndtr((edges - center) / sigma)
    p = np.diff(cdf)
    return p / p.sum()


def simulate_point_aggregate(
    params: SourceParams,
    config: IoConfig,
    p_laser: float,
    duration: float,
    seed: int,
    bin_width: float = DEFAULT_BIN_WIDTH,
    repeat: int = 1,
) -> PowerPointRecord:
    if not duration > 0.0:
        raise DomainError(f"duration must be > 0 s, got {duration!r}")
    if duration * params.rep_rate < 1.0:
        raise DomainError("duration must cover at least one pulse")
    config = IoConfig(config)
    _check_regime(params, config, p_laser)

    rng = np.random.default_rng(seed)
    cc = expected_coincidence_rate(params, config, p_laser)
    acc = expected_accidental_rate(params, config, p_laser)
    s_s = expected_singles_rate(params, config, Channel.SIGNAL, p_laser)
    s_i = expected_singles_rate(params, config, Channel.IDLER, p_laser)

    # true coincidences are a subset of both singles streams
    n_true = int(rng.poisson(cc * duration))
    singles_s = n_true + int(rng.poisson(max(s_s - cc, 0.0) * duration))
    singles_i = n_true + int(rng.poisson(max(s_i - cc, 0.0) * duration))

    h = delay_histogram(params.rep_period, bin_width)
    sigma = params.jitter_fwhm / FWHM_PER_SIGMA
    counts = np.zeros(h.n_bins, dtype=np.int64)
    for k in range(-N_SIDE_PEAKS, N_SIDE_PEAKS + 1):
        n_peak = int(rng.poisson(acc * duration))
        if k == 0:
            n_peak += n_true
        if n_peak:
            counts += rng.multinomial(n_peak, _peak_probabilities(h, k * params.rep_period, sigma))
    h.counts = counts

    return PowerPointRecord(
        p_laser=p_laser,
        duration=duration,
        config=config,
        singles_s=singles_s,
        singles_i=singles_i,
        histogram=h,
        seed=int(seed),
        repeat=repeat,
    )


def _scatter(rng: np.random.Generator, n_pulses: int, per_pulse_mean: float) -> np.ndarray:
    # n iid Poisson(m) pulse counts == Poisson(n m) total placed uniformly over pulses
    total = int(rng.poisson(n_pulses * per_pulse_mean))
    return rng.integers(0, n_pulses, size=total, dtype=np.int64)


def _delay_pairs(sig_pulse, sig_jit, idl_pulse, idl_jit, max_offset: int):
    """All (signal, idler) event pairs whose pulse indices differ by <= max_offset."""
    order = np.argsort(idl_pulse, kind="stable")
    idl_pulse = idl_pulse[order]
    idl_jit = idl_jit[order]
    lo = np.searchsorted(idl_pulse, sig_pulse - max_offset, side="left")
    hi = np.searchsorted(idl_pulse, sig_pulse + max_offset, side="right")
    n = hi - lo
    total = int(n.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    s_idx = np.repeat(np.arange(sig_pulse.size), n)
    starts = np.repeat(lo - np.concatenate(([0], np.cumsum(n)[:-1])), n)
    i_idx = starts + np.arange(total)
    dpulse = idl_pulse[i_idx] - sig_pulse[s_idx]
    djit = idl_jit[i_idx] - sig_jit[s_idx]
    return dpulse, djit


def simulate_point_perpulse(
    params: SourceParams,
    config: IoConfig,
    p_laser: float,
    n_pulses: int,
    seed: int,
    bin_width: float = DEFAULT_BIN_WIDTH,
    repeat: int = 1,
    return_timestamps: bool = False,
):
    """Event-level simulation over ``n_pulses`` pump pulses.

    Each pulse carries Poisson(mu) pairs; each photon of a pair reaches its
    detector independently with the channel's collection efficiency. Leakage
    and dark clicks are Poisson per pulse window. Every detection is stamped
    with its pulse epoch plus Gaussian jitter, with the per-channel width set
    so the signal-idler difference has the configured FWHM.

    Returns the record, or ``(record, (t_signal, t_idler))`` when
    ``return_timestamps`` is set (sorted, seconds).
    """
    if int(n_pulses) != n_pulses or n_pulses < 1:
        raise DomainError(f"n_pulses must be a positive integer, got {n_pulses!r}")
    n_pulses = int(n_pulses)
    config = IoConfig(config)
    mu = _check_regime(params, config, p_laser)
    rng = np.random.default_rng(seed)
    eta_1 = params.collection(config, Channel.SIGNAL)
    eta_2 = params.collection(config, Channel.IDLER)
    rep = params.rep_rate

    pair_pulse = _scatter(rng, n_pulses, mu)
    u = rng.random((pair_pulse.size, 2))
    noise_s = _scatter(
        rng, n_pulses, (leak_rate(params, config, Channel.SIGNAL, p_laser) + params.dark_s) / rep
    )
    noise_i = _scatter(
        rng, n_pulses, (leak_rate(params, config, Channel.IDLER, p_laser) + params.dark_i) / rep
    )
    sig_pulse = np.concatenate((pair_pulse[u[:, 0] < eta_1], noise_s))
    idl_pulse = np.concatenate((pair_pulse[u[:, 1] < eta_2], noise_i))

    sigma_ch = params.jitter_fwhm / FWHM_PER_SIGMA / math.sqrt(2.0)
    sig_jit = rng.normal(0.0, sigma_ch, size=sig_pulse.size)
    idl_jit = rng.normal(0.0, sigma_ch, size=idl_pulse.size)

    h = delay_histogram(params.rep_period, bin_width)
    dpulse, djit = _delay_pairs(sig_pulse, sig_jit, idl_pulse, idl_jit, N_SIDE_PEAKS + 1)
    delays = dpulse * params.rep_period + djit
    idx = np.floor((delays - h.origin) / h.bin_width).astype(np.int64)
    idx = idx[(idx >= 0) & (idx < h.n_bins)]
    h.counts = np.bincount(idx, minlength=h.n_bins).astype(np.int64)

    record = PowerPointRecord(
        p_laser=p_laser,
        duration=n_pulses / rep,
        config=config,
        singles_s=int(sig_pulse.size),
        singles_i=int(idl_pulse.size),
        histogram=h,
        seed=int(seed),
        repeat=repeat,
    )
    if not return_timestamps:
        return record
    t_s = np.sort(sig_pulse / rep + sig_jit)
    t_i = np.sort(idl_pulse / rep + idl_jit)
    return record, (t_s, t_i)


def derive_seed(master_seed: int, config: IoConfig, power_index: int, repeat_index: int) -> int:
    """64-bit per-point seed; depends only on the key, never on execution order."""
    if master_seed < 0:
        raise DomainError("master seed must be non-negative")
    cfg = 0 if IoConfig(config) is IoConfig.A else 1
    ss = np.random.SeedSequence([int(master_seed), cfg, int(power_index), int(repeat_index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _run_task(task):
    params, config, p, duration, seed, bin_width, repeat = task
    try:
        return simulate_point_aggregate(params, config, p, duration, seed, bin_width, repeat)
    except PairSourceError as exc:
        raise with_context(exc, f"config {config.value}, power {p:g} mW, repeat {repeat}") from exc


def simulate_sweep(
    params: SourceParams,
    plan,
    config: IoConfig,
    master_seed: int,
    workers: int = 1,
    bin_width: float = DEFAULT_BIN_WIDTH,
) -> SweepDataset:
    """Aggregate-mode simulation of every (power, repeat) point in ``plan``.

    ``plan`` needs ``powers``, ``integration_times`` and ``repeats``.
    With ``workers > 1`` points run in a process pool; seeds are derived per
    point so the dataset does not depend on scheduling.
    """
    config = IoConfig(config)
    if not len(plan.powers):
        raise DomainError("sweep plan has no powers")
    tasks = [
        (
            params,
            config,
            float(p),
            float(t),
            derive_seed(master_seed, config, pi, r),
            bin_width,
            r,
        )
        for pi, (p, t) in enumerate(zip(plan.powers, plan.integration_times))
        for r in range(1, plan.repeats + 1)
    ]
    log.debug("simulating %d points for config %s", len(tasks), config.value)
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        results = [_run_task(t) for t in tasks]
    keyed = {(r.p_laser, r.repeat): r for r in results}
    points = [keyed[(t[2], t[6])] for t in tasks]
    return SweepDataset(config=config, points=points, rep_period=params.rep_period)
