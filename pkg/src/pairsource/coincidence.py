"""Coincidence histograms: peak fitting, windowed counting and CAR."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import (
    DegenerateDataError,
    DomainError,
    FitError,
    RangeError,
    UndefinedCarError,
)
from .ratemodel import FWHM_PER_SIGMA

DEFAULT_WINDOW = 2e-9
DEFAULT_BIN_WIDTH = 100e-12
CAR_ERROR_METHOD = "first-order Poisson propagation, windowed sums treated as Poisson"

# relative slack on bin-edge comparisons, in units of one bin
_EDGE_EPS = 1e-6


@dataclass
class Histogram:
    """Signal-idler delay histogram; ``origin`` is the left edge of bin 0 (s)."""

    origin: float
    bin_width: float
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.ndim != 1 or self.counts.size < 1:
            raise DomainError("histogram needs a 1-D counts array with at least one bin")
        if not self.bin_width > 0.0:
            raise DomainError(f"bin_width must be > 0, got {self.bin_width!r}")
        if np.any(self.counts < 0):
            raise DomainError("histogram counts must be non-negative")

    @property
    def n_bins(self) -> int:
        return int(self.counts.size)

    @property
    def end(self) -> float:
        return self.origin + self.n_bins * self.bin_width

    @property
    def centers(self) -> np.ndarray:
        return self.origin + (np.arange(self.n_bins) + 0.5) * self.bin_width

    def total(self):
        return self.counts.sum()

    def shifted(self, delta: float) -> "Histogram":
        return Histogram(self.origin + delta, self.bin_width, self.counts.copy())

    def __add__(self, other: "Histogram") -> "Histogram":
        if (
            other.origin != self.origin
            or other.bin_width != self.bin_width
            or other.n_bins != self.n_bins
        ):
            raise DomainError("cannot add histograms with different binning")
        return Histogram(self.origin, self.bin_width, self.counts + other.counts)


@dataclass
class GaussianFit:
    amplitude: float
    center: float
    sigma: float
    baseline: float
    covariance: np.ndarray = field(repr=False)
    residual_norm: float = 0.0

    @property
    def fwhm(self) -> float:
        return FWHM_PER_SIGMA * self.sigma

    @property
    def sigma_fwhm(self) -> float:
        return FWHM_PER_SIGMA * math.sqrt(max(self.covariance[2, 2], 0.0))


@dataclass(frozen=True)
class CarEstimate:
    car: float
    sigma_car: float
    window: float
    central_counts: int
    accidental_counts: float
    n_sides: int = 2
    method: str = CAR_ERROR_METHOD

    def to_record(self) -> dict:
        return {
            "car": self.car,
            "sigma_car": self.sigma_car,
            "window_ns": self.window * 1e9,
            "central_counts": self.central_counts,
            "accidental_counts": self.accidental_counts,
            "adjacent_peaks_averaged": self.n_sides,
            "error_method": self.method,
        }


def _gauss(t, amplitude, center, sigma, baseline):
    return amplitude * np.exp(-0.5 * ((t - center) / sigma) ** 2) + baseline


def fit_gaussian_peak(
    h: Histogram,
    guess_center: float,
    half_range: float = 6e-9,
    max_nfev: int = 2000,
) -> GaussianFit:
    """Least-squares fit of a Gaussian plus constant baseline to one peak.

    Only bins whose centers lie within ``half_range`` of ``guess_center`` take
    part. The fit runs in coordinates relative to ``guess_center`` and in units
    of the bin width, which keeps it translation-equivariant and well scaled.
    """
    rel = (h.centers - guess_center) / h.bin_width
    sel = np.abs(rel) <= half_range / h.bin_width
    x = rel[sel]
    y = np.asarray(h.counts[sel], dtype=float)
    if np.count_nonzero(y) < 5:
        raise DegenerateDataError(
            f"need >= 5 populated bins near {guess_center:g} s, found {np.count_nonzero(y)}"
        )

    base0 = float(np.min(y))
    w = np.clip(y - base0, 0.0, None)
    if w.sum() <= 0.0:
        raise DegenerateDataError("no peak above baseline")
    mu0 = float(np.sum(w * x) / w.sum())
    sd0 = float(np.sqrt(np.sum(w * (x - mu0) ** 2) / w.sum()))
    sd0 = max(sd0, 0.5)
    p0 = [float(np.max(y) - base0), mu0, sd0, base0]

    def resid(p):
        return _gauss(x, *p) - y

    span = float(np.ptp(x)) + 1.0
    res = least_squares(
        resid,
        p0,
        bounds=([0.0, x.min() - 1.0, 1e-3, -np.inf], [np.inf, x.max() + 1.0, span, np.inf]),
        method="trf",
        x_scale="jac",
        xtol=1e-14,
        ftol=1e-14,
        gtol=1e-14,
        max_nfev=max_nfev,
    )
    rnorm = float(np.linalg.norm(res.fun))
    if res.status <= 0 or not np.all(np.isfinite(res.x)):
        raise FitError(f"Gaussian fit did not converge: {res.message}", rnorm)
    amplitude, center, sigma, baseline = (float(v) for v in res.x)
    if not sigma > 0.0:
        raise FitError("Gaussian fit returned non-positive width", rnorm)

    dof = max(x.size - 4, 1)
    s2 = float(res.fun @ res.fun) / dof
    try:
        cov_rel = np.linalg.inv(res.jac.T @ res.jac) * s2
    except np.linalg.LinAlgError:
        cov_rel = np.full((4, 4), np.inf)
    scale = np.array([1.0, h.bin_width, h.bin_width, 1.0])
    cov = cov_rel * np.outer(scale, scale)
    return GaussianFit(
        amplitude=amplitude,
        center=guess_center + center * h.bin_width,
        sigma=sigma * h.bin_width,
        baseline=baseline,
        covariance=cov,
        residual_norm=rnorm,
    )


def _window_bins(h: Histogram, center: float, window: float) -> tuple[int, int]:
    if not window > 0.0:
        raise DomainError(f"window must be > 0, got {window!r}")
    if window < h.bin_width * (1.0 - _EDGE_EPS):
        raise DomainError("window must span at least one bin")
    lo = center - 0.5 * window
    hi = center + 0.5 * window
    slack = _EDGE_EPS * h.bin_width
    if lo < h.origin - slack or hi > h.end + slack:
        raise RangeError(
            f"window [{lo:g}, {hi:g}] s lies outside histogram [{h.origin:g}, {h.end:g}] s"
        )
    k_lo = math.ceil((lo - h.origin) / h.bin_width - 0.5 - _EDGE_EPS)
    k_hi = math.floor((hi - h.origin) / h.bin_width - 0.5 + _EDGE_EPS)
    return max(k_lo, 0), min(k_hi, h.n_bins - 1)


def window_counts(h: Histogram, center: float, window: float):
    """Sum of counts in bins whose centers fall inside the window."""
    k_lo, k_hi = _window_bins(h, center, window)
    if k_hi < k_lo:
        return h.counts.dtype.type(0)
    return h.counts[k_lo : k_hi + 1].sum()


def car_from_counts(n_central: float, n_accidental: float, n_sides: int = 1) -> tuple[float, float]:
    """CAR and its first-order error from windowed counts.

    ``n_accidental`` is the mean over ``n_sides`` adjacent peaks, so its
    Poisson variance is ``n_accidental / n_sides``.
    """
    if n_accidental <= 0:
        raise UndefinedCarError(n_central, n_accidental, float("nan"))
    car = (n_central - n_accidental) / n_accidental
    var_a = n_accidental / n_sides
    var = n_central / n_accidental**2 + n_central**2 * var_a / n_accidental**4
    return car, math.sqrt(var)


def compute_car(
    h: Histogram,
    rep_period: float,
    window: float = DEFAULT_WINDOW,
    center: float = 0.0,
) -> CarEstimate:
    """CAR from the central peak and the mean of the two nearest side peaks."""
    if not rep_period > 0.0:
        raise DomainError(f"rep_period must be > 0, got {rep_period!r}")
    n_c = window_counts(h, center, window)
    sides = [window_counts(h, center - rep_period, window), window_counts(h, center + rep_period, window)]
    n_a = float(sum(sides)) / len(sides)
    try:
        car, sigma = car_from_counts(float(n_c), n_a, n_sides=len(sides))
    except UndefinedCarError:
        raise UndefinedCarError(n_c, n_a, window) from None
    return CarEstimate(
        car=car,
        sigma_car=sigma,
        window=window,
        central_counts=int(n_c),
        accidental_counts=n_a,
        n_sides=len(sides),
    )


def gaussian_window_fraction(window: float, fwhm: float) -> float:
    """Fraction of a centred Gaussian of width ``fwhm`` inside ``window``."""
    return math.erf(math.sqrt(math.log(2.0)) * window / fwhm)
