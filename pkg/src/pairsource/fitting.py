"""Weighted quadratic fits of count rate against laser power."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .coincidence import window_counts
from .errors import DomainError, InsufficientRepeatsError, SingularDesignError


class RateKind(str, enum.Enum):
    SIGNAL = "signal"
    IDLER = "idler"
    COINCIDENCE_CORRECTED = "coincidence_corrected"
    COINCIDENCE_RAW = "coincidence_raw"


@dataclass(frozen=True)
class RatePoint:
    p_laser: float  # mW
    rate: float  # Hz
    std_err: float  # Hz
    n_repeats: int
    floored: bool = False


@dataclass
class QuadFit:
    a: float  # Hz/mW^2
    b: float  # Hz/mW
    c: float  # Hz
    covariance: np.ndarray
    chi2: float
    dof: int

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c])

    @property
    def errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def sigma_a(self) -> float:
        return float(self.errors[0])

    @property
    def correlation(self) -> np.ndarray:
        e = self.errors
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.covariance / np.outer(e, e)

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        return self.a * p * p + self.b * p + self.c

    def to_record(self) -> dict:
        e = self.errors
        return {
            "a_hz_per_mw2": self.a,
            "b_hz_per_mw": self.b,
            "c_hz": self.c,
            "sigma_a": float(e[0]),
            "sigma_b": float(e[1]),
            "sigma_c": float(e[2]),
            "covariance": self.covariance.tolist(),
            "correlation": self.correlation.tolist(),
            "chi2": self.chi2,
            "dof": self.dof,
            "chi2_per_dof": self.chi2 / self.dof,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "QuadFit":
        return cls(
            a=rec["a_hz_per_mw2"],
            b=rec["b_hz_per_mw"],
            c=rec["c_hz"],
            covariance=np.asarray(rec["covariance"], dtype=float),
            chi2=rec["chi2"],
            dof=int(rec["dof"]),
        )


def _repeat_counts(rec, kind: RateKind, rate_window: float, rep_period: float):
    if kind is RateKind.SIGNAL:
        return float(rec.singles_s), float(rec.singles_s)
    if kind is RateKind.IDLER:
        return float(rec.singles_i), float(rec.singles_i)
    h = rec.histogram
    n_c = float(window_counts(h, 0.0, rate_window))
    if kind is RateKind.COINCIDENCE_RAW:
        return n_c, n_c
    n_a = 0.5 * float(
        window_counts(h, -rep_period, rate_window) + window_counts(h, rep_period, rate_window)
    )
    # Poisson variance of N_c - mean(two side windows)
    return n_c - n_a, n_c + 0.5 * n_a


def repeats_to_rate_point(
    group,
    which: RateKind | str,
    rep_period: float | None = None,
    rate_window: float | None = None,
) -> RatePoint:
    """Mean rate and standard error over the repeats at one power.

    Coincidence kinds count histogram entries inside ``rate_window`` around the
    central peak (default: one full pulse period); the corrected kind subtracts
    the mean of the two neighbouring peaks counted the same way.

    If the repeats happen to be identical the sample error is zero; it is then
    replaced by the Poisson error of the mean and ``floored`` is set.
    """
    which = RateKind(which)
    group = list(group)
    n = len(group)
    if n < 2:
        raise InsufficientRepeatsError(f"need >= 2 repeats, got {n}")
    durations = {rec.duration for rec in group}
    if len(durations) != 1:
        raise DomainError(f"repeats have unequal durations: {sorted(durations)}")
    duration = durations.pop()
    if not duration > 0.0:
        raise DomainError(f"duration must be > 0 s, got {duration!r}")
    powers = {rec.p_laser for rec in group}
    if len(powers) != 1:
        raise DomainError("repeats in one group must share the same power")
    if which not in (RateKind.SIGNAL, RateKind.IDLER):
        if rep_period is None:
            raise DomainError("rep_period is required for coincidence rates")
        if rate_window is None:
            rate_window = rep_period

    pairs = [_repeat_counts(rec, which, rate_window, rep_period) for rec in group]
    counts = np.array([c for c, _ in pairs])
    rates = counts / duration
    mean = float(rates.mean())
    std_err = float(rates.std(ddof=1) / math.sqrt(n))
    floored = False
    if std_err <= 0.0:
        var_counts = max(float(np.mean([v for _, v in pairs])), 1.0)
        std_err = math.sqrt(var_counts) / duration / math.sqrt(n)
        floored = True
    return RatePoint(powers.pop(), mean, std_err, n, floored)


def weighted_quadratic_fit(points) -> QuadFit:
    """Weighted least squares for rate = a P^2 + b P + c.

    Weights are 1/std_err^2. The weighted design matrix is factorised with a
    QR decomposition; the coefficient covariance is (R^T R)^-1.
    """
    points = list(points)
    p = np.array([pt.p_laser for pt in points], dtype=float)
    y = np.array([pt.rate for pt in points], dtype=float)
    s = np.array([pt.std_err for pt in points], dtype=float)
    if np.any(~(s > 0.0)) or np.any(~np.isfinite(s)):
        raise DomainError("all std_err values must be finite and > 0")
    n_distinct = np.unique(p).size
    if n_distinct < 4:
        raise SingularDesignError(
            f"quadratic fit needs >= 4 distinct powers (3 coefficients + 1 dof), got {n_distinct}; "
            "add power points to the sweep"
        )

    # scale powers to O(1) so R is well conditioned; undone on the way out
    scale = float(np.max(np.abs(p)))
    x = p / scale
    design = np.column_stack((x * x, x, np.ones_like(x))) / s[:, None]
    q, r = np.linalg.qr(design)
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-12 * diag.max():
        raise SingularDesignError("weighted design matrix is rank deficient")
    yw = y / s
    beta = np.linalg.solve(r, q.T @ yw)
    r_inv = np.linalg.solve(r, np.eye(3))
    cov = r_inv @ r_inv.T

    unscale = np.array([1.0 / scale**2, 1.0 / scale, 1.0])
    beta = beta * unscale
    cov = cov * np.outer(unscale, unscale)
    cov = 0.5 * (cov + cov.T)

    resid = (y - (beta[0] * p * p + beta[1] * p + beta[2])) / s
    return QuadFit(
        a=float(beta[0]),
        b=float(beta[1]),
        c=float(beta[2]),
        covariance=cov,
        chi2=float(resid @ resid),
        dof=int(p.size - 3),
    )
