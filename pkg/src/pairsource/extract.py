"""Effective nonlinearity from fitted quadratic coefficients.

For one input/output configuration the product of the singles quadratic
coefficients over the coincidence one, a_s a_i / a_si, equals gamma_eff times
the square of the *input* coupler efficiency: the collection efficiencies
cancel. Running both configurations and multiplying the two ratios leaves
gamma_eff^2 times the squared coupler-pair transmittance, which can be
measured directly. That makes the dual-configuration estimate independent of
how the loss is split between the two couplers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .errors import DomainError, InvalidCoefficientError
from .fitting import QuadFit

PER_MHZ = 1e-6
DEFAULT_SIGMA_ETA_REL = 0.05

FLAG_INDEPENDENT = "coefficient correlations between fits ignored (independent first-order propagation)"
FLAG_SINGLE_BIAS = (
    "single-configuration estimate: biased by (eta_gc_in^2 / eta_coupling) "
    "unless the couplers are balanced"
)


class Method(str, enum.Enum):
    DUAL_CONFIG = "dual_config"
    SINGLE_CONFIG = "single_config"


@dataclass(frozen=True)
class FitTriple:
    s: QuadFit
    i: QuadFit
    si: QuadFit


@dataclass
class GammaEstimate:
    value: float  # MHz/mW^2
    sigma: float
    method: Method
    inputs: dict = field(default_factory=dict, repr=False)
    flags: list[str] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "method": self.method.value,
            "gamma_eff_mhz_per_mw2": self.value,
            "sigma_mhz_per_mw2": self.sigma,
            "inputs": self.inputs,
            "flags": list(self.flags),
        }


def _checked(fit: QuadFit, label: str) -> tuple[float, float]:
    if not fit.a > 0.0:
        raise InvalidCoefficientError(
            f"quadratic coefficient of {label} is {fit.a:g}, must be > 0 "
            "(fit failure or no pair signal)"
        )
    return fit.a, fit.sigma_a


def _coef_record(fit: QuadFit) -> dict:
    return {"a": fit.a, "sigma_a": fit.sigma_a}


def gamma_single_config(
    fit_s: QuadFit, fit_i: QuadFit, fit_si: QuadFit, eta_gc_in: float
) -> GammaEstimate:
    if not 0.0 < eta_gc_in <= 1.0:
        raise DomainError(f"eta_gc_in must lie in (0, 1], got {eta_gc_in!r}")
    a_s, e_s = _checked(fit_s, "signal")
    a_i, e_i = _checked(fit_i, "idler")
    a_si, e_si = _checked(fit_si, "coincidence")
    value = a_s * a_i / (a_si * eta_gc_in**2) * PER_MHZ
    rel2 = (e_s / a_s) ** 2 + (e_i / a_i) ** 2 + (e_si / a_si) ** 2
    return GammaEstimate(
        value=value,
        sigma=value * math.sqrt(rel2),
        method=Method.SINGLE_CONFIG,
        inputs={
            "s": _coef_record(fit_s),
            "i": _coef_record(fit_i),
            "si": _coef_record(fit_si),
            "eta_gc_in": eta_gc_in,
        },
        flags=[FLAG_INDEPENDENT, FLAG_SINGLE_BIAS],
    )


def gamma_dual_config(
    fits_a: FitTriple,
    fits_b: FitTriple,
    eta_coupling: float,
    sigma_eta: float | None = None,
) -> GammaEstimate:
    """Dual-configuration estimate with first-order error propagation.

    ``sigma_eta`` defaults to 5 % of ``eta_coupling``. Each coefficient enters
    the square root to the power +-1/2, so its relative variance carries a
    weight of 1/4; eta_coupling enters to the power -1.
    """
    if not 0.0 < eta_coupling <= 1.0:
        raise DomainError(f"eta_coupling must lie in (0, 1], got {eta_coupling!r}")
    if sigma_eta is None:
        sigma_eta = DEFAULT_SIGMA_ETA_REL * eta_coupling
    if sigma_eta < 0.0:
        raise DomainError("sigma_eta must be >= 0")

    coefs = []
    for tag, triple in (("A", fits_a), ("B", fits_b)):
        for name in ("s", "i", "si"):
            coefs.append((name, *_checked(getattr(triple, name), f"{name} (config {tag})")))

    # sorted products make swapping the two bundles bit-identical
    num = sorted(a for name, a, _ in coefs if name != "si")
    den = sorted(a for name, a, _ in coefs if name == "si")
    ratio = (num[0] * num[1] * num[2] * num[3]) / (den[0] * den[1])
    value = math.sqrt(ratio) / eta_coupling * PER_MHZ

    rel2_terms = sorted((e / a) ** 2 for _, a, e in coefs)
    rel2 = 0.25 * math.fsum(rel2_terms) + (sigma_eta / eta_coupling) ** 2
    return GammaEstimate(
        value=value,
        sigma=value * math.sqrt(rel2),
        method=Method.DUAL_CONFIG,
        inputs={
            "A": {n: _coef_record(getattr(fits_a, n)) for n in ("s", "i", "si")},
            "B": {n: _coef_record(getattr(fits_b, n)) for n in ("s", "i", "si")},
            "eta_coupling": eta_coupling,
            "sigma_eta_coupling": sigma_eta,
        },
        flags=[FLAG_INDEPENDENT],
    )
