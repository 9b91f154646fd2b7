"""Ready-made source parameter sets for a lossy pulsed setup."""

from __future__ import annotations

import math

from .ratemodel import SourceParams

RING_GAMMA = 14.7  # MHz/mW^2, on resonance
WAVEGUIDE_GAMMA = 2.0  # MHz/mW^2, off resonance


def db_to_transmittance(loss_db: float) -> float:
    return 10.0 ** (-loss_db / 10.0)


def lab_source(
    gamma_eff: float = RING_GAMMA,
    coupling_loss_db: float = 20.0,
    imbalance: float = 3.0,
    path_loss_db: float = 4.0,
    leak: float = 1e4,
    dark: float = 100.0,
    rep_rate: float = 50e6,
    jitter_fwhm: float = 1.2e-9,
) -> SourceParams:
    """Source with a given total coupler-pair loss split unevenly between A and B.

    ``imbalance`` is eta_gc_a / eta_gc_b; their product is fixed by
    ``coupling_loss_db``. ``leak`` is in Hz per mW on chip, ``dark`` in Hz.
    """
    eta_c = db_to_transmittance(coupling_loss_db)
    r = math.sqrt(imbalance)
    path = db_to_transmittance(path_loss_db)
    return SourceParams(
        gamma_eff=gamma_eff,
        eta_gc_a=math.sqrt(eta_c) * r,
        eta_gc_b=math.sqrt(eta_c) / r,
        eta_path_s=path,
        eta_path_i=path,
        leak_s=leak,
        leak_i=leak,
        dark_s=dark,
        dark_i=dark,
        rep_rate=rep_rate,
        jitter_fwhm=jitter_fwhm,
    )
