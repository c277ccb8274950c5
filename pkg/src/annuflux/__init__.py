"""annuflux: first-passage statistics of diffusion in a bounded annular channel.

An absorbing inner circle (the receiver) and a reflecting outer circle bound a
2-D diffusion domain.  The package evaluates the hitting-rate distribution of
a point release both through a Bessel eigenfunction series and through
Brownian-dynamics Monte-Carlo, cross-validates the two, and derives channel
characteristic times (peak, average, half).
"""

from .geometry import ChannelGeometry, Geometry3D
from .eigen import Mode, ModeSet, build_mode, build_modeset, characteristic_residual, eta, eta_prime, find_roots, norm_constant
from .analytic import (
    ImpulseResponse,
    Truncation,
    average_time,
    certified_modeset,
    cumulative_hits,
    hitting_rate,
    hitting_rate_angular,
    impulse_response,
    pdf,
    radial_density,
    select_truncation,
    unbounded_validity,
    window_total,
)
from .mcsim import HitRecord, McConfig, McResult, estimate_rate, reduction_valid, simulate_2d, simulate_3d
from .characteristics import CharacteristicTimes, half_time, peak_time, sweep

__version__ = "0.1.0"
