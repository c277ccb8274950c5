"""Channel characteristic times derived from the series solution: the rate
peak, the mean absorption time, and the median absorption time, plus sweeps of
all three across release radii and aspect ratios."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .analytic import average_time, certified_modeset, cumulative_hits, hitting_rate, hitting_rate_derivative
from .eigen import ModeSet, _atomic_write
from .errors import DomainError, NumericalError
from .geometry import ChannelGeometry

__all__ = [
    "CharacteristicTimes",
    "SweepPoint",
    "peak_time",
    "half_time",
    "characteristic_times",
    "sweep",
    "save_sweep_csv",
    "local_loglog_slopes",
    "fit_near_slope",
    "detect_transition",
]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class CharacteristicTimes:
    """The three characteristic times of one channel configuration (seconds)."""

    tau_peak: float
    tau_average: float
    tau_half: float
    geometry: ChannelGeometry


@dataclass(frozen=True)
class SweepPoint:
    alpha: float
    r0: float
    tau_peak: float
    tau_average: float
    tau_half: float
    error: str | None = None


def _coarse_bracket(geom: ChannelGeometry, modeset: ModeSet) -> tuple[float, float]:
    t_heur = (geom.r0 - geom.d0) ** 2 / (4.0 * geom.D)
    lo = t_heur / 100.0
    hi = t_heur * 100.0
    if modeset.certificate is not None:
        lo = max(lo, modeset.certificate.t_min_for(geom))
    if lo >= hi:
        raise NumericalError(
            f"peak bracket collapsed: certified t_min {lo} exceeds the square-law scale {t_heur}"
        )
    return lo, hi


def peak_time(geom: ChannelGeometry, modeset: ModeSet, rel_tol: float = 1e-6) -> float:
    """Argmax of the hitting rate: coarse log-spaced scan, then golden-section
    refinement.  Golden section is preferred over derivative-based iteration
    because truncation noise can perturb early-time derivatives."""
    lo, hi = _coarse_bracket(geom, modeset)
    for _ in range(8):
        grid = np.geomspace(lo, hi, 160)
        vals = hitting_rate(geom, modeset, grid)
        k = int(np.argmax(vals))
        if k == 0:
            if modeset.certificate is not None and lo <= modeset.certificate.t_min_for(geom) * (1 + 1e-9):
                raise NumericalError(
                    f"rate still rising at the certified t_min = {lo}; the peak lies in the "
                    "uncertified early-time region - rebuild with a smaller t_min"
                )
            lo, hi = lo / 100.0, grid[2]
        elif k == len(grid) - 1:
            lo, hi = grid[-3], hi * 100.0
        else:
            lo, hi = grid[k - 1], grid[k + 1]
            break
    else:
        raise NumericalError("could not bracket the rate maximum")

    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc = hitting_rate(geom, modeset, c)
    fd = hitting_rate(geom, modeset, d)
    while (b - a) > rel_tol * max(a, 1e-300):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = hitting_rate(geom, modeset, c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = hitting_rate(geom, modeset, d)
    t_peak = 0.5 * (a + b)

    # first-order condition: the term-wise series derivative vanishes at the peak
    grid = np.geomspace(max(t_peak / 10.0, lo), min(t_peak * 10.0, hi * 100.0), 64)
    slope_scale = float(np.max(np.abs(hitting_rate_derivative(geom, modeset, grid))))
    if abs(hitting_rate_derivative(geom, modeset, t_peak)) > 1e-4 * slope_scale:
        raise NumericalError(f"rate derivative at tau_peak = {t_peak} not consistent with a maximum")
    return float(t_peak)


def half_time(geom: ChannelGeometry, modeset: ModeSet, rel_tol: float = 1e-8) -> float:
    """Unique root of cumulative_hits(t) = 1/2, located by bisection; the
    cumulative is strictly increasing and tends to 1, so the root exists."""
    lo = modeset.certificate.t_min_for(geom) if modeset.certificate is not None else 1e-30
    if cumulative_hits(geom, modeset, lo) >= 0.5:
        # median earlier than the certified window; fall back to the raw series
        lo = 1e-30
    hi = max(2.0 * average_time(geom, modeset), 2.0 * lo)
    for _ in range(200):
        if cumulative_hits(geom, modeset, hi) > 0.5:
            break
        hi *= 2.0
    else:
        raise NumericalError("cumulative absorption never reached 1/2")
    while (hi - lo) > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if cumulative_hits(geom, modeset, mid) < 0.5:
            lo = mid
        else:
            hi = mid
    return float(0.5 * (lo + hi))


def characteristic_times(geom: ChannelGeometry, modeset: ModeSet) -> CharacteristicTimes:
    return CharacteristicTimes(
        tau_peak=peak_time(geom, modeset),
        tau_average=average_time(geom, modeset),
        tau_half=half_time(geom, modeset),
        geometry=geom,
    )


# ---------------------------------------------------------------------------
# sweeps

def _auto_t_min(geom: ChannelGeometry, r0_values, tol: float) -> float:
    """Certified window small enough to resolve the earliest expected peak,
    clipped to what the eigenvalue working range allows (one asymptotic root
    spacing of headroom below the cap, so a certifying root always exists)."""
    from . import specfun
    from .analytic import _achievable_t_min

    t_fastest = (min(r0_values) - geom.d0) ** 2 / (4.0 * geom.D)
    cap = specfun.X_MAX - 1.2 * math.pi / (1.0 - geom.alpha)
    achievable = _achievable_t_min(geom, tol, cap)
    return max(t_fastest / 50.0, achievable)


def sweep(base: ChannelGeometry, r0_values, alphas, *, tol: float = 1e-8,
          cache_dir=None) -> list[SweepPoint]:
    """Characteristic times over an (alpha, r0) grid.  D0 and D come from the
    base geometry; each alpha sets d0 = alpha * D0.  Mode sets are cached per
    alpha.  A failed point is recorded with an error tag, never dropped.
    Output ordering is deterministic: by (alpha, r0)."""
    r0_values = sorted(float(v) for v in r0_values)
    points: list[SweepPoint] = []
    for alpha in sorted(float(a) for a in alphas):
        d0 = alpha * base.D0
        valid_r0 = [r for r in r0_values if d0 < r < base.D0]
        if not valid_r0:
            for r0 in r0_values:
                points.append(SweepPoint(alpha, r0, math.nan, math.nan, math.nan,
                                         error="r0 outside (d0, D0)"))
            continue
        probe = ChannelGeometry(d0, base.D0, valid_r0[0], base.D)
        t_min = _auto_t_min(probe, valid_r0, tol)
        modeset = certified_modeset(probe, t_min, tol, cache_dir=cache_dir)
        for r0 in r0_values:
            if not d0 < r0 < base.D0:
                points.append(SweepPoint(alpha, r0, math.nan, math.nan, math.nan,
                                         error="r0 outside (d0, D0)"))
                continue
            geom = ChannelGeometry(d0, base.D0, r0, base.D)
            try:
                points.append(SweepPoint(
                    alpha, r0,
                    peak_time(geom, modeset),
                    average_time(geom, modeset),
                    half_time(geom, modeset),
                ))
            except (NumericalError, DomainError) as exc:
                points.append(SweepPoint(alpha, r0, math.nan, math.nan, math.nan, error=str(exc)))
    return points


def save_sweep_csv(path: str | os.PathLike, points: list[SweepPoint]) -> None:
    lines = ["alpha,r0,tau_peak,tau_average,tau_half"]
    for p in points:
        lines.append(f"{p.alpha:.17g},{p.r0:.17g},{p.tau_peak:.17g},{p.tau_average:.17g},{p.tau_half:.17g}")
    _atomic_write(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# trend analysis of tau_peak vs release distance

def local_loglog_slopes(distances, values) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares slope of log(value) vs log(distance) over sliding triples;
    returns (triple-center distances, slopes)."""
    x = np.log(np.asarray(distances, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    if x.size < 3:
        raise DomainError("need at least three points for local slopes")
    centers = np.empty(x.size - 2)
    slopes = np.empty(x.size - 2)
    for i in range(x.size - 2):
        xs = x[i:i + 3]
        ys = y[i:i + 3]
        slopes[i] = np.polyfit(xs, ys, 1)[0]
        centers[i] = math.exp(xs[1])
    return centers, slopes


def fit_near_slope(distances, values, channel_length: float, near_frac: float = 1.0 / 3.0) -> float:
    """Single log-log regression slope over the near region
    (distance <= near_frac * channel length)."""
    d = np.asarray(distances, dtype=float)
    v = np.asarray(values, dtype=float)
    mask = d <= near_frac * channel_length
    if np.sum(mask) < 2:
        raise DomainError("too few points in the near region for a slope fit")
    return float(np.polyfit(np.log(d[mask]), np.log(v[mask]), 1)[0])


def detect_transition(distances, values, channel_length: float, rel_dev: float = 0.10,
                      reference_slope: float = 2.0) -> float:
    """Distance (as a fraction of the channel length) where the local log-log
    slope first departs from the square-law reference by more than rel_dev and
    stays departed.  Raises if no departure is found."""
    centers, slopes = local_loglog_slopes(distances, values)
    departed = np.abs(slopes / reference_slope - 1.0) > rel_dev
    for i in range(departed.size):
        if np.all(departed[i:]):
            return float(centers[i] / channel_length)
    raise NumericalError("no slope transition detected on this grid")
