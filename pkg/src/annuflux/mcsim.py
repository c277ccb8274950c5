"""Brownian-dynamics Monte-Carlo ground truth for the annular channel.

Particles take independent Gaussian steps (variance 2 D dt per axis) from the
release point (r0, 0).  Absorption is detected at step endpoints only (the
O(sqrt(dt)) late bias this causes is controlled by the step-resolution guard);
the recorded hit angle comes from the segment/circle intersection to reduce
angular smearing.  The outer wall reflects by a radial specular fold.

Randomness is counter-based: every (seed, particle, draw) triple maps through
a splitmix64-style hash to a uniform, so results are bit-identical for any
worker count or scheduling.  Trajectories are embarrassingly parallel and run
under a prange.

The optional 3-D variant adds free z-motion with the receiver occupying the
band z in [0, h]: a molecule at r <= d0 is only absorbed while inside the
band, which is the situation the Gaussian-tail reduction bound
Q((h-h0)/sqrt(2Dt)) + Q(h0/sqrt(2Dt)) < eps guards against.  Crossings of the
band faces are counted as empirical support for the reduction argument.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass

import numba as nb
import numpy as np
from numba import njit, prange

from . import specfun
from .analytic import ImpulseResponse
from .eigen import _atomic_write
from .errors import ConfigError, DomainError, NumericalError
from .geometry import ChannelGeometry, Geometry3D

__all__ = [
    "McConfig",
    "HitRecord",
    "McResult",
    "ReductionCheck",
    "simulate_2d",
    "simulate_3d",
    "reduction_valid",
    "estimate_rate",
]

_U64 = np.uint64
_PHI = _U64(0x9E3779B97F4A7C15)
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)


@dataclass(frozen=True)
class McConfig:
    """Simulation run parameters; ``theta_f`` only affects hit counting."""

    n_particles: int
    dt: float
    t_max: float
    seed: int
    theta_f: float | None = None

    def __post_init__(self):
        if self.n_particles < 0:
            raise ConfigError("n_particles must be >= 0")
        if not self.dt > 0.0:
            raise ConfigError("dt must be positive")
        if not self.t_max >= self.dt:
            raise ConfigError("t_max must cover at least one step")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 bits")
        if self.theta_f is not None and not 0.0 < self.theta_f <= math.pi:
            raise ConfigError("theta_f must lie in (0, pi]")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))


@dataclass(frozen=True)
class HitRecord:
    """One absorption event: time in s, angle in (-pi, pi]."""

    time: float
    angle: float


@dataclass
class McResult:
    """Hit sample (sorted by time, particle index) plus run bookkeeping."""

    times: np.ndarray
    angles: np.ndarray
    n_particles: int
    survivors: int
    geometry: ChannelGeometry
    config: McConfig
    cap_crossers: int = 0          # trajectories that ever left the receiver band (3-D)
    first_cross_bottom: int = 0
    first_cross_top: int = 0
    survivor_z: np.ndarray | None = None

    @property
    def n_hits(self) -> int:
        return int(self.times.size)

    def records(self) -> list[HitRecord]:
        return [HitRecord(float(t), float(a)) for t, a in zip(self.times, self.angles)]

    def save_hits_csv(self, path: str | os.PathLike) -> None:
        lines = ["time,angle"]
        for t, a in zip(self.times, self.angles):
            lines.append(f"{t:.17g},{a:.17g}")
        _atomic_write(path, "\n".join(lines) + "\n")

    def metadata(self) -> dict:
        return {
            "geometry": dataclasses.asdict(self.geometry),
            "config": dataclasses.asdict(self.config),
            "n_particles": self.n_particles,
            "hits": self.n_hits,
            "survivors": self.survivors,
            "cap_crossers": self.cap_crossers,
            "first_cross_bottom": self.first_cross_bottom,
            "first_cross_top": self.first_cross_top,
        }

    def save_metadata(self, path: str | os.PathLike) -> None:
        _atomic_write(path, json.dumps(self.metadata(), indent=2) + "\n")


def check_step_guard(geom: ChannelGeometry, mc: McConfig) -> float:
    """Step-resolution guard: the rms step must resolve both the annulus gap
    and the receiver radius.  Returns sigma = sqrt(2 D dt)."""
    sigma = math.sqrt(2.0 * geom.D * mc.dt)
    if sigma >= (geom.D0 - geom.d0) / 10.0:
        raise ConfigError(
            f"step sigma {sigma:.3g} m too coarse for the annulus gap {geom.D0 - geom.d0:.3g} m "
            "(need sigma < gap/10); reduce dt"
        )
    if sigma >= geom.d0 / 4.0:
        raise ConfigError(
            f"step sigma {sigma:.3g} m too coarse for the receiver radius {geom.d0:.3g} m "
            "(need sigma < d0/4); reduce dt"
        )
    return sigma


# ---------------------------------------------------------------------------
# counter-based randomness (deterministic under any scheduling)

@njit(nb.uint64(nb.uint64), inline="always", cache=True)
def _mix(z):
    z = (z ^ (z >> _U64(30))) * _MIX1
    z = (z ^ (z >> _U64(27))) * _MIX2
    return z ^ (z >> _U64(31))


@njit(nb.float64(nb.uint64, nb.uint64), inline="always", cache=True)
def _uniform(key, ctr):
    # (0, 1]: top 53 bits, offset by half an ulp so log() is safe
    z = _mix(key + ctr * _PHI)
    return (z >> _U64(11)) * 1.1102230246251565e-16 + 5.551115123125783e-17


@njit(parallel=True, fastmath=True, cache=True)
def _run_2d(seed, n, n_steps, dt, sigma, x0, d0, D0):
    times = np.full(n, -1.0)
    angles = np.zeros(n)
    flags = np.zeros(n, dtype=np.int64)
    d0sq = d0 * d0
    D0sq = D0 * D0
    fold_limit = 2.0 * D0 - d0
    for p in prange(n):
        key = _mix(_U64(seed) ^ ((_U64(p) + _U64(1)) * _PHI))
        ctr = _U64(0)
        x = x0
        y = 0.0
        for step in range(n_steps):
            # one polar Gaussian pair per step; rejection only advances this
            # particle's own counter, so scheduling cannot change the path
            while True:
                u = 2.0 * _uniform(key, ctr) - 1.0
                ctr += _U64(1)
                v = 2.0 * _uniform(key, ctr) - 1.0
                ctr += _U64(1)
                s = u * u + v * v
                if 0.0 < s < 1.0:
                    f = math.sqrt(-2.0 * math.log(s) / s)
                    g1 = u * f
                    g2 = v * f
                    break
            nx = x + sigma * g1
            ny = y + sigma * g2
            r2 = nx * nx + ny * ny
            if r2 <= d0sq:
                dx = nx - x
                dy = ny - y
                a2 = dx * dx + dy * dy
                b = x * dx + y * dy
                c0 = x * x + y * y - d0sq
                disc = b * b - a2 * c0
                frac = 0.0
                if disc > 0.0 and a2 > 0.0:
                    frac = (-b - math.sqrt(disc)) / a2
                ix = x + frac * dx
                iy = y + frac * dy
                times[p] = (step + 1) * dt
                angles[p] = math.atan2(iy, ix)
                break
            if r2 >= D0sq:
                r = math.sqrt(r2)
                if r >= fold_limit:
                    flags[p] = 1
                    break
                fold = 2.0 * D0 / r - 1.0
                nx *= fold
                ny *= fold
            x = nx
            y = ny
    return times, angles, flags


@njit(parallel=True, fastmath=True, cache=True)
def _run_3d(seed, n, n_steps, dt, sigma, x0, d0, D0, h, z0):
    times = np.full(n, -1.0)
    angles = np.zeros(n)
    flags = np.zeros(n, dtype=np.int64)
    first_cross = np.zeros(n, dtype=np.int64)  # 0 none, 1 bottom, 2 top
    crossed = np.zeros(n, dtype=np.int64)
    z_final = np.full(n, np.nan)
    d0sq = d0 * d0
    D0sq = D0 * D0
    fold_limit = 2.0 * D0 - d0
    for p in prange(n):
        key = _mix(_U64(seed) ^ ((_U64(p) + _U64(1)) * _PHI))
        ctr = _U64(0)
        x = x0
        y = 0.0
        z = z0
        have_spare = False
        spare = 0.0
        for step in range(n_steps):
            # three normals per step; the odd one is carried to the next step
            if have_spare:
                g0 = spare
                have_spare = False
                while True:
                    u = 2.0 * _uniform(key, ctr) - 1.0
                    ctr += _U64(1)
                    v = 2.0 * _uniform(key, ctr) - 1.0
                    ctr += _U64(1)
                    s = u * u + v * v
                    if 0.0 < s < 1.0:
                        f = math.sqrt(-2.0 * math.log(s) / s)
                        g1 = u * f
                        g2 = v * f
                        break
            else:
                while True:
                    u = 2.0 * _uniform(key, ctr) - 1.0
                    ctr += _U64(1)
                    v = 2.0 * _uniform(key, ctr) - 1.0
                    ctr += _U64(1)
                    s = u * u + v * v
                    if 0.0 < s < 1.0:
                        f = math.sqrt(-2.0 * math.log(s) / s)
                        g0 = u * f
                        g1 = v * f
                        break
                while True:
                    u = 2.0 * _uniform(key, ctr) - 1.0
                    ctr += _U64(1)
                    v = 2.0 * _uniform(key, ctr) - 1.0
                    ctr += _U64(1)
                    s = u * u + v * v
                    if 0.0 < s < 1.0:
                        f = math.sqrt(-2.0 * math.log(s) / s)
                        g2 = u * f
                        spare = v * f
                        have_spare = True
                        break
            nx = x + sigma * g0
            ny = y + sigma * g1
            nz = z + sigma * g2
            if nz < 0.0 or nz > h:
                crossed[p] = 1
                if first_cross[p] == 0:
                    first_cross[p] = 1 if nz < 0.0 else 2
            r2 = nx * nx + ny * ny
            if r2 <= d0sq and 0.0 <= nz <= h:
                dx = nx - x
                dy = ny - y
                a2 = dx * dx + dy * dy
                b = x * dx + y * dy
                c0 = x * x + y * y - d0sq
                disc = b * b - a2 * c0
                frac = 0.0
                if disc > 0.0 and a2 > 0.0:
                    frac = (-b - math.sqrt(disc)) / a2
                ix = x + frac * dx
                iy = y + frac * dy
                times[p] = (step + 1) * dt
                angles[p] = math.atan2(iy, ix)
                break
            if r2 >= D0sq:
                r = math.sqrt(r2)
                if r >= fold_limit:
                    flags[p] = 1
                    break
                fold = 2.0 * D0 / r - 1.0
                nx *= fold
                ny *= fold
            x = nx
            y = ny
            z = nz
        if times[p] < 0.0 and flags[p] == 0:
            z_final[p] = z
    return times, angles, flags, first_cross, crossed, z_final


def _collect(geom, mc, times, angles, flags, extras=None) -> McResult:
    if np.any(flags):
        raise NumericalError(
            f"{int(np.sum(flags))} trajectories overshot beyond the reflection fold range; "
            "the step guard should make this impossible - reduce dt"
        )
    hit = times > 0.0
    idx = np.nonzero(hit)[0]
    order = np.lexsort((idx, times[idx]))
    result = McResult(
        times=times[idx][order],
        angles=angles[idx][order],
        n_particles=mc.n_particles,
        survivors=int(np.sum(~hit)),
        geometry=geom,
        config=mc,
    )
    if extras is not None:
        first_cross, crossed, z_final = extras
        result.cap_crossers = int(np.sum(crossed))
        result.first_cross_bottom = int(np.sum(first_cross == 1))
        result.first_cross_top = int(np.sum(first_cross == 2))
        result.survivor_z = z_final[np.isfinite(z_final)]
    return result


def simulate_2d(geom: ChannelGeometry, mc: McConfig) -> McResult:
    """Run the annular simulation; returns the sorted hit sample plus the
    survivor count (hits + survivors = n_particles exactly)."""
    sigma = check_step_guard(geom, mc)
    times, angles, flags = _run_2d(
        _U64(mc.seed), mc.n_particles, mc.n_steps, mc.dt, sigma, geom.r0, geom.d0, geom.D0
    )
    return _collect(geom, mc, times, angles, flags)


def simulate_3d(geom3: Geometry3D, mc: McConfig) -> McResult:
    """Run the cylindrical-channel simulation with a receiver band z in [0, h]
    and free z-motion; also reports band-face crossing statistics."""
    sigma = check_step_guard(geom3, mc)
    times, angles, flags, first_cross, crossed, z_final = _run_3d(
        _U64(mc.seed), mc.n_particles, mc.n_steps, mc.dt, sigma,
        geom3.r0, geom3.d0, geom3.D0, geom3.h, geom3.h0,
    )
    return _collect(geom3, mc, times, angles, flags, extras=(first_cross, crossed, z_final))


@dataclass(frozen=True)
class ReductionCheck:
    """Outcome of the planar-reduction bound at the maximum time of interest."""

    q_sum: float
    epsilon: float
    valid: bool
    margin: float


def reduction_valid(h: float, h0: float, D: float, t: float, epsilon: float = 1e-3) -> ReductionCheck:
    """Gaussian-tail bound on the probability that free z-diffusion started at
    h0 has left the band [0, h] by time t; the 2-D reduction is accepted when
    the bound stays below epsilon."""
    if min(h, h0, D, t, epsilon) <= 0.0 or h0 >= h:
        raise DomainError("need 0 < h0 < h, D > 0, t > 0, epsilon > 0")
    spread = math.sqrt(2.0 * D * t)
    q_sum = specfun.gaussian_tail((h - h0) / spread) + specfun.gaussian_tail(h0 / spread)
    return ReductionCheck(q_sum=q_sum, epsilon=epsilon, valid=bool(q_sum < epsilon),
                          margin=epsilon - q_sum)


def estimate_rate(result: McResult, bin_width: float, *, theta_f: float | None = None) -> ImpulseResponse:
    """Histogram estimate of the hitting rate: rate_k = hits in bin k divided
    by (n_particles * bin_width).  Hits outside an angle window are absorbed
    but not counted.  An empty sample yields a valid all-zero response."""
    if not bin_width > 0.0:
        raise DomainError("bin_width must be positive")
    if theta_f is None:
        theta_f = result.config.theta_f
    if theta_f is not None and not 0.0 < theta_f <= math.pi:
        raise DomainError("theta_f must lie in (0, pi]")
    t_max = result.config.n_steps * result.config.dt
    n_bins = max(1, int(math.ceil(t_max / bin_width - 1e-9)))
    edges = bin_width * np.arange(n_bins + 1)
    times = result.times
    if theta_f is not None and theta_f < math.pi:
        keep = np.abs(result.angles) <= theta_f
        times = times[keep]
    counts, _ = np.histogram(times, bins=edges)
    denom = max(result.n_particles, 1)
    rate = counts / (denom * bin_width)
    cumulative = np.cumsum(counts) / denom
    meta = {
        "source": "mc",
        "geometry": dataclasses.asdict(result.geometry),
        "config": dataclasses.asdict(result.config),
        "theta_f": theta_f,
        "bin_width": bin_width,
        "bin_edges_last": float(edges[-1]),
    }
    return ImpulseResponse(times=0.5 * (edges[:-1] + edges[1:]), rate=rate,
                           cumulative=cumulative, meta=meta)
