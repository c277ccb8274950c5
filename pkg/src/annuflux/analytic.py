"""Eigenfunction-series evaluation of the annular channel response: survival
density, hitting rates (full-circle and angle-windowed), cumulative absorption,
the analytic mean absorption time, and truncation selection.

Series conventions (transmitter angle fixed at theta_0 = 0):

* density   P(r,theta,t) = sum_n eta_0 eta_0 e^{-lam t} / (2 pi D0^2 I_0n)
                         + sum_{m>=1,n} cos(m theta) eta_m eta_m e^{-lam t} / (pi D0^2 I_mn)
* flux      F_mn = D alpha beta eta_m(beta r0/D0) eta_m'(alpha beta) / (D0^2 I_mn)
* rate      n_hit(t) = sum_n F_0n e^{-lam_0n t}            (positive-influx sign)
* windowed  weight theta_f/pi on m = 0 and 2 sin(m theta_f)/(m pi) on m >= 1.

Cumulative absorption is evaluated in the mass-subtracted form
``W - sum (F/lam) e^{-lam t}`` where W is the exact eventual-absorption
probability (1 for the full circle, a closed-form harmonic-measure value for a
window).  The naive term-by-term integral converges to W only like 1/beta_N,
far too slowly for conservation checks, while the subtracted form carries the
same exponential truncation certificate as the rate itself.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import specfun
from .errors import CertificationError, DomainError, EnumerationError, NumericalError
from .eigen import ModeSet, build_modeset, find_roots, find_roots_below, _atomic_write
from .geometry import ChannelGeometry

__all__ = [
    "Truncation",
    "ImpulseResponse",
    "UnboundedValidity",
    "pdf",
    "radial_density",
    "hitting_rate",
    "hitting_rate_angular",
    "hitting_rate_derivative",
    "cumulative_hits",
    "average_time",
    "select_truncation",
    "certified_modeset",
    "impulse_response",
    "unbounded_validity",
    "window_weights",
    "window_total",
]

_RATE_REL_FLOOR = 1e-6  # positivity flag: negative beyond this fraction of the series envelope


@dataclass(frozen=True)
class Truncation:
    """Exponential truncation certificate: every retained order m keeps
    n = 1..N(m) radial terms with exp(-beta^2 D t_min / D0^2) <= tol at the
    last one, and dropped angular orders satisfy the same bound at their first
    root.

    ``t_min`` is in seconds for the geometry the certificate was built with;
    the underlying contract is the dimensionless ``tau_min = D t_min / D0^2``,
    so the same mode set stays certified for any geometry with the same aspect
    ratio via :meth:`t_min_for`.
    """

    t_min: float
    tol: float
    max_order: int
    n_per_order: tuple[int, ...]
    tau_min: float = 0.0

    def t_min_for(self, geom: "ChannelGeometry") -> float:
        """Earliest trusted time for a (possibly rescaled) geometry."""
        return self.tau_min * geom.D0**2 / geom.D


@dataclass(frozen=True)
class UnboundedValidity:
    """Report for the wide-boundary approximation regime."""

    release_ratio: float   # r0 / D0
    spread_ratio: float    # sqrt(D t) / D0
    threshold: float
    valid: bool


@dataclass
class ImpulseResponse:
    """Hitting-rate response on a time grid with cumulative absorption."""

    times: np.ndarray
    rate: np.ndarray
    cumulative: np.ndarray
    meta: dict

    def validate(self) -> None:
        floor = -_RATE_REL_FLOOR * max(float(np.max(self.rate)), 0.0)
        if np.any(self.rate < floor):
            raise NumericalError(
                f"rate dips to {float(np.min(self.rate))} (below {floor}); "
                "truncation not trustworthy on this grid"
            )
        if np.any(self.cumulative < -1e-9) or np.any(self.cumulative > 1.0 + 1e-9):
            raise NumericalError("cumulative outside [0, 1]")
        if np.any(np.diff(self.cumulative) < -1e-9):
            raise NumericalError("cumulative not non-decreasing")

    def save_csv(self, path: str | os.PathLike) -> None:
        lines = ["t,rate,cumulative"]
        for t, r, c in zip(self.times, self.rate, self.cumulative):
            lines.append(f"{t:.17g},{r:.17g},{c:.17g}")
        _atomic_write(path, "\n".join(lines) + "\n")

    def save_json(self, path: str | os.PathLike) -> None:
        payload = {
            "meta": self.meta,
            "t": self.times.tolist(),
            "rate": self.rate.tolist(),
            "cumulative": self.cumulative.tolist(),
        }
        _atomic_write(path, json.dumps(payload, indent=2) + "\n")


# ---------------------------------------------------------------------------
# coefficient assembly (cached per geometry/mode-set pairing)

def _check_pairing(geom: ChannelGeometry, modeset: ModeSet) -> None:
    if abs(geom.alpha - modeset.alpha) > 1e-12:
        raise DomainError(
            f"geometry alpha {geom.alpha!r} does not match mode-set alpha {modeset.alpha!r}"
        )


@lru_cache(maxsize=64)
def _series_coeffs(modeset: ModeSet, geom: ChannelGeometry):
    """Per-order arrays (lam, flux F, eta at release radius) for the pairing."""
    _check_pairing(geom, modeset)
    alpha = modeset.alpha
    x0 = geom.r0 / geom.D0
    lam, flux, eta_r0 = [], [], []
    for m in range(modeset.max_order + 1):
        beta = modeset.betas(m)
        c = modeset.cs(m)
        norm = modeset.norms(m)
        xs = np.concatenate([beta * x0, alpha * beta])
        j, y, jp, yp = specfun._jy_with_primes(m, xs)
        k = beta.size
        e_r0 = j[:k] + c * y[:k]
        ep_in = jp[k:] + c * yp[k:]
        lam.append(beta**2 * geom.D / geom.D0**2)
        flux.append(geom.D * alpha * beta * e_r0 * ep_in / (geom.D0**2 * norm))
        eta_r0.append(e_r0)
    return tuple(lam), tuple(flux), tuple(eta_r0)


def _require_certified(modeset: ModeSet, t, enforce: bool, geom: ChannelGeometry) -> None:
    cert = modeset.certificate
    if cert is None or not enforce:
        return
    tmin = float(np.min(t))
    bound = cert.t_min_for(geom)
    if tmin < bound * (1.0 - 1e-12):
        raise CertificationError(
            f"t = {tmin} below certified t_min = {bound:.6g} s for this geometry; rebuild "
            "the mode set with a smaller t_min (more radial terms) to evaluate earlier times"
        )


# ---------------------------------------------------------------------------
# rates

def hitting_rate(geom: ChannelGeometry, modeset: ModeSet, t, *, enforce_certificate: bool = True):
    """Absorption rate n_hit(t) in 1/s for the full receiver circle."""
    tt = np.asarray(t, dtype=float)
    scalar = tt.ndim == 0
    tt = np.atleast_1d(tt)
    if np.any(tt < 0.0):
        raise DomainError("time must be >= 0")
    _require_certified(modeset, tt, enforce_certificate, geom)
    lam, flux, _ = _series_coeffs(modeset, geom)
    decay = np.exp(-np.outer(tt, lam[0]))
    out = decay @ flux[0]
    if enforce_certificate and modeset.certificate is not None and np.min(out) < 0.0:
        envelope = decay @ np.abs(flux[0])
        if np.any(out < -_RATE_REL_FLOOR * envelope):
            raise NumericalError(
                f"certified rate went negative ({float(np.min(out))}) beyond the truncation "
                "noise floor; check truncation"
            )
    return float(out[0]) if scalar else out


def hitting_rate_derivative(geom: ChannelGeometry, modeset: ModeSet, t, *, enforce_certificate: bool = True):
    """Term-wise time derivative of the full-circle hitting rate."""
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    _require_certified(modeset, tt, enforce_certificate, geom)
    lam, flux, _ = _series_coeffs(modeset, geom)
    out = np.exp(-np.outer(tt, lam[0])) @ (-lam[0] * flux[0])
    return float(out[0]) if np.asarray(t).ndim == 0 else out


def window_weights(theta_f: float, max_order: int) -> np.ndarray:
    """Angular weights for a counting window [-theta_f, theta_f]: index m gets
    theta_f/pi (m = 0) or 2 sin(m theta_f)/(m pi).  At theta_f = pi every
    m >= 1 weight is exactly zero and the window reduces to the full circle."""
    if not 0.0 < theta_f <= math.pi:
        raise DomainError(f"theta_f must lie in (0, pi], got {theta_f}")
    w = np.empty(max_order + 1)
    w[0] = theta_f / math.pi
    ms = np.arange(1, max_order + 1)
    if theta_f == math.pi:
        w[1:] = 0.0
    else:
        w[1:] = 2.0 * np.sin(ms * theta_f) / (ms * math.pi)
    return w


def hitting_rate_angular(geom: ChannelGeometry, modeset: ModeSet, theta_f: float, t, *,
                         enforce_certificate: bool = True):
    """Counting rate for hits inside [-theta_f, theta_f]; identical to
    hitting_rate at theta_f = pi."""
    if theta_f != math.pi and modeset.max_order < 1:
        raise DomainError("angle-windowed rate needs a mode set with angular orders (max_order >= 1)")
    tt = np.asarray(t, dtype=float)
    scalar = tt.ndim == 0
    tt = np.atleast_1d(tt)
    if np.any(tt < 0.0):
        raise DomainError("time must be >= 0")
    _require_certified(modeset, tt, enforce_certificate, geom)
    lam, flux, _ = _series_coeffs(modeset, geom)
    w = window_weights(theta_f, modeset.max_order)
    out = np.zeros(tt.size)
    envelope = np.zeros(tt.size)
    for m in range(modeset.max_order + 1):
        if w[m] == 0.0:
            continue
        decay = np.exp(-np.outer(tt, lam[m]))
        out += w[m] * (decay @ flux[m])
        envelope += abs(w[m]) * (decay @ np.abs(flux[m]))
    if (enforce_certificate and modeset.certificate is not None
            and np.any(out < -_RATE_REL_FLOOR * envelope)):
        raise NumericalError(
            f"certified windowed rate went negative ({float(np.min(out))}) beyond the "
            "truncation noise floor"
        )
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# cumulative absorption and its exact totals

def _angular_total(geom: ChannelGeometry, m: int) -> float:
    """Eventual E[cos(m * absorption angle)]: harmonic measure of the annulus.

    The expectation is harmonic in the release point with boundary data
    cos(m theta) on the absorbing circle and zero normal derivative on the
    reflecting one, giving cosh(m ln(D0/r0)) / cosh(m ln(D0/d0)).
    """
    if m == 0:
        return 1.0
    a = math.log(geom.D0 / geom.r0)
    b = math.log(geom.D0 / geom.d0)
    # cosh ratio in log space to avoid overflow at large m
    return math.exp(m * (a - b)) * (1.0 + math.exp(-2.0 * m * a)) / (1.0 + math.exp(-2.0 * m * b))


def window_total(geom: ChannelGeometry, theta_f: float) -> float:
    """Probability that a released molecule is eventually counted, i.e. ends
    up absorbed inside [-theta_f, theta_f].  Equals 1 at theta_f = pi."""
    if not 0.0 < theta_f <= math.pi:
        raise DomainError(f"theta_f must lie in (0, pi], got {theta_f}")
    if theta_f == math.pi:
        return 1.0
    total = theta_f / math.pi
    for m in range(1, 100000):
        g = _angular_total(geom, m)
        total += 2.0 * math.sin(m * theta_f) / (m * math.pi) * g
        if g < 1e-18:
            break
    return total


def cumulative_hits(geom: ChannelGeometry, modeset: ModeSet, t, *, theta_f: float | None = None):
    """Probability of absorption (inside the window, if given) by time t.

    Evaluated as W - sum (w F/lam) e^{-lam t} with the exact eventual total W;
    cumulative(0) = 0 by definition.  Values at 0 < t < the certified t_min
    carry the uncancelled series tail and are only indicative.
    """
    tt = np.asarray(t, dtype=float)
    scalar = tt.ndim == 0
    tt = np.atleast_1d(tt)
    if np.any(tt < 0.0):
        raise DomainError("time must be >= 0")
    lam, flux, _ = _series_coeffs(modeset, geom)
    if theta_f is None:
        w = window_weights(math.pi, modeset.max_order)
        total = 1.0
    else:
        w = window_weights(theta_f, modeset.max_order)
        total = window_total(geom, theta_f)
    out = np.full(tt.size, total)
    for m in range(modeset.max_order + 1):
        if w[m] == 0.0:
            continue
        out -= w[m] * (np.exp(-np.outer(tt, lam[m])) @ (flux[m] / lam[m]))
    out[tt == 0.0] = 0.0
    return float(out[0]) if scalar else out


def average_time(geom: ChannelGeometry, modeset: ModeSet) -> float:
    """Mean absorption time: term-wise integral of t * n_hit(t), an absolutely
    convergent sum F/lam^2 (the 1/beta^3 tail)."""
    lam, flux, _ = _series_coeffs(modeset, geom)
    return float(np.sum(flux[0] / lam[0] ** 2))


# ---------------------------------------------------------------------------
# densities

def pdf(geom: ChannelGeometry, modeset: ModeSet, r, theta: float, t: float):
    """Survival probability density (1/m^2) at radius r, angle theta, time t
    for a release at (r0, 0).  The series diverges pointwise at t = 0 against
    the delta initial condition, so t must be positive."""
    if not t > 0.0:
        raise DomainError("time must be positive (series is singular at t = 0)")
    rr = np.asarray(r, dtype=float)
    scalar = rr.ndim == 0
    rr = np.atleast_1d(rr)
    slack = 1e-12 * geom.D0
    if np.any(rr < geom.d0 - slack) or np.any(rr > geom.D0 + slack):
        raise DomainError("radius outside the annulus [d0, D0]")
    x = np.clip(rr / geom.D0, modeset.alpha, 1.0)
    lam, _, eta_r0 = _series_coeffs(modeset, geom)
    out = np.zeros(rr.size)
    for m in range(modeset.max_order + 1):
        beta = modeset.betas(m)
        c = modeset.cs(m)
        norm = modeset.norms(m)
        args = np.outer(beta, x)
        ej = specfun.bessel_j(m, args.ravel()).reshape(args.shape)
        ey = specfun.bessel_y(m, args.ravel()).reshape(args.shape)
        eta_r = ej + c[:, None] * ey
        if m == 0:
            weight = 1.0 / (2.0 * math.pi * geom.D0**2)
        else:
            weight = math.cos(m * theta) / (math.pi * geom.D0**2)
        coeff = weight * eta_r0[m] * np.exp(-lam[m] * t) / norm
        out += coeff @ eta_r
    return float(out[0]) if scalar else out


def radial_density(geom: ChannelGeometry, modeset: ModeSet, r, t: float):
    """Angle-integrated density per radius (1/m): 2 pi r times the
    rotationally symmetric part of the survival density."""
    if not t > 0.0:
        raise DomainError("time must be positive")
    rr = np.asarray(r, dtype=float)
    scalar = rr.ndim == 0
    rr = np.atleast_1d(rr)
    slack = 1e-12 * geom.D0
    if np.any(rr < geom.d0 - slack) or np.any(rr > geom.D0 + slack):
        raise DomainError("radius outside the annulus [d0, D0]")
    x = np.clip(rr / geom.D0, modeset.alpha, 1.0)
    lam, _, eta_r0 = _series_coeffs(modeset, geom)
    beta = modeset.betas(0)
    c = modeset.cs(0)
    norm = modeset.norms(0)
    args = np.outer(beta, x)
    ej = specfun.bessel_j(0, args.ravel()).reshape(args.shape)
    ey = specfun.bessel_y(0, args.ravel()).reshape(args.shape)
    eta_r = ej + c[:, None] * ey
    coeff = eta_r0[0] * np.exp(-lam[0] * t) / (2.0 * math.pi * geom.D0**2 * norm)
    out = 2.0 * math.pi * rr * (coeff @ eta_r)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# truncation selection

def _beta_threshold(geom: ChannelGeometry, t_min: float, tol: float) -> float:
    return geom.D0 * math.sqrt(math.log(1.0 / tol) / (geom.D * t_min))


def _achievable_t_min(geom: ChannelGeometry, tol: float, beta_cap: float) -> float:
    return math.log(1.0 / tol) * geom.D0**2 / (geom.D * beta_cap**2)




def select_truncation(geom: ChannelGeometry, t_min: float, tol: float, *,
                      angular: bool = False) -> Truncation:
    """Smallest per-order radial count N(m) such that the last retained term
    satisfies exp(-beta^2 D t_min / D0^2) <= tol; with ``angular`` the maximum
    order M is grown until the first dropped order meets the same bound."""
    if not t_min > 0.0:
        raise DomainError("t_min must be positive")
    if not 0.0 < tol < 1.0:
        raise DomainError("tol must lie in (0, 1)")
    thr = _beta_threshold(geom, t_min, tol)
    if thr > specfun.X_MAX:
        raise EnumerationError(
            f"certifying t_min = {t_min} needs beta >= {thr:.1f}, beyond the working cap "
            f"{specfun.X_MAX}; achievable t_min = {_achievable_t_min(geom, tol, specfun.X_MAX):.6g} s"
        )
    alpha = geom.alpha
    counts = [len(find_roots_below(0, alpha, thr))]
    max_order = 0
    if angular:
        m = 1
        while True:
            first = find_roots(m, alpha, 1)[0]
            if first >= thr:
                break
            counts.append(len(find_roots_below(m, alpha, thr)))
            max_order = m
            m += 1
            if m > specfun.M_MAX:
                achievable = _achievable_t_min(geom, tol, float(first))
                raise EnumerationError(
                    f"angular certification needs orders beyond m = {specfun.M_MAX}; "
                    f"achievable t_min at the order cap = {achievable:.6g} s"
                )
    return Truncation(t_min=float(t_min), tol=float(tol), max_order=max_order,
                      n_per_order=tuple(counts), tau_min=geom.D * t_min / geom.D0**2)


def truncation_for_orders(geom: ChannelGeometry, t_min: float, tol: float,
                          max_order: int) -> Truncation:
    """Radial certification for an explicitly chosen set of angular orders
    m = 0..max_order (no closure condition on the dropped orders)."""
    if not t_min > 0.0:
        raise DomainError("t_min must be positive")
    if not 0.0 < tol < 1.0:
        raise DomainError("tol must lie in (0, 1)")
    thr = _beta_threshold(geom, t_min, tol)
    if thr > specfun.X_MAX:
        raise EnumerationError(
            f"certifying t_min = {t_min} needs beta >= {thr:.1f}, beyond the working cap "
            f"{specfun.X_MAX}; achievable t_min = {_achievable_t_min(geom, tol, specfun.X_MAX):.6g} s"
        )
    counts = tuple(len(find_roots_below(m, geom.alpha, thr)) for m in range(max_order + 1))
    return Truncation(t_min=float(t_min), tol=float(tol), max_order=max_order,
                      n_per_order=counts, tau_min=geom.D * t_min / geom.D0**2)


def certified_modeset(geom: ChannelGeometry, t_min: float, tol: float, *,
                      angular: bool = False, cache_dir=None) -> ModeSet:
    """Build a mode set sized by select_truncation, with the certificate attached."""
    tr = select_truncation(geom, t_min, tol, angular=angular)
    return build_modeset(geom.alpha, tr.max_order, tr.n_per_order, cache_dir=cache_dir,
                         certificate=tr)


# ---------------------------------------------------------------------------
# response grids and validity reporting

def impulse_response(geom: ChannelGeometry, modeset: ModeSet, times, *,
                     theta_f: float | None = None, enforce_certificate: bool = True,
                     meta: dict | None = None) -> ImpulseResponse:
    """Evaluate rate and cumulative absorption on an ascending time grid."""
    tt = np.asarray(times, dtype=float)
    if tt.ndim != 1 or tt.size == 0:
        raise DomainError("times must be a non-empty 1-D grid")
    if np.any(np.diff(tt) <= 0):
        raise DomainError("times must be strictly increasing")
    if theta_f is None:
        rate = hitting_rate(geom, modeset, tt, enforce_certificate=enforce_certificate)
    else:
        rate = hitting_rate_angular(geom, modeset, theta_f, tt,
                                    enforce_certificate=enforce_certificate)
    cum = cumulative_hits(geom, modeset, tt, theta_f=theta_f)
    cum = np.where((cum < 0.0) & (cum > -1e-9), 0.0, cum)
    info = {
        "source": "series",
        "geometry": dataclasses.asdict(geom),
        "theta_f": theta_f,
        "modeset_hash": modeset.content_hash(),
        "truncation": dataclasses.asdict(modeset.certificate) if modeset.certificate else None,
    }
    if meta:
        info.update(meta)
    resp = ImpulseResponse(times=tt, rate=np.atleast_1d(rate), cumulative=np.atleast_1d(cum), meta=info)
    resp.validate()
    return resp


def unbounded_validity(geom: ChannelGeometry, t: float, threshold: float = 0.1) -> UnboundedValidity:
    """Check whether the wide-boundary (effectively unbounded) approximation
    regime holds at time t: both r0/D0 and sqrt(D t)/D0 strictly below the
    threshold.  Informational only."""
    if not t > 0.0:
        raise DomainError("time must be positive")
    release = geom.r0 / geom.D0
    spread = math.sqrt(geom.D * t) / geom.D0
    return UnboundedValidity(
        release_ratio=release,
        spread_ratio=spread,
        threshold=threshold,
        valid=bool(release < threshold and spread < threshold),
    )
