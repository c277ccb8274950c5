"""Eigen-modes of the annular Laplacian with an absorbing inner circle
(Dirichlet at the scaled radius alpha) and a reflecting outer circle (Neumann
at 1).

Every mode is a mix eta_m(beta x) = J_m(beta x) + c * Y_m(beta x) whose
eigenvalue beta is a zero of the cross-product residual

    f(beta) = J_m'(beta) Y_m(alpha beta) - Y_m'(beta) J_m(alpha beta).

The cross product is used instead of the ratio form J'/Y' - J/Y because the
ratio has poles interleaved with the roots; the cross product is smooth, and a
plain sign scan with guaranteed bisection cannot lose roots.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import os
import tempfile
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import specfun
from .errors import DomainError, EnumerationError, NumericalError
from .geometry import check_alpha

__all__ = [
    "Mode",
    "ModeSet",
    "characteristic_residual",
    "find_roots",
    "build_mode",
    "eta",
    "eta_prime",
    "norm_constant",
    "build_modeset",
    "count_sign_changes",
]

_ROOT_TOL = 1e-10
_C_CONSISTENCY = 1e-7
_X_DOMAIN_SLACK = 1e-12


@dataclass(frozen=True)
class Mode:
    """One eigen-mode: angular order m, radial index n (1-based), eigenvalue
    beta, mix coefficient c, and norm constant (the weighted self inner
    product of eta over [alpha, 1])."""

    m: int
    n: int
    alpha: float
    beta: float
    c: float
    norm: float

    def decay_rate(self, geom) -> float:
        """Exponential decay rate beta^2 D / D0^2 in 1/s."""
        return self.beta**2 * geom.D / geom.D0**2


class ModeSet:
    """Rectangular family of modes for one aspect ratio: orders m = 0..M with
    n = 1..N(m) roots each, no gaps.  Immutable after construction and safe to
    share between threads.  ``certificate`` optionally records the truncation
    contract the set was built for (see analytic.select_truncation)."""

    def __init__(self, alpha: float, betas: Sequence[np.ndarray], cs: Sequence[np.ndarray],
                 norms: Sequence[np.ndarray], certificate=None):
        self.alpha = check_alpha(alpha)
        self._betas = tuple(np.asarray(b, dtype=float) for b in betas)
        self._cs = tuple(np.asarray(c, dtype=float) for c in cs)
        self._norms = tuple(np.asarray(v, dtype=float) for v in norms)
        self.certificate = certificate
        for m, b in enumerate(self._betas):
            if b.size == 0:
                raise NumericalError(f"order m={m} has no modes")
            if np.any(np.diff(b) <= 0):
                raise NumericalError(f"betas not strictly increasing for m={m}")

    @property
    def max_order(self) -> int:
        return len(self._betas) - 1

    def radial_count(self, m: int) -> int:
        return self._betas[m].size

    def betas(self, m: int) -> np.ndarray:
        return self._betas[m]

    def cs(self, m: int) -> np.ndarray:
        return self._cs[m]

    def norms(self, m: int) -> np.ndarray:
        return self._norms[m]

    def mode(self, m: int, n: int) -> Mode:
        if not (0 <= m <= self.max_order) or not (1 <= n <= self.radial_count(m)):
            raise DomainError(f"no mode (m={m}, n={n}) in this set")
        return Mode(m, n, self.alpha, float(self._betas[m][n - 1]),
                    float(self._cs[m][n - 1]), float(self._norms[m][n - 1]))

    def __iter__(self) -> Iterator[Mode]:
        for m in range(self.max_order + 1):
            for n in range(1, self.radial_count(m) + 1):
                yield self.mode(m, n)

    def __len__(self) -> int:
        return sum(b.size for b in self._betas)

    def rows(self) -> list[tuple[int, int, float, float, float]]:
        return [(mode.m, mode.n, mode.beta, mode.c, mode.norm) for mode in self]

    def content_hash(self) -> str:
        text = "\n".join(f"{m},{n},{b:.17g},{c:.17g},{v:.17g}" for m, n, b, c, v in self.rows())
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def save_csv(self, path: str | os.PathLike) -> None:
        write_table(path, self.rows())

    @classmethod
    def load_csv(cls, path: str | os.PathLike, alpha: float) -> "ModeSet":
        by_order: dict[int, list[tuple[int, float, float, float]]] = {}
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["m", "n", "beta", "c", "norm"]:
                raise NumericalError(f"unexpected eigen-table header {header!r} in {path}")
            for row in reader:
                m, n = int(row[0]), int(row[1])
                by_order.setdefault(m, []).append((n, float(row[2]), float(row[3]), float(row[4])))
        betas, cs, norms = [], [], []
        for m in range(max(by_order) + 1):
            entries = sorted(by_order.get(m, []))
            if [e[0] for e in entries] != list(range(1, len(entries) + 1)):
                raise NumericalError(f"eigen-table {path} has gaps at m={m}")
            betas.append(np.array([e[1] for e in entries]))
            cs.append(np.array([e[2] for e in entries]))
            norms.append(np.array([e[3] for e in entries]))
        return cls(alpha, betas, cs, norms)


def write_table(path: str | os.PathLike, rows) -> None:
    """Atomically write an eigen-table CSV (full double precision)."""
    buf = io.StringIO()
    buf.write("m,n,beta,c,norm\n")
    for m, n, beta, c, norm in rows:
        buf.write(f"{m},{n},{beta:.17g},{c:.17g},{norm:.17g}\n")
    _atomic_write(path, buf.getvalue())


def _atomic_write(path: str | os.PathLike, text: str) -> None:
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# characteristic equation

def characteristic_residual(m: int, alpha: float, beta):
    """Cross-product residual whose zeros are the eigenvalues for order m.

    For m = 0 this equals -[J_1(b) Y_0(ab) - Y_1(b) J_0(ab)], the pole-free
    rearrangement of the ratio form; zeros coincide wherever the ratio form is
    defined.
    """
    alpha = check_alpha(alpha)
    arr = np.asarray(beta, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if np.any(arr <= 0.0):
        raise DomainError("beta must be positive")
    out = _residual_raw(m, alpha, arr)
    return float(out[0]) if scalar else out


def _residual_raw(m: int, alpha: float, beta: np.ndarray) -> np.ndarray:
    """Residual on a validated positive array; one fused kernel pass."""
    with np.errstate(over="ignore", invalid="ignore"):
        xs = np.concatenate([beta, alpha * beta])
        j, y, jp, yp = specfun._jy_with_primes(m, xs)
        k = beta.size
        out = jp[:k] * y[k:] - yp[:k] * j[k:]
    # As beta -> 0 the true residual diverges to -inf; if Y overflow meets J
    # underflow the product is NaN, which we pin to the correct limit sign.
    return np.nan_to_num(out, nan=-np.inf, posinf=np.inf, neginf=-np.inf)


def find_roots(m: int, alpha: float, count: int) -> np.ndarray:
    """First ``count`` zeros of the characteristic residual, each refined by
    bisection to absolute tolerance 1e-10.  Raises EnumerationError if the
    working range x <= X_MAX is exhausted first."""
    alpha = check_alpha(alpha)
    if count < 1:
        raise DomainError("count must be >= 1")
    step = min(math.pi / (1.0 - alpha), math.pi / alpha) / 8.0
    lo_list: list[float] = []
    hi_list: list[float] = []
    start = step * 1e-3
    chunk = 64
    pos = start
    while len(lo_list) < count:
        if pos >= specfun.X_MAX:
            raise EnumerationError(
                f"only {len(lo_list)} of {count} roots for (m={m}, alpha={alpha}) "
                f"below the working cap beta <= {specfun.X_MAX}"
            )
        grid = pos + step * np.arange(chunk + 1)
        grid = np.minimum(grid, specfun.X_MAX)
        vals = _residual_raw(m, alpha, grid)
        sign = np.sign(vals)
        flips = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
        for i in flips:
            if len(lo_list) < count:
                lo_list.append(float(grid[i]))
                hi_list.append(float(grid[i + 1]))
        exact = np.nonzero(vals == 0.0)[0]
        for i in exact:  # pragma: no cover - measure-zero event
            if len(lo_list) < count:
                lo_list.append(float(grid[i]))
                hi_list.append(float(grid[i]))
        pos = float(grid[-1])
    lo = np.array(lo_list[:count])
    hi = np.array(hi_list[:count])
    return _bisect(m, alpha, lo, hi)


def _bisect(m: int, alpha: float, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Bisection to the 1e-10 contract, then secant polish towards machine
    precision: the boundary-condition residuals of the built modes scale with
    the root error amplified by |Y(alpha beta)|, so the extra digits matter."""
    flo = _residual_raw(m, alpha, lo)
    iters = int(math.ceil(math.log2(max(np.max(hi - lo), _ROOT_TOL) / _ROOT_TOL))) + 2
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fmid = _residual_raw(m, alpha, mid)
        take_lo = flo * fmid <= 0.0
        hi = np.where(take_lo, mid, hi)
        lo = np.where(take_lo, lo, mid)
        flo = np.where(take_lo, flo, fmid)
    a, b = lo, hi
    fa = _residual_raw(m, alpha, a)
    fb = _residual_raw(m, alpha, b)
    root = 0.5 * (a + b)
    for _ in range(3):
        denom = fb - fa
        safe = denom != 0.0
        cand = np.where(safe, a - fa * (b - a) / np.where(safe, denom, 1.0), root)
        cand = np.clip(cand, np.minimum(a, b), np.maximum(a, b))
        fc = _residual_raw(m, alpha, cand)
        move_a = fa * fc <= 0.0
        b = np.where(move_a, cand, b)
        fb = np.where(move_a, fc, fb)
        a = np.where(move_a, a, cand)
        fa = np.where(move_a, fa, fc)
        root = cand
    return root


def find_roots_below(m: int, alpha: float, threshold: float) -> np.ndarray:
    """Every root below ``threshold`` plus the first one at or above it (the
    certifying term of a truncation).  Raises EnumerationError if no root at
    or above the threshold exists inside the working range."""
    alpha = check_alpha(alpha)
    if not 0.0 < threshold <= specfun.X_MAX:
        raise DomainError(f"threshold must lie in (0, {specfun.X_MAX}]")
    step = min(math.pi / (1.0 - alpha), math.pi / alpha) / 8.0
    lo_list: list[float] = []
    hi_list: list[float] = []
    pos = step * 1e-3
    chunk = 64
    while True:
        grid = pos + step * np.arange(chunk + 1)
        grid = np.minimum(grid, specfun.X_MAX)
        vals = _residual_raw(m, alpha, grid)
        sign = np.sign(vals)
        for i in np.nonzero(sign[:-1] * sign[1:] < 0)[0]:
            lo_list.append(float(grid[i]))
            hi_list.append(float(grid[i + 1]))
        pos = float(grid[-1])
        if lo_list and lo_list[-1] >= threshold:
            break
        if pos >= specfun.X_MAX:
            raise EnumerationError(
                f"no root at or above threshold beta = {threshold} for (m={m}, alpha={alpha}) "
                f"inside the working cap {specfun.X_MAX}; truncation cannot be certified"
            )
    roots = _bisect(m, alpha, np.array(lo_list), np.array(hi_list))
    keep = int(np.searchsorted(roots, threshold)) + 1
    return roots[:keep]


def count_sign_changes(m: int, alpha: float, upto: float, step_divisor: float = 8.0) -> int:
    """Number of residual sign changes in (0, upto]; used to validate that the
    production scan (divisor 8) misses nothing versus a finer scan."""
    alpha = check_alpha(alpha)
    step = min(math.pi / (1.0 - alpha), math.pi / alpha) / step_divisor
    grid = np.arange(step * 1e-3, min(upto, specfun.X_MAX) + step, step)
    grid = np.minimum(grid, specfun.X_MAX)
    vals = _residual_raw(m, alpha, grid)
    sign = np.where(vals >= 0.0, 1.0, -1.0)
    return int(np.sum(sign[:-1] * sign[1:] < 0))


# ---------------------------------------------------------------------------
# mode construction

def _family_coeffs(m: int, alpha: float, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(c, norm) arrays for validated roots of order m."""
    xs = np.concatenate([beta, alpha * beta])
    j, y, jp, yp = specfun._jy_with_primes(m, xs)
    k = beta.size
    c_neumann = -jp[:k] / yp[:k]
    c_dirichlet = -j[k:] / y[k:]
    # Agreement check with an absolute floor: when the inner argument is deep
    # in the evanescent region (alpha*beta << m) the true c is exponentially
    # tiny, the Neumann ratio is pure root-error noise, and only the absolute
    # difference is meaningful.
    scale = np.maximum(np.maximum(np.abs(c_neumann), np.abs(c_dirichlet)), 1e-5)
    bad = np.abs(c_neumann - c_dirichlet) > _C_CONSISTENCY * scale
    if np.any(bad):
        i = int(np.nonzero(bad)[0][0])
        raise NumericalError(
            f"mix coefficient mismatch for (m={m}, n={i + 1}): Neumann {c_neumann[i]!r} "
            f"vs Dirichlet {c_dirichlet[i]!r}; root quality insufficient"
        )
    # The Dirichlet form is the well-conditioned one everywhere: its error
    # enters eta additively, while the Neumann form's error is amplified by
    # |Y'(alpha beta)/Y'(beta)|, which explodes for evanescent inner regions.
    c = c_dirichlet
    eta_outer = j[:k] + c * y[:k]
    etap_inner = jp[k:] + c * yp[k:]
    norm = 0.5 * (1.0 - m**2 / beta**2) * eta_outer**2 - 0.5 * alpha**2 * etap_inner**2
    if np.any(norm <= 0.0):
        i = int(np.nonzero(norm <= 0.0)[0][0])
        raise NumericalError(f"non-positive norm constant for (m={m}, n={i + 1}): {norm[i]!r}")
    return c, norm


def build_mode(m: int, alpha: float, beta: float, n: int = 1) -> Mode:
    """Assemble a Mode from a validated root; the mix coefficient is computed
    from both boundary conditions and cross-checked (disagreement flags an
    inaccurate root); the well-conditioned Dirichlet form is the one stored."""
    arr = np.atleast_1d(np.asarray(beta, dtype=float))
    c, norm = _family_coeffs(m, check_alpha(alpha), arr)
    return Mode(m, n, alpha, float(arr[0]), float(c[0]), float(norm[0]))


def eta(mode: Mode, x):
    """eta_m(beta x) = J_m(beta x) + c Y_m(beta x) for x in [alpha, 1]."""
    xs = _check_eta_domain(mode, x)
    val = specfun.bessel_j(mode.m, mode.beta * xs) + mode.c * specfun.bessel_y(mode.m, mode.beta * xs)
    return val


def eta_prime(mode: Mode, x):
    """Derivative of eta_m with respect to the scaled argument (beta x); the
    derivative in physical radius r is (beta/D0) times this."""
    xs = _check_eta_domain(mode, x)
    val = specfun.bessel_j_prime(mode.m, mode.beta * xs) + mode.c * specfun.bessel_y_prime(mode.m, mode.beta * xs)
    return val


def _check_eta_domain(mode: Mode, x):
    xs = np.asarray(x, dtype=float)
    if np.any(xs < mode.alpha - _X_DOMAIN_SLACK) or np.any(xs > 1.0 + _X_DOMAIN_SLACK):
        raise DomainError(f"scaled radius {x!r} outside [{mode.alpha}, 1]")
    return np.clip(xs, mode.alpha, 1.0) if xs.ndim else float(np.clip(xs, mode.alpha, 1.0))


def norm_constant(mode: Mode) -> float:
    """Closed-form weighted norm integral_alpha^1 eta_m(beta x)^2 x dx.

    With the Neumann condition at 1 and the Dirichlet condition at alpha the
    standard Bessel norm integral collapses to
    (1/2)(1 - m^2/beta^2) eta_m(beta)^2 - (alpha^2/2) eta_m'(alpha beta)^2.
    """
    e_outer = eta(mode, 1.0)
    ep_inner = eta_prime(mode, mode.alpha)
    val = 0.5 * (1.0 - mode.m**2 / mode.beta**2) * e_outer**2 - 0.5 * mode.alpha**2 * ep_inner**2
    if val <= 0.0:
        raise NumericalError(f"non-positive norm constant for mode {mode}")
    return float(val)


# ---------------------------------------------------------------------------
# mode-set assembly with optional disk cache

def build_modeset(alpha: float, max_order: int, radial_counts, cache_dir: str | os.PathLike | None = None,
                  certificate=None) -> ModeSet:
    """Build the complete family m = 0..max_order, n = 1..N(m).

    ``radial_counts`` is a single int (same N for every order) or a sequence
    of per-order counts.  Eigen-tables are cached on disk keyed by
    (alpha rounded to 12 digits, max_order, counts) because root enumeration
    dominates setup cost.
    """
    alpha = check_alpha(alpha)
    if max_order < 0:
        raise DomainError("max_order must be >= 0")
    if isinstance(radial_counts, (int, np.integer)):
        counts = [int(radial_counts)] * (max_order + 1)
    else:
        counts = [int(v) for v in radial_counts]
        if len(counts) != max_order + 1:
            raise DomainError(f"need {max_order + 1} radial counts, got {len(counts)}")
    if any(v < 1 for v in counts):
        raise DomainError("every radial count must be >= 1")

    cache_path = None
    if cache_dir is not None:
        os.makedirs(cache_dir, exist_ok=True)
        key = f"{alpha:.12f}|{max_order}|{','.join(map(str, counts))}"
        digest = hashlib.sha256(key.encode()).hexdigest()[:20]
        cache_path = os.path.join(os.fspath(cache_dir), f"eigentable_{digest}.csv")
        if os.path.exists(cache_path):
            ms = ModeSet.load_csv(cache_path, alpha)
            if ms.max_order == max_order and [ms.radial_count(m) for m in range(max_order + 1)] == counts:
                return ModeSet(alpha, [ms.betas(m) for m in range(max_order + 1)],
                               [ms.cs(m) for m in range(max_order + 1)],
                               [ms.norms(m) for m in range(max_order + 1)], certificate)

    betas, cs, norms = [], [], []
    for m in range(max_order + 1):
        roots = find_roots(m, alpha, counts[m])
        c, norm = _family_coeffs(m, alpha, roots)
        betas.append(roots)
        cs.append(c)
        norms.append(norm)
    ms = ModeSet(alpha, betas, cs, norms, certificate)
    if cache_path is not None:
        ms.save_csv(cache_path)
    return ms
