"""Channel geometry containers (SI units throughout)."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DomainError

ALPHA_MAX = 0.99


def check_alpha(alpha: float) -> float:
    """Validate an aspect ratio d0/D0; the vanishing-annulus limit is rejected."""
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"aspect ratio must lie in (0, 1), got {alpha}")
    if alpha > ALPHA_MAX:
        raise DomainError(f"aspect ratio {alpha} too close to 1 (annulus vanishes); max {ALPHA_MAX}")
    return alpha


@dataclass(frozen=True)
class ChannelGeometry:
    """Annular channel: absorbing inner circle d0, reflecting outer circle D0,
    release radius r0, diffusion coefficient D.  Lengths in m, D in m^2/s."""

    d0: float
    D0: float
    r0: float
    D: float

    def __post_init__(self):
        if not (0.0 < self.d0 < self.r0 < self.D0):
            raise DomainError(
                f"need 0 < d0 < r0 < D0, got d0={self.d0}, r0={self.r0}, D0={self.D0}"
            )
        if not self.D > 0.0:
            raise DomainError(f"diffusion coefficient must be positive, got {self.D}")
        check_alpha(self.d0 / self.D0)

    @property
    def alpha(self) -> float:
        return self.d0 / self.D0

    @property
    def channel_length(self) -> float:
        """Radial extent D0 - d0 of the annulus."""
        return self.D0 - self.d0

    def scaled(self, s: float) -> "ChannelGeometry":
        """All lengths multiplied by s, D unchanged (diffusive time scales by s^2)."""
        return ChannelGeometry(self.d0 * s, self.D0 * s, self.r0 * s, self.D)


@dataclass(frozen=True)
class Geometry3D(ChannelGeometry):
    """Cylindrical channel: the 2-D annulus swept along z with a receiver band
    of height h; release at height h0."""

    h: float = 0.0
    h0: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        if not (0.0 < self.h0 < self.h):
            raise DomainError(f"need 0 < h0 < h, got h0={self.h0}, h={self.h}")

    @property
    def plane(self) -> ChannelGeometry:
        return ChannelGeometry(self.d0, self.D0, self.r0, self.D)
