"""Free-energy densities, their derivatives, and convex-concave splits.

Both potentials expose the same small surface: ``f``, ``fprime``,
``fsecond``, the lower curvature bound ``alpha`` (every second derivative
stays above ``-alpha``), and a convex-concave split of ``fprime`` used by
the stabilized time steppers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["DoubleWell", "LogarithmicPotential", "make_potential", "parse_potential"]


@dataclass(frozen=True)
class DoubleWell:
    """Quartic two-phase potential K (1 - c^2)^2 with wells at +-1."""

    K: float = 1.0

    def __post_init__(self):
        if not self.K > 0:
            raise ValueError("K must be positive")

    @property
    def alpha(self) -> float:
        # fsecond(c) = 12 K c^2 - 4 K >= -4 K
        return 4.0 * self.K

    def f(self, c):
        c = np.asarray(c, dtype=float)
        return self.K * (1.0 - c**2) ** 2

    def fprime(self, c):
        # written as the sum of the split parts so the two agree bit-exactly
        c = np.asarray(c, dtype=float)
        return 4.0 * self.K * c**3 - 4.0 * self.K * c

    def fsecond(self, c):
        c = np.asarray(c, dtype=float)
        return 12.0 * self.K * c**2 - 4.0 * self.K

    def split_convex_concave(self, c):
        """fprime as (convex-part derivative, concave-part derivative)."""
        c = np.asarray(c, dtype=float)
        return 4.0 * self.K * c**3, -4.0 * self.K * c


@dataclass
class LogarithmicPotential:
    """Entropic potential with a destabilizing quadratic term.

    Finite only on (-1, 1); inputs are clamped to ``[-1 + delta, 1 - delta]``
    before evaluation, which keeps the solver total while preserving the
    curvature bound.  ``clamp_events`` counts how many samples were clamped,
    as a diagnostic that the run strayed toward the endpoints.
    """

    theta: float
    theta_c: float
    clamp_delta: float = 1e-6
    clamp_events: int = field(default=0, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 < self.theta < self.theta_c:
            raise ValueError("need 0 < theta < theta_c")
        if not 0 < self.clamp_delta < 1:
            raise ValueError("clamp_delta must lie in (0, 1)")

    @property
    def alpha(self) -> float:
        # entropy curvature theta / (1 - c^2) > 0, so fsecond >= -theta_c
        return self.theta_c

    def _clamp(self, c):
        c = np.asarray(c, dtype=float)
        lo, hi = -1.0 + self.clamp_delta, 1.0 - self.clamp_delta
        clipped = np.clip(c, lo, hi)
        self.clamp_events += int(np.count_nonzero(clipped != c))
        return clipped

    def f(self, c):
        c = self._clamp(c)
        entropy = (1.0 - c) * np.log(1.0 - c) + (1.0 + c) * np.log(1.0 + c)
        return 0.5 * self.theta * entropy - 0.5 * self.theta_c * c**2

    def fprime(self, c):
        c = self._clamp(c)
        return 0.5 * self.theta * np.log((1.0 + c) / (1.0 - c)) - self.theta_c * c

    def fsecond(self, c):
        c = self._clamp(c)
        return self.theta / (1.0 - c**2) - self.theta_c

    def split_convex_concave(self, c):
        c = self._clamp(c)
        vex = 0.5 * self.theta * np.log((1.0 + c) / (1.0 - c))
        return vex, -self.theta_c * c


def make_potential(kind: str, **params):
    kind = kind.lower()
    if kind in ("doublewell", "double-well", "dw"):
        return DoubleWell(**params)
    if kind in ("logarithmic", "log"):
        return LogarithmicPotential(**params)
    raise ValueError(f"unknown potential kind {kind!r}")


def parse_potential(spec: str):
    """Parse a compact description like ``doublewell:K=1`` or
    ``logarithmic:theta=0.8,theta_c=1``."""
    kind, _, rest = spec.partition(":")
    params = {}
    if rest:
        for item in rest.split(","):
            key, _, value = item.partition("=")
            if not value:
                raise ValueError(f"malformed potential parameter {item!r}")
            params[key.strip()] = float(value)
    return make_potential(kind.strip(), **params)
