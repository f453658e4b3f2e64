"""Angle arithmetic: wrapping, circular mean, cosine loss, signed differences.

All angles are in radians. Functions accept scalars or arrays and return the
same shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi

# R-bar below this is treated as "no mean direction"
UNDEFINED_RBAR_TOL = 1e-12


def _check_finite(theta):
    arr = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("angles must be finite")
    return arr


def wrap_pi(theta):
    """Wrap angles into the half-open interval (-pi, pi].

    ``wrap_pi(-pi) == pi``. Raises ``ValueError`` on non-finite input.
    """
    arr = _check_finite(theta)
    out = np.pi - np.mod(np.pi - arr, TWO_PI)
    # np.mod can return exactly 2*pi for tiny negative arguments
    out = np.where(out <= -np.pi, out + TWO_PI, out)
    if out.ndim == 0:
        return float(out)
    return out


def wrap_2pi(theta):
    """Wrap angles into [0, 2*pi)."""
    arr = _check_finite(theta)
    out = np.mod(arr, TWO_PI)
    out = np.where(out >= TWO_PI, out - TWO_PI, out)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class CircSummary:
    """Mean direction and mean resultant length of a sample of angles.

    ``mean_direction`` is NaN and ``defined`` is False when the resultant
    length is numerically zero (e.g. antipodal pairs).
    """

    mean_direction: float
    resultant_length: float
    n: int

    @property
    def defined(self) -> bool:
        return bool(np.isfinite(self.mean_direction))


def circ_mean(angles) -> CircSummary:
    arr = _check_finite(angles).ravel()
    if arr.size == 0:
        raise ValueError("circ_mean needs at least one angle")
    s = float(np.mean(np.sin(arr)))
    c = float(np.mean(np.cos(arr)))
    rbar = float(np.hypot(s, c))
    if rbar < UNDEFINED_RBAR_TOL:
        return CircSummary(float("nan"), rbar, arr.size)
    return CircSummary(float(np.arctan2(s, c)), min(rbar, 1.0), arr.size)


def cos_loss(a, b):
    """Cosine loss ``1 - cos(a - b)``, in [0, 2]."""
    out = 1.0 - np.cos(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    if np.ndim(out) == 0:
        return float(out)
    return out


def signed_diff(a, b):
    """Signed circular difference ``a - b`` wrapped to (-pi, pi]."""
    return wrap_pi(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
