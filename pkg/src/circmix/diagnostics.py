"""Residual diagnostics: observational cosine loss, circular R^2, uniformity
tests, per-level circular summaries, and von Mises kernel density estimates."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import i0e

from circmix.circ_core import TWO_PI, circ_mean, wrap_2pi, wrap_pi

SERIES_TERMS = 10
MIN_RELIABLE_N = 8
SST_TOL = 1e-12
# candidate medians within this of the best objective count as tied
MEDIAN_TIE_TOL = 1e-12


class ApproximationWarning(UserWarning):
    """Asymptotic p-values used below the sample size where they are reliable."""


@dataclass(frozen=True)
class GofReport:
    case_obs: float
    case_obs_by_level: dict
    r2_circ: float
    r2_defined: bool
    n_by_level: dict

    def to_dict(self) -> dict:
        return {
            "case_obs": self.case_obs,
            "case_obs_by_level": dict(self.case_obs_by_level),
            "r2_circ": self.r2_circ if self.r2_defined else None,
            "r2_defined": self.r2_defined,
            "n_by_level": dict(self.n_by_level),
        }


@dataclass(frozen=True)
class UniformityResult:
    n: int
    rayleigh_rbar: float
    rayleigh_stat: float
    rayleigh_p: float
    watson_u2: float
    watson_p: float
    kuiper_v: float
    kuiper_p: float
    approximate: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class LevelSummary:
    n: int
    mean_direction: float
    resultant_length: float
    median: float
    q1: float
    q3: float


def _losses(theta, fitted) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    fitted = np.asarray(fitted, dtype=float)
    if theta.shape != fitted.shape:
        raise ValueError("need one fitted value per observation")
    return 1.0 - np.cos(theta - fitted)


def case_obs(theta, fitted, levels=None) -> tuple[float, dict, dict]:
    """Pooled and per-level mean cosine loss between responses and fits.

    Returns ``(pooled, by_level, n_by_level)``; the per-level dicts are empty
    when ``levels`` is None.
    """
    loss = _losses(theta, fitted)
    pooled = float(loss.mean())
    by, counts = {}, {}
    if levels is not None:
        levels = np.asarray(levels)
        for lv in np.unique(levels):
            mask = levels == lv
            key = lv.item() if hasattr(lv, "item") else lv
            by[key] = float(loss[mask].mean())
            counts[key] = int(mask.sum())
    return pooled, by, counts


def r2_circ(theta, fitted) -> tuple[float, bool]:
    """``1 - SSE/SST`` with cosine-loss sums; SST is taken about the mean direction.

    Returns ``(value, defined)``; ``value`` is NaN when SST is zero.
    """
    theta = np.asarray(theta, dtype=float)
    sse = _losses(theta, fitted).sum()
    # sum of 1 - cos(theta - mean) equals n(1 - Rbar), defined even if the mean is not
    rbar = np.hypot(np.sin(theta).mean(), np.cos(theta).mean())
    sst = theta.size * (1.0 - rbar)
    if sst <= SST_TOL * theta.size:
        return float("nan"), False
    return float(1.0 - sse / sst), True


def gof_report(theta, fitted, levels=None) -> GofReport:
    pooled, by, counts = case_obs(theta, fitted, levels)
    r2, ok = r2_circ(theta, fitted)
    return GofReport(pooled, by, r2, ok, counts)


def rayleigh(angles) -> tuple[float, float, float]:
    """Rayleigh test. Returns ``(Rbar, 2 n Rbar^2, p)``.

    The p-value uses ``Z = n Rbar^2`` with the second-order correction
    ``exp(-Z)[1 + (2Z - Z^2)/(4n) - (24Z - 132Z^2 + 76Z^3 - 9Z^4)/(288n^2)]``.
    """
    a = np.asarray(angles, dtype=float).ravel()
    n = a.size
    rbar = float(np.hypot(np.sin(a).mean(), np.cos(a).mean()))
    Z = n * rbar ** 2
    p = np.exp(-Z) * (1.0 + (2 * Z - Z ** 2) / (4 * n)
                      - (24 * Z - 132 * Z ** 2 + 76 * Z ** 3 - 9 * Z ** 4) / (288 * n ** 2))
    return rbar, 2.0 * Z, float(np.clip(p, 0.0, 1.0))


def _sorted_unit(angles) -> np.ndarray:
    return np.sort(wrap_2pi(np.asarray(angles, dtype=float).ravel()) / TWO_PI)


def watson_u2(angles) -> tuple[float, float]:
    """Watson's U^2 against the circular uniform and its asymptotic p-value."""
    u = _sorted_unit(angles)
    n = u.size
    i = np.arange(1, n + 1)
    u2 = np.sum((u - (2 * i - 1) / (2 * n)) ** 2) - n * (u.mean() - 0.5) ** 2 + 1.0 / (12 * n)
    ustar = (u2 - 0.1 / n + 0.1 / n ** 2) * (1.0 + 0.8 / n)
    k = np.arange(1, SERIES_TERMS + 1)
    p = 2.0 * np.sum((-1.0) ** (k - 1) * np.exp(-2.0 * k ** 2 * np.pi ** 2 * ustar))
    return float(u2), float(np.clip(p, 0.0, 1.0))


def kuiper(angles) -> tuple[float, float]:
    """Kuiper's ``V = D+ + D-`` against the circular uniform and its p-value."""
    u = _sorted_unit(angles)
    n = u.size
    i = np.arange(1, n + 1)
    v = float(np.max(i / n - u) + np.max(u - (i - 1) / n))
    sq = np.sqrt(n)
    lam = (sq + 0.155 + 0.24 / sq) * v
    if lam < 0.4:
        # series has not converged here; the tail probability is 1 to double precision
        return v, 1.0
    k = np.arange(1, SERIES_TERMS + 1)
    p = np.sum(2.0 * (4.0 * k ** 2 * lam ** 2 - 1.0) * np.exp(-2.0 * k ** 2 * lam ** 2))
    return v, float(np.clip(p, 0.0, 1.0))


def uniformity_tests(angles) -> UniformityResult:
    a = np.asarray(angles, dtype=float).ravel()
    if a.size < 2:
        raise ValueError("uniformity tests need at least 2 angles")
    if not np.all(np.isfinite(a)):
        raise ValueError("angles must be finite")
    approximate = a.size < MIN_RELIABLE_N
    if approximate:
        warnings.warn(f"n={a.size} < {MIN_RELIABLE_N}: asymptotic p-values are unreliable",
                      ApproximationWarning, stacklevel=2)
    rbar, rstat, rp = rayleigh(a)
    u2, wp = watson_u2(a)
    v, kp = kuiper(a)
    return UniformityResult(a.size, rbar, rstat, rp, u2, wp, v, kp, approximate)


def circular_median(angles) -> float:
    """Minimizer of the mean absolute circular deviation.

    Candidates are the observations and the circular midpoints between
    neighbours in sorted order. Tied candidates are averaged by their circular
    mean, so ``{-a, a}`` gives 0.
    """
    a = wrap_pi(np.asarray(angles, dtype=float).ravel())
    if a.size == 0:
        raise ValueError("median of an empty set")
    s = np.sort(a)
    gaps = np.diff(np.append(s, s[0] + TWO_PI))
    cand = np.concatenate([s, wrap_pi(s + gaps / 2.0)])
    obj = np.abs(wrap_pi(a[None, :] - cand[:, None])).mean(axis=1)
    tied = cand[obj <= obj.min() + MEDIAN_TIE_TOL]
    summary = circ_mean(tied)
    if not summary.defined:
        return float(tied[0])
    return float(summary.mean_direction)


def circular_quartiles(angles) -> tuple[float, float, float]:
    """``(q1, median, q3)`` as the median plus linear quantiles of the signed
    deviations from it."""
    a = np.asarray(angles, dtype=float).ravel()
    med = circular_median(a)
    d = wrap_pi(a - med)
    q1, q3 = np.quantile(d, [0.25, 0.75], method="linear")
    return float(wrap_pi(med + q1)), med, float(wrap_pi(med + q3))


def circ_summary_by_level(residuals, levels) -> dict:
    """Per-level mean direction, resultant length, median and quartiles.

    Levels with no observations never appear; pass ``expected`` levels via
    :func:`missing_levels` to flag them.
    """
    residuals = np.asarray(residuals, dtype=float).ravel()
    levels = np.asarray(levels).ravel()
    if residuals.shape != levels.shape:
        raise ValueError("need one level per residual")
    out = {}
    for lv in np.unique(levels):
        r = residuals[levels == lv]
        cs = circ_mean(r)
        q1, med, q3 = circular_quartiles(r)
        key = lv.item() if hasattr(lv, "item") else lv
        out[key] = LevelSummary(r.size, cs.mean_direction, cs.resultant_length, med, q1, q3)
    return out


def missing_levels(levels, expected) -> list:
    present = set(np.asarray(levels).ravel().tolist())
    return [lv for lv in expected if lv not in present]


def vm_kde(angles, concentration: float, grid) -> np.ndarray:
    """Average of von Mises densities centred at ``angles``, evaluated on ``grid``."""
    if not (np.isfinite(concentration) and concentration > 0):
        raise ValueError("concentration must be finite and positive")
    a = np.asarray(angles, dtype=float).ravel()
    g = np.asarray(grid, dtype=float)
    dens = np.exp(concentration * (np.cos(g[..., None] - a) - 1.0)).mean(axis=-1)
    return dens / (TWO_PI * i0e(concentration))


__all__ = [
    "ApproximationWarning",
    "GofReport",
    "LevelSummary",
    "UniformityResult",
    "case_obs",
    "circ_summary_by_level",
    "circular_median",
    "circular_quartiles",
    "gof_report",
    "kuiper",
    "missing_levels",
    "r2_circ",
    "rayleigh",
    "uniformity_tests",
    "vm_kde",
    "watson_u2",
]
