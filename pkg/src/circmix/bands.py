"""Residual-bootstrap simultaneous confidence bands with bisection calibration.

For one categorical level the band is built on a grid of continuous-covariate
values. Bootstrap deviations ``Delta[b, j] = wrap(m*_b(x_j) - m_hat(x_j))`` are
turned into per-point empirical quantile envelopes, and the pointwise level
``alpha'`` is tuned between ``alpha/G`` and ``alpha`` so that the fraction of
replicates lying inside the envelope at every grid point is close to
``1 - alpha``.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from circmix.bandwidth import centered_residuals, resample_indices
from circmix.circ_core import wrap_pi
from circmix.estimator import UNDEFINED_NORM_TOL, Method, MixedSample, fit_design, predict_points
from circmix.kernels import DEFAULT_SPEC, Bandwidths, KernelSpec, kernel_matrix

# inverse of the empirical CDF: the ceil(Bq)-th order statistic. Interpolating
# conventions ("linear") always cut off each column's extremes, which caps the
# simultaneous coverage of the alpha/G envelope well below 1 - alpha.
QUANTILE_METHOD = "inverted_cdf"
DROP_WARN_FRACTION = 0.05
DROP_ABORT_FRACTION = 0.20


class CalibrationStatus(str, enum.Enum):
    """Which branch of the calibration produced ``alpha_final``.

    ``BonferroniSufficient`` is returned when even ``alpha/G`` undercovers, so
    no level in ``[alpha/G, alpha]`` can do better and the most conservative
    one is kept.
    """

    BONFERRONI_SUFFICIENT = "BonferroniSufficient"
    NOMINAL_SUFFICIENT = "NominalSufficient"
    BISECTED = "Bisected"
    MAX_ITER_REACHED = "MaxIterReached"


class BandAbortError(RuntimeError):
    """Too many bootstrap replicates had an undefined refit on the grid."""


class DroppedReplicateWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Calibration:
    alpha_final: float
    p_in: float
    status: CalibrationStatus
    iterations: int


@dataclass(frozen=True)
class BandResult:
    """Simultaneous band for one level.

    Offsets are signed radians relative to ``center``; ``lower`` / ``upper``
    give the wrapped angular bounds.
    """

    level: int
    grid: np.ndarray
    center: np.ndarray
    lower_offset: np.ndarray
    upper_offset: np.ndarray
    alpha: float
    alpha_final: float
    p_in_achieved: float
    calibration_status: CalibrationStatus
    iterations: int
    B: int
    n_dropped: int

    @property
    def lower(self) -> np.ndarray:
        return wrap_pi(self.center + self.lower_offset)

    @property
    def upper(self) -> np.ndarray:
        return wrap_pi(self.center + self.upper_offset)

    def contains(self, angles) -> np.ndarray:
        """Whether each angle lies inside the band at its grid point."""
        d = wrap_pi(np.asarray(angles, dtype=float) - self.center)
        return (d >= self.lower_offset) & (d <= self.upper_offset)


def envelope(deltas, alpha_prime: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-column empirical ``alpha'/2`` and ``1 - alpha'/2`` quantiles."""
    deltas = np.asarray(deltas, dtype=float)
    lo, hi = np.quantile(deltas, [alpha_prime / 2.0, 1.0 - alpha_prime / 2.0], axis=0, method=QUANTILE_METHOD)
    return lo, hi


def p_in(deltas, alpha_prime: float) -> float:
    """Fraction of replicates (rows) inside the envelope at every column."""
    deltas = np.asarray(deltas, dtype=float)
    lo, hi = envelope(deltas, alpha_prime)
    inside = np.all((deltas >= lo) & (deltas <= hi), axis=1)
    return float(inside.mean())


def calibrate_alpha(deltas, alpha: float = 0.05, delta_tol: float = 0.005, max_iter: int = 30) -> Calibration:
    """Choose the pointwise level for a ``1 - alpha`` simultaneous envelope.

    Parameters
    ----------
    deltas : (B, G) array
        Bootstrap deviations, one row per replicate.
    alpha : float
        Target simultaneous non-coverage.
    delta_tol : float
        Bisection stops once the coverage is within this of ``1 - alpha``.
    max_iter : int
        Bisection step budget. On exhaustion the lower (conservative) end of
        the bracket is returned.
    """
    deltas = np.asarray(deltas, dtype=float)
    if deltas.ndim != 2 or deltas.shape[0] < 2 or deltas.shape[1] < 1:
        raise ValueError(f"deltas must be (B>=2, G>=1), got {deltas.shape}")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    target = 1.0 - alpha
    lo, hi = alpha / deltas.shape[1], alpha
    p_lo = p_in(deltas, lo)
    if p_lo < target:
        return Calibration(lo, p_lo, CalibrationStatus.BONFERRONI_SUFFICIENT, 0)
    p_hi = p_in(deltas, hi)
    if p_hi >= target:
        return Calibration(hi, p_hi, CalibrationStatus.NOMINAL_SUFFICIENT, 0)
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        p_mid = p_in(deltas, mid)
        if abs(p_mid - target) < delta_tol:
            return Calibration(mid, p_mid, CalibrationStatus.BISECTED, it)
        if p_mid >= target:
            lo, p_lo = mid, p_mid
        else:
            hi = mid
    return Calibration(lo, p_lo, CalibrationStatus.MAX_ITER_REACHED, max_iter)


def _grid_eval(sample: MixedSample, level: int, grid) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(grid, dtype=float).reshape(-1, sample.k)
    z = np.tile(np.atleast_1d(np.asarray(level, dtype=int)), (x.shape[0], 1)).reshape(x.shape[0], sample.p)
    return x, z


def bootstrap_deltas(sample: MixedSample, H: Bandwidths, level, grid, B: int = 200, seed=0,
                     spec: KernelSpec = DEFAULT_SPEC, method="NW") -> tuple[np.ndarray, np.ndarray]:
    """Bootstrap deviations of refits from the fit on a grid.

    Returns ``(deltas, kept)``: ``deltas`` is ``(B_kept, G)`` in (-pi, pi] and
    ``kept`` the boolean mask of replicates whose refit was defined at every
    grid point. Replicate ``b`` resamples centered residuals over all rows
    with indices drawn from ``(seed, b)``.
    """
    method = Method(method)
    if B < 1:
        raise ValueError("B must be >= 1")
    x_eval, z_eval = _grid_eval(sample, level, grid)
    center = predict_points(sample, H, x_eval, z_eval, spec, method).m_hat
    fitted = fit_design(sample, H, spec, method).m_hat
    eps = centered_residuals(sample, fitted)
    idx = resample_indices(sample.n, B, seed)
    pseudo = wrap_pi(fitted[:, None] + eps[idx].T)  # (n, B)

    refit = np.full((x_eval.shape[0], B), np.nan)
    if method is Method.NW:
        K = kernel_matrix(x_eval, z_eval, sample.X, sample.Z, sample.n_levels, H, spec)
        W = K / K.sum(axis=1, keepdims=True)
        m1, m2 = W @ np.sin(pseudo), W @ np.cos(pseudo)
        refit = np.where(np.hypot(m1, m2) >= UNDEFINED_NORM_TOL, np.arctan2(m1, m2), np.nan)
    else:
        for b in range(B):
            try:
                refit[:, b] = predict_points(sample.with_theta(pseudo[:, b]), H, x_eval, z_eval, spec, method).m_hat
            except ValueError:
                pass
    kept = ~np.any(np.isnan(refit), axis=0)
    deltas = wrap_pi(np.where(kept[None, :], refit, 0.0) - center[:, None]).T[kept]
    return deltas, kept


def simultaneous_band(sample: MixedSample, H: Bandwidths, level, grid, B: int = 200, alpha: float = 0.05,
                      delta_tol: float = 0.005, max_iter: int = 30, seed=0, spec: KernelSpec = DEFAULT_SPEC,
                      method="NW") -> BandResult:
    """Calibrated simultaneous bootstrap band for one level over ``grid``.

    Replicates with an undefined refit anywhere on the grid are dropped; a
    warning is issued above 5% dropped and :class:`BandAbortError` is raised
    above 20%.
    """
    x_eval, z_eval = _grid_eval(sample, level, grid)
    center = predict_points(sample, H, x_eval, z_eval, spec, method).m_hat
    deltas, kept = bootstrap_deltas(sample, H, level, grid, B, seed, spec, method)
    dropped = int(B - kept.sum())
    if dropped > DROP_ABORT_FRACTION * B:
        raise BandAbortError(f"{dropped} of {B} bootstrap replicates had undefined refits on the grid")
    if dropped > DROP_WARN_FRACTION * B:
        warnings.warn(f"dropped {dropped} of {B} bootstrap replicates with undefined refits",
                      DroppedReplicateWarning, stacklevel=2)
    cal = calibrate_alpha(deltas, alpha, delta_tol, max_iter)
    lo, hi = envelope(deltas, cal.alpha_final)
    lvl = int(np.atleast_1d(level)[0]) if np.size(level) else -1
    return BandResult(
        level=lvl,
        grid=x_eval[:, 0] if sample.k == 1 else x_eval,
        center=center,
        lower_offset=lo,
        upper_offset=hi,
        alpha=alpha,
        alpha_final=cal.alpha_final,
        p_in_achieved=cal.p_in,
        calibration_status=cal.status,
        iterations=cal.iterations,
        B=B,
        n_dropped=dropped,
    )


__all__ = [
    "QUANTILE_METHOD",
    "BandAbortError",
    "BandResult",
    "Calibration",
    "CalibrationStatus",
    "DroppedReplicateWarning",
    "bootstrap_deltas",
    "calibrate_alpha",
    "envelope",
    "p_in",
    "simultaneous_band",
]
