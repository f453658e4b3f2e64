"""Mixed-covariate circular regression: Nadaraya-Watson and local-linear fits.

The regression function is estimated through its Cartesian components,
``m1 = E[sin Theta | x, z]`` and ``m2 = E[cos Theta | x, z]``, and recombined as
``atan2(m1, m2)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from circmix.circ_core import wrap_pi
from circmix.kernels import (
    DEFAULT_SPEC,
    Bandwidths,
    DegenerateNeighborhoodError,
    KernelSpec,
    kernel_matrix,
    mass_floor,
    product_weights,
)

# |(m1, m2)| below this has no usable direction
UNDEFINED_NORM_TOL = 1e-10
# condition-number ceiling for the scaled local-linear normal equations
LL_CONDITION_MAX = 1e8


class Method(str, enum.Enum):
    NW = "NW"
    LL = "LL"


class UndefinedDirectionError(ValueError):
    def __init__(self, x=(), z=(), norm: float = 0.0):
        self.x, self.z, self.norm = tuple(np.atleast_1d(x).tolist()), tuple(np.atleast_1d(z).tolist()), norm
        super().__init__(f"fitted resultant is numerically zero at x={self.x}, z={self.z} (|m|={norm:.3g})")


class SingularFitError(ValueError):
    def __init__(self, x=(), z=(), cond: float = np.inf):
        self.x, self.z, self.cond = tuple(np.atleast_1d(x).tolist()), tuple(np.atleast_1d(z).tolist()), cond
        super().__init__(f"local-linear design is singular at x={self.x}, z={self.z} (cond={cond:.3g})")


@dataclass(frozen=True)
class MixedSample:
    """``n`` observations of continuous covariates ``X`` (n, k), level indices
    ``Z`` (n, p) and angular responses ``theta`` (n,).

    ``n_levels[l]`` is the number of levels of categorical column ``l``;
    ``level_names`` optionally maps indices back to labels.
    """

    X: np.ndarray
    Z: np.ndarray
    theta: np.ndarray
    n_levels: tuple[int, ...]
    level_names: tuple[tuple[str, ...], ...] = field(default=())

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        theta = np.asarray(self.theta, dtype=float).ravel()
        n = theta.size
        Z = np.asarray(self.Z)
        if Z.size == 0:
            Z = np.zeros((n, 0), dtype=int)
        elif Z.ndim == 1:
            Z = Z[:, None]
        Z = Z.astype(int)
        n_levels = tuple(int(c) for c in np.atleast_1d(self.n_levels)) if np.size(self.n_levels) else ()
        if n < 1:
            raise ValueError("sample must contain at least one observation")
        if X.shape[0] != n or Z.shape[0] != n:
            raise ValueError(f"row mismatch: X {X.shape}, Z {Z.shape}, theta ({n},)")
        if len(n_levels) != Z.shape[1]:
            raise ValueError("n_levels must give one level count per categorical column")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(theta))):
            raise ValueError("sample contains non-finite values")
        for l, c in enumerate(n_levels):
            if c < 1 or Z[:, l].min(initial=0) < 0 or Z[:, l].max(initial=0) >= c:
                raise ValueError(f"level indices in column {l} must lie in [0, {c})")
        for arr in (X, Z, theta):
            arr.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "n_levels", n_levels)

    @property
    def n(self) -> int:
        return self.theta.size

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @property
    def p(self) -> int:
        return self.Z.shape[1]

    def subset(self, rows) -> "MixedSample":
        return MixedSample(self.X[rows], self.Z[rows], self.theta[rows], self.n_levels, self.level_names)

    def with_theta(self, theta) -> "MixedSample":
        return MixedSample(self.X, self.Z, theta, self.n_levels, self.level_names)


@dataclass
class FitResult:
    """Fitted angles and Cartesian components at a list of evaluation points.

    ``method`` holds the estimator actually used at each point; it differs from
    the requested one only when local-linear fell back to NW.
    """

    x: np.ndarray
    z: np.ndarray
    m_hat: np.ndarray
    m1_hat: np.ndarray
    m2_hat: np.ndarray
    method: np.ndarray
    bandwidths: Bandwidths

    def __len__(self):
        return self.m_hat.size


def _as_point(sample: MixedSample, x, z):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=int)) if np.size(z) else np.zeros(0, int)
    if x.size != sample.k or z.size != sample.p:
        raise ValueError(f"point dimensions ({x.size}, {z.size}) do not match sample (k={sample.k}, p={sample.p})")
    return x, z


def _direction(m1: float, m2: float, x, z) -> float:
    norm = float(np.hypot(m1, m2))
    if norm < UNDEFINED_NORM_TOL:
        raise UndefinedDirectionError(x, z, norm)
    return float(np.arctan2(m1, m2))


def fit_point_nw(sample: MixedSample, H: Bandwidths, x, z=(), spec: KernelSpec = DEFAULT_SPEC):
    """Nadaraya-Watson fit at one point; returns ``(angle, m1, m2)``."""
    x, z = _as_point(sample, x, z)
    w = product_weights(x, z, sample, H, spec)
    m1 = float((w * np.sin(sample.theta)).sum())
    m2 = float((w * np.cos(sample.theta)).sum())
    return _direction(m1, m2, x, z), m1, m2


def _ll_intercepts(weights, dX, s, c, x, z):
    """Weighted least-squares intercepts for responses ``s`` and ``c``.

    ``dX`` is the (n, k) matrix of scaled offsets ``(X_i - x) / h``.
    """
    D = np.column_stack([np.ones(dX.shape[0]), dX])
    DW = D * weights[:, None]
    A = DW.T @ D
    cond = np.linalg.cond(A)
    if not cond <= LL_CONDITION_MAX:
        raise SingularFitError(x, z, float(cond))
    coef = np.linalg.solve(A, DW.T @ np.column_stack([s, c]))
    return float(coef[0, 0]), float(coef[0, 1])


def fit_point_ll(sample: MixedSample, H: Bandwidths, x, z=(), spec: KernelSpec = DEFAULT_SPEC):
    """Local-linear fit at one point; returns ``(angle, m1, m2)``.

    Linear terms enter only for the continuous covariates; categorical
    covariates act through the kernel weights.
    """
    x, z = _as_point(sample, x, z)
    w = product_weights(x, z, sample, H, spec)
    dX = (sample.X - x[None, :]) / np.asarray(H.h)[None, :]
    m1, m2 = _ll_intercepts(w, dX, np.sin(sample.theta), np.cos(sample.theta), x, z)
    return _direction(m1, m2, x, z), m1, m2


def _fit_point(sample, H, x, z, spec, method: Method, fallback: bool):
    if method is Method.NW:
        return fit_point_nw(sample, H, x, z, spec), Method.NW
    try:
        return fit_point_ll(sample, H, x, z, spec), Method.LL
    except SingularFitError:
        if not fallback:
            raise
        return fit_point_nw(sample, H, x, z, spec), Method.NW


def _grid_points(sample: MixedSample, grid, levels):
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("evaluation grid is empty")
    grid = grid.reshape(-1, sample.k) if grid.ndim < 2 else grid
    if sample.p == 0:
        levels = [()]
    else:
        levels = [np.atleast_1d(np.asarray(z, dtype=int)) for z in levels]
        if not levels:
            raise ValueError("at least one categorical level is required")
    xs, zs = [], []
    for z in levels:
        for x in grid:
            xs.append(x)
            zs.append(z)
    return np.array(xs, dtype=float).reshape(-1, sample.k), np.array(zs, dtype=int).reshape(-1, sample.p)


def predict_points(sample: MixedSample, H: Bandwidths, x_eval, z_eval, spec: KernelSpec = DEFAULT_SPEC,
                   method="NW", fallback: bool = False) -> FitResult:
    """Fit at each row of ``x_eval`` / ``z_eval``.

    The NW path computes every kernel row in one matrix and yields the same
    numbers as calling :func:`fit_point_nw` row by row.
    """
    method = Method(method)
    x_eval = np.asarray(x_eval, dtype=float).reshape(-1, sample.k)
    z_eval = np.asarray(z_eval, dtype=int).reshape(x_eval.shape[0], sample.p)
    m = x_eval.shape[0]
    m1 = np.empty(m)
    m2 = np.empty(m)
    used = np.empty(m, dtype=object)
    if method is Method.NW:
        K = kernel_matrix(x_eval, z_eval, sample.X, sample.Z, sample.n_levels, H, spec)
        floor = mass_floor(sample.n, sample.n_levels, H, spec)
        s, c = np.sin(sample.theta), np.cos(sample.theta)
        for r in range(m):
            mass = K[r].sum()
            if not mass >= floor:
                raise DegenerateNeighborhoodError(x_eval[r], z_eval[r], float(mass))
            w = K[r] / mass
            m1[r] = (w * s).sum()
            m2[r] = (w * c).sum()
            _direction(m1[r], m2[r], x_eval[r], z_eval[r])
        used[:] = Method.NW.value
    else:
        for r in range(m):
            (_, m1[r], m2[r]), u = _fit_point(sample, H, x_eval[r], z_eval[r], spec, method, fallback)
            used[r] = u.value
    return FitResult(x_eval, z_eval, np.arctan2(m1, m2), m1, m2, used, H)


def predict_grid(sample: MixedSample, H: Bandwidths, grid, levels=(), spec: KernelSpec = DEFAULT_SPEC,
                 method="NW", fallback: bool = False) -> FitResult:
    """Fit on the Cartesian product of ``levels`` and ``grid``.

    Records are ordered level-major: all grid points for the first level,
    then all grid points for the second, and so on.
    """
    x_eval, z_eval = _grid_points(sample, grid, levels)
    return predict_points(sample, H, x_eval, z_eval, spec, method, fallback)


def fit_design(sample: MixedSample, H: Bandwidths, spec: KernelSpec = DEFAULT_SPEC, method="NW",
               fallback: bool = False) -> FitResult:
    """Fit at the sample's own design points."""
    return predict_points(sample, H, sample.X, sample.Z, spec, method, fallback)


def loo_predictions(sample: MixedSample, H: Bandwidths, spec: KernelSpec = DEFAULT_SPEC, method="NW") -> np.ndarray:
    """Leave-one-out fitted angles at each design point.

    Entry ``i`` is the fit at ``(X_i, Z_i)`` from the sample without row ``i``.
    Entries that cannot be computed (no kernel mass, undefined direction,
    singular local-linear design) are NaN.
    """
    method = Method(method)
    n = sample.n
    if n < 2:
        raise ValueError("leave-one-out needs n >= 2")
    K = kernel_matrix(sample.X, sample.Z, sample.X, sample.Z, sample.n_levels, H, spec)
    np.fill_diagonal(K, 0.0)
    floor = mass_floor(n - 1, sample.n_levels, H, spec)
    s, c = np.sin(sample.theta), np.cos(sample.theta)
    out = np.full(n, np.nan)
    mass = K.sum(axis=1)
    ok = mass >= floor
    if method is Method.NW:
        W = K[ok] / mass[ok, None]
        m1, m2 = W @ s, W @ c
        good = np.hypot(m1, m2) >= UNDEFINED_NORM_TOL
        vals = np.where(good, np.arctan2(m1, m2), np.nan)
        out[ok] = vals
        return out
    hs = np.asarray(H.h)
    for i in np.flatnonzero(ok):
        keep = np.arange(n) != i
        dX = (sample.X[keep] - sample.X[i][None, :]) / hs[None, :]
        try:
            m1, m2 = _ll_intercepts(K[i, keep] / mass[i], dX, s[keep], c[keep], sample.X[i], sample.Z[i])
            out[i] = _direction(m1, m2, sample.X[i], sample.Z[i])
        except (SingularFitError, UndefinedDirectionError):
            pass
    return out


def rotate(sample: MixedSample, angle: float) -> MixedSample:
    """Sample with every response rotated by ``angle`` and re-wrapped."""
    return sample.with_theta(wrap_pi(sample.theta + angle))


__all__ = [
    "FitResult",
    "Method",
    "MixedSample",
    "SingularFitError",
    "UndefinedDirectionError",
    "fit_design",
    "fit_point_ll",
    "fit_point_nw",
    "loo_predictions",
    "predict_grid",
    "predict_points",
    "rotate",
]
