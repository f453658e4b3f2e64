"""Bandwidth selection: leave-one-out CV, residual bootstrap, and rule-of-thumb.

CV and bootstrap selectors scan a Cartesian grid of candidate bandwidths
(geometric in each ``h_j``, linear in each ``lambda_l``) and can optionally
refine the winner by golden-section search inside its grid cell.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from circmix.circ_core import circ_mean, wrap_pi
from circmix.estimator import (
    UNDEFINED_NORM_TOL,
    Method,
    MixedSample,
    fit_design,
    loo_predictions,
)
from circmix.kernels import DEFAULT_SPEC, Bandwidths, KernelSpec, eval_continuous, mass_floor

MAX_LOSS = 2.0
GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class SelectionInfeasibleError(RuntimeError):
    """The selection criterion is undefined at every candidate."""


class BoundaryHitWarning(UserWarning):
    """A selector returned a continuous bandwidth on the edge of its grid."""


class LambdaClampWarning(UserWarning):
    pass


class DegenerateRefitWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SearchSpec:
    """Candidate grids for CV / bootstrap selection.

    ``h_values[j]`` and ``lam_values[l]`` are sorted 1-d arrays of candidates.
    Use :meth:`default_for` to build the standard grids from a sample.
    """

    h_values: tuple
    lam_values: tuple = ()
    refine: bool = False
    seed: int = 0

    def __post_init__(self):
        hv = tuple(np.sort(np.atleast_1d(np.asarray(v, dtype=float))) for v in self.h_values)
        lv = tuple(np.sort(np.atleast_1d(np.asarray(v, dtype=float))) for v in self.lam_values)
        if not hv or any(v.size == 0 for v in hv) or any(v.size == 0 for v in lv):
            raise ValueError("search grids must be nonempty")
        if any(v[0] <= 0 for v in hv):
            raise ValueError("continuous bandwidth candidates must be positive")
        if any(v[0] < 0 or v[-1] > 1 for v in lv):
            raise ValueError("categorical bandwidth candidates must lie in [0, 1]")
        object.__setattr__(self, "h_values", hv)
        object.__setattr__(self, "lam_values", lv)
        object.__setattr__(self, "seed", int(self.seed))

    @classmethod
    def default_for(cls, sample: MixedSample, h_count: int = 20, lam_count: int = 11,
                    h_range: tuple[float, float] = (0.05, 2.0), refine: bool = False, seed: int = 0) -> "SearchSpec":
        """Geometric h-grid over ``h_range`` times each covariate's SD, and a
        linear lambda-grid over ``[0, (c-1)/c]``."""
        sd = np.std(sample.X, axis=0, ddof=1) if sample.n > 1 else np.ones(sample.k)
        if np.any(sd <= 0):
            raise ValueError("continuous covariates need positive spread to build a default grid")
        hv = tuple(np.geomspace(h_range[0] * s, h_range[1] * s, h_count) for s in sd)
        lv = tuple(np.linspace(0.0, (c - 1) / c, lam_count) for c in sample.n_levels)
        return cls(hv, lv, refine, seed)

    def candidates(self) -> list[Bandwidths]:
        out = []
        for combo in itertools.product(*self.h_values, *self.lam_values):
            k = len(self.h_values)
            out.append(Bandwidths(combo[:k], combo[k:]))
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(v.size for v in self.h_values + self.lam_values)

    def to_dict(self) -> dict:
        return {
            "h_values": [v.tolist() for v in self.h_values],
            "lambda_values": [v.tolist() for v in self.lam_values],
            "refine": self.refine,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class RotConstants:
    c_h: float = 1.06
    c_lambda: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if min(self.c_h, self.c_lambda, self.gamma) <= 0:
            raise ValueError("rule-of-thumb constants must be positive")


class KernelCache:
    """Per-coordinate kernel factors at the design points, cached by bandwidth.

    Products of cached factors reproduce :func:`circmix.kernels.kernel_matrix`
    evaluated at ``(sample.X, sample.Z)``.
    """

    def __init__(self, sample: MixedSample, spec: KernelSpec = DEFAULT_SPEC):
        self.sample = sample
        self.spec = spec
        self._diff = [sample.X[:, j, None] - sample.X[None, :, j] for j in range(sample.k)]
        self._match = [sample.Z[:, l, None] == sample.Z[None, :, l] for l in range(sample.p)]
        self._cont: dict = {}
        self._cat: dict = {}

    def continuous(self, j: int, h: float) -> np.ndarray:
        key = (j, h)
        if key not in self._cont:
            self._cont[key] = eval_continuous(self.spec.continuous_kind, self._diff[j] / h) / h
        return self._cont[key]

    def categorical(self, l: int, lam: float) -> np.ndarray:
        key = (l, lam)
        if key not in self._cat:
            c = self.sample.n_levels[l]
            self._cat[key] = np.where(self._match[l], 1.0 - lam, lam / max(c - 1, 1))
        return self._cat[key]

    def matrix(self, H: Bandwidths) -> np.ndarray:
        K = np.ones((self.sample.n, self.sample.n))
        for j, h in enumerate(H.h):
            K = K * self.continuous(j, h)
        for l, lam in enumerate(H.lam):
            K = K * self.categorical(l, lam)
        return K


def _nw_rows(K: np.ndarray, floor: float, S: np.ndarray, C: np.ndarray):
    """NW components for each row of ``K`` and each column of ``S`` / ``C``.

    Returns fitted angles with NaN where the row mass is below ``floor`` or the
    resultant is numerically zero.
    """
    mass = K.sum(axis=1)
    ok = mass >= floor
    safe = np.where(ok, mass, 1.0)
    W = K / safe[:, None]
    m1, m2 = W @ S, W @ C
    fitted = np.arctan2(m1, m2)
    bad = (np.hypot(m1, m2) < UNDEFINED_NORM_TOL) | ~ok.reshape((-1,) + (1,) * (np.ndim(m1) - 1))
    return np.where(bad, np.nan, fitted)


def _loss_with_penalty(target, fitted):
    loss = 1.0 - np.cos(target - fitted)
    flagged = np.isnan(loss)
    return np.where(flagged, MAX_LOSS, loss), int(flagged.sum())


def cv_loss(sample: MixedSample, H: Bandwidths, spec: KernelSpec = DEFAULT_SPEC, method="NW") -> float:
    """Mean leave-one-out cosine loss; unpredictable rows count as loss 2."""
    if sample.n < 2:
        raise ValueError("cross-validation needs n >= 2")
    pred = loo_predictions(sample, H, spec, method)
    if np.all(np.isnan(pred)):
        raise SelectionInfeasibleError(f"no leave-one-out prediction is defined at H={H}")
    loss, _ = _loss_with_penalty(sample.theta, pred)
    return float(loss.mean())


def _cv_loss_cached(cache: KernelCache, H: Bandwidths, method: Method) -> float:
    sample = cache.sample
    if method is not Method.NW:
        return cv_loss(sample, H, cache.spec, method)
    K = cache.matrix(H).copy()
    np.fill_diagonal(K, 0.0)
    pred = _nw_rows(K, mass_floor(sample.n - 1, sample.n_levels, H, cache.spec),
                    np.sin(sample.theta), np.cos(sample.theta))
    if np.all(np.isnan(pred)):
        return np.nan
    return float(_loss_with_penalty(sample.theta, pred)[0].mean())


def _golden(f, lo: float, hi: float, iters: int = 20):
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def _refine(criterion, best: Bandwidths, best_val: float, search: SearchSpec):
    """One coordinate-wise golden-section pass inside the winning grid cell."""
    h, lam = list(best.h), list(best.lam)
    for j, grid in enumerate(search.h_values):
        i = int(np.searchsorted(grid, h[j]))
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
        if hi <= lo:
            continue

        def f(logh, j=j):
            trial = h.copy()
            trial[j] = float(np.exp(logh))
            v = criterion(Bandwidths(trial, lam))
            return np.inf if np.isnan(v) else v

        x, v = _golden(f, np.log(lo), np.log(hi))
        if v < best_val:
            h[j], best_val = float(np.exp(x)), v
    for l, grid in enumerate(search.lam_values):
        i = int(np.searchsorted(grid, lam[l]))
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
        if hi <= lo:
            continue

        def f(x, l=l):
            trial = lam.copy()
            trial[l] = float(x)
            v = criterion(Bandwidths(h, trial))
            return np.inf if np.isnan(v) else v

        x, v = _golden(f, lo, hi)
        if v < best_val:
            lam[l], best_val = float(x), v
    return Bandwidths(h, lam), best_val


def _check_boundary(H: Bandwidths, search: SearchSpec, who: str):
    for j, grid in enumerate(search.h_values):
        if grid.size > 1 and (H.h[j] <= grid[0] or H.h[j] >= grid[-1]):
            warnings.warn(f"{who}: h[{j}]={H.h[j]:.4g} is on the grid boundary "
                          f"[{grid[0]:.4g}, {grid[-1]:.4g}]", BoundaryHitWarning, stacklevel=3)


def scan(criterion, search: SearchSpec):
    """Evaluate ``criterion`` on every grid candidate.

    Returns ``(candidates, values)``; NaN marks infeasible candidates.
    """
    cands = search.candidates()
    vals = np.array([criterion(H) for H in cands], dtype=float)
    return cands, vals


def _minimize(criterion, search: SearchSpec, who: str) -> Bandwidths:
    cands, vals = scan(criterion, search)
    if np.all(np.isnan(vals)):
        raise SelectionInfeasibleError(f"{who}: criterion undefined on the whole grid")
    i = int(np.nanargmin(vals))
    best, best_val = cands[i], vals[i]
    if search.refine:
        best, best_val = _refine(criterion, best, best_val, search)
    _check_boundary(best, search, who)
    return best


def select_cv(sample: MixedSample, search: SearchSpec | None = None, spec: KernelSpec = DEFAULT_SPEC,
              method="NW") -> Bandwidths:
    """Bandwidth minimizing the leave-one-out cosine loss."""
    method = Method(method)
    search = search or SearchSpec.default_for(sample)
    cache = KernelCache(sample, spec)
    return _minimize(lambda H: _cv_loss_cached(cache, H, method), search, "select_cv")


def select_rot(sample: MixedSample, constants: RotConstants = RotConstants()) -> Bandwidths:
    """Closed-form rule-of-thumb bandwidths.

    ``h_j = c_h * sd(X_j) * n^(-1/5)`` and
    ``lambda_l = c_lambda * c_l^(-gamma) * n^(-1/5)``, with lambda clamped to
    ``(c_l - 1)/c_l``.
    """
    n = sample.n
    if n < 2:
        raise ValueError("rule-of-thumb needs n >= 2")
    rate = n ** (-0.2)
    sd = np.std(sample.X, axis=0, ddof=1)
    h = []
    for j, s in enumerate(sd):
        if not s > 0:
            raise ValueError(f"continuous covariate {j} has zero variance")
        h.append(constants.c_h * s * rate)
    lam = []
    for l, c in enumerate(sample.n_levels):
        v = constants.c_lambda * c ** (-constants.gamma) * rate
        cap = (c - 1) / c
        if v > cap:
            warnings.warn(f"lambda[{l}]={v:.4g} exceeds (c-1)/c={cap:.4g}; clamped", LambdaClampWarning, stacklevel=2)
            v = cap
        lam.append(v)
    return Bandwidths(h, lam)


def robust_rot_univariate(x) -> float:
    """``1.06 * min(sd, IQR/1.349) * n^(-1/5)`` for a single covariate."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("need at least two observations")
    q75, q25 = np.percentile(x, [75, 25])
    scale = min(np.std(x, ddof=1), (q75 - q25) / 1.349)
    if not scale > 0:
        raise ValueError("robust scale of the covariate is zero")
    return float(1.06 * scale * x.size ** (-0.2))


def centered_residuals(sample: MixedSample, fitted_at_design) -> np.ndarray:
    """Residuals ``wrap(theta - fitted)`` re-centered at their circular mean.

    Raises ``ValueError`` when the residual mean direction is undefined.
    """
    fitted = np.asarray(fitted_at_design, dtype=float)
    if fitted.shape != sample.theta.shape:
        raise ValueError("need one fitted value per design row")
    raw = wrap_pi(sample.theta - fitted)
    summary = circ_mean(raw)
    if not summary.defined:
        raise ValueError(f"residual mean direction undefined (R-bar={summary.resultant_length:.3g})")
    return wrap_pi(raw - summary.mean_direction)


def resample_indices(n: int, B: int, seed) -> np.ndarray:
    """``(B, n)`` bootstrap row indices; replicate ``b`` depends only on ``(seed, b)``.

    ``seed`` may be an int or a sequence of ints (e.g. a per-replicate seed).
    """
    base = [int(s) for s in np.atleast_1d(seed)]
    out = np.empty((B, n), dtype=np.int64)
    for b in range(B):
        out[b] = np.random.default_rng(base + [b]).integers(0, n, size=n)
    return out


class _BootstrapProblem:
    """Fixed pseudo-samples of Algorithm-style residual bootstrap, reused across candidates."""

    def __init__(self, sample, H0, H1, B, seed, spec, method, cache=None):
        if B < 1:
            raise ValueError("B must be >= 1")
        self.sample, self.spec, self.method = sample, spec, Method(method)
        self.cache = cache or KernelCache(sample, spec)
        pilot0 = self._design_fit(H0)
        pilot1 = pilot0 if H1 == H0 else self._design_fit(H1)
        self.reference = pilot1
        eps = centered_residuals(sample, pilot0)
        idx = resample_indices(sample.n, B, seed)
        self.pseudo = wrap_pi(pilot1[:, None] + eps[idx].T)  # (n, B)
        self.S, self.C = np.sin(self.pseudo), np.cos(self.pseudo)
        self.degenerate = 0

    def _design_fit(self, H):
        if self.method is Method.NW:
            fitted = _nw_rows(self.cache.matrix(H), mass_floor(self.sample.n, self.sample.n_levels, H, self.spec),
                              np.sin(self.sample.theta), np.cos(self.sample.theta))
            if np.any(np.isnan(fitted)):
                raise ValueError(f"pilot fit undefined at some design point for H={H}")
            return fitted
        return fit_design(self.sample, H, self.spec, self.method).m_hat

    def losses(self, H) -> np.ndarray:
        """(n, B) cosine losses between the reference fit and each refit."""
        sample = self.sample
        if self.method is Method.NW:
            refit = _nw_rows(self.cache.matrix(H), mass_floor(sample.n, sample.n_levels, H, self.spec), self.S, self.C)
        else:
            refit = np.full(self.pseudo.shape, np.nan)
            for b in range(self.pseudo.shape[1]):
                try:
                    refit[:, b] = fit_design(sample.with_theta(self.pseudo[:, b]), H, self.spec, self.method).m_hat
                except ValueError:
                    pass
        loss, flagged = _loss_with_penalty(self.reference[:, None], refit)
        self.degenerate += flagged
        return loss

    def risk(self, H) -> float:
        return float(self.losses(H).mean())


def bootstrap_risk(sample: MixedSample, H: Bandwidths, H0: Bandwidths, H1: Bandwidths, B: int = 100,
                   seed: int = 0, spec: KernelSpec = DEFAULT_SPEC, method="NW") -> float:
    """Residual-bootstrap estimate of the cosine-loss risk of bandwidth ``H``.

    Residuals come from the pilot ``H0`` fit; pseudo-responses are built
    around the pilot ``H1`` fit; the risk is the mean cosine loss between the
    ``H1`` fit and the refit with ``H``, averaged over design points and ``B``
    replicates. Refits undefined at a design point contribute loss 2.
    """
    prob = _BootstrapProblem(sample, H0, H1, B, seed, spec, method)
    value = prob.risk(H)
    if prob.degenerate:
        warnings.warn(f"{prob.degenerate} degenerate bootstrap refits counted as loss 2", DegenerateRefitWarning,
                      stacklevel=2)
    return value


def select_bootstrap(sample: MixedSample, B: int = 100, search: SearchSpec | None = None,
                     spec: KernelSpec = DEFAULT_SPEC, method="NW", pilot: Bandwidths | None = None) -> Bandwidths:
    """Bandwidth minimizing the bootstrap risk, with CV-selected pilots.

    The same resampled residual indices are used for every candidate.
    ``pilot`` overrides the CV pilot (used for both residuals and reference).
    """
    method = Method(method)
    search = search or SearchSpec.default_for(sample)
    cache = KernelCache(sample, spec)
    if pilot is None:
        pilot = _minimize(lambda H: _cv_loss_cached(cache, H, method), search, "select_bootstrap pilot")
    prob = _BootstrapProblem(sample, pilot, pilot, B, search.seed, spec, method, cache)
    best = _minimize(prob.risk, search, "select_bootstrap")
    if prob.degenerate:
        warnings.warn(f"{prob.degenerate} degenerate bootstrap refits counted as loss 2", DegenerateRefitWarning,
                      stacklevel=2)
    return best


__all__ = [
    "BoundaryHitWarning",
    "KernelCache",
    "RotConstants",
    "SearchSpec",
    "SelectionInfeasibleError",
    "bootstrap_risk",
    "centered_residuals",
    "cv_loss",
    "resample_indices",
    "robust_rot_univariate",
    "scan",
    "select_bootstrap",
    "select_cv",
    "select_rot",
]
