"""Monte Carlo benchmark for the bandwidth selectors.

Phase I averages CASE over ``N1`` samples on a bandwidth grid to build a risk
surface and its minimizer (the oracle bandwidth). Phase II draws ``N2`` fresh
samples, runs each selector, and scores its choice on the Phase-I surface.

Also here: the R1/R2 regression functions with von Mises noise, von Mises
moments via Bessel-function ratios, and the leading-order bias/variance
approximation of the NW estimator used as a validation oracle.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from circmix.bandwidth import (
    BoundaryHitWarning,
    KernelCache,
    RotConstants,
    SearchSpec,
    _BootstrapProblem,
    _cv_loss_cached,
    _minimize,
    _nw_rows,
    select_rot,
)
from circmix.bands import simultaneous_band
from circmix.circ_core import wrap_2pi, wrap_pi
from circmix.estimator import Method, MixedSample, fit_design, predict_points
from circmix.kernels import DEFAULT_SPEC, Bandwidths, ContinuousKernel, KernelSpec, kernel_matrix, mass_floor

LEVELS = ("A", "B", "C")
REGRESSIONS = ("R1", "R2")
SELECTORS = ("CV", "Boot", "RoT")


def true_regression(regression_id: str, x, z):
    """Regression functions R1 and R2 on ``x`` in [0, 1] and ``z`` in {0,1,2} (A, B, C)."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z)
    if z.dtype.kind in "US":
        z = np.vectorize(LEVELS.index)(z)
    z = z.astype(int)
    if regression_id == "R1":
        out = np.select([z == 0, z == 1], [2 * np.pi * x, 2 * np.pi * (1 - x)], np.pi)
    elif regression_id == "R2":
        out = np.select([z == 0, z == 1], [np.pi * x**2, np.pi * (1 - x**2)],
                        1.5 * np.pi * np.abs(np.sin(np.pi * x)))
    else:
        raise ValueError(f"unknown regression {regression_id!r}; expected one of {REGRESSIONS}")
    return float(out) if out.ndim == 0 else out


def sample_von_mises(kappa: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Von Mises(0, kappa) draws by the Best-Fisher wrapped-Cauchy rejection method."""
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    tau = 1.0 + math.sqrt(1.0 + 4.0 * kappa * kappa)
    rho = (tau - math.sqrt(2.0 * tau)) / (2.0 * kappa)
    r = (1.0 + rho * rho) / (2.0 * rho)
    out = np.empty(size)
    filled = 0
    while filled < size:
        m = max(2 * (size - filled), 16)
        u1, u2, u3 = rng.random(m), rng.random(m), rng.random(m)
        zc = np.cos(np.pi * u1)
        f = (1.0 + r * zc) / (r + zc)
        c = kappa * (r - f)
        with np.errstate(divide="ignore", invalid="ignore"):
            accept = (c * (2.0 - c) - u2 > 0) | (np.log(c / u2) + 1.0 - c >= 0)
        draws = np.sign(u3[accept] - 0.5) * np.arccos(np.clip(f[accept], -1.0, 1.0))
        take = min(draws.size, size - filled)
        out[filled:filled + take] = draws[:take]
        filled += take
    return out


@dataclass(frozen=True)
class DgpSpec:
    """Simulation design: ``X ~ U(0,1)``, ``Z`` uniform on {A, B, C},
    ``Theta = m(X, Z) + vM(0, kappa)`` mod 2*pi."""

    regression_id: str = "R1"
    kappa: float = 3.0
    n: int = 100

    def __post_init__(self):
        if self.regression_id not in REGRESSIONS:
            raise ValueError(f"unknown regression {self.regression_id!r}")
        if not self.kappa > 0 or self.n < 1:
            raise ValueError("kappa must be positive and n >= 1")


def sample_dgp(spec: DgpSpec, seed) -> MixedSample:
    rng = np.random.default_rng(seed)
    X = rng.random(spec.n)
    Z = rng.integers(0, len(LEVELS), spec.n)
    eps = sample_von_mises(spec.kappa, spec.n, rng)
    theta = wrap_2pi(true_regression(spec.regression_id, X, Z) + eps)
    return MixedSample(X[:, None], Z[:, None], theta, (len(LEVELS),), (LEVELS,))


def case_true(sample: MixedSample, H: Bandwidths, regression_id: str, spec: KernelSpec = DEFAULT_SPEC,
              method="NW", fitted=None) -> float:
    """CASE: mean cosine loss between the true and fitted regression at the design points.

    ``fitted`` injects fitted angles directly; rows where the fit is
    undefined (NaN) count as loss 2.
    """
    truth = true_regression(regression_id, sample.X[:, 0], sample.Z[:, 0])
    if fitted is None:
        fitted = _design_fit_or_nan(sample, H, spec, method)
    loss = 1.0 - np.cos(truth - np.asarray(fitted, dtype=float))
    return float(np.where(np.isnan(loss), 2.0, loss).mean())


def _design_fit_or_nan(sample, H, spec, method, cache: KernelCache | None = None):
    method = Method(method)
    if method is Method.NW:
        cache = cache or KernelCache(sample, spec)
        return _nw_rows(cache.matrix(H), mass_floor(sample.n, sample.n_levels, H, spec),
                        np.sin(sample.theta), np.cos(sample.theta))
    try:
        return fit_design(sample, H, spec, method).m_hat
    except ValueError:
        pass
    # some row is undefined; refit pointwise so only those rows become NaN
    out = np.full(sample.n, np.nan)
    for i in range(sample.n):
        try:
            out[i] = predict_points(sample, H, sample.X[i:i + 1], sample.Z[i:i + 1], spec, method).m_hat[0]
        except ValueError:
            pass
    return out


def replicate_seed(seed: int, phase: int, j: int) -> list[int]:
    """Seed for replicate ``j`` of ``phase``; independent of scheduling.

    Streams: 1 surface samples, 2 evaluation samples, 3 selector bootstrap,
    4 bias Monte Carlo, 5-7 band coverage (sample, selection, band).
    """
    return [int(seed), int(phase), int(j)]


def surface_search(h_values=None, lam_values=None, h_count: int = 15, lam_count: int = 8) -> SearchSpec:
    """Desk-scale bandwidth grid for the simulation design.

    Defaults span ``[0.05, 2] * sd(U(0,1))`` geometrically in ``h`` and
    ``[0, 2/3]`` linearly in ``lambda``.
    """
    sd = 1.0 / math.sqrt(12.0)
    if h_values is None:
        h_values = np.geomspace(0.05 * sd, 2.0 * sd, h_count)
    if lam_values is None:
        lam_values = np.linspace(0.0, 2.0 / 3.0, lam_count)
    return SearchSpec((h_values,), (lam_values,))


@dataclass
class RiskSurface:
    """Monte Carlo mean CASE over a bandwidth grid and its minimizer."""

    search: SearchSpec
    grid: list
    values: np.ndarray
    oracle: Bandwidths
    oracle_index: int
    N1: int

    @property
    def oracle_value(self) -> float:
        return float(self.values[self.oracle_index])

    def snap_index(self, H: Bandwidths) -> int:
        """Index of the grid point nearest to ``H`` (log scale in h, linear in lambda)."""
        idx = []
        for j, g in enumerate(self.search.h_values):
            idx.append(int(np.argmin(np.abs(np.log(g) - np.log(H.h[j])))))
        for l, g in enumerate(self.search.lam_values):
            idx.append(int(np.argmin(np.abs(g - H.lam[l]))))
        return int(np.ravel_multi_index(idx, self.search.shape))

    def value_at(self, H: Bandwidths) -> float:
        return float(self.values[self.snap_index(H)])


def _argmin_prefer_large(values: np.ndarray, grid: Sequence[Bandwidths]) -> int:
    best = np.nanmin(values)
    ties = np.flatnonzero(values == best)
    norms = np.array([grid[i].norm() for i in ties])
    return int(ties[np.argmax(norms)])


def _map(fn, items, workers: int):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def phase1_surface(spec: DgpSpec, N1: int = 50, search: SearchSpec | None = None, seed: int = 0,
                   kernel: KernelSpec = DEFAULT_SPEC, method="NW", workers: int = 1) -> RiskSurface:
    """Average CASE over ``N1`` independent samples at every grid bandwidth."""
    search = search or surface_search()
    grid = search.candidates()

    def one(j):
        sample = sample_dgp(spec, replicate_seed(seed, 1, j))
        cache = KernelCache(sample, kernel)
        return np.array([case_true(sample, H, spec.regression_id, kernel, method,
                                   fitted=_design_fit_or_nan(sample, H, kernel, method, cache)) for H in grid])

    rows = _map(one, range(N1), workers)
    values = np.mean(np.stack(rows), axis=0)
    i = _argmin_prefer_large(values, grid)
    return RiskSurface(search, grid, values, grid[i], i, N1)


@dataclass
class SelectorScore:
    method: str
    risks: np.ndarray
    norm_ratios: np.ndarray
    selected: list = field(default_factory=list)
    snapped: list = field(default_factory=list)
    boundary_hits: int = 0
    ddof: int = 0

    @property
    def mean_risk(self) -> float:
        return float(np.mean(self.risks))

    @property
    def var_risk(self) -> float:
        return float(np.var(self.risks, ddof=self.ddof))


def _select_all(sample, search: SearchSpec, selectors, B: int, boot_seed, kernel, method):
    method = Method(method)
    cache = KernelCache(sample, kernel)
    out = {}
    hits = {}
    need_cv = "CV" in selectors or "Boot" in selectors
    if need_cv:
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter("always", BoundaryHitWarning)
            h_cv = _minimize(lambda H: _cv_loss_cached(cache, H, method), search, "CV")
        hits["CV"] = any(issubclass(x.category, BoundaryHitWarning) for x in w)
        if "CV" in selectors:
            out["CV"] = h_cv
    if "Boot" in selectors:
        boot_search = SearchSpec(search.h_values, search.lam_values, search.refine, 0)
        prob = _BootstrapProblem(sample, h_cv, h_cv, B, boot_seed, kernel, method, cache)
        with warnings.catch_warnings(record=True) as w:
            warnings.simplefilter("always", BoundaryHitWarning)
            out["Boot"] = _minimize(prob.risk, boot_search, "Boot")
        hits["Boot"] = any(issubclass(x.category, BoundaryHitWarning) for x in w)
    if "RoT" in selectors:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out["RoT"] = select_rot(sample, RotConstants())
        hits["RoT"] = False
    return out, hits


def phase2_eval(spec: DgpSpec, N2: int, surface: RiskSurface, selectors: Sequence[str] = SELECTORS,
                seed: int = 0, B: int = 100, kernel: KernelSpec = DEFAULT_SPEC, method="NW",
                workers: int = 1, ddof: int = 0, search: SearchSpec | None = None) -> dict[str, SelectorScore]:
    """Run each selector on ``N2`` fresh samples and score it on ``surface``.

    CV and bootstrap search ``search`` (default: the surface grid). Off-grid
    choices are snapped to the nearest surface grid point for scoring; norm
    ratios use the unsnapped bandwidths.
    """
    for s in selectors:
        if s not in SELECTORS:
            raise ValueError(f"unknown selector {s!r}")
    search = search or surface.search
    oracle_norm = surface.oracle.norm()

    def one(j):
        sample = sample_dgp(spec, replicate_seed(seed, 2, j))
        return _select_all(sample, search, selectors, B, replicate_seed(seed, 3, j), kernel, method)

    results = _map(one, range(N2), workers)
    scores = {}
    for name in selectors:
        chosen = [r[0][name] for r in results]
        snapped = [surface.snap_index(H) for H in chosen]
        scores[name] = SelectorScore(
            method=name,
            risks=np.array([surface.values[i] for i in snapped]),
            norm_ratios=np.array([H.norm() / oracle_norm for H in chosen]),
            selected=chosen,
            snapped=snapped,
            boundary_hits=sum(r[1][name] for r in results),
            ddof=ddof,
        )
    return scores


def run_scenario(spec: DgpSpec, N1: int = 50, N2: int = 200, seed: int = 0, B: int = 100,
                 selectors: Sequence[str] = SELECTORS, search: SearchSpec | None = None,
                 kernel: KernelSpec = DEFAULT_SPEC, method="NW", workers: int = 1):
    """Phase I followed by Phase II for one scenario; returns ``(surface, scores)``."""
    surface = phase1_surface(spec, N1, search, seed, kernel, method, workers)
    scores = phase2_eval(spec, N2, surface, selectors, seed, B, kernel, method, workers)
    return surface, scores


@dataclass
class BandCoverage:
    """Outcome of repeated band construction against the known regression."""

    covered: np.ndarray
    p_in: np.ndarray
    alpha_final: np.ndarray
    statuses: list
    selected: list

    @property
    def coverage(self) -> float:
        return float(np.mean(self.covered))


def band_coverage(spec: DgpSpec, level: int = 0, grid=None, reps: int = 200, B: int = 200, alpha: float = 0.05,
                  delta_tol: float = 0.005, max_iter: int = 30, B_select: int = 100, seed: int = 0,
                  search: SearchSpec | None = None, kernel: KernelSpec = DEFAULT_SPEC) -> BandCoverage:
    """Simultaneous coverage of ``m(., level)`` by bootstrap bands over ``reps`` fresh samples.

    Each replicate selects its bandwidth with the bootstrap selector on
    ``search`` (default: the desk surface grid) and builds a band on ``grid``
    (default: 20 points on [0.15, 0.85]). Covered means the true curve lies
    inside the band at every grid point.
    """
    grid = np.linspace(0.15, 0.85, 20) if grid is None else np.asarray(grid, dtype=float)
    search = search or surface_search()
    truth = true_regression(spec.regression_id, grid, level)
    covered, pin, afin, statuses, chosen = [], [], [], [], []
    for r in range(reps):
        sample = sample_dgp(spec, replicate_seed(seed, 5, r))
        H = _select_all(sample, search, ("Boot",), B_select, replicate_seed(seed, 6, r), kernel, "NW")[0]["Boot"]
        band = simultaneous_band(sample, H, level, grid, B, alpha, delta_tol, max_iter,
                                 seed=replicate_seed(seed, 7, r), spec=kernel)
        covered.append(bool(band.contains(truth).all()))
        pin.append(band.p_in_achieved)
        afin.append(band.alpha_final)
        statuses.append(band.calibration_status.value)
        chosen.append(H)
    return BandCoverage(np.array(covered), np.array(pin), np.array(afin), statuses, chosen)


@dataclass(frozen=True)
class Preset:
    regression: str
    kappas: tuple
    ns: tuple
    N1: int
    N2: int
    table_file: str


PRESETS = {
    "table1-desk": Preset("R1", (3.0, 10.0), (100, 200, 500), 50, 200, "table1.csv"),
    "table2-desk": Preset("R2", (3.0, 10.0), (100, 200, 500), 50, 200, "table2.csv"),
}


# --- von Mises moments -------------------------------------------------------

_SERIES_MAX_KAPPA = 50.0


def _bessel_i_series(nu: int, x: float) -> float:
    """``I_nu(x) * exp(-x)`` by the ascending power series (x <= 50)."""
    term = (x / 2.0) ** nu / math.factorial(nu)
    total = term
    q = (x / 2.0) ** 2
    k = 0
    while True:
        k += 1
        term *= q / (k * (k + nu))
        total += term
        if term < 1e-17 * total:
            break
    return total * math.exp(-x)


def _bessel_i_asymptotic(nu: int, x: float, terms: int = 15) -> float:
    """``I_nu(x) * exp(-x)`` from the large-argument expansion."""
    mu = 4.0 * nu * nu
    total, term = 1.0, 1.0
    for k in range(1, terms):
        term *= -(mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        total += term
    return total / math.sqrt(2.0 * math.pi * x)


def bessel_i_scaled(nu: int, x: float) -> float:
    """Exponentially scaled modified Bessel function ``I_nu(x) exp(-x)`` for integer ``nu``."""
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x <= _SERIES_MAX_KAPPA:
        return _bessel_i_series(nu, x)
    return _bessel_i_asymptotic(nu, x)


def vm_moments(kappa: float) -> tuple[float, float]:
    """``(E cos eps, Var sin eps)`` for ``eps ~ vM(0, kappa)``.

    ``E cos eps = I1/I0`` and ``Var sin eps = (1 - I2/I0) / 2``.
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    i0 = bessel_i_scaled(0, kappa)
    mean_cos = bessel_i_scaled(1, kappa) / i0
    var_sin = 0.5 * (1.0 - bessel_i_scaled(2, kappa) / i0)
    return mean_cos, var_sin


# --- leading-order bias and variance ----------------------------------------

FD_STEP = 1e-4


@dataclass(frozen=True)
class AsymptoticTerms:
    bias: float
    variance: float
    bias_continuous: float
    bias_categorical: float


def theorem1_approx(spec: DgpSpec, x: float, z: int, H: Bandwidths, m: Callable | None = None,
                    kernel: KernelSpec = DEFAULT_SPEC, categorical_weight: str = "lambda") -> AsymptoticTerms:
    """Leading bias and variance of the NW fit at an interior point.

    Uses the uniform design density ``f = 1/3`` on ``[0,1] x {A,B,C}``, von
    Mises moments ``E cos eps`` and ``Var sin eps`` (constant in ``(x, z)``), and
    central finite differences of ``m`` in ``x``. ``m`` defaults to the
    design's regression function.

    ``categorical_weight`` sets the coefficient of the cross-level term:
    ``"lambda"`` uses ``lambda`` itself; ``"aitchison-aitken"`` uses the
    mismatch-to-match weight ratio ``lambda / ((c-1)(1-lambda))`` that the
    Aitchison-Aitken kernel actually assigns.
    """
    if ContinuousKernel(kernel.continuous_kind) is not ContinuousKernel.GAUSSIAN:
        raise ValueError("the asymptotic approximation is implemented for the Gaussian kernel only")
    h, lam = H.h[0], (H.lam[0] if H.lam else 0.0)
    if not (2 * h <= x <= 1 - 2 * h):
        raise ValueError(f"x={x} is not interior for h={h} (need 2h <= x <= 1-2h)")
    if m is None:
        def m(xx, zz):
            return true_regression(spec.regression_id, xx, zz)
    c = len(LEVELS)
    f = 1.0 / c
    mean_cos, var_sin = vm_moments(spec.kappa)
    mu2, RK = 1.0, 1.0 / (2.0 * math.sqrt(math.pi))

    d = FD_STEP
    m0 = m(x, z)
    d2m = (m(x + d, z) - 2 * m0 + m(x - d, z)) / (d * d)
    # mean_cos * f is constant in x for this design, so only the curvature term survives
    bias_cont = mu2 * h * h * 0.5 * d2m

    if categorical_weight == "lambda":
        coef = lam
    elif categorical_weight == "aitchison-aitken":
        coef = lam / ((c - 1) * (1.0 - lam))
    else:
        raise ValueError(f"unknown categorical_weight {categorical_weight!r}")
    neighbors = [zz for zz in range(c) if zz != z]
    # mean_cos and f are equal across levels here, so the neighbour weights reduce to 1
    bias_cat = coef * sum(math.sin(m(x, zz) - m0) for zz in neighbors)

    var = RK * var_sin / (spec.n * h * mean_cos**2 * f)
    return AsymptoticTerms(bias_cont + bias_cat, var, bias_cont, bias_cat)


@dataclass(frozen=True)
class MonteCarloBias:
    bias: float
    se: float
    variance: float
    reps: int


def mc_bias(spec: DgpSpec, x: float, z: int, H: Bandwidths, reps: int = 2000, seed: int = 0,
            kernel: KernelSpec = DEFAULT_SPEC) -> MonteCarloBias:
    """Monte Carlo bias of the NW fit at ``(x, z)``: mean signed circular error over ``reps`` samples."""
    truth = true_regression(spec.regression_id, x, z)
    err = np.empty(reps)
    xe = np.array([[x]])
    for r in range(reps):
        sample = sample_dgp(spec, replicate_seed(seed, 4, r))
        K = kernel_matrix(xe, np.array([[z]]), sample.X, sample.Z, sample.n_levels, H, kernel)[0]
        m1 = K @ np.sin(sample.theta)
        m2 = K @ np.cos(sample.theta)
        err[r] = wrap_pi(np.arctan2(m1, m2) - truth)
    return MonteCarloBias(float(err.mean()), float(err.std(ddof=1) / math.sqrt(reps)), float(err.var(ddof=1)), reps)


def bias_slope(spec: DgpSpec, x: float, z: int, hs=(0.05, 0.1, 0.2, 0.4), reps: int = 500,
               seed: int = 0) -> tuple[float, np.ndarray]:
    """Slope of ``log|bias|`` against ``log h`` at ``lambda = 0``."""
    biases = np.array([abs(mc_bias(spec, x, z, Bandwidths((h,), (0.0,)), reps, seed).bias) for h in hs])
    slope = float(np.polyfit(np.log(hs), np.log(biases), 1)[0])
    return slope, biases
