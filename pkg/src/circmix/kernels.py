"""Continuous and categorical kernels and the normalized product-kernel weights."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

_SQRT_2PI = np.sqrt(2.0 * np.pi)

# relative floor on the unnormalized kernel mass, see product_weights
DEGENERATE_MASS_RTOL = 1e-12


class ContinuousKernel(str, enum.Enum):
    GAUSSIAN = "gaussian"
    EPANECHNIKOV = "epanechnikov"


class CategoricalKernel(str, enum.Enum):
    AITCHISON_AITKEN = "aitchison-aitken"


@dataclass(frozen=True)
class KernelSpec:
    continuous_kind: ContinuousKernel = ContinuousKernel.GAUSSIAN
    categorical_kind: CategoricalKernel = CategoricalKernel.AITCHISON_AITKEN

    def __post_init__(self):
        object.__setattr__(self, "continuous_kind", ContinuousKernel(self.continuous_kind))
        object.__setattr__(self, "categorical_kind", CategoricalKernel(self.categorical_kind))


DEFAULT_SPEC = KernelSpec()


@dataclass(frozen=True)
class Bandwidths:
    """Bandwidth vector ``H = (h, lambda)``.

    ``h`` holds one positive window per continuous covariate and ``lam`` one
    mismatch weight in [0, 1] per categorical covariate.
    """

    h: tuple[float, ...]
    lam: tuple[float, ...] = field(default=())

    def __post_init__(self):
        h = tuple(float(v) for v in np.atleast_1d(self.h))
        lam = tuple(float(v) for v in np.atleast_1d(self.lam)) if np.size(self.lam) else ()
        if any(not np.isfinite(v) or v <= 0 for v in h):
            raise ValueError(f"continuous bandwidths must be positive, got {h}")
        if any(not np.isfinite(v) or v < 0 or v > 1 for v in lam):
            raise ValueError(f"categorical bandwidths must lie in [0, 1], got {lam}")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "lam", lam)

    @property
    def k(self) -> int:
        return len(self.h)

    @property
    def p(self) -> int:
        return len(self.lam)

    def as_array(self) -> np.ndarray:
        return np.array(self.h + self.lam)

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))

    def to_dict(self) -> dict:
        return {"h": list(self.h), "lambda": list(self.lam)}


def eval_continuous(kind, u):
    """Evaluate a univariate continuous kernel at ``u`` (scalar or array)."""
    kind = ContinuousKernel(kind)
    u = np.asarray(u, dtype=float)
    if kind is ContinuousKernel.GAUSSIAN:
        out = np.exp(-0.5 * u * u) / _SQRT_2PI
    else:
        out = np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)
    return float(out) if out.ndim == 0 else out


def continuous_peak(kind) -> float:
    return float(eval_continuous(kind, 0.0))


def eval_categorical(z, zi, lam: float, c: int):
    """Aitchison-Aitken kernel: ``1 - lam`` on a match, ``lam / (c - 1)`` otherwise."""
    if c < 2:
        raise ValueError(f"categorical kernel needs at least 2 levels, got c={c}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    match = np.asarray(z) == np.asarray(zi)
    out = np.where(match, 1.0 - lam, lam / max(c - 1, 1))
    return float(out) if out.ndim == 0 else out


def kernel_matrix(x_eval, z_eval, X, Z, n_levels: Sequence[int], H: Bandwidths,
                  spec: KernelSpec = DEFAULT_SPEC) -> np.ndarray:
    """Unnormalized product-kernel values, shape ``(m, n)``.

    Row ``r`` holds ``prod_j K((x_rj - X_ij)/h_j)/h_j * prod_l L(z_rl, Z_il; lam_l)``
    for every sample row ``i``.
    """
    x_eval = np.atleast_2d(np.asarray(x_eval, dtype=float))
    z_eval = np.atleast_2d(np.asarray(z_eval, dtype=int)) if np.size(z_eval) else np.zeros((x_eval.shape[0], 0), int)
    m, n = x_eval.shape[0], X.shape[0]
    K = np.ones((m, n))
    for j, hj in enumerate(H.h):
        u = (x_eval[:, j, None] - X[None, :, j]) / hj
        K *= eval_continuous(spec.continuous_kind, u) / hj
    for l, lam in enumerate(H.lam):
        c = n_levels[l]
        match = z_eval[:, l, None] == Z[None, :, l]
        # a single-level factor never mismatches, so its denominator is irrelevant
        K *= np.where(match, 1.0 - lam, lam / max(c - 1, 1))
    return K


def peak_kernel_value(n_levels: Sequence[int], H: Bandwidths, spec: KernelSpec = DEFAULT_SPEC) -> float:
    """Largest value a single product-kernel term can take."""
    peak = continuous_peak(spec.continuous_kind)
    out = 1.0
    for hj in H.h:
        out *= peak / hj
    for lam, c in zip(H.lam, n_levels):
        out *= max(1.0 - lam, lam / max(c - 1, 1))
    return out


class DegenerateNeighborhoodError(ValueError):
    """No effective data near an evaluation point (kernel mass numerically zero)."""

    def __init__(self, x, z, mass: float):
        self.x = tuple(np.atleast_1d(x).tolist())
        self.z = tuple(np.atleast_1d(z).tolist()) if np.size(z) else ()
        self.mass = mass
        super().__init__(f"degenerate kernel neighborhood at x={self.x}, z={self.z} (mass={mass:.3g})")


def mass_floor(n: int, n_levels, H: Bandwidths, spec: KernelSpec = DEFAULT_SPEC) -> float:
    return DEGENERATE_MASS_RTOL * n * peak_kernel_value(n_levels, H, spec)


def product_weights(x, z, sample, H: Bandwidths, spec: KernelSpec = DEFAULT_SPEC) -> np.ndarray:
    """Normalized weight vector over the sample rows at the point ``(x, z)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=int)) if np.size(z) else np.zeros(0, int)
    if x.size != sample.k or z.size != sample.p or H.k != sample.k or H.p != sample.p:
        raise ValueError(
            f"dimension mismatch: x has {x.size}, z has {z.size}, H is ({H.k}, {H.p}); "
            f"sample is (k={sample.k}, p={sample.p})"
        )
    K = kernel_matrix(x[None, :], z[None, :], sample.X, sample.Z, sample.n_levels, H, spec)[0]
    mass = K.sum()
    if not mass >= mass_floor(sample.n, sample.n_levels, H, spec):
        raise DegenerateNeighborhoodError(x, z, float(mass))
    return K / mass
