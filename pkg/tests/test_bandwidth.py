import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from circmix.bandwidth import (
    BoundaryHitWarning,
    LambdaClampWarning,
    RotConstants,
    SearchSpec,
    bootstrap_risk,
    centered_residuals,
    cv_loss,
    robust_rot_univariate,
    select_bootstrap,
    select_cv,
    select_rot,
)
from circmix.circ_core import wrap_pi
from circmix.estimator import MixedSample, fit_design, fit_point_nw
from circmix.kernels import Bandwidths
from circmix.sim import DgpSpec, sample_dgp, surface_search

from conftest import random_sample

seeds = st.integers(0, 2 ** 31)


def test_cv_constant_response():
    s = MixedSample(np.linspace(0, 1, 10), np.arange(10) % 3, np.full(10, 2.0), (3,))
    assert cv_loss(s, Bandwidths((0.2,), (0.3,))) == pytest.approx(0.0, abs=1e-15)


def test_cv_antipodal_pair():
    s = MixedSample(np.array([0.4, 0.4]), np.array([0, 0]), np.array([0.0, math.pi]), (2,))
    assert cv_loss(s, Bandwidths((0.1,), (0.2,))) == pytest.approx(2.0)


def test_cv_matches_explicit_refits():
    s = random_sample(np.random.default_rng(11), n=6, levels=(2,))
    H = Bandwidths((0.5,), (0.25,))
    losses = []
    for i in range(6):
        rest = s.subset(np.arange(6) != i)
        losses.append(1 - math.cos(s.theta[i] - fit_point_nw(rest, H, s.X[i], s.Z[i])[0]))
    assert cv_loss(s, H) == pytest.approx(np.mean(losses), abs=1e-12)


@given(seeds)
def test_cv_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    s = random_sample(rng, n=20)
    H = Bandwidths((0.3,), (0.2,))
    assert cv_loss(s.subset(rng.permutation(20)), H) == pytest.approx(cv_loss(s, H), abs=1e-12)


def test_single_candidate_search():
    s = random_sample(np.random.default_rng(1), n=30)
    search = SearchSpec(([0.3],), ([0.1],))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryHitWarning)
        assert select_cv(s, search) == Bandwidths((0.3,), (0.1,))
        assert select_bootstrap(s, 5, search) == Bandwidths((0.3,), (0.1,))


def test_cv_interior_for_smooth_signal():
    rng = np.random.default_rng(4)
    n = 400
    X = rng.uniform(0, 1, n)
    Z = rng.integers(0, 2, n)
    theta = wrap_pi(np.sin(2 * np.pi * X) + 0.5 * Z + rng.vonmises(0, 8, n))
    s = MixedSample(X, Z, theta, (2,))
    with warnings.catch_warnings():
        warnings.simplefilter("error", BoundaryHitWarning)
        H = select_cv(s)
    assert 0 < H.h[0]


def _exact_sd(n, sd, rng):
    v = rng.normal(size=n)
    return (v - v.mean()) / v.std(ddof=1) * sd


def test_rot_example():
    rng = np.random.default_rng(0)
    X = np.column_stack([_exact_sd(100, 1.0, rng), _exact_sd(100, 2.0, rng)])
    s = MixedSample(X, rng.integers(0, 3, 100), np.zeros(100), (3,))
    H = select_rot(s)
    assert H.h == pytest.approx((0.42199, 0.84399), abs=1e-5)
    assert H.lam[0] == pytest.approx(0.13270, abs=1e-5)


def test_rot_clamps_lambda():
    s = random_sample(np.random.default_rng(0), n=20)
    with pytest.warns(LambdaClampWarning):
        H = select_rot(s, RotConstants(c_lambda=50.0))
    assert H.lam[0] == pytest.approx(2 / 3)


def test_rot_zero_variance():
    s = MixedSample(np.column_stack([np.linspace(0, 1, 5), np.ones(5)]), np.zeros(5, int), np.zeros(5), (1,))
    with pytest.raises(ValueError, match="covariate 1"):
        select_rot(s)


@given(seeds, st.floats(0.01, 100))
def test_rot_scale_covariant(seed, a):
    s = random_sample(np.random.default_rng(seed), n=25, k=2)
    X2 = s.X.copy()
    X2[:, 1] *= a
    H0 = select_rot(s)
    H1 = select_rot(MixedSample(X2, s.Z, s.theta, s.n_levels))
    assert H1.h[1] == pytest.approx(a * H0.h[1], rel=1e-12)
    assert H1.h[0] == H0.h[0]


def test_robust_rot_example():
    x = np.linspace(0, 1, 32)
    x = x / x.std(ddof=1)
    assert (np.percentile(x, 75) - np.percentile(x, 25)) / 1.349 >= 1.0
    # 32 ** -0.2 is exactly 1/2
    assert robust_rot_univariate(x) == pytest.approx(1.06 * 0.5, abs=1e-12)
    with pytest.raises(ValueError):
        robust_rot_univariate(np.ones(10))


def test_centered_residuals_examples():
    s = MixedSample(np.zeros(2), np.zeros(2, int), np.array([0.2, -0.2]), (1,))
    assert np.allclose(centered_residuals(s, np.zeros(2)), [0.2, -0.2])
    s3 = MixedSample(np.zeros(3), np.zeros(3, int), np.array([0.5, 0.5, -0.1]), (1,))
    mean = math.atan2((2 * math.sin(0.5) + math.sin(-0.1)) / 3, (2 * math.cos(0.5) + math.cos(-0.1)) / 3)
    assert np.allclose(centered_residuals(s3, np.zeros(3)), [0.5 - mean, 0.5 - mean, -0.1 - mean], atol=1e-15)
    perfect = MixedSample(np.zeros(3), np.zeros(3, int), np.array([1.0, 2.0, 3.0]), (1,))
    assert np.allclose(centered_residuals(perfect, perfect.theta), 0.0)


def test_bootstrap_constant_response_zero_everywhere():
    s = MixedSample(np.linspace(0, 1, 15), np.arange(15) % 3, np.full(15, 0.9), (3,))
    H0 = Bandwidths((0.2,), (0.2,))
    for H in SearchSpec(([0.05, 0.2, 0.8],), ([0.0, 0.3, 0.6],)).candidates():
        assert bootstrap_risk(s, H, H0, H0, B=4, seed=3) == pytest.approx(0.0, abs=1e-14)


def test_bootstrap_deterministic():
    s = random_sample(np.random.default_rng(2), n=20, spread=0.4)
    H = Bandwidths((0.3,), (0.2,))
    a = bootstrap_risk(s, H, H, H, B=1, seed=9)
    b = bootstrap_risk(s, H, H, H, B=1, seed=9)
    assert a == b


def test_bootstrap_replay():
    rng = np.random.default_rng(12)
    s = MixedSample(rng.uniform(size=6), rng.integers(0, 2, 6), rng.uniform(-1, 1, 6), (2,))
    H, H0, H1 = Bandwidths((0.4,), (0.3,)), Bandwidths((0.3,), (0.2,)), Bandwidths((0.5,), (0.1,))
    # step-by-step replay: residuals from H0, centred, resampled, added to the H1 fit, refit with H
    resid = wrap_pi(s.theta - fit_design(s, H0).m_hat)
    mu = math.atan2(np.sin(resid).mean(), np.cos(resid).mean())
    eps = wrap_pi(resid - mu)
    ref = fit_design(s, H1).m_hat
    total = 0.0
    for b in range(2):
        idx = np.random.default_rng([5, b]).integers(0, 6, 6)
        star = s.with_theta(wrap_pi(ref + eps[idx]))
        total += np.mean(1 - np.cos(ref - fit_design(star, H).m_hat))
    assert bootstrap_risk(s, H, H0, H1, B=2, seed=5) == pytest.approx(total / 2, abs=1e-12)


def test_search_spec_validation():
    with pytest.raises(ValueError):
        SearchSpec(([0.0, 0.1],), ())
    with pytest.raises(ValueError):
        SearchSpec(([0.1],), ([1.2],))
    spec = SearchSpec.default_for(random_sample(np.random.default_rng(0), n=30))
    assert spec.shape == (20, 11)
    assert spec.lam_values[0][-1] == pytest.approx(2 / 3)


def test_boot_rarely_hits_boundary():
    spec = DgpSpec("R1", 10.0, 200)
    search = surface_search()
    hits = 0
    for r in range(20):
        s = sample_dgp(spec, [31, r])
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", BoundaryHitWarning)
            H = select_bootstrap(s, 50, search)
        hits += any(issubclass(w.category, BoundaryHitWarning) for w in caught)
        assert search.h_values[0][0] <= H.h[0] <= search.h_values[0][-1]
    assert hits <= 2
