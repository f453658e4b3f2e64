import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from circmix.kernels import Bandwidths
from circmix.sim import (
    DgpSpec,
    RiskSurface,
    _argmin_prefer_large,
    bessel_i_scaled,
    case_true,
    phase1_surface,
    phase2_eval,
    replicate_seed,
    sample_dgp,
    sample_von_mises,
    surface_search,
    theorem1_approx,
    true_regression,
    vm_moments,
)


def test_true_regression_examples():
    assert true_regression("R1", 0.25, 0) == pytest.approx(math.pi / 2)
    assert true_regression("R1", 0.25, 1) == pytest.approx(1.5 * math.pi)
    assert true_regression("R1", 0.7, 2) == pytest.approx(math.pi)
    assert true_regression("R2", 0.5, "A") == pytest.approx(math.pi / 4)
    assert true_regression("R2", 0.5, "B") == pytest.approx(0.75 * math.pi)
    assert true_regression("R2", 0.5, "C") == pytest.approx(1.5 * math.pi)
    with pytest.raises(ValueError):
        true_regression("R3", 0.5, 0)


def _vm_quad(kappa, fn):
    norm = quad(lambda t: math.exp(kappa * (math.cos(t) - 1)), -math.pi, math.pi, limit=200)[0]
    return quad(lambda t: fn(t) * math.exp(kappa * (math.cos(t) - 1)), -math.pi, math.pi, limit=200)[0] / norm


@pytest.mark.parametrize("kappa", [0.1, 1.0, 3.0, 10.0, 49.0, 51.0, 200.0])
def test_vm_moments_against_quadrature(kappa):
    mc, s2 = vm_moments(kappa)
    assert mc == pytest.approx(_vm_quad(kappa, math.cos), rel=1e-8)
    assert s2 == pytest.approx(_vm_quad(kappa, lambda t: math.sin(t) ** 2), rel=1e-7)


def test_vm_moment_limits():
    mc, s2 = vm_moments(1e-6)
    assert mc == pytest.approx(0.0, abs=1e-6) and s2 == pytest.approx(0.5, abs=1e-6)
    mc, s2 = vm_moments(1e4)
    assert mc == pytest.approx(1 - 1 / 2e4, rel=1e-6) and s2 == pytest.approx(1 / 1e4, rel=1e-3)
    # the two Bessel branches agree where they meet
    assert bessel_i_scaled(1, 50.0) == pytest.approx(bessel_i_scaled(1, 50.0 + 1e-9), rel=1e-10)


@pytest.mark.parametrize("kappa", [0.5, 3.0, 10.0])
def test_sampler_moments(kappa):
    draws = sample_von_mises(kappa, 40000, np.random.default_rng(1))
    mc, s2 = vm_moments(kappa)
    se_c = np.cos(draws).std() / 200
    assert abs(np.cos(draws).mean() - mc) < 4 * se_c
    assert abs(np.sin(draws).mean()) < 4 * math.sqrt(s2) / 200
    assert np.all(np.abs(draws) <= math.pi)


def test_case_true_hand_oracle():
    s = sample_dgp(DgpSpec("R1", 3.0, 5), 0)
    truth = true_regression("R1", s.X[:, 0], s.Z[:, 0])
    fitted = truth + np.array([0.0, math.pi, 0.5, np.nan, -0.5])
    expect = (0 + 2 + (1 - math.cos(0.5)) + 2 + (1 - math.cos(0.5))) / 5
    assert case_true(s, None, "R1", fitted=fitted) == pytest.approx(expect)


def test_sample_dgp_shapes_and_determinism():
    a, b = sample_dgp(DgpSpec("R2", 10.0, 50), [1, 2]), sample_dgp(DgpSpec("R2", 10.0, 50), [1, 2])
    assert np.array_equal(a.theta, b.theta) and a.X.shape == (50, 1)
    assert np.all((a.theta >= 0) & (a.theta < 2 * math.pi))
    assert set(np.unique(a.Z)) <= {0, 1, 2}
    assert replicate_seed(3, 2, 7) == [3, 2, 7]


def test_single_replicate_surface_is_case():
    spec = DgpSpec("R1", 3.0, 40)
    search = surface_search(h_count=4, lam_count=3)
    surf = phase1_surface(spec, 1, search, seed=5)
    s = sample_dgp(spec, replicate_seed(5, 1, 0))
    direct = [case_true(s, H, "R1") for H in search.candidates()]
    assert np.allclose(surf.values, direct, rtol=0, atol=1e-14)
    assert surf.oracle_value == pytest.approx(min(direct))


def test_tie_break_prefers_larger_norm():
    grid = [Bandwidths((0.1,), (0.0,)), Bandwidths((0.3,), (0.2,)), Bandwidths((0.2,), (0.1,))]
    assert _argmin_prefer_large(np.array([0.5, 0.5, 0.5]), grid) == 1
    assert _argmin_prefer_large(np.array([0.4, 0.5, 0.4]), grid) == 2


def test_snap_index():
    search = surface_search(h_values=[0.1, 0.2, 0.4], lam_values=[0.0, 0.5])
    grid = search.candidates()
    surf = RiskSurface(search, grid, np.arange(6.0), grid[0], 0, 1)
    for i, H in enumerate(grid):
        assert surf.snap_index(H) == i
    assert grid[surf.snap_index(Bandwidths((0.27,), (0.4,)))].h == (0.2,)


def test_harness_deterministic_across_workers():
    spec = DgpSpec("R2", 3.0, 30)
    search = surface_search(h_count=4, lam_count=3)
    s1 = phase1_surface(spec, 3, search, seed=2, workers=1)
    s2 = phase1_surface(spec, 3, search, seed=2, workers=2)
    assert np.array_equal(s1.values, s2.values)
    a = phase2_eval(spec, 3, s1, seed=2, B=5, workers=1)
    b = phase2_eval(spec, 3, s1, seed=2, B=5, workers=2)
    for k in a:
        assert np.array_equal(a[k].risks, b[k].risks)
        assert np.array_equal(a[k].norm_ratios, b[k].norm_ratios)
    with pytest.raises(ValueError):
        phase2_eval(spec, 1, s1, selectors=("LSCV",))


@given(st.floats(0.3, 0.7), st.floats(0.0, 0.6))
def test_asymptotic_constant_regression_has_no_bias(x, lam):
    spec = DgpSpec("R1", 3.0, 200)
    t = theorem1_approx(spec, x, 0, Bandwidths((0.05,), (lam,)), m=lambda xx, zz: 1.0)
    assert t.bias == pytest.approx(0.0, abs=1e-12)


def test_asymptotic_r1_structure():
    spec = DgpSpec("R1", 3.0, 200)
    H = Bandwidths((0.05,), (0.2,))
    # level C is flat and its neighbours sit symmetrically around it
    assert theorem1_approx(spec, 0.3, 2, H).bias == pytest.approx(0.0, abs=1e-6)
    tA = theorem1_approx(spec, 0.3, 0, H)
    assert tA.bias_continuous == pytest.approx(0.0, abs=1e-5)
    expect = 0.2 * (math.sin(2 * math.pi * 0.3) - math.sin(4 * math.pi * 0.3))
    assert tA.bias_categorical == pytest.approx(expect, rel=1e-10)
    mc, s2 = vm_moments(3.0)
    assert tA.variance == pytest.approx(s2 / (2 * math.sqrt(math.pi) * 200 * 0.05 * mc ** 2 / 3))
    with pytest.raises(ValueError):
        theorem1_approx(spec, 0.05, 0, H)
