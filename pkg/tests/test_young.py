import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subgeo.errors import DomainError
from subgeo.ratefn import PhiSpec
from subgeo.young import (WeightW, YoungPair, check_young, make_pair, unnormalised_pair, weight_values,
                          weighted_norm, young_gap)


def test_degenerate_pairs():
    p1 = make_pair(1.0)
    assert p1.psi1(7.0) == 7.0 and p1.psi2(123.0) == 1.0
    p0 = make_pair(0.0)
    assert p0.psi1(7.0) == 1.0 and p0.psi2(123.0) == 123.0


def test_half_pair_is_am_gm():
    p = make_pair(0.5)
    x, y = 3.0, 12.0
    assert p.psi1(x) * p.psi2(y) == pytest.approx(2 * np.sqrt(x * y), rel=1e-15)
    assert young_gap(p, 5.0, 5.0) <= 0.0
    assert young_gap(p, 5.0, 5.0) == pytest.approx(0.0, abs=1e-13)


@pytest.mark.parametrize("xi", np.linspace(0, 1, 21))
def test_check_young_grid(xi):
    assert check_young(make_pair(float(xi)), 64) <= 0.0


def test_unnormalised_prefactors_violate():
    assert young_gap(unnormalised_pair(0.5), 1.0, 1.0) == pytest.approx(2.0, rel=1e-15)
    assert check_young(unnormalised_pair(0.5), 16) >= 2.0
    assert check_young(YoungPair(0.5, 2.0, 2.0), 8) > 0


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(1.0, 1e12), st.floats(1.0, 1e12))
def test_young_inequality_random(xi, x, y):
    assert young_gap(make_pair(xi), x, y) <= 0.0


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 1.0))
def test_pairs_non_decreasing(xi):
    p = make_pair(xi)
    pts = np.logspace(0, 6, 50)
    assert np.all(np.diff(p.psi1(pts)) >= 0) and np.all(np.diff(p.psi2(pts)) >= 0)


def test_make_pair_domain():
    with pytest.raises(DomainError):
        make_pair(1.5)
    with pytest.raises(DomainError):
        unnormalised_pair(-0.5)
    with pytest.raises(DomainError):
        check_young(make_pair(0.5), 1)


def test_weighted_norm_examples():
    phi = PhiSpec(2.0, 0.5)
    v = np.array([1.0, 4.0, 9.0])
    w = WeightW(phi, make_pair(0.3), v)
    assert weighted_norm(np.zeros(3), w) == 0.0
    assert weighted_norm(w.values, w) == pytest.approx(1.0, rel=1e-15)
    assert np.all(w.values >= make_pair(0.3).psi2(1.0) * (1 - 1e-15))


@pytest.mark.parametrize("xi", [0.0, 0.25, 0.5, 1.0])
def test_weighted_norm_power_function(xi):
    # W = a2 V**(alpha (1-xi)), so f = V**(alpha (1-xi)) has norm 1/a2 at every state
    alpha = 0.5
    phi = PhiSpec(3.0, alpha)
    v = np.array([1.0, 2.0, 10.0, 400.0])
    pair = make_pair(xi)
    f = v ** (alpha * (1 - xi))
    ratio = np.abs(f) / weight_values(phi, pair, v)
    assert np.allclose(ratio, 1.0 / pair.a2, rtol=1e-14)
    assert weighted_norm(f, weight_values(phi, pair, v)) == pytest.approx(1.0 / pair.a2, rel=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4), st.floats(-50, 50))
def test_weighted_norm_homogeneous(f, c):
    w = np.array([1.0, 2.0, 3.0, 4.0])
    f = np.array(f)
    assert weighted_norm(c * f, w) == pytest.approx(abs(c) * weighted_norm(f, w), rel=1e-14, abs=1e-300)


def test_weighted_norm_rejects_bad_weight():
    with pytest.raises(DomainError):
        weighted_norm(np.ones(2), np.array([1.0, np.inf]))
