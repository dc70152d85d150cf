import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subgeo.certify import drift_constants, fit_beta
from subgeo.chain import KernelSequence
from subgeo.coupling import (AugmentedSequence, build_augmented, dp_all_starts, dp_expected_sum,
                             lemma_dominator, marginal_check, simulate, survival_dominator,
                             weight_matrix)
from subgeo.errors import DomainError, KernelError
from subgeo.ratefn import PhiSpec
from subgeo.specfile import shipped_specs

P = [[0.7, 0.3], [0.4, 0.6]]


def two_state():
    seq = KernelSequence.homogeneous(P)
    return drift_constants(seq, [1.0, 2.0], PhiSpec(1.0, 0.0), [0, 1], eps_b=0.5)


def regen_chain(n=8):
    p = np.zeros((n, n))
    p[0, :2] = 0.6, 0.4
    for x in range(1, n):
        p[x, x - 1] = 0.6
        p[x, min(x + 1, n - 1)] += 0.3
        p[x, x] += 0.1
    p = 0.85 * p
    p[:, 0] += 0.15
    seq = KernelSequence.homogeneous(p)
    v = (np.arange(n) + 1.0) ** 2
    beta = fit_beta(seq, v, 0.5, [0, 1])
    return drift_constants(seq, v, PhiSpec(beta, 0.5), [0, 1])


def dense_oracle(aug_k, g, killed):
    """Linear solve on the ``d = 0`` block of the dense augmented matrix."""
    n = aug_k.n_states
    nn = n * n
    k00 = aug_k.dense()[:nn, :nn].copy()
    if killed:
        k00[aug_k.cbar.ravel()] = 0.0
    h = np.linalg.solve(np.eye(nn) - k00, g.ravel())
    return h.reshape(n, n)


@pytest.mark.parametrize("make", [two_state, regen_chain])
def test_dense_rows_and_marginals(make):
    cert = make()
    aug = AugmentedSequence(cert)
    d = aug.step(1).dense()
    assert np.allclose(d.sum(axis=1), 1.0, rtol=0, atol=1e-14)
    assert d.min() >= 0
    n = aug.n_states
    for x in range(n):
        for xp in range(n):
            assert marginal_check(aug, x, xp, 40) <= 1e-12


def test_shipped_marginals():
    for spec in shipped_specs():
        aug = AugmentedSequence(spec.certificate())
        n = aug.n_states
        assert max(marginal_check(aug, x, xp, 30) for x in (0, n - 1) for xp in (0, n - 1)) <= 1e-12


@pytest.mark.parametrize("make", [two_state, regen_chain])
@pytest.mark.parametrize("weight", ["one", "phi_vbar"])
def test_dp_matches_linear_solve(make, weight):
    cert = make()
    aug = AugmentedSequence(cert)
    g = weight_matrix(cert, weight)
    exact = dense_oracle(aug.step(1), g, killed=False)
    res = dp_all_starts(aug, weight, tol=1e-13)
    assert np.allclose(res.value, exact, rtol=1e-11, atol=0)
    x, xp = aug.n_states - 1, 0
    single = dp_expected_sum(aug, (x, xp), weight, tol=1e-13)
    assert single.value == pytest.approx(exact[x, xp], rel=1e-11)
    assert single.tail >= 0


def test_first_tour_matches_linear_solve():
    cert = regen_chain()
    aug = AugmentedSequence(cert)
    g = weight_matrix(cert, "phi_vbar")
    cbar = aug.step(1).cbar
    inclusive = dense_oracle(aug.step(1), g, killed=True)
    # the exclusive sum stops strictly before T_1, so g is dropped on C x C
    exclusive = dense_oracle(aug.step(1), np.where(cbar, 0.0, g), killed=True)
    res = dp_all_starts(aug, "phi_vbar", stop="T1", inclusive=True, tol=1e-13)
    assert np.allclose(res.value, inclusive, rtol=1e-11, atol=0)
    res = dp_all_starts(aug, "phi_vbar", stop="T1", inclusive=False, tol=1e-13)
    assert np.allclose(res.value, exclusive, rtol=1e-11, atol=1e-14)
    assert np.all(res.value[cbar] == 0.0)


def test_coupling_time_geometric():
    # C is the whole space, so every step couples with probability eps_nu
    aug = AugmentedSequence(two_state())
    res = dp_expected_sum(aug, (0, 1), "one", tol=1e-14)
    assert res.value == pytest.approx(1 / 0.7, rel=1e-12)
    visits = dp_expected_sum(aug, (0, 1), "cbar", tol=1e-14)
    assert visits.value == pytest.approx(1 / 0.7, rel=1e-12)


def test_certain_coupling():
    seq = KernelSequence.homogeneous([[0.3, 0.7], [0.3, 0.7]])
    cert = drift_constants(seq, [1.0, 1.0], PhiSpec(0.5, 0.0), [0, 1], eps_b=0.5)
    assert cert.eps_nu == pytest.approx(1.0)
    aug = AugmentedSequence(cert)
    assert dp_expected_sum(aug, (0, 1), "one").value == 1.0
    stats = simulate(aug, (0, 1), 50, 3)
    assert np.all(stats.samples["tau"] == 1)


def test_rate_weighted_sum_consistent():
    cert = regen_chain()
    aug = AugmentedSequence(cert)
    allv = dp_all_starts(aug, "one", rate="r", tol=1e-13)
    one = dp_expected_sum(aug, (7, 2), "one", rate="r", tol=1e-13)
    assert one.value == pytest.approx(allv.value[7, 2], rel=1e-11)


def test_dominators_bound_the_value():
    cert = regen_chain()
    aug = AugmentedSequence(cert)
    g = weight_matrix(cert, "one")
    exact = dense_oracle(aug.step(1), g, killed=False)
    for dom in (survival_dominator(aug, g, None, "tau"), lemma_dominator(cert, g, None, "tau")):
        assert np.all(dom >= exact * (1 - 1e-12))
    with pytest.raises(DomainError):
        dp_expected_sum(aug, (0, 0), "one", dominator="bogus")


def test_simulation_seed_determinism_and_agreement():
    cert = regen_chain()
    aug = AugmentedSequence(cert)
    a = simulate(aug, (6, 1), 4000, 99, chunk=512)
    b = simulate(aug, (6, 1), 4000, 99, chunk=1500, threads=3)
    for name in a.STATS:
        assert np.array_equal(a.samples[name], b.samples[name])
        assert a.mean[name] == b.mean[name]
    c = simulate(aug, (6, 1), 4000, 100)
    assert not np.array_equal(a.samples["tau"], c.samples["tau"])
    exact = dp_expected_sum(aug, (6, 1), "one", tol=1e-13).value
    assert abs(a.mean["tau"] - exact) <= 3 * a.std_error["tau"]


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 63))
def test_simulated_tau_at_least_one(seed):
    aug = AugmentedSequence(two_state())
    stats = simulate(aug, (0, 1), 64, seed)
    assert stats.samples["tau"].min() >= 1 and stats.samples["t1"].min() == 0


def test_negative_residual_kernel_rejected():
    cert = two_state()
    other = KernelSequence.homogeneous([[0.99, 0.01], [0.01, 0.99]])
    with pytest.raises(KernelError, match="residual"):
        build_augmented(cert, 1, other)


def test_bad_arguments():
    aug = AugmentedSequence(two_state())
    with pytest.raises(DomainError):
        dp_expected_sum(aug, (0, 0), stop="never")
    with pytest.raises(DomainError):
        simulate(aug, (0, 0), 0, 1)
    with pytest.raises(DomainError):
        dp_expected_sum(aug, (0, 0), weight=-np.ones((2, 2)))
