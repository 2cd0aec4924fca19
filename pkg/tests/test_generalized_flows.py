import math
import os
import tempfile

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chflows.cone_geometry import ConePoint, cone_geodesic, develop
from chflows.discretization import boundary_eval, peakon_map
from chflows.generalized_flows import (
    DiscretePathMeasure,
    b_functional,
    coupling_pairing,
    dilate,
    homogeneous_marginal,
    lift_deterministic,
    path_action,
    rescale_to_unit,
    sigma_energy,
    sigma_r0,
    strong_coupling_check,
)


def _ladder(K, T=1.0):
    return np.linspace(0.0, T, K)


@st.composite
def measures(draw, min_r=0.1):
    P = draw(st.integers(1, 5))
    K = draw(st.integers(2, 6))
    T = draw(st.floats(0.25, 3.0))
    xs = draw(arrays(float, (P, K), elements=st.floats(0, 1)))
    rs = draw(arrays(float, (P, K), elements=st.floats(min_r, 3)))
    w = draw(arrays(float, P, elements=st.floats(0.01, 2)))
    return DiscretePathMeasure(xs, rs, w, _ladder(K, T))


def _peakon_lift(n=42, K=5):
    x = (np.arange(n) + 0.5) / n
    h, s = boundary_eval(peakon_map(), x)
    a = np.linspace(0, 1, K)
    phi = x[:, None] + a[None, :] * (h - x)[:, None]
    lam = np.sqrt(1 + a[None, :] * (s - 1)[:, None])
    return lift_deterministic(phi, lam, np.full(n, 1 / n), _ladder(K))


class TestMeasure:
    def test_validation(self):
        with pytest.raises(ValueError):
            DiscretePathMeasure([[0.1, 0.2]], [[1, 1]], [-1.0], [0, 1])
        with pytest.raises(ValueError):
            DiscretePathMeasure([[0.1, 0.2]], [[1, 1]], [1.0], [0, 0])
        with pytest.raises(ValueError):
            DiscretePathMeasure([[0.1, 1.2]], [[1, 1]], [1.0], [0, 1])
        with pytest.raises(ValueError):
            DiscretePathMeasure([[0.1, 0.2]], [[1, 1]], [1.0, 2.0], [0, 1])

    def test_apex_canonical_and_readonly(self):
        m = DiscretePathMeasure([[0.3, 0.4]], [[0.0, 1.0]], [2.0], [0, 1])
        assert m.xs[0, 0] == 0.0 and m.path(0)[0] == ConePoint(0.7, 0.0)
        with pytest.raises(ValueError):
            m.weights[0] = 1.0
        assert m.mass == 2.0 and m.K == 2 and m.T == 1.0

    @given(measures())
    def test_csv_roundtrip(self, m):
        with tempfile.TemporaryDirectory() as d:
            path = os.path.join(d, "m.csv")
            m.to_csv(path)
            back = DiscretePathMeasure.from_csv(path)
        for a in ("xs", "rs", "weights", "ts"):
            assert np.array_equal(getattr(back, a), getattr(m, a))


class TestAction:
    def test_constant(self):
        assert path_action([0.4] * 5, [1.3] * 5, _ladder(5)) == 0.0

    @pytest.mark.parametrize("K", [2, 3, 7, 20])
    @pytest.mark.parametrize("T", [1.0, 2.5])
    def test_geodesic_chords(self, K, T):
        a, b = ConePoint(0.0, 1.0), ConePoint(1.0, 1.0)
        pts = [cone_geodesic(a, b, s) for s in np.linspace(0, 1, K)]
        xs, rs = [p.x for p in pts], [p.r for p in pts]
        # independent value: chords measured in the developed plane
        plane = np.array([develop(p) for p in pts])
        chord2 = (np.diff(plane, axis=0) ** 2).sum(axis=1)
        ref = chord2.sum() * (K - 1) / T
        got = path_action(xs, rs, _ladder(K, T))
        assert got == pytest.approx(ref, rel=1e-12)
        assert got == pytest.approx((2 - 2 * math.cos(1.0)) / T, rel=1e-12)
        assert 2 - 2 * math.cos(1.0) == pytest.approx(0.919395, abs=1e-6)

    def test_radial(self):
        assert path_action([0.2] * 11, np.linspace(1, 2, 11), _ladder(11)) == pytest.approx(1.0, rel=1e-14)

    def test_batch(self):
        xs = np.array([[0.1, 0.1], [0.2, 0.2]])
        rs = np.array([[1.0, 2.0], [1.0, 3.0]])
        assert list(path_action(xs, rs, [0, 1])) == [1.0, 4.0]

    @given(measures(), st.floats(0.1, 10))
    def test_two_homogeneous(self, m, lam):
        a = m.actions()
        b = path_action(m.xs, lam * m.rs, m.ts)
        assert np.allclose(b, lam ** 2 * a, rtol=1e-12, atol=1e-12)

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            path_action([0.1], [1.0], [0.0])


class TestBFunctional:
    @given(measures())
    def test_zero_pressure(self, m):
        zero = lambda t, x: np.zeros(np.broadcast(t, x).shape)
        assert np.allclose(b_functional(m.xs, m.rs, m.ts, zero), m.actions(), rtol=0, atol=0)

    def test_constant_pressure(self):
        ts = _ladder(4, 2.0)
        c = 0.7
        v = b_functional([0.5] * 4, [1.0] * 4, ts, lambda t, x: np.full(np.shape(t), c))
        assert v == pytest.approx(-c * 2.0, rel=1e-14)

    def test_linear_pressure(self):
        # P = 1 + 3t on r = 2: int_0^1 4(1 + 3t) dt = 10
        ts = _ladder(3)
        v = b_functional([0.5] * 3, [2.0] * 3, ts, lambda t, x: 1 + 3 * np.asarray(t))
        assert v == pytest.approx(-10.0, rel=1e-14)

    def test_nonfinite(self):
        with pytest.raises(ValueError):
            b_functional([0.5] * 2, [1.0] * 2, [0, 1], lambda t, x: np.full(2, np.inf))


class TestMarginal:
    def test_identity_lift(self):
        n = 8
        x = (np.arange(n) + 0.5) / n
        m = lift_deterministic(np.tile(x[:, None], 3), np.ones((n, 3)), np.full(n, 1 / n), _ladder(3))
        for k in (1, 2, 3):
            assert np.allclose(homogeneous_marginal(m, k, n), 1 / n, rtol=0, atol=1e-15)

    def test_single_path(self):
        m = DiscretePathMeasure([[0.35, 0.35]], [[2.0, 2.0]], [0.3], [0, 1])
        v = homogeneous_marginal(m, 2, 10)
        assert v[3] == pytest.approx(1.2) and v.sum() == pytest.approx(1.2)

    def test_peakon_lift_endpoints(self):
        m = _peakon_lift()
        # start: one bin per atom; end: 42 atoms regroup evenly into 10 bins
        assert np.allclose(homogeneous_marginal(m, 1, 42), 1 / 42, rtol=0, atol=1e-15)
        assert np.allclose(homogeneous_marginal(m, m.K, 10), 0.1, rtol=0, atol=1e-14)

    def test_apex_paths_ignored(self):
        m = DiscretePathMeasure([[0.5, 0.5]], [[0.0, 0.0]], [1.0], [0, 1])
        assert homogeneous_marginal(m, 1, 4).sum() == 0.0

    def test_level_range(self):
        with pytest.raises(ValueError):
            homogeneous_marginal(_peakon_lift(), 0, 4)


class TestDilation:
    def test_identity(self):
        m = _peakon_lift()
        d = dilate(m, np.ones(m.n_paths))
        assert np.array_equal(d.rs, m.rs) and np.array_equal(d.weights, m.weights)

    def test_two_path_example(self):
        m = DiscretePathMeasure([[0.2] * 3, [0.6] * 3], [[1.0] * 3, [3.0] * 3], [0.5, 0.5], _ladder(3))
        d = dilate(m, sigma_r0(m) / math.sqrt(5))
        assert np.allclose(d.rs, math.sqrt(5), rtol=1e-15)
        assert np.allclose(d.weights, [0.1, 0.9], rtol=1e-15) and d.mass == pytest.approx(1.0)
        u, C = rescale_to_unit(m, sigma_r0(m))
        assert C == pytest.approx(math.sqrt(5), rel=1e-15)
        assert np.allclose(u.weights, [0.1, 0.9]) and np.allclose(sigma_r0(u), math.sqrt(5))

    def test_rejects_nonpositive_theta(self):
        m = _peakon_lift()
        with pytest.raises(ValueError):
            dilate(m, np.zeros(m.n_paths))
        with pytest.raises(ValueError):
            dilate(m, np.ones(3))

    def test_uncharged_paths_untouched(self):
        m = DiscretePathMeasure([[0.2] * 2, [0.4] * 2], [[1.0] * 2, [2.0] * 2], [1.0, 0.0], [0, 1])
        d = dilate(m, np.array([2.0, 0.0]))
        assert np.array_equal(d.rs[1], m.rs[1]) and d.weights[1] == 0.0

    @given(measures(), st.sampled_from(["r0", "energy"]), st.floats(0.1, 5))
    def test_invariants(self, m, which, c):
        sigma = sigma_r0(m) if which == "r0" else sigma_energy(m)
        d = dilate(m, c * sigma)
        assert d.total_action() == pytest.approx(m.total_action(), rel=1e-12, abs=1e-12)
        for k in (1, m.K):
            assert np.allclose(homogeneous_marginal(d, k, 7), homogeneous_marginal(m, k, 7), rtol=1e-12, atol=1e-14)

    @given(measures(), st.sampled_from(["r0", "energy"]))
    def test_rescale_to_unit(self, m, which):
        sig = sigma_r0 if which == "r0" else sigma_energy
        u, C = rescale_to_unit(m, sig(m))
        assert u.mass == pytest.approx(1.0, rel=1e-12)
        assert np.allclose(sig(u), C, rtol=1e-12)

    def test_single_path(self):
        m = DiscretePathMeasure([[0.3, 0.5]], [[2.0, 1.0]], [0.25], [0, 1])
        u, C = rescale_to_unit(m, sigma_energy(m))
        assert u.mass == pytest.approx(1.0) and sigma_energy(u)[0] == pytest.approx(C)

    def test_energy_normalisation(self):
        # admissible: unit homogeneous marginals at every level give C^2 = T + 2
        for T in (1.0, 2.0):
            m = _peakon_lift(K=9)
            m = DiscretePathMeasure(m.xs, m.rs, m.weights, _ladder(9, T))
            r2 = m.weights @ m.rs ** 2
            assert np.allclose(r2[[0, -1]], 1.0)
            _, C = rescale_to_unit(m, sigma_energy(m))
            exact = 2 + np.trapezoid(r2, m.ts)
            assert C ** 2 == pytest.approx(exact, rel=1e-14)
            # interior levels of the interpolated lift carry mass 1 as well
            assert C ** 2 == pytest.approx(T + 2, rel=1e-12)

    def test_zero_normaliser(self):
        m = DiscretePathMeasure([[0.3, 0.5]], [[0.0, 0.0]], [1.0], [0, 1])
        with pytest.raises(ValueError):
            rescale_to_unit(m, sigma_r0(m))


class TestCoupling:
    def test_diffeomorphism_lift(self):
        rep = strong_coupling_check(_peakon_lift())
        assert (rep.apex_start_mass, rep.apex_both_mass) == (0.0, 0.0) and rep.rescalable

    def test_apex_path(self):
        m = DiscretePathMeasure([[0.0, 0.0]], [[0.0, 0.0]], [0.5], [0, 1])
        rep = strong_coupling_check(m)
        assert rep.apex_both_mass == 0.5 and not rep.rescalable

    def test_mixture(self):
        lift = _peakon_lift(K=2)
        xs = np.vstack([lift.xs, [[0.0, 0.0]]])
        rs = np.vstack([lift.rs, [[0.0, 0.0]]])
        w = np.concatenate([0.9 * lift.weights, [0.1]])
        rep = strong_coupling_check(DiscretePathMeasure(xs, rs, w, [0, 1]))
        assert rep.apex_start_mass == pytest.approx(0.1) and rep.apex_both_mass == pytest.approx(0.1)

    def test_identity_lift_is_constant(self):
        x = np.array([0.1, 0.5])
        m = lift_deterministic(np.tile(x[:, None], 3), np.ones((2, 3)), [0.5, 0.5], _ladder(3))
        assert np.all(m.rs == 1.0) and m.total_action() == 0.0
        with pytest.raises(ValueError):
            lift_deterministic([[0.1, 0.2]], [[1.0, 0.0]], [1.0], [0, 1])

    @pytest.mark.parametrize("a,b", [(0, 0), (1, 0), (0, 1), (2, 3)])
    def test_pairing_basis(self, a, b):
        # f = cos(a pi x0) cos(b pi xT) r0 rT; the coupling is the lift's (x, h(x)) law
        n = 42
        x = (np.arange(n) + 0.5) / n
        h, s = boundary_eval(peakon_map(), x)
        m = _peakon_lift(n)

        def f(x0, r0, xT, rT):
            return np.cos(a * np.pi * x0) * np.cos(b * np.pi * xT) * r0 * rT

        ref = sum(np.cos(a * np.pi * xi) * np.cos(b * np.pi * hi) * np.sqrt(si) / n for xi, hi, si in zip(x, h, s))
        assert coupling_pairing(m, f) == pytest.approx(ref, rel=1e-12, abs=1e-15)
