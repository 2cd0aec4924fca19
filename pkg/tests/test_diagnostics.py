import math
from dataclasses import replace

import numpy as np
import pytest
from conftest import brute_plan, make_factors
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chflows.diagnostics import (
    PlanAction,
    PlanSlice,
    base_transport_plan,
    cone_marginal,
    determinism_index,
    extract_pressure,
    plan_action,
    plan_entropy,
    profile_modes,
    radial_profile,
    regularized_objective,
)
from chflows.discretization import build_grid, identity_map, peakon_map, reflection_map
from chflows.io import read_matrix_csv, read_pgm, write_matrix_csv, write_pgm
from chflows.mmot_solver import DualPotentials, all_marginals, moment_M, sinkhorn_solve
from chflows.oracle import exhaustive_solve

duals_3x3 = arrays(float, (3, 3), elements=st.floats(-2.0, 2.0))


def _peakon():
    return make_factors(3, 3, 0.5, 1.5, 3, peakon_map())


class TestSlices:
    @given(duals_3x3, st.integers(1, 3))
    def test_base_plan_matches_enumeration(self, p, k):
        f = _peakon()
        g = f.grid
        paths, mu = brute_plan(g, peakon_map(), f.eps, f.alpha, p)
        ref = np.zeros((g.nx, g.nx))
        np.add.at(ref, (paths[:, 0] // g.nr, paths[:, k - 1] // g.nr), mu)
        sl = base_transport_plan(f, DualPotentials(p), k)
        assert np.allclose(sl.matrix, ref, rtol=1e-12, atol=0)
        assert sl.mass == pytest.approx(mu.sum(), rel=1e-12)

    def test_first_level_is_diagonal(self, tiny_peakon):
        m = base_transport_plan(tiny_peakon, DualPotentials.zeros(3, 3), 1).matrix
        assert np.all(m[~np.eye(3, dtype=bool)] == 0)

    @given(duals_3x3)
    def test_cone_marginal_is_level_marginal(self, p):
        f = _peakon()
        S = all_marginals(f, DualPotentials(p))
        for k in (1, 2, 3):
            sl = cone_marginal(f, DualPotentials(p), k)
            assert np.allclose(sl.matrix.ravel(), S[k - 1], rtol=1e-12, atol=0)
            assert np.allclose((sl.matrix * f.grid.rs ** 2).sum(axis=1), moment_M(S[k - 1], 2, f.grid))

    def test_row_sums_and_mass_after_solve(self, tiny_peakon):
        d, _ = sinkhorn_solve(tiny_peakon, tolerance=1e-11)
        masses = []
        for k in (1, 2, 3):
            sl = base_transport_plan(tiny_peakon, d, k)
            masses.append(sl.mass)
            rows = base_transport_plan(tiny_peakon, d, 1).matrix.sum(axis=1)
            assert np.allclose(sl.matrix.sum(axis=1), rows, rtol=1e-12)
            cm = cone_marginal(tiny_peakon, d, k)
            assert np.allclose(3 * (cm.matrix * tiny_peakon.grid.rs ** 2).sum(axis=1), 1.0, atol=1e-10)
        assert np.allclose(masses, masses[0], rtol=1e-12)

    def test_slice_validation(self):
        with pytest.raises(ValueError):
            PlanSlice(np.array([[-1.0]]), 1, "a", "b", [0.0], [0.0], -1.0)
        with pytest.raises(ValueError):
            PlanSlice(np.array([[1.0]]), 1, "a", "b", [0.0], [0.0], 2.0)

    def test_level_range(self, tiny_peakon):
        with pytest.raises(ValueError):
            base_transport_plan(tiny_peakon, DualPotentials.zeros(3, 3), 0)


class TestActionEntropy:
    @given(duals_3x3)
    def test_against_enumeration(self, p):
        f = _peakon()
        paths, mu = brute_plan(f.grid, peakon_map(), f.eps, f.alpha, p)
        from chflows.oracle import enumerate_paths

        _, tr, cp = enumerate_paths(f.grid, peakon_map(), f.alpha)
        a = plan_action(f, DualPotentials(p))
        assert a.transport == pytest.approx(mu @ tr, rel=1e-11)
        assert a.coupling == pytest.approx(mu @ cp, rel=1e-11, abs=1e-300)
        assert a.total == pytest.approx(mu @ (tr + cp), rel=1e-11)
        m = mu[mu > 0]
        ent = -(m * (np.log(m) - 1)).sum()
        assert plan_entropy(f, DualPotentials(p), a) == pytest.approx(ent, rel=1e-9, abs=1e-9)

    @pytest.mark.parametrize("bmap,args", [
        (reflection_map(), (2, 3, 0.7, 1.3, 4)),
        (peakon_map(), (3, 3, 0.5, 1.5, 3)),
    ])
    def test_solved_against_oracle(self, bmap, args):
        f = make_factors(*args, bmap)
        d, rep = sinkhorn_solve(f, tolerance=1e-11)
        ref = exhaustive_solve(f.grid, bmap, f.eps, f.alpha)
        assert rep.converged
        assert plan_action(f, d).total == pytest.approx(ref.action, rel=1e-8)
        assert plan_entropy(f, d) == pytest.approx(ref.entropy, rel=1e-8, abs=1e-8)
        assert regularized_objective(f, d) == pytest.approx(ref.objective, rel=1e-8, abs=1e-8)

    def test_uniform_plan_entropy(self):
        # zero cost and zero duals: every path weighs 1
        f = make_factors(2, 2, 1.0, 2.0, 3, identity_map())
        zero = replace(f, log_xi=np.zeros_like(f.log_xi), log_xi_close=np.zeros_like(f.log_xi_close))
        # r = 1 is an end radius, so only the 2 unit nodes per level carry mass
        n_paths = 2 * 2 ** 2
        d = DualPotentials.zeros(3, 2)
        assert all_marginals(zero, d)[0].sum() == pytest.approx(n_paths)
        # each path weighs 1, so -sum mu (log mu - 1) is the path count
        assert plan_entropy(zero, d, PlanAction(0.0, 0.0)) == pytest.approx(n_paths)

    def test_entropy_decreases_with_eps(self):
        vals = []
        for eps in (1e-1, 1e-2, 1e-3):
            f = make_factors(5, 5, 0.6, 1.4, 4, peakon_map(), eps=eps, alpha=5.0)
            d, rep = sinkhorn_solve(f, tolerance=1e-10)
            assert rep.converged
            vals.append((plan_entropy(f, d), plan_action(f, d).total))
        ents, acts = zip(*vals)
        assert ents[0] > ents[1] > ents[2]
        assert acts[0] >= acts[1] >= acts[2]


class TestPressure:
    @given(duals_3x3, arrays(float, 3, elements=st.floats(-5, 5)))
    def test_gauge_invariant(self, p, shift):
        g = build_grid(3, 3, 0.5, 1.5, 3)
        a = extract_pressure(DualPotentials(p), g, 0.1)
        b = extract_pressure(DualPotentials(p + shift[:, None]), g, 0.1)
        assert np.allclose(a, b, atol=1e-12)
        assert np.allclose(a.sum(axis=1), 0, atol=1e-12)

    def test_scaling(self):
        g = build_grid(2, 2, 0.5, 1.5, 3, T=2.0)
        P = extract_pressure(DualPotentials([[1.0, -1.0]] * 3), g, 0.5)
        assert np.allclose(P, [[0.5, -0.5]] * 3)


class TestDeterminism:
    def test_examples(self):
        assert determinism_index(np.eye(4)) == 1.0
        assert determinism_index(np.ones((3, 3))) == pytest.approx(0.0, abs=1e-15)
        assert determinism_index([[0.5, 0.5], [0.0, 1.0]]) == pytest.approx(0.5)
        assert determinism_index([[1.0]]) == 1.0

    def test_mass_weighting_and_empty_rows(self):
        m = np.array([[3.0, 0.0], [0.5, 0.5], [0.0, 0.0]])
        assert determinism_index(m) == pytest.approx(1 - 0.25)
        with pytest.raises(ValueError):
            determinism_index(np.zeros((2, 2)))

    @given(arrays(float, (3, 4), elements=st.floats(0, 10)).filter(lambda m: m.sum() > 0))
    def test_range(self, m):
        v = determinism_index(m)
        assert -1e-12 <= v <= 1 + 1e-12

    def test_identity_solve_is_deterministic(self):
        f = make_factors(5, 5, 0.6, 1.4, 4, identity_map(), eps=0.01, alpha=40.0)
        d, _ = sinkhorn_solve(f)
        assert determinism_index(base_transport_plan(f, d, 4)) > 0.95


class TestProfiles:
    def test_modes(self):
        assert list(profile_modes([0, 1, 0, 2, 0])) == [1, 3]
        assert list(profile_modes([0, 0.01, 0, 1, 0])) == [3]
        assert list(profile_modes([3, 2, 1])) == [0]

    def test_radial_profile(self):
        sl = PlanSlice(np.array([[1.0, 2.0], [3.0, 4.0]]), 1, "x", "r", [0, 1], [0, 1], 10.0)
        assert list(radial_profile(sl)) == [4.0, 6.0]


class TestIO:
    def test_csv_roundtrip(self, tmp_path, rng):
        m = rng.random((3, 4)) * 1e-7
        write_matrix_csv(tmp_path / "a.csv", m, "x0", "x", [0.1, 0.2, 1 / 3], [0, 1, 2, math.pi])
        back, rv, cv, head = read_matrix_csv(tmp_path / "a.csv")
        assert np.array_equal(back, m) and head == "x0\\x"
        assert rv[2] == 1 / 3 and cv[3] == math.pi

    def test_pgm(self, tmp_path):
        m = np.array([[0.0, 1.0, 2.0], [4.0, 3.0, 2.0]])
        lo, hi = write_pgm(tmp_path / "a.pgm", m)
        img = read_pgm(tmp_path / "a.pgm")
        assert (lo, hi) == (0.0, 4.0)
        assert img.tolist() == [[0, 64, 128], [255, 191, 128]]
        assert (tmp_path / "a.pgm.txt").read_text() == "min 0.0\nmax 4.0\n"
        assert (tmp_path / "a.pgm").read_bytes().startswith(b"P5\n3 2\n255\n")

    def test_constant_pgm(self, tmp_path):
        write_pgm(tmp_path / "c.pgm", np.full((2, 2), 7.0))
        assert read_pgm(tmp_path / "c.pgm").max() == 0
