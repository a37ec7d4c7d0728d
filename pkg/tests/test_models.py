"""Tests for the benchmark energy models.

Every closed-form expectation here is recomputed inline from the model
definition (tables, coupling matrices, coordinates), independently of the
vectorized implementations.
"""

import math

import numpy as np
import pytest

from hiss.domain import enumerate_states, finite_difference_gradient
from hiss.models import (
    BERNOULLI4D_PROBS,
    AntidiagonalIsingModel,
    BinaryMlpModel,
    TabularModel,
    TspModel,
    bernoulli4d,
    binary_mlp,
    ising_3x3,
    load_regression_csv,
    synthetic_regression,
)


def _max_relative_error(analytic, numeric):
    scale = np.maximum(np.max(np.abs(numeric), axis=-1), 1e-12)
    return float(np.max(np.max(np.abs(analytic - numeric), axis=-1) / scale))


class TestTabularModel:
    def test_lattice_energies_are_log_table(self):
        model = bernoulli4d()
        states = enumerate_states(model.domain)
        probs = np.full(16, 5.882e-6)
        for bits, p in BERNOULLI4D_PROBS.items():
            probs[int(bits, 2)] = p
        np.testing.assert_allclose(
            model.energy(states, count=False), np.log(probs), atol=1e-12
        )

    def test_named_modes(self):
        model = bernoulli4d()
        assert model.energy(np.array([0.0, 0.0, 0.0, 0.0]), count=False) == pytest.approx(
            math.log(0.588204)
        )
        assert model.energy(np.array([1.0, 1.0, 1.0, 0.0]), count=False) == pytest.approx(
            math.log(0.294102)
        )

    def test_interior_point_is_multilinear_blend(self):
        """Off-lattice energy equals the lattice blend computed by brute force."""
        rng = np.random.default_rng(17)
        probs = rng.uniform(0.1, 1.0, size=8)
        model = TabularModel(probs)
        lattice = enumerate_states(model.domain)
        x = rng.uniform(0.0, 1.0, size=3)
        expected = 0.0
        for corner, logp in zip(lattice, np.log(probs)):
            weight = np.prod(np.where(corner == 1.0, x, 1.0 - x))
            expected += weight * logp
        assert model.energy(x, count=False) == pytest.approx(expected, abs=1e-12)

    def test_gradient_is_energy_difference_of_neighbors(self):
        """On binary lattices, dU/dx_i = U(x_i=1) - U(x_i=0) exactly."""
        model = bernoulli4d()
        states = enumerate_states(model.domain)
        grads = model.gradient(states, count=False)
        for i in range(4):
            hi = states.copy()
            lo = states.copy()
            hi[:, i] = 1.0
            lo[:, i] = 0.0
            diff = model.energy(hi, count=False) - model.energy(lo, count=False)
            np.testing.assert_allclose(grads[:, i], diff, atol=1e-10)

    def test_gradient_matches_finite_differences(self):
        model = bernoulli4d()
        rng = np.random.default_rng(23)
        pts = rng.uniform(0.0, 1.0, size=(50, 4))
        fd = finite_difference_gradient(model, pts)
        assert _max_relative_error(model.gradient(pts, count=False), fd) < 1e-6

    def test_rejects_bad_tables(self):
        with pytest.raises(ValueError):
            TabularModel(np.ones(3))  # not a power of two
        with pytest.raises(ValueError):
            TabularModel(np.array([0.5, 0.0]))  # zero entry
        with pytest.raises(ValueError):
            TabularModel(np.ones((2, 2)))  # wrong rank

    def test_initial_state(self):
        np.testing.assert_array_equal(bernoulli4d().initial_state(), np.zeros(4))


class TestIsingModel:
    def test_energy_matches_matrix_form(self):
        """U = a x^T W x + b 1^T x with W the anti-diagonal flip matrix."""
        model = ising_3x3()
        W = model.coupling_matrix
        states = enumerate_states(model.domain)
        expected = 0.5 * np.einsum("bi,ij,bj->b", states, W, states) + 0.1 * states.sum(
            axis=1
        )
        np.testing.assert_allclose(model.energy(states, count=False), expected, atol=1e-12)

    def test_uniform_states_closed_form(self):
        model = ising_3x3()
        # all +1: quad = 9, field = 9 -> 4.5 + 0.9
        assert model.energy(np.ones(9), count=False) == pytest.approx(5.4)
        # all -1: quad = 9, field = -9 -> 4.5 - 0.9
        assert model.energy(-np.ones(9), count=False) == pytest.approx(3.6)

    def test_single_flip_changes_two_coupling_terms(self):
        model = ising_3x3()
        state = np.ones(9)
        flipped = state.copy()
        flipped[0] = -1.0
        # flipping site 0 flips the (0, 8) pair twice: quad 9 -> 5, field 9 -> 7
        expected = 0.5 * 5.0 + 0.1 * 7.0
        assert model.energy(flipped, count=False) == pytest.approx(expected)

    def test_gradient_matches_matrix_form(self):
        model = ising_3x3()
        W = model.coupling_matrix
        rng = np.random.default_rng(4)
        pts = rng.choice([-1.0, 1.0], size=(30, 9))
        expected = 2.0 * 0.5 * pts @ W.T + 0.1
        np.testing.assert_allclose(model.gradient(pts, count=False), expected, atol=1e-12)

    def test_gradient_matches_finite_differences(self):
        model = ising_3x3()
        rng = np.random.default_rng(12)
        pts = rng.uniform(-1.0, 1.0, size=(50, 9))
        fd = finite_difference_gradient(model, pts)
        assert _max_relative_error(model.gradient(pts, count=False), fd) < 1e-7

    def test_initial_state_is_all_down(self):
        np.testing.assert_array_equal(ising_3x3().initial_state(), -np.ones(9))

    def test_rejects_bad_side(self):
        with pytest.raises(ValueError):
            AntidiagonalIsingModel(side=0)


class TestTspModel:
    def test_eil14_loads(self):
        model = TspModel.eil14()
        assert model.num_cities == 14
        assert model.domain.num_coordinates == 196
        np.testing.assert_allclose(model.distances, model.distances.T)
        assert np.all(np.diag(model.distances) == 0.0)

    def test_identity_tour_energy(self):
        """Energy of the identity assignment is minus the 0-1-...-13 loop length."""
        model = TspModel.eil14()
        tour = np.arange(14)
        length = sum(
            math.dist(model.coords[tour[i]], model.coords[tour[(i + 1) % 14]])
            for i in range(14)
        )
        state = np.eye(14).ravel()
        assert model.energy(state, count=False) == pytest.approx(-length, abs=1e-9)
        assert model.tour_length(tour) == pytest.approx(length, abs=1e-9)

    def test_energy_of_permutation_state(self):
        model = TspModel.eil14()
        rng = np.random.default_rng(3)
        perm = rng.permutation(14)
        state = np.zeros((14, 14))
        state[np.arange(14), perm] = 1.0
        assert model.energy(state.ravel(), count=False) == pytest.approx(
            -model.tour_length(perm), abs=1e-9
        )

    def test_support_detects_feasibility(self):
        model = TspModel.eil14()
        assert model.support(model.initial_state())
        rng = np.random.default_rng(9)
        perm = rng.permutation(14)
        state = np.zeros((14, 14))
        state[np.arange(14), perm] = 1.0
        assert model.support(state.ravel())
        broken = state.copy()
        broken[0, perm[0]] = 0.0  # empty row
        assert not model.support(broken.ravel())
        doubled = state.copy()
        doubled[0, (perm[0] + 1) % 14] = 1.0  # doubly assigned position
        assert not model.support(doubled.ravel())
        assert not model.support(np.ones(196))

    def test_tour_roundtrip(self):
        model = TspModel.eil14()
        rng = np.random.default_rng(21)
        perm = rng.permutation(14)
        state = np.zeros((14, 14))
        state[np.arange(14), perm] = 1.0
        np.testing.assert_array_equal(model.tour_of(state.ravel()), perm)
        with pytest.raises(ValueError):
            model.tour_of(np.ones(196))

    def test_gradient_matches_finite_differences(self):
        model = TspModel.eil14()
        rng = np.random.default_rng(8)
        pts = rng.integers(0, 2, size=(10, 196)).astype(float)
        fd = finite_difference_gradient(model, pts)
        assert _max_relative_error(model.gradient(pts, count=False), fd) < 1e-6

    def test_from_tsplib_rejects_non_euclidean(self, tmp_path):
        bad = tmp_path / "bad.tsp"
        bad.write_text(
            "NAME : x\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : GEO\n"
            "NODE_COORD_SECTION\n1 0 0\n2 0 1\n3 1 0\nEOF\n"
        )
        with pytest.raises(ValueError):
            TspModel.from_tsplib(bad)

    def test_from_tsplib_rejects_missing_rows(self, tmp_path):
        bad = tmp_path / "short.tsp"
        bad.write_text(
            "NAME : x\nDIMENSION : 4\nEDGE_WEIGHT_TYPE : EUC_2D\n"
            "NODE_COORD_SECTION\n1 0 0\n2 0 1\n3 1 0\nEOF\n"
        )
        with pytest.raises(ValueError):
            TspModel.from_tsplib(bad)

    def test_rejects_tiny_instances(self):
        with pytest.raises(ValueError):
            TspModel(np.zeros((2, 2)))


class TestBinaryMlpModel:
    def test_single_unit_energy_by_hand(self):
        """hidden=1, one data point: U = -(w2 tanh(w1 x) - y)^2."""
        inputs = np.array([[2.0]])
        targets = np.array([0.5])
        model = BinaryMlpModel(inputs, targets, hidden=1)
        for w1 in (-1.0, 1.0):
            for w2 in (-1.0, 1.0):
                state = np.array([w1, w2])
                expected = -((w2 * math.tanh(w1 * 2.0) - 0.5) ** 2)
                assert model.energy(state, count=False) == pytest.approx(expected)

    def test_single_unit_gradient_by_hand(self):
        inputs = np.array([[2.0]])
        targets = np.array([0.5])
        model = BinaryMlpModel(inputs, targets, hidden=1)
        w1, w2 = 1.0, -1.0
        h = math.tanh(w1 * 2.0)
        resid = w2 * h - 0.5
        expected = np.array(
            [-2.0 * resid * w2 * (1.0 - h**2) * 2.0, -2.0 * resid * h]
        )
        np.testing.assert_allclose(
            model.gradient(np.array([w1, w2]), count=False), expected, atol=1e-12
        )

    def test_gradient_matches_finite_differences(self):
        inputs, targets = synthetic_regression(num_points=16, in_dim=3, hidden=4)
        model = BinaryMlpModel(inputs, targets, hidden=4)
        rng = np.random.default_rng(31)
        pts = rng.uniform(-1.0, 1.0, size=(30, model.domain.num_coordinates))
        fd = finite_difference_gradient(model, pts)
        assert _max_relative_error(model.gradient(pts, count=False), fd) < 1e-4

    def test_state_layout(self):
        inputs, targets = synthetic_regression(num_points=8, in_dim=3, hidden=2)
        model = BinaryMlpModel(inputs, targets, hidden=2)
        assert model.domain.num_coordinates == 2 * 3 + 2
        # zeroing w2 must zero the output regardless of w1
        state = np.concatenate([np.ones(6), np.zeros(2)])
        assert model.energy(state, count=False) == pytest.approx(-np.sum(targets**2))

    def test_synthetic_regression_is_deterministic(self):
        a = synthetic_regression(seed=7)
        b = synthetic_regression(seed=7)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])
        c = synthetic_regression(seed=8)
        assert not np.array_equal(a[1], c[1])

    def test_validation(self):
        with pytest.raises(ValueError):
            BinaryMlpModel(np.zeros((4, 2)), np.zeros(3), hidden=2)
        with pytest.raises(ValueError):
            BinaryMlpModel(np.zeros(4), np.zeros(4), hidden=2)
        with pytest.raises(ValueError):
            BinaryMlpModel(np.zeros((4, 2)), np.zeros(4), hidden=0)
        with pytest.raises(ValueError):
            binary_mlp(inputs=np.zeros((4, 2)))


def test_load_regression_csv(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("a,b,y\n1.0,2.0,3.0\n4.0,5.0,6.0\n")
    x, y = load_regression_csv(path)
    np.testing.assert_array_equal(x, [[1.0, 2.0], [4.0, 5.0]])
    np.testing.assert_array_equal(y, [3.0, 6.0])
    bare = tmp_path / "bare.csv"
    bare.write_text("1.0,2.0\n3.0,4.0\n")
    x2, y2 = load_regression_csv(bare)
    np.testing.assert_array_equal(x2, [[1.0], [3.0]])
    np.testing.assert_array_equal(y2, [2.0, 4.0])
    with pytest.raises(ValueError):
        narrow = tmp_path / "narrow.csv"
        narrow.write_text("1.0\n2.0\n")
        load_regression_csv(narrow)
