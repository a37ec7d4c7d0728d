"""Benchmark energy models on small discrete domains.

Four targets, all exposing exact gradients of a smooth energy extension:

* :class:`TabularModel`: any fully tabulated binary target, extended off the
  lattice multilinearly. :func:`bernoulli4d` builds the skewed 4-bit table
  used throughout the test-bed.
* :class:`AntidiagonalIsingModel`: a spin grid whose pairwise coupling links
  each site to its mirror across the anti-diagonal, plus a uniform field.
* :class:`TspModel`: tours of a Euclidean instance encoded as binary
  position-by-city assignment matrices with a smooth tour-length energy and
  a hard permutation constraint.
* :class:`BinaryMlpModel`: the pseudo-posterior over sign weights of a
  one-hidden-layer tanh regressor.
"""

from __future__ import annotations

import math
from importlib import resources

import numpy as np

from .domain import DomainSpec, EnergyModel, enumerate_states

__all__ = [
    "TabularModel",
    "AntidiagonalIsingModel",
    "TspModel",
    "BinaryMlpModel",
    "bernoulli4d",
    "ising_3x3",
    "binary_mlp",
    "synthetic_regression",
    "load_regression_csv",
]


class TabularModel(EnergyModel):
    """Fully tabulated target on {0, 1}^d with a multilinear extension.

    The energy of a real point x interpolates the lattice log-probabilities:

        U(x) = sum_a [ prod_n x_n^{a_n} (1 - x_n)^{1 - a_n} ] log p_a

    where a ranges over the lattice in the same lexicographic order as
    :func:`hiss.domain.enumerate_states`. On the lattice U(a) = log p_a
    exactly; gradients are polynomials obtained by differentiating the
    product factors. Evaluation is O(B * 2^d * d) per gradient coordinate,
    intended for small enumerable tables.
    """

    def __init__(self, probs):
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size < 2:
            raise ValueError("probs must be a flat table with at least 2 entries")
        d = int(round(math.log2(probs.size)))
        if 2 ** d != probs.size:
            raise ValueError(f"table size {probs.size} is not a power of two")
        if not np.all(probs > 0):
            raise ValueError("all table entries must be positive")
        super().__init__(DomainSpec.uniform(d, [0.0, 1.0]))
        self.log_probs = np.log(probs)
        self._lattice = enumerate_states(self.domain)  # (S, d) of 0/1

    def _factors(self, states: np.ndarray) -> np.ndarray:
        a = self._lattice[None, :, :]
        x = states[:, None, :]
        return a * x + (1.0 - a) * (1.0 - x)  # (B, S, d)

    def _energy(self, states):
        weights = np.prod(self._factors(states), axis=2)
        return weights @ self.log_probs

    def _gradient(self, states):
        f = self._factors(states)
        signs = 2.0 * self._lattice - 1.0  # d/dx of each factor
        b, s, d = f.shape
        grads = np.empty((b, d))
        for i in range(d):
            partial = np.prod(np.delete(f, i, axis=2), axis=2)  # (B, S)
            grads[:, i] = (partial * signs[None, :, i]) @ self.log_probs
        return grads


#: Lattice probabilities of the skewed 4-bit benchmark target, indexed in
#: lexicographic state order. Three states carry almost all mass (0000,
#: 1110, 1111); the other thirteen share ~7.6e-5.
BERNOULLI4D_PROBS = {
    "0000": 0.588204,
    "1110": 0.294102,
    "1111": 0.117641,
}
_BERNOULLI4D_FLOOR = 5.882e-6


def bernoulli4d() -> TabularModel:
    """The skewed three-mode target on four bits."""
    probs = np.full(16, _BERNOULLI4D_FLOOR)
    for bits, p in BERNOULLI4D_PROBS.items():
        probs[int(bits, 2)] = p
    return TabularModel(probs)


class AntidiagonalIsingModel(EnergyModel):
    """Spin grid with anti-diagonal mirror coupling and a uniform field.

    For a flattened side*side spin vector theta in {-1, +1}^D the energy is

        U(theta) = a * theta^T W theta + b * sum_i theta_i,

    where W[i][j] = 1 iff i + j = D - 1, so each site couples to its mirror
    image across the anti-diagonal (the central site couples to itself).
    The extension gradient is 2 a W theta + b.
    """

    def __init__(self, side: int = 3, coupling: float = 0.5, field: float = 0.1):
        if side < 1:
            raise ValueError("side must be positive")
        super().__init__(DomainSpec.uniform(side * side, [-1.0, 1.0]))
        self.side = int(side)
        self.coupling = float(coupling)
        self.field = float(field)

    @property
    def coupling_matrix(self) -> np.ndarray:
        d = self.side * self.side
        return np.fliplr(np.eye(d))

    def _energy(self, states):
        # theta^T W theta = sum_i theta_i * theta_{D-1-i}
        quad = np.sum(states * states[:, ::-1], axis=1)
        return self.coupling * quad + self.field * np.sum(states, axis=1)

    def _gradient(self, states):
        return 2.0 * self.coupling * states[:, ::-1] + self.field


def ising_3x3() -> AntidiagonalIsingModel:
    """The 3x3 benchmark grid with a = 0.5, b = 0.1."""
    return AntidiagonalIsingModel(side=3, coupling=0.5, field=0.1)


class TspModel(EnergyModel):
    """Travelling-salesman tours as binary assignment matrices.

    A state is the flattened n x n matrix X with X[i, a] = 1 when tour
    position i visits city a (row-major). The smooth energy is the negated
    soft tour length

        U(X) = - sum_i sum_{a,b} X[i, a] D[a, b] X[i+1 mod n, b],

    defined for arbitrary binary matrices; its gradient is
    dU/dX[i, a] = - sum_b D[a, b] (X[i+1, b] + X[i-1, b]). Only doubly
    one-hot matrices (each position one city, each city one position) are
    feasible tours, enforced through :meth:`support`, so infeasible
    proposals are rejected by the Metropolis step and every retained sample
    is a valid permutation.

    Distances are unrounded Euclidean lengths between the node coordinates.
    """

    def __init__(self, coords, name: str = ""):
        coords = np.asarray(coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] < 3:
            raise ValueError("coords must be (n, 2) with n >= 3")
        n = coords.shape[0]
        super().__init__(DomainSpec.uniform(n * n, [0.0, 1.0]))
        self.coords = coords
        self.name = name or f"tsp{n}"
        self.num_cities = n
        diff = coords[:, None, :] - coords[None, :, :]
        self.distances = np.sqrt(np.sum(diff ** 2, axis=2))

    def _as_matrix(self, states: np.ndarray) -> np.ndarray:
        n = self.num_cities
        return states.reshape(states.shape[0], n, n)

    def _energy(self, states):
        x = self._as_matrix(states)
        reach = np.einsum("bia,ac->bic", x, self.distances)
        return -np.einsum("bic,bic->b", reach, np.roll(x, -1, axis=1))

    def _gradient(self, states):
        x = self._as_matrix(states)
        neighbors = np.roll(x, -1, axis=1) + np.roll(x, 1, axis=1)
        grad = -np.einsum("bic,ac->bia", neighbors, self.distances)
        return grad.reshape(states.shape)

    def support(self, states):
        batch, single = self._as_batch(states)
        x = self._as_matrix(batch)
        ok = np.all(x.sum(axis=2) == 1.0, axis=1) & np.all(x.sum(axis=1) == 1.0, axis=1)
        return bool(ok[0]) if single else ok

    def initial_state(self):
        """Identity assignment: position i visits city i."""
        return np.eye(self.num_cities).ravel()

    def tour_of(self, state) -> np.ndarray:
        """City visited at each position; requires a feasible state."""
        if not self.support(state):
            raise ValueError("state is not a feasible tour")
        x = np.asarray(state, dtype=np.float64).reshape(self.num_cities, -1)
        return np.argmax(x, axis=1)

    def tour_length(self, tour) -> float:
        tour = np.asarray(tour, dtype=np.int64)
        return float(self.distances[tour, np.roll(tour, -1)].sum())

    @classmethod
    def from_tsplib(cls, path) -> "TspModel":
        """Parse a TSPLIB file with EUC_2D coordinates."""
        name = ""
        dimension = None
        edge_type = None
        coords = {}
        in_coords = False
        with open(path, "r", encoding="utf-8") as fh:
            for raw in fh:
                line = raw.strip()
                if not line or line == "EOF":
                    in_coords = False
                    continue
                if in_coords:
                    parts = line.split()
                    if len(parts) != 3:
                        raise ValueError(f"bad coordinate line: {line!r}")
                    coords[int(parts[0])] = (float(parts[1]), float(parts[2]))
                    continue
                if ":" in line:
                    key, _, value = line.partition(":")
                    key, value = key.strip(), value.strip()
                    if key == "NAME":
                        name = value
                    elif key == "DIMENSION":
                        dimension = int(value)
                    elif key == "EDGE_WEIGHT_TYPE":
                        edge_type = value
                elif line == "NODE_COORD_SECTION":
                    in_coords = True
        if edge_type != "EUC_2D":
            raise ValueError(f"unsupported EDGE_WEIGHT_TYPE {edge_type!r}")
        if dimension is None or len(coords) != dimension:
            raise ValueError(
                f"expected {dimension} coordinates, parsed {len(coords)}"
            )
        ordered = [coords[i] for i in sorted(coords)]
        return cls(np.asarray(ordered), name=name)

    @classmethod
    def eil14(cls) -> "TspModel":
        """The bundled 14-city instance."""
        data = resources.files("hiss").joinpath("data/eil14.tsp")
        with resources.as_file(data) as path:
            return cls.from_tsplib(path)


class BinaryMlpModel(EnergyModel):
    """Sign-weight pseudo-posterior of a one-hidden-layer tanh regressor.

    The network is f(x) = w2 . tanh(W1 x) without biases; the state vector
    concatenates W1 row-major (hidden * in_dim entries) followed by w2
    (hidden entries), each weight restricted to a two-level alphabet
    (default {-1, +1}). The energy is the negated sum of squared residuals
    over the dataset, so exp(U) is the unnormalized posterior under a unit
    Gaussian noise model and a flat prior on the alphabet.
    """

    def __init__(self, inputs, targets, hidden: int, levels=(-1.0, 1.0)):
        inputs = np.asarray(inputs, dtype=np.float64)
        targets = np.asarray(targets, dtype=np.float64)
        if inputs.ndim != 2:
            raise ValueError("inputs must be (num_points, in_dim)")
        if targets.shape != (inputs.shape[0],):
            raise ValueError("targets must be (num_points,)")
        if hidden < 1:
            raise ValueError("hidden must be positive")
        if len(levels) != 2:
            raise ValueError("weights take exactly two levels")
        self.inputs = inputs
        self.targets = targets
        self.hidden = int(hidden)
        self.in_dim = inputs.shape[1]
        d = self.hidden * self.in_dim + self.hidden
        super().__init__(DomainSpec.uniform(d, levels))

    def _unpack(self, states: np.ndarray):
        b = states.shape[0]
        split = self.hidden * self.in_dim
        w1 = states[:, :split].reshape(b, self.hidden, self.in_dim)
        w2 = states[:, split:]
        return w1, w2

    def _forward(self, states: np.ndarray):
        w1, w2 = self._unpack(states)
        pre = np.einsum("bhp,np->bnh", w1, self.inputs)
        hid = np.tanh(pre)
        out = np.einsum("bnh,bh->bn", hid, w2)
        return hid, out, w2

    def _energy(self, states):
        _, out, _ = self._forward(states)
        resid = out - self.targets[None, :]
        return -np.sum(resid ** 2, axis=1)

    def _gradient(self, states):
        hid, out, w2 = self._forward(states)
        resid = out - self.targets[None, :]  # (B, n)
        d_out = -2.0 * resid
        grad_w2 = np.einsum("bn,bnh->bh", d_out, hid)
        # back through tanh: d pre = d_out * w2 * (1 - hid^2)
        d_pre = d_out[:, :, None] * w2[:, None, :] * (1.0 - hid ** 2)  # (B, n, h)
        grad_w1 = np.einsum("bnh,np->bhp", d_pre, self.inputs)
        b = states.shape[0]
        return np.concatenate([grad_w1.reshape(b, -1), grad_w2], axis=1)


def synthetic_regression(
    num_points: int = 32, in_dim: int = 4, hidden: int = 10,
    noise: float = 0.1, seed: int = 7,
):
    """Deterministic teacher-generated regression data for the MLP target.

    A random sign-weight teacher of the same architecture labels standard
    normal inputs; observation noise is added on top.

    Returns:
        (inputs, targets) with shapes (num_points, in_dim) and (num_points,).
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    inputs = rng.standard_normal((num_points, in_dim))
    w1 = rng.choice([-1.0, 1.0], size=(hidden, in_dim))
    w2 = rng.choice([-1.0, 1.0], size=hidden)
    targets = np.tanh(inputs @ w1.T) @ w2 + noise * rng.standard_normal(num_points)
    return inputs, targets


def load_regression_csv(path):
    """Read (inputs, targets) from a CSV whose last column is the target.

    A non-numeric first line is treated as a header and skipped.
    """
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
    skip = 0
    try:
        [float(tok) for tok in first.strip().split(",")]
    except ValueError:
        skip = 1
    data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    if data.shape[1] < 2:
        raise ValueError("need at least one feature column and one target column")
    return data[:, :-1], data[:, -1]


def binary_mlp(
    inputs=None, targets=None, hidden: int = 10, levels=(-1.0, 1.0), **synth
) -> BinaryMlpModel:
    """Build the MLP target, synthesizing data when none is supplied."""
    if (inputs is None) != (targets is None):
        raise ValueError("pass inputs and targets together or neither")
    if inputs is None:
        inputs, targets = synthetic_regression(hidden=hidden, **synth)
    return BinaryMlpModel(inputs, targets, hidden=hidden, levels=levels)
