"""Discrete product state spaces and metered energy models.

A sampling target lives on Theta = Theta_1 x ... x Theta_d where each
Theta_i is a small finite set of real levels, for example {0, 1} or
{-1, +1}. Probabilities are written pi(theta) ~ exp(U(theta)) and models
expose the energy U together with the exact gradient of its differentiable
extension, which the gradient-informed proposals in :mod:`hiss.samplers`
consume.

Energy evaluations are metered so experiments can report work in a
hardware-independent unit: ``energy`` charges one unit per state row and
``energy_and_gradient`` charges two (forward plus backward pass under the
usual reverse-mode cost convention). Evaluations made for diagnostics pass
``count=False`` and stay off the books.
"""

from __future__ import annotations

import abc
import threading
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DomainSpec",
    "EnergyModel",
    "enumerate_states",
    "state_index",
    "state_distance_l2",
    "finite_difference_gradient",
]

# Enumeration refuses above this many states; larger spaces have no exact
# reference and must be studied through samples only.
MAX_ENUMERABLE_STATES = 1 << 24


@dataclass(frozen=True)
class DomainSpec:
    """Per-coordinate finite level sets of a product space.

    Attributes:
        levels: Array of shape (num_coordinates, num_levels). Row i lists the
            admissible values of coordinate i, strictly increasing. Every
            coordinate must offer the same number of levels; the values may
            differ per coordinate.
    """

    levels: np.ndarray

    def __post_init__(self) -> None:
        levels = np.array(self.levels, dtype=np.float64)
        if levels.ndim != 2:
            raise ValueError(
                "levels must have shape (num_coordinates, num_levels), "
                f"got ndim={levels.ndim}"
            )
        if levels.shape[1] < 2:
            raise ValueError("each coordinate needs at least two levels")
        if not np.all(np.isfinite(levels)):
            raise ValueError("levels must be finite")
        if not np.all(np.diff(levels, axis=1) > 0):
            raise ValueError(
                "levels must be strictly increasing along each row; "
                "sort and deduplicate per coordinate first"
            )
        levels.setflags(write=False)
        object.__setattr__(self, "levels", levels)

    @classmethod
    def uniform(cls, num_coordinates: int, level_values) -> "DomainSpec":
        """Build a domain whose coordinates all share one level set."""
        if num_coordinates < 1:
            raise ValueError("num_coordinates must be positive")
        values = np.sort(np.asarray(level_values, dtype=np.float64))
        return cls(np.tile(values, (num_coordinates, 1)))

    @property
    def num_coordinates(self) -> int:
        return self.levels.shape[0]

    @property
    def num_levels(self) -> int:
        return self.levels.shape[1]

    @property
    def num_states(self) -> int:
        return self.num_levels ** self.num_coordinates

    def level_indices(self, states: np.ndarray) -> np.ndarray:
        """Map states to per-coordinate level indices.

        Args:
            states: Array of shape (..., num_coordinates) whose entries are
                exact level values.

        Returns:
            Integer array of shape (..., num_coordinates).

        Raises:
            ValueError: if any entry is not an admissible level of its
                coordinate.
        """
        states = np.asarray(states, dtype=np.float64)
        matches = states[..., None] == self.levels
        if not np.all(matches.any(axis=-1)):
            raise ValueError("states contain values outside the level sets")
        return np.argmax(matches, axis=-1)

    def contains(self, states: np.ndarray) -> np.ndarray:
        """Return a boolean mask of rows whose entries are all admissible."""
        states = np.asarray(states, dtype=np.float64)
        matches = (states[..., None] == self.levels).any(axis=-1)
        return matches.all(axis=-1)

    def states_from_indices(self, indices: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`level_indices`."""
        indices = np.asarray(indices)
        coord = np.arange(self.num_coordinates)
        return self.levels[coord, indices]


def enumerate_states(domain: DomainSpec, max_states: int = MAX_ENUMERABLE_STATES) -> np.ndarray:
    """List every state of the domain in lexicographic order.

    Coordinate 0 is the most significant digit, so for the binary domain on
    four coordinates the first row is 0000 and the last is 1111.

    Args:
        domain: The product space to enumerate.
        max_states: Refuse enumeration above this cardinality.

    Returns:
        Array of shape (num_states, num_coordinates).
    """
    total = domain.num_states
    if total > max_states:
        raise ValueError(
            f"domain has {total} states, above the enumeration cap {max_states}"
        )
    d, k = domain.num_coordinates, domain.num_levels
    ranks = np.arange(total, dtype=np.int64)
    out = np.empty((total, d), dtype=np.float64)
    for j in range(d):
        digit = (ranks // k ** (d - 1 - j)) % k
        out[:, j] = domain.levels[j, digit]
    return out


def state_index(domain: DomainSpec, states: np.ndarray) -> np.ndarray:
    """Rank states by their position in the lexicographic enumeration."""
    idx = domain.level_indices(states)
    d, k = domain.num_coordinates, domain.num_levels
    weights = k ** np.arange(d - 1, -1, -1, dtype=np.int64)
    return idx @ weights


def state_distance_l2(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Euclidean distance between states, broadcasting over leading axes."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return np.sqrt(np.sum((x - y) ** 2, axis=-1))


class EnergyModel(abc.ABC):
    """A target pi(theta) ~ exp(U(theta)) with exact extension gradients.

    Subclasses implement ``_energy`` and ``_gradient`` on batches of shape
    (B, d); the public wrappers handle single states, meter the evaluation
    counter, and enforce a uniform calling convention. The counter is
    guarded by a lock so traces collected from worker threads stay exact.
    """

    def __init__(self, domain: DomainSpec):
        self._domain = domain
        self._calls = 0
        self._calls_lock = threading.Lock()

    @property
    def domain(self) -> DomainSpec:
        return self._domain

    @property
    def energy_calls(self) -> int:
        """Total charged evaluation units since construction or last reset."""
        return self._calls

    def reset_energy_calls(self) -> None:
        with self._calls_lock:
            self._calls = 0

    def _charge(self, units: int) -> None:
        with self._calls_lock:
            self._calls += int(units)

    def _as_batch(self, states) -> tuple[np.ndarray, bool]:
        arr = np.asarray(states, dtype=np.float64)
        if arr.ndim == 1:
            return arr[None, :], True
        if arr.ndim != 2:
            raise ValueError(f"states must be (d,) or (B, d), got shape {arr.shape}")
        if arr.shape[1] != self._domain.num_coordinates:
            raise ValueError(
                f"states have {arr.shape[1]} coordinates, "
                f"domain expects {self._domain.num_coordinates}"
            )
        return arr, False

    def energy(self, states, count: bool = True):
        """Evaluate U on one state or a batch; charges 1 unit per row."""
        batch, single = self._as_batch(states)
        if count:
            self._charge(batch.shape[0])
        values = self._energy(batch)
        return float(values[0]) if single else values

    def energy_and_gradient(self, states, count: bool = True):
        """Evaluate U and its extension gradient; charges 2 units per row."""
        batch, single = self._as_batch(states)
        if count:
            self._charge(2 * batch.shape[0])
        values = self._energy(batch)
        grads = self._gradient(batch)
        if single:
            return float(values[0]), grads[0]
        return values, grads

    def gradient(self, states, count: bool = True):
        """Gradient alone; costs the same 2 units as the fused call."""
        batch, single = self._as_batch(states)
        if count:
            self._charge(2 * batch.shape[0])
        grads = self._gradient(batch)
        return grads[0] if single else grads

    def support(self, states) -> np.ndarray:
        """Feasibility mask; rows outside get Metropolis acceptance zero.

        The default admits every state of the domain. Models with hard
        combinatorial constraints override this.
        """
        batch, single = self._as_batch(states)
        mask = np.ones(batch.shape[0], dtype=bool)
        return bool(mask[0]) if single else mask

    def initial_state(self) -> np.ndarray:
        """Deterministic starting state: the first level of every coordinate."""
        return self._domain.levels[:, 0].copy()

    @abc.abstractmethod
    def _energy(self, states: np.ndarray) -> np.ndarray:
        """Batched energy, shape (B,) from (B, d)."""

    @abc.abstractmethod
    def _gradient(self, states: np.ndarray) -> np.ndarray:
        """Batched extension gradient, shape (B, d) from (B, d)."""


def finite_difference_gradient(model: EnergyModel, states, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of the energy extension, for validation.

    Uses unmetered evaluations. The extension is smooth in every shipped
    model, so central differences at a moderate step give roughly
    ``step**2`` truncation error.
    """
    batch, single = model._as_batch(states)
    d = batch.shape[1]
    grads = np.empty_like(batch)
    for i in range(d):
        bump = np.zeros(d)
        bump[i] = step
        up = model.energy(batch + bump, count=False)
        down = model.energy(batch - bump, count=False)
        grads[:, i] = (up - down) / (2.0 * step)
    return grads[0] if single else grads
