"""Smoothing kernels that couple discrete states to continuous auxiliaries.

The auxiliary move perturbs a discrete state theta into a continuous point
theta_a and later denoises theta_a back onto the level sets. Both directions
are governed by one noise kernel k(theta_a | theta). Two kernels are
provided:

* logistic: theta_a = theta + eta * xi with xi standard logistic, so

      k(x | mu) = sech^2((x - mu) / (2 eta)) / (4 eta),
      log k    = -log(4 eta) - 2 log cosh((x - mu) / (2 eta)).

  The heavy sech^2 tails keep appreciable density between well-separated
  levels, which is what lets the denoising posterior jump modes.

* gaussian: theta_a = alpha * theta + sigma * z with z standard normal and,
  in the variance-preserving parameterization, alpha^2 + sigma^2 = 1.
  Passing alpha=1 gives the plain additive Gaussian for comparisons.

``intermediate_mass_*`` quantify the mode-hopping headroom directly: for an
equal two-spike target at +/- mu, they integrate the smoothed density over
the origin-centered window [-eps, eps]. The logistic window mass decays like
exp(-mu / eta) against the Gaussian's exp(-alpha^2 mu^2 / (2 sigma^2)).
"""

from __future__ import annotations

import abc
import math

import numpy as np

from .domain import DomainSpec, EnergyModel, enumerate_states

__all__ = [
    "SmoothingKernel",
    "LogisticKernel",
    "GaussianKernel",
    "log_cosh",
    "adaptive_simpson",
    "smoothed_log_density",
    "intermediate_mass_logistic",
    "intermediate_mass_gaussian",
]

# Uniform draws are clamped one ulp away from {0, 1} before the logistic
# inverse CDF so the transform never sees an endpoint.
_U_LOW = np.nextafter(0.0, 1.0)
_U_HIGH = np.nextafter(1.0, 0.0)


def log_cosh(z: np.ndarray) -> np.ndarray:
    """Numerically stable log cosh(z) = |z| + log1p(exp(-2|z|)) - log 2."""
    a = np.abs(z)
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


class SmoothingKernel(abc.ABC):
    """Coordinate-wise noise kernel k(theta_a | theta).

    All methods broadcast over leading batch axes; log densities are
    returned elementwise so callers decide what to sum.
    """

    @abc.abstractmethod
    def perturb(self, rng: np.random.Generator, states: np.ndarray) -> np.ndarray:
        """Draw theta_a given theta, elementwise."""

    @abc.abstractmethod
    def log_density(self, aux: np.ndarray, states: np.ndarray) -> np.ndarray:
        """log k(aux | states), elementwise (not summed over coordinates)."""

    @abc.abstractmethod
    def coupling_gradient(self, states: np.ndarray, aux: np.ndarray) -> np.ndarray:
        """d/dtheta log k(aux | theta), elementwise."""

    @property
    @abc.abstractmethod
    def noise_variance(self) -> float:
        """Variance of theta_a around its location for a fixed theta."""

    def denoise_logits(self, aux: np.ndarray, levels: np.ndarray) -> np.ndarray:
        """log k(aux | v) for every level v.

        Args:
            aux: Auxiliary points of shape (..., d).
            levels: Level matrix of shape (d, num_levels).

        Returns:
            Array of shape (..., d, num_levels). Normalizing each row with a
            softmax yields the exact coordinate-wise denoising posterior of
            the factorized coupling.
        """
        return self.log_density(aux[..., None], levels)


class LogisticKernel(SmoothingKernel):
    """Additive logistic noise of scale eta (variance eta^2 pi^2 / 3)."""

    def __init__(self, eta: float):
        if not eta > 0:
            raise ValueError(f"eta must be positive, got {eta}")
        self.eta = float(eta)

    def perturb(self, rng, states):
        states = np.asarray(states, dtype=np.float64)
        u = np.clip(rng.random(states.shape), _U_LOW, _U_HIGH)
        return states + self.eta * (np.log(u) - np.log1p(-u))

    def log_density(self, aux, states):
        z = (np.asarray(aux, dtype=np.float64) - states) / (2.0 * self.eta)
        return -math.log(4.0 * self.eta) - 2.0 * log_cosh(z)

    def coupling_gradient(self, states, aux):
        z = (np.asarray(aux, dtype=np.float64) - states) / (2.0 * self.eta)
        return np.tanh(z) / self.eta

    @property
    def noise_variance(self) -> float:
        return self.eta ** 2 * math.pi ** 2 / 3.0

    def __repr__(self) -> str:
        return f"LogisticKernel(eta={self.eta})"


class GaussianKernel(SmoothingKernel):
    """Gaussian kernel N(theta_a; alpha * theta, sigma^2).

    With alpha unset it is variance preserving: alpha = sqrt(1 - sigma^2),
    requiring sigma^2 in (0, 1). An explicit alpha (for example 1.0 for the
    plain additive kernel) is accepted as long as it is either exactly 1 or
    satisfies alpha^2 + sigma^2 = 1 to within 1e-12.
    """

    def __init__(self, sigma2: float, alpha: float | None = None):
        if not sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {sigma2}")
        if alpha is None:
            if not sigma2 < 1.0:
                raise ValueError(
                    "variance-preserving mode needs sigma2 < 1; "
                    "pass alpha=1.0 for the plain additive kernel"
                )
            alpha = math.sqrt(1.0 - sigma2)
        elif alpha != 1.0 and abs(alpha ** 2 + sigma2 - 1.0) > 1e-12:
            raise ValueError(
                f"alpha={alpha} with sigma2={sigma2} is neither plain (alpha=1) "
                "nor variance preserving (alpha^2 + sigma^2 = 1)"
            )
        self.sigma2 = float(sigma2)
        self.sigma = math.sqrt(self.sigma2)
        self.alpha = float(alpha)

    def perturb(self, rng, states):
        states = np.asarray(states, dtype=np.float64)
        return self.alpha * states + self.sigma * rng.standard_normal(states.shape)

    def log_density(self, aux, states):
        aux = np.asarray(aux, dtype=np.float64)
        resid = aux - self.alpha * np.asarray(states, dtype=np.float64)
        return -0.5 * math.log(2.0 * math.pi * self.sigma2) - resid ** 2 / (2.0 * self.sigma2)

    def coupling_gradient(self, states, aux):
        aux = np.asarray(aux, dtype=np.float64)
        states = np.asarray(states, dtype=np.float64)
        return self.alpha * (aux - self.alpha * states) / self.sigma2

    @property
    def noise_variance(self) -> float:
        return self.sigma2

    def __repr__(self) -> str:
        return f"GaussianKernel(sigma2={self.sigma2}, alpha={self.alpha})"


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-10, max_depth: int = 48) -> float:
    """Adaptive Simpson quadrature of a scalar function on [a, b].

    Classic interval-halving scheme with the 1/15 Richardson correction.
    The tolerance is split between halves on every subdivision.
    """
    if not b > a:
        raise ValueError("integration interval must satisfy b > a")

    def simpson(fa, fm, fb, left, right):
        return (right - left) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(left, right, fa, fm, fb, whole, tol, depth):
        mid = 0.5 * (left + right)
        lm = 0.5 * (left + mid)
        rm = 0.5 * (mid + right)
        flm, frm = f(lm), f(rm)
        part_l = simpson(fa, flm, fm, left, mid)
        part_r = simpson(fm, frm, fb, mid, right)
        delta = part_l + part_r - whole
        if depth <= 0 or abs(delta) <= 15.0 * tol:
            return part_l + part_r + delta / 15.0
        return (
            recurse(left, mid, fa, flm, fm, part_l, 0.5 * tol, depth - 1)
            + recurse(mid, right, fm, frm, fb, part_r, 0.5 * tol, depth - 1)
        )

    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    return recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, max_depth)


def smoothed_log_density(
    model: EnergyModel, kernel: SmoothingKernel, points: np.ndarray
) -> np.ndarray:
    """Exact log density of the smoothed marginal at continuous points.

    Marginalizes the coupling over the enumerated target:
    p(theta_a) = sum_theta pi(theta) prod_i k(theta_a_i | theta_i).
    Only valid for domains under the enumeration cap; evaluations are
    unmetered.

    Args:
        model: Target supplying U and the domain.
        kernel: Coupling kernel.
        points: Array of shape (G, d) or (d,).

    Returns:
        log p(theta_a) of shape (G,); a single (d,) point gives shape (1,).
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    states = enumerate_states(model.domain)
    log_u = model.energy(states, count=False)
    log_pi = log_u - _logsumexp(log_u)
    # (G, S, d) -> (G, S)
    log_k = kernel.log_density(points[:, None, :], states[None, :, :]).sum(axis=2)
    return _logsumexp(log_pi[None, :] + log_k, axis=1)


def _logsumexp(a: np.ndarray, axis=None) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis) if axis is not None else float(np.squeeze(out))


def _two_spike_mass(kernel: SmoothingKernel, mu: float, epsilon: float, tol: float) -> float:
    def density(x):
        logs = kernel.log_density(np.array([x, x]), np.array([-mu, mu]))
        return 0.5 * float(np.exp(logs[0]) + np.exp(logs[1]))

    return adaptive_simpson(density, -epsilon, epsilon, tol=tol)


def intermediate_mass_logistic(
    mu: float, eta: float, epsilon: float, tol: float = 1e-10
) -> tuple[float, float]:
    """Window mass between two logistic-smoothed spikes at +/- mu.

    Returns:
        (quadrature, closed_form) where the closed form is the leading-order
        approximation 2 (epsilon / eta) exp(-mu / eta), accurate once
        mu >> eta >> epsilon.
    """
    if min(mu, eta, epsilon) <= 0:
        raise ValueError("mu, eta and epsilon must be positive")
    quad = _two_spike_mass(LogisticKernel(eta), mu, epsilon, tol)
    closed = 2.0 * (epsilon / eta) * math.exp(-mu / eta)
    return quad, closed


def intermediate_mass_gaussian(
    mu: float,
    sigma2: float,
    epsilon: float,
    alpha: float | None = None,
    tol: float = 1e-10,
) -> tuple[float, float]:
    """Gaussian counterpart of :func:`intermediate_mass_logistic`.

    The spikes sit at the kernel locations +/- alpha * mu, and the closed
    form is sqrt(2/pi) (epsilon / sigma) exp(-alpha^2 mu^2 / (2 sigma^2)).
    """
    if min(mu, sigma2, epsilon) <= 0:
        raise ValueError("mu, sigma2 and epsilon must be positive")
    kernel = GaussianKernel(sigma2, alpha)
    quad = _two_spike_mass(kernel, mu, epsilon, tol)
    closed = (
        math.sqrt(2.0 / math.pi)
        * (epsilon / kernel.sigma)
        * math.exp(-(kernel.alpha ** 2) * mu ** 2 / (2.0 * kernel.sigma2))
    )
    return quad, closed
