"""Gradient-informed MCMC samplers for discrete product spaces.

Four sampler families share one batched state layout of shape (B, d):

* ``dmala``: coordinate-factorized proposals weighted by a first-order
  energy expansion plus a quadratic locality penalty, corrected by
  Metropolis-Hastings with the reverse gradient.
* ``gwg``: single-coordinate change proposals weighted by first-order
  energy differences over every (coordinate, level) option, MH corrected.
* ``hiss`` sweeps: perturb the state through a smoothing kernel, propose a
  fresh state coordinate-wise from the denoising posterior, accept it as an
  independence proposal given the auxiliary point, then refine with L
  conditional gradient steps sharing the same auxiliary point. Variants:
  ``hiss_gk`` swaps in the variance-preserving Gaussian kernel and
  ``hiss_nomh`` drops the MH correction (biased, for ablations).
* ``pt_dmala``: parallel tempering over a geometric inverse-temperature
  ladder with dmala refinement and periodic adjacent replica swaps.

Every proposal distribution is normalized per coordinate by a stable
log-softmax, and each reverse log-probability is read from the same table
construction as its forward counterpart. Samplers draw a fixed number of
variates per step for a given configuration, so traces are reproducible
from the seed alone.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .domain import DomainSpec, EnergyModel
from .kernels import GaussianKernel, LogisticKernel, SmoothingKernel

__all__ = [
    "SamplerConfig",
    "PTConfig",
    "ChainTrace",
    "SAMPLER_NAMES",
    "resolve_sampler",
    "build_kernel",
    "splitmix64",
    "chain_seed",
    "dlp_proposal",
    "dlp_log_prob",
    "dmala_step",
    "gwg_step",
    "denoise_log_probs",
    "hiss_mwg_step",
    "conditional_dmala_step",
    "hiss_sweep",
    "pt_swap",
    "run_chain",
]

SAMPLER_NAMES = ("hiss", "hiss_gk", "hiss_nomh", "dmala", "gwg", "pt_dmala")


@dataclass(frozen=True)
class SamplerConfig:
    """Shared sampler hyperparameters.

    Attributes:
        step_size: Quadratic-penalty scale alpha of the coordinate proposals.
        eta: Logistic noise scale.
        sweeps: G, auxiliary sweeps per emitted sample. Baselines take
            sweeps * refinements gradient steps per sample so both sides
            spend comparable gradient work.
        refinements: L, conditional refinement steps per sweep.
        kernel: "logistic" or "gaussian".
        gaussian_sigma2: Noise variance of the Gaussian kernel.
        gaussian_alpha: Optional explicit location scaling; None derives the
            variance-preserving value sqrt(1 - sigma^2).
        mh: Apply the MH correction in the sweep's denoising step. Disabling
            it leaves a biased sampler and is only meant for ablations.
    """

    step_size: float = 0.2
    eta: float = 4.0
    sweeps: int = 5
    refinements: int = 2
    kernel: str = "logistic"
    gaussian_sigma2: float = 0.9
    gaussian_alpha: float | None = None
    mh: bool = True

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.sweeps < 1:
            raise ValueError(f"sweeps must be >= 1, got {self.sweeps}")
        if self.refinements < 0:
            raise ValueError(f"refinements must be >= 0, got {self.refinements}")
        if self.kernel not in ("logistic", "gaussian"):
            raise ValueError(f"unknown kernel {self.kernel!r}")


@dataclass(frozen=True)
class PTConfig:
    """Parallel-tempering ladder parameters.

    The ladder is geometric: beta_k = r^k for k = 0..num_temps-1 with
    r chosen so the coldest-to-hottest span is beta_min.
    """

    num_temps: int = 5
    swap_interval: int = 4
    beta_min: float = 0.1

    def __post_init__(self):
        if self.num_temps < 2:
            raise ValueError(
                f"parallel tempering needs num_temps >= 2, got {self.num_temps}"
            )
        if self.swap_interval < 1:
            raise ValueError(f"swap_interval must be >= 1, got {self.swap_interval}")
        if not 0.0 < self.beta_min < 1.0:
            raise ValueError(f"beta_min must lie in (0, 1), got {self.beta_min}")

    @property
    def betas(self) -> np.ndarray:
        ratio = self.beta_min ** (1.0 / (self.num_temps - 1))
        return ratio ** np.arange(self.num_temps)


@dataclass
class ChainTrace:
    """Per-iteration record of one chain.

    Attributes:
        samples: Emitted states, shape (num_samples, d).
        accept_counts: Accepted proposal counts per iteration, keyed by
            proposal kind ("mwg", "refine", "step", "swap").
        proposal_counts: Matching attempt counts per iteration.
        energy_calls: Cumulative metered evaluation units after each
            iteration, local to this chain.
        wall_time_s: Measured wall-clock duration of the chain (not
            deterministic; reporting uses energy_calls instead).
        seed: The chain's derived seed.
        chain_id: Index of the chain within its experiment.
        sampler: The requested sampler selector.
    """

    samples: np.ndarray
    accept_counts: dict = field(default_factory=dict)
    proposal_counts: dict = field(default_factory=dict)
    energy_calls: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    wall_time_s: float = 0.0
    seed: int = 0
    chain_id: int = 0
    sampler: str = ""

    def acceptance_rate(self, kind: str) -> float:
        attempts = self.proposal_counts[kind].sum()
        if attempts == 0:
            return float("nan")
        return float(self.accept_counts[kind].sum() / attempts)

    @property
    def primary_acceptance_kind(self) -> str:
        """The acceptance stream a sampler is conventionally judged by."""
        return "mwg" if "mwg" in self.proposal_counts else "step"


def splitmix64(seed: int, index: int) -> int:
    """The index-th output of the SplitMix64 stream keyed on seed."""
    mask = (1 << 64) - 1
    z = (int(seed) + (index + 1) * 0x9E3779B97F4A7C15) & mask
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
    return (z ^ (z >> 31)) & mask


def chain_seed(master_seed: int, chain_id: int) -> int:
    """Derived seed of one chain: decorrelated, stable under reordering."""
    return splitmix64(master_seed, chain_id)


def resolve_sampler(name: str, config: SamplerConfig) -> tuple[str, SamplerConfig]:
    """Map a sampler selector to its driver kind and effective config."""
    if name not in SAMPLER_NAMES:
        raise ValueError(f"unknown sampler {name!r}, expected one of {SAMPLER_NAMES}")
    if name == "hiss_gk":
        return "hiss", replace(config, kernel="gaussian")
    if name == "hiss_nomh":
        return "hiss", replace(config, mh=False)
    if name in ("dmala", "gwg", "pt_dmala"):
        return name, config
    return "hiss", config


def build_kernel(config: SamplerConfig) -> SmoothingKernel:
    if config.kernel == "logistic":
        return LogisticKernel(config.eta)
    return GaussianKernel(config.gaussian_sigma2, config.gaussian_alpha)


# --------------------------------------------------------------------------
# proposal building blocks

def _log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shift = logits - np.max(logits, axis=axis, keepdims=True)
    return shift - np.log(np.sum(np.exp(shift), axis=axis, keepdims=True))


def _sample_categorical(rng: np.random.Generator, log_probs: np.ndarray) -> np.ndarray:
    """Row-wise categorical draws from (..., K) log-probabilities.

    One uniform per row, inverted against the cumulative sum in level
    order, so the draw count and order are fixed by the array shape.
    """
    cum = np.cumsum(np.exp(log_probs), axis=-1)
    cum[..., -1] = 1.0
    u = rng.random(log_probs.shape[:-1] + (1,))
    return np.sum(cum < u, axis=-1)


def _gather(log_probs: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """Pick per-coordinate log-probabilities and sum them per row."""
    picked = np.take_along_axis(log_probs, indices[..., None], axis=-1)[..., 0]
    return picked.sum(axis=-1)


def _dlp_log_probs(
    states: np.ndarray, grads: np.ndarray, domain: DomainSpec, step_size: float
) -> np.ndarray:
    """Normalized coordinate-wise proposal table of the gradient step.

    Logits over levels v: 0.5 * grad_i * (v - theta_i) - (v - theta_i)^2 /
    (2 * step_size); shape (B, d, K).
    """
    diff = domain.levels[None, :, :] - states[:, :, None]
    logits = 0.5 * grads[:, :, None] * diff - diff ** 2 / (2.0 * step_size)
    return _log_softmax(logits)


def dlp_proposal(
    rng: np.random.Generator,
    states: np.ndarray,
    grads: np.ndarray,
    domain: DomainSpec,
    step_size: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw coordinate-factorized gradient proposals.

    Returns:
        (proposals, log_q) where log_q sums the chosen levels'
        log-probabilities per row.
    """
    tables = _dlp_log_probs(states, grads, domain, step_size)
    idx = _sample_categorical(rng, tables)
    coords = np.arange(domain.num_coordinates)
    proposals = domain.levels[coords[None, :], idx]
    return proposals, _gather(tables, idx)


def dlp_log_prob(
    states_from: np.ndarray,
    grads_from: np.ndarray,
    states_to: np.ndarray,
    domain: DomainSpec,
    step_size: float,
) -> np.ndarray:
    """log q(states_to | states_from) under the same normalized tables."""
    tables = _dlp_log_probs(states_from, grads_from, domain, step_size)
    return _gather(tables, domain.level_indices(states_to))


def _mh_filter(
    rng: np.random.Generator,
    model: EnergyModel,
    states: np.ndarray,
    proposals: np.ndarray,
    log_alpha: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Accept-reject with a hard support mask; returns (new_states, accepted)."""
    accept = np.log(rng.random(states.shape[0])) < log_alpha
    accept &= model.support(proposals)
    return np.where(accept[:, None], proposals, states), accept


def dmala_step(
    rng: np.random.Generator,
    model: EnergyModel,
    states: np.ndarray,
    config: SamplerConfig,
    beta=1.0,
) -> tuple[np.ndarray, dict]:
    """One MH-corrected gradient step on every row.

    Args:
        beta: Inverse temperature, scalar or per-row vector; the effective
            target is exp(beta * U).

    Returns:
        (new_states, info) with info["accepted"] the per-row accept mask.
    """
    b = states.shape[0]
    beta_row = np.broadcast_to(np.asarray(beta, dtype=np.float64), (b,))
    energy, grad = model.energy_and_gradient(states)
    scaled_grad = beta_row[:, None] * grad
    proposals, log_fwd = dlp_proposal(rng, states, scaled_grad, model.domain, config.step_size)
    energy_p, grad_p = model.energy_and_gradient(proposals)
    log_rev = dlp_log_prob(
        proposals, beta_row[:, None] * grad_p, states, model.domain, config.step_size
    )
    log_alpha = beta_row * (energy_p - energy) + log_rev - log_fwd
    new_states, accept = _mh_filter(rng, model, states, proposals, log_alpha)
    return new_states, {"accepted": accept, "log_alpha": log_alpha}


def gwg_step(
    rng: np.random.Generator,
    model: EnergyModel,
    states: np.ndarray,
    config: SamplerConfig,
) -> tuple[np.ndarray, dict]:
    """One single-coordinate change proposed from first-order scores.

    Scores every (coordinate i, level v != theta_i) option by
    grad_i * (v - theta_i), samples one from the softmax over all options,
    and MH-corrects with the reverse scores. On a flat target the choice is
    uniform over options.
    """
    domain = model.domain
    b, d = states.shape
    k = domain.num_levels
    rows = np.arange(b)

    def option_log_probs(x, grad):
        diff = domain.levels[None, :, :] - x[:, :, None]
        logits = grad[:, :, None] * diff
        logits[diff == 0.0] = -np.inf  # staying put is not an option
        return _log_softmax(logits.reshape(b, d * k))

    energy, grad = model.energy_and_gradient(states)
    fwd = option_log_probs(states, grad)
    flat = _sample_categorical(rng, fwd)
    coord, level = flat // k, flat % k
    proposals = states.copy()
    proposals[rows, coord] = domain.levels[coord, level]
    log_fwd = fwd[rows, flat]

    energy_p, grad_p = model.energy_and_gradient(proposals)
    rev = option_log_probs(proposals, grad_p)
    # the reverse option: same coordinate, back to the original level
    old_level = domain.level_indices(states)[rows, coord]
    log_rev = rev[rows, coord * k + old_level]

    log_alpha = (energy_p - energy) + log_rev - log_fwd
    new_states, accept = _mh_filter(rng, model, states, proposals, log_alpha)
    return new_states, {"accepted": accept, "log_alpha": log_alpha, "coord": coord}


# --------------------------------------------------------------------------
# auxiliary-variable sweep

def denoise_log_probs(
    aux: np.ndarray, domain: DomainSpec, kernel: SmoothingKernel
) -> np.ndarray:
    """Normalized coordinate-wise denoising posterior, shape (B, d, K).

    Both sampling and reverse-probability lookups must read this one table
    so forward and reverse terms cancel exactly where they should.
    """
    return _log_softmax(kernel.denoise_logits(aux, domain.levels))


def hiss_mwg_step(
    rng: np.random.Generator,
    model: EnergyModel,
    states: np.ndarray,
    aux: np.ndarray,
    kernel: SmoothingKernel,
    mh: bool = True,
) -> tuple[np.ndarray, dict]:
    """Denoise the auxiliary point and MH-correct the proposed state.

    The proposal is independent of the pre-noise state given aux, so the
    acceptance log-ratio is the energy difference plus the noise-density
    difference plus reverse-minus-forward denoise log-probabilities.
    """
    domain = model.domain
    tables = denoise_log_probs(aux, domain, kernel)
    idx = _sample_categorical(rng, tables)
    coords = np.arange(domain.num_coordinates)
    proposals = domain.levels[coords[None, :], idx]

    if not mh:
        ok = model.support(proposals)
        return np.where(ok[:, None], proposals, states), {"accepted": ok}

    log_fwd = _gather(tables, idx)
    log_rev = _gather(tables, domain.level_indices(states))
    energy_cur = model.energy(states)
    energy_prop = model.energy(proposals)
    noise_cur = kernel.log_density(aux, states).sum(axis=-1)
    noise_prop = kernel.log_density(aux, proposals).sum(axis=-1)
    log_alpha = (energy_prop - energy_cur) + (noise_prop - noise_cur) + (log_rev - log_fwd)
    new_states, accept = _mh_filter(rng, model, states, proposals, log_alpha)
    return new_states, {"accepted": accept, "log_alpha": log_alpha}


def conditional_dmala_step(
    rng: np.random.Generator,
    model: EnergyModel,
    states: np.ndarray,
    aux: np.ndarray,
    kernel: SmoothingKernel,
    config: SamplerConfig,
) -> tuple[np.ndarray, dict]:
    """One gradient step on the conditional target given a fixed aux point.

    The conditional density is proportional to exp(U(theta)) k(aux | theta),
    so the proposal gradient is the energy gradient augmented by the
    coupling gradient and the MH ratio uses the joint log-density.
    """
    energy, grad = model.energy_and_gradient(states)
    joint = energy + kernel.log_density(aux, states).sum(axis=-1)
    aug = grad + kernel.coupling_gradient(states, aux)
    proposals, log_fwd = dlp_proposal(rng, states, aug, model.domain, config.step_size)

    energy_p, grad_p = model.energy_and_gradient(proposals)
    joint_p = energy_p + kernel.log_density(aux, proposals).sum(axis=-1)
    aug_p = grad_p + kernel.coupling_gradient(proposals, aux)
    log_rev = dlp_log_prob(proposals, aug_p, states, model.domain, config.step_size)

    log_alpha = (joint_p - joint) + log_rev - log_fwd
    new_states, accept = _mh_filter(rng, model, states, proposals, log_alpha)
    return new_states, {"accepted": accept, "log_alpha": log_alpha}


def hiss_sweep(
    rng: np.random.Generator,
    model: EnergyModel,
    states: np.ndarray,
    kernel: SmoothingKernel,
    config: SamplerConfig,
) -> tuple[np.ndarray, dict]:
    """One full sweep: noise, denoise with MH, then L conditional refinements.

    All refinement steps condition on the sweep's own auxiliary point; the
    next sweep draws a fresh one, which is what keeps the invariant
    distribution exact.
    """
    aux = kernel.perturb(rng, states)
    states, mwg_info = hiss_mwg_step(rng, model, states, aux, kernel, mh=config.mh)
    refine_accepted = np.zeros((states.shape[0], config.refinements), dtype=bool)
    for step in range(config.refinements):
        states, info = conditional_dmala_step(rng, model, states, aux, kernel, config)
        refine_accepted[:, step] = info["accepted"]
    return states, {
        "aux": aux,
        "mwg_accepted": mwg_info["accepted"],
        "refine_accepted": refine_accepted,
    }


# --------------------------------------------------------------------------
# parallel tempering

def pt_swap(
    rng: np.random.Generator,
    model: EnergyModel,
    replicas: np.ndarray,
    betas: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Attempt adjacent replica exchanges in ladder order.

    Pairs are visited coldest-first and sequentially, so a replica moved by
    one exchange can move again in the next. Each attempt evaluates both
    replica energies fresh.
    """
    num = len(betas)
    accepted = np.zeros(num - 1, dtype=bool)
    for k in range(num - 1):
        e_cold = model.energy(replicas[k])
        e_hot = model.energy(replicas[k + 1])
        log_p = (betas[k] - betas[k + 1]) * (e_hot - e_cold)
        if np.log(rng.random()) < log_p:
            replicas[[k, k + 1]] = replicas[[k + 1, k]]
            accepted[k] = True
    return replicas, accepted


# --------------------------------------------------------------------------
# chain driver

def run_chain(
    model: EnergyModel,
    sampler: str,
    config: SamplerConfig,
    num_samples: int,
    seed: int,
    chain_id: int = 0,
    pt_config: PTConfig | None = None,
) -> ChainTrace:
    """Run one chain from the model's deterministic initial state.

    Every outer iteration emits exactly one sample: the state after G
    sweeps for the auxiliary sampler, or after G * L gradient steps for the
    baselines (the same per-sample gradient budget). The trace records
    per-iteration acceptance counts and the cumulative metered energy calls.
    """
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    kind, config = resolve_sampler(sampler, config)
    if kind == "pt_dmala" and pt_config is None:
        raise ValueError("pt_dmala requires a PTConfig")
    steps_per_sample = config.sweeps * config.refinements
    if kind in ("dmala", "gwg") and steps_per_sample < 1:
        raise ValueError(
            f"{kind} needs sweeps * refinements >= 1 steps per sample, "
            f"got {config.sweeps} * {config.refinements}"
        )

    rng = np.random.Generator(np.random.PCG64(seed))
    d = model.domain.num_coordinates
    state = model.initial_state()[None, :]
    if not model.support(state)[0]:
        raise ValueError("model initial state violates its own support")

    samples = np.empty((num_samples, d))
    calls = np.empty(num_samples, dtype=np.int64)
    base_calls = model.energy_calls

    if kind == "hiss":
        kernel = build_kernel(config)
        accept = {"mwg": np.zeros(num_samples, dtype=np.int64),
                  "refine": np.zeros(num_samples, dtype=np.int64)}
        proposed = {"mwg": np.full(num_samples, config.sweeps, dtype=np.int64),
                    "refine": np.full(num_samples, config.sweeps * config.refinements,
                                      dtype=np.int64)}
    elif kind == "pt_dmala":
        betas = pt_config.betas
        replicas = np.repeat(state, pt_config.num_temps, axis=0)
        accept = {"step": np.zeros(num_samples, dtype=np.int64),
                  "swap": np.zeros(num_samples, dtype=np.int64)}
        proposed = {"step": np.full(num_samples, steps_per_sample * pt_config.num_temps,
                                    dtype=np.int64),
                    "swap": np.zeros(num_samples, dtype=np.int64)}
    else:
        accept = {"step": np.zeros(num_samples, dtype=np.int64)}
        proposed = {"step": np.full(num_samples, steps_per_sample, dtype=np.int64)}

    start = time.perf_counter()
    global_step = 0
    for t in range(num_samples):
        if kind == "hiss":
            for _ in range(config.sweeps):
                state, info = hiss_sweep(rng, model, state, kernel, config)
                accept["mwg"][t] += int(info["mwg_accepted"][0])
                accept["refine"][t] += int(info["refine_accepted"][0].sum())
            samples[t] = state[0]
        elif kind == "dmala":
            for _ in range(steps_per_sample):
                state, info = dmala_step(rng, model, state, config)
                accept["step"][t] += int(info["accepted"][0])
            samples[t] = state[0]
        elif kind == "gwg":
            for _ in range(steps_per_sample):
                state, info = gwg_step(rng, model, state, config)
                accept["step"][t] += int(info["accepted"][0])
            samples[t] = state[0]
        else:  # pt_dmala
            for _ in range(steps_per_sample):
                replicas, info = dmala_step(rng, model, replicas, config, beta=betas)
                accept["step"][t] += int(info["accepted"].sum())
                global_step += 1
                if global_step % pt_config.swap_interval == 0:
                    replicas, swapped = pt_swap(rng, model, replicas, betas)
                    accept["swap"][t] += int(swapped.sum())
                    proposed["swap"][t] += len(betas) - 1
            samples[t] = replicas[0]
        calls[t] = model.energy_calls - base_calls

    return ChainTrace(
        samples=samples,
        accept_counts=accept,
        proposal_counts=proposed,
        energy_calls=calls,
        wall_time_s=time.perf_counter() - start,
        seed=seed,
        chain_id=chain_id,
        sampler=sampler,
    )
