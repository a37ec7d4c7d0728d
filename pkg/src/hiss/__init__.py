"""Gradient-informed MCMC on discrete product spaces.

The package couples discrete targets to continuous auxiliaries through
heavy-tailed smoothing kernels and samples them with MH-corrected
noise/denoise/refine sweeps, alongside gradient-step and tempering
baselines, exact small-domain references, and a config-driven benchmark
CLI (``hiss run|enumerate|ablation``).
"""

from .domain import (
    DomainSpec,
    EnergyModel,
    enumerate_states,
    finite_difference_gradient,
    state_distance_l2,
    state_index,
)
from .kernels import (
    GaussianKernel,
    LogisticKernel,
    SmoothingKernel,
    adaptive_simpson,
    intermediate_mass_gaussian,
    intermediate_mass_logistic,
    smoothed_log_density,
)
from .models import (
    AntidiagonalIsingModel,
    BinaryMlpModel,
    TabularModel,
    TspModel,
    bernoulli4d,
    binary_mlp,
    ising_3x3,
    synthetic_regression,
)
from .samplers import (
    ChainTrace,
    PTConfig,
    SamplerConfig,
    SAMPLER_NAMES,
    chain_seed,
    run_chain,
)
from .diagnostics import (
    ExactDistribution,
    coverage,
    dominant_state_count,
    empirical_distribution,
    log_mae,
    metric_series,
    predicted_energy_calls,
    tour_diversity,
    tvd,
)

try:
    from importlib.metadata import version as _pkg_version

    __version__ = _pkg_version("artifact")
except Exception:  # pragma: no cover - metadata missing in odd installs
    __version__ = "0.0.0+unknown"

__all__ = [
    "DomainSpec",
    "EnergyModel",
    "enumerate_states",
    "state_index",
    "state_distance_l2",
    "finite_difference_gradient",
    "SmoothingKernel",
    "LogisticKernel",
    "GaussianKernel",
    "adaptive_simpson",
    "smoothed_log_density",
    "intermediate_mass_logistic",
    "intermediate_mass_gaussian",
    "TabularModel",
    "AntidiagonalIsingModel",
    "TspModel",
    "BinaryMlpModel",
    "bernoulli4d",
    "ising_3x3",
    "binary_mlp",
    "synthetic_regression",
    "SamplerConfig",
    "PTConfig",
    "ChainTrace",
    "SAMPLER_NAMES",
    "chain_seed",
    "run_chain",
    "ExactDistribution",
    "empirical_distribution",
    "tvd",
    "log_mae",
    "coverage",
    "metric_series",
    "dominant_state_count",
    "tour_diversity",
    "predicted_energy_calls",
    "__version__",
]
