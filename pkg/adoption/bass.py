from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

DEFAULT_HORIZON = 10.0  # years


@dataclass(frozen=True)
class DiffusionParams:
    p_innov: float = 0.01
    q_imit: float = 0.4
    dt: float = 1.0 / 12.0
    horizon: float = DEFAULT_HORIZON
    seed: int = 0

    def __post_init__(self):
        if self.p_innov <= 0:
            raise ValueError(f"coefficient of innovation must be positive, got {self.p_innov}")
        if self.q_imit < 0:
            raise ValueError(f"coefficient of imitation must be >= 0, got {self.q_imit}")
        if not 0 < self.dt <= 1:
            raise ValueError(f"time step must lie in (0, 1] years, got {self.dt}")
        if (self.p_innov + self.q_imit) * self.dt >= 1:
            raise ValueError("(p + q) * dt must stay below 1 for a valid adoption probability")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")

    @property
    def steps(self):
        return int(round(self.horizon / self.dt))

    def step_times(self):
        return np.arange(self.steps + 1) * self.dt


def bass_closed_form(params, t):
    """
    Fraction of adopters F(t) solving dF/dt / (1 - F) = p + q F with F(0) = 0.

    Args:
        params (DiffusionParams): p_innov and q_imit are used
        t (float or np.ndarray): time in years, t >= 0
    Returns:
        float or np.ndarray: F(t), same shape as ``t``
    """
    p, q = params.p_innov, params.q_imit
    decay = np.exp(-(p + q) * np.asarray(t, dtype=float))
    value = (1.0 - decay) / (1.0 + (q / p) * decay)
    return float(value) if np.ndim(value) == 0 else value


def bass_discrete_mean(params, eligible_fraction=1.0):
    """Mean-field recursion of the per-step adoption rule, one value per step time."""
    p, q, dt = params.p_innov, params.q_imit, params.dt
    fraction = np.zeros(params.steps + 1)
    for m in range(params.steps):
        f = fraction[m]
        fraction[m + 1] = f + (eligible_fraction - f) * (p + q * f) * dt
    return fraction


def bass_chain_mean(params, n_agents, eligible=None):
    """
    Exact expected adopted fraction of the per-step rule for a finite population.

    The adopter count is a Markov chain: from ``k`` adopters, the remaining
    ``eligible - k`` agents adopt independently with probability
    ``(p + q k / n_agents) dt``. The chain's distribution is pushed forward one
    step at a time through its binomial transition matrix.

    Returns:
        np.ndarray: expected fraction of all ``n_agents`` at each step time
    """
    eligible = n_agents if eligible is None else eligible
    if not 0 < eligible <= n_agents:
        raise ValueError(f"eligible agents must lie in (0, {n_agents}], got {eligible}")
    k = np.arange(eligible + 1)
    prob = (params.p_innov + params.q_imit * k / n_agents) * params.dt
    transition = binom.pmf(k[None, :] - k[:, None], (eligible - k)[:, None], prob[:, None])
    dist = np.zeros(eligible + 1)
    dist[0] = 1.0
    fraction = np.zeros(params.steps + 1)
    for m in range(params.steps):
        dist = dist @ transition
        fraction[m + 1] = dist @ k / n_agents
    return fraction
