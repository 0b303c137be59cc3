"""Truncated-normal actuation noise."""

from typing import Optional, Union

import numpy as np

from app.errors import ContractError


def sample_truncated_normal(
    mu: float, sigma: float, delta: float, rng: np.random.Generator, size: Optional[int] = None
) -> Union[float, np.ndarray]:
    """Draw from N(mu, sigma^2) conditioned on [mu - delta, mu + delta].

    Uniform proposal over the interval, accepted with probability
    exp(-(z - mu)^2 / (2 sigma^2)); rejected slots are refilled in rounds.
    Returns a float when ``size`` is None, otherwise an array of ``size``
    draws. A zero-width interval returns ``mu`` without touching ``rng``.
    """
    if delta < 0:
        raise ContractError(f"truncation half-width must be non-negative, got {delta}")
    if delta > 0 and sigma <= 0:
        raise ContractError(f"sigma must be positive when delta > 0, got {sigma}")
    n = 1 if size is None else int(size)
    if delta == 0:
        out = np.full(n, float(mu))
    else:
        out = np.empty(n)
        pending = np.arange(n)
        while pending.size:
            z = rng.uniform(mu - delta, mu + delta, pending.size)
            accept = rng.random(pending.size) <= np.exp(-((z - mu) ** 2) / (2.0 * sigma * sigma))
            out[pending[accept]] = z[accept]
            pending = pending[~accept]
    return float(out[0]) if size is None else out
