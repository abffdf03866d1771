"""Count and discrete-distribution sampling shared by the workload generators."""

from __future__ import annotations

import numpy as np


def sample_nb2(mu, alpha: float, rng: np.random.Generator):
    """Draw NB2 counts with mean ``mu`` and variance ``mu + alpha * mu**2``.

    Implemented as a gamma-Poisson mixture: the Poisson rate is drawn from a
    gamma distribution with shape ``1 / alpha`` and scale ``alpha * mu``, so
    the mixture has mean ``mu`` and the quadratic NB2 variance. ``alpha == 0``
    degenerates to a plain Poisson draw.

    ``mu`` may be a scalar or an array; entries equal to zero yield zero
    counts. Returns an integer scalar for scalar input, otherwise an array.
    """
    if alpha < 0:
        raise ValueError("dispersion must be nonnegative")
    arr = np.asarray(mu, dtype=float)
    if np.any(arr < 0):
        raise ValueError("mean must be nonnegative")
    if alpha == 0.0:
        out = rng.poisson(arr)
    else:
        lam = rng.gamma(1.0 / alpha, alpha * arr)
        out = rng.poisson(lam)
    if np.isscalar(mu) or np.ndim(mu) == 0:
        return int(out)
    return out


def sample_categorical(pmf, rng: np.random.Generator, size=None):
    """Indices drawn from a pmf by inverse CDF on the cumulative sum."""
    cdf = np.cumsum(np.asarray(pmf, dtype=float))
    if cdf[-1] <= 0:
        raise ValueError("pmf has no mass")
    cdf /= cdf[-1]
    u = rng.random(size)
    return np.searchsorted(cdf, u, side="right")
