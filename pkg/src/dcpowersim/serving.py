"""Capped continuous-batching approximation of LLM inference serving.

Each request occupies one concurrency slot of its template for a service
window that starts at the first grid tick at or after arrival and lasts
tokens * seconds-per-token, rounded up to whole ticks. Minute-averaged
concurrency is capped by the template's GPU budget, instances are
provisioned in whole template-sized GPU blocks, and power scales linearly
with capped concurrency. Demand above the cap is dropped, not carried over.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

SPEED_CLASSES = ("F", "M", "S")

# guards ceil/floor against float representation error on exact multiples
_GRID_EPS = 1e-9


@dataclass(frozen=True)
class LLMTemplate:
    """One deployable model template.

    ``gpus_per_instance`` GPUs serve up to ``max_batch`` concurrent
    requests; ``tpot_s`` maps each serving-speed class to its seconds per
    output token; ``rho_kw`` is the power per unit of served concurrency.
    """

    template_id: str
    gpus_per_instance: int
    max_batch: int
    tpot_s: dict[str, float]
    rho_kw: float
    speed_class: str = "M"

    def __post_init__(self) -> None:
        problems = []
        if self.gpus_per_instance <= 0:
            problems.append("gpus_per_instance must be positive")
        if self.max_batch <= 0:
            problems.append("max_batch must be positive")
        if self.rho_kw < 0:
            problems.append("rho_kw must be nonnegative")
        if self.speed_class not in SPEED_CLASSES:
            problems.append(f"speed_class must be one of {SPEED_CLASSES}")
        for cls, tpot in self.tpot_s.items():
            if cls not in SPEED_CLASSES:
                problems.append(f"unknown speed class {cls!r}")
            elif tpot <= 0:
                problems.append(f"tpot for class {cls!r} must be positive")
        if problems:
            raise ConfigurationError(
                f"template {self.template_id!r}: " + "; ".join(problems)
            )

    def tpot(self, speed_class: str | None = None) -> float:
        cls = speed_class or self.speed_class
        if cls not in self.tpot_s:
            raise ConfigurationError(
                f"template {self.template_id!r} has no tpot for class {cls!r}"
            )
        return self.tpot_s[cls]


def service_window(
    arrival_s: float, tokens: int, tpot_s: float, grid_tick_s: int
) -> tuple[float, float]:
    """(start, duration) of one request's service window in seconds.

    The window starts at the first tick at or after arrival and lasts
    ceil(tokens * tpot / tick) ticks; exact multiples stay unchanged.
    """
    if tokens <= 0 or tpot_s <= 0 or grid_tick_s <= 0:
        raise ValueError("tokens, tpot and tick must be positive")
    start = grid_tick_s * math.ceil(arrival_s / grid_tick_s - _GRID_EPS)
    ticks = max(1, math.ceil(tokens * tpot_s / grid_tick_s - _GRID_EPS))
    return float(start), float(grid_tick_s * ticks)


def service_windows(
    arrivals: np.ndarray, tokens: np.ndarray, tpot_s: float, grid_tick_s: int
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized service windows; returns (starts, durations) in seconds."""
    arrivals = np.asarray(arrivals, dtype=float)
    tokens = np.asarray(tokens, dtype=float)
    starts = grid_tick_s * np.ceil(arrivals / grid_tick_s - _GRID_EPS)
    ticks = np.maximum(1, np.ceil(tokens * tpot_s / grid_tick_s - _GRID_EPS))
    return starts.astype(np.int64), (grid_tick_s * ticks).astype(np.int64)


def expected_window_seconds(
    token_pmf: np.ndarray, tpot_s: float, grid_tick_s: int
) -> float:
    """Mean service-window duration for token counts drawn from ``token_pmf``.

    Uses the same tick rounding as :func:`service_windows`, so offered-work
    expectations match realized durations exactly in the mean.
    """
    pmf = np.asarray(token_pmf, dtype=float)
    tokens = np.arange(1, len(pmf) + 1)
    ticks = np.maximum(1, np.ceil(tokens * tpot_s / grid_tick_s - _GRID_EPS))
    return float(np.dot(pmf, grid_tick_s * ticks))


def concurrency(
    starts: np.ndarray,
    durations: np.ndarray,
    horizon_minutes: int,
    grid_tick_s: int,
) -> np.ndarray:
    """Minute-averaged concurrency: active request-seconds per minute / 60.

    Windows are tick-aligned, so the count of active requests is constant
    within a tick and the minute average is exact. The tick must divide 60.
    """
    if 60 % grid_tick_s != 0:
        raise ConfigurationError("grid tick must divide 60 seconds")
    per_minute = 60 // grid_tick_s
    n_ticks = horizon_minutes * per_minute
    delta = np.zeros(n_ticks + 1)
    if len(starts):
        s = np.clip(np.asarray(starts, dtype=np.int64) // grid_tick_s, 0, n_ticks)
        e = np.clip(
            (np.asarray(starts, dtype=np.int64) + np.asarray(durations, dtype=np.int64))
            // grid_tick_s,
            0,
            n_ticks,
        )
        np.add.at(delta, s, 1.0)
        np.add.at(delta, e, -1.0)
    active = np.cumsum(delta[:-1])
    return active.reshape(horizon_minutes, per_minute).sum(axis=1) / per_minute


@dataclass(frozen=True)
class ServingBudget:
    """Per-template GPU budgets; ``per_template`` is None when unbounded."""

    total_gpus: int | None
    per_template: tuple[int, ...] | None

    def budget_for(self, idx: int) -> int | None:
        if self.per_template is None:
            return None
        return self.per_template[idx]


def allocate_budgets(
    total_gpus: int, offered_gpu_hours: np.ndarray, gpus_per_instance: np.ndarray
) -> list[int]:
    """Split a GPU budget across templates proportionally to offered work.

    Each template's proportional share is floored to a whole number of its
    instances; leftover GPUs go out greedily, largest fractional remainder
    first (ties toward the earlier template), in instance-sized increments
    while they fit. Budgets of templates too large for the leftover stay
    unchanged; if no instance fits at all, remaining GPUs go unused. When
    the total budget is smaller than every instance size, every budget is
    zero and a warning is emitted.
    """
    offered = np.asarray(offered_gpu_hours, dtype=float)
    sizes = np.asarray(gpus_per_instance, dtype=np.int64)
    if total_gpus < 0:
        raise ValueError("total budget must be nonnegative")
    if np.any(offered < 0):
        raise ValueError("offered hours must be nonnegative")
    if np.any(sizes <= 0):
        raise ValueError("instance sizes must be positive")
    if offered.sum() <= 0:
        if total_gpus > 0:
            raise ValueError("no offered work to apportion the budget against")
        return [0] * len(sizes)
    shares = total_gpus * offered / offered.sum()
    budgets = (shares // sizes).astype(np.int64) * sizes
    remainders = (shares - budgets) / sizes
    leftover = total_gpus - int(budgets.sum())
    while leftover > 0:
        order = sorted(
            range(len(sizes)), key=lambda i: (-remainders[i], i)
        )
        for i in order:
            if sizes[i] <= leftover:
                budgets[i] += sizes[i]
                remainders[i] -= 1.0
                leftover -= int(sizes[i])
                break
        else:
            break
    if total_gpus > 0 and int(budgets.sum()) == 0:
        warnings.warn(
            "GPU budget is smaller than every template instance; all budgets zero",
            stacklevel=2,
        )
    return [int(b) for b in budgets]


def cap_concurrency(
    conc: np.ndarray, max_batch: int, budget_gpus: int | None, gpus_per_instance: int
) -> np.ndarray:
    """Cap concurrency at the budget's instance capacity:
    min(conc, max_batch * budget / gpus_per_instance)."""
    conc = np.asarray(conc, dtype=float)
    if budget_gpus is None:
        return conc.copy()
    limit = max_batch * budget_gpus / gpus_per_instance
    return np.minimum(conc, limit)


def gpu_use(
    conc_capped: np.ndarray, max_batch: int, gpus_per_instance: int
) -> np.ndarray:
    """GPUs provisioned per minute: whole instances covering the capped
    concurrency, gpus_per_instance * ceil(conc / max_batch)."""
    conc = np.asarray(conc_capped, dtype=float)
    instances = np.ceil(conc / max_batch - _GRID_EPS)
    return (gpus_per_instance * instances).astype(np.int64)


def inference_power(conc_capped: np.ndarray, rho_kw: float) -> np.ndarray:
    """Power per minute in kW, linear in served concurrency."""
    return rho_kw * np.asarray(conc_capped, dtype=float)
