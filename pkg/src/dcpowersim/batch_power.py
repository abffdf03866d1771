"""Batch-job characteristics and per-job power-trace synthesis.

Job characteristics factorize as P(time limit | group) * P(gpus | group,
time limit) * P(log runtime | group, time limit, gpus): categorical tables
with additive smoothing for the discrete parts and hierarchical quantile
curves with linear interpolation for log runtime. Power traces come from
minute-indexed templates keyed by (group, time limit, gpus, runtime bin)
with a count-gated hard backoff chain; synthesis adds AR(1) noise around the
template mean, clips to the template's empirical band, then scales by GPU
count and a hardware adjustment factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError

DEFAULT_TEMPLATE_GATE = 194


def add_alpha_pmf(counts, alpha: float = 1.0) -> np.ndarray:
    """Categorical pmf from counts with additive (add-alpha) smoothing."""
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    total = counts.sum() + alpha * len(counts)
    if total <= 0:
        raise ValueError("no observations and no smoothing mass")
    return (counts + alpha) / total


@dataclass(frozen=True)
class JobClassModel:
    """Factorized job-characteristics model for one resource group.

    ``gpu_tables`` maps a time limit to its GPU-count support and pmf.
    Runtime quantile curves live on ``quantile_grid`` (probabilities in
    (0, 1), ascending) in log-runtime units, at up to three hierarchy
    levels: per (time limit, gpus) leaf, per time limit, and group-wide.
    """

    group: str
    tl_support: tuple[int, ...]
    tl_pmf: np.ndarray
    gpu_tables: dict[int, tuple[tuple[int, ...], np.ndarray]]
    quantile_grid: np.ndarray
    leaf_quantiles: dict[tuple[int, int], np.ndarray]
    tl_quantiles: dict[int, np.ndarray]
    group_quantiles: np.ndarray | None

    def __post_init__(self) -> None:
        object.__setattr__(self, "tl_pmf", np.asarray(self.tl_pmf, dtype=float))
        object.__setattr__(
            self, "quantile_grid", np.asarray(self.quantile_grid, dtype=float)
        )
        problems = []
        if len(self.tl_support) == 0:
            problems.append("needs at least one time limit")
        if len(self.tl_pmf) != len(self.tl_support):
            problems.append("tl_pmf length must match tl_support")
        for tl in self.tl_support:
            if tl <= 0:
                problems.append(f"time limit {tl} must be positive")
            if tl not in self.gpu_tables:
                problems.append(f"no GPU table for time limit {tl}")
        grid = self.quantile_grid
        if len(grid) < 2 or np.any(np.diff(grid) <= 0):
            problems.append("quantile_grid must be ascending with 2+ points")
        elif grid[0] <= 0 or grid[-1] >= 1:
            problems.append("quantile_grid must lie strictly inside (0, 1)")
        for curve in self._all_curves():
            if len(curve) != len(grid):
                problems.append("quantile curve length must match the grid")
            elif np.any(np.diff(curve) < 0):
                problems.append("quantile curves must be nondecreasing")
        if problems:
            raise ConfigurationError(f"group {self.group!r}: " + "; ".join(problems))

    def _all_curves(self):
        yield from self.leaf_quantiles.values()
        yield from self.tl_quantiles.values()
        if self.group_quantiles is not None:
            yield self.group_quantiles


def resolve_quantiles(model: JobClassModel, tl: int, gpus: int) -> np.ndarray:
    """Quantile curve for (tl, gpus), backing off leaf -> time limit -> group."""
    curve = model.leaf_quantiles.get((tl, gpus))
    if curve is None:
        curve = model.tl_quantiles.get(tl)
    if curve is None:
        curve = model.group_quantiles
    if curve is None:
        raise ConfigurationError(
            f"group {model.group!r}: no runtime quantiles reachable for "
            f"time limit {tl}, gpus {gpus}"
        )
    return curve


def sample_job(
    model: JobClassModel, rng: np.random.Generator
) -> tuple[int, int, float]:
    """Draw (time_limit_s, gpus, runtime_s) for one job.

    Runtime is exp of a linearly interpolated quantile of the resolved
    log-runtime curve at a uniform draw (flat extrapolation beyond the grid
    ends), truncated at the time limit. Always positive.
    """
    u_tl = rng.random()
    tl_idx = int(np.searchsorted(np.cumsum(model.tl_pmf), u_tl, side="right"))
    tl_idx = min(tl_idx, len(model.tl_support) - 1)
    tl = model.tl_support[tl_idx]

    support, pmf = model.gpu_tables[tl]
    u_g = rng.random()
    g_idx = min(int(np.searchsorted(np.cumsum(pmf), u_g, side="right")), len(support) - 1)
    gpus = support[g_idx]

    curve = resolve_quantiles(model, tl, gpus)
    u_r = rng.random()
    log_rt = float(np.interp(u_r, model.quantile_grid, curve))
    runtime = min(math.exp(log_rt), float(tl))
    return tl, int(gpus), runtime


def expected_gpu_runtime_hours(model: JobClassModel) -> float:
    """Expected gpus * runtime per job in GPU-hours.

    The runtime expectation is approximated by averaging the truncated
    quantile curve over its probability grid; used only for sizing workload
    intensity, never inside the samplers.
    """
    total = 0.0
    for tl, p_tl in zip(model.tl_support, model.tl_pmf):
        support, pmf = model.gpu_tables[tl]
        for gpus, p_g in zip(support, pmf):
            curve = resolve_quantiles(model, tl, int(gpus))
            mean_rt = float(np.mean(np.minimum(np.exp(curve), float(tl))))
            total += p_tl * p_g * gpus * mean_rt
    return total / 3600.0


@dataclass(frozen=True)
class PowerTemplate:
    """Minute-indexed per-GPU power statistics for one template node.

    Arrays are aligned by minute since job start and hold kW per GPU in the
    hardware baseline the templates were measured on. ``support_count`` is
    the number of jobs behind the node; ``ar1_phi`` the fitted lag-1
    autocorrelation of minute residuals.
    """

    key: tuple
    minute_mean: np.ndarray
    minute_std: np.ndarray
    minute_p5: np.ndarray
    minute_p95: np.ndarray
    ar1_phi: float
    support_count: int
    backoff_level: str = "leaf"

    def __post_init__(self) -> None:
        for name in ("minute_mean", "minute_std", "minute_p5", "minute_p95"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        problems = []
        n = len(self.minute_mean)
        if n == 0:
            problems.append("needs at least one minute of statistics")
        for name in ("minute_std", "minute_p5", "minute_p95"):
            if len(getattr(self, name)) != n:
                problems.append(f"{name} length must match minute_mean")
        if n and len(self.minute_std) == n and np.any(self.minute_std < 0):
            problems.append("minute_std must be nonnegative")
        if (
            n
            and len(self.minute_p5) == n
            and len(self.minute_p95) == n
            and (
                np.any(self.minute_p5 > self.minute_mean + 1e-9)
                or np.any(self.minute_mean > self.minute_p95 + 1e-9)
            )
        ):
            problems.append("band must satisfy p5 <= mean <= p95")
        if not -1.0 < self.ar1_phi < 1.0:
            problems.append("ar1_phi must lie strictly inside (-1, 1)")
        if self.support_count < 0:
            problems.append("support_count must be nonnegative")
        if problems:
            raise ConfigurationError(f"template {self.key!r}: " + "; ".join(problems))

    @property
    def n_minutes(self) -> int:
        return len(self.minute_mean)


_LEVEL_NAMES = {4: "runtime-bin", 3: "gpus", 2: "time-limit", 1: "group"}


@dataclass(frozen=True)
class TemplateStore:
    """Backoff hierarchy of power templates.

    Keys are tuples (group,), (group, tl), (group, tl, gpus) or
    (group, tl, gpus, runtime_bin). ``runtime_bin_edges_log`` optionally
    maps (group, tl, gpus) to ascending log-runtime bin edges.
    """

    nodes: dict[tuple, PowerTemplate]
    runtime_bin_edges_log: dict[tuple, np.ndarray]

    def runtime_bin(self, group: str, tl: int, gpus: int, runtime_s: float) -> int | None:
        edges = self.runtime_bin_edges_log.get((group, tl, gpus))
        if edges is None or len(edges) < 2:
            return None
        pos = int(np.searchsorted(edges, math.log(runtime_s), side="right")) - 1
        return min(max(pos, 0), len(edges) - 2)


def select_template(store: TemplateStore, key: tuple, gate: int) -> PowerTemplate:
    """Resolve a template by hard backoff with a support-count gate.

    ``key`` is (group, tl, gpus, runtime_bin) where runtime_bin may be None.
    The chain (group, tl, gpus, bin) -> (group, tl, gpus) -> (group, tl) ->
    (group,) is walked in order and the first node with support_count >=
    gate wins; its backoff level is recorded on the returned template.
    """
    group, tl, gpus, rbin = key
    chain = []
    if rbin is not None:
        chain.append((group, tl, gpus, rbin))
    chain.extend([(group, tl, gpus), (group, tl), (group,)])
    for node_key in chain:
        node = store.nodes.get(node_key)
        if node is not None and node.support_count >= gate:
            return replace(node, backoff_level=_LEVEL_NAMES[len(node_key)])
    raise ConfigurationError(
        "no power template meets the support gate "
        f"{gate}; chain inspected: {chain}"
    )


@dataclass(frozen=True)
class PowerSynthesisConfig:
    """Global knobs for trace synthesis.

    ``noise_factor`` scales the residual amplitude, ``hw_factor`` rescales
    the measured per-GPU power to the simulated hardware generation.
    """

    noise_factor: float = 1.0
    hw_factor: float = 1.0
    template_gate: int = DEFAULT_TEMPLATE_GATE

    def __post_init__(self) -> None:
        if self.noise_factor < 0 or self.hw_factor <= 0 or self.template_gate < 0:
            raise ConfigurationError("invalid power synthesis configuration")


def ar1_residuals(phi: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Stationary AR(1) residual path with unit marginal variance.

    eps[0] ~ N(0, 1); eps[t] = phi * eps[t-1] + sqrt(1 - phi^2) * N(0, 1),
    so every marginal has variance 1 and lag-1 autocorrelation phi.
    """
    if not -1.0 < phi < 1.0:
        raise ValueError("phi must lie strictly inside (-1, 1)")
    shocks = rng.standard_normal(n)
    if n == 0 or phi == 0.0:
        return shocks
    out = np.empty(n)
    out[0] = shocks[0]
    c = math.sqrt(1.0 - phi * phi)
    for t in range(1, n):
        out[t] = phi * out[t - 1] + c * shocks[t]
    return out


def template_minute_stats(
    template: PowerTemplate, minute: int
) -> tuple[float, float, float, float]:
    """(mean, std, p5, p95) for a job minute; indexes past the template end
    hold the template's last minute."""
    i = min(minute, template.n_minutes - 1)
    return (
        float(template.minute_mean[i]),
        float(template.minute_std[i]),
        float(template.minute_p5[i]),
        float(template.minute_p95[i]),
    )


def synthesize_job_power(
    template: PowerTemplate,
    runtime_s: float,
    gpu_count: int,
    cfg: PowerSynthesisConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Whole-job power trace in kW, one value per started job minute.

    raw(t) = mean(t) + noise_factor * std(t) * eps(t) with AR(1) residuals,
    clipped to [p5(t), p95(t)] before scaling, then multiplied by the GPU
    count and the hardware factor. The trace has ceil(runtime / 60) entries;
    integration over wall-clock windows weights the final minute by its
    fractional occupancy.
    """
    if runtime_s <= 0:
        raise ValueError("runtime must be positive")
    if gpu_count <= 0:
        raise ValueError("gpu_count must be positive")
    n = int(math.ceil(runtime_s / 60.0))
    idx = np.minimum(np.arange(n), template.n_minutes - 1)
    mean = template.minute_mean[idx]
    std = template.minute_std[idx]
    p5 = template.minute_p5[idx]
    p95 = template.minute_p95[idx]
    eps = ar1_residuals(template.ar1_phi, n, rng)
    raw = mean + cfg.noise_factor * std * eps
    clipped = np.clip(raw, p5, p95)
    return cfg.hw_factor * gpu_count * clipped
