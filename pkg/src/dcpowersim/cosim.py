"""Hybrid co-simulation of batch training and LLM serving on shared GPUs.

One scenario run proceeds in a fixed order: size the two workloads so their
expected GPU-hours hit the requested share/utilization targets, generate
inference requests and serve them under per-template GPU budgets, hand the
leftover capacity to the batch scheduler as a time-varying limit, then
synthesize per-job power and assemble the minute-level facility series.

Randomness is partitioned by named substreams, so the batch side of a run
is bit-identical whether or not inference is generated at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .batch_arrivals import SECONDS_PER_DAY, daily_mean, superpose_timezones
from .batch_power import (
    expected_gpu_runtime_hours,
    sample_job,
    select_template,
    synthesize_job_power,
)
from .config import ModelBundle
from .errors import ConfigurationError
from .inference_arrivals import (
    apply_verbosity,
    minute_mean_series,
    place_in_minutes,
    sample_minute_arrivals,
    sample_tokens,
    split_across_templates,
)
from .scheduler import (
    POLICIES,
    CapacityTimeline,
    Job,
    ScheduleTrace,
    accumulate_intervals,
    schedule,
)
from .seeds import derive_seed, substream
from .serving import (
    SPEED_CLASSES,
    allocate_budgets,
    cap_concurrency,
    concurrency,
    expected_window_seconds,
    gpu_use,
    inference_power,
    service_windows,
)

MINUTES_PER_DAY = 1440

CAP_MODES = ("capped", "uncapped")


@dataclass(frozen=True)
class Scenario:
    """One point in the operating space of the shared cluster."""

    scenario_id: str = "run"
    total_gpus: int = 64
    horizon_days: int = 7
    share_target: float = 0.5
    utilization_target: float = 0.7
    policy: str = "FCFS_BACKFILL"
    ckpt_seconds: float = 3600.0
    cap_mode: str = "capped"
    cap_fraction: float = 1.0
    verbosity_scale: float = 1.0
    speed_class: str | None = None
    preempt_on_drop: bool = True
    timezones: dict | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        problems = []
        if self.total_gpus < 1:
            problems.append(f"total_gpus must be positive, got {self.total_gpus}")
        if self.horizon_days < 0:
            problems.append(
                f"horizon_days must be nonnegative, got {self.horizon_days}"
            )
        if not 0.0 <= self.share_target <= 1.0:
            problems.append(f"share_target must lie in [0, 1], got {self.share_target}")
        if self.utilization_target <= 0.0:
            problems.append(
                f"utilization_target must be positive, got {self.utilization_target}"
            )
        if self.policy not in POLICIES:
            problems.append(f"unknown policy {self.policy!r}, expected one of {POLICIES}")
        if self.ckpt_seconds <= 0:
            problems.append(f"ckpt_seconds must be positive, got {self.ckpt_seconds}")
        if self.cap_mode not in CAP_MODES:
            problems.append(f"cap_mode must be one of {CAP_MODES}, got {self.cap_mode!r}")
        if not 0.0 < self.cap_fraction <= 1.0:
            problems.append(
                f"cap_fraction must lie in (0, 1], got {self.cap_fraction}"
            )
        if self.verbosity_scale <= 0:
            problems.append(
                f"verbosity_scale must be positive, got {self.verbosity_scale}"
            )
        if self.speed_class is not None and self.speed_class not in SPEED_CLASSES:
            problems.append(
                f"speed_class must be one of {SPEED_CLASSES}, got {self.speed_class!r}"
            )
        if problems:
            raise ConfigurationError("\n".join(problems))

    @property
    def horizon_minutes(self) -> int:
        return self.horizon_days * MINUTES_PER_DAY

    @property
    def horizon_seconds(self) -> int:
        return self.horizon_days * SECONDS_PER_DAY


def scenario_from_dict(doc: dict, defaults: dict | None = None) -> Scenario:
    """Merge a scenario document over bundle defaults into a Scenario."""
    merged: dict = {}
    for source in (defaults or {}), doc:
        for key, value in source.items():
            merged[key] = value
    known = set(Scenario.__dataclass_fields__)
    unknown = sorted(set(merged) - known)
    if unknown:
        raise ConfigurationError(f"unknown scenario keys: {', '.join(unknown)}")
    return Scenario(**merged)


@dataclass
class HybridResult:
    """Everything produced by one scenario run, on the minute grid."""

    scenario: Scenario
    horizon_minutes: int
    p_total_kw: np.ndarray
    p_batch_kw: np.ndarray
    p_inf_kw: np.ndarray
    g_inf: np.ndarray
    busy_batch: np.ndarray
    residual_capacity: np.ndarray
    conc: np.ndarray
    conc_cap: np.ndarray
    unmet: np.ndarray
    template_gpus: np.ndarray
    template_power_kw: np.ndarray
    budgets: list[int] | None
    w_inf_offered_h: float
    w_batch_offered_h: float
    unmet_work_h: float
    share_realized: float
    utilization_realized: float
    jobs: list[Job] = field(repr=False)
    trace: ScheduleTrace = field(repr=False)
    request_times: np.ndarray = field(repr=False)
    request_groups: list[str] = field(repr=False)
    request_templates: list[str] = field(repr=False)
    request_tokens: np.ndarray = field(repr=False)

    @property
    def unmet_work_frac(self) -> float:
        if self.w_inf_offered_h <= 0.0:
            return 0.0
        return self.unmet_work_h / self.w_inf_offered_h


def inference_share(w_inf_h: float, w_batch_h: float) -> float:
    """Fraction of total offered GPU work that is inference."""
    total = w_inf_h + w_batch_h
    if total <= 0.0:
        raise ValueError("no offered work on either side")
    return w_inf_h / total


def utilization(work_gpu_hours: float, total_gpus: int, horizon_days: int) -> float:
    """Offered GPU-hours relative to the full-capacity GPU-hours available."""
    return work_gpu_hours / (total_gpus * horizon_days * 24.0)


def expected_batch_work_gpu_hours(bundle: ModelBundle, horizon_days: int) -> float:
    """Mean offered batch GPU-hours at unit scale over the horizon."""
    total = 0.0
    for group in bundle.batch_groups:
        per_job = expected_gpu_runtime_hours(bundle.job_models[group])
        model = bundle.daily_models[group]
        mu_days = sum(
            daily_mean(model, day, bundle.calendar) for day in range(horizon_days)
        )
        total += mu_days * per_job
    return total


def expected_inference_work_gpu_hours(
    bundle: ModelBundle,
    horizon_days: int,
    verbosity_scale: float = 1.0,
    speed_class: str | None = None,
) -> float:
    """Mean offered inference GPU-hours at unit scale over the horizon.

    Window durations include the service-grid tick rounding, so this is
    the exact expectation of the realized offered work per request.
    """
    per_request = {}
    for group in bundle.request_groups:
        dist = apply_verbosity(bundle.token_dists[group], verbosity_scale)
        work = 0.0
        for share, template in zip(bundle.split_shares, bundle.llm_templates):
            mean_dur = expected_window_seconds(
                dist.pmf, template.tpot(speed_class), bundle.grid_tick_s
            )
            work += share * mean_dur * template.gpus_per_instance / (
                template.max_batch * 3600.0
            )
        per_request[group] = work
    total = 0.0
    for group in bundle.request_groups:
        mu = minute_mean_series(
            bundle.rate_models[group], horizon_days, bundle.calendar
        )
        total += float(mu.sum()) * per_request[group]
    return total


def _work_scales(bundle: ModelBundle, scenario: Scenario) -> tuple[float, float]:
    """Mean-scale factors that hit the share and utilization targets."""
    target_total = (
        scenario.utilization_target
        * scenario.total_gpus
        * scenario.horizon_days
        * 24.0
    )
    w_batch_target = (1.0 - scenario.share_target) * target_total
    w_inf_target = scenario.share_target * target_total
    problems = []
    fb = 0.0
    if w_batch_target > 0.0:
        base = expected_batch_work_gpu_hours(bundle, scenario.horizon_days)
        if base <= 0.0:
            problems.append("batch work targeted but expected base work is zero")
        else:
            fb = w_batch_target / base
    fi = 0.0
    if w_inf_target > 0.0:
        base = expected_inference_work_gpu_hours(
            bundle,
            scenario.horizon_days,
            scenario.verbosity_scale,
            scenario.speed_class,
        )
        if base <= 0.0:
            problems.append("inference work targeted but expected base work is zero")
        else:
            fi = w_inf_target / base
    if problems:
        raise ConfigurationError("\n".join(problems))
    return fb, fi


def generate_requests(
    bundle: ModelBundle, scenario: Scenario, root_seed: int, fi: float
) -> list[tuple[np.ndarray, np.ndarray, str, int]]:
    """Per (group, template) arrival times and token counts.

    Returns one entry per pair in deterministic (group, template) order,
    even when a pair produced no requests. ``fi`` scales every group's
    mean arrival rate; zero skips generation entirely.
    """
    out: list[tuple[np.ndarray, np.ndarray, str, int]] = []
    if fi == 0.0:
        return out
    dists = {
        group: apply_verbosity(bundle.token_dists[group], scenario.verbosity_scale)
        for group in bundle.request_groups
    }
    for group in bundle.request_groups:
        model = bundle.rate_models[group]
        base_mu = minute_mean_series(model, scenario.horizon_days, bundle.calendar)
        parts = split_across_templates(
            base_mu * fi, model.effective_dispersion, bundle.split_shares
        )
        for t_index, (mu_m, alpha_m) in enumerate(parts):
            template_id = bundle.llm_templates[t_index].template_id
            if not np.any(mu_m > 0.0):
                out.append(
                    (np.empty(0), np.empty(0, dtype=np.int64), group, t_index)
                )
                continue
            rng = substream(root_seed, "inference-arrivals", group, template_id)
            counts = sample_minute_arrivals(mu_m, alpha_m, rng)
            times = place_in_minutes(counts, rng)
            tokens_rng = substream(root_seed, "inference-tokens", group, template_id)
            tokens = sample_tokens(dists[group], tokens_rng, size=times.size)
            out.append((times, tokens, group, t_index))
    return out


def flatten_requests(
    bundle: ModelBundle,
    parts: list[tuple[np.ndarray, np.ndarray, str, int]],
) -> tuple[np.ndarray, list[str], list[str], np.ndarray]:
    """Merge per-(group, template) request parts into one time-ordered log."""
    if not parts:
        return np.empty(0), [], [], np.empty(0, dtype=np.int64)
    all_times = np.concatenate([p[0] for p in parts])
    all_tokens = np.concatenate([p[1] for p in parts])
    groups_flat: list[str] = []
    templates_flat: list[str] = []
    for times, _tokens, group, t_index in parts:
        template_id = bundle.llm_templates[t_index].template_id
        groups_flat.extend([group] * times.size)
        templates_flat.extend([template_id] * times.size)
    order = np.argsort(all_times, kind="stable")
    return (
        all_times[order],
        [groups_flat[i] for i in order],
        [templates_flat[i] for i in order],
        all_tokens[order],
    )


def generate_jobs(
    bundle: ModelBundle, scenario: Scenario, root_seed: int, fb: float
) -> tuple[list[Job], np.ndarray]:
    """Batch jobs over the horizon with their raw arrival timestamps.

    Job ids are assigned in arrival order; ``fb`` scales every group's
    mean daily count, and zero skips generation entirely.
    """
    if fb == 0.0:
        return [], np.empty(0)
    plan = bundle.timezone_plan
    if scenario.timezones is not None:
        plan = type(plan)(
            tuple(scenario.timezones["offsets_hours"]),
            tuple(scenario.timezones["shares"])
            if scenario.timezones.get("shares") is not None
            else None,
        )
    rows: list[tuple[float, int, int, int, int, int, str]] = []
    for g_index, group in enumerate(bundle.batch_groups):
        arrivals = superpose_timezones(
            plan,
            bundle.daily_models[group],
            bundle.intraday_profiles[group],
            scenario.horizon_days,
            substream(root_seed, "batch-arrivals", group),
            bundle.calendar,
            mean_scale=fb,
        )
        job_rng = substream(root_seed, "batch-jobs", group)
        model = bundle.job_models[group]
        for k, ts in enumerate(arrivals):
            tl, gpus, runtime = sample_job(model, job_rng)
            runtime_s = max(1, min(int(round(runtime)), int(tl)))
            rows.append((float(ts), g_index, k, runtime_s, int(tl), gpus, group))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    jobs = []
    for job_id, (ts, _gi, _k, runtime_s, tl, gpus, group) in enumerate(rows):
        jobs.append(
            Job(
                job_id=job_id,
                arrival_s=int(math.floor(ts)),
                gpu=gpus,
                runtime_s=runtime_s,
                time_limit_s=tl,
                group=group,
            )
        )
    return jobs, np.array([r[0] for r in rows])


def job_power_trace(bundle: ModelBundle, job: Job, root_seed: int) -> np.ndarray:
    """One job's power trace in kW, one entry per started job minute."""
    store = bundle.template_store
    key_bin = store.runtime_bin(job.group, job.time_limit_s, job.gpu, job.runtime_s)
    key = (job.group, job.time_limit_s, job.gpu, key_bin)
    template = select_template(store, key, bundle.power_cfg.template_gate)
    return synthesize_job_power(
        template,
        job.runtime_s,
        job.gpu,
        bundle.power_cfg,
        substream(root_seed, "job-power", str(job.job_id)),
    )


def _batch_power_series(
    bundle: ModelBundle,
    scenario: Scenario,
    root_seed: int,
    jobs: list[Job],
    trace: ScheduleTrace,
) -> np.ndarray:
    """Facility-level batch power per minute, summed over segment runs.

    A job's power trajectory is indexed by job time. A segment run at
    index k resumes the trajectory at k full checkpoint intervals, so a
    preempted and rerun segment replays its own stretch of the curve.
    """
    n_minutes = scenario.horizon_minutes
    out = np.zeros(n_minutes)
    runs_by_job: dict[int, list] = {}
    for run in trace.runs:
        runs_by_job.setdefault(run.job_id, []).append(run)
    step = (
        0
        if math.isinf(scenario.ckpt_seconds)
        else int(scenario.ckpt_seconds)
    )
    for job in jobs:
        runs = runs_by_job.get(job.job_id)
        if not runs:
            continue
        series = job_power_trace(bundle, job, root_seed)
        for run in runs:
            offset = run.seg_index * step
            span = run.end_s - run.start_s
            if span <= 0:
                continue
            jt0, jt1 = offset, offset + span
            first_edge = (jt0 // 60 + 1) * 60
            inner = np.arange(first_edge, jt1, 60, dtype=np.int64)
            edges = np.concatenate(([jt0], inner, [jt1]))
            minute_idx = np.minimum(edges[:-1] // 60, len(series) - 1)
            values = series[minute_idx]
            wall = run.start_s + (edges - jt0)
            accumulate_intervals(wall[:-1], wall[1:], values, n_minutes, out=out)
    return out


def run_hybrid(bundle: ModelBundle, scenario: Scenario) -> HybridResult:
    """Run one scenario end to end and return the minute-level result."""
    root_seed = derive_seed(scenario.seed, "run", scenario.scenario_id)
    n_minutes = scenario.horizon_minutes
    n_templates = len(bundle.llm_templates)
    fb, fi = _work_scales(bundle, scenario)

    # inference side
    request_parts = generate_requests(bundle, scenario, root_seed, fi)
    starts_by_t: list[list[np.ndarray]] = [[] for _ in range(n_templates)]
    tokens_by_t: list[list[np.ndarray]] = [[] for _ in range(n_templates)]
    for times, tokens, _group, t_index in request_parts:
        starts_by_t[t_index].append(times)
        tokens_by_t[t_index].append(tokens)
    conc = np.zeros((n_templates, n_minutes))
    durations_by_t: list[np.ndarray] = []
    offered = np.zeros(n_templates)
    for t_index, template in enumerate(bundle.llm_templates):
        arrivals = (
            np.concatenate(starts_by_t[t_index])
            if starts_by_t[t_index]
            else np.empty(0)
        )
        tokens = (
            np.concatenate(tokens_by_t[t_index])
            if tokens_by_t[t_index]
            else np.empty(0, dtype=np.int64)
        )
        tpot = template.tpot(scenario.speed_class)
        win_starts, win_durs = service_windows(
            arrivals, tokens, tpot, bundle.grid_tick_s
        )
        durations_by_t.append(win_durs)
        offered[t_index] = (
            win_durs.sum() * template.gpus_per_instance / (template.max_batch * 3600.0)
        )
        conc[t_index] = concurrency(
            win_starts, win_durs, n_minutes, bundle.grid_tick_s
        )
    w_inf_offered = float(offered.sum())
    budgets: list[int] | None = None
    if scenario.cap_mode == "capped" and w_inf_offered > 0.0:
        pool = int(math.floor(scenario.cap_fraction * scenario.total_gpus))
        budgets = allocate_budgets(
            pool,
            offered,
            [t.gpus_per_instance for t in bundle.llm_templates],
        )
    conc_cap = np.zeros_like(conc)
    template_gpus = np.zeros((n_templates, n_minutes), dtype=np.int64)
    template_power = np.zeros((n_templates, n_minutes))
    for t_index, template in enumerate(bundle.llm_templates):
        conc_cap[t_index] = cap_concurrency(
            conc[t_index],
            template.max_batch,
            budgets[t_index] if budgets is not None else None,
            template.gpus_per_instance,
        )
        template_gpus[t_index] = gpu_use(
            conc_cap[t_index], template.max_batch, template.gpus_per_instance
        )
        template_power[t_index] = inference_power(conc_cap[t_index], template.rho_kw)
    unmet = conc - conc_cap
    unmet_work_h = 0.0
    for t_index, template in enumerate(bundle.llm_templates):
        unmet_work_h += (
            float(unmet[t_index].sum())
            * 60.0
            * template.gpus_per_instance
            / (template.max_batch * 3600.0)
        )
    g_inf = template_gpus.sum(axis=0)
    p_inf = template_power.sum(axis=0)

    # batch side runs on whatever the serving plane left over
    residual = np.maximum(scenario.total_gpus - g_inf, 0).astype(np.int64)
    capacity = CapacityTimeline.from_minute_series(
        np.concatenate([residual, [scenario.total_gpus]])
    )
    jobs, _ = generate_jobs(bundle, scenario, root_seed, fb)
    trace = schedule(
        jobs,
        capacity,
        scenario.policy,
        ckpt_s=scenario.ckpt_seconds,
        preempt_on_drop=scenario.preempt_on_drop,
    )
    busy_batch = trace.busy_minutes(n_minutes)
    p_batch = _batch_power_series(bundle, scenario, root_seed, jobs, trace)
    rejected = set(trace.rejected_job_ids)
    w_batch_offered = sum(
        job.gpu * job.runtime_s / 3600.0 for job in jobs if job.job_id not in rejected
    )

    request_times, request_groups, request_templates, request_tokens = (
        flatten_requests(bundle, request_parts)
    )

    # the residual-capacity construction makes this hold by arithmetic;
    # fail loudly if scheduling ever breaks it
    overrun = float(np.max(g_inf + busy_batch - scenario.total_gpus, initial=0.0))
    if overrun > 1e-9:
        raise RuntimeError(
            f"capacity conservation violated by {overrun} GPUs in a minute"
        )

    total_work = w_inf_offered + w_batch_offered
    share_realized = (w_inf_offered / total_work) if total_work > 0.0 else 0.0
    capacity_hours = scenario.total_gpus * scenario.horizon_days * 24.0
    return HybridResult(
        scenario=scenario,
        horizon_minutes=n_minutes,
        p_total_kw=p_batch + p_inf,
        p_batch_kw=p_batch,
        p_inf_kw=p_inf,
        g_inf=g_inf,
        busy_batch=busy_batch,
        residual_capacity=residual,
        conc=conc,
        conc_cap=conc_cap,
        unmet=unmet,
        template_gpus=template_gpus,
        template_power_kw=template_power,
        budgets=budgets,
        w_inf_offered_h=w_inf_offered,
        w_batch_offered_h=w_batch_offered,
        unmet_work_h=unmet_work_h,
        share_realized=share_realized,
        utilization_realized=(
            utilization(total_work, scenario.total_gpus, scenario.horizon_days)
            if capacity_hours > 0.0
            else 0.0
        ),
        jobs=jobs,
        trace=trace,
        request_times=request_times,
        request_groups=request_groups,
        request_templates=request_templates,
        request_tokens=request_tokens,
    )
