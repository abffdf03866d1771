"""Discrete-event scheduling of checkpointed batch jobs on shared GPUs.

Jobs are split into fixed-length checkpoint segments that must run in
order; each segment occupies its job's full GPU request. The scheduler is
event-driven over integer seconds: queue-head segments start as soon as
they fit, a blocked head gets the single committed reservation, and later
segments may start early only when they fit now and complete before that
reservation (conservative backfilling, so the head is never delayed).
Capacity is observed causally from a step timeline; on a capacity drop the
most recently started segments are preempted first and re-enter the queue
with their full duration.
"""

from __future__ import annotations

import heapq
import itertools
import math
import warnings
from bisect import insort
from dataclasses import dataclass, field

import numpy as np

MINUTES_PER_DAY = 1_440

POLICIES = ("FCFS_BACKFILL", "SWF")

_EV_COMPLETION = 0
_EV_CAPACITY = 1
_EV_ARRIVAL = 2


def segment_job(runtime_s: int, ckpt_s: float) -> list[int]:
    """Split a realized runtime into checkpoint segments.

    Produces floor(runtime / ckpt) full segments plus a positive remainder
    segment when the division is inexact. An infinite (or runtime-sized)
    checkpoint interval yields the whole job as a single segment.
    """
    if runtime_s <= 0:
        raise ValueError("runtime must be positive")
    if ckpt_s <= 0:
        raise ValueError("checkpoint interval must be positive")
    if math.isinf(ckpt_s) or ckpt_s >= runtime_s:
        return [int(runtime_s)]
    step = int(ckpt_s)
    n_full, rem = divmod(int(runtime_s), step)
    segments = [step] * n_full
    if rem:
        segments.append(rem)
    return segments


@dataclass(frozen=True)
class Job:
    job_id: int
    arrival_s: int
    gpu: int
    runtime_s: int
    time_limit_s: int = 0
    group: str = ""

    def __post_init__(self) -> None:
        if self.gpu <= 0:
            raise ValueError(f"job {self.job_id}: gpu request must be positive")
        if self.runtime_s <= 0:
            raise ValueError(f"job {self.job_id}: runtime must be positive")
        if self.arrival_s < 0:
            raise ValueError(f"job {self.job_id}: arrival must be nonnegative")


@dataclass
class _Segment:
    job: Job
    seg_index: int
    duration_s: int
    is_last: bool
    eligible_at: int


@dataclass(frozen=True)
class SegmentRun:
    """One executed stretch of a segment; ``completed`` is False when the
    run was cut short by preemption."""

    job_id: int
    seg_index: int
    start_s: int
    end_s: int
    gpu: int
    completed: bool


@dataclass(frozen=True)
class BackfillRecord:
    """Audit record for one backfill decision."""

    time_s: int
    job_id: int
    seg_index: int
    head_job_id: int
    head_reservation_s: float


@dataclass(frozen=True)
class PreemptionRecord:
    time_s: int
    job_id: int
    seg_index: int
    started_s: int


@dataclass(frozen=True)
class CapacityTimeline:
    """Right-open step function of available GPUs over time.

    ``times`` are ascending integer seconds starting at 0; ``values[i]``
    holds on [times[i], times[i+1]) and the last value extends forever.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.int64)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if len(times) == 0 or len(times) != len(values):
            raise ValueError("timeline needs matching, nonempty times and values")
        if times[0] != 0:
            raise ValueError("timeline must start at t=0")
        if np.any(np.diff(times) <= 0):
            raise ValueError("timeline times must be strictly increasing")
        if np.any(values < 0):
            raise ValueError("capacity values must be nonnegative")

    @classmethod
    def constant(cls, gpus: int) -> "CapacityTimeline":
        return cls(np.array([0]), np.array([gpus]))

    @classmethod
    def from_minute_series(cls, per_minute: np.ndarray) -> "CapacityTimeline":
        """Timeline with a breakpoint at each minute where the value changes."""
        per_minute = np.asarray(per_minute, dtype=np.int64)
        if len(per_minute) == 0:
            raise ValueError("need at least one minute")
        keep = np.concatenate(([True], np.diff(per_minute) != 0))
        return cls(np.flatnonzero(keep) * 60, per_minute[keep])

    def value_at(self, t: float) -> int:
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        return int(self.values[max(idx, 0)])

    @property
    def max_value(self) -> int:
        return int(self.values.max())

    def change_points(self) -> list[tuple[int, int]]:
        return [(int(t), int(v)) for t, v in zip(self.times[1:], self.values[1:])]


@dataclass
class ScheduleTrace:
    """Everything observable about one scheduling run."""

    runs: list[SegmentRun] = field(default_factory=list)
    backfills: list[BackfillRecord] = field(default_factory=list)
    preemptions: list[PreemptionRecord] = field(default_factory=list)
    rejected_job_ids: list[int] = field(default_factory=list)
    job_first_start: dict[int, int] = field(default_factory=dict)
    job_completion: dict[int, int] = field(default_factory=dict)
    queue_delays: dict[int, int] = field(default_factory=dict)

    def busy_minutes(self, n_minutes: int) -> np.ndarray:
        """Time-weighted mean of occupied GPUs for each simulation minute."""
        if not self.runs:
            return np.zeros(n_minutes)
        starts = np.array([r.start_s for r in self.runs], dtype=np.int64)
        ends = np.array([r.end_s for r in self.runs], dtype=np.int64)
        gpus = np.array([r.gpu for r in self.runs], dtype=float)
        return accumulate_intervals(starts, ends, gpus, n_minutes)

    def usage_step(self) -> tuple[np.ndarray, np.ndarray]:
        """Exact occupied-GPU step function (times, values) from the runs."""
        events: dict[int, int] = {}
        for r in self.runs:
            events[r.start_s] = events.get(r.start_s, 0) + r.gpu
            events[r.end_s] = events.get(r.end_s, 0) - r.gpu
        times = np.array(sorted(events), dtype=np.int64)
        deltas = np.array([events[t] for t in times], dtype=np.int64)
        return times, np.cumsum(deltas)


def accumulate_intervals(
    starts: np.ndarray,
    ends: np.ndarray,
    values: np.ndarray,
    n_minutes: int,
    out: np.ndarray | None = None,
) -> np.ndarray:
    """Add ``value * overlap_seconds / 60`` of each [start, end) interval
    into a per-minute series of length ``n_minutes``, reusing ``out`` when
    given."""
    if out is None:
        out = np.zeros(n_minutes)
    horizon = n_minutes * 60
    s = np.clip(np.asarray(starts, dtype=np.int64), 0, horizon)
    e = np.clip(np.asarray(ends, dtype=np.int64), 0, horizon)
    v = np.asarray(values, dtype=float)
    keep = e > s
    if not np.any(keep):
        return out
    s, e, v = s[keep], e[keep], v[keep]
    ms = s // 60
    me = (e - 1) // 60
    single = ms == me
    np.add.at(out, ms[single], v[single] * (e[single] - s[single]) / 60.0)
    multi = ~single
    if np.any(multi):
        np.add.at(out, ms[multi], v[multi] * ((ms[multi] + 1) * 60 - s[multi]) / 60.0)
        np.add.at(out, me[multi], v[multi] * (e[multi] - me[multi] * 60) / 60.0)
        diff = np.zeros(n_minutes + 1)
        np.add.at(diff, ms[multi] + 1, v[multi])
        np.add.at(diff, me[multi], -v[multi])
        out += np.cumsum(diff)[:n_minutes]
    return out


def preempt_on_capacity_drop(
    active: list[tuple[int, int, int, int, object]], usage: int, new_capacity: int
) -> list[object]:
    """Select victims, most recently started first, until usage fits.

    ``active`` holds (start_s, job_id, seg_index, gpu, handle) for every
    running segment; ties on start time break toward the larger job id,
    then the later segment. Returns the victims' handles.
    """
    victims = []
    for start, job_id, seg_index, gpu, handle in sorted(
        active, key=lambda a: (a[0], a[1], a[2]), reverse=True
    ):
        if usage <= new_capacity:
            break
        victims.append(handle)
        usage -= gpu
    return victims


def _policy_key(policy: str, seg: _Segment) -> tuple:
    if policy == "FCFS_BACKFILL":
        return (seg.job.arrival_s, seg.job.job_id, seg.seg_index)
    # SWF: fewest GPUs first, then shortest realized runtime
    return (
        seg.job.gpu,
        seg.job.runtime_s,
        seg.job.arrival_s,
        seg.job.job_id,
        seg.seg_index,
    )


class _Engine:
    def __init__(
        self,
        jobs: list[Job],
        capacity: CapacityTimeline,
        policy: str,
        ckpt_s: float,
        preempt_on_drop: bool,
    ) -> None:
        self.capacity = capacity
        self.policy = policy
        self.ckpt_s = ckpt_s
        self.preempt_on_drop = preempt_on_drop
        self.trace = ScheduleTrace()
        self.queue: list[tuple[tuple, _Segment]] = []
        self.running: dict[int, tuple[_Segment, int]] = {}  # serial -> (seg, start)
        self.usage = 0
        self.current_cap = capacity.value_at(0)
        self.serial = itertools.count()
        self.heap: list[tuple[int, int, int, object]] = []
        self.segments_of: dict[int, list[int]] = {}

        max_cap = capacity.max_value
        for job in jobs:
            if job.gpu > max_cap:
                self.trace.rejected_job_ids.append(job.job_id)
                continue
            durations = segment_job(job.runtime_s, ckpt_s)
            self.segments_of[job.job_id] = durations
            first = _Segment(job, 0, durations[0], len(durations) == 1, job.arrival_s)
            self._push(job.arrival_s, _EV_ARRIVAL, first)
        for t, value in capacity.change_points():
            self._push(t, _EV_CAPACITY, value)

    def _push(self, time: int, kind: int, payload: object) -> None:
        heapq.heappush(self.heap, (time, kind, next(self.serial), payload))

    def _enqueue(self, seg: _Segment) -> None:
        insort(self.queue, (_policy_key(self.policy, seg), seg))

    def _start(self, seg: _Segment, t: int) -> None:
        run_id = next(self.serial)
        self.running[run_id] = (seg, t)
        self.usage += seg.job.gpu
        self.trace.job_first_start.setdefault(seg.job.job_id, t)
        self._push(t + seg.duration_s, _EV_COMPLETION, run_id)

    def _finish_run(self, run_id: int, end: int, completed: bool) -> _Segment:
        seg, start = self.running.pop(run_id)
        self.usage -= seg.job.gpu
        self.trace.runs.append(
            SegmentRun(seg.job.job_id, seg.seg_index, start, end, seg.job.gpu, completed)
        )
        return seg

    def _reservation(self, t: int, gpu: int) -> float:
        """Earliest start for a ``gpu``-wide segment under current capacity
        and the known completion times of everything running."""
        if gpu > self.current_cap:
            return math.inf
        free = self.current_cap - self.usage
        if free >= gpu:
            return t
        ends = sorted(
            (start + seg.duration_s, seg.job.gpu)
            for seg, start in self.running.values()
        )
        for end, g in ends:
            free += g
            if free >= gpu:
                return end
        return math.inf

    def _on_completion(self, run_id: int, t: int) -> None:
        if run_id not in self.running:
            return  # stale event for a preempted run
        seg = self._finish_run(run_id, t, completed=True)
        durations = self.segments_of[seg.job.job_id]
        if seg.is_last:
            self.trace.job_completion[seg.job.job_id] = t
        else:
            nxt = seg.seg_index + 1
            self._enqueue(
                _Segment(seg.job, nxt, durations[nxt], nxt == len(durations) - 1, t)
            )

    def _on_capacity(self, value: int, t: int) -> None:
        self.current_cap = value
        if not self.preempt_on_drop or self.usage <= value:
            return
        active = [
            (start, seg.job.job_id, seg.seg_index, seg.job.gpu, run_id)
            for run_id, (seg, start) in self.running.items()
        ]
        for run_id in preempt_on_capacity_drop(active, self.usage, value):
            seg_started = self.running[run_id][1]
            seg = self._finish_run(run_id, t, completed=False)
            self.trace.preemptions.append(
                PreemptionRecord(t, seg.job.job_id, seg.seg_index, seg_started)
            )
            seg.eligible_at = t
            self._enqueue(seg)

    def _pass(self, t: int) -> None:
        while self.queue:
            _, head = self.queue[0]
            if head.job.gpu <= self.current_cap - self.usage:
                self.queue.pop(0)
                self._start(head, t)
                continue
            reservation = self._reservation(t, head.job.gpu)
            i = 1
            while i < len(self.queue):
                _, seg = self.queue[i]
                if (
                    seg.job.gpu <= self.current_cap - self.usage
                    and t + seg.duration_s <= reservation
                ):
                    self.queue.pop(i)
                    self._start(seg, t)
                    self.trace.backfills.append(
                        BackfillRecord(
                            t, seg.job.job_id, seg.seg_index,
                            head.job.job_id, reservation,
                        )
                    )
                else:
                    i += 1
            return

    def run(self) -> ScheduleTrace:
        heap = self.heap
        while heap:
            t = heap[0][0]
            while heap and heap[0][0] == t:
                _, kind, _, payload = heapq.heappop(heap)
                if kind == _EV_COMPLETION:
                    self._on_completion(payload, t)
                elif kind == _EV_CAPACITY:
                    self._on_capacity(payload, t)
                else:
                    self._enqueue(payload)
            self._pass(t)
        return self.trace


def schedule(
    jobs: list[Job],
    capacity: CapacityTimeline,
    policy: str = "FCFS_BACKFILL",
    ckpt_s: float = math.inf,
    preempt_on_drop: bool = True,
) -> ScheduleTrace:
    """Run the scheduler over a job list and a capacity timeline.

    Jobs whose GPU request exceeds the maximum capacity ever available are
    rejected up front and listed in ``rejected_job_ids``. The returned trace
    records every executed segment run, each backfill decision with the
    head reservation it honored, preemptions, and per-job first-start and
    completion times.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    engine = _Engine(jobs, capacity, policy, ckpt_s, preempt_on_drop)
    trace = engine.run()
    arrivals = {j.job_id: j.arrival_s for j in jobs}
    trace.queue_delays = {
        job_id: start - arrivals[job_id]
        for job_id, start in trace.job_first_start.items()
    }
    return trace


def revealed_capacity(
    busy_minutes: np.ndarray, minutes_per_day: int = MINUTES_PER_DAY
) -> CapacityTimeline:
    """Running maximum of daily 99th-percentile busy GPUs.

    The percentile is nearest-rank (rank = ceil(0.99 * n) in the sorted
    day), so the proxy tracks sustained occupancy rather than single-minute
    spikes, and the running maximum makes it nondecreasing. A trailing
    partial day is excluded with a warning.
    """
    busy = np.asarray(busy_minutes, dtype=float)
    n_days, leftover = divmod(len(busy), minutes_per_day)
    if leftover:
        warnings.warn(
            "trailing partial day excluded from revealed capacity",
            stacklevel=2,
        )
    if n_days == 0:
        raise ValueError("need at least one complete day of busy-GPU minutes")
    rank = math.ceil(0.99 * minutes_per_day)
    times = []
    values = []
    running = -math.inf
    for d in range(n_days):
        day = np.sort(busy[d * minutes_per_day : (d + 1) * minutes_per_day])
        running = max(running, float(day[rank - 1]))
        level = int(math.ceil(running - 1e-9))
        if not values or level != values[-1]:
            times.append(d * minutes_per_day * 60)
            values.append(level)
    return CapacityTimeline(np.array(times), np.array(values))
