"""Discrete-event cluster simulator.

The clock jumps between events (arrivals, completions); between jumps a
scheduling cycle starts whatever the active policy picks. Completions at a
given instant are processed before arrivals at the same instant so freed
processors are visible immediately; remaining ties break by job id.
"""

from __future__ import annotations

import enum
import heapq
from dataclasses import dataclass, field

from . import heuristics, metrics
from .errors import ConfigError, ContractError, SchedulingError
from .heuristics import PolicyKind
from .metrics import DEFAULT_TAU, MetricsReport
from .workload import Job, JobStatus, WorkloadTrace


class EventKind(enum.IntEnum):
    COMPLETION = 0   # lower sorts first: frees resources before same-time arrivals
    ARRIVAL = 1


@dataclass(frozen=True)
class SimEvent:
    time: float
    kind: EventKind
    job_id: int


@dataclass
class ClusterState:
    total_procs: int
    free_procs: int
    clock: float = 0.0
    pending: dict[int, Job] = field(default_factory=dict)     # arrival order
    running: dict[int, Job] = field(default_factory=dict)
    run_heap: list[tuple[float, int]] = field(default_factory=list)
    finished: list[Job] = field(default_factory=list)
    finished_ids: set[int] = field(default_factory=set)
    arrivals: list[Job] = field(default_factory=list)         # (submit, id) order
    next_arrival: int = 0


@dataclass
class RunStats:
    started: int = 0
    backfilled: int = 0
    forced_starts: int = 0
    events: int = 0
    first_blocked_head: int | None = None


@dataclass
class RunResult:
    jobs: list[Job]
    report: MetricsReport
    stats: RunStats
    policy: str


def new_cluster(total_procs: int, arrivals: list[Job] | None = None) -> ClusterState:
    if total_procs < 1:
        raise ConfigError(f"cluster needs >= 1 processor, got {total_procs}")
    jobs = sorted(arrivals or [], key=lambda j: (j.submit_time, j.id))
    return ClusterState(total_procs=total_procs, free_procs=total_procs,
                        arrivals=jobs)


def deps_met(state: ClusterState, job: Job) -> bool:
    return all(d in state.finished_ids for d in job.dependencies)


def ready_jobs(state: ClusterState) -> list[Job]:
    """Dependency-ready pending jobs, in arrival order."""
    return [j for j in state.pending.values() if deps_met(state, j)]


def start_job(state: ClusterState, job: Job, now: float) -> bool:
    """Start a pending job; False means rejection (retry later), not an error."""
    if job.id not in state.pending:
        raise ContractError(f"job {job.id} is not pending")
    if now < job.submit_time:
        raise ContractError(f"job {job.id} cannot start before submission")
    if job.requested_procs > state.free_procs or not deps_met(state, job):
        return False
    del state.pending[job.id]
    job.start_time = now
    job.status = JobStatus.RUNNING
    state.free_procs -= job.requested_procs
    state.running[job.id] = job
    heapq.heappush(state.run_heap, (now + job.run_time, job.id))
    return True


def has_future_event(state: ClusterState) -> bool:
    return bool(state.run_heap) or state.next_arrival < len(state.arrivals)


def _peek_next_event(state: ClusterState) -> SimEvent:
    candidates = []
    if state.run_heap:
        t, jid = state.run_heap[0]
        candidates.append(SimEvent(t, EventKind.COMPLETION, jid))
    if state.next_arrival < len(state.arrivals):
        j = state.arrivals[state.next_arrival]
        candidates.append(SimEvent(j.submit_time, EventKind.ARRIVAL, j.id))
    if not candidates:
        raise SchedulingError("no future events")
    return min(candidates, key=lambda e: (e.time, e.kind, e.job_id))


def advance_to_next_event(state: ClusterState) -> SimEvent:
    """Jump the clock to the next event and apply it."""
    event = _peek_next_event(state)
    state.clock = event.time
    if event.kind is EventKind.COMPLETION:
        heapq.heappop(state.run_heap)
        job = state.running.pop(event.job_id)
        job.status = JobStatus.FINISHED
        state.free_procs += job.requested_procs
        state.finished.append(job)
        state.finished_ids.add(job.id)
    else:
        job = state.arrivals[state.next_arrival]
        state.next_arrival += 1
        state.pending[job.id] = job
    return event


def schedule_cycle(state: ClusterState, selector) -> list[int]:
    """Start jobs chosen by the selector until it passes (returns None)."""
    started: list[int] = []
    while True:
        choice = selector(state)
        if choice is None:
            return started
        job = state.pending.get(choice)
        if job is None:
            raise ContractError(f"selector returned non-pending job id {choice}")
        if not start_job(state, job, state.clock):
            raise ContractError(
                f"selector chose job {choice} which cannot start "
                f"(procs or dependencies)")
        started.append(choice)


def compute_reservation(state: ClusterState, head: Job) -> tuple[float, int]:
    """Shadow time and spare processors for the head job's reservation.

    Running jobs are projected to release at max(start + requested_time,
    clock); a job past its estimate is projected to release now. Returns
    (shadow, extra): the earliest projected time the head fits, and the
    processors spare at that time beyond the head's need.
    """
    if head.requested_procs > state.total_procs:
        raise SchedulingError(
            f"job {head.id} requests {head.requested_procs} processors, "
            f"system has {state.total_procs}: it can never start")
    releases: dict[float, int] = {}
    for job in state.running.values():
        t = max(job.start_time + job.requested_time, state.clock)
        releases[t] = releases.get(t, 0) + job.requested_procs
    avail = state.free_procs
    for t in sorted(releases):
        avail += releases[t]
        if avail >= head.requested_procs:
            return t, avail - head.requested_procs
    raise SchedulingError(
        f"job {head.id} never fits under the current projection "
        f"(free {state.free_procs} of {state.total_procs})")


def backfill_easy(state: ClusterState, ordered_ids: list[int],
                  stats: RunStats | None = None) -> list[int]:
    """One EASY pass over a priority-ordered ready queue.

    The head gets a reservation; later jobs start now only if they fit free
    processors and either finish (by their own estimate) before the shadow
    time or use no more than the spare processors. The head's reservation is
    recomputed after every backfill and may only move earlier.
    """
    queue = [state.pending[i] for i in ordered_ids if i in state.pending]
    started: list[int] = []
    while queue and deps_met(state, queue[0]) \
            and queue[0].requested_procs <= state.free_procs:
        head = queue.pop(0)
        start_job(state, head, state.clock)
        started.append(head.id)
    if not queue:
        return started
    head = queue[0]
    shadow, extra = compute_reservation(state, head)
    for cand in queue[1:]:
        if cand.requested_procs > state.free_procs or not deps_met(state, cand):
            continue
        fits_window = state.clock + cand.requested_time <= shadow
        if not (fits_window or cand.requested_procs <= extra):
            continue
        start_job(state, cand, state.clock)
        started.append(cand.id)
        if stats is not None:
            stats.backfilled += 1
        new_shadow, extra = compute_reservation(state, head)
        if new_shadow > shadow:
            raise AssertionError(
                f"backfill of job {cand.id} delayed the head reservation "
                f"({shadow} -> {new_shadow})")
        shadow = new_shadow
    return started


class Simulation:
    """One episode over one job set. Single-threaded; instances independent."""

    def __init__(self, jobs: list[Job], total_procs: int, *,
                 backfill: bool = True, allow_forced_start: bool = True):
        self.state = new_cluster(total_procs, jobs)
        self.backfill = backfill
        self.allow_forced_start = allow_forced_start
        self.stats = RunStats()
        self.total_jobs = len(self.state.arrivals)
        self.on_event = None     # optional callback(state, event) for invariant probes

    # -- scheduling ------------------------------------------------------

    def _schedule_heuristic(self, kind: PolicyKind) -> None:
        state = self.state
        while True:
            ready = ready_jobs(state)
            if not ready:
                return
            ready.sort(key=lambda j: heuristics.sort_key(j, state.clock, kind))
            head = ready[0]
            if head.requested_procs <= state.free_procs:
                start_job(state, head, state.clock)
                self.stats.started += 1
                continue
            if self.stats.first_blocked_head is None:
                self.stats.first_blocked_head = head.id
            if head.requested_procs > state.total_procs:
                raise SchedulingError(
                    f"job {head.id} requests {head.requested_procs} processors, "
                    f"system has {state.total_procs}: it can never start")
            if self.backfill:
                started = backfill_easy(state, [j.id for j in ready], self.stats)
                self.stats.started += len(started)
            return

    def _schedule_selector(self, selector) -> None:
        started = schedule_cycle(self.state, selector)
        self.stats.started += len(started)

    def _force_start_one(self) -> None:
        """Break a no-event stall by starting the oldest runnable job.

        Happens when a selector keeps passing with an idle cluster and no
        future arrivals; without this the episode could never terminate.
        """
        state = self.state
        ready = ready_jobs(state)
        if not ready:
            raise SchedulingError(
                "pending jobs remain but none is dependency-ready: "
                f"stuck ids {sorted(state.pending)}")
        fitting = [j for j in ready if j.requested_procs <= state.free_procs]
        if not fitting:
            worst = min(ready, key=lambda j: (j.submit_time, j.id))
            raise SchedulingError(
                f"job {worst.id} requests {worst.requested_procs} processors, "
                f"system has {state.total_procs}: it can never start")
        job = min(fitting, key=lambda j: (j.submit_time, j.id))
        start_job(state, job, state.clock)
        self.stats.started += 1
        self.stats.forced_starts += 1

    # -- event loop ------------------------------------------------------

    def _drain_next_time(self) -> None:
        event = advance_to_next_event(self.state)
        self.stats.events += 1
        if self.on_event is not None:
            self.on_event(self.state, event)
        while has_future_event(self.state) \
                and _peek_next_event(self.state).time == self.state.clock:
            event = advance_to_next_event(self.state)
            self.stats.events += 1
            if self.on_event is not None:
                self.on_event(self.state, event)

    def run(self, policy) -> list[Job]:
        """Drive the episode to completion; returns finished jobs in end order."""
        state = self.state
        if isinstance(policy, (str, PolicyKind)):
            kind = PolicyKind.from_name(policy) if isinstance(policy, str) else policy
            if kind is PolicyKind.RL:
                raise ContractError("RL runs need a selector, not a policy name")
            schedule = lambda: self._schedule_heuristic(kind)
        elif callable(policy):
            schedule = lambda: self._schedule_selector(policy)
        else:
            raise ContractError(f"unsupported policy object {policy!r}")

        while len(state.finished) < self.total_jobs:
            schedule()
            if len(state.finished) >= self.total_jobs:
                break
            if has_future_event(state):
                self._drain_next_time()
            elif state.pending:
                if not self.allow_forced_start:
                    raise SchedulingError(
                        f"policy passed with no future events and "
                        f"{len(state.pending)} jobs pending")
                self._force_start_one()
            else:
                raise SchedulingError("event loop stalled with no pending jobs")
        return state.finished


def run_episode(trace: WorkloadTrace | list[Job], policy="fcfs", *,
                backfill: bool = True, tau: float = DEFAULT_TAU,
                total_procs: int | None = None,
                allow_forced_start: bool = True,
                on_event=None) -> RunResult:
    """Simulate one policy over one trace and report metrics.

    Deterministic: identical (trace, policy, options) gives identical
    finished-job records.
    """
    if isinstance(trace, WorkloadTrace):
        jobs = trace.fresh_jobs()
        procs = total_procs if total_procs is not None else trace.total_procs
    else:
        jobs = [j.fresh_copy() for j in trace]
        if total_procs is None:
            raise ConfigError("total_procs is required when passing a bare job list")
        procs = total_procs
    sim = Simulation(jobs, procs, backfill=backfill,
                     allow_forced_start=allow_forced_start)
    sim.on_event = on_event
    label = policy.value if isinstance(policy, PolicyKind) else (
        policy if isinstance(policy, str) else getattr(policy, "label", "selector"))
    finished = sim.run(policy)
    report = metrics.aggregate(finished, tau=tau, policy=str(label), total_procs=procs)
    return RunResult(jobs=finished, report=report, stats=sim.stats, policy=str(label))


JOBS_CSV_COLUMNS = ["id", "submit_time", "start_time", "end_time",
                    "wait_time", "procs", "policy"]


def job_csv_rows(jobs: list[Job], policy: str) -> list[list[str]]:
    def fmt(x: float) -> str:
        xi = int(x)
        return str(xi) if x == xi else repr(float(x))
    rows = []
    for j in sorted(jobs, key=lambda j: j.id):
        rows.append([str(j.id), fmt(j.submit_time), fmt(j.start_time),
                     fmt(j.end_time), fmt(j.wait_time), str(j.requested_procs),
                     policy])
    return rows


def write_jobs_csv(path, rows: list[list[str]]) -> None:
    lines = [",".join(JOBS_CSV_COLUMNS)]
    lines.extend(",".join(r) for r in rows)
    with open(path, "w") as fp:
        fp.write("\n".join(lines) + "\n")
