"""Scheduling quality metrics and per-run report aggregation.

All three slowdown variants are >= 1 by construction. ``tau`` shields the
bounded variants from very short jobs; the per-processor variant additionally
normalizes by the job's processor count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_TAU = 10.0

REPORT_SCHEMA = "marsched.report.v1"


def slowdown(wait: float, run: float) -> float:
    """(T_w + T_r) / T_r for one finished job."""
    if run <= 0:
        raise ValueError(f"run time must be positive, got {run}")
    if wait < 0:
        raise ValueError(f"wait time must be nonnegative, got {wait}")
    return (wait + run) / run

def bounded_slowdown(wait: float, run: float, tau: float = DEFAULT_TAU) -> float:
    """max{(T_w + T_r) / max{T_r, tau}, 1}."""
    if run <= 0:
        raise ValueError(f"run time must be positive, got {run}")
    if wait < 0:
        raise ValueError(f"wait time must be nonnegative, got {wait}")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return max((wait + run) / max(run, tau), 1.0)

def pp_slowdown(wait: float, run: float, tau: float, procs: int) -> float:
    """Bounded slowdown normalized by the job's processor count."""
    if procs < 1:
        raise ValueError(f"processor count must be >= 1, got {procs}")
    if run <= 0:
        raise ValueError(f"run time must be positive, got {run}")
    if wait < 0:
        raise ValueError(f"wait time must be nonnegative, got {wait}")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return max((wait + run) / (procs * max(run, tau)), 1.0)


def bounded_slowdowns(jobs, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Vector of bounded slowdowns for a list of finished jobs, in list order."""
    return np.array([bounded_slowdown(j.wait_time, j.run_time, tau) for j in jobs], dtype=float)


@dataclass
class MetricsReport:
    policy: str
    tau: float
    total_procs: int | None
    job_count: int
    makespan: float
    slowdowns: np.ndarray
    bounded: np.ndarray
    pp: np.ndarray
    mean_slowdown: float
    median_slowdown: float
    p95_slowdown: float
    mean_bounded: float
    median_bounded: float
    p95_bounded: float
    mean_pp: float
    median_pp: float
    p95_pp: float

    def summary_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "policy": self.policy,
            "tau": self.tau,
            "total_procs": self.total_procs,
            "job_count": self.job_count,
            "makespan": self.makespan,
            "mean_slowdown": self.mean_slowdown,
            "median_slowdown": self.median_slowdown,
            "p95_slowdown": self.p95_slowdown,
            "mean_bounded_slowdown": self.mean_bounded,
            "median_bounded_slowdown": self.median_bounded,
            "p95_bounded_slowdown": self.p95_bounded,
            "mean_pp_slowdown": self.mean_pp,
            "median_pp_slowdown": self.median_pp,
            "p95_pp_slowdown": self.p95_pp,
        }


def aggregate(jobs, tau: float = DEFAULT_TAU, policy: str = "",
              total_procs: int | None = None) -> MetricsReport:
    """Build a MetricsReport over finished jobs (wait_time must be set)."""
    jobs = list(jobs)
    if not jobs:
        raise ValueError("cannot aggregate metrics over zero jobs")
    sds = np.array([slowdown(j.wait_time, j.run_time) for j in jobs], dtype=float)
    bsds = bounded_slowdowns(jobs, tau)
    ppsds = np.array(
        [pp_slowdown(j.wait_time, j.run_time, tau, j.requested_procs) for j in jobs],
        dtype=float,
    )
    ends = [j.submit_time + j.wait_time + j.run_time for j in jobs]
    makespan = float(max(ends) - min(j.submit_time for j in jobs))
    return MetricsReport(
        policy=policy,
        tau=tau,
        total_procs=total_procs,
        job_count=len(jobs),
        makespan=makespan,
        slowdowns=sds,
        bounded=bsds,
        pp=ppsds,
        mean_slowdown=float(np.mean(sds)),
        median_slowdown=float(np.median(sds)),
        p95_slowdown=float(np.percentile(sds, 95.0)),
        mean_bounded=float(np.mean(bsds)),
        median_bounded=float(np.median(bsds)),
        p95_bounded=float(np.percentile(bsds, 95.0)),
        mean_pp=float(np.mean(ppsds)),
        median_pp=float(np.median(ppsds)),
        p95_pp=float(np.percentile(ppsds, 95.0)),
    )


REPORT_CSV_COLUMNS = [
    "policy", "job_count", "mean_bounded_slowdown", "median_bounded_slowdown",
    "p95_bounded_slowdown", "mean_slowdown", "median_slowdown", "p95_slowdown",
    "mean_pp_slowdown", "median_pp_slowdown", "p95_pp_slowdown",
    "makespan", "tau", "total_procs",
]


def report_csv_row(report: MetricsReport) -> list[str]:
    d = report.summary_dict()
    row = []
    for col in REPORT_CSV_COLUMNS:
        v = d[col]
        row.append("" if v is None else (repr(v) if isinstance(v, float) else str(v)))
    return row


def write_report_csv(path, reports) -> None:
    """Write one CSV row per report; floats use repr for byte-stable output."""
    lines = [f"# schema: {REPORT_SCHEMA}", ",".join(REPORT_CSV_COLUMNS)]
    for rep in reports:
        lines.append(",".join(report_csv_row(rep)))
    with open(path, "w") as fp:
        fp.write("\n".join(lines) + "\n")
