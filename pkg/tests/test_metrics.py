"""Metric oracle: exact rational arithmetic versus the float implementation.

With integer inputs below 2**53 both the Fraction quotient and the float
quotient are correctly rounded, so equality here is exact, not approximate.
"""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import make_finished
from marsched import metrics


def oracle_slowdown(wait: int, run: int) -> float:
    return float(Fraction(wait + run, run))


def oracle_bounded(wait: int, run: int, tau: int) -> float:
    return float(max(Fraction(wait + run, max(run, tau)), Fraction(1)))


def oracle_pp(wait: int, run: int, tau: int, procs: int) -> float:
    return float(max(Fraction(wait + run, procs * max(run, tau)), Fraction(1)))


def test_hand_cases():
    # zero wait floors every variant at 1
    assert metrics.slowdown(0, 50) == 1.0
    assert metrics.bounded_slowdown(0, 50, 10.0) == 1.0
    assert metrics.pp_slowdown(0, 50, 10.0, 8) == 1.0
    # long wait on a job at the tau boundary
    assert metrics.slowdown(90, 10) == 10.0
    assert metrics.bounded_slowdown(90, 10, 10.0) == 10.0
    assert metrics.pp_slowdown(90, 10, 10.0, 4) == 2.5
    # tau shields a 1-second job from slowdown blowup
    assert metrics.slowdown(5, 1) == 6.0
    assert metrics.bounded_slowdown(5, 1, 10.0) == 1.0
    # wide job: per-processor variant floors at 1
    assert metrics.pp_slowdown(100, 10, 10.0, 1024) == 1.0


def test_oracle_agreement_50_random_cases():
    rng = np.random.default_rng(42)
    for _ in range(50):
        wait = int(rng.integers(0, 10**6))
        run = int(rng.integers(1, 10**6))
        procs = int(rng.integers(1, 4096))
        tau = int(rng.integers(1, 100))
        assert metrics.slowdown(wait, run) == oracle_slowdown(wait, run)
        assert metrics.bounded_slowdown(wait, run, tau) == \
            oracle_bounded(wait, run, tau)
        assert metrics.pp_slowdown(wait, run, tau, procs) == \
            oracle_pp(wait, run, tau, procs)


@given(wait=st.integers(0, 10**9), run=st.integers(1, 10**9),
       tau=st.integers(1, 10**4), procs=st.integers(1, 2**16))
@settings(max_examples=200)
def test_invariants(wait, run, tau, procs):
    s = metrics.slowdown(wait, run)
    b = metrics.bounded_slowdown(wait, run, tau)
    p = metrics.pp_slowdown(wait, run, tau, procs)
    assert s >= 1.0 and b >= 1.0 and p >= 1.0
    assert b <= s          # max(run, tau) >= run
    assert p <= b          # procs >= 1
    # weak monotonicity in wait
    assert metrics.bounded_slowdown(wait + 7, run, tau) >= b


@pytest.mark.parametrize("bad", [
    lambda: metrics.slowdown(1, 0),
    lambda: metrics.slowdown(-1, 10),
    lambda: metrics.bounded_slowdown(1, 10, 0),
    lambda: metrics.pp_slowdown(1, 10, 10, 0),
])
def test_validation(bad):
    with pytest.raises(ValueError):
        bad()


def test_aggregate_known_values():
    # waits 0, 10, 40, 90, 360 over run 10, tau 10
    jobs = [make_finished(i + 1, submit=0, start=w, run=10, procs=2)
            for i, w in enumerate([0, 10, 40, 90, 360])]
    rep = metrics.aggregate(jobs, tau=10.0, policy="x", total_procs=4)
    expect = np.array([1.0, 2.0, 5.0, 10.0, 37.0])
    assert np.array_equal(rep.bounded, expect)
    assert np.array_equal(rep.slowdowns, expect)
    assert np.array_equal(rep.pp, np.maximum(expect / 2, 1.0))
    assert rep.mean_bounded == float(np.mean(expect))
    assert rep.median_bounded == 5.0
    assert rep.p95_bounded == float(np.percentile(expect, 95.0))
    assert rep.makespan == 370.0
    assert rep.job_count == 5
    assert rep.policy == "x"


def test_aggregate_makespan_uses_earliest_submit():
    jobs = [make_finished(1, submit=100, start=100, run=50),
            make_finished(2, submit=120, start=160, run=10)]
    rep = metrics.aggregate(jobs)
    assert rep.makespan == 70.0   # 170 - 100


def test_aggregate_rejects_empty():
    with pytest.raises(ValueError):
        metrics.aggregate([])


def test_report_csv_round_trip(tmp_path):
    jobs = [make_finished(1, 0, 3, 7, procs=3), make_finished(2, 1, 5, 13)]
    rep = metrics.aggregate(jobs, tau=10.0, policy="fcfs", total_procs=64)
    path = tmp_path / "report.csv"
    metrics.write_report_csv(path, [rep])
    lines = path.read_text().splitlines()
    assert lines[0] == f"# schema: {metrics.REPORT_SCHEMA}"
    header = lines[1].split(",")
    values = lines[2].split(",")
    row = dict(zip(header, values))
    assert row["policy"] == "fcfs"
    assert int(row["job_count"]) == 2
    # repr round-trips floats exactly
    assert float(row["mean_bounded_slowdown"]) == rep.mean_bounded
    assert float(row["makespan"]) == rep.makespan
    assert int(row["total_procs"]) == 64
