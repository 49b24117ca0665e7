"""SWF parsing, serialization round trips, and synthetic generation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import make_job, make_trace
from marsched.errors import ConfigError, TraceFormatError
from marsched.workload import (Job, SyntheticConfig, WorkloadTrace,
                               assign_costs, generate_synthetic, parse_swf,
                               parse_workflow, slice_trace, write_swf)

HEADER = "; MaxProcs: 64\n"


def swf_line(job_id, submit, run, alloc, req_procs=-1, req_time=-1):
    fields = ["-1"] * 18
    fields[0] = str(job_id)
    fields[1] = str(submit)
    fields[3] = str(run)
    fields[4] = str(alloc)
    fields[7] = str(req_procs)
    fields[8] = str(req_time)
    return " ".join(fields)


def test_field_mapping():
    text = HEADER + swf_line(3, 100, 250, 8, req_time=400)
    trace = parse_swf(text, "t")
    assert trace.total_procs == 64
    (j,) = trace.jobs
    assert (j.id, j.submit_time, j.run_time, j.requested_procs,
            j.requested_time) == (3, 100.0, 250.0, 8, 400.0)


def test_fallback_fields():
    # allocated procs -1 falls back to requested procs;
    # requested time -1 falls back to run time
    text = HEADER + swf_line(1, 0, 120, -1, req_procs=16, req_time=-1)
    (j,) = parse_swf(text, "t").jobs
    assert j.requested_procs == 16
    assert j.requested_time == 120.0


def test_drops_and_line_errors():
    text = HEADER + "\n".join([
        swf_line(1, 0, 100, 4),
        swf_line(2, 5, -1, 4),        # nonpositive run time: dropped
        swf_line(3, 6, 100, 0),       # nonpositive procs: dropped
        "1 2 three 4 5 6 7 8 9",      # non-numeric: line error
        "1 2 3",                      # too few fields: line error
        swf_line(4, 9, 50, 2),
    ])
    trace = parse_swf(text, "t")
    assert [j.id for j in trace.jobs] == [1, 4]
    assert trace.dropped_jobs == 2
    assert len(trace.line_errors) == 2
    assert all(isinstance(ln, int) and msg for ln, msg in trace.line_errors)


def test_zero_valid_jobs_is_hard_error():
    with pytest.raises(TraceFormatError):
        parse_swf(HEADER + swf_line(1, 0, -1, 4), "t")


def test_jobs_sorted_by_submit_then_id():
    text = HEADER + "\n".join([
        swf_line(5, 50, 10, 1),
        swf_line(2, 10, 10, 1),
        swf_line(9, 10, 10, 1),
    ])
    assert [j.id for j in parse_swf(text, "t").jobs] == [2, 9, 5]


def test_total_procs_without_header():
    text = "\n".join([swf_line(1, 0, 10, 4), swf_line(2, 1, 10, 32)])
    assert parse_swf(text, "t").total_procs == 32


def test_write_read_round_trip(tmp_path):
    jobs = [make_job(1, 0, 100, 4, req_time=150),
            make_job(2, 33, 7.5, 16, req_time=9.25)]
    trace = make_trace(jobs, 64)
    path = tmp_path / "t.swf"
    write_swf(path, trace)
    back = parse_swf(path.read_text(), "t")
    assert back.total_procs == 64
    for a, b in zip(trace.jobs, back.jobs):
        assert (a.id, a.submit_time, a.run_time, a.requested_procs,
                a.requested_time) == \
               (b.id, b.submit_time, b.run_time, b.requested_procs,
                b.requested_time)


def test_synthetic_deterministic_and_bounded():
    cfg = SyntheticConfig(job_count=300, seed=11)
    t1, t2 = generate_synthetic(cfg), generate_synthetic(cfg)
    assert [(j.id, j.submit_time, j.run_time, j.requested_procs,
             j.requested_time, j.cost_rate) for j in t1.jobs] == \
           [(j.id, j.submit_time, j.run_time, j.requested_procs,
             j.requested_time, j.cost_rate) for j in t2.jobs]
    assert t1.jobs[0].submit_time == 0.0
    for j in t1.jobs:
        assert cfg.runtime_min - 1 <= j.run_time <= cfg.runtime_max + 1
        assert 1 <= j.requested_procs <= cfg.total_procs
        assert j.requested_procs & (j.requested_procs - 1) == 0  # power of two
        assert j.requested_time >= j.run_time
        assert j.cost_rate >= 0


def test_synthetic_exact_estimates():
    cfg = SyntheticConfig(job_count=100, overestimate_min=1.0,
                          overestimate_max=1.0, seed=5)
    for j in generate_synthetic(cfg).jobs:
        assert j.requested_time == j.run_time   # runtimes are integral


def test_synthetic_seed_changes_trace():
    a = generate_synthetic(SyntheticConfig(job_count=50, seed=1))
    b = generate_synthetic(SyntheticConfig(job_count=50, seed=2))
    assert [j.run_time for j in a.jobs] != [j.run_time for j in b.jobs]


def test_assign_costs_keyed_by_job_id():
    trace = make_trace([make_job(i, i, 10) for i in (1, 2, 3)], 8)
    assign_costs(trace, 1.0, 0.5, seed=9)
    full = {j.id: j.cost_rate for j in trace.jobs}
    sub = make_trace([make_job(3, 0, 10)], 8)
    assign_costs(sub, 1.0, 0.5, seed=9)
    assert sub.jobs[0].cost_rate == full[3]


def test_slice_contiguous_rebased():
    trace = make_trace([make_job(i, 10 * i, 5) for i in (1, 2, 3, 4)], 8)
    part = slice_trace(trace, 1, 2)
    assert [j.id for j in part.jobs] == [2, 3]
    assert [j.submit_time for j in part.jobs] == [0.0, 10.0]
    # slicing never mutates the source
    assert [j.submit_time for j in trace.jobs] == [10.0, 20.0, 30.0, 40.0]


def test_slice_sample_deterministic():
    trace = make_trace([make_job(i, i, 5) for i in range(1, 40)], 8)
    a = slice_trace(trace, 0, 10, seed=4, shuffle=True)
    b = slice_trace(trace, 0, 10, seed=4, shuffle=True)
    assert [j.id for j in a.jobs] == [j.id for j in b.jobs]
    assert len(a.jobs) == 10


def test_slice_out_of_range():
    trace = make_trace([make_job(1, 0, 5)], 8)
    with pytest.raises(ConfigError):
        slice_trace(trace, 0, 2)


def test_trace_validate_rejects_oversized_job():
    with pytest.raises(TraceFormatError):
        make_trace([make_job(1, 0, 10, procs=16)], 8)


def test_trace_validate_rejects_duplicates():
    with pytest.raises(TraceFormatError):
        make_trace([make_job(1, 0, 10), make_job(1, 1, 10)], 8)


@given(st.lists(st.tuples(st.integers(0, 1000), st.integers(1, 5000),
                          st.integers(1, 64), st.integers(1, 6000)),
                min_size=1, max_size=30))
@settings(max_examples=100)
def test_round_trip_property(tmp_path_factory, rows):
    jobs = [make_job(i + 1, submit, run, procs, req_time=max(req, run))
            for i, (submit, run, procs, req) in enumerate(rows)]
    jobs.sort(key=lambda j: (j.submit_time, j.id))
    # duplicate submit times are fine; ids are unique by construction
    trace = WorkloadTrace(jobs=jobs, total_procs=64, name="p")
    path = tmp_path_factory.mktemp("swf") / "t.swf"
    write_swf(path, trace)
    back = parse_swf(path.read_text(), "p")
    assert len(back.jobs) == len(jobs)
    for a, b in zip(sorted(jobs, key=lambda j: j.id),
                    sorted(back.jobs, key=lambda j: j.id)):
        assert (a.id, a.submit_time, a.run_time, a.requested_procs,
                a.requested_time) == \
               (b.id, b.submit_time, b.run_time, b.requested_procs,
                b.requested_time)


def test_workflow_parse():
    text = """
    # three-task chain with a fan-in
    1 prep 2 100
    2 sim  8 500 1
    3 post 1 50  1,2
    """
    jobs = parse_workflow(text)
    assert [j.id for j in jobs] == [1, 2, 3]
    assert jobs[1].dependencies == (1,)
    assert jobs[2].dependencies == (1, 2)
    assert jobs[0].requested_time == jobs[0].run_time == 100.0


def test_workflow_rejects_unknown_dep():
    with pytest.raises(TraceFormatError):
        parse_workflow("1 a 1 10\n2 b 1 10 7")


def test_workflow_rejects_duplicate_id():
    with pytest.raises(TraceFormatError):
        parse_workflow("1 a 1 10\n1 b 1 10")
