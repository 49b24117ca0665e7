"""Workflow DAGs: construction, parallel-level combining, workload splitting,
and a coarse feature-vector similarity between workflows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DagError
from .workload import Job

# resource profile layout per task: processors, memory units, I/O units, cost
PROFILE_DIMS = ("procs", "memory", "io", "cost")


@dataclass
class WorkflowDag:
    tasks: dict[int, Job]
    edges: set[tuple[int, int]]                 # (predecessor, successor)
    resource_profiles: dict[int, np.ndarray]    # task id -> len-4 vector

    def successors(self, task_id: int) -> list[int]:
        return sorted(s for p, s in self.edges if p == task_id)

    def predecessors(self, task_id: int) -> list[int]:
        return sorted(p for p, s in self.edges if s == task_id)


@dataclass(frozen=True)
class DagFeatures:
    task_count: int
    depth: int            # longest path, in nodes
    width: int            # largest level of the longest-path leveling
    core_seconds: float
    mean_cores: float

    def as_vector(self) -> np.ndarray:
        return np.array([self.task_count, self.depth, self.width,
                         self.core_seconds, self.mean_cores], dtype=float)


def _find_cycle(adjacency: dict[int, list[int]]) -> list[int] | None:
    """Return one witness cycle as a node list, or None. Iterative DFS."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {v: 0 for v in adjacency}
    parent: dict[int, int] = {}
    for root in sorted(adjacency):
        if color[root] != WHITE:
            continue
        stack = [(root, iter(adjacency[root]))]
        color[root] = GRAY
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == WHITE:
                    color[nxt] = GRAY
                    parent[nxt] = node
                    stack.append((nxt, iter(adjacency[nxt])))
                    advanced = True
                    break
                if color[nxt] == GRAY:
                    cycle = [nxt, node]
                    cur = node
                    while cur != nxt:
                        cur = parent[cur]
                        cycle.append(cur)
                    cycle.pop()  # drop the duplicated start node
                    cycle.reverse()
                    return cycle
            if not advanced:
                color[node] = BLACK
                stack.pop()
    return None


def default_profile(job: Job) -> np.ndarray:
    # memory and I/O are carried for shape compatibility; traces are CPU-only
    return np.array([job.requested_procs, 0.0, 0.0, job.cost_rate], dtype=float)


def build_dag(tasks) -> WorkflowDag:
    """Build a validated DAG from parsed workflow tasks (Jobs with dependencies)."""
    task_map: dict[int, Job] = {}
    for job in tasks:
        if job.id in task_map:
            raise DagError(f"duplicate task id {job.id}")
        task_map[job.id] = job
    edges: set[tuple[int, int]] = set()
    for job in task_map.values():
        for dep in job.dependencies:
            if dep not in task_map:
                raise DagError(f"task {job.id} depends on unknown task {dep}")
            edges.add((dep, job.id))
    adjacency = {tid: [] for tid in task_map}
    for pred, succ in sorted(edges):
        adjacency[pred].append(succ)
    cycle = _find_cycle(adjacency)
    if cycle is not None:
        raise DagError(f"dependency cycle: {' -> '.join(map(str, cycle + cycle[:1]))}")
    profiles = {tid: default_profile(job) for tid, job in task_map.items()}
    return WorkflowDag(tasks=task_map, edges=edges, resource_profiles=profiles)


def _levels(dag: WorkflowDag) -> dict[int, int]:
    """Longest-path-from-source level per task (sources are level 0)."""
    levels: dict[int, int] = {}
    preds: dict[int, list[int]] = {tid: [] for tid in dag.tasks}
    for pred, succ in dag.edges:
        preds[succ].append(pred)

    def level_of(tid: int) -> int:
        if tid in levels:
            return levels[tid]
        # DAG is validated acyclic, so recursion terminates; depth is bounded
        # by task count, keep an iterative resolution for big chains
        stack = [tid]
        while stack:
            cur = stack[-1]
            if cur in levels:
                stack.pop()
                continue
            missing = [p for p in preds[cur] if p not in levels]
            if missing:
                stack.extend(missing)
                continue
            levels[cur] = 1 + max((levels[p] for p in preds[cur]), default=-1)
            stack.pop()
        return levels[tid]

    for tid in dag.tasks:
        level_of(tid)
    return levels


def combine_parallel_tasks(dag: WorkflowDag) -> list[list[int]]:
    """Level sets safe for co-submission.

    Tasks within one list have no dependency path between them; the
    concatenation of the lists is a valid topological order.
    """
    levels = _levels(dag)
    if not levels:
        return []
    out: list[list[int]] = [[] for _ in range(max(levels.values()) + 1)]
    for tid in sorted(dag.tasks):
        out[levels[tid]].append(tid)
    return out


def dag_features(dag: WorkflowDag) -> DagFeatures:
    if not dag.tasks:
        return DagFeatures(0, 0, 0, 0.0, 0.0)
    level_sets = combine_parallel_tasks(dag)
    jobs = dag.tasks.values()
    return DagFeatures(
        task_count=len(dag.tasks),
        depth=len(level_sets),
        width=max(len(s) for s in level_sets),
        core_seconds=float(sum(j.requested_procs * j.run_time for j in jobs)),
        mean_cores=float(np.mean([j.requested_procs for j in jobs])),
    )


def dag_similarity(a: DagFeatures, b: DagFeatures) -> float:
    """1 - mean per-feature normalized absolute difference; 1 means identical."""
    va, vb = a.as_vector(), b.as_vector()
    diffs = np.zeros_like(va)
    for i in range(len(va)):
        scale = max(abs(va[i]), abs(vb[i]))
        if scale > 0:
            diffs[i] = abs(va[i] - vb[i]) / scale
    return float(1.0 - np.mean(diffs))


def split_workload(jobs: list, max_size: int) -> list[list]:
    """Halve recursively (first half gets the ceiling) until chunks fit max_size."""
    if max_size < 1:
        raise DagError(f"max_size must be >= 1, got {max_size}")
    jobs = list(jobs)
    if len(jobs) <= max_size:
        return [jobs]
    mid = (len(jobs) + 1) // 2
    return split_workload(jobs[:mid], max_size) + split_workload(jobs[mid:], max_size)
