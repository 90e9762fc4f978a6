"""Synthetic workflow traces: the two-node motivating example, chains,
fork-join shapes, random layered DAGs and critical-path-heavy suites."""

from __future__ import annotations

import random
from typing import Optional

from cws.trace import DagEdit, TraceTask, WorkflowTrace

MiB = 1 << 20


def _vertices(*ids: str) -> list[dict]:
    return [{"id": v, "label": v} for v in ids]


def _edges(*pairs: tuple[str, str]) -> list[dict]:
    return [{"from": u, "to": w} for u, w in pairs]


def example_trace(runtime_ms: int = 1000) -> WorkflowTrace:
    """Six tasks over abstract DAG A->B, A->C, C->D, B->E, D->E.

    t1 fans out to t2 (B) and t3, t4 (both C); t5 (D) joins t3 and t4 and
    t6 (E) joins t2 and t5. Two single-slot nodes finish it in 5 units under
    FIFO and in 4 units when the critical path goes first.
    """
    spec = [
        ("t1", "A", []),
        ("t2", "B", ["t1"]),
        ("t3", "C", ["t1"]),
        ("t4", "C", ["t1"]),
        ("t5", "D", ["t3", "t4"]),
        ("t6", "E", ["t2", "t5"]),
    ]
    return WorkflowTrace(
        name="example",
        abstract_vertices=_vertices("A", "B", "C", "D", "E"),
        abstract_edges=_edges(("A", "B"), ("A", "C"), ("C", "D"), ("B", "E"), ("D", "E")),
        physical_tasks=[TraceTask(tid, a, preds, runtime_ms, 1, MiB) for tid, a, preds in spec],
    )


def chain_trace(length: int, runtime_ms: int = 1000, name: Optional[str] = None) -> WorkflowTrace:
    ids = [f"c{i}" for i in range(length)]
    return WorkflowTrace(
        name=name or f"chain{length}",
        abstract_vertices=_vertices(*ids),
        abstract_edges=_edges(*zip(ids, ids[1:])),
        physical_tasks=[TraceTask(f"t{i}", v, [f"t{i - 1}"] if i else [], runtime_ms, 1, MiB)
                        for i, v in enumerate(ids)],
    )


def fork_join_trace(width: int, runtime_ms: int = 1000) -> WorkflowTrace:
    tasks = [TraceTask("split", "split", [], runtime_ms, 1, MiB)]
    tasks += [TraceTask(f"w{i}", "work", ["split"], runtime_ms, 1, MiB) for i in range(width)]
    tasks.append(TraceTask("join", "join", [f"w{i}" for i in range(width)], runtime_ms, 1, MiB))
    return WorkflowTrace(
        name=f"forkjoin{width}",
        abstract_vertices=_vertices("split", "work", "join"),
        abstract_edges=_edges(("split", "work"), ("work", "join")),
        physical_tasks=tasks,
    )


def conditional_trace() -> WorkflowTrace:
    """Four tasks where finishing t2 prunes the branch holding t4.

    t4 needs both CPUs of the single node and is still queued behind t3
    when the edit arrives, so the driver must withdraw it.
    """
    return WorkflowTrace(
        name="conditional",
        abstract_vertices=_vertices("A", "B", "L", "C"),
        abstract_edges=_edges(("A", "B"), ("A", "L"), ("A", "C")),
        physical_tasks=[
            TraceTask("t1", "A", [], 100, 1, MiB),
            TraceTask("t2", "B", ["t1"], 100, 1, MiB),
            TraceTask("t3", "L", ["t1"], 5000, 1, MiB),
            TraceTask("t4", "C", ["t1"], 1000, 2, MiB),
        ],
        dag_edits=[DagEdit("removeVertices", vertices=["C"], after_task="t2")],
    )


def random_layered_trace(seed: int, max_tasks: int = 200, max_layers: int = 8,
                         max_cpus: float = 4, max_memory: int = 8 << 30,
                         name: Optional[str] = None) -> WorkflowTrace:
    """Random layered workflow with heterogeneous requests and runtimes.

    Every layer owns one or two abstract vertices; physical tasks draw one to
    three predecessors from the layer directly above.
    """
    rng = random.Random(seed)
    layers = rng.randint(1, max_layers)
    budget = rng.randint(1, max_tasks)
    vertices: list[str] = []
    edges: list[tuple[str, str]] = []
    tasks: list[TraceTask] = []
    prev_vertices: list[str] = []
    prev_tasks: list[TraceTask] = []
    for layer in range(layers):
        remaining = budget - len(tasks)
        if remaining <= 0:
            break
        kinds = [f"L{layer}k{k}" for k in range(rng.randint(1, 2))]
        vertices += kinds
        for k in kinds:
            for u in prev_vertices:
                edges.append((u, k))
        count = remaining if layer == layers - 1 else rng.randint(1, max(1, min(remaining, 40)))
        current = []
        for i in range(count):
            kind = rng.choice(kinds)
            preds = []
            if prev_tasks:
                preds = sorted({p.id for p in rng.sample(prev_tasks, min(len(prev_tasks),
                                                                          rng.randint(1, 3)))})
            cpus = rng.choice([0.25, 0.5, 1, 1, 2, max_cpus])
            task = TraceTask(
                id=f"L{layer}t{i}",
                abstract_id=kind,
                predecessors=preds,
                runtime_ms=rng.randint(0, 5000),
                cpus=min(cpus, max_cpus),
                memory_bytes=rng.randint(MiB, max_memory),
                input_files=[{"path": f"/data/L{layer}t{i}.in", "sizeBytes": rng.randint(0, 10 ** 9)}],
            )
            current.append(task)
        tasks += current
        prev_tasks, prev_vertices = current, kinds
    return WorkflowTrace(
        name=name or f"random{seed}",
        abstract_vertices=_vertices(*vertices),
        abstract_edges=_edges(*edges),
        physical_tasks=tasks,
    )


def critical_path_trace(seed: int, name: Optional[str] = None) -> WorkflowTrace:
    """Wide fan-out layers next to one long dependent chain.

    The chain dominates the makespan, but in trace order its tasks come
    after the wide tasks revealed alongside them, so submission-order
    schedulers start it late.
    """
    rng = random.Random(seed)
    chain_len = rng.randint(6, 10)
    wide_layers = rng.randint(2, 3)
    vertices = ["prep"] + [f"wide{j}" for j in range(wide_layers)] + \
        [f"chain{i}" for i in range(chain_len)] + ["report"]
    edges = [("prep", "wide0"), ("prep", "chain0")]
    edges += [(f"wide{j}", f"wide{j + 1}") for j in range(wide_layers - 1)]
    edges += [(f"chain{i}", f"chain{i + 1}") for i in range(chain_len - 1)]
    edges += [(f"wide{wide_layers - 1}", "report"), (f"chain{chain_len - 1}", "report")]

    def inputs(tid):
        return [{"path": f"/data/{tid}.in", "sizeBytes": rng.randint(MiB, 512 * MiB)}]

    tasks = [TraceTask("prep", "prep", [], rng.randint(200, 800), 1, 256 * MiB, inputs("prep"))]
    prev = ["prep"]
    wide_last: list[str] = []
    for j in range(wide_layers):
        width = rng.randint(12, 24)
        layer = []
        for i in range(width):
            tid = f"w{j}_{i}"
            preds = prev if j == 0 else sorted(rng.sample(prev, rng.randint(1, min(2, len(prev)))))
            tasks.append(TraceTask(tid, f"wide{j}", list(preds), rng.randint(300, 2500), 1,
                                   rng.randint(128, 1024) * MiB, inputs(tid)))
            layer.append(tid)
        prev = layer
        wide_last = layer
    chain_prev = "prep"
    for i in range(chain_len):
        tid = f"c{i}"
        tasks.append(TraceTask(tid, f"chain{i}", [chain_prev], rng.randint(1500, 3000), 1,
                               rng.randint(128, 1024) * MiB, inputs(tid)))
        chain_prev = tid
    tasks.append(TraceTask("report", "report", wide_last + [chain_prev], rng.randint(200, 800),
                           1, 256 * MiB, inputs("report")))
    return WorkflowTrace(
        name=name or f"critical{seed}",
        abstract_vertices=_vertices(*vertices),
        abstract_edges=_edges(*edges),
        physical_tasks=tasks,
    )


def critical_path_suite(count: int = 20, base_seed: int = 0) -> list[WorkflowTrace]:
    return [critical_path_trace(base_seed + i) for i in range(count)]
