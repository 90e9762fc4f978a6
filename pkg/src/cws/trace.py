"""Workflow traces: the JSON interchange format replayed by the driver."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from pathlib import Path
from typing import Optional

EDIT_OPS = ("addVertices", "removeVertices", "addEdges", "removeEdges")


@dataclass
class TraceTask:
    id: str
    abstract_id: str
    predecessors: list[str] = field(default_factory=list)
    runtime_ms: int = 0
    cpus: float = 1
    memory_bytes: int = 1 << 20
    input_files: list[dict] = field(default_factory=list)
    output_files: list[dict] = field(default_factory=list)

    def submission_body(self) -> dict:
        return {
            "abstractId": self.abstract_id,
            "cpus": self.cpus,
            "memoryBytes": self.memory_bytes,
            "runtimeEstimateMs": self.runtime_ms,
            "inputFiles": self.input_files,
            "outputFiles": self.output_files,
        }

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "abstractId": self.abstract_id,
            "predecessors": list(self.predecessors),
            "runtimeMs": self.runtime_ms,
            "cpus": self.cpus,
            "memoryBytes": self.memory_bytes,
            "inputFiles": self.input_files,
            "outputFiles": self.output_files,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TraceTask":
        return cls(
            id=str(obj["id"]),
            abstract_id=str(obj["abstractId"]),
            predecessors=[str(p) for p in obj.get("predecessors", [])],
            runtime_ms=int(obj.get("runtimeMs", 0)),
            cpus=obj.get("cpus", 1),
            memory_bytes=int(obj.get("memoryBytes", 1 << 20)),
            input_files=list(obj.get("inputFiles", [])),
            output_files=list(obj.get("outputFiles", [])),
        )


@dataclass
class DagEdit:
    """A DAG change applied once ``after_task`` has finished (or at start)."""

    op: str
    vertices: list = field(default_factory=list)
    edges: list[dict] = field(default_factory=list)
    after_task: Optional[str] = None

    def to_json(self) -> dict:
        out = {"op": self.op, "afterTask": self.after_task}
        if self.op in ("addVertices", "removeVertices"):
            out["vertices"] = self.vertices
        else:
            out["edges"] = self.edges
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "DagEdit":
        return cls(op=obj["op"], vertices=list(obj.get("vertices", [])),
                   edges=list(obj.get("edges", [])), after_task=obj.get("afterTask"))

    def vertex_ids(self) -> list[str]:
        return [v["id"] if isinstance(v, dict) else str(v) for v in self.vertices]


@dataclass
class WorkflowTrace:
    name: str
    abstract_vertices: list[dict]
    abstract_edges: list[dict]
    physical_tasks: list[TraceTask]
    dag_edits: list[DagEdit] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "abstractVertices": self.abstract_vertices,
            "abstractEdges": self.abstract_edges,
            "physicalTasks": [t.to_json() for t in self.physical_tasks],
            "dagEdits": [e.to_json() for e in self.dag_edits],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "WorkflowTrace":
        return cls(
            name=str(obj["name"]),
            abstract_vertices=[{"id": str(v["id"]), "label": str(v.get("label", v["id"]))}
                               for v in obj.get("abstractVertices", [])],
            abstract_edges=[{"from": str(e["from"]), "to": str(e["to"])}
                            for e in obj.get("abstractEdges", [])],
            physical_tasks=[TraceTask.from_json(t) for t in obj.get("physicalTasks", [])],
            dag_edits=[DagEdit.from_json(e) for e in obj.get("dagEdits") or []],
        )

    @classmethod
    def load(cls, path) -> "WorkflowTrace":
        return cls.from_json(json.loads(Path(path).read_text()))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")


def validate_trace(trace: WorkflowTrace) -> list[str]:
    """Every invariant violation found in ``trace``; empty when it is usable."""
    out: list[str] = []
    known_vertices = {v["id"] for v in trace.abstract_vertices}
    for edit in trace.dag_edits:
        if edit.op not in EDIT_OPS:
            out.append(f"dag edit has unknown op {edit.op!r}")
        elif edit.op == "addVertices":
            known_vertices.update(edit.vertex_ids())

    ids = [t.id for t in trace.physical_tasks]
    seen: set[str] = set()
    for tid in ids:
        if tid in seen:
            out.append(f"duplicate task id {tid!r}")
        seen.add(tid)

    for t in trace.physical_tasks:
        if t.abstract_id not in known_vertices:
            out.append(f"task {t.id!r} references unknown abstract vertex {t.abstract_id!r}")
        for p in t.predecessors:
            if p not in seen:
                out.append(f"task {t.id!r} has unknown predecessor {p!r}")
        if t.runtime_ms < 0:
            out.append(f"task {t.id!r} has negative runtime")
        if float(t.cpus) <= 0 or t.memory_bytes <= 0:
            out.append(f"task {t.id!r} needs positive cpus and memory")
        for f in t.input_files:
            if int(f.get("sizeBytes", 0)) < 0:
                out.append(f"task {t.id!r} input {f.get('path')!r} has negative size")

    graph = {t.id: [p for p in t.predecessors if p in seen] for t in trace.physical_tasks}
    try:
        TopologicalSorter(graph).prepare()
    except CycleError as exc:
        out.append(f"physical predecessor cycle: {' -> '.join(exc.args[1])}")

    initial = {v["id"] for v in trace.abstract_vertices}
    abstract_graph: dict[str, set[str]] = {v: set() for v in initial}
    for e in trace.abstract_edges:
        if e["from"] not in initial or e["to"] not in initial:
            out.append(f"abstract edge {e['from']} -> {e['to']} references unknown vertex")
            continue
        abstract_graph[e["to"]].add(e["from"])
    try:
        TopologicalSorter(abstract_graph).prepare()
    except CycleError as exc:
        out.append(f"abstract DAG cycle: {' -> '.join(exc.args[1])}")

    for edit in trace.dag_edits:
        if edit.after_task is not None and edit.after_task not in seen:
            out.append(f"dag edit waits on unknown task {edit.after_task!r}")
    return out
