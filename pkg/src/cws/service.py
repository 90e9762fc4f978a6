"""The eleven scheduler operations expressed over JSON-shaped values.

Both the HTTP layer and the in-process driver client go through this class,
so they cannot drift apart in behavior.
"""

from __future__ import annotations

from typing import Optional

from cws.errors import UnknownVersion
from cws.model import FileSpec, millis_to_cpus
from cws.scheduler import Scheduler, task_status

API_VERSION = "v1"


def check_version(version: str) -> None:
    if version != API_VERSION:
        raise UnknownVersion(f"unsupported API version {version!r}; only {API_VERSION!r} exists")


def _files(items) -> list[FileSpec]:
    return [FileSpec(str(f["path"]), int(f.get("sizeBytes", 0))) for f in items or ()]


class SchedulerService:
    def __init__(self, scheduler: Scheduler):
        self.scheduler = scheduler

    # 1
    def register(self, execution: str, strategy: str, seed: Optional[int] = None) -> dict:
        ex = self.scheduler.create_execution(execution, strategy, seed or 0)
        return {"execution": ex.id, "strategy": ex.strategy.name}

    # 2
    def delete(self, execution: str) -> dict:
        return self.scheduler.delete_execution(execution)

    # 3
    def add_vertices(self, execution: str, vertices: list[dict]) -> dict:
        pairs = [(str(v["id"]), str(v.get("label", v["id"]))) for v in vertices]
        return {"added": self.scheduler.add_vertices(execution, pairs)}

    # 4
    def remove_vertices(self, execution: str, ids: list[str]) -> dict:
        return {"removed": self.scheduler.remove_vertices(execution, [str(i) for i in ids])}

    # 5
    def add_edges(self, execution: str, edges: list[dict]) -> dict:
        pairs = [(str(e["from"]), str(e["to"])) for e in edges]
        return {"added": self.scheduler.add_edges(execution, pairs)}

    # 6
    def remove_edges(self, execution: str, edges: list[dict]) -> dict:
        pairs = [(str(e["from"]), str(e["to"])) for e in edges]
        return {"removed": self.scheduler.remove_edges(execution, pairs)}

    # 7
    def start_batch(self, execution: str) -> dict:
        self.scheduler.open_batch(execution)
        return {"execution": execution, "batchOpen": True}

    # 8
    def end_batch(self, execution: str) -> dict:
        released = self.scheduler.close_batch(execution)
        return {"execution": execution, "batchOpen": False, "released": released}

    # 9
    def submit_task(self, execution: str, task_id: str, body: dict) -> dict:
        task = self.scheduler.submit_task(
            execution,
            task_id,
            str(body["abstractId"]),
            body["cpus"],
            body["memoryBytes"],
            body.get("runtimeEstimateMs"),
            _files(body.get("inputFiles")),
            _files(body.get("outputFiles")),
        )
        # granted resources equal the request; no capping policy is applied
        return {
            "cpus": millis_to_cpus(task.cpus_millis),
            "memoryBytes": task.memory_bytes,
            "runtimeMs": task.runtime_estimate_ms,
        }

    # 10
    def task_state(self, execution: str, task_id: str) -> dict:
        return self.scheduler.task_status(execution, task_id)

    # 11
    def withdraw_task(self, execution: str, task_id: str) -> dict:
        task = self.scheduler.withdraw_task(execution, task_id)
        return {"task": task.id, "state": task.state.value}


__all__ = ["API_VERSION", "SchedulerService", "check_version", "task_status"]
