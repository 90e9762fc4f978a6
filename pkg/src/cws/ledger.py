"""Cluster-wide record of reserved CPU and memory per node."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from cws.strategies import NodeView


class LedgerAuditError(AssertionError):
    pass


@dataclass
class _NodeBook:
    total_cpus_millis: int
    total_memory_bytes: int
    allocated_cpus_millis: int = 0
    allocated_memory_bytes: int = 0
    online: bool = True


@dataclass(frozen=True)
class Allocation:
    node_id: str
    cpus_millis: int
    memory_bytes: int


class ResourceLedger:
    """Allocations are keyed by (execution id, task id)."""

    def __init__(self, nodes: Iterable):
        self.nodes: dict[str, _NodeBook] = {}
        self.allocations: dict[tuple[str, str], Allocation] = {}
        for node in nodes:
            self.nodes[node.id] = _NodeBook(node.cpus_millis, node.memory_bytes,
                                            online=node.online)

    def views(self) -> list[NodeView]:
        return [
            NodeView(nid, b.total_cpus_millis, b.total_memory_bytes,
                     b.allocated_cpus_millis, b.allocated_memory_bytes, b.online)
            for nid, b in self.nodes.items()
        ]

    def reserve(self, key: tuple[str, str], node_id: str, cpus_millis: int,
                memory_bytes: int) -> Allocation:
        if key in self.allocations:
            raise LedgerAuditError(f"{key} already holds an allocation")
        book = self.nodes[node_id]
        if (book.allocated_cpus_millis + cpus_millis > book.total_cpus_millis
                or book.allocated_memory_bytes + memory_bytes > book.total_memory_bytes):
            raise LedgerAuditError(f"reservation for {key} overflows node {node_id}")
        book.allocated_cpus_millis += cpus_millis
        book.allocated_memory_bytes += memory_bytes
        alloc = Allocation(node_id, cpus_millis, memory_bytes)
        self.allocations[key] = alloc
        return alloc

    def release(self, key: tuple[str, str]) -> Allocation | None:
        alloc = self.allocations.pop(key, None)
        if alloc is not None:
            book = self.nodes[alloc.node_id]
            book.allocated_cpus_millis -= alloc.cpus_millis
            book.allocated_memory_bytes -= alloc.memory_bytes
        return alloc

    def on_node(self, node_id: str) -> list[tuple[str, str]]:
        return [k for k, a in self.allocations.items() if a.node_id == node_id]

    def set_online(self, node_id: str, online: bool) -> None:
        self.nodes[node_id].online = online

    def snapshot(self) -> dict:
        return {
            "nodes": {nid: (b.allocated_cpus_millis, b.allocated_memory_bytes, b.online)
                      for nid, b in self.nodes.items()},
            "allocations": dict(self.allocations),
        }

    def audit(self) -> None:
        """Raise LedgerAuditError unless 0 <= allocated <= total on every node
        and live allocations sum to the node counters."""
        sums = {nid: [0, 0] for nid in self.nodes}
        for key, a in self.allocations.items():
            if a.node_id not in sums:
                raise LedgerAuditError(f"{key} allocated on unknown node {a.node_id}")
            sums[a.node_id][0] += a.cpus_millis
            sums[a.node_id][1] += a.memory_bytes
        for nid, b in self.nodes.items():
            if not 0 <= b.allocated_cpus_millis <= b.total_cpus_millis:
                raise LedgerAuditError(f"cpu over-allocation on {nid}")
            if not 0 <= b.allocated_memory_bytes <= b.total_memory_bytes:
                raise LedgerAuditError(f"memory over-allocation on {nid}")
            if sums[nid] != [b.allocated_cpus_millis, b.allocated_memory_bytes]:
                raise LedgerAuditError(f"allocations on {nid} do not reconcile")
