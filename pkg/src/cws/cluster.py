"""Cluster description: nodes, startup overhead and optional node toggles."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from cws.model import cpus_to_millis, millis_to_cpus


@dataclass
class NodeState:
    id: str
    cpus_millis: int
    memory_bytes: int
    speed_factor: float = 1.0
    online: bool = True

    def __post_init__(self):
        if self.cpus_millis <= 0 or self.memory_bytes <= 0:
            raise ValueError(f"node {self.id!r} needs positive cpus and memory")
        if self.speed_factor <= 0:
            raise ValueError(f"node {self.id!r} needs a positive speedFactor")

    @classmethod
    def from_json(cls, obj: dict) -> "NodeState":
        return cls(
            id=str(obj["id"]),
            cpus_millis=cpus_to_millis(obj["cpus"]),
            memory_bytes=int(obj["memoryBytes"]),
            speed_factor=float(obj.get("speedFactor", 1.0)),
            online=bool(obj.get("online", True)),
        )

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "cpus": millis_to_cpus(self.cpus_millis),
            "memoryBytes": self.memory_bytes,
            "speedFactor": self.speed_factor,
        }


@dataclass(frozen=True)
class NodeToggle:
    at_ms: int
    node: str
    online: bool


@dataclass
class ClusterConfig:
    nodes: list[NodeState]
    startup_overhead_ms: int = 0
    toggles: list[NodeToggle] = field(default_factory=list)
    jitter: float = 0.0
    jitter_seed: Optional[int] = None

    def __post_init__(self):
        if not self.nodes:
            raise ValueError("cluster needs at least one node")
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids in cluster config")
        if self.startup_overhead_ms < 0:
            raise ValueError("startupOverheadMs must be non-negative")

    @classmethod
    def from_json(cls, obj: dict) -> "ClusterConfig":
        return cls(
            nodes=[NodeState.from_json(n) for n in obj["nodes"]],
            startup_overhead_ms=int(obj.get("startupOverheadMs", 0)),
            toggles=[NodeToggle(int(t["atMs"]), str(t["node"]), bool(t["online"]))
                     for t in obj.get("toggles", [])],
            jitter=float(obj.get("jitter", 0.0)),
            jitter_seed=obj.get("jitterSeed"),
        )

    @classmethod
    def load(cls, path) -> "ClusterConfig":
        return cls.from_json(json.loads(Path(path).read_text()))

    def to_json(self) -> dict:
        out = {
            "nodes": [n.to_json() for n in self.nodes],
            "startupOverheadMs": self.startup_overhead_ms,
        }
        if self.toggles:
            out["toggles"] = [{"atMs": t.at_ms, "node": t.node, "online": t.online}
                              for t in self.toggles]
        if self.jitter:
            out["jitter"] = self.jitter
            out["jitterSeed"] = self.jitter_seed
        return out

    @classmethod
    def uniform(cls, count: int, cpus=1, memory_bytes: int = 1 << 30,
                startup_overhead_ms: int = 0) -> "ClusterConfig":
        return cls(
            nodes=[NodeState(f"n{i + 1}", cpus_to_millis(cpus), memory_bytes)
                   for i in range(count)],
            startup_overhead_ms=startup_overhead_ms,
        )
