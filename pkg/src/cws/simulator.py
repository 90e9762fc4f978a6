"""Discrete-event stand-in for the resource manager.

Runs SCHEDULED tasks for ``round(runtime * speedFactor)`` ms after a fixed
startup overhead and reports completions back to the scheduler.
"""

from __future__ import annotations

import enum
import heapq
import math
import random
from dataclasses import dataclass, field
from typing import Optional

from cws.clock import VirtualClock
from cws.cluster import ClusterConfig
from cws.errors import NodeOffline, NoPendingEvents, NotQuiescent
from cws.model import PhysicalTask


class SimEventKind(str, enum.Enum):
    TASK_STARTS = "TASK_STARTS"
    TASK_COMPLETES = "TASK_COMPLETES"
    NODE_TOGGLE = "NODE_TOGGLE"


@dataclass(order=True)
class SimEvent:
    at: int
    seq: int
    kind: SimEventKind = field(compare=False)
    payload: dict = field(compare=False, default_factory=dict)
    cancelled: bool = field(compare=False, default=False)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


class ClusterSimulator:
    def __init__(self, config: ClusterConfig, clock: Optional[VirtualClock] = None,
                 scheduler=None):
        self.config = config
        self.clock = clock if clock is not None else VirtualClock()
        self.scheduler = scheduler
        self.nodes = {n.id: n for n in config.nodes}
        self.online = {n.id: n.online for n in config.nodes}
        self._queue: list[SimEvent] = []
        self._seq = 0
        # (execution id, task id) -> pending start/complete events
        self._live: dict[tuple[str, str], list[SimEvent]] = {}
        self._jitter_rng = random.Random(config.jitter_seed)
        self.processed = 0
        for toggle in config.toggles:
            self._push(toggle.at_ms, SimEventKind.NODE_TOGGLE,
                       {"node": toggle.node, "online": toggle.online})

    def attach(self, scheduler) -> None:
        self.scheduler = scheduler

    def _push(self, at: int, kind: SimEventKind, payload: dict) -> SimEvent:
        ev = SimEvent(at, self._seq, kind, payload)
        self._seq += 1
        heapq.heappush(self._queue, ev)
        return ev

    def duration_ms(self, task: PhysicalTask, node_id: str) -> int:
        runtime = task.runtime_estimate_ms or 0
        factor = self.nodes[node_id].speed_factor
        if self.config.jitter:
            factor *= self._jitter_rng.uniform(1 - self.config.jitter, 1 + self.config.jitter)
        return round_half_up(runtime * factor)

    # -------------------------------------------------------- backend protocol

    def dispatch(self, execution_id: str, task: PhysicalTask, node_id: str) -> None:
        if not self.online.get(node_id, False):
            raise NodeOffline(f"node {node_id!r} is offline")
        now = self.clock.now_ms()
        start = now + self.config.startup_overhead_ms
        finish = start + self.duration_ms(task, node_id)
        key = (execution_id, task.id)
        payload = {"execution": execution_id, "task": task.id, "node": node_id}
        events = []
        if start == now:
            self.scheduler.on_task_started(execution_id, task.id)
        else:
            events.append(self._push(start, SimEventKind.TASK_STARTS, payload))
        events.append(self._push(finish, SimEventKind.TASK_COMPLETES, payload))
        self._live[key] = events

    def cancel(self, execution_id: str, task_id: str) -> None:
        for ev in self._live.pop((execution_id, task_id), ()):
            ev.cancelled = True

    # -------------------------------------------------------- event engine

    def _prune(self) -> None:
        while self._queue and self._queue[0].cancelled:
            heapq.heappop(self._queue)

    def has_pending(self) -> bool:
        self._prune()
        return bool(self._queue)

    def next_event_time(self) -> Optional[int]:
        self._prune()
        return self._queue[0].at if self._queue else None

    def advance_to_next_event(self) -> SimEvent:
        """Jump the virtual clock to the earliest pending event and apply it."""
        if self.scheduler is not None and not self.scheduler.quiescent:
            raise NotQuiescent("scheduler has open batches or pending events")
        self._prune()
        if not self._queue:
            raise NoPendingEvents("simulator has no pending events")
        ev = heapq.heappop(self._queue)
        self.clock.advance_to(ev.at)
        self._apply(ev)
        return ev

    def run_until(self, t_ms: Optional[int] = None) -> int:
        """Apply, in time order, every event due at or before ``t_ms``.

        Unlike ``advance_to_next_event`` this does not wait for quiescence:
        time keeps flowing while batches are open. Events already in the past
        (paced mode) are stamped with the current reading; the clock only
        moves forward. Defaults to the current clock reading.
        """
        target = self.clock.now_ms() if t_ms is None else t_ms
        count = 0
        while True:
            self._prune()
            if not self._queue or self._queue[0].at > target:
                break
            ev = heapq.heappop(self._queue)
            if ev.at > self.clock.now_ms():
                self.clock.advance_to(ev.at)
            self._apply(ev)
            count += 1
        if target > self.clock.now_ms():
            self.clock.advance_to(target)
        return count

    def process_due(self) -> int:
        """Apply every event due at the current clock reading (paced mode)."""
        return self.run_until()

    def _apply(self, ev: SimEvent) -> None:
        self.processed += 1
        p = ev.payload
        if ev.kind is SimEventKind.TASK_STARTS:
            self.scheduler.on_task_started(p["execution"], p["task"])
        elif ev.kind is SimEventKind.TASK_COMPLETES:
            self._live.pop((p["execution"], p["task"]), None)
            self.scheduler.on_task_finished(p["execution"], p["task"], True)
        else:
            self.toggle_node(p["node"], p["online"])

    def toggle_node(self, node_id: str, online: bool) -> None:
        if node_id not in self.nodes:
            raise KeyError(f"unknown node {node_id!r}")
        if self.online[node_id] == online:
            return
        self.online[node_id] = online
        self.scheduler.on_node_toggled(node_id, online)

    def run_until_idle(self, limit: Optional[int] = None) -> int:
        n = 0
        while self.has_pending() and (limit is None or n < limit):
            self.advance_to_next_event()
            n += 1
        return n


def build_system(config: ClusterConfig, clock: Optional[VirtualClock] = None,
                 decision_log=None, audit: bool = False):
    """Wire a scheduler to a simulator sharing one clock."""
    from cws.scheduler import Scheduler

    clock = clock if clock is not None else VirtualClock()
    sim = ClusterSimulator(config, clock)
    sched = Scheduler(config.nodes, clock=clock, backend=sim,
                      decision_log=decision_log, audit=audit)
    sim.attach(sched)
    return sched, sim
