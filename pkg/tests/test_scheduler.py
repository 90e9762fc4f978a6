import json

import pytest

from cws.cluster import ClusterConfig
from cws.errors import (
    BatchAlreadyOpen,
    DuplicateTaskId,
    NoBatchOpen,
    TaskNotWithdrawable,
    UnknownAbstractVertex,
    UnknownExecution,
    UnknownTask,
    VertexInUse,
)
from cws.model import TaskState
from cws.scheduler import Scheduler
from cws.simulator import build_system

from helpers import GiB, new_execution, submit
from oracles import ledger_audit_oracle, ledger_counters

EXAMPLE_EDGES = [("A", "B"), ("A", "C"), ("C", "D"), ("B", "E"), ("D", "E")]


def bare(nodes=2, cpus=1, audit=True):
    """Scheduler with no backend: placed tasks stay SCHEDULED until told otherwise."""
    return Scheduler(ClusterConfig.uniform(nodes, cpus=cpus).nodes, audit=audit)


def example_execution(sched, strategy):
    ex = new_execution(sched, strategy=strategy)
    sched.add_edges("run-1", EXAMPLE_EDGES)
    return ex


def state(sched, tid, eid="run-1"):
    return sched.executions[eid].tasks[tid].state


# ------------------------------------------------------------------ enqueue

def test_submit_without_batch_is_queued_and_placed():
    sched = bare()
    new_execution(sched)
    submit(sched, "run-1", "t1")
    assert state(sched, "t1") is TaskState.SCHEDULED
    assert [d.task_id for d in sched.decisions] == ["t1"]


def test_submit_without_batch_stays_queued_when_full():
    sched = bare(nodes=1)
    new_execution(sched)
    submit(sched, "run-1", "t1")
    submit(sched, "run-1", "t2")
    assert state(sched, "t2") is TaskState.QUEUED


def test_submit_inside_batch_is_held():
    sched = bare()
    ex = new_execution(sched)
    sched.open_batch("run-1")
    submit(sched, "run-1", "t1")
    assert state(sched, "t1") is TaskState.SUBMITTED
    assert ex.batch.held_tasks == ["t1"] and not sched.decisions


def test_duplicate_task_id():
    sched = bare()
    new_execution(sched)
    submit(sched, "run-1", "t1")
    with pytest.raises(DuplicateTaskId):
        submit(sched, "run-1", "t1")


def test_unknown_execution_and_vertex():
    sched = bare()
    with pytest.raises(UnknownExecution):
        submit(sched, "nope", "t1")
    new_execution(sched)
    with pytest.raises(UnknownAbstractVertex):
        submit(sched, "run-1", "t1", abstract="Z")


# ------------------------------------------------------------------ batches

def test_closed_batch_is_aligned_as_one_set():
    sched = bare()
    example_execution(sched, "rank_fifo-round_robin")
    sched.open_batch("run-1")
    submit(sched, "run-1", "t2", "B")
    submit(sched, "run-1", "t3", "C")
    submit(sched, "run-1", "t4", "C")
    rounds = sched.rounds
    assert sched.close_batch("run-1") == 3
    assert sched.rounds == rounds + 1
    assert [d.task_id for d in sched.decisions] == ["t3", "t4"]
    assert state(sched, "t2") is TaskState.QUEUED


def test_without_batch_first_arrival_wins():
    sched = bare()
    example_execution(sched, "rank_fifo-round_robin")
    for tid, a in [("t2", "B"), ("t3", "C"), ("t4", "C")]:
        submit(sched, "run-1", tid, a)
    assert [d.task_id for d in sched.decisions] == ["t2", "t3"]


def test_empty_batch_is_a_noop():
    sched = bare()
    new_execution(sched)
    sched.open_batch("run-1")
    rounds = sched.rounds
    assert sched.close_batch("run-1") == 0
    assert sched.rounds == rounds and not sched.decisions


def test_batch_errors():
    sched = bare()
    new_execution(sched)
    with pytest.raises(NoBatchOpen):
        sched.close_batch("run-1")
    sched.open_batch("run-1")
    with pytest.raises(BatchAlreadyOpen):
        sched.open_batch("run-1")


# ------------------------------------------------------------------ alignment

@pytest.mark.parametrize("strategy,placed,waiting", [
    ("rank_fifo-round_robin", ["t3", "t4"], "t2"),
    ("fifo-round_robin", ["t2", "t3"], "t4"),
])
def test_example_second_step(strategy, placed, waiting):
    sched = bare()
    example_execution(sched, strategy)
    sched.open_batch("run-1")
    for tid, a in [("t2", "B"), ("t3", "C"), ("t4", "C")]:
        submit(sched, "run-1", tid, a)
    sched.close_batch("run-1")
    assert [d.task_id for d in sched.decisions] == placed
    assert state(sched, waiting) is TaskState.QUEUED


def test_full_cluster_makes_no_decisions():
    sched = bare(nodes=1)
    new_execution(sched)
    submit(sched, "run-1", "t1")
    submit(sched, "run-1", "t2")
    assert sched.alignment_round("run-1") == []
    assert state(sched, "t2") is TaskState.QUEUED


def test_large_head_task_does_not_block_smaller_ones():
    sched = bare(nodes=1, cpus=2)
    new_execution(sched, strategy="fifo-round_robin")
    submit(sched, "run-1", "small1", cpus=1)
    sched.open_batch("run-1")
    submit(sched, "run-1", "big", cpus=2)
    submit(sched, "run-1", "small2", cpus=1)
    sched.close_batch("run-1")
    assert state(sched, "big") is TaskState.QUEUED
    assert state(sched, "small2") is TaskState.SCHEDULED


def test_dag_change_reranks_queued_tasks():
    sched = bare(nodes=1)
    new_execution(sched, strategy="rank_fifo-round_robin", vertices="ABXY")
    submit(sched, "run-1", "blocker", "A")
    sched.open_batch("run-1")
    submit(sched, "run-1", "early", "A")
    submit(sched, "run-1", "late", "B")
    sched.close_batch("run-1")
    sched.add_edges("run-1", [("B", "X"), ("X", "Y")])
    sched.on_task_started("run-1", "blocker")
    sched.on_task_finished("run-1", "blocker")
    assert state(sched, "late") is TaskState.SCHEDULED
    assert state(sched, "early") is TaskState.QUEUED


# ------------------------------------------------------------------ completion

def test_finish_releases_exactly_the_reservation():
    sched = bare(nodes=1, cpus=4)
    new_execution(sched)
    before = ledger_counters(sched)
    submit(sched, "run-1", "t1", cpus=1.5, mem=3 * GiB // 4)
    assert ledger_counters(sched)["n1"] == (1500, 3 * GiB // 4)
    sched.on_task_started("run-1", "t1")
    sched.on_task_finished("run-1", "t1")
    assert ledger_counters(sched) == before
    ledger_audit_oracle(sched)


def test_failure_releases_resources():
    sched = bare(nodes=1)
    new_execution(sched)
    submit(sched, "run-1", "t1")
    sched.on_task_started("run-1", "t1")
    sched.on_task_finished("run-1", "t1", ok=False)
    assert state(sched, "t1") is TaskState.FAILED
    assert ledger_counters(sched)["n1"] == (0, 0)


def test_last_task_finishing_leaves_nothing_to_do():
    sched = bare(nodes=1)
    new_execution(sched)
    submit(sched, "run-1", "t1")
    sched.on_task_started("run-1", "t1")
    n = len(sched.decisions)
    sched.on_task_finished("run-1", "t1")
    assert len(sched.decisions) == n and not sched.executions["run-1"].queued()


def test_finish_unknown_task():
    sched = bare()
    new_execution(sched)
    with pytest.raises(UnknownTask):
        sched.on_task_finished("run-1", "ghost")


# ------------------------------------------------------------------ withdraw

def test_withdraw_queued_task_is_never_placed():
    sched = bare(nodes=1)
    new_execution(sched)
    submit(sched, "run-1", "t1")
    submit(sched, "run-1", "t2")
    sched.withdraw_task("run-1", "t2")
    sched.on_task_started("run-1", "t1")
    sched.on_task_finished("run-1", "t1")
    assert state(sched, "t2") is TaskState.WITHDRAWN
    assert "t2" not in {d.task_id for d in sched.decisions}


def test_withdraw_running_task_refused():
    sched = bare()
    new_execution(sched)
    submit(sched, "run-1", "t1")
    sched.on_task_started("run-1", "t1")
    with pytest.raises(TaskNotWithdrawable):
        sched.withdraw_task("run-1", "t1")


def test_withdraw_inside_open_batch():
    sched = bare()
    ex = new_execution(sched)
    sched.open_batch("run-1")
    for tid in ("a", "b", "c"):
        submit(sched, "run-1", tid)
    sched.withdraw_task("run-1", "b")
    assert ex.batch.held_tasks == ["a", "c"]
    assert sched.close_batch("run-1") == 2
    assert state(sched, "b") is TaskState.WITHDRAWN


def test_vertex_in_use_until_task_terminal():
    sched = bare()
    new_execution(sched)
    submit(sched, "run-1", "t1", "A")
    with pytest.raises(VertexInUse):
        sched.remove_vertices("run-1", ["A"])
    sched.on_task_started("run-1", "t1")
    sched.on_task_finished("run-1", "t1")
    assert sched.remove_vertices("run-1", ["A"]) == 1


# ------------------------------------------------------------------ deletion

def test_delete_with_queued_tasks_leaves_ledger_unchanged():
    sched = bare(nodes=1)
    new_execution(sched, "other")
    submit(sched, "other", "hog")
    new_execution(sched)
    submit(sched, "run-1", "q1")
    submit(sched, "run-1", "q2")
    before = ledger_counters(sched)
    summary = sched.delete_execution("run-1")
    assert summary["withdrawn"] == 2 and summary["finished"] == summary["failed"] == 0
    assert ledger_counters(sched) == before
    ledger_audit_oracle(sched)


def test_delete_cancels_running_tasks(system):
    sched, sim = system
    new_execution(sched)
    submit(sched, "run-1", "t1")
    submit(sched, "run-1", "t2")
    submit(sched, "run-1", "t3")
    summary = sched.delete_execution("run-1")
    assert summary == {"execution": "run-1", "finished": 0, "failed": 2, "withdrawn": 1}
    assert ledger_counters(sched) == {"n1": (0, 0), "n2": (0, 0)}
    assert not sim.has_pending()


def test_freed_resources_serve_other_executions(system):
    sched, sim = system
    new_execution(sched, "a")
    new_execution(sched, "b")
    submit(sched, "a", "a1")
    submit(sched, "a", "a2")
    submit(sched, "b", "b1")
    assert state(sched, "b1", "b") is TaskState.QUEUED
    sim.advance_to_next_event()
    assert state(sched, "b1", "b") is TaskState.RUNNING


# ------------------------------------------------------------------ log

def test_decision_log_fields(system):
    sched, sim = system
    new_execution(sched)
    submit(sched, "run-1", "t1")
    sim.run_until_idle()
    events = [r["event"] for r in sched.log.records]
    assert events == ["SUBMITTED", "QUEUED", "SCHEDULED", "DECISION", "RUNNING", "FINISHED"]
    for r in sched.log.records:
        keys = set(r)
        assert {"executionId", "taskId", "abstractId", "event", "timestampMs"} <= keys
        assert keys <= {"executionId", "taskId", "abstractId", "event", "nodeId", "timestampMs"}
    line = sched.log.dumps().splitlines()[2]
    assert json.loads(line) == {"executionId": "run-1", "taskId": "t1", "abstractId": "A",
                                "event": "SCHEDULED", "nodeId": "n1", "timestampMs": 0}


def test_identical_inputs_give_identical_logs():
    def run():
        sched, sim = build_system(ClusterConfig.uniform(3, cpus=2), audit=True)
        new_execution(sched, strategy="random-random", seed=11)
        for i in range(12):
            submit(sched, "run-1", f"t{i}", "ABCDE"[i % 5], cpus=1 + i % 2, runtime=100 * i)
        sim.run_until_idle()
        return sched.log.dumps()

    assert run() == run()
