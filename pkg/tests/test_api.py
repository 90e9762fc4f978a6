import pytest
from fastapi.testclient import TestClient

from cws.api import build_app, create_app
from cws.cluster import ClusterConfig
from cws.scheduler import Scheduler
from cws.service import SchedulerService

GiB = 1 << 30
BIG = 10 ** 9


@pytest.fixture
def client():
    """Live service over two single-cpu nodes; paced clock so nothing finishes during a test."""
    app = build_app(ClusterConfig.uniform(2, cpus=1, memory_bytes=4 * GiB))
    with TestClient(app) as c:
        yield c


def task_body(abstract="A", cpus=1, runtime=BIG, **extra):
    return {"abstractId": abstract, "cpus": cpus, "memoryBytes": GiB,
            "runtimeEstimateMs": runtime, **extra}


def setup_run(c, eid="run-1", strategy="rank_min-round_robin"):
    assert c.post(f"/v1/{eid}", json={"strategy": strategy}).status_code == 200
    c.post(f"/v1/{eid}/DAG/vertices", json=[{"id": v, "label": v} for v in "ABC"])
    c.post(f"/v1/{eid}/DAG/edges", json=[{"from": "A", "to": "B"}, {"from": "B", "to": "C"}])


# ------------------------------------------------------------------ registration

def test_register(client):
    r = client.post("/v1/run-1", json={"strategy": "rank_min-round_robin", "seed": 3,
                                       "workflow": "ignored extra info"})
    assert r.status_code == 200
    assert r.json() == {"execution": "run-1", "strategy": "rank_min-round_robin"}


def test_register_twice(client):
    client.post("/v1/run-1", json={"strategy": "fifo-fair"})
    r = client.post("/v1/run-1", json={"strategy": "fifo-fair"})
    assert r.status_code == 409 and r.json()["code"] == "DUPLICATE_EXECUTION"


def test_unknown_version(client):
    r = client.post("/v2/run-1", json={"strategy": "fifo-fair"})
    assert r.status_code == 404 and r.json()["code"] == "UNKNOWN_VERSION"


def test_unknown_strategy(client):
    r = client.post("/v1/run-1", json={"strategy": "heft"})
    assert r.status_code == 400 and r.json()["code"] == "UNKNOWN_STRATEGY"


def test_bad_execution_id(client):
    r = client.post("/v1/bad.id", json={"strategy": "fifo-fair"})
    assert r.status_code == 400 and r.json()["code"] == "INVALID_EXECUTION_ID"


def test_malformed_body_is_400(client):
    r = client.post("/v1/run-1", json={"nostrategy": 1})
    assert r.status_code == 400 and r.json()["code"] == "INVALID_REQUEST"
    assert set(r.json()) == {"code", "message"}


def test_delete_execution(client):
    setup_run(client)
    client.post("/v1/run-1/task/t1", json=task_body())
    r = client.delete("/v1/run-1")
    assert r.status_code == 200
    assert r.json() == {"execution": "run-1", "finished": 0, "failed": 1, "withdrawn": 0}
    assert client.delete("/v1/run-1").status_code == 404


def test_delete_with_queued_tasks_keeps_ledger(client):
    setup_run(client, "hog")
    client.post("/v1/hog/task/h1", json=task_body())
    client.post("/v1/hog/task/h2", json=task_body())
    setup_run(client)
    client.post("/v1/run-1/task/q1", json=task_body())
    client.post("/v1/run-1/task/q2", json=task_body())
    sched = client.app.state.scheduler
    before = {n: (b.allocated_cpus_millis, b.allocated_memory_bytes)
              for n, b in sched.ledger.nodes.items()}
    assert client.delete("/v1/run-1").json()["withdrawn"] == 2
    after = {n: (b.allocated_cpus_millis, b.allocated_memory_bytes)
             for n, b in sched.ledger.nodes.items()}
    assert before == after
    sched.ledger.audit()


# ------------------------------------------------------------------ DAG

def test_vertices_are_upserts(client):
    client.post("/v1/run-1", json={"strategy": "fifo-fair"})
    body = [{"id": "A", "label": "align"}, {"id": "B", "label": "sort"}]
    assert client.post("/v1/run-1/DAG/vertices", json=body).json() == {"added": 2}
    assert client.post("/v1/run-1/DAG/vertices", json=body).json() == {"added": 0}


def test_remove_vertex_in_use(client):
    setup_run(client)
    client.post("/v1/run-1/task/t1", json=task_body("A"))
    r = client.request("DELETE", "/v1/run-1/DAG/vertices", json=["A"])
    assert r.status_code == 409 and r.json()["code"] == "VERTEX_IN_USE"
    r = client.request("DELETE", "/v1/run-1/DAG/vertices", json=["C", "nope"])
    assert r.json() == {"removed": 1}


def test_cycle_is_409(client):
    setup_run(client)
    r = client.post("/v1/run-1/DAG/edges", json=[{"from": "C", "to": "A"}])
    assert r.status_code == 409 and r.json()["code"] == "WOULD_CREATE_CYCLE"


def test_edge_delete_is_idempotent(client):
    setup_run(client)
    body = [{"from": "A", "to": "B"}, {"from": "X", "to": "Y"}]
    assert client.request("DELETE", "/v1/run-1/DAG/edges", json=body).json() == {"removed": 1}
    assert client.request("DELETE", "/v1/run-1/DAG/edges", json=body).json() == {"removed": 0}


# ------------------------------------------------------------------ batches and tasks

def test_batch_cycle(client):
    setup_run(client)
    assert client.put("/v1/run-1/startBatch").json() == {"execution": "run-1", "batchOpen": True}
    assert client.put("/v1/run-1/startBatch").json()["code"] == "BATCH_ALREADY_OPEN"
    client.post("/v1/run-1/task/t1", json=task_body())
    assert client.get("/v1/run-1/task/t1").json()["state"] == "SUBMITTED"
    r = client.put("/v1/run-1/endBatch")
    assert r.json() == {"execution": "run-1", "batchOpen": False, "released": 1}
    assert client.get("/v1/run-1/task/t1").json()["state"] == "RUNNING"
    r = client.put("/v1/run-1/endBatch")
    assert r.status_code == 409 and r.json()["code"] == "NO_BATCH_OPEN"


def test_submit_echoes_request(client):
    setup_run(client)
    body = task_body("C", cpus=1, runtime=1234,
                     inputFiles=[{"path": "/d/x", "sizeBytes": 7}], outputFiles=[{"path": "/o"}])
    r = client.post("/v1/run-1/task/t3", json=body)
    assert r.status_code == 200
    assert r.json() == {"cpus": 1, "memoryBytes": GiB, "runtimeMs": 1234}
    r = client.post("/v1/run-1/task/t4", json=task_body("C", cpus=0.5))
    assert r.json()["cpus"] == 0.5


def test_submit_errors(client):
    setup_run(client)
    r = client.post("/v1/run-1/task/t1", json=task_body("Z"))
    assert r.status_code == 400 and r.json()["code"] == "UNKNOWN_ABSTRACT_VERTEX"
    client.post("/v1/run-1/task/t1", json=task_body())
    r = client.post("/v1/run-1/task/t1", json=task_body())
    assert r.status_code == 409 and r.json()["code"] == "DUPLICATE_TASK"
    r = client.post("/v1/run-1/task/t9", json=task_body(cpus=0))
    assert r.status_code == 400


def test_get_task_fields(client):
    setup_run(client)
    client.post("/v1/run-1/task/t1", json=task_body())
    got = client.get("/v1/run-1/task/t1").json()
    assert set(got) == {"state", "node", "submittedAt", "startedAt"}
    assert got["state"] == "RUNNING" and got["node"] in ("n1", "n2")
    r = client.get("/v1/run-1/task/ghost")
    assert r.status_code == 404 and r.json()["code"] == "UNKNOWN_TASK"


def test_withdraw(client):
    setup_run(client)
    for tid in ("t1", "t2", "t3"):
        client.post(f"/v1/run-1/task/{tid}", json=task_body())
    r = client.delete("/v1/run-1/task/t3")
    assert r.json() == {"task": "t3", "state": "WITHDRAWN"}
    assert client.get("/v1/run-1/task/t3").json()["state"] == "WITHDRAWN"
    r = client.delete("/v1/run-1/task/t1")
    assert r.status_code == 409 and r.json()["code"] == "TASK_NOT_WITHDRAWABLE"
    assert client.delete("/v1/run-1/task/ghost").status_code == 404


ROWS_3_TO_11 = [
    ("POST", "/DAG/vertices", [{"id": "A"}]),
    ("DELETE", "/DAG/vertices", ["A"]),
    ("POST", "/DAG/edges", [{"from": "A", "to": "B"}]),
    ("DELETE", "/DAG/edges", [{"from": "A", "to": "B"}]),
    ("PUT", "/startBatch", None),
    ("PUT", "/endBatch", None),
    ("POST", "/task/t1", {"abstractId": "A", "cpus": 1, "memoryBytes": 1}),
    ("GET", "/task/t1", None),
    ("DELETE", "/task/t1", None),
]


@pytest.mark.parametrize("method,suffix,body", ROWS_3_TO_11)
def test_unknown_execution_is_uniform(client, method, suffix, body):
    kwargs = {} if body is None else {"json": body}
    r = client.request(method, "/v1/ghost" + suffix, **kwargs)
    assert r.status_code == 404
    assert r.json()["code"] == "UNKNOWN_EXECUTION"


def test_openapi_document(client):
    doc = client.get("/v1/openapi.json").json()
    paths = doc["paths"]
    assert set(paths["/{version}/{execution}"]) == {"post", "delete"}
    assert set(paths["/{version}/{execution}/DAG/vertices"]) == {"post", "delete"}
    assert set(paths["/{version}/{execution}/DAG/edges"]) == {"post", "delete"}
    assert set(paths["/{version}/{execution}/task/{task_id}"]) == {"post", "get", "delete"}
    assert "put" in paths["/{version}/{execution}/startBatch"]
    assert "put" in paths["/{version}/{execution}/endBatch"]


def test_read_your_writes_without_backend():
    sched = Scheduler(ClusterConfig.uniform(1).nodes)
    with TestClient(create_app(SchedulerService(sched))) as c:
        setup_run(c)
        c.put("/v1/run-1/startBatch")
        c.post("/v1/run-1/task/t1", json=task_body())
        assert c.get("/v1/run-1/task/t1").json()["state"] == "SUBMITTED"
        c.put("/v1/run-1/endBatch")
        assert c.get("/v1/run-1/task/t1").json()["state"] == "SCHEDULED"
        c.request("DELETE", "/v1/run-1/DAG/edges", json=[{"from": "A", "to": "B"}])
        assert sched.executions["run-1"].dag.edges == {("B", "C")}


def test_live_clock_completes_tasks():
    app = build_app(ClusterConfig.uniform(1), time_scale=1000.0)
    with TestClient(app) as c:
        setup_run(c)
        c.post("/v1/run-1/task/t1", json=task_body(runtime=50))
        import time
        deadline = time.monotonic() + 5
        while c.get("/v1/run-1/task/t1").json()["state"] != "FINISHED":
            assert time.monotonic() < deadline
            time.sleep(0.01)
