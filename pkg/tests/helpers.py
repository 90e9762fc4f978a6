from cws.model import FileSpec

MiB = 1 << 20
GiB = 1 << 30


def submit(sched, eid, tid, abstract="A", cpus=1, mem=MiB, runtime=1000, size=None):
    files = [] if size is None else [FileSpec(f"/in/{tid}", size)]
    return sched.submit_task(eid, tid, abstract, cpus, mem, runtime, files)


def new_execution(sched, eid="run-1", strategy="fifo-round_robin", vertices="ABCDE", seed=0):
    sched.create_execution(eid, strategy, seed)
    sched.add_vertices(eid, [(v, v) for v in vertices])
    return sched.executions[eid]
