"""Exception hierarchy shared by the model, scheduler and HTTP layer.

Every error carries a machine-readable ``code`` and the HTTP status the
service maps it to, so the API layer never needs a translation table.
"""

from __future__ import annotations


class CwsError(Exception):
    code = "CWS_ERROR"
    http_status = 400

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code


class InvalidRequest(CwsError):
    code = "INVALID_REQUEST"
    http_status = 400


class InvalidExecutionId(CwsError):
    code = "INVALID_EXECUTION_ID"
    http_status = 400


class UnknownVersion(CwsError):
    code = "UNKNOWN_VERSION"
    http_status = 404


class UnknownStrategy(CwsError):
    code = "UNKNOWN_STRATEGY"
    http_status = 400


class DuplicateExecution(CwsError):
    code = "DUPLICATE_EXECUTION"
    http_status = 409


class UnknownExecution(CwsError):
    code = "UNKNOWN_EXECUTION"
    http_status = 404


class UnknownTask(CwsError):
    code = "UNKNOWN_TASK"
    http_status = 404


class DuplicateTaskId(CwsError):
    code = "DUPLICATE_TASK"
    http_status = 409


class UnknownAbstractVertex(CwsError):
    code = "UNKNOWN_ABSTRACT_VERTEX"
    http_status = 400


class VertexInUse(CwsError):
    code = "VERTEX_IN_USE"
    http_status = 409


class WouldCreateCycle(CwsError):
    code = "WOULD_CREATE_CYCLE"
    http_status = 409


class BatchAlreadyOpen(CwsError):
    code = "BATCH_ALREADY_OPEN"
    http_status = 409


class NoBatchOpen(CwsError):
    code = "NO_BATCH_OPEN"
    http_status = 409


class TaskNotWithdrawable(CwsError):
    code = "TASK_NOT_WITHDRAWABLE"
    http_status = 409


class IllegalTransition(CwsError):
    code = "ILLEGAL_TRANSITION"
    http_status = 409

    def __init__(self, src, dst):
        super().__init__(f"illegal task transition {src.value} -> {dst.value}")
        self.src = src
        self.dst = dst


class NodeOffline(CwsError):
    code = "NODE_OFFLINE"
    http_status = 409


class NoPendingEvents(CwsError):
    code = "NO_PENDING_EVENTS"
    http_status = 409


class NotQuiescent(CwsError):
    code = "NOT_QUIESCENT"
    http_status = 409


class TraceInvalid(CwsError):
    code = "TRACE_INVALID"

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


class SchedulerUnreachable(CwsError):
    code = "SCHEDULER_UNREACHABLE"
    http_status = 503


class ExecutionFailed(CwsError):
    code = "EXECUTION_FAILED"
    http_status = 500

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class MissingBaseline(CwsError):
    code = "MISSING_BASELINE"


ERRORS_BY_CODE = {
    cls.code: cls
    for cls in [
        InvalidRequest, InvalidExecutionId, UnknownVersion, UnknownStrategy,
        DuplicateExecution, UnknownExecution, UnknownTask, DuplicateTaskId,
        UnknownAbstractVertex, VertexInUse, WouldCreateCycle, BatchAlreadyOpen,
        NoBatchOpen, TaskNotWithdrawable, NodeOffline,
    ]
}
