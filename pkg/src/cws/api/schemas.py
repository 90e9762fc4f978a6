from __future__ import annotations

from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field


class _Body(BaseModel):
    # registration and task bodies may carry extra information; it is ignored
    model_config = ConfigDict(extra="ignore", populate_by_name=True)


class RegisterRequest(_Body):
    strategy: str
    seed: Optional[int] = None


class RegisterResponse(BaseModel):
    execution: str
    strategy: str


class DeleteSummary(BaseModel):
    execution: str
    finished: int
    failed: int
    withdrawn: int


class Vertex(_Body):
    id: str = Field(min_length=1)
    label: str = ""


class Edge(_Body):
    from_: str = Field(alias="from", min_length=1)
    to: str = Field(min_length=1)


class Added(BaseModel):
    added: int


class Removed(BaseModel):
    removed: int


class BatchResponse(BaseModel):
    execution: str
    batchOpen: bool
    released: Optional[int] = None


class FileSpecModel(_Body):
    path: str
    sizeBytes: int = Field(default=0, ge=0)


class TaskSubmission(_Body):
    abstractId: str = Field(min_length=1)
    cpus: Union[int, float] = Field(gt=0)
    memoryBytes: int = Field(gt=0)
    runtimeEstimateMs: Optional[int] = Field(default=None, ge=0)
    inputFiles: list[FileSpecModel] = []
    outputFiles: list[FileSpecModel] = []


class Grant(BaseModel):
    cpus: Union[int, float]
    memoryBytes: int
    runtimeMs: Optional[int]


class TaskStateResponse(BaseModel):
    state: str
    node: Optional[str] = None
    submittedAt: int
    startedAt: Optional[int] = None
    finishedAt: Optional[int] = None


class WithdrawResponse(BaseModel):
    task: str
    state: str


class ErrorBody(BaseModel):
    code: str
    message: str
