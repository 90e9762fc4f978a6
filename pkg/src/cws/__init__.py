"""Workflow-aware scheduler with a REST interface for workflow engines."""

__version__ = "0.1.0"
