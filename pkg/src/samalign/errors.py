"""Base error type shared across pipeline modules.

Every recoverable failure raised by this package derives from
:class:`PipelineError`, so the CLI can map it to exit code 1 and emit a
machine-readable envelope when ``--json`` is set.
"""

from __future__ import annotations


class PipelineError(Exception):
    """A pipeline failure the caller is expected to handle."""

    def payload(self) -> dict:
        return {"type": type(self).__name__, "message": str(self)}
