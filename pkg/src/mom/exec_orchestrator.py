"""Run generated table-transformation code in an isolated child process via
the newline-delimited JSON wire protocol, with timeout and stdout caps.

Wire protocol (one object per direction over child stdin/stdout):
    request:  {"code": str, "table": {"columns": [...], "rows": [[...]]}}
    response: {"status": "ok"|"error", "stdout": str, "error": str,
               "checkpoints": [{"columns": [...], "data": [[...]]}, ...]}
Any deviation from the response shape is a ProtocolError outcome.
"""

from __future__ import annotations

import json
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .agent_roles import CodeArtifact
from .errors import ParseError, SpawnError
from .table_core import Table, table_from_json_obj

TRUNCATION_MARKER = "...[truncated]"

DEFAULT_TIMEOUT_S = 30
DEFAULT_MAX_STDOUT_BYTES = 64 * 1024


class ExecStatus(str, Enum):
    SUCCESS = "success"
    RUNTIME_ERROR = "runtime_error"
    TIMEOUT = "timeout"
    PROTOCOL_ERROR = "protocol_error"


@dataclass(frozen=True)
class ExecOutcome:
    status: ExecStatus
    stdout_text: str = ""
    error_text: str = ""
    intermediate_tables: tuple = ()
    wall_time_ms: int = 0

    def __post_init__(self):
        if self.status == ExecStatus.SUCCESS and self.error_text:
            raise ValueError("successful outcomes carry no error text")


@dataclass(frozen=True)
class SandboxConfig:
    harness_cmd: tuple
    timeout_s: int = DEFAULT_TIMEOUT_S
    max_stdout_bytes: int = DEFAULT_MAX_STDOUT_BYTES
    workdir: str | None = None  # parent for per-call temp dirs

    def __post_init__(self):
        if self.timeout_s < 1:
            raise ValueError("timeout_s must be >= 1")
        if self.max_stdout_bytes < 1:
            raise ValueError("max_stdout_bytes must be >= 1")
        object.__setattr__(self, "harness_cmd", tuple(self.harness_cmd))


def _truncate(text: str, max_bytes: int) -> str:
    raw = text.encode("utf-8")
    if len(raw) <= max_bytes:
        return text
    return raw[:max_bytes].decode("utf-8", errors="ignore") + TRUNCATION_MARKER


def _parse_response(stdout: bytes, max_stdout_bytes: int, wall_ms: int) -> ExecOutcome:
    try:
        obj = json.loads(stdout.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        return ExecOutcome(
            status=ExecStatus.PROTOCOL_ERROR,
            error_text=f"unparseable harness response: {exc}",
            wall_time_ms=wall_ms,
        )
    if not isinstance(obj, dict) or obj.get("status") not in ("ok", "error"):
        return ExecOutcome(
            status=ExecStatus.PROTOCOL_ERROR,
            error_text="harness response missing valid 'status'",
            wall_time_ms=wall_ms,
        )
    stdout_text = obj.get("stdout", "")
    error_text = obj.get("error", "")
    checkpoints = obj.get("checkpoints", [])
    if not isinstance(stdout_text, str) or not isinstance(error_text, str) \
            or not isinstance(checkpoints, list):
        return ExecOutcome(
            status=ExecStatus.PROTOCOL_ERROR,
            error_text="harness response fields have wrong types",
            wall_time_ms=wall_ms,
        )
    tables = []
    for entry in checkpoints:
        try:
            tables.append(table_from_json_obj(entry))
        except ParseError as exc:
            return ExecOutcome(
                status=ExecStatus.PROTOCOL_ERROR,
                error_text=f"bad checkpoint table: {exc}",
                wall_time_ms=wall_ms,
            )
    stdout_text = _truncate(stdout_text, max_stdout_bytes)
    if obj["status"] == "ok":
        return ExecOutcome(
            status=ExecStatus.SUCCESS,
            stdout_text=stdout_text,
            intermediate_tables=tuple(tables),
            wall_time_ms=wall_ms,
        )
    return ExecOutcome(
        status=ExecStatus.RUNTIME_ERROR,
        stdout_text=stdout_text,
        error_text=error_text or "unspecified harness error",
        intermediate_tables=tuple(tables),
        wall_time_ms=wall_ms,
    )


def execute(code: CodeArtifact, table: Table, cfg: SandboxConfig) -> ExecOutcome:
    """Run code against a table in a fresh child process and temp workdir.

    Code-level failures come back as statuses, never exceptions; only an
    unlaunchable harness raises (SpawnError).
    """
    request = json.dumps({
        "code": code.source,
        "table": {"columns": list(table.columns), "rows": [list(r) for r in table.rows]},
    }) + "\n"
    tmpdir = tempfile.mkdtemp(prefix="mom-sandbox-", dir=cfg.workdir)
    start = time.monotonic()
    try:
        try:
            proc = subprocess.run(
                list(cfg.harness_cmd),
                input=request.encode("utf-8"),
                capture_output=True,
                timeout=cfg.timeout_s,
                cwd=tmpdir,
            )
        except FileNotFoundError as exc:
            raise SpawnError(f"cannot launch harness {cfg.harness_cmd!r}: {exc}") from exc
        except subprocess.TimeoutExpired:
            wall_ms = int((time.monotonic() - start) * 1000)
            return ExecOutcome(
                status=ExecStatus.TIMEOUT,
                error_text=f"execution exceeded {cfg.timeout_s}s",
                wall_time_ms=wall_ms,
            )
        wall_ms = int((time.monotonic() - start) * 1000)
        if proc.returncode != 0:
            return ExecOutcome(
                status=ExecStatus.PROTOCOL_ERROR,
                error_text=(
                    f"harness exited {proc.returncode}: "
                    f"{proc.stderr.decode('utf-8', errors='replace')[:500]}"
                ),
                wall_time_ms=wall_ms,
            )
        return _parse_response(proc.stdout, cfg.max_stdout_bytes, wall_ms)
    finally:
        shutil.rmtree(tmpdir, ignore_errors=True)


def classify_for_reward(outcome: ExecOutcome) -> float:
    """The binary execution-validity reward: 1 only for clean success."""
    return 1.0 if outcome.status == ExecStatus.SUCCESS else 0.0
