"""One-shot code execution harness.

Reads a single JSON request from stdin, runs the submitted code with the
table pre-loaded as a pandas dataframe named ``df`` and a ``checkpoint(df)``
helper injected, and writes a single JSON response to stdout.

Wire protocol:
    request:  {"code": str, "table": {"columns": [...], "rows": [[...]]}}
    response: {"status": "ok"|"error", "stdout": str, "error": str,
               "checkpoints": [{"columns": [...], "data": [[...]]}, ...]}

All failures inside the submitted code are reported in-band with status
"error" and a traceback; the process still exits 0. A nonzero exit happens
only when the request itself is unreadable. User prints are captured into
the "stdout" field so no stray bytes ever reach the protocol channel.
"""

from __future__ import annotations

import io
import json
import sys
import traceback
from contextlib import redirect_stdout

import pandas as pd

__version__ = "0.1.0"


def _native(value):
    """Convert a dataframe cell to a JSON-friendly builtin."""
    if value is None:
        return None
    try:
        if pd.isna(value):
            return None
    except (TypeError, ValueError):
        pass
    if hasattr(value, "item"):
        return value.item()
    if isinstance(value, (str, int, float, bool)):
        return value
    return str(value)


def dataframe_to_checkpoint(frame: pd.DataFrame) -> dict:
    """Render a dataframe as a compact-JSON table object."""
    return {
        "columns": [str(c) for c in frame.columns],
        "data": [[_native(v) for v in row] for row in frame.itertuples(index=False)],
    }


def run_request(request: dict) -> dict:
    """Execute one request and build the response object."""
    frame = pd.DataFrame(request["table"]["rows"],
                         columns=request["table"]["columns"])
    checkpoints: list[dict] = []

    def checkpoint(df):
        if not isinstance(df, pd.DataFrame):
            raise TypeError("checkpoint() expects a pandas DataFrame")
        checkpoints.append(dataframe_to_checkpoint(df))

    namespace = {"df": frame, "checkpoint": checkpoint, "pd": pd}
    captured = io.StringIO()
    status = "ok"
    error = ""
    try:
        with redirect_stdout(captured):
            exec(compile(request["code"], "<submitted-code>", "exec"), namespace)
    except BaseException:
        status = "error"
        error = traceback.format_exc()
    return {
        "status": status,
        "stdout": captured.getvalue(),
        "error": error,
        "checkpoints": checkpoints,
    }


def run_harness(stdin=None, stdout=None) -> int:
    """Serve exactly one request; returns the process exit code."""
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    try:
        request = json.load(stdin)
        if not isinstance(request, dict):
            raise ValueError("request must be a JSON object")
        if not isinstance(request.get("code"), str):
            raise ValueError("missing string field 'code'")
        table = request.get("table")
        if not isinstance(table, dict) or "columns" not in table or "rows" not in table:
            raise ValueError("missing 'table' object with columns and rows")
    except Exception as exc:
        print(f"unreadable request: {exc}", file=sys.stderr)
        return 1
    response = run_request(request)
    json.dump(response, stdout)
    stdout.write("\n")
    stdout.flush()
    return 0


def main() -> None:
    raise SystemExit(run_harness())
