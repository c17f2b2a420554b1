"""Shared test helpers importable by name (conftest stays fixtures-only)."""

import json
from pathlib import Path

STUB_HARNESS = Path(__file__).parent / "stub_harness.py"


def write_jsonl(path, objs):
    path.write_text("".join(json.dumps(o) + "\n" for o in objs), encoding="utf-8")
    return path
