"""Table / QA-record data model, JSONL ingestion, and prompt-facing serialization.

Cell values are a 3-case model: string, float-representable number, or empty
(None). Empty cells render as "" in markdown and as JSON null in the compact
machine format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence, Union

from .errors import DuplicateIdError, ParseError, SchemaError

Cell = Union[str, int, float, None]

MARKDOWN = "markdown"
JSON_COMPACT = "json_compact"


@dataclass(frozen=True)
class Table:
    """An immutable structured table: column names plus row tuples."""

    columns: tuple
    rows: tuple

    def __init__(self, columns: Sequence[str], rows: Iterable[Sequence[Cell]]):
        object.__setattr__(self, "columns", tuple(columns))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in rows))
        self._validate()

    def _validate(self) -> None:
        trimmed = [c.strip() for c in self.columns]
        if len(set(trimmed)) != len(trimmed):
            raise ValueError("column names must be unique after trimming")
        n = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != n:
                raise ValueError(f"row {i} has {len(row)} cells, expected {n}")
            for cell in row:
                if cell is not None and not isinstance(cell, (str, int, float)):
                    raise ValueError(f"unsupported cell type: {type(cell).__name__}")
                if isinstance(cell, bool):
                    raise ValueError("boolean cells are not part of the cell model")

    @property
    def n_rows(self) -> int:
        return len(self.rows)


class Task(str, Enum):
    FACT_CHECKING = "FC"
    NUMERICAL_REASONING = "NR"
    DATA_ANALYSIS = "DA"
    OTHER = "OTHER"


@dataclass(frozen=True)
class QaRecord:
    """One question over one table, with its gold answer."""

    id: str
    question: str
    table: Table
    gold_answer: str
    task: Task = Task.OTHER
    answer_format_hint: str | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("record id must be non-empty")
        if not self.gold_answer:
            raise ValueError("gold answer must be non-empty")


@dataclass(frozen=True)
class DatasetFile:
    records: tuple
    source_path: str

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


_REQUIRED_KEYS = ("id", "question", "table", "answer", "task")


def _cell_from_json(value, line_no: int) -> Cell:
    if value is None or isinstance(value, str):
        return value
    if isinstance(value, bool):
        raise SchemaError(line_no, "boolean cell values are not supported")
    if isinstance(value, (int, float)):
        return value
    raise SchemaError(line_no, f"unsupported cell type {type(value).__name__}")


def _record_from_json(obj: dict, line_no: int) -> QaRecord:
    for key in _REQUIRED_KEYS:
        if key not in obj:
            raise SchemaError(line_no, f"missing required key {key!r}")
    if not isinstance(obj["id"], str) or not obj["id"]:
        raise SchemaError(line_no, "id must be a non-empty string")
    if not isinstance(obj["question"], str):
        raise SchemaError(line_no, "question must be a string")
    if not isinstance(obj["answer"], str) or not obj["answer"]:
        raise SchemaError(line_no, "answer must be a non-empty string")
    tbl = obj["table"]
    if not isinstance(tbl, dict) or "columns" not in tbl or "rows" not in tbl:
        raise SchemaError(line_no, "table must be an object with columns and rows")
    if not isinstance(tbl["columns"], list) or not all(isinstance(c, str) for c in tbl["columns"]):
        raise SchemaError(line_no, "table.columns must be a list of strings")
    if not isinstance(tbl["rows"], list):
        raise SchemaError(line_no, "table.rows must be a list")
    rows = []
    for row in tbl["rows"]:
        if not isinstance(row, list):
            raise SchemaError(line_no, "each table row must be a list")
        rows.append([_cell_from_json(v, line_no) for v in row])
    try:
        table = Table(tbl["columns"], rows)
    except ValueError as exc:
        raise SchemaError(line_no, str(exc)) from exc
    try:
        task = Task(obj["task"])
    except ValueError:
        raise SchemaError(line_no, f"unknown task {obj['task']!r}") from None
    hint = obj.get("format_hint")
    if hint is not None and not isinstance(hint, str):
        raise SchemaError(line_no, "format_hint must be a string when present")
    return QaRecord(
        id=obj["id"],
        question=obj["question"],
        table=table,
        gold_answer=obj["answer"],
        task=task,
        answer_format_hint=hint,
    )


def load_dataset(path: str | Path, fmt: str = "jsonl") -> DatasetFile:
    """Load a JSONL dataset file, preserving record order.

    Raises SchemaError with the offending line number on malformed lines,
    and DuplicateIdError when an id repeats. Blank lines are skipped.
    """
    if fmt != "jsonl":
        raise ValueError(f"unsupported dataset format: {fmt}")
    path = Path(path)
    records = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise SchemaError(line_no, "each line must be a JSON object")
            rec = _record_from_json(obj, line_no)
            if rec.id in seen:
                raise DuplicateIdError(rec.id)
            seen.add(rec.id)
            records.append(rec)
    return DatasetFile(records=tuple(records), source_path=str(path))


def _cell_to_markdown(cell: Cell) -> str:
    if cell is None:
        return ""
    return str(cell)


def table_to_json_obj(table: Table) -> dict:
    """The json_compact object form: {"columns": [...], "data": [[...]]}."""
    return {"columns": list(table.columns), "data": [list(r) for r in table.rows]}


def render_table(table: Table, style: str = MARKDOWN) -> str:
    """Serialize a table deterministically for prompts (markdown) or the
    machine channel (json_compact)."""
    if style == MARKDOWN:
        header = "| " + " | ".join(table.columns) + " |"
        sep = "| " + " | ".join("---" for _ in table.columns) + " |"
        lines = [header, sep]
        for row in table.rows:
            lines.append("| " + " | ".join(_cell_to_markdown(c) for c in row) + " |")
        return "\n".join(lines)
    if style == JSON_COMPACT:
        return json.dumps(table_to_json_obj(table), separators=(",", ":"), ensure_ascii=False)
    raise ValueError(f"unknown render style: {style}")


def table_from_json_obj(obj) -> Table:
    if not isinstance(obj, dict):
        raise ParseError("table JSON must be an object")
    if "columns" not in obj or "data" not in obj:
        raise ParseError("table JSON must have 'columns' and 'data' keys")
    columns = obj["columns"]
    data = obj["data"]
    if not isinstance(columns, list) or not all(isinstance(c, str) for c in columns):
        raise ParseError("'columns' must be a list of strings")
    if not isinstance(data, list) or not all(isinstance(r, list) for r in data):
        raise ParseError("'data' must be a list of rows")
    for row in data:
        for cell in row:
            if isinstance(cell, bool) or not (cell is None or isinstance(cell, (str, int, float))):
                raise ParseError(f"unsupported cell value {cell!r}")
    try:
        return Table(columns, data)
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def parse_rendered_table(text: str, style: str = JSON_COMPACT) -> Table:
    """Inverse of render_table(json_compact) on its image."""
    if style != JSON_COMPACT:
        raise ValueError(f"unsupported parse style: {style}")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}") from exc
    return table_from_json_obj(obj)
