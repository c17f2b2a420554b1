"""Prompt construction for the planner / coder / answerer roles and strict
extraction of their tagged outputs.

Templates live as data files under templates/ with {instruction}, {plan} and
{code_output} placeholders; golden tests freeze the exact wording.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources

from .errors import FormatError
from .table_core import MARKDOWN, QaRecord, render_table

MAX_PLAN_STEPS = 4

_PLACEHOLDERS = ("{instruction}", "{plan}", "{code_output}")


class Role(str, Enum):
    PLANNER = "planner"
    CODER = "coder"
    ANSWERER = "answerer"


@dataclass(frozen=True)
class Plan:
    text: str
    step_count: int

    def __post_init__(self):
        if not self.text:
            raise ValueError("plan text must be non-empty")
        if self.step_count < 1:
            raise ValueError("step_count must be >= 1")


@dataclass(frozen=True)
class CodeArtifact:
    source: str
    fence_language_hint: str = ""

    def __post_init__(self):
        if not self.source:
            raise ValueError("code source must be non-empty")


@dataclass(frozen=True)
class FinalAnswer:
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("answer text must be non-empty after trimming")


@dataclass(frozen=True)
class AgentPrompt:
    role: Role
    system: str
    user: str

    def __post_init__(self):
        for field_text in (self.system, self.user):
            for ph in _PLACEHOLDERS:
                if ph in field_text:
                    raise ValueError(f"unfilled placeholder {ph} in prompt")


def _template(name: str) -> str:
    return resources.files("mom.templates").joinpath(name).read_text(encoding="utf-8")


def _instruction(rec: QaRecord) -> str:
    parts = [rec.question]
    if rec.answer_format_hint:
        parts.append(f"Answer format: {rec.answer_format_hint}")
    parts.append(render_table(rec.table, MARKDOWN))
    return "\n\n".join(parts)


def _fill(template: str, **values: str) -> str:
    out = template
    for key, value in values.items():
        out = out.replace("{" + key + "}", value)
    return out.rstrip("\n")


def build_plan_prompt(rec: QaRecord) -> AgentPrompt:
    return AgentPrompt(
        role=Role.PLANNER,
        system=_template("planner.system.txt").rstrip("\n"),
        user=_fill(_template("planner.user.txt"), instruction=_instruction(rec)),
    )


def build_code_prompt(rec: QaRecord, plan: Plan) -> AgentPrompt:
    return AgentPrompt(
        role=Role.CODER,
        system=_template("coder.system.txt").rstrip("\n"),
        user=_fill(_template("coder.user.txt"), instruction=_instruction(rec), plan=plan.text),
    )


def describe_exec_for_prompt(exec_outcome) -> str:
    """Render an ExecOutcome as the {code_output} prompt section.

    Successful runs surface the checkpoint tables (machine-format JSON, one
    per line) when present, else the captured stdout. Failures surface the
    error text so the answerer can choose to ignore it.
    """
    from .exec_orchestrator import ExecStatus  # local import to avoid a cycle
    from .table_core import JSON_COMPACT

    if exec_outcome.status == ExecStatus.SUCCESS:
        sections = []
        if exec_outcome.intermediate_tables:
            tables = "\n".join(
                render_table(t, JSON_COMPACT) for t in exec_outcome.intermediate_tables
            )
            sections.append("Intermediate tables:\n" + tables)
        if exec_outcome.stdout_text.strip():
            sections.append(exec_outcome.stdout_text.rstrip("\n"))
        return "\n\n".join(sections) if sections else "(no output)"
    return f"Execution failed ({exec_outcome.status.value}): {exec_outcome.error_text}".rstrip()


def build_answer_prompt(rec: QaRecord, plan: Plan, exec_outcome) -> AgentPrompt:
    return AgentPrompt(
        role=Role.ANSWERER,
        system=_template("answerer.system.txt").rstrip("\n"),
        user=_fill(
            _template("answerer.user.txt"),
            instruction=_instruction(rec),
            plan=plan.text,
            code_output=describe_exec_for_prompt(exec_outcome),
        ),
    )


_STEP_RE = re.compile(r"^\s*(\d+)[.)]", re.MULTILINE)


def _extract_tagged(raw: str, tag: str) -> str:
    open_tag, close_tag = f"<{tag}>", f"</{tag}>"
    start = raw.find(open_tag)
    if start < 0:
        raise FormatError(FormatError.MISSING_TAG, f"no {open_tag} in output")
    end = raw.find(close_tag, start + len(open_tag))
    if end < 0:
        raise FormatError(FormatError.UNCLOSED_TAG, f"{open_tag} never closed")
    body = raw[start + len(open_tag):end].strip()
    if not body:
        raise FormatError(FormatError.EMPTY_BODY, f"empty {open_tag} body")
    return body


def extract_plan(raw: str) -> Plan:
    """Content of the first <plan></plan> pair; step_count counts numbered
    lines (clamped to >= 1 for free-form plans)."""
    body = _extract_tagged(raw, "plan")
    steps = len(_STEP_RE.findall(body))
    return Plan(text=body, step_count=max(1, steps))


_FENCE_RE = re.compile(r"```([^\n`]*)\n(.*?)```", re.DOTALL)


def extract_code(raw: str) -> CodeArtifact:
    """Content of the first triple-backtick fenced block."""
    m = _FENCE_RE.search(raw)
    if m is None:
        raise FormatError(FormatError.MISSING_FENCE, "no fenced code block in output")
    source = m.group(2).strip("\n")
    if not source.strip():
        raise FormatError(FormatError.EMPTY_BODY, "empty fenced code block")
    return CodeArtifact(source=source, fence_language_hint=m.group(1).strip())


def extract_answer(raw: str) -> FinalAnswer:
    """Content of the first <answer></answer> pair, trimmed."""
    return FinalAnswer(text=_extract_tagged(raw, "answer"))


_EXTRACTORS = {
    Role.PLANNER: extract_plan,
    Role.CODER: extract_code,
    Role.ANSWERER: extract_answer,
}


def extractor_for(role: Role):
    return _EXTRACTORS[role]
