"""Test-time scaling (single pass, parallel self-consistency, sequential
regenerate-on-error) and benchmark evaluation with per-task accuracy."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from . import agent_roles
from .agent_roles import CodeArtifact, FinalAnswer, Plan
from .errors import FormatError
from .exec_orchestrator import ExecOutcome, ExecStatus, SandboxConfig, execute
from .llm_gateway import ChatRequest, SamplingParams, complete
from .reward_suite import exact_match, normalize_answer
from .rollout_engine import Trajectory
from .table_core import DatasetFile, QaRecord, Task

ALL_BRANCHES_FAILED = "all_branches_failed"

DEFAULT_INFER_TEMP = 0.0
DEFAULT_PARALLEL_TEMP = 1.0
DEFAULT_PARALLEL_BRANCHES = 8
DEFAULT_MAX_CODE_RETRIES = 5


class TtsMode(str, Enum):
    SINGLE = "single"
    PARALLEL = "parallel"
    SEQUENTIAL = "sequential"


@dataclass(frozen=True)
class TtsConfig:
    mode: TtsMode = TtsMode.SINGLE
    n_branches: int = DEFAULT_PARALLEL_BRANCHES
    parallel_temp: float = DEFAULT_PARALLEL_TEMP
    max_code_retries: int = DEFAULT_MAX_CODE_RETRIES
    base_temp: float = DEFAULT_INFER_TEMP
    max_tokens: int = 2048

    def __post_init__(self):
        if self.n_branches < 1:
            raise ValueError("n_branches must be >= 1")
        if self.max_code_retries < 1:
            raise ValueError("max_code_retries must be >= 1")


@dataclass(frozen=True)
class TtsResult:
    answer: FinalAnswer | None
    trajectory: Trajectory | None = None
    marker: str | None = None
    sandbox_calls: int = 0


def _one_text(backend, prompt, temperature: float, max_tokens: int) -> str:
    req = ChatRequest(
        system=prompt.system,
        user=prompt.user,
        params=SamplingParams(temperature=temperature, max_tokens=max_tokens),
        n_samples=1,
    )
    return complete(req, backend)[0].text


def _trajectory(plan, code, outcome, answer, correct, failure):
    return Trajectory(
        plan_idx=0, code_idx=0, answer_idx=0,
        plan=plan, code=code, exec_outcome=outcome,
        answer=answer, correct=correct, failure=failure,
    )


def run_single(rec: QaRecord, backend, sandbox: SandboxConfig,
               cfg: TtsConfig = TtsConfig(), plan_temp: float | None = None) -> TtsResult:
    """One plan, one code, one execution, one answer. Failures surface as a
    result with no answer, never as exceptions (transport/spawn aside)."""
    temp = cfg.base_temp if plan_temp is None else plan_temp
    raw_plan = _one_text(backend, agent_roles.build_plan_prompt(rec), temp, cfg.max_tokens)
    try:
        plan = agent_roles.extract_plan(raw_plan)
    except FormatError as exc:
        return TtsResult(answer=None,
                         trajectory=_trajectory(None, None, None, None, False,
                                                f"plan extraction: {exc}"))
    raw_code = _one_text(backend, agent_roles.build_code_prompt(rec, plan),
                         cfg.base_temp, cfg.max_tokens)
    try:
        code = agent_roles.extract_code(raw_code)
    except FormatError as exc:
        return TtsResult(answer=None,
                         trajectory=_trajectory(plan, None, None, None, False,
                                                f"code extraction: {exc}"))
    outcome = execute(code, rec.table, sandbox)
    return _answer_stage(rec, backend, cfg, plan, code, outcome, sandbox_calls=1)


def _answer_stage(rec, backend, cfg, plan, code, outcome, sandbox_calls) -> TtsResult:
    raw_answer = _one_text(backend, agent_roles.build_answer_prompt(rec, plan, outcome),
                           cfg.base_temp, cfg.max_tokens)
    try:
        answer = agent_roles.extract_answer(raw_answer)
    except FormatError as exc:
        return TtsResult(
            answer=None, sandbox_calls=sandbox_calls,
            trajectory=_trajectory(plan, code, outcome, None, False,
                                   f"answer extraction: {exc}"))
    correct = exact_match(answer.text, rec.gold_answer) == 1.0
    return TtsResult(
        answer=answer, sandbox_calls=sandbox_calls,
        trajectory=_trajectory(plan, code, outcome, answer, correct, None))


def run_parallel(rec: QaRecord, backend, sandbox: SandboxConfig,
                 cfg: TtsConfig = TtsConfig(mode=TtsMode.PARALLEL)) -> TtsResult:
    """n_branches independent single runs (planner at parallel_temp),
    aggregated by majority vote over normalized answers. Failed branches
    abstain; ties break to the lowest branch index."""
    branch_results = [
        run_single(rec, backend, sandbox, cfg, plan_temp=cfg.parallel_temp)
        for _ in range(cfg.n_branches)
    ]
    votes = {}
    for idx, res in enumerate(branch_results):
        if res.answer is None:
            continue
        key = normalize_answer(res.answer.text)
        if key not in votes:
            votes[key] = [0, idx, res.answer]
        votes[key][0] += 1
    calls = sum(r.sandbox_calls for r in branch_results)
    if not votes:
        return TtsResult(answer=None, marker=ALL_BRANCHES_FAILED, sandbox_calls=calls)
    _, first_idx, answer = max(votes.values(), key=lambda v: (v[0], -v[1]))
    winner = branch_results[first_idx]
    return TtsResult(answer=answer, trajectory=winner.trajectory, sandbox_calls=calls)


RETRY_SUFFIX_TEMPLATE = (
    "\n\nYour previous code failed to execute.\n"
    "Previous code:\n```python\n{code}\n```\n"
    "Execution error: {error}\n"
    "Fix the problem and write the full corrected code."
)


def run_sequential(rec: QaRecord, backend, sandbox: SandboxConfig,
                   cfg: TtsConfig = TtsConfig(mode=TtsMode.SEQUENTIAL)) -> TtsResult:
    """Regenerate code on execution failure, feeding back the prior code and
    error text, until success or max_code_retries attempts. Answering then
    proceeds with the last outcome either way."""
    raw_plan = _one_text(backend, agent_roles.build_plan_prompt(rec),
                         cfg.base_temp, cfg.max_tokens)
    try:
        plan = agent_roles.extract_plan(raw_plan)
    except FormatError as exc:
        return TtsResult(answer=None,
                         trajectory=_trajectory(None, None, None, None, False,
                                                f"plan extraction: {exc}"))
    base_prompt = agent_roles.build_code_prompt(rec, plan)
    user = base_prompt.user
    code = None
    outcome = None
    calls = 0
    for _ in range(cfg.max_code_retries):
        raw_code = _one_text(
            backend,
            agent_roles.AgentPrompt(role=base_prompt.role, system=base_prompt.system, user=user),
            cfg.base_temp, cfg.max_tokens)
        try:
            code = agent_roles.extract_code(raw_code)
        except FormatError as exc:
            code = None
            outcome = ExecOutcome(status=ExecStatus.RUNTIME_ERROR,
                                  error_text=f"code extraction failed: {exc}")
        else:
            outcome = execute(code, rec.table, sandbox)
            calls += 1
        if outcome.status == ExecStatus.SUCCESS:
            break
        prior_source = code.source if code is not None else raw_code
        user = base_prompt.user + RETRY_SUFFIX_TEMPLATE.format(
            code=prior_source, error=outcome.error_text)
    return _answer_stage(rec, backend, cfg, plan, code, outcome, sandbox_calls=calls)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TaskStats:
    n: int
    correct: int

    @property
    def accuracy_pct(self) -> float:
        return 100.0 * self.correct / self.n


@dataclass(frozen=True)
class EvalReport:
    per_task: dict               # Task -> TaskStats, only non-empty tasks
    weighted_avg_pct: float
    verdicts: dict               # record id -> bool

    @property
    def n_questions(self) -> int:
        return sum(s.n for s in self.per_task.values())


def evaluate(dataset: DatasetFile, answers: Mapping[str, FinalAnswer | None]) -> EvalReport:
    """Per-question verdict by normalized exact match; per-task accuracies
    plus a question-count-weighted average. Empty task buckets are absent."""
    counts = {}
    verdicts = {}
    for rec in dataset.records:
        ans = answers.get(rec.id)
        ok = ans is not None and exact_match(ans.text, rec.gold_answer) == 1.0
        verdicts[rec.id] = ok
        n, c = counts.get(rec.task, (0, 0))
        counts[rec.task] = (n + 1, c + (1 if ok else 0))
    per_task = {task: TaskStats(n=n, correct=c) for task, (n, c) in counts.items()}
    total = sum(n for n, _ in counts.values())
    correct = sum(c for _, c in counts.values())
    weighted = 100.0 * correct / total if total else 0.0
    return EvalReport(per_task=per_task, weighted_avg_pct=weighted, verdicts=verdicts)


_TASK_ORDER = [Task.FACT_CHECKING, Task.NUMERICAL_REASONING, Task.DATA_ANALYSIS, Task.OTHER]


def report_to_json_obj(report: EvalReport) -> dict:
    per_task = {
        task.value: {
            "n": stats.n,
            "correct": stats.correct,
            "accuracy": round(stats.accuracy_pct, 2),
        }
        for task, stats in sorted(report.per_task.items(),
                                  key=lambda kv: _TASK_ORDER.index(kv[0]))
    }
    return {
        "per_task": per_task,
        "weighted_avg": round(report.weighted_avg_pct, 2),
        "n_questions": report.n_questions,
        "verdicts": {k: bool(v) for k, v in sorted(report.verdicts.items())},
    }


def report_to_text(report: EvalReport) -> str:
    """Fixed-width summary table with 2-decimal accuracies."""
    lines = [f"{'task':<8}{'n':>6}{'correct':>9}{'accuracy':>10}"]
    for task in _TASK_ORDER:
        stats = report.per_task.get(task)
        if stats is None:
            continue
        lines.append(f"{task.value:<8}{stats.n:>6}{stats.correct:>9}"
                     f"{stats.accuracy_pct:>10.2f}")
    lines.append(f"{'avg':<8}{report.n_questions:>6}"
                 f"{sum(s.correct for s in report.per_task.values()):>9}"
                 f"{report.weighted_avg_pct:>10.2f}")
    return "\n".join(lines)
