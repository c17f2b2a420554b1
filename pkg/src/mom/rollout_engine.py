"""Fan-out rollout generation: alpha plans x beta codes x gamma answers per
question, success filtering against the gold answer, and emission of the
pseudo-gold training dataset.

Every branch is materialized, including failed extractions and executions,
so the trajectory count is always exactly alpha * beta * gamma.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

from . import agent_roles
from .agent_roles import CodeArtifact, FinalAnswer, Plan
from .errors import FormatError
from .exec_orchestrator import ExecOutcome, ExecStatus, SandboxConfig, execute
from .llm_gateway import ChatRequest, SamplingParams, complete
from .reward_suite import exact_match
from .table_core import QaRecord, table_to_json_obj


class Stage(str, Enum):
    PLAN = "plan"
    CODE = "code"
    ANSWER = "answer"


# Per-stage (alpha, beta, gamma) fan-out defaults.
STAGE_FANOUT = {
    Stage.PLAN: (8, 4, 1),
    Stage.CODE: (1, 8, 1),
    Stage.ANSWER: (1, 4, 8),
}

DEFAULT_ROLLOUT_TEMP = 1.0


@dataclass(frozen=True)
class RolloutConfig:
    alpha: int
    beta: int
    gamma: int
    temps: tuple = (DEFAULT_ROLLOUT_TEMP, DEFAULT_ROLLOUT_TEMP, DEFAULT_ROLLOUT_TEMP)
    max_tokens: int = 2048
    stage: Stage | None = None

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 1:
            raise ValueError("alpha, beta, gamma must all be >= 1")
        object.__setattr__(self, "temps", tuple(float(t) for t in self.temps))

    @classmethod
    def for_stage(cls, stage: Stage, temps: tuple = None, max_tokens: int = 2048) -> "RolloutConfig":
        a, b, g = STAGE_FANOUT[stage]
        kwargs = {"max_tokens": max_tokens, "stage": stage}
        if temps is not None:
            kwargs["temps"] = temps
        return cls(a, b, g, **kwargs)


@dataclass(frozen=True)
class Trajectory:
    plan_idx: int
    code_idx: int
    answer_idx: int
    plan: Plan | None
    code: CodeArtifact | None
    exec_outcome: ExecOutcome | None
    answer: FinalAnswer | None
    correct: bool
    failure: str | None = None
    raw_answer: str | None = None


@dataclass(frozen=True)
class RolloutTree:
    record: QaRecord
    plans: tuple            # alpha entries, Plan or None
    codes: tuple            # alpha x beta, CodeArtifact or None
    execs: tuple            # alpha x beta, ExecOutcome or None
    answers: tuple          # alpha x beta x gamma, FinalAnswer or None
    trajectories: tuple     # flattened, ordered by (i, j, k)

    @property
    def record_id(self) -> str:
        return self.record.id

    @property
    def n_successes(self) -> int:
        return sum(1 for t in self.trajectories if t.correct)


@dataclass(frozen=True)
class PseudoGoldRecord:
    record_id: str
    question: str
    table_obj: dict
    plan: Plan
    code: CodeArtifact
    answer: FinalAnswer
    exec_outcome: ExecOutcome
    plan_idx: int
    code_idx: int
    answer_idx: int


def _sample_texts(backend, prompt, n: int, temperature: float, max_tokens: int) -> list:
    req = ChatRequest(
        system=prompt.system,
        user=prompt.user,
        params=SamplingParams(temperature=temperature, max_tokens=max_tokens),
        n_samples=n,
    )
    return [s.text for s in complete(req, backend)]


def rollout(rec: QaRecord, cfg: RolloutConfig, backend,
            sandbox: SandboxConfig) -> RolloutTree:
    """Expand the full fan-out for one record. Extraction failures consume
    their branch without resampling; transport and spawn errors propagate."""
    tau_p, tau_c, tau_a = cfg.temps
    plan_prompt = agent_roles.build_plan_prompt(rec)
    raw_plans = _sample_texts(backend, plan_prompt, cfg.alpha, tau_p, cfg.max_tokens)

    plans = []
    codes = []
    execs = []
    answers = []
    trajectories = []
    for i, raw_plan in enumerate(raw_plans):
        plan_failure = None
        try:
            plan = agent_roles.extract_plan(raw_plan)
        except FormatError as exc:
            plan, plan_failure = None, f"plan extraction: {exc}"
        plans.append(plan)

        raw_codes = None
        if plan is not None:
            code_prompt = agent_roles.build_code_prompt(rec, plan)
            raw_codes = _sample_texts(backend, code_prompt, cfg.beta, tau_c, cfg.max_tokens)

        code_row = []
        exec_row = []
        answer_row = []
        for j in range(cfg.beta):
            code = None
            outcome = None
            failure = plan_failure
            if plan is not None:
                try:
                    code = agent_roles.extract_code(raw_codes[j])
                except FormatError as exc:
                    failure = f"code extraction: {exc}"
                if code is not None:
                    outcome = execute(code, rec.table, sandbox)
            code_row.append(code)
            exec_row.append(outcome)

            raw_answers = None
            if outcome is not None:
                answer_prompt = agent_roles.build_answer_prompt(rec, plan, outcome)
                raw_answers = _sample_texts(
                    backend, answer_prompt, cfg.gamma, tau_a, cfg.max_tokens)

            answer_cell = []
            for k in range(cfg.gamma):
                answer = None
                traj_failure = failure
                raw_answer = None
                if raw_answers is not None:
                    raw_answer = raw_answers[k]
                    try:
                        answer = agent_roles.extract_answer(raw_answer)
                    except FormatError as exc:
                        traj_failure = f"answer extraction: {exc}"
                correct = answer is not None and \
                    exact_match(answer.text, rec.gold_answer) == 1.0
                answer_cell.append(answer)
                trajectories.append(Trajectory(
                    plan_idx=i, code_idx=j, answer_idx=k,
                    plan=plan, code=code, exec_outcome=outcome,
                    answer=answer, correct=correct, failure=traj_failure,
                    raw_answer=raw_answer,
                ))
            answer_row.append(tuple(answer_cell))
        codes.append(tuple(code_row))
        execs.append(tuple(exec_row))
        answers.append(tuple(answer_row))

    return RolloutTree(
        record=rec,
        plans=tuple(plans),
        codes=tuple(codes),
        execs=tuple(execs),
        answers=tuple(answers),
        trajectories=tuple(trajectories),
    )


FIRST_SUCCESS = "first_success"
ALL_SUCCESSES = "all_successes"


def extract_pseudo_gold(tree: RolloutTree, policy: str = FIRST_SUCCESS) -> list:
    """Pseudo-gold records from successful trajectories.

    first_success keeps only the lexicographically first (i, j, k) success;
    all_successes keeps one record per distinct (i, j) pair with at least one
    correct answer (the lowest correct k of that pair).
    """
    if policy not in (FIRST_SUCCESS, ALL_SUCCESSES):
        raise ValueError(f"unknown policy: {policy}")
    successes = [t for t in tree.trajectories if t.correct]
    if not successes:
        return []
    if policy == FIRST_SUCCESS:
        chosen = [successes[0]]
    else:
        seen = set()
        chosen = []
        for t in successes:
            key = (t.plan_idx, t.code_idx)
            if key not in seen:
                seen.add(key)
                chosen.append(t)
    return [
        PseudoGoldRecord(
            record_id=tree.record.id,
            question=tree.record.question,
            table_obj=table_to_json_obj(tree.record.table),
            plan=t.plan,
            code=t.code,
            answer=t.answer,
            exec_outcome=t.exec_outcome,
            plan_idx=t.plan_idx,
            code_idx=t.code_idx,
            answer_idx=t.answer_idx,
        )
        for t in chosen
    ]


def _stage_line(rec: PseudoGoldRecord, stage: Stage) -> dict:
    if stage == Stage.PLAN:
        return {
            "id": rec.record_id,
            "question": rec.question,
            "table": rec.table_obj,
            "target_plan": rec.plan.text,
        }
    if stage == Stage.CODE:
        return {
            "id": rec.record_id,
            "question": rec.question,
            "table": rec.table_obj,
            "plan": rec.plan.text,
            "target_code": rec.code.source,
            "target_code_output": rec.exec_outcome.stdout_text,
        }
    return {
        "id": rec.record_id,
        "question": rec.question,
        "plan": rec.plan.text,
        "intermediate_tables": [
            table_to_json_obj(t) for t in rec.exec_outcome.intermediate_tables
        ],
        "code_stdout": rec.exec_outcome.stdout_text,
        "target_answer": rec.answer.text,
    }


def emit_dataset(records: Sequence[PseudoGoldRecord], stage: Stage,
                 path: str | Path) -> int:
    """Write one JSONL line per pseudo-gold record, ordered by
    (record_id, i, j, k). Returns the number of lines written."""
    ordered = sorted(records, key=lambda r: (r.record_id, r.plan_idx, r.code_idx, r.answer_idx))
    lines = [json.dumps(_stage_line(r, stage), ensure_ascii=False) for r in ordered]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return len(lines)
