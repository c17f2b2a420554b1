"""Acceptance gate: one test per contract-level criterion, each printing a
single pass/fail line. Runs entirely against the scripted mock backend and
the stub wire-protocol harness; no real sandbox package is required."""

import contextlib
import json
import math
import random
import string
import sys

import yaml
from click.testing import CliRunner

from mom import rollout_engine, tts_eval
from mom.cli import main as cli_main
from mom.grpo_core import ObjectiveInputs, RewardGroup, advantages, grpo_objective
from mom.llm_gateway import mock_from_trace
from mom.reward_suite import (
    ANSWER_WEIGHTS,
    CODE_WEIGHTS,
    PLAN_WEIGHTS,
    bleu,
    exact_match,
)
from mom.rollout_engine import ALL_SUCCESSES, RolloutConfig, Stage, rollout
from mom.table_core import QaRecord, Table, Task
from mom.tts_eval import TtsConfig, TtsMode, run_parallel, run_sequential, run_single

from helpers import write_jsonl
from oracles import oracle_bleu, oracle_exact_match, oracle_grpo_objective
from test_reward_suite import BLEU_CORPUS, _em_corpus

PLAN_MATCH = "contains:analysis plan with at most 4 steps"
CODE_MATCH = "contains:The planner already made a plan"
ANSWER_MATCH = "contains:**Code output**"
RETRY_MATCH = "contains:Your previous code failed to execute"

PLAN_TEXT = "<plan>1. inspect the table\n2. compute the value</plan>"
GOOD_CODE = "```python\nprint('ok')\n```"


# (criterion name, passed) records drained by the conftest report hook,
# which prints one [PASS]/[FAIL] line per criterion outside pytest capture
RESULTS = []


@contextlib.contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        RESULTS.append((name, False))
        raise
    RESULTS.append((name, True))


def scripted_backend(answer_text, repeat_answers=True):
    return mock_from_trace([
        {"matcher": PLAN_MATCH, "response": PLAN_TEXT, "repeatable": True},
        {"matcher": CODE_MATCH, "response": GOOD_CODE, "repeatable": True},
        {"matcher": ANSWER_MATCH, "response": f"<answer>{answer_text}</answer>",
         "repeatable": repeat_answers},
    ])


def test_reward_constant_fidelity():
    with criterion("reward-constant fidelity"):
        assert PLAN_WEIGHTS == {"fmt": 0.1, "bleu": 0.9}
        assert CODE_WEIGHTS == {"fmt": 0.1, "exec": 0.2, "op": 0.2, "out": 0.5}
        assert ANSWER_WEIGHTS == {"fmt": 0.1, "em": 0.9}


def test_rollout_accounting(qa_record, stub_sandbox):
    with criterion("rollout accounting (32 / 8 / 32)"):
        expected = {Stage.PLAN: 32, Stage.CODE: 8, Stage.ANSWER: 32}
        for stage, count in expected.items():
            cfg = RolloutConfig.for_stage(stage)
            tree = rollout(qa_record, cfg, scripted_backend("reds"), stub_sandbox)
            assert len(tree.trajectories) == count
            assert len(tree.trajectories) == cfg.alpha * cfg.beta * cfg.gamma


def test_dataset_d_soundness(stub_sandbox):
    with criterion("pseudo-gold dataset soundness"):
        records = [
            QaRecord(
                id=f"q{i}", question=f"question {i}?",
                table=Table(["k", "v"], [["a", i], ["b", i + 1]]),
                gold_answer=f"gold-{i}", task=Task.FACT_CHECKING)
            for i in range(10)
        ]
        planted = {r.id for i, r in enumerate(records) if i % 2 == 0}
        cfg = RolloutConfig(1, 2, 1)
        for rec in records:
            answer = rec.gold_answer if rec.id in planted else "wrong"
            tree = rollout(rec, cfg, scripted_backend(answer), stub_sandbox)
            gold = rollout_engine.extract_pseudo_gold(tree, ALL_SUCCESSES)
            if rec.id in planted:
                assert gold, rec.id
                for pg in gold:
                    assert exact_match(pg.answer.text, rec.gold_answer) == 1.0
            else:
                assert gold == [], rec.id


def test_grpo_math():
    with criterion("group-normalized policy objective math"):
        adv = advantages(RewardGroup((1, 1, 0, 0))).advantages
        for got, want in zip(adv, (1.0, 1.0, -1.0, -1.0)):
            assert abs(got - want) < 1e-9

        rng = random.Random(41)
        for _ in range(1000):
            g = rng.randint(2, 16)
            rewards = [rng.uniform(-5, 5) for _ in range(g)]
            a = advantages(RewardGroup(rewards)).advantages
            assert abs(sum(a) / g) < 1e-9

        for _ in range(100):
            g = rng.randint(2, 10)
            inp = ObjectiveInputs(
                logprob_new=[rng.uniform(-10, -1) for _ in range(g)],
                logprob_old=[rng.uniform(-10, -1) for _ in range(g)],
                logprob_ref=[rng.uniform(-10, -1) for _ in range(g)],
                advantages=[rng.uniform(-2, 2) for _ in range(g)],
                epsilon=0.2, kl_coeff=0.1)
            got = grpo_objective(inp)
            want = oracle_grpo_objective(inp.logprob_new, inp.logprob_old,
                                         inp.logprob_ref, inp.advantages,
                                         inp.epsilon, inp.kl_coeff)
            assert abs(got.surrogate - want["surrogate"]) < 1e-9
            assert abs(got.kl - want["kl"]) < 1e-9
            assert abs(got.total - want["total"]) < 1e-9

        for _ in range(10_000):
            d = rng.uniform(-6, 6)
            assert math.exp(d) - d - 1.0 >= 0.0


def test_bleu_oracle_agreement():
    with criterion("sentence-BLEU oracle agreement"):
        assert len(BLEU_CORPUS) == 20
        for cand, ref, frozen in BLEU_CORPUS:
            got = bleu(cand, ref)
            assert abs(got - oracle_bleu(cand, ref)) < 1e-6
            assert abs(got - frozen) < 1e-6

        rng = random.Random(43)
        alphabet = string.ascii_letters + string.digits + " .,%()-"
        for _ in range(200):
            n = rng.randint(1, 40)
            s = "".join(rng.choice(alphabet) for _ in range(n))
            if not any(c.strip() for c in s):
                s = s + "x"
            assert abs(bleu(s, s) - 1.0) < 1e-12, repr(s)


def test_em_normalizer_agreement():
    with criterion("answer-normalizer oracle agreement"):
        corpus = _em_corpus()
        assert len(corpus) >= 200
        for pred, gold in corpus:
            assert exact_match(pred, gold) == oracle_exact_match(pred, gold), \
                (pred, gold)


def _result_bytes(result):
    return json.dumps({
        "answer": result.answer.text if result.answer else None,
        "marker": result.marker,
        "sandbox_calls": result.sandbox_calls,
    }, sort_keys=True).encode()


def test_tts_contracts(qa_record, stub_sandbox):
    with criterion("test-time scaling contracts"):
        single = run_single(qa_record, scripted_backend("reds"), stub_sandbox)
        par1 = run_parallel(qa_record, scripted_backend("reds"), stub_sandbox,
                            TtsConfig(mode=TtsMode.PARALLEL, n_branches=1))
        assert _result_bytes(single) == _result_bytes(par1)
        # wall-clock timing aside, the winning trajectory is identical
        assert single.trajectory.answer == par1.trajectory.answer
        assert single.trajectory.correct == par1.trajectory.correct
        assert single.trajectory.exec_outcome.status == par1.trajectory.exec_outcome.status

        backend = mock_from_trace([
            {"matcher": PLAN_MATCH, "response": PLAN_TEXT, "repeatable": True},
            {"matcher": CODE_MATCH, "response": GOOD_CODE, "repeatable": True},
            {"matcher": ANSWER_MATCH, "response": "<answer>A</answer>"},
            {"matcher": ANSWER_MATCH, "response": "<answer>A</answer>"},
            {"matcher": ANSWER_MATCH, "response": "<answer>B</answer>"},
        ])
        voted = run_parallel(qa_record, backend, stub_sandbox,
                             TtsConfig(mode=TtsMode.PARALLEL, n_branches=3))
        assert voted.answer.text == "A"

        backend = mock_from_trace([
            {"matcher": PLAN_MATCH, "response": PLAN_TEXT, "repeatable": True},
            {"matcher": RETRY_MATCH, "response": "```python\n2/0\n```"},
            {"matcher": RETRY_MATCH, "response": GOOD_CODE},
            {"matcher": CODE_MATCH, "response": "```python\n1/0\n```"},
            {"matcher": ANSWER_MATCH, "response": "<answer>reds</answer>"},
        ])
        seq = run_sequential(qa_record, backend, stub_sandbox,
                             TtsConfig(mode=TtsMode.SEQUENTIAL, max_code_retries=5))
        assert seq.sandbox_calls == 3
        assert seq.answer is not None


GOLDEN_DATASET = [
    {"id": "fc1", "question": "did the reds win?",
     "table": {"columns": ["team", "wins"], "rows": [["reds", 3], ["blues", 1]]},
     "answer": "yes", "task": "FC"},
    {"id": "fc2", "question": "did the blues lose?",
     "table": {"columns": ["team", "wins"], "rows": [["reds", 3], ["blues", 1]]},
     "answer": "yes", "task": "FC"},
    {"id": "nr1", "question": "total wins?",
     "table": {"columns": ["team", "wins"], "rows": [["reds", 3], ["blues", 1]]},
     "answer": "4", "task": "NR"},
]

GOLDEN_TRACE = [
    {"matcher": PLAN_MATCH, "response": PLAN_TEXT, "repeatable": True},
    {"matcher": CODE_MATCH, "response": GOOD_CODE, "repeatable": True},
    {"matcher": ANSWER_MATCH, "response": "<answer>yes</answer>"},
    {"matcher": ANSWER_MATCH, "response": "<answer>yes</answer>"},
    {"matcher": ANSWER_MATCH, "response": "<answer>7</answer>"},
]


def test_end_to_end_golden_run(tmp_path):
    with criterion("end-to-end golden run (FC 100.00 / NR 0.00 / avg 66.67)"):
        from helpers import STUB_HARNESS
        data = tmp_path / "data.jsonl"
        write_jsonl(data, GOLDEN_DATASET)
        trace = tmp_path / "trace.yaml"
        trace.write_text(yaml.safe_dump(GOLDEN_TRACE))
        config = tmp_path / "config.yaml"
        config.write_text(yaml.safe_dump({
            "sandbox": {"harness_cmd": [sys.executable, str(STUB_HARNESS)],
                        "timeout_s": 5},
        }))

        runner = CliRunner()
        reports = []
        for run in ("a", "b"):
            out = tmp_path / run
            res = runner.invoke(cli_main, [
                "--config", str(config), "--mock-trace", str(trace),
                "--seed", "0", "--out", str(out),
                "infer", "--input", str(data),
            ], catch_exceptions=False)
            assert res.exit_code == 0, res.output
            res = runner.invoke(cli_main, [
                "--out", str(out),
                "eval", "--input", str(data), "--pred", str(out / "predictions.jsonl"),
            ], catch_exceptions=False)
            assert res.exit_code == 0, res.output
            reports.append((
                (out / "predictions.jsonl").read_bytes(),
                (out / "report.json").read_bytes(),
            ))

        assert reports[0] == reports[1]
        report = json.loads(reports[0][1])
        assert report["per_task"]["FC"]["accuracy"] == 100.0
        assert report["per_task"]["NR"]["accuracy"] == 0.0
        assert report["weighted_avg"] == 66.67
