import math
import random
import string

import pytest
from hypothesis import given, strategies as st

from mom.agent_roles import Plan
from mom.exec_orchestrator import ExecOutcome, ExecStatus
from mom.reward_suite import (
    ANSWER_WEIGHTS,
    CODE_WEIGHTS,
    PLAN_WEIGHTS,
    OpVocabulary,
    RewardBreakdown,
    answer_reward,
    bleu,
    code_reward,
    exact_match,
    fmt_reward,
    normalize_answer,
    op_f1,
    plan_reward,
)
from mom.agent_roles import Role

from oracles import oracle_bleu, oracle_exact_match, oracle_normalize

# Frozen before the build from the independent oracle (tests/oracles.py).
BLEU_CORPUS = [
    ("the cat sat", "the cat sat", 1.0),
    ("the the the the", "the cat sat on", 0.319471552123),
    ("a quick brown fox jumps over the lazy dog",
     "the quick brown fox jumped over the lazy dog", 0.431670010685),
    ("sum the sales column", "sum the sales column and report the total", 0.367879441171),
    ("filter rows where year is 2020", "filter rows where year equals 2020", 0.537284965912),
    ("1. load data 2. group by team 3. count rows",
     "1. load data 2. group by team 3. sum points", 0.824236750265),
    ("hello world", "goodbye world", 0.707106781187),
    ("42", "42", 1.0),
    ("the answer is 42.", "the answer is 42", 0.668740304976),
    ("group by country, then compute mean population",
     "group by country and compute the mean population", 0.307394076476),
    ("a b c d e f g", "a b c d e f g h i j", 0.651439057531),
    ("x", "x y z", 0.135335283237),
    ("completely different words here",
     "nothing shared at all between these", 0.1832556813),
    ("select the top 5 rows sorted by revenue",
     "sort by revenue and select the top 5 rows", 0.524735797761),
    ("merge tables on id", "merge tables on id", 1.0),
    ("print(df.head())", "print(df.head())", 1.0),
    ("sum, then average", "sum then average", 0.451801001805),
    ("one two three", "one two three four five six seven eight", 0.188875602838),
    ("compute the ratio of wins to losses", "compute the win loss ratio", 0.220895911342),
    ("Plan: first filter, second aggregate",
     "plan: first filter, second aggregate", 0.80910671157),
]


class TestBleu:
    def test_identity(self):
        assert bleu("the cat sat", "the cat sat") == pytest.approx(1.0)

    def test_empty_candidate(self):
        assert bleu("", "anything") == 0.0
        assert bleu("", "") == 0.0

    @pytest.mark.parametrize("cand,ref,expected", BLEU_CORPUS)
    def test_frozen_oracle_corpus(self, cand, ref, expected):
        assert bleu(cand, ref) == pytest.approx(expected, abs=1e-6)

    @pytest.mark.parametrize("cand,ref,expected", BLEU_CORPUS)
    def test_live_oracle_agreement(self, cand, ref, expected):
        assert bleu(cand, ref) == pytest.approx(oracle_bleu(cand, ref), abs=1e-6)

    def test_identity_property_200_random(self):
        rng = random.Random(11)
        words = ["alpha", "beta", "42", "sum", "table", "row,", "x.y"]
        for _ in range(200):
            text = " ".join(rng.choices(words, k=rng.randint(1, 12)))
            assert bleu(text, text) == pytest.approx(1.0)

    @given(st.text(max_size=40), st.text(max_size=40))
    def test_bounded(self, a, b):
        assert 0.0 <= bleu(a, b) <= 1.0 + 1e-12


class TestOpF1:
    def test_half_overlap(self):
        cand = "df.groupby('a'); out = df.merge(other)"
        gold = "df.groupby('a'); df.sort_values('b')"
        assert op_f1(cand, gold) == pytest.approx(0.5)

    def test_identical_code(self):
        code = "df.groupby('a').agg('sum')"
        assert op_f1(code, code) == 1.0

    def test_both_vocabulary_free(self):
        assert op_f1("x = 1", "y = 2") == 1.0

    def test_one_empty(self):
        assert op_f1("df.groupby('a')", "x = 1") == 0.0

    def test_bare_call_and_attribute_forms(self):
        vocab = OpVocabulary()
        assert op_f1("filter(rows)", "df.filter") == 1.0

    def test_substring_names_not_matched(self):
        # "sum" inside "summary" must not count
        assert op_f1("summary = 1", "df.sum()") == 0.0

    @given(st.text(max_size=60), st.text(max_size=60))
    def test_symmetric(self, a, b):
        assert op_f1(a, b) == pytest.approx(op_f1(b, a))


EM_CASES = [
    ("Yes", "yes", 1.0),
    ("42.0", "42", 1.0),
    ("41", "42", 0.0),
    ('"everest"', "everest", 1.0),
    ("  spaced   out  ", "spaced out", 1.0),
    ("50%", "50", 1.0),
    ("1,234", "1234", 1.0),
    ("1,234.5", "1234.5", 1.0),
    ("3.14159", "3.1416", 0.0),
    ("0", "0.0", 1.0),
    ("-5", "-5.0", 1.0),
    ("no", "yes", 0.0),
    ("'quoted answer'", "quoted answer", 1.0),
    ("TRUE", "true", 1.0),
]


class TestExactMatch:
    @pytest.mark.parametrize("pred,gold,expected", EM_CASES)
    def test_cases(self, pred, gold, expected):
        assert exact_match(pred, gold) == expected

    def test_numeric_relative_tolerance(self):
        assert exact_match("1000000.0000001", "1000000") == 1.0
        assert exact_match("1.1", "1.2") == 0.0

    def test_agrees_with_oracle_on_200_case_corpus(self):
        corpus = _em_corpus()
        assert len(corpus) >= 200
        for pred, gold in corpus:
            assert exact_match(pred, gold) == oracle_exact_match(pred, gold), (pred, gold)

    def test_normalizer_agrees_with_oracle(self):
        for pred, gold in _em_corpus():
            assert normalize_answer(pred) == oracle_normalize(pred)
            assert normalize_answer(gold) == oracle_normalize(gold)

    @given(st.text(max_size=30))
    def test_reflexive(self, s):
        assert exact_match(s, s) == 1.0

    @given(st.text(max_size=30), st.text(max_size=30))
    def test_symmetric(self, a, b):
        assert exact_match(a, b) == exact_match(b, a)


def _em_corpus():
    """200+ pairs covering case, whitespace, quotes, decimal forms, percent
    signs, and thousands separators."""
    rng = random.Random(3)
    pairs = [
        ("Yes", "yes"), ("No", "NO"), ("42.0", "42"), ("50%", "50"),
        ("1,234", "1234"), ('"x"', "x"), ("  a  b ", "a b"), ("3,000,000", "3000000"),
        ("-12.5", "-12.50"), ("0.5", ".5"), ("100%", "100.0"),
    ]
    words = ["everest", "Paris", "TRUE", "n/a", "the reds", "42 points"]
    for _ in range(120):
        w = rng.choice(words)
        variant = w
        if rng.random() < 0.5:
            variant = variant.upper()
        if rng.random() < 0.3:
            variant = f'"{variant}"'
        if rng.random() < 0.3:
            variant = "  " + variant.replace(" ", "   ") + " "
        pairs.append((variant, w))
    for _ in range(80):
        n = rng.randint(-10**6, 10**6)
        style = rng.random()
        if style < 0.3:
            variant = f"{n:,}"
        elif style < 0.6:
            variant = f"{n}.0"
        elif style < 0.8:
            variant = f"{n}%"
        else:
            variant = f" {n} "
        pairs.append((variant, str(n)))
        pairs.append((str(n), str(n + rng.randint(1, 9))))
    return pairs


class TestFmtReward:
    def test_tagged_plan(self):
        assert fmt_reward("<plan>1. a</plan>", Role.PLANNER) == 1.0

    def test_missing_fence(self):
        assert fmt_reward("print(1)", Role.CODER) == 0.0

    def test_five_step_plan_fails_format(self):
        five = "<plan>" + "\n".join(f"{i}. s" for i in range(1, 6)) + "</plan>"
        assert fmt_reward(five, Role.PLANNER) == 0.0

    def test_four_step_plan_passes(self):
        four = "<plan>" + "\n".join(f"{i}. s" for i in range(1, 5)) + "</plan>"
        assert fmt_reward(four, Role.PLANNER) == 1.0

    def test_answer(self):
        assert fmt_reward("<answer>x</answer>", Role.ANSWERER) == 1.0
        assert fmt_reward("x", Role.ANSWERER) == 0.0


GOLD_PLAN = Plan(text="1. filter rows\n2. sum col", step_count=2)


class TestComposites:
    def test_weight_vectors_exact(self):
        assert PLAN_WEIGHTS == {"fmt": 0.1, "bleu": 0.9}
        assert CODE_WEIGHTS == {"fmt": 0.1, "exec": 0.2, "op": 0.2, "out": 0.5}
        assert ANSWER_WEIGHTS == {"fmt": 0.1, "em": 0.9}

    def test_plan_verbatim_gold(self):
        bd = plan_reward(f"<plan>{GOLD_PLAN.text}</plan>", GOLD_PLAN)
        assert bd.total == pytest.approx(1.0)

    def test_plan_untagged_total_zero(self):
        bd = plan_reward(GOLD_PLAN.text, GOLD_PLAN)
        assert bd.total == 0.0
        assert bd.components == {"fmt": 0.0, "bleu": 0.0}

    def test_plan_partial(self):
        raw = "<plan>1. filter rows\n2. count col</plan>"
        bd = plan_reward(raw, GOLD_PLAN)
        expected_bleu = oracle_bleu("1. filter rows\n2. count col", GOLD_PLAN.text)
        assert bd.components["bleu"] == pytest.approx(expected_bleu, abs=1e-6)
        assert bd.total == pytest.approx(0.1 + 0.9 * expected_bleu, abs=1e-6)

    def test_plan_overlong_keeps_bleu_but_zero_fmt(self):
        raw = "<plan>" + "\n".join(f"{i}. filter rows" for i in range(1, 6)) + "</plan>"
        bd = plan_reward(raw, GOLD_PLAN)
        assert bd.components["fmt"] == 0.0
        assert bd.components["bleu"] > 0.0

    def test_code_identical_success(self):
        gold = "df.groupby('a').sum()"
        outcome = ExecOutcome(status=ExecStatus.SUCCESS, stdout_text="7\n")
        bd = code_reward(f"```python\n{gold}\n```", outcome, gold, "7\n")
        assert bd.total == pytest.approx(1.0)

    def test_code_crash_arithmetic(self):
        gold = "df.groupby('a').sum()"
        cand = "df.groupby('a').mean()"
        outcome = ExecOutcome(status=ExecStatus.RUNTIME_ERROR, error_text="boom")
        bd = code_reward(f"```python\n{cand}\n```", outcome, gold, "7\n")
        expected_op = op_f1(cand, gold)
        assert bd.components["fmt"] == 1.0
        assert bd.components["exec"] == 0.0
        assert bd.components["out"] == 0.0
        assert bd.total == pytest.approx(0.1 + 0.2 * expected_op)

    def test_code_unfenced_total_zero(self):
        outcome = ExecOutcome(status=ExecStatus.SUCCESS, stdout_text="7\n")
        bd = code_reward("df.groupby('a')", outcome, "df.groupby('a')", "7\n")
        assert bd.total == 0.0

    def test_answer_tagged_gold(self):
        assert answer_reward("<answer>everest</answer>", "everest").total == pytest.approx(1.0)

    def test_answer_tagged_wrong(self):
        assert answer_reward("<answer>k2</answer>", "everest").total == pytest.approx(0.1)

    def test_answer_untagged_gold_total_zero(self):
        assert answer_reward("everest", "everest").total == 0.0

    def test_breakdown_invariants(self):
        bd = plan_reward(f"<plan>{GOLD_PLAN.text}</plan>", GOLD_PLAN)
        assert abs(sum(bd.weights.values()) - 1.0) <= 1e-9
        assert abs(bd.total - sum(bd.weights[k] * bd.components[k]
                                  for k in bd.components)) <= 1e-9

    def test_component_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            RewardBreakdown({"fmt": 1.5, "em": 0.0}, ANSWER_WEIGHTS)

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            RewardBreakdown({"a": 1.0}, {"a": 0.5})


class TestOpVocabulary:
    def test_lowercased(self):
        v = OpVocabulary(frozenset({"GroupBy"}))
        assert "groupby" in v.names

    def test_non_empty(self):
        with pytest.raises(ValueError):
            OpVocabulary(frozenset())
