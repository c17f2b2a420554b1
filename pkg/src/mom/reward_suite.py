"""Reward primitives (BLEU, operation-set F1, normalized exact match, format
checks) and the three composite rewards used to score plans, codes, and
answers.

Composite weights are fixed: plan {fmt 0.1, bleu 0.9}, code {fmt 0.1,
exec 0.2, op 0.2, out 0.5}, answer {fmt 0.1, em 0.9}. When extraction of the
raw output fails, the semantic components are zeroed along with fmt, so the
total is 0.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from collections import Counter

from . import agent_roles
from .agent_roles import Plan, Role
from .errors import FormatError
from .exec_orchestrator import ExecOutcome, classify_for_reward

PLAN_WEIGHTS = {"fmt": 0.1, "bleu": 0.9}
CODE_WEIGHTS = {"fmt": 0.1, "exec": 0.2, "op": 0.2, "out": 0.5}
ANSWER_WEIGHTS = {"fmt": 0.1, "em": 0.9}

BLEU_MAX_ORDER = 4

DEFAULT_OP_NAMES = frozenset({
    "groupby", "merge", "pivot", "sort_values", "agg", "filter", "loc", "iloc",
    "sum", "mean", "count", "drop", "rename", "astype", "fillna", "apply",
    "head", "unique", "value_counts", "concat",
})


@dataclass(frozen=True)
class RewardBreakdown:
    components: dict
    weights: dict
    total: float = field(init=False)

    def __post_init__(self):
        if set(self.components) != set(self.weights):
            raise ValueError("components and weights must share the same keys")
        if abs(sum(self.weights.values()) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        for name, value in self.components.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"component {name} out of [0, 1]: {value}")
        total = sum(self.weights[n] * self.components[n] for n in self.components)
        object.__setattr__(self, "total", total)


@dataclass(frozen=True)
class OpVocabulary:
    names: frozenset = DEFAULT_OP_NAMES

    def __post_init__(self):
        if not self.names:
            raise ValueError("operation vocabulary must be non-empty")
        object.__setattr__(self, "names", frozenset(n.lower() for n in self.names))


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def bleu_tokenize(text: str) -> list:
    """Whitespace + punctuation tokenization (punctuation as own tokens)."""
    return _TOKEN_RE.findall(text)


def bleu(candidate: str, reference: str) -> float:
    """Sentence-level BLEU: orders 1..4, uniform weights, brevity penalty,
    add-1 smoothing on orders with zero n-gram matches.

    bleu(x, x) == 1 for any non-empty x; an empty candidate scores 0.
    """
    cand = bleu_tokenize(candidate)
    ref = bleu_tokenize(reference)
    if not cand:
        return 0.0
    if not ref:
        return 0.0
    log_sum = 0.0
    for n in range(1, BLEU_MAX_ORDER + 1):
        cand_ngrams = Counter(tuple(cand[i:i + n]) for i in range(len(cand) - n + 1))
        ref_ngrams = Counter(tuple(ref[i:i + n]) for i in range(len(ref) - n + 1))
        total = sum(cand_ngrams.values())
        matches = sum(min(c, ref_ngrams[g]) for g, c in cand_ngrams.items())
        if matches == 0:
            precision = (matches + 1) / (total + 1)
        else:
            precision = matches / total
        log_sum += math.log(precision) / BLEU_MAX_ORDER
    if len(cand) >= len(ref):
        bp = 1.0
    else:
        bp = math.exp(1.0 - len(ref) / len(cand))
    return bp * math.exp(log_sum)


# ---------------------------------------------------------------------------
# Operation-set F1
# ---------------------------------------------------------------------------


def extract_ops(code: str, vocab: OpVocabulary) -> frozenset:
    """Vocabulary names used as call-like tokens: ``name(`` or ``.name``."""
    found = set()
    for name in vocab.names:
        if re.search(rf"\b{re.escape(name)}\s*\(", code) or \
                re.search(rf"\.{re.escape(name)}\b", code):
            found.add(name)
    return frozenset(found)


def op_f1(candidate_code: str, gold_code: str, vocab: OpVocabulary = OpVocabulary()) -> float:
    """Set-F1 between operation names in candidate and gold code.

    Both sets empty scores 1 (vocabulary-free gold stays matchable); exactly
    one empty scores 0.
    """
    cand = extract_ops(candidate_code, vocab)
    gold = extract_ops(gold_code, vocab)
    if not cand and not gold:
        return 1.0
    if not cand or not gold:
        return 0.0
    overlap = len(cand & gold)
    if overlap == 0:
        return 0.0
    precision = overlap / len(cand)
    recall = overlap / len(gold)
    return 2 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# Exact match with answer normalization
# ---------------------------------------------------------------------------

_WS_RE = re.compile(r"\s+")
_QUOTES = "\"'`“”‘’"
_NUMERIC_RE = re.compile(r"[+-]?(\d{1,3}(,\d{3})+|\d+)(\.\d+)?%?$")


def _strip_quotes(text: str) -> str:
    while len(text) >= 2 and text[0] in _QUOTES and text[-1] in _QUOTES:
        text = text[1:-1].strip()
    return text


def _as_number(token: str):
    """Parse a numeric-looking token (thousands separators and a trailing
    percent sign allowed); None when not numeric."""
    token = token.strip()
    if not token or not _NUMERIC_RE.fullmatch(token):
        return None
    if token.endswith("%"):
        token = token[:-1]
    try:
        return float(token.replace(",", ""))
    except ValueError:
        return None


def _canon_text(text: str) -> str:
    return _strip_quotes(_WS_RE.sub(" ", text.strip().casefold()).strip())


def normalize_answer(text: str) -> str:
    """Canonical answer form: trim, casefold, collapse whitespace, strip
    surrounding quotes; numeric-looking answers canonicalize to repr(float)."""
    t = _canon_text(text)
    num = _as_number(t)
    if num is not None:
        return repr(num)
    return t


def exact_match(pred: str, gold: str) -> float:
    """1 iff the normalized forms agree; numeric answers compare with
    relative tolerance 1e-6."""
    p, g = _canon_text(pred), _canon_text(gold)
    pn, gn = _as_number(p), _as_number(g)
    if pn is not None and gn is not None:
        return 1.0 if math.isclose(pn, gn, rel_tol=1e-6) else 0.0
    return 1.0 if p == g else 0.0


# ---------------------------------------------------------------------------
# Format reward and composites
# ---------------------------------------------------------------------------


def fmt_reward(raw_output: str, role: Role) -> float:
    """1 iff the role's extractor accepts the output; planner output must
    additionally stay within the 4-step budget."""
    try:
        extracted = agent_roles.extractor_for(role)(raw_output)
    except FormatError:
        return 0.0
    if role == Role.PLANNER and extracted.step_count > agent_roles.MAX_PLAN_STEPS:
        return 0.0
    return 1.0


def plan_reward(raw_plan: str, gold_plan: Plan) -> RewardBreakdown:
    try:
        plan = agent_roles.extract_plan(raw_plan)
    except FormatError:
        return RewardBreakdown({"fmt": 0.0, "bleu": 0.0}, PLAN_WEIGHTS)
    fmt = 1.0 if plan.step_count <= agent_roles.MAX_PLAN_STEPS else 0.0
    return RewardBreakdown({"fmt": fmt, "bleu": bleu(plan.text, gold_plan.text)}, PLAN_WEIGHTS)


def code_reward(raw_code: str, exec_outcome: ExecOutcome, gold_code: str,
                gold_output: str, vocab: OpVocabulary = OpVocabulary()) -> RewardBreakdown:
    try:
        code = agent_roles.extract_code(raw_code)
    except FormatError:
        return RewardBreakdown(
            {"fmt": 0.0, "exec": 0.0, "op": 0.0, "out": 0.0}, CODE_WEIGHTS)
    return RewardBreakdown({
        "fmt": 1.0,
        "exec": classify_for_reward(exec_outcome),
        "op": op_f1(code.source, gold_code, vocab),
        "out": bleu(exec_outcome.stdout_text, gold_output),
    }, CODE_WEIGHTS)


def answer_reward(raw_answer: str, gold: str) -> RewardBreakdown:
    try:
        answer = agent_roles.extract_answer(raw_answer)
    except FormatError:
        return RewardBreakdown({"fmt": 0.0, "em": 0.0}, ANSWER_WEIGHTS)
    return RewardBreakdown({"fmt": 1.0, "em": exact_match(answer.text, gold)}, ANSWER_WEIGHTS)
