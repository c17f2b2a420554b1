"""Batch command-line surface: rollout generation, inference, evaluation,
reward scoring, and training-batch export.

Global flags: --config, --backend, --mock-trace, --seed, --jobs, --out.
Exit codes: 0 success, 1 partial failures (recorded in the manifest),
2 usage/config error.
"""

from __future__ import annotations

import csv
import datetime
import json
import os
import random
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import click
import yaml

from . import grpo_core, rollout_engine, tts_eval
from .errors import ConfigError, MomError, SpawnError, TransportError
from .exec_orchestrator import DEFAULT_MAX_STDOUT_BYTES, DEFAULT_TIMEOUT_S, SandboxConfig
from .llm_gateway import HttpBackend, HttpBackendConfig, load_trace_file
from .reward_suite import OpVocabulary, answer_reward, plan_reward
from .rollout_engine import RolloutConfig, Stage
from .table_core import load_dataset, table_to_json_obj
from .tts_eval import TtsConfig, TtsMode

DEFAULT_HARNESS_CMD = [sys.executable, "-m", "table_harness"]


@dataclass
class AppContext:
    config: dict = field(default_factory=dict)
    backend: object = None
    seed: int = 0
    jobs: int = 1
    out_dir: Path = Path("mom-out")

    def cfg(self, dotted: str, default=None):
        node = self.config
        for part in dotted.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node

    def sandbox_config(self) -> SandboxConfig:
        return SandboxConfig(
            harness_cmd=tuple(self.cfg("sandbox.harness_cmd", DEFAULT_HARNESS_CMD)),
            timeout_s=int(self.cfg("sandbox.timeout_s", DEFAULT_TIMEOUT_S)),
            max_stdout_bytes=int(self.cfg("sandbox.max_stdout_bytes", DEFAULT_MAX_STDOUT_BYTES)),
        )

    def op_vocab(self) -> OpVocabulary:
        names = self.cfg("rewards.op_vocab")
        return OpVocabulary(frozenset(names)) if names else OpVocabulary()


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", text=True)
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_manifest(ctx: AppContext, command: str, input_path: str,
                    counters: dict, started: str) -> None:
    manifest = {
        "command": command,
        "input": str(input_path),
        "out_dir": str(ctx.out_dir),
        "seed": ctx.seed,
        "config": ctx.config,
        "started_at": started,
        "finished_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "counters": counters,
    }
    _atomic_write(ctx.out_dir / "manifest.json",
                  json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="YAML config file; flags override config values.")
@click.option("--backend", "backend_url", default=None,
              help="Chat-completions endpoint URL (overrides config backend.url).")
@click.option("--mock-trace", type=click.Path(exists=True), default=None,
              help="Scripted mock trace file (YAML/JSON); replaces the HTTP backend.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Worker pool size over records.")
@click.option("--out", "out_dir", type=click.Path(), default="mom-out", show_default=True)
@click.pass_context
def main(ctx, config_path, backend_url, mock_trace, seed, jobs, out_dir):
    """Multi-agent table reasoning pipeline."""
    config = {}
    if config_path:
        loaded = yaml.safe_load(Path(config_path).read_text(encoding="utf-8"))
        if loaded is not None:
            if not isinstance(loaded, dict):
                raise click.UsageError("config file must contain a mapping")
            config = loaded
    random.seed(seed)
    app = AppContext(config=config, seed=seed, jobs=max(1, jobs), out_dir=Path(out_dir))

    backend = None
    if mock_trace:
        try:
            backend = load_trace_file(mock_trace)
        except ConfigError as exc:
            raise click.UsageError(str(exc))
    else:
        url = backend_url or app.cfg("backend.url")
        if url:
            backend = HttpBackend(HttpBackendConfig(
                url=url,
                model=app.cfg("backend.model", "default"),
                retry_cap=int(app.cfg("backend.retry_cap", 3)),
                timeout_s=float(app.cfg("backend.timeout_s", 60.0)),
            ))
    app.backend = backend
    ctx.obj = app


def _require_backend(app: AppContext):
    if app.backend is None:
        raise click.UsageError("no backend configured: pass --backend or --mock-trace")


def _run_over_records(app: AppContext, records, fn):
    """Apply fn to each record; results come back in input order."""
    if app.jobs == 1:
        return [fn(r) for r in records]
    with ThreadPoolExecutor(max_workers=app.jobs) as pool:
        return list(pool.map(fn, records))


@main.command("rollout")
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--stage", type=click.Choice([s.value for s in Stage]), default="plan",
              show_default=True)
@click.option("--alpha", type=int, default=None, help="Override the stage default fan-out.")
@click.option("--beta", type=int, default=None)
@click.option("--gamma", type=int, default=None)
@click.option("--temp", type=float, default=None,
              help="Sampling temperature for all three roles (default 1.0).")
@click.option("--policy", type=click.Choice([rollout_engine.FIRST_SUCCESS,
                                             rollout_engine.ALL_SUCCESSES]),
              default=rollout_engine.FIRST_SUCCESS, show_default=True)
@click.pass_obj
def cmd_rollout(app: AppContext, input_path, stage, alpha, beta, gamma, temp, policy):
    """Generate rollout trees and the pseudo-gold stage dataset."""
    _require_backend(app)
    started = _now()
    stage = Stage(stage)
    cfg = RolloutConfig.for_stage(stage)
    if alpha or beta or gamma:
        cfg = RolloutConfig(alpha or cfg.alpha, beta or cfg.beta, gamma or cfg.gamma,
                            temps=cfg.temps, stage=stage)
    if temp is not None:
        cfg = RolloutConfig(cfg.alpha, cfg.beta, cfg.gamma,
                            temps=(temp, temp, temp), stage=stage)
    dataset = load_dataset(input_path)
    sandbox = app.sandbox_config()
    trees_dir = app.out_dir / "trees"
    trees_dir.mkdir(parents=True, exist_ok=True)

    counters = {"ok": 0, "failed": 0}
    pseudo_gold = []
    hard_error = False
    for rec in dataset.records:
        try:
            tree = rollout_engine.rollout(rec, cfg, app.backend, sandbox)
        except (TransportError, SpawnError, MomError) as exc:
            counters["failed"] += 1
            hard_error = True
            click.echo(f"record {rec.id}: {exc}", err=True)
            continue
        counters["ok"] += 1
        _atomic_write(trees_dir / f"{rec.id}.json",
                      json.dumps(_tree_debug_obj(tree), indent=2, ensure_ascii=False) + "\n")
        pseudo_gold.extend(rollout_engine.extract_pseudo_gold(tree, policy))
    rollout_engine.emit_dataset(pseudo_gold, stage,
                                app.out_dir / f"dataset.{stage.value}.jsonl")
    _write_manifest(app, "rollout", input_path, counters, started)
    sys.exit(1 if hard_error else 0)


def _tree_debug_obj(tree) -> dict:
    return {
        "record_id": tree.record_id,
        "question": tree.record.question,
        "gold_answer": tree.record.gold_answer,
        "n_trajectories": len(tree.trajectories),
        "n_successes": tree.n_successes,
        "trajectories": [
            {
                "i": t.plan_idx, "j": t.code_idx, "k": t.answer_idx,
                "correct": t.correct,
                "failure": t.failure,
                "plan": t.plan.text if t.plan else None,
                "code": t.code.source if t.code else None,
                "exec_status": t.exec_outcome.status.value if t.exec_outcome else None,
                "stdout": t.exec_outcome.stdout_text if t.exec_outcome else None,
                "answer": t.answer.text if t.answer else None,
            }
            for t in tree.trajectories
        ],
    }


@main.command("infer")
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--mode", type=click.Choice([m.value for m in TtsMode]), default="single",
              show_default=True)
@click.option("--branches", type=int, default=tts_eval.DEFAULT_PARALLEL_BRANCHES,
              show_default=True)
@click.option("--retries", type=int, default=tts_eval.DEFAULT_MAX_CODE_RETRIES,
              show_default=True)
@click.option("--temp", type=float, default=tts_eval.DEFAULT_INFER_TEMP, show_default=True,
              help="Base sampling temperature (parallel branching stays at 1.0).")
@click.pass_obj
def cmd_infer(app: AppContext, input_path, mode, branches, retries, temp):
    """Answer every dataset question and write predictions.jsonl."""
    _require_backend(app)
    started = _now()
    mode = TtsMode(mode)
    cfg = TtsConfig(mode=mode, n_branches=branches, max_code_retries=retries,
                    base_temp=temp)
    dataset = load_dataset(input_path)
    sandbox = app.sandbox_config()

    def run_one(rec):
        if mode == TtsMode.PARALLEL:
            return tts_eval.run_parallel(rec, app.backend, sandbox, cfg)
        if mode == TtsMode.SEQUENTIAL:
            return tts_eval.run_sequential(rec, app.backend, sandbox, cfg)
        return tts_eval.run_single(rec, app.backend, sandbox, cfg)

    counters = {"ok": 0, "failed": 0}
    lines = []
    for rec in dataset.records:
        try:
            result = run_one(rec)
        except (TransportError, SpawnError, MomError) as exc:
            counters["failed"] += 1
            click.echo(f"record {rec.id}: {exc}", err=True)
            lines.append(json.dumps({"id": rec.id, "answer": None, "error": str(exc)}))
            continue
        counters["ok"] += 1
        lines.append(json.dumps({
            "id": rec.id,
            "answer": result.answer.text if result.answer else None,
            "marker": result.marker,
        }, ensure_ascii=False))
    _atomic_write(app.out_dir / "predictions.jsonl",
                  "".join(line + "\n" for line in lines))
    _write_manifest(app, "infer", input_path, counters, started)
    sys.exit(0 if counters["failed"] == 0 else 1)


@main.command("eval")
@click.option("--input", "input_path", type=click.Path(exists=True), required=True)
@click.option("--pred", "pred_path", type=click.Path(exists=True), required=True,
              help="predictions.jsonl from 'mom infer'.")
@click.pass_obj
def cmd_eval(app: AppContext, input_path, pred_path):
    """Score predictions against the dataset and emit the report."""
    started = _now()
    dataset = load_dataset(input_path)
    answers = {}
    for line in Path(pred_path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        text = obj.get("answer")
        if text:
            from .agent_roles import FinalAnswer
            answers[obj["id"]] = FinalAnswer(text=text)
    report = tts_eval.evaluate(dataset, answers)
    obj = tts_eval.report_to_json_obj(report)
    _atomic_write(app.out_dir / "report.json",
                  json.dumps(obj, indent=2, sort_keys=True) + "\n")
    click.echo(tts_eval.report_to_text(report))
    _write_manifest(app, "eval", input_path,
                    {"ok": len(dataset.records), "failed": 0}, started)
    sys.exit(0)


REWARD_CSV_HEADER = ["index", "role", "fmt", "semantic", "total"]


@main.command("reward")
@click.option("--input", "input_path", type=click.Path(exists=True), required=True,
              help='JSONL of {"candidate": ..., "reference": ...} pairs.')
@click.option("--role", type=click.Choice(["plan", "answer"]), default="answer",
              show_default=True)
@click.pass_obj
def cmd_reward(app: AppContext, input_path, role):
    """Score candidate/reference pairs and write reward-breakdown CSV."""
    started = _now()
    from .agent_roles import Plan
    rows = []
    counters = {"ok": 0, "failed": 0}
    for idx, line in enumerate(Path(input_path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        obj = json.loads(line)
        cand, ref = obj["candidate"], obj["reference"]
        if role == "plan":
            bd = plan_reward(cand, Plan(text=ref, step_count=1))
            semantic = bd.components["bleu"]
        else:
            bd = answer_reward(cand, ref)
            semantic = bd.components["em"]
        counters["ok"] += 1
        rows.append([idx, role, f"{bd.components['fmt']:.6f}",
                     f"{semantic:.6f}", f"{bd.total:.6f}"])
    app.out_dir.mkdir(parents=True, exist_ok=True)
    out_path = app.out_dir / "rewards.csv"
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(REWARD_CSV_HEADER)
        writer.writerows(rows)
    _write_manifest(app, "reward", input_path, counters, started)
    sys.exit(0)


@main.command("grpo-export")
@click.option("--input", "input_path", type=click.Path(exists=True), required=True,
              help="JSONL of groups: prompt_system, prompt_user, completions, rewards.")
@click.option("--stage", type=click.Choice([s.value for s in Stage]), default=None)
@click.option("--group-size", type=int, default=grpo_core.DEFAULT_GROUP_SIZE,
              show_default=True)
@click.option("--epsilon", type=float, default=grpo_core.DEFAULT_EPSILON, show_default=True)
@click.option("--kl-coeff", type=float, default=grpo_core.DEFAULT_KL_COEFF, show_default=True)
@click.pass_obj
def cmd_grpo_export(app: AppContext, input_path, stage, group_size, epsilon, kl_coeff):
    """Recompute advantages and export a training batch file."""
    started = _now()
    groups = []
    for line_no, line in enumerate(Path(input_path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        obj = json.loads(line)
        if len(obj["completions"]) != group_size:
            raise click.UsageError(
                f"line {line_no}: expected group size {group_size}, "
                f"got {len(obj['completions'])}")
        groups.append(grpo_core.TrainingGroup(
            prompt_system=obj.get("prompt_system", ""),
            prompt_user=obj.get("prompt_user", ""),
            completions=tuple(obj["completions"]),
            rewards=tuple(obj["rewards"]),
            advantages=tuple(obj["advantages"]) if "advantages" in obj else None,
        ))
    app.out_dir.mkdir(parents=True, exist_ok=True)
    out_path = app.out_dir / "training_batch.jsonl"
    n = grpo_core.export_training_batch(groups, out_path, stage=stage)
    meta = {"groups": n, "group_size": group_size, "epsilon": epsilon,
            "kl_coeff": kl_coeff, "stage": stage}
    _write_manifest(app, "grpo-export", input_path,
                    {"ok": n, "failed": 0, **meta}, started)
    sys.exit(0)


if __name__ == "__main__":
    main()
