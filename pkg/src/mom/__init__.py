"""Multi-agent table reasoning pipeline.

Library layout, one module per subsystem:

- table_core: table / QA-record model, JSONL ingestion, serialization
- llm_gateway: chat-completion backends (HTTP + deterministic mock)
- agent_roles: prompt templates and tagged-output extraction
- exec_orchestrator: sandboxed code execution over a JSON wire protocol
- rollout_engine: plan x code x answer fan-out and pseudo-gold emission
- reward_suite: BLEU / op-F1 / exact-match primitives and composite rewards
- grpo_core: group-normalized advantages, surrogate objective, batch export
- tts_eval: test-time scaling strategies and benchmark evaluation
- cli: the `mom` batch command-line surface
"""

__version__ = "0.1.0"
