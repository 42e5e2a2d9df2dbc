"""Instruction-tuning corpora for parameter-efficient fine-tuning of an external LLM."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Iterable

from ..core import Dataset
from ..evaluation import FORECAST_DAYS
from .prompts import PromptContext, build_prompt


def peft_records(train: Dataset, ctx: PromptContext, n_days: int = FORECAST_DAYS,
                 user_aware: bool = False) -> list[dict]:
    """One zero-shot-formatted record per train window, completion = severity word.

    The user-aware variant names the participant once, in the prompt header.
    """
    out = []
    for s in train:
        bundle = build_prompt("zero_shot", s, (), ctx, n_days=n_days, participant_header=user_aware)
        out.append({"id": f"{s.participant_id}:{s.start_day}", "user": s.participant_id,
                    "prompt": bundle.render(), "completion": s.label.word})
    return out


def write_jsonl(records: Iterable[dict], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    os.replace(tmp, path)
    return path


def export_peft_corpus(train: Dataset, ctx: PromptContext, path: str | Path, n_days: int = FORECAST_DAYS,
                       user_aware: bool = False) -> Path:
    """Write the corpus as JSON lines with fields id, user, prompt, completion."""
    return write_jsonl(peft_records(train, ctx, n_days, user_aware), path)


def read_jsonl(path: str | Path) -> list[dict]:
    return [json.loads(ln) for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
