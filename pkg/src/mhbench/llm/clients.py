"""LLM clients: a deterministic rule-based mock, an HTTP client and a transcript replayer."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol

import numpy as np

from .prompts import SUMMARY_REQUEST, PromptBundle
from .serialize import parse_table

log = logging.getLogger(__name__)


class LLMClient(Protocol):
    model: str

    def complete(self, prompt: str) -> str: ...


def prompt_id(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]


def complete_all(client: LLMClient, prompts: Mapping[str, str], workers: int = 1) -> dict[str, str]:
    """Complete many prompts keyed by request id; clients may override with their own batching."""
    batch = getattr(client, "complete_many", None)
    if batch is not None:
        return batch(prompts, workers)
    return {rid: client.complete(p) for rid, p in prompts.items()}


# --------------------------------------------------------------------- mock

_TABLE_LINE = re.compile(r"^\|.*\|$")


def _tables(text: str) -> list[str]:
    """Contiguous markdown-table blocks in order of appearance."""
    out, cur = [], []
    for line in text.splitlines():
        if _TABLE_LINE.match(line.strip()):
            cur.append(line)
        elif cur:
            out.append("\n".join(cur))
            cur = []
    if cur:
        out.append("\n".join(cur))
    return out


class MockClient:
    """Rule-based stand-in for an LLM; the same prompt always yields the same reply.

    * labelled examples in the context: copy the label of the nearest example
      (Euclidean distance between the tables' column means);
    * class statistics: the class whose means are nearest the target's
      column means, scaled by the pooled per-feature spread;
    * otherwise: Normal.
    Pattern-summary requests get a fixed templated description.
    """

    model = "mock-rule-v1"

    def complete(self, prompt: str) -> str:
        if prompt.startswith(SUMMARY_REQUEST):
            level = re.search(r"^Target level: (\w+)$", prompt, flags=re.M).group(1)
            return f"Behavior typical of the {level} level for this participant."
        try:
            bundle = PromptBundle.parse(prompt)
        except ValueError:
            return "I cannot determine the level."
        _, _, target = parse_table(bundle.behavior_table)
        q = target.mean(axis=0)
        ctx = bundle.context_block
        if "### Example" in ctx:
            return f"Answer: {self._nearest_example(ctx, q)}"
        if "### Class statistics" in ctx:
            return f"Answer: {self._nearest_class(ctx, q)}"
        return "Answer: Normal"

    @staticmethod
    def _nearest_example(ctx: str, q: np.ndarray) -> str:
        blocks = ctx.split("### Example")[1:]
        best, best_d = "Normal", np.inf
        for block in blocks:
            _, _, vals = parse_table(_tables(block)[0])
            label = re.search(r"Severity level: (\w+)", block).group(1)
            d = float(np.linalg.norm(vals.mean(axis=0) - q))
            if d < best_d:
                best, best_d = label, d
        return best

    @staticmethod
    def _nearest_class(ctx: str, q: np.ndarray) -> str:
        table = _tables(ctx)[0]
        lines = table.splitlines()
        heads = [c.strip() for c in lines[0].strip().strip("|").split("|")][1:]
        rows = np.array([[float(c) for c in ln.strip().strip("|").split("|")[1:]] for ln in lines[2:]])
        words = [h.split()[0] for h in heads[::2]]
        means = rows[:, 0::2].T
        spread = np.sqrt(rows[:, 1::2].mean(axis=1)) + 1e-6
        d = (((means - q) / spread) ** 2).sum(axis=1)
        return words[int(np.argmin(d))]


# --------------------------------------------------------------------- http

@dataclass(frozen=True)
class HTTPConfig:
    endpoint: str
    model: str
    api_key_env: str = "MHBENCH_LLM_API_KEY"
    temperature: float = 0.0
    max_tokens: int = 16
    timeout: float = 60.0
    max_retries: int = 5
    backoff: float = 1.0
    transcript: str | None = None

    @classmethod
    def from_file(cls, path: str | Path) -> HTTPConfig:
        return cls(**json.loads(Path(path).read_text()))


class HTTPClient:
    """OpenAI-compatible chat-completions client.

    Every request/response pair is appended to a JSON-lines transcript so
    runs can be re-scored offline with :class:`ReplayClient`.
    """

    def __init__(self, config: HTTPConfig, transport=None):
        import httpx

        key = os.environ.get(config.api_key_env)
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        self.config = config
        self.model = config.model
        self._http = httpx.Client(headers=headers, timeout=config.timeout, transport=transport)
        self._errors = (httpx.HTTPError,)
        self._lock = threading.Lock()

    def _post(self, prompt: str) -> str:
        body = {"model": self.config.model, "temperature": self.config.temperature,
                "max_tokens": self.config.max_tokens,
                "messages": [{"role": "user", "content": prompt}]}
        for attempt in range(self.config.max_retries + 1):
            try:
                r = self._http.post(self.config.endpoint, json=body)
                if 400 <= r.status_code < 500 and r.status_code != 429:
                    raise ValueError(f"request rejected ({r.status_code}): {r.text[:200]}")
                r.raise_for_status()
                return r.json()["choices"][0]["message"]["content"]
            except self._errors as exc:
                if attempt == self.config.max_retries:
                    raise
                delay = self.config.backoff * 2 ** attempt
                log.warning("request failed (%s); retrying in %.1fs", exc, delay)
                time.sleep(delay)
        raise AssertionError("unreachable")

    def _record(self, rid: str, prompt: str, response: str) -> None:
        if not self.config.transcript:
            return
        line = json.dumps({"id": rid, "model": self.model, "prompt": prompt, "response": response})
        with self._lock, open(self.config.transcript, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    def complete(self, prompt: str) -> str:
        text = self._post(prompt)
        self._record(prompt_id(prompt), prompt, text)
        return text

    def complete_many(self, prompts: Mapping[str, str], workers: int = 4) -> dict[str, str]:
        """Bounded concurrent completion; results are keyed by request id."""
        def one(item):
            rid, p = item
            text = self._post(p)
            self._record(rid, p, text)
            return rid, text

        with ThreadPoolExecutor(max(1, workers)) as pool:
            return dict(pool.map(one, prompts.items()))

    def close(self) -> None:
        self._http.close()


class ReplayClient:
    """Answers from a recorded transcript, looked up by prompt content."""

    def __init__(self, transcript: str | Path):
        self.responses: dict[str, str] = {}
        self.model = "replay"
        for line in Path(transcript).read_text(encoding="utf-8").splitlines():
            if line.strip():
                rec = json.loads(line)
                self.responses[prompt_id(rec["prompt"])] = rec["response"]
                self.model = f"replay:{rec.get('model', '?')}"

    def complete(self, prompt: str) -> str:
        try:
            return self.responses[prompt_id(prompt)]
        except KeyError:
            raise KeyError("prompt not present in transcript") from None


def make_client(kind: str, config_path: str | None = None, transcript: str | None = None) -> LLMClient:
    if kind == "mock":
        return MockClient()
    if kind == "replay":
        if not transcript:
            raise ValueError("replay client needs a transcript path")
        return ReplayClient(transcript)
    if kind == "http":
        if not config_path:
            raise ValueError("http client needs a config file")
        return HTTPClient(HTTPConfig.from_file(config_path))
    raise ValueError(f"unknown client kind {kind!r}")
