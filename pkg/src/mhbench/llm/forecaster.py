"""Forecaster adapter that prompts an LLM client and parses its answers."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..core import Dataset, SampleWindow
from ..evaluation import FORECAST_DAYS, UNPARSEABLE
from ..features import FeatureConfig, fit_normalizer
from ..schema import CategoryMap, load_category_map
from .clients import LLMClient, complete_all, prompt_id
from .prompts import (DEFAULT_K, STRATEGIES, PatternKnowledge, PromptContext, UnparseableResponse,
                      build_prompt, compute_class_statistics, derive_pattern_knowledge, parse_response)

log = logging.getLogger(__name__)


@dataclass
class LLMForecaster:
    """Holds only train-split knowledge; test windows are seen solely as prompt targets."""

    client: LLMClient
    strategy: str
    ctx: PromptContext
    history: dict[str, list[SampleWindow]]
    participant_header: bool = False
    workers: int = 1
    unparseable: list[str] = field(default_factory=list)
    family = "llm"

    @property
    def config(self) -> FeatureConfig:
        return self.ctx.config

    def validate(self) -> None:
        from ..adapters import check_layout
        check_layout(self.family, self.strategy, self.config)

    def prompts(self, samples: Sequence[SampleWindow], n_days: int = FORECAST_DAYS) -> list[str]:
        return [build_prompt(self.strategy, s, self.history.get(s.participant_id, ()), self.ctx, n_days,
                             self.participant_header).render() for s in samples]

    def predict(self, samples: Sequence[SampleWindow], n_days: int = FORECAST_DAYS) -> np.ndarray:
        texts = self.prompts(samples, n_days)
        ids = [prompt_id(t) for t in texts]
        replies = complete_all(self.client, dict(zip(ids, texts)), self.workers)
        out = np.empty(len(texts), dtype=int)
        for i, rid in enumerate(ids):
            try:
                out[i] = int(parse_response(replies[rid]))
            except UnparseableResponse:
                log.warning("unparseable response: %r", replies[rid])
                self.unparseable.append(replies[rid])
                out[i] = UNPARSEABLE
        return out


def fit_llm(client: LLMClient, strategy: str, config: FeatureConfig, train: Dataset, k: int = DEFAULT_K,
            category_map: CategoryMap | None = None, participant_header: bool = False,
            summariser: LLMClient | None = None, workers: int = 1) -> LLMForecaster:
    """Prepare everything a strategy needs from the train split alone."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    category_map = category_map or load_category_map()
    norm = fit_normalizer(train.values())
    ctx = PromptContext(config, norm, category_map, k=k)
    history = {u: train.user_samples(u) for u in train.users}
    if strategy == "statistical_population":
        ctx.population_stats = compute_class_statistics(list(train), "population", config, norm, category_map)
    elif strategy == "pattern":
        summariser = summariser or client
        patterns: dict[str, PatternKnowledge] = {}
        for u, ws in history.items():
            stats = compute_class_statistics(ws, "individual", config, norm, category_map, u)
            patterns[u] = derive_pattern_knowledge(summariser, stats, ctx.rename)
        ctx.patterns = patterns
    return LLMForecaster(client, strategy, ctx, history, participant_header, workers)
