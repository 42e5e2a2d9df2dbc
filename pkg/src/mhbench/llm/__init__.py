"""Text serialisation, prompting strategies, LLM clients and parameter-efficient tuning helpers."""

from .clients import HTTPClient, HTTPConfig, LLMClient, MockClient, ReplayClient, make_client
from .forecaster import LLMForecaster, fit_llm
from .prompts import (STRATEGIES, ClassStatistics, PatternKnowledge, PromptBundle, PromptContext,
                      UnparseableResponse, build_prompt, compute_class_statistics, parse_response)
from .serialize import default_rename, parse_table, serialize_window

__all__ = [
    "STRATEGIES", "ClassStatistics", "HTTPClient", "HTTPConfig", "LLMClient", "LLMForecaster", "MockClient",
    "PatternKnowledge", "PromptBundle", "PromptContext", "ReplayClient", "UnparseableResponse",
    "build_prompt", "compute_class_statistics", "default_rename", "fit_llm", "make_client",
    "parse_response", "parse_table", "serialize_window",
]
