"""Prompt construction for zero-shot and in-context strategies, and answer parsing."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..core import SampleWindow, SeverityLevel
from ..features import FeatureConfig, Granularity, Layout, Normalizer, represent
from ..schema import CategoryMap
from .serialize import column_names, default_rename, serialize_window, table_values

log = logging.getLogger(__name__)

STRATEGIES = ("zero_shot", "few_shot_recency", "few_shot_similarity",
              "statistical_individual", "statistical_population", "pattern")
DEFAULT_K = 3

SECTION_TASK = "## Task"
SECTION_CONTEXT = "## Reference information"
SECTION_DATA = "## Behavior data"
SECTION_ANSWER = "## Answer format"
PARTICIPANT_PREFIX = "Participant: "

LEVEL_WORDS = tuple(level.word for level in SeverityLevel)


class UnparseableResponse(ValueError):
    pass


@dataclass(frozen=True)
class PromptBundle:
    system_instruction: str
    context_block: str
    behavior_table: str
    answer_format_instruction: str
    participant_id: str = ""

    def render(self) -> str:
        parts = []
        if self.participant_id:
            parts.append(f"{PARTICIPANT_PREFIX}{self.participant_id}")
        parts.append(f"{SECTION_TASK}\n{self.system_instruction}")
        if self.context_block:
            parts.append(f"{SECTION_CONTEXT}\n{self.context_block}")
        parts.append(f"{SECTION_DATA}\n{self.behavior_table}")
        parts.append(f"{SECTION_ANSWER}\n{self.answer_format_instruction}")
        return "\n\n".join(parts) + "\n"

    @classmethod
    def parse(cls, text: str) -> PromptBundle:
        """Inverse of :meth:`render`."""
        participant = ""
        if text.startswith(PARTICIPANT_PREFIX):
            first, text = text.split("\n\n", 1)
            participant = first[len(PARTICIPANT_PREFIX):]
        heads = (SECTION_TASK, SECTION_CONTEXT, SECTION_DATA, SECTION_ANSWER)
        pattern = "^(" + "|".join(map(re.escape, heads)) + ")$"
        pieces = re.split(pattern, text.strip("\n"), flags=re.M)
        sections = {}
        for head, body in zip(pieces[1::2], pieces[2::2]):
            if head in sections:
                raise ValueError(f"duplicate section {head!r}")
            sections[head] = body.strip("\n")
        for required in (SECTION_TASK, SECTION_DATA, SECTION_ANSWER):
            if required not in sections:
                raise ValueError(f"missing section {required!r}")
        return cls(sections[SECTION_TASK], sections.get(SECTION_CONTEXT, ""), sections[SECTION_DATA],
                   sections[SECTION_ANSWER], participant)


def system_instruction(config: FeatureConfig, n_days: int) -> str:
    unit = "day" if config.granularity is Granularity.DAILY else "week"
    steps = config.time_steps(n_days)
    return (
        "You are given passive smartphone sensing data from a college student. "
        f"The table lists behavior for the first {n_days} days of a two-week period, "
        f"one row per {unit} ({steps} row{'s' if steps != 1 else ''}). "
        "Forecast the student's mental health severity level, derived from the PHQ-4 "
        "questionnaire, at the end of the two-week period. The levels are Normal (PHQ-4 0-3), "
        "Mild (4-6), Moderate (7-9) and Severe (10-12)."
    )


ANSWER_FORMAT = "Reply with exactly one word: Normal, Mild, Moderate, or Severe."


def parse_response(text: str) -> SeverityLevel:
    """Last severity word in the reply wins; none found raises :class:`UnparseableResponse`."""
    found = list(re.finditer(r"\b(normal|mild|moderate|severe)\b", text, flags=re.I))
    if not found:
        raise UnparseableResponse(text)
    return SeverityLevel.from_word(found[-1].group(1))


# ---------------------------------------------------------------- knowledge

@dataclass(frozen=True)
class ClassStatistics:
    """Per-class feature means and between-window variances over train windows.

    Each window is first reduced to its average over the time steps shown in
    the prompt table, so a class backed by a single window has variance 0.
    """

    level: str  # individual | population
    columns: tuple[str, ...]
    means: dict[str, np.ndarray]
    variances: dict[str, np.ndarray]
    counts: dict[str, int]
    participant_id: str = ""

    @property
    def absent(self) -> list[str]:
        return [w for w in LEVEL_WORDS if w not in self.means]

    def render(self, rename: Mapping[str, str]) -> str:
        present = [w for w in LEVEL_WORDS if w in self.means]
        headers = [f"{w} {stat}" for w in present for stat in ("mean", "variance")]
        lines = ["| Feature | " + " | ".join(headers) + " |", "|" + "---|" * (len(headers) + 1)]
        for j, col in enumerate(self.columns):
            cells = []
            for w in present:
                cells += [f"{self.means[w][j]:.2f}", f"{self.variances[w][j]:.2f}"]
            lines.append(f"| {rename[col]} | " + " | ".join(cells) + " |")
        scope = ("this participant's own history" if self.level == "individual"
                 else "all participants' training data")
        text = (f"### Class statistics\nMean and variance of each feature per severity level, "
                f"computed over {scope}.\n" + "\n".join(lines))
        if self.absent:
            text += f"\nNo training windows for: {', '.join(self.absent)}."
        return text


def compute_class_statistics(train: Sequence[SampleWindow], level: str, config: FeatureConfig,
                             normalizer: Normalizer | None = None, category_map: CategoryMap | None = None,
                             participant_id: str | None = None) -> ClassStatistics:
    """Means/variances per class of the train windows' time-averaged features.

    ``level="individual"`` restricts to ``participant_id``'s windows; classes
    the user never showed are omitted (and listed as absent in the prompt).
    """
    if level not in ("individual", "population"):
        raise ValueError(f"level must be individual or population, got {level!r}")
    windows = list(train)
    if level == "individual":
        if participant_id is None:
            raise ValueError("individual statistics need a participant_id")
        windows = [s for s in windows if s.participant_id == participant_id]
    if not windows:
        raise ValueError("no training windows to compute statistics from")
    means, variances, counts = {}, {}, {}
    for level_ in SeverityLevel:
        ws = [s for s in windows if s.label == level_]
        if not ws:
            continue
        per_window = np.stack([table_values(s.values, config, normalizer, category_map).mean(axis=0)
                               for s in ws])
        means[level_.word] = per_window.mean(axis=0)
        variances[level_.word] = per_window.var(axis=0)
        counts[level_.word] = len(ws)
    return ClassStatistics(level, column_names(config), means, variances, counts, participant_id or "")


@dataclass(frozen=True)
class PatternKnowledge:
    """Free-text behavioural summaries per severity level from a summariser model."""

    patterns: dict[str, str]
    provenance: str
    participant_id: str = ""

    def render(self) -> str:
        lines = ["### Behavior patterns by severity level"]
        for w in LEVEL_WORDS:
            if w in self.patterns:
                lines.append(f"- {w}: {self.patterns[w].strip()}")
        return "\n".join(lines)


SUMMARY_REQUEST = "## Summary request"


def pattern_request(stats: ClassStatistics, rename: Mapping[str, str], level_word: str) -> str:
    """Prompt asking a stronger model to describe what sets one level apart."""
    return (f"{SUMMARY_REQUEST}\nBelow are behavior statistics for one student grouped by mental "
            f"health severity level. In two sentences, describe the behavior that distinguishes the "
            f"{level_word} level from the other levels.\nTarget level: {level_word}\n\n"
            + stats.render(rename) + "\n")


def derive_pattern_knowledge(client, stats: ClassStatistics, rename: Mapping[str, str] | None = None,
                             provenance: str | None = None) -> PatternKnowledge:
    rename = default_rename() if rename is None else rename
    patterns = {w: client.complete(pattern_request(stats, rename, w)).strip() for w in stats.means}
    return PatternKnowledge(patterns, provenance or getattr(client, "model", type(client).__name__),
                            stats.participant_id)


# ----------------------------------------------------------------- examples

def _flat(samples: Sequence[SampleWindow], n_days: int, config: FeatureConfig, normalizer: Normalizer,
          category_map: CategoryMap | None) -> np.ndarray:
    flat_cfg = FeatureConfig(config.dimension, config.granularity, Layout.FLATTENED)
    return represent(np.stack([s.values[:n_days] for s in samples]), flat_cfg, normalizer, category_map)


def cosine_similarities(target: SampleWindow, history: Sequence[SampleWindow], n_days: int,
                        config: FeatureConfig, normalizer: Normalizer,
                        category_map: CategoryMap | None = None) -> np.ndarray:
    q = _flat([target], n_days, config, normalizer, category_map)[0]
    h = _flat(history, n_days, config, normalizer, category_map)
    denom = np.linalg.norm(h, axis=1) * np.linalg.norm(q)
    return np.divide(h @ q, denom, out=np.zeros(len(h)), where=denom > 0)


def select_recent(history: Sequence[SampleWindow], k: int) -> list[SampleWindow]:
    """Latest ``k`` windows, returned oldest first."""
    return sorted(history, key=lambda s: s.start_day)[-k:]


def select_similar(target: SampleWindow, history: Sequence[SampleWindow], k: int, n_days: int,
                   config: FeatureConfig, normalizer: Normalizer,
                   category_map: CategoryMap | None = None) -> list[SampleWindow]:
    """Top-``k`` history windows by cosine similarity, most similar first."""
    history = list(history)
    sims = cosine_similarities(target, history, n_days, config, normalizer, category_map)
    order = sorted(range(len(history)), key=lambda i: (-sims[i], -history[i].start_day))
    return [history[i] for i in order[:k]]


def render_examples(examples: Sequence[SampleWindow], n_days: int, config: FeatureConfig,
                    rename: Mapping[str, str], normalizer: Normalizer | None,
                    category_map: CategoryMap | None) -> str:
    blocks = []
    for i, s in enumerate(examples, start=1):
        table = serialize_window(s.values[:n_days], config, rename, normalizer, category_map)
        blocks.append(f"### Example {i}\n{table}\nSeverity level: {s.label.word}")
    return "Labelled examples from this participant's earlier data, in the same format as the task.\n\n" + \
        "\n\n".join(blocks)


# ------------------------------------------------------------------- builder

@dataclass
class PromptContext:
    """Train-side inputs a strategy may draw on. Nothing from test windows belongs here."""

    config: FeatureConfig
    normalizer: Normalizer
    category_map: CategoryMap | None = None
    rename: Mapping[str, str] = field(default_factory=default_rename)
    k: int = DEFAULT_K
    population_stats: ClassStatistics | None = None
    patterns: Mapping[str, PatternKnowledge] = field(default_factory=dict)


def build_prompt(strategy: str, target: SampleWindow, history: Sequence[SampleWindow], ctx: PromptContext,
                 n_days: int = 7, participant_header: bool = False) -> PromptBundle:
    """Assemble the prompt for one target window.

    ``history`` is the target user's training windows. Few-shot strategies
    with no history fall back to zero-shot with a warning.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if strategy.startswith("few_shot") and ctx.k < 1:
        raise ValueError("few-shot prompting needs k >= 1")
    history = [s for s in history if s.participant_id == target.participant_id]
    if strategy.startswith("few_shot") and not history:
        log.warning("no training history for %s; falling back to zero_shot", target.participant_id)
        strategy = "zero_shot"
    cfg = ctx.config
    context = ""
    if strategy == "few_shot_recency":
        context = render_examples(select_recent(history, ctx.k), n_days, cfg, ctx.rename,
                                  ctx.normalizer, ctx.category_map)
    elif strategy == "few_shot_similarity":
        chosen = select_similar(target, history, ctx.k, n_days, cfg, ctx.normalizer, ctx.category_map)
        context = render_examples(chosen, n_days, cfg, ctx.rename, ctx.normalizer, ctx.category_map)
    elif strategy == "statistical_individual":
        stats = compute_class_statistics(history, "individual", cfg, ctx.normalizer, ctx.category_map,
                                         target.participant_id)
        context = stats.render(ctx.rename)
    elif strategy == "statistical_population":
        if ctx.population_stats is None:
            raise ValueError("statistical_population needs population statistics in the context")
        context = ctx.population_stats.render(ctx.rename)
    elif strategy == "pattern":
        knowledge = ctx.patterns.get(target.participant_id)
        if knowledge is None:
            raise ValueError(f"no pattern knowledge for participant {target.participant_id}")
        context = knowledge.render()
    table = serialize_window(target.values[:n_days], cfg, ctx.rename, ctx.normalizer, ctx.category_map)
    return PromptBundle(system_instruction(cfg, n_days), context, table, ANSWER_FORMAT,
                        target.participant_id if participant_header else "")
