"""Prompt construction for LLM forecasting, scored offline with the rule-based mock client.

Run: python demos/03_llm_prompting.py
To use a real endpoint, build an HTTPClient from a JSON config instead of MockClient:
    {"endpoint": "https://.../v1/chat/completions", "model": "...", "transcript": "calls.jsonl"}
with the key in MHBENCH_LLM_API_KEY.
"""
import tempfile
from pathlib import Path

from mhbench import syngen
from mhbench.core import split_dataset
from mhbench.evaluation import forecast_eval
from mhbench.features import FeatureConfig
from mhbench.llm import STRATEGIES, MockClient, fit_llm
from mhbench.llm.peft import export_peft_corpus, read_jsonl

ds = syngen.generate(syngen.fixture("separable", seed=3, num_users=6, samples_per_user=(20, 24)))
tr, _, te = split_dataset(ds)
test = list(te)
weekly5 = FeatureConfig("5", "weekly", "sequence")  # five category scores, one row per week

# what the model is asked, for one window
f = fit_llm(MockClient(), "few_shot_recency", weekly5, tr, k=2)
print(f.prompts(test[:1])[0])

for strategy in STRATEGIES:
    f = fit_llm(MockClient(), strategy, FeatureConfig("35", "daily", "sequence"), tr)
    r = forecast_eval(f, test)
    print(f"{strategy:24s} macro-F1 {r.macro_f1:.3f}  unparseable {r.unparseable}")

# an instruction-tuning corpus for adapter training elsewhere
with tempfile.TemporaryDirectory() as tmp:
    path = export_peft_corpus(tr, f.ctx, Path(tmp) / "train.jsonl", user_aware=True)
    recs = read_jsonl(path)
    print(len(recs), "records; first completion:", recs[0]["completion"])
