"""Classical and neural forecasters, and how accuracy grows with more observed days.

Run: python demos/02_models_and_early_forecasting.py   (about a minute on one core)
"""
from mhbench import syngen
from mhbench.adapters import fit_classical, fit_neural
from mhbench.core import split_dataset
from mhbench.evaluation import early_curve, forecast_eval, format_table
from mhbench.features import FeatureConfig
from mhbench.models_classical import ClassicalSpec
from mhbench.models_neural import NeuralSpec

ds = syngen.generate(syngen.fixture("heterogeneity", seed=1))
tr, va, te = split_dataset(ds)
test = list(te)

agg = FeatureConfig("35", "daily", "aggregated")  # window mean, for classical models
seq = FeatureConfig("35", "daily", "sequence")    # day-by-day, for sequence models

rows = []
for kind in ("logistic_regression", "random_forest", "xgboost_style_gbdt"):
    f = fit_classical(ClassicalSpec(kind, seed=1), agg, tr)
    rows.append((kind, forecast_eval(f, test)))

# the same transformer with and without a learned per-user vector
for pers in ("agnostic", "user_embedding"):
    f = fit_neural(NeuralSpec(kind="transformer_encoder", personalization=pers, seed=1), seq, tr, va)
    print(f"{pers}: stopped after {len(f.history.rows)} epochs")
    rows.append((f"transformer/{pers}", forecast_eval(f, test)))

# forecasting sees only days 1..7; the label is taken at day 14
print(format_table(rows))

# expanding window: same label, one more observed day each step
f = fit_classical(ClassicalSpec("logistic_regression"), agg, tr)
curve = early_curve(f, test)
print(curve.to_csv())
