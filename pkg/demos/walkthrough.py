"""Offline tour of the strategies on the bundled 20-sample dataset.

Uses the recorded fixture backend, so it runs without network access and
prints the same numbers every time:

    python demos/walkthrough.py
"""

from sarcasmcue import FixtureBackend, StrategyConfig, evaluate, load_dataset, run_ablation
from sarcasmcue.cli import bundled_path, default_fixture_dir
from sarcasmcue.cues import CueCategory
from sarcasmcue.harness import attach_significance
from sarcasmcue.strategies import run_coc, run_goc

dataset = load_dataset(bundled_path("fixtures", "sarcasm20.jsonl"))
backend = FixtureBackend(default_fixture_dir())
sample = dataset.split("test")[0]

print(f"sample {sample.id}: {sample.text!r} (gold {sample.gold.value})\n")

# CoC: surface sentiment, then true intention, then the verdict.
pred, trace = run_coc(sample, backend)
for i, step in enumerate(trace.steps, 1):
    print(f"CoC step {i}: {step.response}")
print(f"CoC label: {pred.label.value}\n")

# GoC keeps gathering cues until the model says it is confident enough.
pred, trace = run_goc(sample, backend)
print(f"GoC visited {trace.selected_cues} with confidences {trace.confidence_readings}")
print(f"GoC label: {pred.label.value}\n")

reports = {s: evaluate(StrategyConfig(s), dataset, backend) for s in ("IO", "CoT", "CoC", "GoC", "BoC", "ToC")}
for s, rep in reports.items():
    if s != "IO":
        attach_significance(rep, reports["IO"])
print(f"{'strategy':<8} {'acc':>13} {'macro-F1':>13} {'p vs IO':>8}")
for s, rep in reports.items():
    p = "" if rep.p_value is None else f"{rep.p_value:.3f}"
    print(f"{s:<8} {rep.mean('accuracy'):.3f}±{rep.std('accuracy'):.3f}"
          f"  {rep.mean('macro_f1'):.3f}±{rep.std('macro_f1'):.3f} {p:>8}")

print("\nablation (macro-F1):")
for s in ("GoC", "BoC", "ToC"):
    cells = [f"full {reports[s].mean('macro_f1'):.3f}"]
    for cat in CueCategory:
        rep = run_ablation(StrategyConfig(s), dataset, backend, cat)
        cells.append(f"{rep.strategy.split(' ', 1)[1]} {rep.mean('macro_f1'):.3f}")
    print(f"  {s}: " + ", ".join(cells))
print("\n(the fixture responses come from a rule-based stand-in, not a real LLM)")
