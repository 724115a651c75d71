"""Regenerate the bundled fixture store from the simulated backend.

Every request made by the standard runs on the bundled 20-sample dataset
(all strategies at k=0, the prompted ones at k=5, plus GoC/BoC/ToC ablations and ToC
training at seeds 0..5) is recorded into
``src/sarcasmcue/resources/fixtures/responses/records.jsonl``.
"""

import shutil
import tempfile
from pathlib import Path

from sarcasmcue import CachedBackend, CueCategory, DiskCache, StrategyConfig, evaluate, load_dataset, run_ablation
from sarcasmcue.cli import bundled_path
from sarcasmcue.simulated import SimulatedBackend
from sarcasmcue.toc import TrainConfig, train_toc

SEEDS = [1, 2, 3, 4, 5]
STRATEGIES = ["IO", "CoT", "CoC", "GoC", "BoC", "ToC"]


def main():
    target = Path(__file__).resolve().parents[1] / "src/sarcasmcue/resources/fixtures/responses"
    ds = load_dataset(bundled_path("fixtures", "sarcasm20.jsonl"))
    with tempfile.TemporaryDirectory() as tmp:
        cache = DiskCache(tmp)
        backend = CachedBackend(SimulatedBackend(), cache)
        for k in (0, 5):
            for s in STRATEGIES:
                if k and s == "ToC":
                    continue
                evaluate(StrategyConfig(s, k=k), ds, backend, seeds=SEEDS)
        for s in ("GoC", "BoC", "ToC"):
            for cat in CueCategory:
                run_ablation(StrategyConfig(s), ds, backend, cat, seeds=SEEDS)
        for seed in range(0, 6):
            train_toc(ds.split("train"), ds.split("dev"), backend, TrainConfig(seed=seed))
        lines = sorted(Path(cache.path).read_text("utf-8").splitlines())
        target.mkdir(parents=True, exist_ok=True)
        (target / "records.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"recorded {len(lines)} records ({backend.upstream_calls} completions, "
              f"{backend.embed_calls} embeddings) into {target}")
    shutil.rmtree(Path(tmp), ignore_errors=True)


if __name__ == "__main__":
    main()
