"""Synthetic stand-ins for the four benchmark corpora.

Files are written in each public distribution's own layout (IAC CSV with
``Label``/``Response Text`` columns, SemEval TSV, MUStARD JSON) with the
published split sizes, so the loaders and the split-count check can run
when the real corpora are not available. Texts are generated, not real.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

# (train, dev, test); MUStARD has no dev split
SPLIT_COUNTS = {
    "IAC-V1": (1595, 80, 320),
    "IAC-V2": (5216, 262, 1042),
    "SemEval 2018": (3634, 200, 784),
    "MUStARD": (552, 0, 138),
}
LAYOUT = {"IAC-V1": "iac", "IAC-V2": "iac", "SemEval 2018": "semeval2018", "MUStARD": "mustard"}

_WORDS = ("great", "love", "monday", "traffic", "weather", "really", "sure", "thanks", "meeting", "again",
          "movie", "dinner", "phone", "train", "wonderful", "homework", "coffee", "party", "rain", "work")


def _sentence(rng: np.random.Generator) -> str:
    n = int(rng.integers(4, 16))
    return " ".join(rng.choice(_WORDS, size=n)).capitalize() + "."


def write_corpus(name: str, directory: str | Path, seed: int = 0) -> Path:
    """Write corpus *name* (a key of :data:`SPLIT_COUNTS`) under *directory*; returns its path."""
    rng = np.random.default_rng([seed, sum(map(ord, name))])
    layout = LAYOUT[name]
    out = Path(directory) / name.replace(" ", "_")
    out.mkdir(parents=True, exist_ok=True)
    counts = dict(zip(("train", "dev", "test"), SPLIT_COUNTS[name]))
    if layout == "mustard":
        total = counts["train"] + counts["test"]
        data = {
            f"m{i:04d}": {"utterance": _sentence(rng), "speaker": "A", "context": [_sentence(rng)],
                          "context_speakers": ["B"], "show": "SYN", "sarcasm": bool(i % 2)}
            for i in range(total)
        }
        path = out / "sarcasm_data.json"
        path.write_text(json.dumps(data, indent=1), encoding="utf-8")
        return path
    for split, n in counts.items():
        if n == 0:
            continue
        if layout == "iac":
            with (out / f"{split}.csv").open("w", encoding="utf-8", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["Corpus", "Label", "ID", "Quote Text", "Response Text"])
                for i in range(n):
                    w.writerow(["GEN", "sarc" if i % 2 else "notsarc", f"{split}-{i}", _sentence(rng), _sentence(rng)])
        else:
            with (out / f"{split}.tsv").open("w", encoding="utf-8", newline="") as fh:
                w = csv.writer(fh, delimiter="\t")
                w.writerow(["Tweet index", "Label", "Tweet text"])
                for i in range(n):
                    w.writerow([f"{split}-{i}", i % 2, _sentence(rng)])
    return out
