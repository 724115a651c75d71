"""Dataset loading, split statistics and k-shot demonstration sampling.

The canonical on-disk format is jsonl with ``{id, text, label, split}``.
Public distributions are read through per-dataset column maps
(:data:`PRESETS`) or, for MUStARD, :func:`load_mustard`.
"""

from __future__ import annotations

import csv
import json
import warnings
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import SPLITS, Label, Sample
from .strategies import Demonstrations

STANDARD_K = (0, 1, 5, 10)

DEFAULT_LABEL_MAP: dict[str, Label] = {
    "sarcastic": Label.SARCASTIC,
    "sarcasm": Label.SARCASTIC,
    "sarc": Label.SARCASTIC,
    "1": Label.SARCASTIC,
    "true": Label.SARCASTIC,
    "yes": Label.SARCASTIC,
    "not sarcastic": Label.NOT_SARCASTIC,
    "not_sarcastic": Label.NOT_SARCASTIC,
    "notsarcastic": Label.NOT_SARCASTIC,
    "notsarc": Label.NOT_SARCASTIC,
    "0": Label.NOT_SARCASTIC,
    "false": Label.NOT_SARCASTIC,
    "no": Label.NOT_SARCASTIC,
}


class ParseError(ValueError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class UnknownLabel(ValueError):
    def __init__(self, value, line=None, known=()):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"unknown label {value!r}{where}; known labels: {sorted(known)}")
        self.value = value
        self.line = line


class InsufficientTrain(ValueError):
    pass


class DataLeakage(AssertionError):
    pass


@dataclass(frozen=True)
class Dataset:
    name: str
    samples: tuple[Sample, ...]

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        seen = Counter(s.id for s in self.samples)
        dupes = [i for i, n in seen.items() if n > 1]
        if dupes:
            raise ValueError(f"{self.name}: duplicate sample ids {sorted(dupes)[:5]}")

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def split(self, name: str) -> list[Sample]:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return [s for s in self.samples if s.split == name]

    @property
    def splits(self) -> dict[str, int]:
        counts = Counter(s.split for s in self.samples)
        return {name: counts.get(name, 0) for name in SPLITS}


@dataclass(frozen=True)
class DatasetStats:
    name: str
    avg_token_length: float
    counts: Mapping[str, int]

    def row(self) -> list[str]:
        def cell(n):
            return f"{n:,}" if n else "-"
        return [self.name, f"{self.avg_token_length:.0f}", cell(self.counts["train"]),
                cell(self.counts["dev"]), cell(self.counts["test"])]


def _normalize_label(raw, label_map: Mapping[str, Label], line=None) -> Label:
    if isinstance(raw, bool):
        raw = "true" if raw else "false"
    key = " ".join(str(raw).strip().lower().split())
    if key not in label_map:
        raise UnknownLabel(raw, line, label_map.keys())
    return label_map[key]


def _label_map(label_map: Mapping | None) -> dict[str, Label]:
    if label_map is None:
        return dict(DEFAULT_LABEL_MAP)
    out = {}
    for k, v in label_map.items():
        out[" ".join(str(k).strip().lower().split())] = v if isinstance(v, Label) else Label(v)
    return out


def load_dataset(
    path: str | Path,
    format: str = "jsonl",
    *,
    name: str | None = None,
    label_map: Mapping | None = None,
    default_split: str = "train",
    id_field: str = "id",
    text_field: str = "text",
    label_field: str = "label",
    split_field: str = "split",
    delimiter: str | None = None,
) -> Dataset:
    """Read a jsonl or csv/tsv file into a :class:`Dataset`.

    Rows without an id get ``<name>-<line>``; rows without a split get
    *default_split*.
    """
    path = Path(path)
    name = name or path.stem
    lmap = _label_map(label_map)
    if default_split not in SPLITS:
        raise ValueError(f"unknown default split {default_split!r}")

    def make(rec: Mapping, line: int) -> Sample:
        text = rec.get(text_field)
        if text is None or not str(text).strip():
            raise ParseError(path, line, f"missing or empty {text_field!r}")
        if rec.get(label_field) is None:
            raise ParseError(path, line, f"missing {label_field!r}")
        split = (rec.get(split_field) or default_split).strip().lower()
        if split not in SPLITS:
            raise ParseError(path, line, f"unknown split {split!r}")
        sid = rec.get(id_field)
        sid = str(sid) if sid not in (None, "") else f"{name}-{line}"
        return Sample(sid, str(text), _normalize_label(rec[label_field], lmap, line), split)

    samples = []
    if format == "jsonl":
        with path.open(encoding="utf-8") as fh:
            for line, raw in enumerate(fh, 1):
                if not raw.strip():
                    continue
                try:
                    rec = json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise ParseError(path, line, f"invalid JSON ({exc.msg})") from None
                if not isinstance(rec, dict):
                    raise ParseError(path, line, "record is not an object")
                samples.append(make(rec, line))
    elif format in ("csv", "tsv"):
        delim = delimiter or ("\t" if format == "tsv" else ",")
        with path.open(encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh, delimiter=delim)
            for rec in reader:
                samples.append(make(rec, reader.line_num))
    else:
        raise ValueError(f"unsupported format {format!r}; expected jsonl or csv")
    try:
        return Dataset(name, samples)
    except ValueError as exc:
        raise ParseError(path, 0, str(exc)) from None


# Column maps for the public distributions.
PRESETS: dict[str, dict] = {
    # Sarcasm Corpus V2 style CSV: Corpus, Label (sarc/notsarc), ID, Quote Text, Response Text
    "iac": {"format": "csv", "id_field": "ID", "text_field": "Response Text", "label_field": "Label",
            "label_map": {"sarc": "Sarcastic", "notsarc": "Not Sarcastic"}},
    # SemEval-2018 Task 3A TSV: Tweet index, Label (1/0), Tweet text
    "semeval2018": {"format": "tsv", "id_field": "Tweet index", "text_field": "Tweet text",
                    "label_field": "Label", "label_map": {"1": "Sarcastic", "0": "Not Sarcastic"}},
}


def load_preset(path: str | Path, preset: str, split: str, name: str | None = None) -> Dataset:
    """Load one split file of a public distribution through its column map."""
    try:
        opts = dict(PRESETS[preset])
    except KeyError:
        raise ValueError(f"unknown preset {preset!r}; known: {sorted(PRESETS)}") from None
    fmt = opts.pop("format")
    ds = load_dataset(path, fmt, name=name or preset, default_split=split, split_field="__none__", **opts)
    return ds


def load_mustard(path: str | Path, include_context: bool = False, test_fraction: float = 0.2,
                 seed: int = 0, name: str = "MUStARD") -> Dataset:
    """MUStARD ``sarcasm_data.json`` reduced to the target utterance text.

    Preceding context utterances are prepended only when *include_context* is
    set. The corpus ships without splits, so a seeded train/test split is drawn.
    """
    data = json.loads(Path(path).read_text("utf-8"))
    ids = sorted(data)
    rng = np.random.default_rng(seed)
    n_test = int(round(len(ids) * test_fraction))
    test_ids = set(rng.permutation(ids)[:n_test].tolist())
    samples = []
    for sid in ids:
        rec = data[sid]
        text = rec["utterance"]
        if include_context and rec.get("context"):
            text = "\n".join(list(rec["context"]) + [text])
        gold = Label.SARCASTIC if rec["sarcasm"] else Label.NOT_SARCASTIC
        samples.append(Sample(sid, text, gold, "test" if sid in test_ids else "train"))
    return Dataset(name, samples)


FORMATS = ("jsonl", "csv", "tsv", "mustard", *PRESETS)


def load_corpus(path: str | Path, format: str = "jsonl") -> Dataset:
    """Load a file, or a directory holding ``train.*``/``dev.*``/``test.*`` files, in *format*.

    *format* is a file format (jsonl, csv, tsv), a preset name for a
    directory in a public layout, or ``mustard`` for ``sarcasm_data.json``.
    """
    path = Path(path)
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; expected one of {list(FORMATS)}")
    if format == "mustard":
        return load_mustard(path / "sarcasm_data.json" if path.is_dir() else path)
    if not path.is_dir():
        if format in PRESETS:
            raise ValueError(f"format {format!r} expects a directory of train/dev/test files")
        return load_dataset(path, format)
    parts = []
    for split in SPLITS:
        found = sorted(p for p in path.glob(f"{split}.*") if p.is_file())
        if not found:
            continue
        if format in PRESETS:
            parts.append(load_preset(found[0], format, split, name=path.name))
        else:
            parts.append(load_dataset(found[0], format, name=path.name, default_split=split))
    if not parts:
        raise ValueError(f"{path}: no train/dev/test files found")
    return merge(path.name, parts)


def merge(name: str, parts: Iterable[Dataset]) -> Dataset:
    return Dataset(name, [s for part in parts for s in part])


def holdout_dev(ds: Dataset, fraction: float = 0.1, seed: int = 0) -> Dataset:
    """Move a seeded *fraction* of train into dev (for corpora without a dev split)."""
    train = ds.split("train")
    n_dev = max(1, int(round(len(train) * fraction))) if train else 0
    rng = np.random.default_rng(seed)
    dev_ids = {train[i].id for i in rng.permutation(len(train))[:n_dev]}
    samples = [Sample(s.id, s.text, s.gold, "dev") if s.id in dev_ids else s for s in ds.samples]
    return Dataset(ds.name, samples)


def write_jsonl(ds: Dataset, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for s in ds.samples:
            fh.write(json.dumps({"id": s.id, "text": s.text, "label": s.gold.value, "split": s.split},
                                ensure_ascii=False) + "\n")
    return path


def dataset_stats(ds: Dataset) -> DatasetStats:
    if not ds.samples:
        raise ValueError(f"{ds.name}: empty dataset")
    avg = sum(len(s.text.split()) for s in ds.samples) / len(ds.samples)
    return DatasetStats(ds.name, avg, ds.splits)


def format_stats_table(stats: Sequence[DatasetStats]) -> str:
    header = ["Dataset", "Avg. Length", "#Train", "#Dev", "#Test"]
    rows = [header] + [s.row() for s in stats]
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(r, widths)))
             for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def sample_k_shots(ds: Dataset, k: int, seed) -> Demonstrations:
    """*k* distinct train samples drawn with a seeded generator."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if k not in STANDARD_K:
        warnings.warn(f"k={k} is outside the standard settings {STANDARD_K}", stacklevel=2)
    train = ds.split("train")
    if k > len(train):
        raise InsufficientTrain(f"{ds.name}: k={k} demonstrations requested but only {len(train)} train samples")
    if k == 0:
        return Demonstrations()
    rng = np.random.default_rng(seed)
    picked = [train[i] for i in rng.choice(len(train), size=k, replace=False)]
    return Demonstrations(tuple((s.text, s.gold) for s in picked), tuple(s.id for s in picked))


def check_leakage(demos: Demonstrations, evaluated: Sequence[Sample]) -> None:
    """Raise if a demonstration id is also among the evaluated samples."""
    leaked = set(demos.ids) & {s.id for s in evaluated}
    if leaked:
        raise DataLeakage(f"demonstrations overlap the evaluated split: {sorted(leaked)}")
