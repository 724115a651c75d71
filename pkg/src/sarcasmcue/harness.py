"""Evaluation protocol: repeated runs, metrics, significance, ablation and reports."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .backend import Backend
from .core import Label, Sample
from .cues import CueCategory, CuePool, ablate, standard_pool
from .data import Dataset, check_leakage, holdout_dev, sample_k_shots
from .metrics import DegenerateLabels, accuracy, error_rates, macro_f1, unpaired_t_test
from .prompts import PromptSet, default_prompts
from .strategies import (
    InvalidArity,
    Prediction,
    Strategy,
    StrategyTrace,
    derive_seed,
    run_boc,
    run_coc,
    run_cot,
    run_goc,
    run_io,
)
from .toc import TrainConfig, run_toc, train_toc
from .util import atomic_write_text

log = logging.getLogger(__name__)

DEFAULT_RUNS = 5
DEFAULT_SEEDS = (1, 2, 3, 4, 5)
CSV_COLUMNS = ["strategy", "dataset", "k", "acc_mean", "f1_mean", "acc_std", "f1_std", "p_value"]
REPORT_FORMAT = "sarcasmcue-report"
REPORT_VERSION = 1
CONVENTIONS = {
    "error_rates": "fp_rate = FP / #gold NotSarcastic; fn_rate = FN / #gold Sarcastic (NaN -> null when the class is empty)",
    "significance": "two-sided Welch unequal-variance t-test on per-run Macro-F1",
    "std": "sample standard deviation over runs (ddof=1; 0 for a single run)",
    "unparseable": "unparseable answers count as the NotSarcastic fallback",
}
ABLATABLE = (Strategy.GOC, Strategy.BOC, Strategy.TOC)


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending setting."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class StrategyConfig:
    strategy: Strategy
    k: int = 0
    T: int = 5
    q: int = 3
    threshold: float = 0.95
    max_cues: int = 10
    start_cue: str | None = None  # first cue of the effective pool
    removed: CueCategory | None = None
    toc: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy.parse(self.strategy))
        if self.removed is not None:
            object.__setattr__(self, "removed", CueCategory.parse(self.removed))

    @property
    def tag(self) -> str:
        name = self.strategy.value
        if self.removed is not None:
            name += f" w/o {self.removed.value[:3]}"
        return name

    def effective_pool(self, pool: CuePool) -> CuePool:
        return ablate(pool, self.removed) if self.removed is not None else pool

    def validate(self, pool: CuePool) -> None:
        if self.k < 0:
            raise ConfigError("k", "must be >= 0")
        if self.k and self.strategy is Strategy.TOC:
            raise ConfigError("k", "ToC is a trained head and takes no demonstrations; use k=0")
        if self.removed is not None and self.strategy not in ABLATABLE:
            raise ConfigError("removed", f"ablation applies to {[s.value for s in ABLATABLE]} only")
        eff = self.effective_pool(pool)
        if self.strategy is Strategy.BOC:
            if not 1 <= self.q <= len(eff):
                raise InvalidArity(f"q={self.q} must satisfy 1 <= q <= {len(eff)} (pool size)")
            if self.T < 1:
                raise InvalidArity(f"T={self.T} must be >= 1")
        if self.strategy is Strategy.GOC:
            if not 0 < self.threshold <= 1:
                raise ConfigError("threshold", "must be in (0, 1]")
            if self.max_cues < 1:
                raise ConfigError("max_cues", "must be >= 1")
            if self.start_cue is not None and self.start_cue not in eff:
                raise ConfigError("start_cue", f"{self.start_cue!r} is not in the pool {eff.ids}")

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy.value, "k": self.k, "T": self.T, "q": self.q,
            "threshold": self.threshold, "max_cues": self.max_cues, "start_cue": self.start_cue,
            "removed": self.removed.value if self.removed else None,
            "toc": dataclasses.asdict(self.toc),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StrategyConfig":
        data = dict(data)
        toc = data.pop("toc", None) or {}
        return cls(toc=TrainConfig(**toc), **data)


@dataclass
class RunResult:
    strategy: str
    dataset: str
    k: int
    run_index: int
    seed: int
    predictions: list[Prediction]
    golds: list[Label]
    accuracy: float = math.nan
    macro_f1: float = math.nan
    fp_rate: float = math.nan
    fn_rate: float = math.nan
    failed: bool = False
    error: str | None = None
    meta: dict = field(default_factory=dict)

    def score(self) -> "RunResult":
        preds = [p.label for p in self.predictions]
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DegenerateLabels)
            self.accuracy = accuracy(preds, self.golds)
            self.macro_f1 = macro_f1(preds, self.golds)
            self.fp_rate, self.fn_rate = error_rates(preds, self.golds)
        if caught:
            self.meta["degenerate_labels"] = True
        self.meta["unparseable_fallbacks"] = sum(p.unparseable_fallback for p in self.predictions)
        return self

    def to_dict(self) -> dict:
        return {
            "run_index": self.run_index, "seed": self.seed, "n": len(self.golds),
            "accuracy": _num(self.accuracy), "macro_f1": _num(self.macro_f1),
            "fp_rate": _num(self.fp_rate), "fn_rate": _num(self.fn_rate),
            "failed": self.failed, "error": self.error, "meta": self.meta,
        }


def _num(x: float) -> float | None:
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else float(x)


@dataclass
class MetricsReport:
    strategy: str
    dataset: str
    k: int
    runs: list[RunResult]
    config: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    p_value: float | None = None
    baseline: str | None = None

    def _values(self, attr) -> np.ndarray:
        return np.array([getattr(r, attr) for r in self.runs if not r.failed], dtype=float)

    def mean(self, attr: str) -> float:
        vals = self._values(attr)
        vals = vals[~np.isnan(vals)]
        return float(vals.mean()) if vals.size else math.nan

    def std(self, attr: str) -> float:
        vals = self._values(attr)
        vals = vals[~np.isnan(vals)]
        if vals.size == 0:
            return math.nan
        return float(vals.std(ddof=1)) if vals.size > 1 else 0.0

    @property
    def f1_values(self) -> list[float]:
        return self._values("macro_f1").tolist()

    @property
    def error_rates(self) -> tuple[float, float]:
        return self.mean("fp_rate"), self.mean("fn_rate")

    def fingerprint(self) -> str:
        blob = json.dumps({"config": self.config, "meta": self.meta}, sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def summary(self) -> dict:
        return {
            "strategy": self.strategy, "dataset": self.dataset, "k": self.k,
            "acc_mean": _num(self.mean("accuracy")), "f1_mean": _num(self.mean("macro_f1")),
            "acc_std": _num(self.std("accuracy")), "f1_std": _num(self.std("macro_f1")),
            "p_value": _num(self.p_value),
        }

    def to_dict(self) -> dict:
        fp, fn = self.error_rates
        return {
            **self.summary(),
            "baseline": self.baseline,
            "error_rates": {"fp_rate": _num(fp), "fn_rate": _num(fn)},
            "runs": [r.to_dict() for r in self.runs],
            "config": self.config,
            "meta": self.meta,
            "config_fingerprint": self.fingerprint(),
        }


def attach_significance(report: MetricsReport, baseline: MetricsReport) -> MetricsReport:
    """Set ``report.p_value`` from Welch's test of per-run Macro-F1 against *baseline*."""
    report.p_value = unpaired_t_test(report.f1_values, baseline.f1_values)
    report.baseline = baseline.strategy
    return report


# -- running ---------------------------------------------------------------------


def _runner(config: StrategyConfig, backend: Backend, pool: CuePool, prompts: PromptSet,
            demos, seed: int, params=None) -> Callable[[Sample], tuple[Prediction, StrategyTrace]]:
    s = config.strategy
    if s is Strategy.IO:
        return lambda x: run_io(x, backend, demos, prompts)
    if s is Strategy.COT:
        return lambda x: run_cot(x, backend, demos, prompts)
    if s is Strategy.COC:
        return lambda x: run_coc(x, backend, demos, prompts)
    if s is Strategy.GOC:
        return lambda x: run_goc(x, backend, pool, config.threshold, config.max_cues, config.start_cue,
                                 demos, prompts, config.removed)
    if s is Strategy.BOC:
        return lambda x: run_boc(x, backend, pool, config.T, config.q, derive_seed(seed, x.id),
                                 demos, prompts, config.removed)
    weights, head = params
    return lambda x: run_toc(x, backend, weights, head, pool, prompts, config.removed)


def _trace_path(out_dir: Path, report_tag: str, run_index: int) -> Path:
    safe = report_tag.replace(" ", "_").replace("/", "")
    return out_dir / "traces" / safe / f"run{run_index}.jsonl"


def _persist(path: Path, result: RunResult, traces: Sequence[StrategyTrace]) -> None:
    lines = [json.dumps({"header": {
        "strategy": result.strategy, "dataset": result.dataset, "k": result.k,
        "run_index": result.run_index, "seed": result.seed, "failed": result.failed,
        "error": result.error, "meta": result.meta,
    }}, sort_keys=True)]
    for pred, gold, trace in zip(result.predictions, result.golds, traces):
        lines.append(json.dumps({
            "sample_id": pred.sample_id, "gold": gold.value, "label": pred.label.value,
            "unparseable_fallback": pred.unparseable_fallback, "trace": trace.to_dict(),
        }, sort_keys=True, ensure_ascii=False))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _fingerprint(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def evaluate(
    config: StrategyConfig,
    dataset: Dataset,
    backend: Backend,
    runs: int = DEFAULT_RUNS,
    seeds: Sequence[int] | None = None,
    *,
    pool: CuePool | None = None,
    prompts: PromptSet | None = None,
    out_dir: str | Path | None = None,
    workers: int = 1,
    run_config: dict | None = None,
) -> MetricsReport:
    """Run *config* over the test split *runs* times, one seed per run.

    The seed drives demonstration sampling, BoC subsets and ToC
    initialization. Traces go to ``<out_dir>/traces/`` when *out_dir* is set;
    a failing run is saved with ``failed=true`` before the error propagates.
    """
    seeds = list(DEFAULT_SEEDS[:runs] if seeds is None else seeds)
    if len(seeds) != runs:
        raise ConfigError("seeds", f"expected {runs} seeds, got {len(seeds)}")
    pool = pool if pool is not None else standard_pool()
    prompts = prompts or default_prompts()
    config.validate(pool)
    eff_pool = config.effective_pool(pool)
    test = dataset.split("test")
    if not test:
        raise ConfigError("dataset", f"{dataset.name} has no test split")
    golds = [s.gold for s in test]

    meta: dict[str, Any] = {
        "artifact_version": __version__,
        "backend_model_id": backend.model_id,
        "prompt_hashes": prompts.hashes(),
        "cue_pool": eff_pool.ids,
        "cue_pool_hash": _fingerprint(json.dumps(eff_pool.to_json(), sort_keys=True)),
        "seeds": seeds,
        "runs": runs,
        "conventions": CONVENTIONS,
    }
    ds_for_train = dataset
    if config.strategy is Strategy.TOC and not dataset.split("dev"):
        meta["dev_from_train_holdout"] = 0.1

    report = MetricsReport(config.tag, dataset.name, config.k, [],
                           config=run_config or {"strategy": config.to_dict()}, meta=meta)
    out = Path(out_dir) if out_dir is not None else None
    for index, seed in enumerate(seeds, 1):
        result = RunResult(config.tag, dataset.name, config.k, index, seed, [], golds)
        traces: list[StrategyTrace] = []
        try:
            demos = sample_k_shots(dataset, config.k, seed)
            check_leakage(demos, test)
            result.meta["demo_ids"] = list(demos.ids)
            params = None
            if config.strategy is Strategy.TOC:
                if "dev_from_train_holdout" in meta:
                    ds_for_train = holdout_dev(dataset, 0.1, seed)
                toc_cfg = dataclasses.replace(config.toc, seed=seed)
                weights, head, history = train_toc(
                    ds_for_train.split("train"), ds_for_train.split("dev"), backend, toc_cfg,
                    eff_pool, prompts, config.removed,
                )
                params = (weights, head)
                result.meta["toc_epochs"] = len(history)
                result.meta["toc_best_dev_macro_f1"] = max(h["dev_macro_f1"] for h in history)
            run_one = _runner(config, backend, eff_pool, prompts, demos, seed, params)
            if workers > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool_exec:
                    outputs = list(pool_exec.map(run_one, test))
            else:
                outputs = []
                for sample in test:
                    outputs.append(run_one(sample))
            result.predictions = [p for p, _ in outputs]
            traces = [t for _, t in outputs]
            result.meta["ties"] = sum(bool(t.flags.get("tie")) for t in traces)
            result.score()
        except Exception as exc:
            result.failed = True
            result.error = f"{type(exc).__name__}: {exc}"
            result.golds = golds[: len(result.predictions)]
            report.runs.append(result)
            if out is not None:
                _persist(_trace_path(out, config.tag, index), result, traces)
                atomic_write_text(out / "traces" / "FAILED", f"{config.tag} run {index}: {result.error}\n")
            raise
        report.runs.append(result)
        if out is not None:
            _persist(_trace_path(out, config.tag, index), result, traces)
        log.info("%s on %s run %d: acc=%.4f f1=%.4f", config.tag, dataset.name, index,
                 result.accuracy, result.macro_f1)
    return report


def run_ablation(config: StrategyConfig, dataset: Dataset, backend: Backend,
                 removed: CueCategory | str, **kwargs) -> MetricsReport:
    """:func:`evaluate` with *removed* cues filtered out and prompted away."""
    config = dataclasses.replace(config, removed=CueCategory.parse(removed))
    if config.strategy not in ABLATABLE:
        raise ConfigError("strategy", f"ablation supports {[s.value for s in ABLATABLE]}, not {config.strategy.value}")
    return evaluate(config, dataset, backend, **kwargs)


def load_traces(path: str | Path) -> tuple[RunResult, list[StrategyTrace]]:
    lines = Path(path).read_text("utf-8").splitlines()
    header = json.loads(lines[0])["header"]
    preds, golds, traces = [], [], []
    for line in lines[1:]:
        rec = json.loads(line)
        strategy = Strategy.parse(rec["trace"]["strategy"])
        preds.append(Prediction(Label(rec["label"]), rec["sample_id"], strategy, rec["unparseable_fallback"]))
        golds.append(Label(rec["gold"]))
        traces.append(StrategyTrace.from_dict(rec["trace"]))
    result = RunResult(header["strategy"], header["dataset"], header["k"], header["run_index"],
                       header["seed"], preds, golds, failed=header["failed"], error=header["error"])
    if not result.failed:
        result.score()
    result.meta = header["meta"]
    return result, traces


def report_from_traces(trace_dir: str | Path, config: dict | None = None, meta: dict | None = None) -> MetricsReport:
    """Rebuild a report from the per-run trace files of one strategy."""
    files = sorted(Path(trace_dir).glob("run*.jsonl"), key=lambda p: int(p.stem[3:]))
    if not files:
        raise FileNotFoundError(f"no run traces in {trace_dir}")
    results = [load_traces(f)[0] for f in files]
    first = results[0]
    return MetricsReport(first.strategy, first.dataset, first.k, results, config or {}, meta or {})


# -- reports ------------------------------------------------------------------------


def _csv_cell(v) -> str:
    return "" if v is None else repr(v) if isinstance(v, float) else str(v)


def write_report(reports: Sequence[MetricsReport], out_dir: str | Path, chart_data: bool = True) -> list[Path]:
    """Write ``results.csv``, ``report.json`` and (optionally) ``error_rates.csv``."""
    if not reports:
        raise ValueError("write_report needs at least one report")
    out = Path(out_dir)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in reports:
        summary = r.summary()
        writer.writerow([_csv_cell(summary[c]) for c in CSV_COLUMNS])
    paths = [atomic_write_text(out / "results.csv", buf.getvalue())]

    doc = {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "artifact_version": __version__,
        "csv_columns": CSV_COLUMNS,
        "conventions": CONVENTIONS,
        "reports": [r.to_dict() for r in reports],
    }
    paths.append(atomic_write_text(out / "report.json", json.dumps(doc, indent=2, sort_keys=True) + "\n"))

    if chart_data:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["strategy", "dataset", "k", "fp_rate", "fn_rate"])
        for r in reports:
            fp, fn = r.error_rates
            writer.writerow([r.strategy, r.dataset, r.k, _csv_cell(_num(fp)), _csv_cell(_num(fn))])
        paths.append(atomic_write_text(out / "error_rates.csv", buf.getvalue()))
    return paths


def read_report(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text("utf-8"))
    if doc.get("format") != REPORT_FORMAT:
        raise ValueError(f"{path}: not a {REPORT_FORMAT} file")
    return doc


def report_from_dict(data: dict) -> MetricsReport:
    """Inverse of ``MetricsReport.to_dict`` at the metrics level (predictions are not kept)."""
    runs = []
    for r in data["runs"]:
        rr = RunResult(data["strategy"], data["dataset"], data["k"], r["run_index"], r["seed"], [], [],
                       failed=r["failed"], error=r["error"], meta=r["meta"])
        for key in ("accuracy", "macro_f1", "fp_rate", "fn_rate"):
            setattr(rr, key, math.nan if r[key] is None else r[key])
        runs.append(rr)
    rep = MetricsReport(data["strategy"], data["dataset"], data["k"], runs, data.get("config", {}),
                        data.get("meta", {}), data.get("p_value"), data.get("baseline"))
    return rep
