"""Command-line entry point: ``sarcasmcue {run,train-toc,ablate,stats,report}``.

Settings come from defaults, then an optional JSON ``--config`` file, then
flags (flags win). Exit codes: 0 success, 1 runtime failure, 2 config error.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path
from typing import Any

from .backend import Backend, BackendError, CachedBackend, DiskCache, FixtureBackend
from .cues import CueCategory, CuePool, load_pool, standard_pool
from .data import (
    FORMATS,
    Dataset,
    DataLeakage,
    InsufficientTrain,
    ParseError,
    UnknownLabel,
    dataset_stats,
    format_stats_table,
    holdout_dev,
    load_corpus,
)
from .harness import (
    ABLATABLE,
    REPORT_FORMAT,
    ConfigError,
    MetricsReport,
    StrategyConfig,
    attach_significance,
    evaluate,
    read_report,
    report_from_dict,
    report_from_traces,
    run_ablation,
    write_report,
)
from .prompts import PromptSet, default_prompts, load_prompts
from .strategies import InvalidArity, Strategy
from .toc import TrainConfig, save_parameters, train_toc

log = logging.getLogger("sarcasmcue")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
PROVIDERS = ("fixture", "simulated", "openai", "anthropic")
DEFAULT_KEY_ENV = {"openai": "OPENAI_API_KEY", "anthropic": "ANTHROPIC_API_KEY"}
DEFAULT_OUT_DIR = "sarcasmcue_out"

DEFAULTS: dict[str, Any] = {
    "strategy": {"strategy": None, "k": 0, "T": 5, "q": 3, "threshold": 0.95, "max_cues": 10,
                 "start_cue": None, "removed": None, "toc": dataclasses.asdict(TrainConfig())},
    "dataset": {"path": None, "format": "jsonl"},
    "backend": {"provider": "fixture", "model_id": None, "base_url": None, "api_key_env": None,
                "fixture_dir": None, "max_in_flight": 4},
    "runs": 5,
    "seeds": None,
    "workers": 1,
    "cues": None,
    "prompts": None,
    "baseline": None,
    "remove": None,
}
SECRET_KEYS = {"api_key", "apikey", "key", "token", "secret", "password"}


def bundled_path(*parts: str) -> Path:
    return Path(str(resources.files("sarcasmcue").joinpath("resources", *parts)))


def default_fixture_dir() -> Path:
    return bundled_path("fixtures", "responses")


# -- configuration -------------------------------------------------------------------


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        where = f"{path}{key}"
        if key.lower() in SECRET_KEYS:
            raise ConfigError(where, "credentials are read from environment variables only; "
                                     "name the variable in backend.api_key_env")
        if key not in out:
            raise ConfigError(where, "unknown setting")
        if isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _merge(out[key], value, where + ".")
        else:
            out[key] = value
    return out


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("--config", f"file not found: {path}")
    try:
        doc = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if isinstance(doc, dict) and doc.get("format") == REPORT_FORMAT:
        # a report.json replays the config block of its first report
        doc = doc["reports"][0]["config"]
    if not isinstance(doc, dict):
        raise ConfigError("--config", "top level must be a JSON object")
    return doc


def _flag_overrides(args: argparse.Namespace) -> dict:
    """Map parsed flags onto the config tree, skipping flags left unset."""
    get = lambda name: getattr(args, name, None)  # noqa: E731
    tree: dict[str, Any] = {"strategy": {"toc": {}}, "dataset": {}, "backend": {}}
    s = tree["strategy"]
    for flag, key in [("strategy", "strategy"), ("k", "k"), ("T", "T"), ("q", "q"),
                      ("threshold", "threshold"), ("max_cues", "max_cues"), ("start_cue", "start_cue")]:
        if get(flag) is not None:
            s[key] = get(flag)
    if get("removed_flag") is not None:
        s["removed"] = get("removed_flag")
    for flag, key in [("lr", "learning_rate"), ("epochs", "epochs"), ("patience", "early_stop_patience"),
                      ("d_l", "d_l"), ("d_c", "d_c"), ("d_e", "d_e"), ("d", "d")]:
        if get(flag) is not None:
            s["toc"][key] = get(flag)
    if get("dataset") is not None:
        tree["dataset"]["path"] = get("dataset")
    if get("format") is not None:
        tree["dataset"]["format"] = get("format")
    for flag, key in [("backend", "provider"), ("model", "model_id"), ("base_url", "base_url"),
                      ("api_key_env", "api_key_env"), ("fixture_dir", "fixture_dir"),
                      ("max_in_flight", "max_in_flight")]:
        if get(flag) is not None:
            tree["backend"][key] = get(flag)
    if get("remove") is not None:
        tree["remove"] = get("remove")
    for key in ("runs", "workers", "cues", "prompts", "baseline"):
        if get(key) is not None:
            tree[key] = get(key)
    if get("seeds") is not None:
        tree["seeds"] = [int(x) for x in get("seeds").split(",") if x.strip()]
    elif get("seed") is not None:
        tree["seed_base"] = get("seed")
    return tree


def build_config(args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if getattr(args, "config", None):
        cfg = _merge(cfg, load_config_file(args.config))
    flags = _flag_overrides(args)
    seed_base = flags.pop("seed_base", None)
    cfg = _merge(cfg, flags)
    if seed_base is not None:
        cfg["seeds"] = list(range(seed_base, seed_base + int(cfg["runs"])))
    return cfg


def _positive_int(cfg: dict, key: str, minimum: int = 1) -> int:
    value = cfg[key]
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ConfigError(key, f"must be an integer >= {minimum}, got {value!r}")
    return value


def strategy_config(cfg: dict, pool: CuePool) -> StrategyConfig:
    s = dict(cfg["strategy"])
    if not s.get("strategy"):
        raise ConfigError("strategy.strategy", "required (use --strategy)")
    try:
        s["strategy"] = Strategy.parse(s["strategy"])
    except ValueError as exc:
        raise ConfigError("strategy.strategy", str(exc)) from None
    toc = dict(s.pop("toc"))
    lr = toc.get("learning_rate")
    if not isinstance(lr, (int, float)) or lr <= 0:
        raise ConfigError("strategy.toc.learning_rate", f"must be > 0, got {lr!r}")
    try:
        tc = TrainConfig(**toc)
    except (TypeError, ValueError) as exc:
        raise ConfigError("strategy.toc", str(exc)) from None
    if s.get("removed") is not None:
        try:
            s["removed"] = CueCategory.parse(s["removed"])
        except ValueError as exc:
            raise ConfigError("strategy.removed", str(exc)) from None
    try:
        sc = StrategyConfig(toc=tc, **s)
    except (TypeError, ValueError) as exc:
        raise ConfigError("strategy", str(exc)) from None
    try:
        sc.validate(pool)
    except ConfigError as exc:
        raise ConfigError(f"strategy.{exc.field}", str(exc).split(": ", 1)[-1]) from None
    return sc


def resolve_dataset_path(raw: str | None) -> Path:
    if not raw:
        raise ConfigError("dataset.path", "required (use --dataset)")
    path = Path(raw)
    if path.exists():
        return path
    bundled = bundled_path("fixtures", Path(raw).name)
    for candidate in (bundled, bundled.with_suffix(".jsonl")):
        if candidate.is_file():
            return candidate
    raise ConfigError("dataset.path", f"not found: {raw}")


def load_any(path: Path, fmt: str) -> Dataset:
    try:
        return load_corpus(path, fmt)
    except (ParseError, UnknownLabel):
        raise
    except ValueError as exc:
        field = "dataset.format" if "format" in str(exc) else "dataset.path"
        raise ConfigError(field, str(exc)) from None


def dataset_from(cfg: dict) -> Dataset:
    return load_any(resolve_dataset_path(cfg["dataset"]["path"]), cfg["dataset"]["format"] or "jsonl")


def pool_and_prompts(cfg: dict) -> tuple[CuePool, PromptSet]:
    try:
        pool = load_pool(cfg["cues"]) if cfg["cues"] else standard_pool()
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError("cues", str(exc)) from None
    try:
        prompts = load_prompts(cfg["prompts"]) if cfg["prompts"] else default_prompts()
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError("prompts", str(exc)) from None
    return pool, prompts


def make_backend(cfg: dict, cache_dir: str | None) -> Backend:
    b = cfg["backend"]
    provider = b["provider"]
    if provider not in PROVIDERS:
        raise ConfigError("backend.provider", f"unknown profile {provider!r}; expected one of {list(PROVIDERS)}")
    if provider == "fixture":
        fixture_dir = Path(b["fixture_dir"]) if b["fixture_dir"] else default_fixture_dir()
        if not fixture_dir.is_dir():
            raise ConfigError("backend.fixture_dir", f"not a directory: {fixture_dir}")
        inner: Backend = FixtureBackend(fixture_dir, model_id=b["model_id"])
    elif provider == "simulated":
        from .simulated import SimulatedBackend
        inner = SimulatedBackend()
    else:
        from .http_backends import AnthropicBackend, OpenAIBackend
        if not b["model_id"]:
            raise ConfigError("backend.model_id", f"required for the {provider} profile")
        cls = OpenAIBackend if provider == "openai" else AnthropicBackend
        env = b["api_key_env"] or DEFAULT_KEY_ENV[provider]
        if not os.environ.get(env):
            raise ConfigError("backend.api_key_env", f"environment variable {env} is not set")
        inner = cls(b["model_id"], base_url=b["base_url"], api_key_env=env, max_in_flight=b["max_in_flight"])
    cache = DiskCache(cache_dir) if cache_dir else None
    return CachedBackend(inner, cache)


def _replay_block(cfg: dict) -> dict:
    """Config as embedded in reports: everything except output locations."""
    block = copy.deepcopy(cfg)
    if block["dataset"]["path"]:
        block["dataset"]["path"] = str(block["dataset"]["path"])
    return block


# -- commands ------------------------------------------------------------------------


def _seeds(cfg: dict) -> list[int]:
    runs = _positive_int(cfg, "runs")
    seeds = cfg["seeds"] if cfg["seeds"] is not None else list(range(1, runs + 1))
    if len(seeds) != runs:
        raise ConfigError("seeds", f"expected {runs} seeds (one per run), got {len(seeds)}")
    return [int(s) for s in seeds]


def _prepare(args):
    cfg = build_config(args)
    pool, prompts = pool_and_prompts(cfg)
    sc = strategy_config(cfg, pool)
    seeds = _seeds(cfg)
    cfg["seeds"] = seeds
    workers = _positive_int(cfg, "workers")
    dataset = dataset_from(cfg)
    backend = make_backend(cfg, args.cache_dir)
    return cfg, pool, prompts, sc, seeds, workers, dataset, backend


def _print_summary(reports: list[MetricsReport], out_dir: Path) -> None:
    for r in reports:
        s = r.summary()
        p = "" if s["p_value"] is None else f"  p={s['p_value']:.4g}"
        print(f"{s['strategy']:<14} {s['dataset']:<12} k={s['k']}  acc={s['acc_mean']:.4f}±{s['acc_std']:.4f}"
              f"  f1={s['f1_mean']:.4f}±{s['f1_std']:.4f}{p}")
    print(f"wrote {out_dir / 'results.csv'} and {out_dir / 'report.json'}")


def cmd_run(args) -> int:
    cfg, pool, prompts, sc, seeds, workers, dataset, backend = _prepare(args)
    out = Path(args.out_dir)
    report = evaluate(sc, dataset, backend, len(seeds), seeds, pool=pool, prompts=prompts,
                      out_dir=out, workers=workers, run_config=_replay_block(cfg))
    reports = [report]
    if cfg["baseline"]:
        base_cfg = _merge(cfg, {"strategy": {"strategy": cfg["baseline"]}, "baseline": None})
        base_sc = strategy_config(base_cfg, pool)
        base = evaluate(base_sc, dataset, backend, len(seeds), seeds, pool=pool, prompts=prompts,
                        out_dir=out, workers=workers, run_config=_replay_block(base_cfg))
        attach_significance(report, base)
        reports.append(base)
    write_report(reports, out)
    _print_summary(reports, out)
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg, pool, prompts, sc, seeds, workers, dataset, backend = _prepare(args)
    if sc.strategy not in ABLATABLE:
        raise ConfigError("strategy.strategy", f"ablation supports {[s.value for s in ABLATABLE]}, "
                                               f"not {sc.strategy.value}")
    try:
        removed = [CueCategory.parse(r) for r in (cfg["remove"] or [c.value for c in CueCategory])]
    except ValueError as exc:
        raise ConfigError("remove", str(exc)) from None
    out = Path(args.out_dir)
    common = dict(pool=pool, prompts=prompts, out_dir=out, workers=workers)
    reports = [evaluate(dataclasses.replace(sc, removed=None), dataset, backend, len(seeds), seeds,
                        run_config=_replay_block(_merge(cfg, {"strategy": {"removed": None}})), **common)]
    for cat in removed:
        block = _replay_block(_merge(cfg, {"strategy": {"removed": cat.value}}))
        reports.append(run_ablation(sc, dataset, backend, cat, runs=len(seeds), seeds=seeds,
                                    run_config=block, **common))
    write_report(reports, out)
    _print_summary(reports, out)
    return EXIT_OK


def cmd_train_toc(args) -> int:
    cfg = build_config(args)
    cfg["strategy"]["strategy"] = "ToC"
    pool, prompts = pool_and_prompts(cfg)
    sc = strategy_config(cfg, pool)
    seed = args.seed if args.seed is not None else sc.toc.seed
    tc = dataclasses.replace(sc.toc, seed=seed)
    dataset = dataset_from(cfg)
    if not dataset.split("train"):
        raise ConfigError("dataset.path", f"{dataset.name} has no train split")
    if not dataset.split("dev"):
        dataset = holdout_dev(dataset, 0.1, seed)
    backend = make_backend(cfg, args.cache_dir)
    weights, head, history = train_toc(dataset.split("train"), dataset.split("dev"), backend, tc,
                                       pool, prompts, sc.removed)
    for h in history:
        print(f"epoch {h['epoch']:4d}  loss={h['loss']:.6f}  train_acc={h['train_accuracy']:.4f}"
              f"  dev_f1={h['dev_macro_f1']:.4f}")
    path = save_parameters(Path(args.out_dir) / "toc_params.json", weights, head, tc)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_stats(args) -> int:
    stats = []
    for raw in args.dataset:
        ds = load_any(resolve_dataset_path(raw), args.format or "jsonl")
        stats.append(dataset_stats(ds))
    print(format_stats_table(stats))
    return EXIT_OK


def cmd_report(args) -> int:
    reports: list[MetricsReport] = []
    for raw in args.inputs:
        path = Path(raw)
        if path.is_dir():
            runs = sorted({p.parent for p in path.rglob("run*.jsonl")})
            if not runs:
                raise ConfigError("inputs", f"{path}: no run traces found")
            reports.extend(report_from_traces(d) for d in runs)
        elif path.is_file():
            try:
                doc = read_report(path)
            except ValueError as exc:
                raise ConfigError("inputs", str(exc)) from None
            reports.extend(report_from_dict(r) for r in doc["reports"])
        else:
            raise ConfigError("inputs", f"not found: {path}")
    if args.baseline:
        base = [r for r in reports if r.strategy == args.baseline]
        if not base:
            raise ConfigError("baseline", f"no report for strategy {args.baseline!r}")
        for r in reports:
            if r is not base[0]:
                attach_significance(r, base[0])
    out = Path(args.out_dir)
    write_report(reports, out, chart_data=not args.no_chart_data)
    _print_summary(reports, out)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, strategy_flags=True) -> None:
    p.add_argument("--config", help="JSON config file (a report.json also works)")
    p.add_argument("--dataset", "--data", dest="dataset", help="dataset file or directory (or a bundled fixture name)")
    p.add_argument("--format", choices=FORMATS, help="dataset format (default jsonl)")
    p.add_argument("--backend", choices=PROVIDERS, help="backend profile (default fixture)")
    p.add_argument("--model", help="model id for the HTTP profiles")
    p.add_argument("--base-url")
    p.add_argument("--api-key-env", help="name of the environment variable holding the API key")
    p.add_argument("--fixture-dir", help="recorded fixture store (default: bundled)")
    p.add_argument("--max-in-flight", type=int)
    p.add_argument("--cues", help="cue pool JSON")
    p.add_argument("--prompts", help="prompt template JSON")
    p.add_argument("--cache-dir", help="persistent response cache")
    p.add_argument("--out-dir", default=DEFAULT_OUT_DIR)
    p.add_argument("--seed", type=int, help="first seed (runs use seed, seed+1, ...)")
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--d-l", type=int)
    p.add_argument("--d-c", type=int)
    p.add_argument("--d-e", type=int)
    p.add_argument("--d", type=int, help="truncate the fused vector to d features")
    if not strategy_flags:
        return
    p.add_argument("--strategy", help="IO, CoT, CoC, GoC, BoC or ToC")
    p.add_argument("--k", type=int, help="demonstrations per prompt")
    p.add_argument("--runs", type=int)
    p.add_argument("--seeds", help="comma-separated seeds, one per run")
    p.add_argument("--workers", type=int)
    p.add_argument("--T", type=int, help="BoC subsets")
    p.add_argument("--q", type=int, help="BoC cues per subset")
    p.add_argument("--threshold", type=float, help="GoC confidence threshold")
    p.add_argument("--max-cues", type=int)
    p.add_argument("--start-cue")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sarcasmcue", description="Cue-based sarcasm detection with LLMs")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="evaluate one strategy")
    _add_common(p)
    p.add_argument("--baseline", help="also run this strategy and report Welch p-values against it")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="GoC/BoC/ToC with one cue category removed")
    _add_common(p)
    p.add_argument("--remove", action="append", help="category to remove (repeatable; default all)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("train-toc", help="train ToC projections and head")
    _add_common(p, strategy_flags=False)
    p.add_argument("--remove", dest="removed_flag")
    p.set_defaults(func=cmd_train_toc)

    p = sub.add_parser("stats", help="print split statistics")
    p.add_argument("dataset", nargs="+")
    p.add_argument("--format", choices=FORMATS)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("report", help="rebuild tables from report.json files or trace directories")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out-dir", default=DEFAULT_OUT_DIR)
    p.add_argument("--baseline", help="strategy to test the others against")
    p.add_argument("--no-chart-data", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InvalidArity) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, UnknownLabel, InsufficientTrain) as exc:
        print(f"config error: dataset: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BackendError, DataLeakage, OSError, ValueError, FloatingPointError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
