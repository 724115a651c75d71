"""Sarcasm detection with LLM prompting strategies built on sarcasm cues."""

__version__ = "0.1.0"

from .backend import (
    AuthError,
    Backend,
    BackendError,
    BackendUnavailable,
    CachedBackend,
    ChatRequest,
    ChatResponse,
    DiskCache,
    EmbeddingVector,
    FixtureBackend,
    MalformedResponse,
    RateLimited,
    ScriptedBackend,
    parse_label,
)
from .core import EmptyInput, Label, Sample
from .cues import Cue, CueCategory, CuePool, ablate, load_pool, standard_pool
from .data import Dataset, check_leakage, dataset_stats, load_dataset, load_mustard, load_preset, sample_k_shots
from .harness import MetricsReport, RunResult, StrategyConfig, evaluate, run_ablation, write_report
from .metrics import accuracy, error_rates, macro_f1, unpaired_t_test
from .prompts import PromptSet, default_prompts, load_prompts
from .strategies import (
    Demonstrations,
    Prediction,
    Strategy,
    StrategyTrace,
    majority_vote,
    run_boc,
    run_coc,
    run_cot,
    run_goc,
    run_io,
)
from .toc import TrainConfig, fuse, predict_toc, run_toc, train_toc
