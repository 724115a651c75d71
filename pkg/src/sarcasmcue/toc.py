"""Tensor of cues: per-category cue embeddings fused by a 3-way tensor product.

Pipeline for one sample::

    extract cue texts (3 completions) -> embed x3 -> affine projection x3
    -> fuse([l;1] (x) [c;1] (x) [e;1]) -> linear head -> logit

The backend is frozen. Training updates the three projections and the head
with full-batch gradient descent on binary cross-entropy.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from .backend import Backend, DimensionMismatch
from .core import Label, Sample
from .cues import CueCategory, CuePool, standard_pool
from .metrics import DegenerateLabels, accuracy, macro_f1
from .prompts import PromptSet, default_prompts, join_names
from .util import atomic_write_text
from .strategies import Prediction, Step, Strategy, StrategyTrace

log = logging.getLogger(__name__)

CATEGORIES = (CueCategory.LINGUISTIC, CueCategory.CONTEXTUAL, CueCategory.EMOTIONAL)
_KEYS = ("lin", "con", "emo")
EMPTY_CUE_TEXT = "none"
PARAMS_FORMAT = "sarcasmcue-toc-params"
PARAMS_VERSION = 1


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass
class Projection:
    weight: np.ndarray  # (d_emb, d_out)
    bias: np.ndarray  # (d_out,)

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise DimensionMismatch(f"bad projection shapes {self.weight.shape} / {self.bias.shape}")
        if self.weight.shape[1] < 1:
            raise ValueError("projection output dim must be >= 1")

    @property
    def d_in(self) -> int:
        return self.weight.shape[0]

    @property
    def d_out(self) -> int:
        return self.weight.shape[1]


@dataclass
class ProjectionWeights:
    lin: Projection
    con: Projection
    emo: Projection

    def __iter__(self):
        return iter((self.lin, self.con, self.emo))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.lin.d_out, self.con.d_out, self.emo.d_out

    def copy(self) -> "ProjectionWeights":
        return ProjectionWeights(*(Projection(p.weight.copy(), p.bias.copy()) for p in self))


@dataclass
class HeadParameters:
    weight: np.ndarray  # (fused dim after truncation,)
    bias: float = 0.0

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = float(self.bias)

    def copy(self) -> "HeadParameters":
        return HeadParameters(self.weight.copy(), self.bias)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 200
    early_stop_patience: int = 20
    seed: int = 0
    d_l: int = 7
    d_c: int = 7
    d_e: int = 7
    d: int | None = None

    def __post_init__(self):
        # lr == 0 is accepted as a no-op run; the CLI rejects it
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.early_stop_patience < 0:
            raise ValueError("early_stop_patience must be >= 0 (0 disables early stopping)")
        if min(self.d_l, self.d_c, self.d_e) < 1:
            raise ValueError("d_l, d_c and d_e must be >= 1")
        full = full_fused_dim(self.d_l, self.d_c, self.d_e)
        if self.d is not None and not 1 <= self.d <= full:
            raise ValueError(f"d={self.d} must be in [1, {full}] for dims ({self.d_l},{self.d_c},{self.d_e})")

    @property
    def fused_dim(self) -> int:
        return self.d or full_fused_dim(self.d_l, self.d_c, self.d_e)


def full_fused_dim(d_l: int, d_c: int, d_e: int) -> int:
    return (d_l + 1) * (d_c + 1) * (d_e + 1)


# -- numerics ------------------------------------------------------------------


def project(embedding, weight, bias) -> np.ndarray:
    """Affine map ``x @ W + b``; *embedding* may be a vector or a row batch."""
    x = np.asarray(getattr(embedding, "values", embedding), dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    if x.shape[-1] != weight.shape[0]:
        raise DimensionMismatch(f"embedding dim {x.shape[-1]} != projection input dim {weight.shape[0]}")
    return x @ weight + np.asarray(bias, dtype=np.float64)


def _append_one(x: np.ndarray) -> np.ndarray:
    ones = np.ones(x.shape[:-1] + (1,))
    return np.concatenate([x, ones], axis=-1)


def fuse_tensor(l, c, e) -> np.ndarray:
    """Unflattened ``[l;1] (x) [c;1] (x) [e;1]`` of shape (d_l+1, d_c+1, d_e+1)."""
    l1, c1, e1 = (_append_one(np.asarray(v, dtype=np.float64)) for v in (l, c, e))
    return np.einsum("i,j,k->ijk", l1, c1, e1)


def fuse(l, c, e, d: int | None = None) -> np.ndarray:
    """Fused representation flattened row-major, truncated to the first *d* entries."""
    flat = fuse_tensor(l, c, e).reshape(-1)
    return flat if d is None else flat[:d]


def fuse_batch(L: np.ndarray, C: np.ndarray, E: np.ndarray, d: int | None = None) -> np.ndarray:
    """Row-wise ``fuse`` over (N, d_*) matrices; returns (N, fused dim)."""
    L1, C1, E1 = _append_one(L), _append_one(C), _append_one(E)
    Z = np.einsum("ni,nj,nk->nijk", L1, C1, E1).reshape(L.shape[0], -1)
    return Z if d is None else Z[:, :d]


def logits(weights: ProjectionWeights, head: HeadParameters, features: Sequence[np.ndarray]) -> np.ndarray:
    Xl, Xc, Xe = features
    L, C, E = (project(X, p.weight, p.bias) for X, p in zip((Xl, Xc, Xe), weights))
    Z = fuse_batch(L, C, E, head.weight.size)
    return Z @ head.weight + head.bias


def loss_and_gradients(weights: ProjectionWeights, head: HeadParameters,
                       features: Sequence[np.ndarray], y: np.ndarray):
    """Mean binary cross-entropy on the head logit and its analytic gradient.

    *y* holds 1.0 for Sarcastic, 0.0 otherwise. Gradients come back as a dict
    keyed like :func:`parameter_arrays`.
    """
    Xl, Xc, Xe = features
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    L, C, E = (project(X, p.weight, p.bias) for X, p in zip((Xl, Xc, Xe), weights))
    L1, C1, E1 = _append_one(L), _append_one(C), _append_one(E)
    full = np.einsum("ni,nj,nk->nijk", L1, C1, E1)
    shape = full.shape[1:]
    D = head.weight.size
    Z = full.reshape(n, -1)[:, :D]
    s = Z @ head.weight + head.bias
    loss = float(np.mean(np.logaddexp(0.0, s) - y * s))

    g = (expit(s) - y) / n  # dloss/ds
    grads = {"head.weight": Z.T @ g, "head.bias": np.array(g.sum())}
    dZ = np.zeros((n, int(np.prod(shape))))
    dZ[:, :D] = np.outer(g, head.weight)
    dZ = dZ.reshape((n,) + shape)
    # drop the appended-one slot: it is a constant
    dL = np.einsum("nijk,nj,nk->ni", dZ, C1, E1)[:, :-1]
    dC = np.einsum("nijk,ni,nk->nj", dZ, L1, E1)[:, :-1]
    dE = np.einsum("nijk,ni,nj->nk", dZ, L1, C1)[:, :-1]
    for key, X, dOut in zip(_KEYS, (Xl, Xc, Xe), (dL, dC, dE)):
        grads[f"{key}.weight"] = X.T @ dOut
        grads[f"{key}.bias"] = dOut.sum(axis=0)
    return loss, grads


def parameter_arrays(weights: ProjectionWeights, head: HeadParameters) -> dict[str, np.ndarray]:
    """Every trainable array, keyed like the gradients (the scalar head bias excepted)."""
    out = {}
    for key, p in zip(_KEYS, weights):
        out[f"{key}.weight"] = p.weight
        out[f"{key}.bias"] = p.bias
    out["head.weight"] = head.weight
    return out


def init_parameters(d_emb: int, config: TrainConfig) -> tuple[ProjectionWeights, HeadParameters]:
    """Projections uniform in +-1/sqrt(d_emb) with zero bias; head all zeros."""
    rng = np.random.default_rng(config.seed)
    bound = 1.0 / np.sqrt(d_emb)
    projections = [
        Projection(rng.uniform(-bound, bound, size=(d_emb, d_out)), np.zeros(d_out))
        for d_out in (config.d_l, config.d_c, config.d_e)
    ]
    return ProjectionWeights(*projections), HeadParameters(np.zeros(config.fused_dim), 0.0)


# -- backend plumbing ------------------------------------------------------------


def _extract(sample: Sample, backend: Backend, pool: CuePool, prompts: PromptSet,
             removed: CueCategory | None) -> tuple[tuple[str, str, str], list[Step]]:
    texts, steps = [], []
    for category in CATEGORIES:
        cues = pool.by_category(category)
        if category is removed or not cues:
            texts.append(EMPTY_CUE_TEXT)
            continue
        prompt = prompts.render(
            "toc_extract", category=category.adjective, text=sample.text,
            cue_names=join_names([c.display_name for c in cues]),
        )
        resp = backend.complete(backend.new_request(prompt, system=prompts.system))
        text = (resp.text or "").strip() or EMPTY_CUE_TEXT
        steps.append(Step(prompt, resp.text or "", {"category": category.value, "cue_text": text}))
        texts.append(text)
    return tuple(texts), steps


def extract_cue_texts(sample: Sample, backend: Backend, pool: CuePool | None = None,
                      prompts: PromptSet | None = None, removed: CueCategory | None = None):
    """``(lin_text, con_text, emo_text)``; empty answers and the removed category become "none"."""
    texts, _ = _extract(sample, backend, pool or standard_pool(), prompts or default_prompts(), removed)
    return texts


@dataclass
class CueFeatures:
    """Embedded cue texts for a set of samples, one (N, d_emb) matrix per category."""

    sample_ids: list[str]
    lin: np.ndarray
    con: np.ndarray
    emo: np.ndarray
    labels: np.ndarray
    cue_texts: list[tuple[str, str, str]] = field(default_factory=list)
    steps: list[list[Step]] = field(default_factory=list)

    @property
    def matrices(self):
        return self.lin, self.con, self.emo

    @property
    def d_emb(self) -> int:
        return self.lin.shape[1]


def embed_samples(samples: Sequence[Sample], backend: Backend, pool: CuePool | None = None,
                  prompts: PromptSet | None = None, removed: CueCategory | None = None) -> CueFeatures:
    pool = pool or standard_pool()
    prompts = prompts or default_prompts()
    memo: dict[str, np.ndarray] = {}

    def vec(text):
        if text not in memo:
            memo[text] = backend.embed(text).values
        return memo[text]

    rows, texts, steps = [], [], []
    for s in samples:
        t, st = _extract(s, backend, pool, prompts, removed)
        rows.append([vec(x) for x in t])
        texts.append(t)
        steps.append(st)
    if not rows:
        raise ValueError("no samples to embed")
    lin, con, emo = (np.vstack([r[i] for r in rows]) for i in range(3))
    y = np.array([1.0 if s.gold is Label.SARCASTIC else 0.0 for s in samples])
    return CueFeatures([s.id for s in samples], lin, con, emo, y, texts, steps)


def run_toc(sample: Sample, backend: Backend, weights: ProjectionWeights, head: HeadParameters,
            pool: CuePool | None = None, prompts: PromptSet | None = None,
            removed: CueCategory | None = None):
    """ToC prediction with a full trace; Sarcastic iff the logit is positive."""
    feats = embed_samples([sample], backend, pool, prompts, removed)
    logit = float(logits(weights, head, feats.matrices)[0])
    label = Label.SARCASTIC if logit > 0 else Label.NOT_SARCASTIC
    trace = StrategyTrace(Strategy.TOC.value, sample.id, feats.steps[0])
    trace.extras.update({"cue_texts": dict(zip(_KEYS, feats.cue_texts[0])), "logit": logit})
    if removed is not None:
        trace.flags["removed"] = removed.value
    return Prediction(label, sample.id, Strategy.TOC), trace


def predict_toc(sample: Sample, backend: Backend, weights: ProjectionWeights, head: HeadParameters,
                **kwargs) -> tuple[Prediction, float]:
    pred, trace = run_toc(sample, backend, weights, head, **kwargs)
    return pred, trace.extras["logit"]


# -- training ------------------------------------------------------------------


def _labels(y: np.ndarray) -> list[Label]:
    return [Label.SARCASTIC if v > 0.5 else Label.NOT_SARCASTIC for v in y]


def _predict_labels(weights, head, feats: CueFeatures) -> list[Label]:
    return [Label.SARCASTIC if s > 0 else Label.NOT_SARCASTIC for s in logits(weights, head, feats.matrices)]


def fit(train: CueFeatures, dev: CueFeatures | None, config: TrainConfig):
    """Gradient descent on precomputed features; returns the best-on-dev parameters.

    Early stopping tracks dev Macro-F1 (train Macro-F1 when *dev* is None)
    and stops after ``early_stop_patience`` epochs without strict improvement.
    """
    weights, head = init_parameters(train.d_emb, config)
    monitor = dev if dev is not None else train
    best = (weights.copy(), head.copy())
    best_f1, since_best = -1.0, 0
    history = []
    golds_monitor = _labels(monitor.labels)
    golds_train = _labels(train.labels)
    for epoch in range(1, config.epochs + 1):
        loss, grads = loss_and_gradients(weights, head, train.matrices, train.labels)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise NonFiniteLoss(f"non-finite loss or gradient at epoch {epoch} (loss={loss})")
        lr = config.learning_rate
        for key, arr in parameter_arrays(weights, head).items():
            arr -= lr * grads[key]
        head.bias -= lr * float(grads["head.bias"])

        train_acc = accuracy(_predict_labels(weights, head, train), golds_train)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateLabels)
            dev_f1 = macro_f1(_predict_labels(weights, head, monitor), golds_monitor)
        history.append({"epoch": epoch, "loss": loss, "train_accuracy": train_acc, "dev_macro_f1": dev_f1})
        if dev_f1 > best_f1:
            best, best_f1, since_best = (weights.copy(), head.copy()), dev_f1, 0
        else:
            since_best += 1
        if config.early_stop_patience and since_best >= config.early_stop_patience:
            log.info("early stop at epoch %d (best dev Macro-F1 %.4f)", epoch, best_f1)
            break
    return best[0], best[1], history


def train_toc(train: Sequence[Sample], dev: Sequence[Sample] | None, backend: Backend,
              config: TrainConfig | None = None, pool: CuePool | None = None,
              prompts: PromptSet | None = None, removed: CueCategory | None = None):
    """Embed the train/dev cue texts once, then :func:`fit` the projections and head."""
    config = config or TrainConfig()
    train = list(train)
    if not train:
        raise ValueError("train_toc needs a non-empty training set")
    train_feats = embed_samples(train, backend, pool, prompts, removed)
    dev_feats = embed_samples(list(dev), backend, pool, prompts, removed) if dev else None
    return fit(train_feats, dev_feats, config)


# -- serialization -----------------------------------------------------------------


def parameters_to_dict(weights: ProjectionWeights, head: HeadParameters,
                       config: TrainConfig | None = None) -> dict:
    d_l, d_c, d_e = weights.dims
    return {
        "format": PARAMS_FORMAT,
        "version": PARAMS_VERSION,
        "dims": {"d_emb": weights.lin.d_in, "d_l": d_l, "d_c": d_c, "d_e": d_e, "d": int(head.weight.size)},
        "seed": config.seed if config else None,
        "config": asdict(config) if config else None,
        "projections": {
            key: {"weight": p.weight.tolist(), "bias": p.bias.tolist()} for key, p in zip(_KEYS, weights)
        },
        "head": {"weight": head.weight.tolist(), "bias": head.bias},
    }


def parameters_from_dict(data: dict) -> tuple[ProjectionWeights, HeadParameters]:
    if data.get("format") != PARAMS_FORMAT:
        raise ValueError(f"not a ToC parameter file (format={data.get('format')!r})")
    if data.get("version") != PARAMS_VERSION:
        raise ValueError(f"unsupported ToC parameter version {data.get('version')!r}")
    proj = data["projections"]
    weights = ProjectionWeights(*(Projection(proj[k]["weight"], proj[k]["bias"]) for k in _KEYS))
    head = HeadParameters(data["head"]["weight"], data["head"]["bias"])
    full = full_fused_dim(*weights.dims)
    if head.weight.size > full:
        raise DimensionMismatch(f"head has {head.weight.size} weights but fused dim is {full}")
    return weights, head


def save_parameters(path: str | Path, weights: ProjectionWeights, head: HeadParameters,
                    config: TrainConfig | None = None) -> Path:
    text = json.dumps(parameters_to_dict(weights, head, config), indent=1, sort_keys=True)
    return atomic_write_text(path, text + "\n")


def load_parameters(path: str | Path) -> tuple[ProjectionWeights, HeadParameters]:
    return parameters_from_dict(json.loads(Path(path).read_text("utf-8")))
