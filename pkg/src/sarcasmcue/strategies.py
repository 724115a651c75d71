"""Prompting strategies: IO, CoT, CoC, GoC and BoC.

Each ``run_*`` function is pure orchestration over a backend and returns a
``(Prediction, StrategyTrace)`` pair. The trace records every prompt and
response so a run can be audited or replayed from cache.
"""

from __future__ import annotations

import enum
import hashlib
import re
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from .backend import Backend, ChatRequest, parse_label
from .core import EmptyInput, Label, Sample
from .cues import CueCategory, CuePool, standard_pool
from .prompts import PromptSet, default_prompts, prompt_away_sentence

MAX_REQUERIES = 2


class Strategy(str, enum.Enum):
    IO = "IO"
    COT = "CoT"
    COC = "CoC"
    GOC = "GoC"
    BOC = "BoC"
    TOC = "ToC"

    @classmethod
    def parse(cls, value: "str | Strategy") -> "Strategy":
        if isinstance(value, Strategy):
            return value
        for member in cls:
            if member.value.lower() == value.strip().lower():
                return member
        raise ValueError(f"unknown strategy {value!r}; expected one of {[m.value for m in cls]}")


class InvalidArity(ValueError):
    pass


class VotedUnknownCue(ValueError):
    pass


@dataclass(frozen=True)
class Prediction:
    label: Label
    sample_id: str
    strategy: Strategy
    unparseable_fallback: bool = False


@dataclass(frozen=True)
class Demonstrations:
    examples: tuple[tuple[str, Label], ...] = ()
    ids: tuple[str, ...] = ()

    @property
    def k(self) -> int:
        return len(self.examples)

    def render(self, prompts: PromptSet) -> str:
        """Demonstration prefix for the first prompt of a chain ('' when k=0)."""
        if not self.examples:
            return ""
        blocks = "\n\n".join(
            prompts.render("demo_block", text=text, label=label.value) for text, label in self.examples
        )
        return prompts.render("demos", blocks=blocks)


NO_DEMOS = Demonstrations()


@dataclass
class Step:
    prompt: str
    response: str
    parsed: Any = None
    requeries: list[dict] = field(default_factory=list)


@dataclass
class StrategyTrace:
    strategy: str
    sample_id: str
    steps: list[Step] = field(default_factory=list)
    selected_cues: list[str] = field(default_factory=list)
    subset_predictions: list[dict] | None = None
    votes: list[dict] | None = None
    confidence_readings: list[float] | None = None
    flags: dict[str, Any] = field(default_factory=dict)
    extras: dict[str, Any] = field(default_factory=dict)

    @property
    def prompts(self) -> list[str]:
        """Every user prompt sent, re-queries included."""
        out = []
        for s in self.steps:
            out.append(s.prompt)
            out.extend(r["prompt"] for r in s.requeries)
        return out

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    @classmethod
    def from_dict(cls, data: dict) -> "StrategyTrace":
        data = dict(data)
        data["steps"] = [Step(**s) for s in data.get("steps", [])]
        return cls(**data)


def _jsonable(obj):
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# -- shared helpers ------------------------------------------------------------


def _request(backend: Backend, prompts: PromptSet, prompt: str) -> ChatRequest:
    return backend.new_request(prompt, system=prompts.system)


def _ask(backend: Backend, prompts: PromptSet, prompt: str) -> Step:
    resp = backend.complete(_request(backend, prompts, prompt))
    return Step(prompt, resp.text or "")


def _ask_label(backend: Backend, prompts: PromptSet, prompt: str) -> tuple[Label, Step, bool]:
    """Ask for a label, re-querying up to twice when the answer is unparseable.

    Falls back to NotSarcastic if every answer is unparseable.
    """
    request = _request(backend, prompts, prompt)
    text = backend.complete(request).text or ""
    step = Step(prompt, text)
    label = parse_label(text)
    instruction = prompts.render("requery")
    for _ in range(MAX_REQUERIES):
        if label is not None:
            break
        request = request.followup(text, instruction)
        text = backend.complete(request).text or ""
        label = parse_label(text)
        step.requeries.append({"prompt": instruction, "response": text})
    fallback = label is None
    if fallback:
        label = Label.NOT_SARCASTIC
    step.parsed = label.value
    return label, step, fallback


def _finish(strategy: Strategy, sample: Sample, trace: StrategyTrace, label: Label, fallback: bool):
    if fallback:
        trace.flags["unparseable"] = True
    return Prediction(label, sample.id, strategy, fallback), trace


def _with_demos(demos: Demonstrations | None, prompts: PromptSet, prompt: str) -> str:
    return (demos or NO_DEMOS).render(prompts) + prompt


def _cue_line(cue) -> str:
    return f"- {cue.display_name}: {cue.description}"


# -- IO / CoT -------------------------------------------------------------------


def run_io(sample: Sample, backend: Backend, demos: Demonstrations | None = None,
           prompts: PromptSet | None = None):
    """Single completion that asks directly for the label."""
    prompts = prompts or default_prompts()
    prompt = _with_demos(demos, prompts, prompts.render("io", text=sample.text))
    label, step, fallback = _ask_label(backend, prompts, prompt)
    trace = StrategyTrace(Strategy.IO.value, sample.id, [step])
    return _finish(Strategy.IO, sample, trace, label, fallback)


def run_cot(sample: Sample, backend: Backend, demos: Demonstrations | None = None,
            prompts: PromptSet | None = None):
    """Reason-then-answer: one free-form reasoning turn, one yes/no turn."""
    prompts = prompts or default_prompts()
    first = _with_demos(demos, prompts, prompts.render("cot_reason", text=sample.text))
    reasoning = _ask(backend, prompts, first)
    reasoning.parsed = reasoning.response
    second = prompts.render("cot_answer", text=sample.text, reasoning=reasoning.response)
    label, answer, fallback = _ask_label(backend, prompts, second)
    trace = StrategyTrace(Strategy.COT.value, sample.id, [reasoning, answer])
    return _finish(Strategy.COT, sample, trace, label, fallback)


# -- CoC ----------------------------------------------------------------------


def run_coc(sample: Sample, backend: Backend, demos: Demonstrations | None = None,
            prompts: PromptSet | None = None):
    """Chain of contradiction: surface sentiment, true intention, verdict."""
    prompts = prompts or default_prompts()
    p1 = _with_demos(demos, prompts, prompts.render("coc_step1", text=sample.text))
    s1 = _ask(backend, prompts, p1)
    c1 = s1.parsed = s1.response
    s2 = _ask(backend, prompts, prompts.render("coc_step2", text=sample.text, c1=c1))
    c2 = s2.parsed = s2.response
    p3 = prompts.render("coc_step3", text=sample.text, c1=c1, c2=c2)
    label, s3, fallback = _ask_label(backend, prompts, p3)
    trace = StrategyTrace(Strategy.COC.value, sample.id, [s1, s2, s3])
    trace.extras["surface_sentiment"] = c1
    trace.extras["true_intention"] = c2
    return _finish(Strategy.COC, sample, trace, label, fallback)


# -- GoC ----------------------------------------------------------------------

_NUMBER = re.compile(r"(?<![\w.])(\d+(?:\.\d+)?|\.\d+)")


def parse_confidence(raw: str | None) -> float | None:
    """First number in *raw* as a confidence in [0, 1]; ``None`` if missing.

    Values in (1, 100] are read as percentages. Larger values are rejected.
    """
    if not raw:
        return None
    m = _NUMBER.search(raw)
    if not m:
        return None
    value = float(m.group(1))
    if value <= 1.0:
        return value
    if value <= 100.0:
        return value / 100.0
    return None


def _cue_terms(pool: CuePool) -> list[tuple[str, str]]:
    terms = []
    for cue in pool:
        names = {cue.id, cue.id.replace("_", " "), cue.display_name.lower(),
                 re.sub(r"\s*\(.*?\)", "", cue.display_name).lower()}
        terms.extend((name, cue.id) for name in names if name)
    return terms


def parse_vote(raw: str, pool: CuePool) -> str | None:
    """Earliest cue of *pool* named in the answer; the 'Next cue:' line is preferred."""
    text = raw.lower()
    m = re.search(r"next cue\s*[:\-]\s*(.*)", text)
    if m:
        text = m.group(1)
    best = None
    for term, cue_id in _cue_terms(pool):
        for hit in re.finditer(r"(?<![a-z_])" + re.escape(term) + r"(?![a-z_])", text):
            key = (hit.start(), -len(term))
            if best is None or key < best[0]:
                best = (key, cue_id)
            break
    return best[1] if best else None


def _collected(pool: CuePool, selected: Sequence[str], evidence: dict[str, str]) -> str:
    return "\n".join(f"- {pool.get(c).display_name}: {evidence[c]}" for c in selected)


def run_goc(sample: Sample, backend: Backend, pool: CuePool | None = None, threshold: float = 0.95,
            max_cues: int = 10, start_cue: str | None = None, demos: Demonstrations | None = None,
            prompts: PromptSet | None = None, removed: CueCategory | None = None,
            strict_votes: bool = False):
    """Graph of cues: greedy, vote-driven cue selection gated on confidence.

    Each iteration issues one analysis completion for the newest cue and one
    combined confidence/vote completion. The loop stops once the reported
    confidence reaches *threshold*, the pool is exhausted, or *max_cues* cues
    are selected; a final completion gives the label. *start_cue* defaults
    to the first cue of the pool. Out-of-list or repeated
    votes are remapped to the first unused cue in pool order and flagged, or
    raise ``VotedUnknownCue`` when *strict_votes* is set.
    """
    prompts = prompts or default_prompts()
    pool = pool if pool is not None else standard_pool()
    if len(pool) == 0:
        raise ValueError("GoC needs a non-empty cue pool")
    start_cue = start_cue or pool.ids[0]
    if start_cue not in pool:
        raise ValueError(f"start cue {start_cue!r} is not in the pool {pool.ids}")
    if max_cues < 1:
        raise ValueError("max_cues must be >= 1")
    away = prompt_away_sentence(prompts, pool, removed)
    away = f" {away}" if away else ""

    trace = StrategyTrace(Strategy.GOC.value, sample.id, votes=[], confidence_readings=[])
    selected = [start_cue]
    evidence: dict[str, str] = {}
    while True:
        cue = pool.get(selected[-1])
        prompt = prompts.render("goc_analysis", text=sample.text, cue_name=cue.display_name,
                                cue_description=cue.description, prompt_away=away)
        if len(selected) == 1:
            prompt = _with_demos(demos, prompts, prompt)
        step = _ask(backend, prompts, prompt)
        step.parsed = {"cue": cue.id}
        evidence[cue.id] = step.response.strip() or "none"
        trace.steps.append(step)

        remaining = [c for c in pool.ids if c not in selected]
        gate_prompt = prompts.render(
            "goc_gate", text=sample.text, collected=_collected(pool, selected, evidence),
            threshold_pct=f"{threshold * 100:g}", remaining=", ".join(remaining) or "none",
            prompt_away=away,
        )
        gate = _ask(backend, prompts, gate_prompt)
        conf = parse_confidence(gate.response)
        reading = 0.0 if conf is None else conf
        trace.confidence_readings.append(reading)
        gate.parsed = {"confidence": reading, "confidence_missing": conf is None}
        trace.steps.append(gate)

        if reading >= threshold or not remaining or len(selected) >= max_cues:
            break
        voted = parse_vote(gate.response, pool)
        record = {"after": list(selected), "raw": voted, "chosen": voted}
        if voted not in remaining:
            if strict_votes:
                raise VotedUnknownCue(f"vote {voted!r} is not among remaining cues {remaining}")
            record["chosen"] = remaining[0]
            record["remapped"] = True
            trace.flags["vote_remapped"] = True
        gate.parsed["vote"] = record["chosen"]
        trace.votes.append(record)
        selected.append(record["chosen"])

    final_prompt = prompts.render("goc_final", text=sample.text,
                                  collected=_collected(pool, selected, evidence), prompt_away=away)
    label, final, fallback = _ask_label(backend, prompts, final_prompt)
    trace.steps.append(final)
    trace.selected_cues = selected
    return _finish(Strategy.GOC, sample, trace, label, fallback)


# -- BoC ----------------------------------------------------------------------


def sample_subsets(pool: CuePool, T: int, q: int, seed) -> list[list[str]]:
    """*T* independent subsets of *q* distinct cues, each drawn without replacement.

    Cue ids inside a subset are listed in pool order.
    """
    if not 1 <= q <= len(pool):
        raise InvalidArity(f"q={q} must satisfy 1 <= q <= {len(pool)} (pool size)")
    if T < 1:
        raise InvalidArity(f"T={T} must be >= 1")
    rng = np.random.default_rng(seed)
    ids = pool.ids
    return [[ids[i] for i in sorted(rng.choice(len(ids), size=q, replace=False))] for _ in range(T)]


def majority_vote(labels: Sequence[Label]) -> tuple[Label, bool]:
    """Strict majority wins; an exact tie resolves to NotSarcastic with ``tie=True``."""
    if not labels:
        raise EmptyInput("majority_vote needs at least one label")
    n_sarc = sum(1 for lab in labels if lab is Label.SARCASTIC)
    n_not = len(labels) - n_sarc
    if n_sarc == n_not:
        return Label.NOT_SARCASTIC, True
    return (Label.SARCASTIC if n_sarc > n_not else Label.NOT_SARCASTIC), False


def derive_seed(seed: int, sample_id: str) -> list[int]:
    """Per-sample seed material so subsets don't depend on evaluation order."""
    h = int.from_bytes(hashlib.sha256(sample_id.encode("utf-8")).digest()[:8], "big")
    return [int(seed), h]


def run_boc(sample: Sample, backend: Backend, pool: CuePool | None = None, T: int = 5, q: int = 3,
            seed=0, demos: Demonstrations | None = None, prompts: PromptSet | None = None,
            removed: CueCategory | None = None):
    """Bagging of cues: T single-completion predictions over random cue subsets."""
    prompts = prompts or default_prompts()
    pool = pool if pool is not None else standard_pool()
    subsets = sample_subsets(pool, T, q, seed)
    away = prompt_away_sentence(prompts, pool, removed)
    away_line = f"{away}\n" if away else ""

    trace = StrategyTrace(Strategy.BOC.value, sample.id, subset_predictions=[])
    labels, any_fallback = [], False
    for subset in subsets:
        cue_list = "\n".join(_cue_line(pool.get(c)) for c in subset)
        prompt = prompts.render("boc", text=sample.text, cue_list=cue_list, prompt_away_line=away_line)
        label, step, fallback = _ask_label(backend, prompts, _with_demos(demos, prompts, prompt))
        step.parsed = {"subset": subset, "label": label.value}
        trace.steps.append(step)
        trace.subset_predictions.append({"subset": subset, "label": label.value, "fallback": fallback})
        labels.append(label)
        any_fallback |= fallback
    final, tie = majority_vote(labels)
    trace.selected_cues = sorted({c for s in subsets for c in s}, key=pool.ids.index)
    trace.flags["tie"] = tie
    if any_fallback:
        trace.flags["unparseable"] = True
    return Prediction(final, sample.id, Strategy.BOC, any_fallback), trace
