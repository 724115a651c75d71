"""Named prompt templates with ``{placeholder}`` fields.

The bundled set lives in ``resources/prompts.json``; any template (and the
system prompt) can be replaced through ``PromptSet.with_overrides``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from .cues import CueCategory, CuePool
from .backend import DEFAULT_SYSTEM_PROMPT


@dataclass(frozen=True)
class PromptSet:
    templates: Mapping[str, str]
    system: str | None = DEFAULT_SYSTEM_PROMPT
    version: int = 1
    _hashes: dict = field(default_factory=dict, compare=False, repr=False)

    def render(self, name: str, **values) -> str:
        try:
            template = self.templates[name]
        except KeyError:
            raise KeyError(f"no prompt template named {name!r}") from None
        return template.format(**values)

    def with_overrides(self, templates: Mapping[str, str] | None = None, system: str | None = ...) -> "PromptSet":
        merged = dict(self.templates)
        if templates:
            unknown = set(templates) - set(merged)
            if unknown:
                raise KeyError(f"unknown prompt templates: {sorted(unknown)}")
            merged.update(templates)
        return PromptSet(merged, self.system if system is ... else system, self.version)

    def hashes(self) -> dict[str, str]:
        """sha256 of every template, plus the system prompt under ``"system"``."""
        if not self._hashes:
            out = {name: _sha(text) for name, text in sorted(self.templates.items())}
            out["system"] = _sha(self.system or "")
            self._hashes.update(out)
        return dict(self._hashes)

    def fingerprint(self) -> str:
        return _sha(json.dumps(self.hashes(), sort_keys=True))


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_prompts(path: str | Path | None = None) -> PromptSet:
    if path is None:
        text = resources.files("sarcasmcue").joinpath("resources/prompts.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    data = json.loads(text)
    return PromptSet(dict(data["templates"]), data.get("system", DEFAULT_SYSTEM_PROMPT), data.get("version", 1))


_DEFAULT: PromptSet | None = None


def default_prompts() -> PromptSet:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_prompts()
    return _DEFAULT


def join_names(names: Sequence[str]) -> str:
    """``a``, ``a and b``, ``a, b and c``."""
    names = list(names)
    if len(names) <= 1:
        return "".join(names)
    return ", ".join(names[:-1]) + " and " + names[-1]


def prompt_away_sentence(prompts: PromptSet, pool: CuePool, removed: CueCategory | None) -> str:
    """Instruction telling the model not to use the removed category; '' if none."""
    if removed is None:
        return ""
    kept = [c for c in CueCategory if c is not removed and pool.by_category(c)]
    kept_text = " and ".join(f"{c.adjective} cues" for c in kept) or "remaining cues"
    return prompts.render("prompt_away", kept=kept_text, removed=removed.adjective)
