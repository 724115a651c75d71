"""Fixed cue vocabulary shared by every prompting strategy.

Ten cues in three categories. The definitions (id, category, display name,
prompt description) live in ``resources/cues.json`` so prompt wording can be
changed without touching code.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator


class CueCategory(str, enum.Enum):
    LINGUISTIC = "Linguistic"
    CONTEXTUAL = "Contextual"
    EMOTIONAL = "Emotional"

    @property
    def adjective(self) -> str:
        """Lowercase form used inside prompts ("linguistic cues")."""
        return self.value.lower()

    @classmethod
    def parse(cls, value: "str | CueCategory") -> "CueCategory":
        if isinstance(value, CueCategory):
            return value
        key = value.strip().lower()
        aliases = {"lin": "linguistic", "con": "contextual", "emo": "emotional"}
        key = aliases.get(key, key)
        for member in cls:
            if member.value.lower() == key:
                return member
        raise ValueError(f"unknown cue category: {value!r}")


@dataclass(frozen=True)
class Cue:
    id: str
    category: CueCategory
    display_name: str
    description: str


class CuePool:
    """Ordered, immutable collection of cues with unique ids."""

    def __init__(self, cues: Iterable[Cue]):
        self._cues = tuple(cues)
        ids = [c.id for c in self._cues]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate cue ids: {dupes}")
        self._by_id = {c.id: c for c in self._cues}

    def __iter__(self) -> Iterator[Cue]:
        return iter(self._cues)

    def __len__(self) -> int:
        return len(self._cues)

    def __getitem__(self, index: int) -> Cue:
        return self._cues[index]

    def __contains__(self, cue_id: object) -> bool:
        return cue_id in self._by_id

    def __eq__(self, other: object) -> bool:
        return isinstance(other, CuePool) and self._cues == other._cues

    def __hash__(self) -> int:
        return hash(self._cues)

    def __repr__(self) -> str:
        return f"CuePool({[c.id for c in self._cues]})"

    @property
    def ids(self) -> list[str]:
        return [c.id for c in self._cues]

    def get(self, cue_id: str) -> Cue:
        try:
            return self._by_id[cue_id]
        except KeyError:
            raise KeyError(f"cue {cue_id!r} not in pool {self.ids}") from None

    def by_category(self, category: CueCategory) -> list[Cue]:
        return [c for c in self._cues if c.category is category]

    def categories(self) -> list[CueCategory]:
        """Categories present in the pool, in canonical order."""
        present = {c.category for c in self._cues}
        return [cat for cat in CueCategory if cat in present]

    def to_json(self) -> dict:
        return {
            "version": 1,
            "cues": [
                {
                    "id": c.id,
                    "category": c.category.value,
                    "display_name": c.display_name,
                    "description": c.description,
                }
                for c in self._cues
            ],
        }


def load_pool(path: str | Path | None = None) -> CuePool:
    """Load a pool from a cue resource file; the bundled one when *path* is None."""
    if path is None:
        text = resources.files("sarcasmcue").joinpath("resources/cues.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    data = json.loads(text)
    return CuePool(
        Cue(
            id=rec["id"],
            category=CueCategory.parse(rec["category"]),
            display_name=rec["display_name"],
            description=rec["description"],
        )
        for rec in data["cues"]
    )


_STANDARD: CuePool | None = None


def standard_pool() -> CuePool:
    """The 10-cue pool: 4 linguistic, 3 contextual, 3 emotional."""
    global _STANDARD
    if _STANDARD is None:
        _STANDARD = load_pool()
    return _STANDARD


def ablate(pool: CuePool, removed: CueCategory | str) -> CuePool:
    removed = CueCategory.parse(removed)
    return CuePool(c for c in pool if c.category is not removed)
