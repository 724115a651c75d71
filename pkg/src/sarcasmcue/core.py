"""Labels and samples."""

from __future__ import annotations

import enum
from dataclasses import dataclass


class Label(str, enum.Enum):
    SARCASTIC = "Sarcastic"
    NOT_SARCASTIC = "Not Sarcastic"

    @property
    def short(self) -> str:
        return "S" if self is Label.SARCASTIC else "N"


SPLITS = ("train", "dev", "test")


@dataclass(frozen=True)
class Sample:
    id: str
    text: str
    gold: Label
    split: str = "test"

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError(f"sample {self.id!r} has empty text")
        if self.split not in SPLITS:
            raise ValueError(f"sample {self.id!r} has unknown split {self.split!r}")


class EmptyInput(ValueError):
    pass
