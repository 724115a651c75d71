"""A deterministic, rule-based stand-in for an LLM.

``SimulatedBackend`` recognizes the bundled prompt templates and answers them
from a small sarcasm lexicon, with hash-derived variation so that different
strategies and cue subsets do not all agree. It exists to record fixture
stores and to run the whole pipeline offline; its answers carry no claim
about real model behavior.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

from .backend import Backend, ChatRequest, ChatResponse, EmbeddingVector

POSITIVE = {
    "love", "great", "wonderful", "fantastic", "brilliant", "perfect", "best", "favorite",
    "exciting", "thrilled", "grateful", "nice", "thanks", "fun", "amazing", "lovely",
}
NEGATIVE = {
    "monday", "traffic", "stuck", "waiting", "dentist", "cancelled", "broke", "breaking",
    "died", "deadline", "taxes", "raining", "rain", "homework", "forgot", "delayed", "again",
}
MARKERS = ("yeah right", "oh great", "just what i needed", "can't wait", "as usual", "so exciting",
           "totally", "sure,", "wow", "oh wonderful")

_TEXT = re.compile(r"the input sentence \[(.*?)\](?=[\s,.]|$)", re.S)
_REMAINING = re.compile(r"remaining cues \[(.*?)\]")
_WORD = re.compile(r"[a-z']+")


def _h(*parts: str) -> int:
    return int(hashlib.sha256("\x1f".join(parts).encode("utf-8")).hexdigest()[:12], 16)


def analyze(text: str) -> dict:
    low = text.lower()
    words = _WORD.findall(low)
    pos = [w for w in words if w in POSITIVE]
    neg = [w for w in words if w in NEGATIVE]
    markers = [m for m in MARKERS if m in low]
    return {
        "pos": pos, "neg": neg, "markers": markers,
        "bangs": text.count("!"), "questions": text.count("?"),
        "sarcastic": bool((pos and neg) or markers),
    }


class SimulatedBackend(Backend):
    model_id = "simulated-v1"
    embed_dim = 16
    flip_rate = 4  # one label answer in ~4 is flipped

    def _complete(self, request: ChatRequest) -> ChatResponse:
        users = [m.content for m in request.messages if m.role == "user"]
        first, last = users[0], users[-1]
        found = _TEXT.findall(first)
        text = found[-1] if found else first
        info = analyze(text)
        if len(users) > 1:
            # re-query after an unparseable answer
            return ChatResponse(self._label(first, info, plain=True))
        return ChatResponse(self._answer(last, text, info))

    def _label(self, prompt: str, info: dict, plain=False, yes_no=False) -> str:
        h = _h(prompt)
        sarcastic = info["sarcastic"] != (h % self.flip_rate == 0)
        if yes_no:
            return "yes" if sarcastic else "no"
        word = "Sarcastic" if sarcastic else "Not Sarcastic"
        if plain:
            return word
        style = h // self.flip_rate % 4
        return [word, f"Label: {word}", f"The sentence is probably '{word}'.", f"{word}."][style]

    def _answer(self, prompt: str, text: str, info: dict) -> str:
        if "Reply in exactly this form" in prompt:
            collected = prompt.split("collected the following cue information:", 1)[-1]
            collected = collected.split("Judge if", 1)[0]
            n = sum(1 for line in collected.splitlines() if line.startswith("- "))
            h = _h(prompt)
            conf = min(99, 35 + 14 * n + h % 20 + (10 if info["markers"] else 0))
            m = _REMAINING.search(prompt)
            remaining = [c.strip() for c in m.group(1).split(",")] if m else []
            remaining = [c for c in remaining if c and c != "none"]
            vote = remaining[h % len(remaining)] if remaining else "none"
            return f"Confidence: {conf}%\nNext cue: {vote}"
        if "what is the SURFACE sentiment" in prompt:
            tone = "positive" if info["pos"] else ("negative" if info["neg"] else "neutral")
            return f"The surface sentiment is {tone}."
        if "namely the TRUE intention" in prompt:
            if info["sarcastic"]:
                return "The speaker actually means the opposite and is expressing frustration."
            return "The speaker means what they literally say."
        if "Let's think step by step" in prompt:
            parts = []
            if info["pos"]:
                parts.append(f"positive words ({', '.join(info['pos'])})")
            if info["neg"]:
                parts.append(f"an unpleasant situation ({', '.join(info['neg'])})")
            if info["markers"]:
                parts.append("ironic phrasing")
            return "The sentence contains " + (" and ".join(parts) or "plain factual content") + "."
        if "cues from the input sentence" in prompt:
            return self._extract(prompt, info)
        if "information from it for sarcasm detection" in prompt:
            words = info["pos"] + info["neg"]
            return ("Relevant evidence: " + ", ".join(words)) if words else "Nothing notable."
        if "answer: yes" in prompt:
            return self._label(prompt, info, yes_no=True)
        return self._label(prompt, info)

    def _extract(self, prompt: str, info: dict) -> str:
        if "linguistic cues" in prompt:
            parts = info["markers"] + (["exclamation"] * min(info["bangs"], 2))
            return ", ".join(parts)
        if "contextual cues" in prompt:
            return ", ".join(info["neg"])
        if info["pos"] and info["neg"]:
            return "contrast: " + ", ".join(info["pos"]) + " versus " + ", ".join(info["neg"])
        return ", ".join(info["pos"])

    def _embed(self, text: str) -> EmbeddingVector:
        info = analyze(text)
        vec = np.zeros(self.embed_dim)
        vec[0] = len(info["pos"])
        vec[1] = len(info["neg"])
        vec[2] = len(info["markers"])
        vec[3] = min(info["bangs"], 3)
        vec[4] = 1.0 if "contrast" in text.lower() else 0.0
        vec[5] = 1.0 if text.strip().lower() == "none" else 0.0
        for w in _WORD.findall(text.lower()):
            vec[6 + _h(w) % (self.embed_dim - 6)] += 0.25
        return EmbeddingVector(vec, self.model_id)
