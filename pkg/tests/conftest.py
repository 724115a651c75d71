import json

import pytest

from sarcasmcue import Label, Sample, ScriptedBackend, default_prompts, load_dataset, standard_pool
from sarcasmcue.cli import bundled_path

S, N = Label.SARCASTIC, Label.NOT_SARCASTIC


@pytest.fixture
def pool():
    return standard_pool()


@pytest.fixture
def prompts():
    return default_prompts()


@pytest.fixture
def sarcasm20():
    return load_dataset(bundled_path("fixtures", "sarcasm20.jsonl"))


@pytest.fixture
def sample():
    return Sample("x1", "Oh great, another Monday morning stuck in traffic.", S, "test")


def constant(text):
    return ScriptedBackend(lambda req: text)


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import VERDICTS

    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])
