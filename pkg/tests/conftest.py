"""Shared fixtures: seeded toy datasets and a scripted chat transport."""

from __future__ import annotations

import re
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np
import pytest

from protlab.dataset.models import ClinicalCohort, SingleCellDataset
from protlab.dataset.synthetic import make_toy_pbmc, toy_cohort, toy_pbmc
from protlab.llm.client import ChatClient, ChatMessage, Completion, ModelParams, TokenUsage

DATA_DIR = Path(__file__).resolve().parent / "data"
GOLDEN_DIR = Path(__file__).resolve().parent / "golden"

Reply = Union[str, Callable[[str], str]]


class ScriptedTransport:
    """
    Offline transport answering by template id.

    Each template maps to a reply or a list of replies consumed in order
    (the last one repeats). A reply may be a callable receiving the prompt.
    """

    uses_network = False

    def __init__(self, script: dict[str, Union[Reply, list[Reply]]]):
        self.script = dict(script)
        self.calls: list[tuple[str, str]] = []
        self._served: dict[str, int] = {}

    def send(self, template_id: str, messages: Sequence[ChatMessage], params: ModelParams) -> Completion:
        prompt = messages[0].text
        self.calls.append((template_id, prompt))
        if template_id not in self.script:
            raise AssertionError(f"Unscripted template {template_id!r}")
        replies = self.script[template_id]
        if isinstance(replies, list):
            index = self._served.get(template_id, 0)
            self._served[template_id] = index + 1
            reply = replies[min(index, len(replies) - 1)]
        else:
            reply = replies
        text = reply(prompt) if callable(reply) else reply
        return Completion(text=text, usage=TokenUsage(prompt_tokens=10, completion_tokens=5, total_tokens=15))

    def count(self, template_id: str) -> int:
        return sum(1 for t, _ in self.calls if t == template_id)


def scripted_client(script: dict, **kwargs) -> tuple[ChatClient, ScriptedTransport]:
    transport = ScriptedTransport(script)
    return ChatClient(transport, ModelParams(model="test-model"), **kwargs), transport


def prompt_list(prompt: str, label: str) -> list[str]:
    """Comma-separated names after `label:` in a rendered prompt."""
    match = re.search(rf"{label}:\s*(.+)", prompt)
    return [p.strip() for p in match.group(1).split(",")] if match else []


@pytest.fixture(scope="session")
def pbmc(tmp_path_factory) -> SingleCellDataset:
    return toy_pbmc(tmp_path_factory.mktemp("toy-pbmc"), seed=0)


@pytest.fixture(scope="session")
def pbmc_truth() -> np.ndarray:
    return make_toy_pbmc(seed=0)[2]


@pytest.fixture(scope="session")
def pbmc_typed(pbmc: SingleCellDataset, pbmc_truth: np.ndarray) -> SingleCellDataset:
    """toy-pbmc with the planted populations as clustering "truth"."""
    names, labels = np.unique(pbmc_truth, return_inverse=True)
    return pbmc.with_clustering("truth", labels, {i: str(n) for i, n in enumerate(names)})


@pytest.fixture(scope="session")
def cohort(tmp_path_factory) -> ClinicalCohort:
    return toy_cohort(tmp_path_factory.mktemp("toy-cohort"), seed=0)
