from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import pytest

from coursegraph.gateway import Gateway, StubChatBackend, StubEmbeddingBackend

from golden_fixture import GoldenFixture, build_golden_fixture


def make_gateway(fixtures=None, concurrency: int = 5, dim: int = 64) -> Gateway:
    return Gateway(StubChatBackend(fixtures or {}),
                   StubEmbeddingBackend(dim=dim), concurrency=concurrency)


@pytest.fixture(scope="session")
def golden(tmp_path_factory) -> GoldenFixture:
    return build_golden_fixture(tmp_path_factory.mktemp("golden"))
