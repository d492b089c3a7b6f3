import numpy as np
import pytest

from drfg import backbones
from drfg.stubs import make_demo_workspace, make_stub_graph, write_stub_registry


@pytest.fixture(scope="session")
def stub_registry(tmp_path_factory):
    """Default eight backbones as seeded 'pooled' stub graphs, real channel counts."""
    root = tmp_path_factory.mktemp("stubs")
    entries = write_stub_registry(root / "graphs", kind="pooled")
    return backbones.registry_from_config(entries, root)


@pytest.fixture(scope="session")
def constant_registry(tmp_path_factory):
    """Default eight backbones emitting constants 1..8."""
    root = tmp_path_factory.mktemp("const")
    entries = write_stub_registry(root / "graphs", kind="constant")
    return backbones.registry_from_config(entries, root)


@pytest.fixture
def const_graph(tmp_path):
    def make(channels, value, name="c", spatial=7):
        path = make_stub_graph(tmp_path / f"{name}.onnx", channels, kind="constant",
                               value=value, spatial=spatial)
        return backbones.BackboneSpec(name, path, channels)
    return make


@pytest.fixture(scope="session")
def demo_workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("demo")
    return make_demo_workspace(root, per_class=20, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
