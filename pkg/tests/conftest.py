import functools

import pytest

from wsnguard.config import validate
from wsnguard.simulation import run


@functools.lru_cache(maxsize=None)
def _bundled(name: str):
    return validate(name)


@functools.lru_cache(maxsize=None)
def _trace(name: str, seed: int | None, detection: bool | None):
    cfg = _bundled(name)
    if seed is not None:
        cfg = cfg.with_overrides(seed=seed)
    return run(cfg, detection=detection)


@pytest.fixture
def scenario():
    return _bundled


@pytest.fixture
def traced():
    """Cached traces of bundled scenarios: traced(name, seed=None, detection=None)."""
    def get(name, seed=None, detection=None):
        return _trace(name, seed, detection)
    return get


@pytest.fixture
def fig4_trace():
    return _trace("fig4", None, None)


def fig4_nodes(**changes):
    """Raw fig4 document with top-level changes, for building variants."""
    import yaml
    from wsnguard.config import resolve_scenario

    data = yaml.safe_load(resolve_scenario("fig4").read_text())
    data.update(changes)
    return data
