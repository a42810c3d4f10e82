import json

import pytest

from skydrop import world


def scenario_doc(**overrides) -> dict:
    doc = {
        "base": {"x": 0, "y": 0},
        "addresses": [{"id": "A1", "x": 300, "y": 0, "contacts": ["r1"]}],
        "articles": [{"id": "p1", "destination": "A1", "sender": "s1"}],
        "fleet": [{"id": "uav1", "rows": 2, "cols": 2}],
        "wind": {"speed": 3.0, "direction": 0.0},
        "agents": {"recipients": {"r1": {"policy": "always_approve"}}},
        "seed": 42,
    }
    doc.update(overrides)
    return doc


def load(doc: dict) -> world.Scenario:
    return world.load_scenario(json.dumps(doc))


@pytest.fixture
def params() -> world.Params:
    return world.Params()
