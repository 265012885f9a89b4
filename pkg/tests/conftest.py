"""Shared fixtures.

The long-horizon demo run takes about fifteen seconds, so it executes
once per session; every test that needs it receives the same result
object together with the wall-clock time the run took.
"""

from __future__ import annotations

import time
from typing import NamedTuple

import numpy as np
import pytest

from affineform import (
    AttachmentSpec,
    NominalFramework,
    PointSet,
    SimResult,
    euc_construct,
)
from affineform.demo import build_demo_framework, build_demo_scenario
from affineform.framework import from_json_dict
from affineform.simulator import run


class DemoRun(NamedTuple):
    result: SimResult
    elapsed: float


@pytest.fixture(scope="session")
def demo_run() -> DemoRun:
    scenario = build_demo_scenario()
    start = time.monotonic()
    result = run(scenario)
    return DemoRun(result, time.monotonic() - start)


@pytest.fixture()
def demo_framework() -> NominalFramework:
    """Nine-node bundled framework: leader triangle plus six followers."""
    return build_demo_framework()


@pytest.fixture()
def lone_follower_fw() -> NominalFramework:
    """Smallest constructible framework: a leader triangle plus the
    midpoint of its base as the only follower."""
    leaders = PointSet(2, [[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]])
    return euc_construct(leaders, [AttachmentSpec(4, (2.0, 0.0), [1, 2])])


@pytest.fixture()
def cyclic_fw() -> NominalFramework:
    """Equilibrium weights and invertible follower block, but followers
    4 and 5 sense each other, so no layer partition exists."""
    return from_json_dict(
        {
            "dim": 2,
            "leaders": [1, 2, 3],
            "nodes": [
                {"id": 1, "position": [0.0, 0.0]},
                {"id": 2, "position": [4.0, 0.0]},
                {"id": 3, "position": [2.0, 3.0]},
                {"id": 4, "position": [2.0, 0.5]},
                {"id": 5, "position": [2.0, 1.0]},
            ],
            "edges": [
                {"from": 1, "to": 4, "weight": 0.25},
                {"from": 2, "to": 4, "weight": 0.25},
                {"from": 5, "to": 4, "weight": 0.5},
                {"from": 3, "to": 5, "weight": 0.2},
                {"from": 4, "to": 5, "weight": 0.8},
            ],
        }
    )


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
