"""Bundled reference scenario: 3 leaders, 6 followers in the plane.

The framework is built so that removing node 4 hands its role down the
chain 4 -> 6 -> 7 -> 8 under the smallest-id tie break, exercising
multi-hop inheritance, and node 4 is added back later at a fresh spot.
Maneuver blends sit right after the start and after each event, so the
formation reshapes while the loop is already absorbing a transient.
"""

from __future__ import annotations

import numpy as np

from .framework import NominalFramework
from .geometry import PointSet
from .reconfig import AttachmentSpec, ReconfigEvent, euc_construct
from .simulator import ManeuverSchedule, Scenario

REMOVE_TIME = 60.0
READD_TIME = 500.0
HORIZON = 740.0


def build_demo_framework() -> NominalFramework:
    """Nine-agent planar framework with a four-node inheritance chain."""
    leaders = PointSet(2, np.array([
        [0.0, 0.0],
        [4.0, 0.0],
        [2.0, 3.0],
    ]))
    attachments = [
        AttachmentSpec(4, np.array([2.0, 0.0]), [1, 2]),
        AttachmentSpec(5, np.array([1.0, 1.5]), [1, 3]),
        AttachmentSpec(6, np.array([2.5, 1.0]), [4, 2, 3]),
        AttachmentSpec(7, np.array([3.0, 2.0]), [4, 6]),
        AttachmentSpec(8, np.array([4.0, 2.25]), [7, 5]),
        AttachmentSpec(9, np.array([3.125, 1.25]), [2, 6, 7]),
    ]
    return euc_construct(leaders, attachments)


def readd_attachment() -> AttachmentSpec:
    """Attachment that brings node 4 back after its removal.

    The original spot (2, 0) belongs to node 6 by then, so the node
    rejoins at (1, 0) on the same leader pair.
    """
    return AttachmentSpec(4, np.array([1.0, 0.0]), [1, 2])


def demo_events() -> list[ReconfigEvent]:
    return [
        ReconfigEvent(time=REMOVE_TIME, action="remove", node=4),
        ReconfigEvent(time=READD_TIME, action="add", node=4,
                      attachment=readd_attachment()),
    ]


def demo_maneuver() -> ManeuverSchedule:
    """Rotation, then shear, then anisotropic scaling, 8 s blends each."""
    eye = np.eye(2)
    a1 = np.array([[0.6, -0.8], [0.8, 0.6]])
    b1 = np.array([2.0, 1.0])
    a2 = np.array([[1.2, 0.4], [0.0, 0.9]])
    b2 = np.array([-1.0, 2.0])
    a3 = np.array([[0.5, 0.0], [0.0, 1.5]])
    b3 = np.array([3.0, -1.0])
    return ManeuverSchedule([
        (0.0, eye, np.zeros(2)),
        (8.0, a1, b1),
        (REMOVE_TIME, a1, b1),
        (REMOVE_TIME + 8.0, a2, b2),
        (READD_TIME, a2, b2),
        (READD_TIME + 8.0, a3, b3),
    ])


def demo_gains() -> dict:
    """Hand-picked constants; see README for what each one trades off.

    xi = 1 keeps the Riccati solution at its closed form for n = 2.  The
    schedule constants weight the budget term heavily so the energy trace
    stays jump- and flow-monotone even though the curvature condition is
    out of reach for double integrators at this sampling period (the run
    reports that as a warning; tracking itself is unaffected).
    """
    return {
        "xi": 1.0,
        "beta": 1.0,
        "eps": 0.1,
        "mu": 1.0,
        "t_star": 0.1,
        "eta": 1.0 - 1e-6,
        "sigma": 0.002,
        "hbar1": 1000.0,
        "hbar2": 100.0,
    }


def build_demo_scenario(**overrides) -> Scenario:
    """The bundled scenario; keyword overrides replace Scenario fields."""
    params = dict(
        framework=build_demo_framework(),
        maneuver=demo_maneuver(),
        horizon=HORIZON,
        events=demo_events(),
        order=2,
        dt=0.01,
        smsi=0.1,
        gains=demo_gains(),
        seed=20,
        init_offset=0.5,
        spawn_offset=0.5,
        t0_coeff=1e-4,
        s0_coeff=1.0,
    )
    params.update(overrides)
    return Scenario(**params)
