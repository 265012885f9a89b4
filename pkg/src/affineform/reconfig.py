"""Framework construction and node-level reconfiguration.

Construction grows a framework from the leaders one follower at a time;
each new node is the apex of an equilibrium unit over nodes that already
exist, which keeps the follower Laplacian block invertible by design.
Adding a node later is the same step.  Removing a follower either deletes
it outright (no out-edges) or walks a chain of out-neighbors, each
inheriting its predecessor's position and in-edges, until the chain ends
at a node nobody measures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .framework import NominalFramework, leaders_affinely_span
from .geometry import (
    DEFAULT_TOL,
    PointSet,
    Tolerances,
    is_equilibrium_unit,
    solve_unit_weights,
)


class ReconfigError(ValueError):
    """Raised for invalid construction or reconfiguration requests."""


TieBreak = Callable[[Iterable[int]], int]


@dataclass
class AttachmentSpec:
    """One follower attachment: the new apex and its measured neighbors."""

    new_node_id: int
    position: np.ndarray
    in_neighbor_ids: list[int]

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=float)
        if len(set(self.in_neighbor_ids)) != len(self.in_neighbor_ids):
            raise ReconfigError(
                f"node {self.new_node_id}: repeated in-neighbor ids"
            )


@dataclass(frozen=True)
class InheritancePath:
    """Out-neighbor chain from a removed node to an end node."""

    chain: tuple[int, ...]

    @property
    def removed(self) -> int:
        return self.chain[0]

    @property
    def end(self) -> int:
        return self.chain[-1]

    def relabel_map(self) -> dict[int, int]:
        """Each chain node's id maps to its successor's id."""
        return {self.chain[k]: self.chain[k + 1] for k in range(len(self.chain) - 1)}


def _attachment_unit(fw: NominalFramework, spec: AttachmentSpec) -> PointSet:
    m = len(spec.in_neighbor_ids)
    if not 2 <= m <= fw.dim + 1:
        raise ReconfigError(
            f"node {spec.new_node_id}: needs 2..{fw.dim + 1} in-neighbors, got {m}"
        )
    missing = [j for j in spec.in_neighbor_ids if j not in fw.positions]
    if missing:
        raise ReconfigError(
            f"node {spec.new_node_id}: unknown in-neighbors {missing}"
        )
    rows = [spec.position] + [fw.positions[j] for j in spec.in_neighbor_ids]
    return PointSet(fw.dim, np.array(rows))


def fia_add(fw: NominalFramework, spec: AttachmentSpec,
            tol: Tolerances = DEFAULT_TOL) -> NominalFramework:
    """Attach one node as the apex of an equilibrium unit over existing nodes.

    Returns a new framework; the input is untouched.  The new node joins
    at the end of the node order with in-edges to its unit neighbors,
    weighted by the solved unit coefficients.
    """
    if spec.new_node_id in fw.positions:
        raise ReconfigError(f"node id {spec.new_node_id} already present")
    unit = _attachment_unit(fw, spec)
    if not is_equilibrium_unit(unit, tol):
        raise ReconfigError(
            f"node {spec.new_node_id}: attachment points do not form an equilibrium unit"
        )
    solved = solve_unit_weights(unit, tol)
    if np.min(np.abs(solved.weights)) <= tol.tau_zero:
        raise ReconfigError(
            f"node {spec.new_node_id}: a unit weight vanished despite unit conditions"
        )
    out = fw.copy()
    out.node_ids.append(spec.new_node_id)
    out.positions[spec.new_node_id] = unit.points[0].copy()
    for j, w in zip(spec.in_neighbor_ids, solved.weights):
        out.weights[(spec.new_node_id, j)] = float(w)
    return out


def euc_construct(leaders: PointSet, attachments: list[AttachmentSpec],
                  leader_ids: list[int] | None = None,
                  tol: Tolerances = DEFAULT_TOL) -> NominalFramework:
    """Build a framework over d+1 affinely spanning leaders.

    Leaders get ids 1..d+1 unless leader_ids says otherwise; attachments
    are applied in order, each one an equilibrium-unit apex over nodes
    already present.  At least one attachment is required.
    """
    d = leaders.dim
    if len(leaders) != d + 1:
        raise ReconfigError(f"need exactly {d + 1} leaders, got {len(leaders)}")
    if leader_ids is None:
        leader_ids = list(range(1, d + 2))
    if len(leader_ids) != d + 1:
        raise ReconfigError("leader_ids length must match leader count")
    if not attachments:
        raise ReconfigError("construction needs at least one follower attachment")

    fw = NominalFramework(
        dim=d,
        node_ids=list(leader_ids),
        leader_count=d + 1,
        positions={i: leaders.points[k].copy() for k, i in enumerate(leader_ids)},
        weights={},
    )
    if not leaders_affinely_span(fw, tol):
        raise ReconfigError("leader positions do not affinely span the space")
    for spec in attachments:
        fw = fia_add(fw, spec, tol)
    return fw


def find_inheritance_path(fw: NominalFramework, removed: int,
                          tie_break: TieBreak = min) -> InheritancePath:
    """Chain of out-neighbors from the removed node to an end node.

    At each step the tie-break policy picks one current out-neighbor
    (default: smallest id).  A node with no out-edges ends the chain
    immediately, so an end node yields the singleton chain.
    """
    if removed not in fw.positions:
        raise ReconfigError(f"node {removed} not in framework")
    if removed in fw.leader_ids:
        raise ReconfigError(f"node {removed} is a leader; leaders cannot be removed")
    chain = [removed]
    seen = {removed}
    current = removed
    while True:
        outs = fw.out_neighbors(current)
        if not outs:
            return InheritancePath(chain=tuple(chain))
        current = tie_break(outs)
        if current in seen:
            # cannot happen on a layerable framework; guards a bad policy
            raise ReconfigError(f"inheritance chain revisited node {current}")
        seen.add(current)
        chain.append(current)


def foa_remove(fw: NominalFramework, removed: int,
               tie_break: TieBreak = min,
               tol: Tolerances = DEFAULT_TOL) -> NominalFramework:
    """Remove a follower, letting out-neighbors inherit along a chain.

    Chain successors take over their predecessor's nominal position and
    in-edge table (weights copied verbatim); every surviving in-edge
    source that names a chain node is relabeled to that node's successor.
    The chain's end node gives up its own slot entirely.  Equilibrium is
    preserved exactly because each surviving table is some pre-removal
    node's table evaluated at the same point geometry under new labels.
    """
    if len(fw.node_ids) - 1 < fw.dim + 2:
        raise ReconfigError(
            "removal would leave fewer nodes than leaders plus one follower"
        )
    path = find_inheritance_path(fw, removed, tie_break)
    relabel = path.relabel_map()
    chain = path.chain

    survivors = [v for v in fw.node_ids if v != removed]
    positions = {v: fw.positions[v].copy() for v in survivors}
    for k in range(len(chain) - 1):
        positions[chain[k + 1]] = fw.positions[chain[k]].copy()

    tables = {v: fw.in_entries(v) for v in fw.node_ids}
    new_weights: dict[tuple[int, int], float] = {}
    inherited = {chain[k + 1]: chain[k] for k in range(len(chain) - 1)}
    for v in survivors:
        base = tables[inherited[v]] if v in inherited else tables[v]
        for src, w in base:
            new_weights[(v, relabel.get(src, src))] = w

    return NominalFramework(
        dim=fw.dim,
        node_ids=survivors,
        leader_count=fw.leader_count,
        positions=positions,
        weights=new_weights,
    )


@dataclass
class ReconfigEvent:
    """Timed add/remove request for the simulator and CLI."""

    time: float
    action: str
    node: int
    attachment: AttachmentSpec | None = None

    def __post_init__(self) -> None:
        if self.action not in ("add", "remove"):
            raise ReconfigError(f"unknown action {self.action!r}")
        if self.action == "add":
            if self.attachment is None:
                raise ReconfigError("add event needs an attachment")
            if self.attachment.new_node_id != self.node:
                raise ReconfigError("attachment node id disagrees with event node")
        elif self.attachment is not None:
            raise ReconfigError("remove event must not carry an attachment")


def attachment_from_dict(data: dict) -> AttachmentSpec:
    try:
        return AttachmentSpec(
            new_node_id=int(data["node"]),
            position=np.asarray(data["position"], dtype=float),
            in_neighbor_ids=[int(v) for v in data["in_neighbors"]],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ReconfigError(f"malformed attachment: {exc}") from exc


def attachment_to_dict(spec: AttachmentSpec) -> dict:
    return {
        "node": spec.new_node_id,
        "position": [float(c) for c in spec.position],
        "in_neighbors": list(spec.in_neighbor_ids),
    }


def event_from_dict(data: dict) -> ReconfigEvent:
    try:
        time = float(data["time"])
        action = str(data["action"])
        node = int(data["node"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ReconfigError(f"malformed event: {exc}") from exc
    attachment = None
    if "attachment" in data and data["attachment"] is not None:
        attachment = attachment_from_dict(data["attachment"])
    return ReconfigEvent(time=time, action=action, node=node, attachment=attachment)


def event_to_dict(ev: ReconfigEvent) -> dict:
    out: dict = {"time": ev.time, "action": ev.action, "node": ev.node}
    if ev.attachment is not None:
        out["attachment"] = attachment_to_dict(ev.attachment)
    return out


def load_events(path) -> list[ReconfigEvent]:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ReconfigError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise ReconfigError("event file must hold a list of events")
    return [event_from_dict(d) for d in data]
