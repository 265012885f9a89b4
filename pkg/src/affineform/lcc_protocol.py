"""Local coordination for framework changes via message passing.

Each node keeps two local tables: an ordered in-table of (source id,
weight) pairs and an out-table of node ids that measure it.  Adding or
removing a node triggers a short message cascade after which the union of
local tables describes the reconfigured framework exactly, with no node
ever seeing global state.

Packet kinds:

* forward (psi = +1): carries the sender's in/out tables, the successor it
  appointed (next) and the node it is itself inheriting from (prev).  The
  appointed successor adopts the payload; every other receiver merely
  relabels the sender's id in its own in-table.
* break backward (psi = -1): receiver drops the sender from its out-table.
* link backward (psi = -2): receiver adds the sender to its out-table.

Three protocol details matter for correctness and are easy to get wrong:

1. an inheriting node excludes the forward packet's sender from its break
   broadcast, since the sender's freshly adopted out-table already points
   at the inheritor and nothing would re-create that entry;
2. in-table relabeling must happen at most once per entry per episode
   (tables holding two consecutive chain members would otherwise relabel
   one entry twice); entries carry a per-episode mark, and the mark
   travels inside forwarded table copies;
3. delivery is round-synchronous: packets emitted while processing round
   r are all delivered in round r+1, and packets on the same sender to
   receiver channel keep their emission order.  Within a round, delivery
   order is otherwise irrelevant; the bus either sorts by (sender,
   receiver) or interleaves channels at random.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .framework import NominalFramework


class ProtocolError(RuntimeError):
    """Raised on misrouted packets or a cascade that fails to settle."""


@dataclass
class InEntry:
    """One in-table row; ``moved`` is the per-episode relabel mark."""

    src: int
    weight: float
    moved: bool = False


@dataclass
class LocalInfoTable:
    in_table: list[InEntry]
    out_table: set[int] = field(default_factory=set)

    def in_ids(self) -> list[int]:
        return [e.src for e in self.in_table]

    def snapshot(self) -> tuple[InEntry, ...]:
        return tuple(InEntry(e.src, e.weight, e.moved) for e in self.in_table)


@dataclass(frozen=True)
class Packet:
    psi: int
    self_id: int
    in_payload: tuple[InEntry, ...] | None = None
    out_payload: frozenset[int] | None = None
    next_id: int | None = None
    prev_id: int | None = None


@dataclass(frozen=True)
class LogRecord:
    step: int
    sender: int
    receiver: int
    psi: int
    self_id: int
    next_id: int | None
    prev_id: int | None

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "from": self.sender,
            "to": self.receiver,
            "psi": self.psi,
            "self": self.self_id,
            "next": self.next_id,
            "prev": self.prev_id,
        }


@dataclass
class MessageLog:
    records: list[LogRecord] = field(default_factory=list)

    def append(self, rec: LogRecord) -> None:
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict()) + "\n" for r in self.records)

    def participants(self) -> set[int]:
        out = set()
        for r in self.records:
            out.add(r.sender)
            out.add(r.receiver)
        return out


@dataclass(frozen=True)
class AddEvent:
    """A node joins with the given ordered (source, weight) in-entries."""

    node: int
    entries: tuple[tuple[int, float], ...]


@dataclass(frozen=True)
class RemoveEvent:
    node: int


TieBreak = Callable[[Iterable[int]], int]


class _RoundBus:
    """Round-synchronous delivery with per-channel FIFO order."""

    def __init__(self, order: str = "sorted", seed: int | None = None):
        if order not in ("sorted", "shuffled"):
            raise ValueError(f"unknown delivery order {order!r}")
        self.order = order
        self.rng = random.Random(seed)
        self._pending: list[tuple[int, int, Packet]] = []

    def emit(self, sender: int, receiver: int, pkt: Packet) -> None:
        self._pending.append((sender, receiver, pkt))

    def next_round(self) -> list[tuple[int, int, Packet]]:
        batch, self._pending = self._pending, []
        if self.order == "sorted":
            return sorted(batch, key=lambda item: (item[0], item[1]))
        # random interleave of channels, each channel kept in order
        channels: dict[tuple[int, int], list] = {}
        for item in batch:
            channels.setdefault((item[0], item[1]), []).append(item)
        queues = [channels[k] for k in sorted(channels)]
        merged = []
        while queues:
            q = self.rng.choice(queues)
            merged.append(q.pop(0))
            if not q:
                queues.remove(q)
        return merged


def added_node_operation(node: int, entries: Iterable[tuple[int, float]],
                         tables: dict[int, LocalInfoTable], bus: _RoundBus) -> None:
    """Initialize the joining node's tables and link-back to its sources."""
    if node in tables:
        raise ProtocolError(f"node {node} already holds a table")
    rows = [InEntry(int(src), float(w)) for src, w in entries]
    for e in rows:
        if e.src not in tables:
            raise ProtocolError(f"added node {node} references unknown source {e.src}")
    tables[node] = LocalInfoTable(in_table=rows, out_table=set())
    for e in rows:
        bus.emit(node, e.src, Packet(psi=-2, self_id=node))


def backward_receive(node: int, pkt: Packet, tables: dict[int, LocalInfoTable]) -> None:
    if pkt.psi == -1:
        tables[node].out_table.discard(pkt.self_id)
    elif pkt.psi == -2:
        tables[node].out_table.add(pkt.self_id)
    else:
        raise ProtocolError(f"forward packet routed to backward handler at node {node}")


def removed_node_operation(node: int, tables: dict[int, LocalInfoTable],
                           bus: _RoundBus, tie_break: TieBreak = min) -> None:
    """Start a removal episode: appoint a successor, notify, clear out."""
    table = tables[node]
    if table.out_table:
        nxt = tie_break(sorted(table.out_table))
        pkt = Packet(
            psi=1,
            self_id=node,
            in_payload=table.snapshot(),
            out_payload=frozenset(table.out_table),
            next_id=nxt,
            prev_id=None,
        )
        for dst in sorted(table.out_table):
            bus.emit(node, dst, pkt)
    for src in dict.fromkeys(table.in_ids()):
        bus.emit(node, src, Packet(psi=-1, self_id=node))
    table.in_table.clear()
    table.out_table.clear()


def inherit_receive(node: int, pkt: Packet, tables: dict[int, LocalInfoTable],
                    bus: _RoundBus, tie_break: TieBreak = min) -> None:
    """Take over the sender's role: forward own role first, then adopt.

    Ordering inside this handler is load-bearing: the node's own tables
    are forwarded before adoption overwrites them, and break-backs are
    computed from the pre-adoption in-table.
    """
    if pkt.next_id != node:
        raise ProtocolError(f"inherit packet for {pkt.next_id} delivered to {node}")
    table = tables[node]
    own_next = tie_break(sorted(table.out_table)) if table.out_table else None

    # 1. hand the node's own role to a successor of its own, if it has one
    if own_next is not None:
        fwd = Packet(
            psi=1,
            self_id=node,
            in_payload=table.snapshot(),
            out_payload=frozenset(table.out_table),
            next_id=own_next,
            prev_id=pkt.self_id,
        )
        for dst in sorted(table.out_table):
            bus.emit(node, dst, fwd)

    # 2. break stale out-entries pointing at this node; the packet sender
    #    is excluded: its adopted out-table already points here
    for src in dict.fromkeys(table.in_ids()):
        if src != pkt.self_id:
            bus.emit(node, src, Packet(psi=-1, self_id=node))

    # 3. adopt the sender's tables; with a prev node, entries naming it
    #    relabel to the sender (which now occupies that slot)
    adopted: list[InEntry] = []
    for e in pkt.in_payload or ():
        entry = InEntry(e.src, e.weight, e.moved)
        if pkt.prev_id is not None and not entry.moved and entry.src == pkt.prev_id:
            entry.src = pkt.self_id
            entry.moved = True
        adopted.append(entry)
    table.in_table = adopted

    new_out = set(pkt.out_payload or frozenset())
    new_out.discard(node)
    if own_next is not None:
        new_out.add(own_next)
    table.out_table = new_out

    # 4. link-back so adopted sources learn their new out-neighbor; the
    #    sender already knows via its own out-table adoption
    for src in dict.fromkeys(e.src for e in adopted):
        if src != pkt.self_id:
            bus.emit(node, src, Packet(psi=-2, self_id=node))


def non_inherit_receive(node: int, pkt: Packet,
                        tables: dict[int, LocalInfoTable]) -> None:
    """Relabel the sender's id to its successor in this node's in-table."""
    if pkt.next_id is None:
        raise ProtocolError(f"forward packet without a successor at node {node}")
    for e in tables[node].in_table:
        if not e.moved and e.src == pkt.self_id:
            e.src = pkt.next_id
            e.moved = True


def _clear_marks(tables: dict[int, LocalInfoTable]) -> None:
    for t in tables.values():
        for e in t.in_table:
            e.moved = False


def run_lcc(tables: dict[int, LocalInfoTable], event: AddEvent | RemoveEvent | None, *,
            tie_break: TieBreak = min, order: str = "sorted",
            seed: int | None = None, start_step: int = 0) -> MessageLog:
    """Run one add/remove episode to quiescence; tables mutate in place.

    Delivery is bounded by N^2 packets; exceeding the bound raises
    ProtocolError, since a correct cascade settles well inside it.  On
    removal the removed node's (empty) table is dropped from the dict.
    A None event is a no-op and returns an empty log.
    """
    _clear_marks(tables)
    bus = _RoundBus(order=order, seed=seed)
    log = MessageLog()
    step = start_step

    if event is None:
        return log
    if isinstance(event, AddEvent):
        added_node_operation(event.node, event.entries, tables, bus)
    elif isinstance(event, RemoveEvent):
        if event.node not in tables:
            raise ProtocolError(f"cannot remove unknown node {event.node}")
        removed_node_operation(event.node, tables, bus, tie_break)
    else:
        raise ProtocolError(f"unknown event {event!r}")

    budget = max(1, len(tables)) ** 2
    delivered = 0
    batch = bus.next_round()
    while batch:
        for sender, receiver, pkt in batch:
            delivered += 1
            if delivered > budget:
                raise ProtocolError(
                    f"cascade exceeded {budget} deliveries without settling"
                )
            if receiver not in tables:
                raise ProtocolError(f"packet delivered to unknown node {receiver}")
            log.append(LogRecord(step, sender, receiver, pkt.psi,
                                 pkt.self_id, pkt.next_id, pkt.prev_id))
            step += 1
            if pkt.psi < 0:
                backward_receive(receiver, pkt, tables)
            elif pkt.next_id == receiver:
                inherit_receive(receiver, pkt, tables, bus, tie_break)
            else:
                non_inherit_receive(receiver, pkt, tables)
        batch = bus.next_round()

    if isinstance(event, RemoveEvent):
        leftover = tables.pop(event.node)
        if leftover.in_table or leftover.out_table:
            raise ProtocolError("removed node's tables were not cleared")
    _clear_marks(tables)
    return log


def tables_from_framework(fw: NominalFramework) -> dict[int, LocalInfoTable]:
    """Local tables as each node would hold them for this framework."""
    return {
        v: LocalInfoTable(
            in_table=[InEntry(j, w) for j, w in fw.in_entries(v)],
            out_table=set(fw.out_neighbors(v)),
        )
        for v in fw.node_ids
    }


def weights_from_tables(tables: dict[int, LocalInfoTable]) -> dict[tuple[int, int], float]:
    out: dict[tuple[int, int], float] = {}
    for v in sorted(tables):
        for e in tables[v].in_table:
            key = (v, e.src)
            if key in out:
                raise ProtocolError(f"node {v} holds duplicate in-entry for {e.src}")
            out[key] = e.weight
    return out


def tables_match_framework(tables: dict[int, LocalInfoTable],
                           fw: NominalFramework) -> bool:
    """Exact agreement: same nodes, same ordered in-tables (float equality
    included), same out-tables."""
    if set(tables) != set(fw.node_ids):
        return False
    for v in fw.node_ids:
        expect = fw.in_entries(v)
        got = [(e.src, e.weight) for e in tables[v].in_table]
        if got != expect:
            return False
        if tables[v].out_table != set(fw.out_neighbors(v)):
            return False
    return True
