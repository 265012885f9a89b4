"""Nominal frameworks: weighted digraphs over nominal configurations.

A framework couples a directed sensing graph (edge j -> i means i measures
j) with a nominal configuration and per-edge weights.  The follower block
of the associated Laplacian being invertible, together with the leaders
affinely spanning, is what lets every target formation in the affine image
of the nominal configuration be pinned down by leader states alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import DEFAULT_TOL, PointSet, Tolerances, homogeneous_rows


class FrameworkFormatError(ValueError):
    """Raised for malformed framework dictionaries or JSON files."""


class NotLayerableError(ValueError):
    """Raised when the sensing digraph contains a directed cycle.

    The offending cycle is available as the ``cycle`` attribute, listed in
    edge direction (each node senses... is sensed by the next; the last
    node has an edge back to the first).
    """

    def __init__(self, cycle: list[int]):
        super().__init__(f"digraph has a directed cycle: {' -> '.join(map(str, cycle))}")
        self.cycle = cycle


@dataclass
class NominalFramework:
    """Directed framework with nominal positions and edge weights.

    node_ids keeps leaders first; weights maps (node, in_neighbor) to the
    coefficient that node applies to that in-neighbor's relative state.
    Insertion order of ``weights`` doubles as the canonical edge order for
    serialization and local-table construction.
    """

    dim: int
    node_ids: list[int]
    leader_count: int
    positions: dict[int, np.ndarray]
    weights: dict[tuple[int, int], float]

    def __post_init__(self) -> None:
        if self.leader_count < 1 or self.leader_count > len(self.node_ids):
            raise FrameworkFormatError("leader_count out of range")
        if len(set(self.node_ids)) != len(self.node_ids):
            raise FrameworkFormatError("duplicate node ids")
        self.positions = {
            i: np.asarray(p, dtype=float).reshape(self.dim)
            for i, p in self.positions.items()
        }
        missing = set(self.node_ids) - set(self.positions)
        if missing:
            raise FrameworkFormatError(f"nodes without positions: {sorted(missing)}")
        for (i, j) in self.weights:
            if i not in self.positions or j not in self.positions:
                raise FrameworkFormatError(f"edge ({j} -> {i}) references unknown node")
            if i == j:
                raise FrameworkFormatError(f"self-loop on node {i}")

    @property
    def leader_ids(self) -> list[int]:
        return self.node_ids[: self.leader_count]

    @property
    def follower_ids(self) -> list[int]:
        return self.node_ids[self.leader_count:]

    @property
    def edges(self) -> list[tuple[int, int]]:
        """Edges as (source, receiver) pairs in canonical order."""
        return [(j, i) for (i, j) in self.weights]

    def in_entries(self, node: int) -> list[tuple[int, float]]:
        """(in_neighbor, weight) pairs for one node, in canonical order."""
        return [(j, w) for (i, j), w in self.weights.items() if i == node]

    def in_neighbors(self, node: int) -> list[int]:
        return [j for (i, j) in self.weights if i == node]

    def out_neighbors(self, node: int) -> list[int]:
        return [i for (i, j) in self.weights if j == node]

    def copy(self) -> "NominalFramework":
        return NominalFramework(
            dim=self.dim,
            node_ids=list(self.node_ids),
            leader_count=self.leader_count,
            positions={i: p.copy() for i, p in self.positions.items()},
            weights=dict(self.weights),
        )


@dataclass(frozen=True)
class Layering:
    """Partition of the node set by longest-path depth from the sources.

    layers[0] holds the source nodes (no in-edges); a node sits in
    layers[k] when the longest directed path reaching it from a source
    contains k+1 nodes.  Each layer is sorted ascending.
    """

    layers: tuple[tuple[int, ...], ...]

    def index_of(self) -> dict[int, int]:
        return {v: k for k, layer in enumerate(self.layers) for v in layer}


@dataclass(frozen=True)
class LaplacianBlocks:
    """Signed Laplacian of the weighted digraph, split at the leader count.

    Row i holds node i's balance: degree on the diagonal, -w on each
    in-neighbor column.  Rows of nodes without in-edges (leaders in a
    construction built over them) are zero.
    """

    node_ids: tuple[int, ...]
    leader_count: int
    full: np.ndarray
    ll: np.ndarray
    lf: np.ndarray
    fl: np.ndarray
    ff: np.ndarray


@dataclass(frozen=True)
class AffineImageBasis:
    """Homogeneous nominal rows [chi_i^T, 1]; its column space, tensored
    with R^d, is the affine image of the nominal configuration."""

    node_ids: tuple[int, ...]
    hom: np.ndarray


def compute_layers(fw: NominalFramework) -> Layering:
    """Layer the digraph by longest path from the source nodes.

    Kahn's algorithm gives a topological order; layer depth is the usual
    longest-path recursion over it.  A directed cycle makes the graph
    non-layerable and raises NotLayerableError with a witness cycle.
    """
    indeg = {v: 0 for v in fw.node_ids}
    outs: dict[int, list[int]] = {v: [] for v in fw.node_ids}
    ins: dict[int, list[int]] = {v: [] for v in fw.node_ids}
    for (i, j) in fw.weights:
        indeg[i] += 1
        outs[j].append(i)
        ins[i].append(j)

    depth = {v: 1 for v in fw.node_ids}
    queue = sorted(v for v in fw.node_ids if indeg[v] == 0)
    order: list[int] = []
    pending = dict(indeg)
    while queue:
        u = queue.pop(0)
        order.append(u)
        for v in outs[u]:
            depth[v] = max(depth[v], depth[u] + 1)
            pending[v] -= 1
            if pending[v] == 0:
                queue.append(v)
        queue.sort()

    if len(order) < len(fw.node_ids):
        leftover = set(fw.node_ids) - set(order)
        # every leftover node keeps an in-edge from another leftover node,
        # so walking in-neighbors inside the leftover set must revisit one.
        start = min(leftover)
        path = [start]
        seen = {start: 0}
        while True:
            u = path[-1]
            nxt = min(j for j in ins[u] if j in leftover)
            if nxt in seen:
                cycle = path[seen[nxt]:]
                cycle.reverse()  # in-neighbor steps run against edge direction
                raise NotLayerableError(cycle)
            seen[nxt] = len(path)
            path.append(nxt)

    n_layers = max(depth.values())
    layers = [tuple(sorted(v for v in fw.node_ids if depth[v] == k + 1))
              for k in range(n_layers)]
    return Layering(layers=tuple(layers))


def build_laplacian(fw: NominalFramework) -> LaplacianBlocks:
    n = len(fw.node_ids)
    index = {v: k for k, v in enumerate(fw.node_ids)}
    omega = np.zeros((n, n))
    for (i, j), w in fw.weights.items():
        omega[index[i], index[j]] -= w
        omega[index[i], index[i]] += w
    nl = fw.leader_count
    return LaplacianBlocks(
        node_ids=tuple(fw.node_ids),
        leader_count=nl,
        full=omega,
        ll=omega[:nl, :nl],
        lf=omega[:nl, nl:],
        fl=omega[nl:, :nl],
        ff=omega[nl:, nl:],
    )


def equilibrium_residual(fw: NominalFramework) -> float:
    """Largest nodal imbalance max_i || sum_j w_ij (chi_i - chi_j) ||."""
    worst = 0.0
    for i in fw.node_ids:
        acc = np.zeros(fw.dim)
        for j, w in fw.in_entries(i):
            acc += w * (fw.positions[i] - fw.positions[j])
        worst = max(worst, float(np.linalg.norm(acc)))
    return worst


def leaders_affinely_span(fw: NominalFramework, tol: Tolerances = DEFAULT_TOL) -> bool:
    """Leaders' nominal positions affinely span R^d (rank d+1 homogeneous)."""
    if fw.leader_count < fw.dim + 1:
        return False
    rows = homogeneous_rows(np.array([fw.positions[i] for i in fw.leader_ids]))
    sv = np.linalg.svd(rows, compute_uv=False)
    if sv[0] == 0.0:
        return False
    return int(np.count_nonzero(sv > tol.tau_rank * sv[0])) == fw.dim + 1


def affine_image_basis(fw: NominalFramework) -> AffineImageBasis:
    rows = homogeneous_rows(np.array([fw.positions[i] for i in fw.node_ids]))
    return AffineImageBasis(node_ids=tuple(fw.node_ids), hom=rows)


def desired_config(fw: NominalFramework, a: np.ndarray, b: np.ndarray) -> dict[int, np.ndarray]:
    """Image of the nominal configuration under p = A chi + b."""
    a = np.asarray(a, dtype=float).reshape(fw.dim, fw.dim)
    b = np.asarray(b, dtype=float).reshape(fw.dim)
    return {i: a @ fw.positions[i] + b for i in fw.node_ids}


def in_affine_image(fw: NominalFramework, config: dict[int, np.ndarray],
                    tol: Tolerances = DEFAULT_TOL) -> bool:
    """Whether a configuration lies in the nominal affine image."""
    basis = affine_image_basis(fw).hom
    target = np.array([np.asarray(config[i], dtype=float) for i in fw.node_ids])
    sol, *_ = np.linalg.lstsq(basis, target, rcond=None)
    residual = float(np.linalg.norm(basis @ sol - target))
    scale = max(1.0, float(np.linalg.norm(target)))
    return residual <= tol.tau_res * scale


@dataclass(frozen=True)
class VerificationReport:
    """Outcome of the affine-localizability verification.

    ``passed`` folds together the leader span, follower-block
    invertibility, the equilibrium residual, and weight validity (every
    stored weight nonzero beyond tau_zero).  Layerability and the
    triangularity of the layer-permuted follower block are diagnostic
    only and do not gate ``passed``.
    """

    leader_span: bool
    weights_valid: bool
    omega_ff_invertible: bool
    sigma_min_ff: float
    residual: float
    layerable: bool
    cycle: tuple[int, ...] | None
    triangular: bool | None
    passed: bool
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "leader_span": self.leader_span,
            "weights_valid": self.weights_valid,
            "omega_ff_invertible": self.omega_ff_invertible,
            "sigma_min_ff": self.sigma_min_ff,
            "residual": self.residual,
            "layerable": self.layerable,
            "cycle": list(self.cycle) if self.cycle else None,
            "triangular": self.triangular,
            "notes": list(self.notes),
        }


def verify_affine_localizability(fw: NominalFramework,
                                 tol: Tolerances = DEFAULT_TOL) -> VerificationReport:
    """Check that follower states are pinned down by leader states.

    Passing requires: leaders affinely span, every stored weight is
    nonzero, the follower Laplacian block is invertible, and the nominal
    configuration is in equilibrium.  Layerability, triangularity of the
    layer-ordered follower block, and leaders-are-sources are reported as
    notes for diagnosis but do not decide the outcome.
    """
    notes: list[str] = []
    span = leaders_affinely_span(fw, tol)
    if not span:
        notes.append("leader positions do not affinely span the ambient space")

    weights_valid = all(abs(w) > tol.tau_zero for w in fw.weights.values())
    if not weights_valid:
        notes.append("a stored edge weight is zero within tau_zero")

    blocks = build_laplacian(fw)
    if blocks.ff.size:
        sv = np.linalg.svd(blocks.ff, compute_uv=False)
        sigma_min = float(sv[-1])
        invertible = sv[0] > 0 and sigma_min > tol.tau_rank * float(sv[0])
    else:
        sigma_min = np.inf
        invertible = True
    if not invertible:
        notes.append("follower Laplacian block is singular")

    residual = equilibrium_residual(fw)
    if residual > tol.tau_res:
        notes.append(f"equilibrium residual {residual:.3e} exceeds tau_res")

    layerable = True
    cycle: tuple[int, ...] | None = None
    triangular: bool | None = None
    try:
        layering = compute_layers(fw)
    except NotLayerableError as exc:
        layerable = False
        cycle = tuple(exc.cycle)
        notes.append(str(exc))
    else:
        if blocks.ff.size:
            depth = layering.index_of()
            followers = fw.follower_ids
            perm = sorted(range(len(followers)),
                          key=lambda k: (depth[followers[k]], followers[k]))
            pff = blocks.ff[np.ix_(perm, perm)]
            upper = float(np.max(np.abs(np.triu(pff, k=1)))) if len(perm) > 1 else 0.0
            diag_min = float(np.min(np.abs(np.diag(pff))))
            triangular = upper <= tol.tau_res and diag_min > tol.tau_zero
            if not triangular:
                notes.append("layer-ordered follower block is not lower triangular")

    for leader in fw.leader_ids:
        if fw.in_neighbors(leader):
            notes.append(f"leader {leader} has in-edges")
            break

    passed = span and weights_valid and invertible and residual <= tol.tau_res
    return VerificationReport(
        leader_span=span,
        weights_valid=weights_valid,
        omega_ff_invertible=invertible,
        sigma_min_ff=sigma_min,
        residual=residual,
        layerable=layerable,
        cycle=cycle,
        triangular=triangular,
        passed=passed,
        notes=tuple(notes),
    )


def localize_followers(fw: NominalFramework, leader_states: dict[int, np.ndarray],
                       tol: Tolerances = DEFAULT_TOL) -> dict[int, np.ndarray]:
    """Solve the equilibrium system for follower states given leader states.

    Solves Omega_ff p_f = -Omega_fl p_l.  Leader states may carry any
    number of stacked coordinates per node (positions, or positions with
    derivatives); followers come back with the same stacking.
    """
    blocks = build_laplacian(fw)
    followers = fw.follower_ids
    if not followers:
        return {}
    lead = np.array([np.asarray(leader_states[i], dtype=float) for i in fw.leader_ids])
    rhs = -blocks.fl @ lead
    sol = np.linalg.solve(blocks.ff, rhs)
    return {v: sol[k] for k, v in enumerate(followers)}


def to_json_dict(fw: NominalFramework) -> dict:
    return {
        "dim": fw.dim,
        "leaders": list(fw.leader_ids),
        "nodes": [{"id": i, "position": [float(c) for c in fw.positions[i]]}
                  for i in fw.node_ids],
        "edges": [{"from": j, "to": i, "weight": float(w)}
                  for (i, j), w in fw.weights.items()],
    }


def from_json_dict(data: dict) -> NominalFramework:
    try:
        dim = int(data["dim"])
        leaders = [int(v) for v in data["leaders"]]
        node_ids = [int(n["id"]) for n in data["nodes"]]
        positions = {int(n["id"]): np.asarray(n["position"], dtype=float)
                     for n in data["nodes"]}
        weights = {(int(e["to"]), int(e["from"])): float(e["weight"])
                   for e in data["edges"]}
    except (KeyError, TypeError, ValueError) as exc:
        raise FrameworkFormatError(f"malformed framework data: {exc}") from exc
    if node_ids[: len(leaders)] != leaders:
        raise FrameworkFormatError("leader ids must be the first node entries")
    if len(weights) != len(data["edges"]):
        raise FrameworkFormatError("duplicate edge in framework data")
    return NominalFramework(
        dim=dim,
        node_ids=node_ids,
        leader_count=len(leaders),
        positions=positions,
        weights=weights,
    )


def save_framework(fw: NominalFramework, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_json_dict(fw), fh, indent=2)
        fh.write("\n")


def load_framework(path) -> NominalFramework:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FrameworkFormatError(f"invalid JSON: {exc}") from exc
    return from_json_dict(data)
