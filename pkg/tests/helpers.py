"""Shared oracles and fixture generators for the test suite.

Everything here is deliberately independent of the code under test:
ranks and kernels come from hand-rolled row reduction on plain lists,
layer depths from memoized path search, and random fixtures are built
by planting a known solution rather than by asking the library to find
one.  When a test compares library output against these, agreement is
evidence, not circularity.
"""

from __future__ import annotations

import numpy as np

from affineform import AttachmentSpec, PointSet


def _row_reduce(rows: list[list[float]], tol: float) -> tuple[list[list[float]], list[int]]:
    mat = [list(map(float, row)) for row in rows]
    nrows = len(mat)
    ncols = len(mat[0]) if mat else 0
    scale = max((abs(v) for row in mat for v in row), default=1.0)
    thresh = tol * max(scale, 1.0)
    piv_cols: list[int] = []
    row = 0
    for col in range(ncols):
        if row >= nrows:
            break
        pivot = max(range(row, nrows), key=lambda r: abs(mat[r][col]))
        if abs(mat[pivot][col]) <= thresh:
            continue
        mat[row], mat[pivot] = mat[pivot], mat[row]
        lead = mat[row][col]
        mat[row] = [v / lead for v in mat[row]]
        for r in range(nrows):
            if r != row and mat[r][col] != 0.0:
                f = mat[r][col]
                mat[r] = [a - f * b for a, b in zip(mat[r], mat[row])]
        piv_cols.append(col)
        row += 1
    return mat, piv_cols


def oracle_rank(rows, tol: float = 1e-9) -> int:
    """Matrix rank by Gauss-Jordan elimination with partial pivoting."""
    rows = [list(r) for r in np.atleast_2d(np.asarray(rows, dtype=float))]
    return len(_row_reduce(rows, tol)[1])


def oracle_nullspace(rows, tol: float = 1e-9) -> list[list[float]]:
    """Kernel basis from the reduced row echelon form (one vector per
    free column, pivot entries filled by back-substitution)."""
    arr = np.atleast_2d(np.asarray(rows, dtype=float))
    rref, piv_cols = _row_reduce([list(r) for r in arr], tol)
    ncols = arr.shape[1]
    basis = []
    for free in (c for c in range(ncols) if c not in piv_cols):
        vec = [0.0] * ncols
        vec[free] = 1.0
        for r, piv in enumerate(piv_cols):
            vec[piv] = -rref[r][free]
        basis.append(vec)
    return basis


def oracle_affinely_independent(points, tol: float = 1e-9) -> bool:
    """Full homogeneous row rank, computed by the elimination oracle."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    hom = np.hstack([pts, np.ones((pts.shape[0], 1))])
    return oracle_rank(hom, tol) == pts.shape[0]


def oracle_layer_depths(node_ids, in_neighbors) -> dict[int, int]:
    """Longest chain length ending at each node, by memoized DFS.

    Raises ValueError on a directed cycle.  in_neighbors maps node id to
    an iterable of its in-neighbor ids.
    """
    memo: dict[int, int] = {}
    active: set[int] = set()

    def depth(v: int) -> int:
        if v in memo:
            return memo[v]
        if v in active:
            raise ValueError(f"cycle through node {v}")
        active.add(v)
        preds = list(in_neighbors.get(v, ()))
        memo[v] = 1 if not preds else 1 + max(depth(p) for p in preds)
        active.discard(v)
        return memo[v]

    return {v: depth(v) for v in node_ids}


def central_diff(f, t: float, h: float = 1e-5, order: int = 1) -> float:
    """Five-point central finite difference, first or second derivative."""
    stencil = [f(t + k * h) for k in (-2, -1, 0, 1, 2)]
    if order == 1:
        return (stencil[0] - 8 * stencil[1] + 8 * stencil[3] - stencil[4]) / (12 * h)
    if order == 2:
        return (-stencil[0] + 16 * stencil[1] - 30 * stencil[2]
                + 16 * stencil[3] - stencil[4]) / (12 * h * h)
    raise ValueError("order must be 1 or 2")


def planted_weights(rng: np.random.Generator, m: int) -> np.ndarray:
    """Weights summing to one with every component bounded away from 0."""
    while True:
        h = rng.uniform(-1.0, 1.0, size=m)
        total = h.sum()
        if abs(total) < 0.2:
            continue
        h = h / total
        if np.abs(h).min() >= 0.05:
            return h


def random_unit(rng: np.random.Generator, d: int, m: int | None = None):
    """A random equilibrium unit with its planted weight vector.

    Returns (points, h) where points[0] is the apex placed at the planted
    affine combination h of the other m points, so h is the unique
    normalized solution the solver must reproduce.
    """
    if m is None:
        m = int(rng.integers(2, d + 2))
    while True:
        base = rng.uniform(-5.0, 5.0, size=(m, d))
        if m >= 3 and not oracle_affinely_independent(base):
            continue
        h = planted_weights(rng, m)
        apex = h @ base
        points = np.vstack([apex, base])
        ok = all(
            oracle_affinely_independent(np.delete(points, j, axis=0))
            for j in range(m + 1)
        )
        if ok and oracle_rank(points[0] - points[1:]) == m - 1:
            return points, h


def random_euc_inputs(rng: np.random.Generator, d: int, n_followers: int):
    """Leader simplex plus planted attachment specs for euc_construct.

    Every attachment position is an affine combination (weights bounded
    away from zero) of already-placed nodes whose layout the elimination
    oracle has certified, so the unit condition holds by construction.
    """
    while True:
        leader_pts = rng.uniform(-5.0, 5.0, size=(d + 1, d))
        if oracle_affinely_independent(leader_pts):
            break
    positions: dict[int, np.ndarray] = {
        k + 1: leader_pts[k] for k in range(d + 1)
    }
    specs: list[AttachmentSpec] = []
    next_id = d + 2
    for _ in range(n_followers):
        while True:
            m = int(rng.integers(2, d + 2))
            ids = [int(v) for v in rng.choice(sorted(positions), size=m, replace=False)]
            base = np.array([positions[i] for i in ids])
            if m >= 3 and not oracle_affinely_independent(base):
                continue
            h = planted_weights(rng, m)
            apex = h @ base
            specs.append(AttachmentSpec(next_id, apex, ids))
            positions[next_id] = apex
            next_id += 1
            break
    return PointSet(d, leader_pts), specs


def random_affine(rng: np.random.Generator, d: int) -> tuple[np.ndarray, np.ndarray]:
    return rng.uniform(-2.0, 2.0, size=(d, d)), rng.uniform(-3.0, 3.0, size=d)


def framework_signature(fw) -> dict:
    """Order-insensitive content of a framework, for exact comparisons."""
    return {
        "dim": fw.dim,
        "leaders": tuple(sorted(fw.leader_ids)),
        "positions": {i: tuple(map(float, fw.positions[i])) for i in fw.node_ids},
        "in_entries": {
            i: tuple((j, float(w)) for j, w in fw.in_entries(i))
            for i in fw.node_ids
        },
    }


def tables_signature(tables) -> dict:
    """Exact (ordered) content of LCC tables, for bit-level comparisons."""
    return {
        v: (
            tuple((e.src, e.weight) for e in t.in_table),
            tuple(sorted(t.out_table)),
        )
        for v, t in tables.items()
    }
