"""Gain synthesis and sampled-data control pieces.

Agents are chains of n integrators per axis.  The control gain comes from
a parametric Riccati equation whose solution P, together with the row
vector gamma = D^T P, places every weighted-error mode; a diagonal scaling
Q turns the follower coupling block into a strict contraction certificate;
and two per-agent schedules (theta growing, g decaying within each
sampling interval) budget the non-vanishing sampling error so the summed
energy keeps decaying through framework switches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np
import scipy.linalg

from .framework import Layering


class RiccatiError(RuntimeError):
    """Raised when the parametric Riccati solve fails its residual check."""


class ScalingError(RuntimeError):
    """Raised when no diagonal scaling certificate exists for a block."""


@dataclass(frozen=True)
class IntegratorModel:
    """n-th order integrator chain replicated across d axes."""

    order: int
    dim: int
    C: np.ndarray = field(repr=False)
    D: np.ndarray = field(repr=False)


def build_integrator(order: int, dim: int) -> IntegratorModel:
    if order < 1:
        raise ValueError("integrator order must be at least 1")
    if dim < 1:
        raise ValueError("ambient dimension must be at least 1")
    c = np.eye(order, k=1)
    d_vec = np.zeros(order)
    d_vec[-1] = 1.0
    return IntegratorModel(order=order, dim=dim, C=c, D=d_vec)


def solve_riccati(model: IntegratorModel, xi: float) -> np.ndarray:
    """Solve C^T P + P C - P D D^T P = -xi P for the stabilizing P > 0.

    Shifting by xi/2 turns this into a standard algebraic Riccati equation
    with zero state cost; its Hamiltonian is block triangular with
    defective eigenvalues at +-xi/2, so the stable invariant subspace is
    taken from an ordered real Schur form rather than eigenvectors.
    """
    if xi <= 0:
        raise ValueError("xi must be positive")
    n = model.order
    a = model.C + 0.5 * xi * np.eye(n)
    dd = np.outer(model.D, model.D)
    ham = np.block([[a, -dd], [np.zeros((n, n)), -a.T]])
    t, z, sdim = scipy.linalg.schur(ham, output="real", sort="lhp")
    if sdim != n:
        raise RiccatiError(f"stable subspace has dimension {sdim}, expected {n}")
    u1 = z[:n, :n]
    u2 = z[n:, :n]
    try:
        p = np.linalg.solve(u1.T, u2.T).T
    except np.linalg.LinAlgError as exc:
        raise RiccatiError("stable subspace is not a graph over the state") from exc
    p = 0.5 * (p + p.T)
    residual = float(np.linalg.norm(
        model.C.T @ p + p @ model.C - p @ dd @ p + xi * p
    ))
    if residual > 1e-8:
        raise RiccatiError(f"Riccati residual {residual:.3e} exceeds 1e-8")
    if float(np.min(np.linalg.eigvalsh(p))) <= 0:
        raise RiccatiError("Riccati solution is not positive definite")
    return p


def gain_vector(model: IntegratorModel, p: np.ndarray) -> np.ndarray:
    """Feedback row gamma = D^T P."""
    return model.D @ p


def find_diagonal_Q(omega_ff: np.ndarray, layering: Layering | None = None,
                    follower_ids: list[int] | None = None, *,
                    safety: float = 2.0) -> np.ndarray:
    """Diagonal Q > 0 with Q Omega_ff + Omega_ff^T Q positive definite.

    Requires the follower block to be lower triangular with positive
    diagonal after ordering followers by (layer, id); pass the layering
    and follower ids for that reordering, or neither if the block is
    already in such an order.  Entries are built row by row: each new q_k
    is taken a ``safety`` factor under the largest value keeping the
    leading principal block positive definite (a Schur-complement bound),
    and the result is rescaled so min q = 1.  Returned in the original
    follower order.
    """
    omega_ff = np.asarray(omega_ff, dtype=float)
    nf = omega_ff.shape[0]
    if omega_ff.shape != (nf, nf):
        raise ValueError("omega_ff must be square")
    if nf == 0:
        return np.empty(0)

    if layering is not None:
        if follower_ids is None or len(follower_ids) != nf:
            raise ValueError("follower_ids must accompany a layering")
        depth = layering.index_of()
        perm = sorted(range(nf), key=lambda k: (depth[follower_ids[k]], follower_ids[k]))
    else:
        perm = list(range(nf))
    low = omega_ff[np.ix_(perm, perm)]

    scale = float(np.max(np.abs(low))) or 1.0
    if nf > 1 and float(np.max(np.abs(np.triu(low, k=1)))) > 1e-9 * scale:
        raise ScalingError("follower block is not lower triangular in layer order")
    diag = np.diag(low)
    if np.any(diag <= 0):
        raise ScalingError("follower block diagonal is not positive")

    q = np.empty(nf)
    q[0] = 1.0
    for k in range(1, nf):
        row = low[k, :k]
        if not np.any(row):
            q[k] = 1.0
            continue
        s_block = (np.diag(q[:k]) @ low[:k, :k]
                   + low[:k, :k].T @ np.diag(q[:k]))
        bound = 2.0 * diag[k] / float(row @ np.linalg.solve(s_block, row))
        q[k] = min(1.0, bound / safety)
    q = q / np.min(q)

    out = np.empty(nf)
    for pos, orig in enumerate(perm):
        out[orig] = q[pos]
    sym = np.diag(out) @ omega_ff + omega_ff.T @ np.diag(out)
    if float(np.min(np.linalg.eigvalsh(sym))) <= 0:
        raise ScalingError("constructed Q failed the positive definiteness check")
    return out


@dataclass
class GainSet:
    """Controller constants; q is the per-follower scaling of the current
    framework and gets replaced at each reconfiguration."""

    xi: float
    beta: float
    P: np.ndarray = field(repr=False)
    gamma: np.ndarray = field(repr=False)
    eps: float = 0.1
    mu: float = 1.0
    t_star: float = 0.1
    eta: float | None = None
    sigma: float | None = None
    l1: float = 1.0
    l2: float = 1.0
    hbar1: float = 1.0
    hbar2: float = 2.0
    q: dict[int, float] | None = None

    def __post_init__(self) -> None:
        if self.eta is None:
            self.eta = 0.5 * self.xi
        if self.sigma is None:
            self.sigma = self.eta
        if not 0 < self.eta < self.xi:
            raise ValueError("need 0 < eta < xi")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.hbar2 <= 1:
            raise ValueError("hbar2 must exceed 1")
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")

    @property
    def rho(self) -> float:
        """Guaranteed flow decay rate min(eta, mu*Gamma_bar, sigma)."""
        return min(self.eta, self.mu * gamma_bar(self.t_star, self.eps, self.mu),
                   self.sigma)


def make_gains(model: IntegratorModel, xi: float, beta: float, **overrides) -> GainSet:
    p = solve_riccati(model, xi)
    return GainSet(xi=xi, beta=beta, P=p, gamma=gain_vector(model, p), **overrides)


def gamma_bar(t_star: float, eps: float, mu: float) -> float:
    """Decay-rate constant of the inter-sample weighting phi."""
    if t_star <= 0 or not 0 < eps < 1 or mu <= 0:
        raise ValueError("need t_star > 0, 0 < eps < 1, mu > 0")
    m = (2.0 + mu) / 2.0
    s = math.sqrt(4.0 * mu + mu * mu) / 2.0
    g1 = m + s + eps
    g2 = m - s + eps
    g3 = 1.0 + (m + s) * eps
    g4 = 1.0 + (m - s) * eps
    return math.log((g1 * g4) / (g3 * g2)) / (t_star * 2.0 * s)


def phi(tau: float, t_star: float, eps: float, mu: float) -> float:
    """Inter-sample weighting, running from 1/eps at tau = 0 to eps at
    tau = t_star, solving phi' = -Gamma_bar (phi^2 + (2+mu) phi + 1)."""
    m = (2.0 + mu) / 2.0
    s = math.sqrt(4.0 * mu + mu * mu) / 2.0
    g3 = 1.0 + (m + s) * eps
    g4 = 1.0 + (m - s) * eps
    gbar = gamma_bar(t_star, eps, mu)
    decay = math.exp(-gbar * 2.0 * s * tau)
    return s * (g3 + g4 * decay) / (g3 - g4 * decay) - m


@dataclass(frozen=True)
class GainConditionReport:
    """Margins of the sampled-data stability conditions."""

    eps_curvature: float
    z1: float
    z2: float
    z3: float
    beta_required: float
    beta: float
    lambda_min_sym: float
    feasible: bool
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "eps_curvature": self.eps_curvature,
            "z_bounds": [self.z1, self.z2, self.z3],
            "beta_required": self.beta_required,
            "beta": self.beta,
            "lambda_min_sym": self.lambda_min_sym,
            "feasible": self.feasible,
            "notes": list(self.notes),
        }


def check_gain_conditions(gains: GainSet, omega_ff: np.ndarray,
                          q: np.ndarray) -> GainConditionReport:
    """Evaluate the closed-loop feasibility inequalities for one epoch.

    The curvature ratio lambda_max(P D D^T P)/lambda_min(P) must stay
    under three rate bounds tied to Gamma_bar, and beta must clear its
    coupling lower bound.  The spectral norm stands in for the largest
    eigenvalue of the nonsymmetric Q Omega_ff product, which only
    tightens the test.
    """
    notes: list[str] = []
    qmat = np.diag(q)
    pd = gains.P[:, -1]  # P D for the integrator chain input
    eps_curv = float(pd @ pd) / float(np.min(np.linalg.eigvalsh(gains.P)))

    qo = qmat @ omega_ff
    lam_qo = float(np.linalg.norm(qo, 2)) if qo.size else 0.0
    sym = qo + qo.T
    lam_min = float(np.min(np.linalg.eigvalsh(sym))) if sym.size else np.inf
    lam_max_sym = float(np.max(np.linalg.eigvalsh(sym))) if sym.size else 0.0

    gbar = gamma_bar(gains.t_star, gains.eps, gains.mu)
    beta = gains.beta
    z1 = gbar / (gains.l1 * beta * beta * lam_qo * lam_qo) if lam_qo else np.inf
    z2 = gbar / (gains.l2 * beta * beta)
    z3 = 2.0 * gbar / (1.0 + beta * lam_max_sym)

    if lam_min <= 0:
        beta_required = np.inf
        notes.append("Q symmetrization is not positive definite")
    else:
        beta_required = (1.0 + 1.0 / gains.l1 + lam_qo * lam_qo / gains.l2) / lam_min
    beta_ok = beta >= beta_required
    if not beta_ok:
        notes.append(f"beta {beta:.4g} under required {beta_required:.4g}")
    zmin = min(z1, z2, z3)
    if eps_curv > zmin:
        notes.append(
            f"curvature ratio {eps_curv:.4g} exceeds rate bound {zmin:.4g}"
        )
    feasible = bool(beta_ok and lam_min > 0 and eps_curv <= zmin)
    return GainConditionReport(
        eps_curvature=eps_curv,
        z1=z1, z2=z2, z3=z3,
        beta_required=beta_required,
        beta=beta,
        lambda_min_sym=lam_min,
        feasible=feasible,
        notes=tuple(notes),
    )


def auto_tune(model: IntegratorModel, omega_ff: np.ndarray,
              layering: Layering | None = None,
              follower_ids: list[int] | None = None, *,
              xi0: float = 1.0, max_halvings: int = 60,
              **gain_overrides) -> tuple[GainSet, GainConditionReport, np.ndarray]:
    """Search xi downward for gains passing check_gain_conditions.

    beta is set to its required lower bound (larger beta only tightens the
    rate bounds).  When no xi in the halving sweep passes, the gains with
    the best margin come back with a report marked infeasible; callers
    decide whether that is fatal.
    """
    q = find_diagonal_Q(omega_ff, layering, follower_ids)
    best: tuple[float, GainSet, GainConditionReport] | None = None
    xi = float(xi0)
    for _ in range(max_halvings + 1):
        p = solve_riccati(model, xi)
        probe = GainSet(xi=xi, beta=1.0, P=p, gamma=gain_vector(model, p),
                        **gain_overrides)
        pre = check_gain_conditions(probe, omega_ff, q)
        beta = pre.beta_required if np.isfinite(pre.beta_required) else 1.0
        gains = replace(probe, beta=beta)
        report = check_gain_conditions(gains, omega_ff, q)
        margin = report.eps_curvature / min(report.z1, report.z2, report.z3)
        if report.feasible:
            return gains, report, q
        if best is None or margin < best[0]:
            best = (margin, gains, report)
        xi *= 0.5
    assert best is not None
    return best[1], best[2], q


@dataclass
class ScheduleState:
    """Per-follower schedule coefficients, reset at each sampling instant.

    theta_i(tau) = T[i] exp((xi - eta) tau) grows and weighs the sampled
    error energy; g_i(tau) = S[i] exp(-sigma tau) decays and holds the
    budget term.  tau is time since the interval start.
    """

    T: dict[int, float]
    S: dict[int, float]

    def theta(self, i: int, tau: float, gains: GainSet) -> float:
        return self.T[i] * math.exp((gains.xi - gains.eta) * tau)

    def g(self, i: int, tau: float, gains: GainSet) -> float:
        return self.S[i] * math.exp(-gains.sigma * tau)


def initial_schedules(follower_ids: Iterable[int], t0: float = 1.0,
                      s0: float = 1.0) -> ScheduleState:
    ids = list(follower_ids)
    return ScheduleState(T={i: float(t0) for i in ids},
                         S={i: float(s0) for i in ids})


def quad_form(p: np.ndarray, vec: np.ndarray, dim: int) -> float:
    """v^T (P kron I_d) v for a stacked per-axis state vector."""
    m = np.asarray(vec, dtype=float).reshape(p.shape[0], dim)
    return float(np.einsum("ad,ab,bd->", m, p, m))


def schedule_jump(sched: ScheduleState, gains: GainSet, elapsed: float, *,
                  added: int | None = None, removed: int | None = None,
                  s_quads: dict[int, float] | None = None,
                  q_new: dict[int, float] | None = None) -> ScheduleState:
    """Coefficients for the next sampling interval.

    Plain instants carry theta and g over continuously.  When a node was
    added, every incumbent sheds a 1/hbar2 fraction of its g budget and
    the pooled amount funds the newcomer's coefficients.  When a node was
    removed, survivors refresh theta from their own shed budget.  Both
    reconfiguration cases need the new epoch's q and the sampled energies
    s_i^T (P kron I_d) s_i at the jump instant.
    """
    hb1, hb2 = gains.hbar1, gains.hbar2
    theta_minus = {i: sched.theta(i, elapsed, gains) for i in sched.T}
    g_minus = {i: sched.g(i, elapsed, gains) for i in sched.S}

    if added is None and removed is None:
        return ScheduleState(T=theta_minus, S=g_minus)

    if s_quads is None or q_new is None:
        raise ValueError("reconfiguration jumps need s_quads and q_new")

    if added is not None:
        pool = sum(g_minus.values())
        t_new = dict(theta_minus)
        s_new = {i: (1.0 - 1.0 / hb2) * g_minus[i] for i in g_minus}
        t_new[added] = pool / (2.0 * hb2 * (q_new[added] * s_quads[added] + hb1))
        s_new[added] = pool / (2.0 * hb2)
        return ScheduleState(T=t_new, S=s_new)

    t_new = {}
    s_new = {}
    for i in g_minus:
        if i == removed:
            continue
        t_new[i] = g_minus[i] / (hb2 * (q_new[i] * s_quads[i] + hb1))
        s_new[i] = (1.0 - 1.0 / hb2) * g_minus[i]
    return ScheduleState(T=t_new, S=s_new)


def lyapunov_value(tau: float, gains: GainSet, sched: ScheduleState,
                   s: dict[int, np.ndarray], s_hat: dict[int, np.ndarray],
                   dim: int) -> tuple[float, float, float, float]:
    """Total energy V = V1 + V2 + V3 and its pieces at interval offset tau."""
    v1 = 0.0
    v2 = 0.0
    v3 = 0.0
    phival = phi(tau, gains.t_star, gains.eps, gains.mu)
    for i in sched.T:
        th = sched.theta(i, tau, gains)
        v1 += th * quad_form(gains.P, s[i], dim)
        delta = np.asarray(s[i], dtype=float) - np.asarray(s_hat[i], dtype=float)
        v2 += th * quad_form(gains.P, delta, dim)
        v3 += sched.g(i, tau, gains)
    v2 *= phival
    return v1 + v2 + v3, v1, v2, v3


def propagator(order: int, dt: float) -> np.ndarray:
    """exp(C dt) for the shift-chain C: finite upper triangular Toeplitz."""
    e = np.zeros((order, order))
    for k in range(order):
        e += (dt ** k / math.factorial(k)) * np.linalg.matrix_power(
            np.eye(order, k=1), k)
    return e


def wsre_reset(s: dict[int, np.ndarray]) -> dict[int, np.ndarray]:
    """Predictor state at a sampling instant: copy of the true values."""
    return {i: np.array(v, dtype=float) for i, v in s.items()}


def wsre_step(s_hat: dict[int, np.ndarray], dt: float, order: int,
              dim: int) -> dict[int, np.ndarray]:
    """Advance the open-loop predictor by dt (exact for the chain flow)."""
    e = propagator(order, dt)
    return {i: (e @ np.asarray(v, dtype=float).reshape(order, dim)).reshape(-1)
            for i, v in s_hat.items()}


def control_input(gains: GainSet, q_i: float, s_hat_i: np.ndarray,
                  dim: int) -> np.ndarray:
    """u_i = -beta q_i (gamma kron I_d) s_hat_i."""
    m = np.asarray(s_hat_i, dtype=float).reshape(gains.gamma.shape[0], dim)
    return -gains.beta * q_i * (gains.gamma @ m)
