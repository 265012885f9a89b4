"""Closed-loop maneuver simulation with mid-run framework changes.

Followers are integrator chains driven by the sampled weighted relative
error; leaders exactly realize the commanded affine maneuver.  Framework
add/remove events snap to sampling instants and run atomically: graph
reconfiguration, the local table cascade, scaling refresh, and the
schedule jump all happen between two sampling intervals.

Between samples the control uses an open-loop prediction of the weighted
error taken at the interval start, so follower dynamics inside an
interval depend on time only and the fixed-step integrator is exact up to
roundoff for second-order chains.
"""

from __future__ import annotations

import bisect
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .controller import (
    GainSet,
    auto_tune,
    build_integrator,
    check_gain_conditions,
    find_diagonal_Q,
    initial_schedules,
    lyapunov_value,
    make_gains,
    propagator,
    quad_form,
    schedule_jump,
)
from .framework import (
    NominalFramework,
    build_laplacian,
    compute_layers,
    from_json_dict,
    to_json_dict,
    verify_affine_localizability,
)
from .geometry import DEFAULT_TOL, Tolerances
from .lcc_protocol import (
    AddEvent,
    MessageLog,
    RemoveEvent,
    run_lcc,
    tables_from_framework,
    tables_match_framework,
)
from .reconfig import (
    ReconfigEvent,
    event_from_dict,
    event_to_dict,
    fia_add,
    foa_remove,
)


class ScenarioError(ValueError):
    """Raised for scenarios that violate the simulation contract."""


@dataclass
class ManeuverSchedule:
    """Piecewise-quintic interpolation of (A, b) keyframes.

    Keyframe times must be strictly increasing and start at zero.  The
    blend polynomial has vanishing first and second derivatives at both
    ends, so repeating a keyframe value holds it constant and every join
    is twice continuously differentiable.
    """

    keyframes: list[tuple[float, np.ndarray, np.ndarray]]

    def __post_init__(self) -> None:
        if not self.keyframes:
            raise ScenarioError("maneuver needs at least one keyframe")
        cleaned = []
        for t, a, b in self.keyframes:
            a = np.asarray(a, dtype=float)
            b = np.asarray(b, dtype=float)
            if a.ndim != 2 or a.shape[0] != a.shape[1] or b.shape != (a.shape[0],):
                raise ScenarioError("keyframe shapes disagree")
            cleaned.append((float(t), a, b))
        times = [t for t, _, _ in cleaned]
        if times[0] != 0.0:
            raise ScenarioError("first keyframe must sit at time zero")
        if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
            raise ScenarioError("keyframe times must strictly increase")
        self.keyframes = cleaned
        self._times = times

    @property
    def dim(self) -> int:
        return self.keyframes[0][1].shape[0]

    def eval(self, t: float, deriv: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """A and b (or a time derivative of them) at time t."""
        if deriv not in (0, 1, 2):
            raise ValueError("only derivatives up to order 2 are available")
        kf = self.keyframes
        if t <= self._times[0] or len(kf) == 1:
            a, b = kf[0][1], kf[0][2]
            return (a.copy(), b.copy()) if deriv == 0 else (np.zeros_like(a), np.zeros_like(b))
        if t >= self._times[-1]:
            a, b = kf[-1][1], kf[-1][2]
            return (a.copy(), b.copy()) if deriv == 0 else (np.zeros_like(a), np.zeros_like(b))
        k = bisect.bisect_right(self._times, t) - 1
        t0, a0, b0 = kf[k]
        t1, a1, b1 = kf[k + 1]
        h = t1 - t0
        tau = (t - t0) / h
        if deriv == 0:
            s = tau ** 3 * (10.0 + tau * (-15.0 + 6.0 * tau))
            return a0 + (a1 - a0) * s, b0 + (b1 - b0) * s
        if deriv == 1:
            s = 30.0 * tau ** 2 * (tau - 1.0) ** 2 / h
        else:
            s = 60.0 * tau * (1.0 + tau * (-3.0 + 2.0 * tau)) / (h * h)
        return (a1 - a0) * s, (b1 - b0) * s

    def desired_state(self, chi: np.ndarray, t: float, order: int) -> np.ndarray:
        """Stacked target state: position and its derivatives, row-stacked."""
        rows = []
        for k in range(order):
            if k <= 2:
                a, b = self.eval(t, deriv=k)
                rows.append(a @ chi + b)
            else:
                rows.append(np.zeros(self.dim))
        return np.concatenate(rows)


@dataclass
class Scenario:
    """Everything one simulation run needs, JSON-serializable.

    Follower states start at the commanded position plus a seeded random
    offset of size init_offset, unless initial_states pins them exactly.
    """

    framework: NominalFramework
    maneuver: ManeuverSchedule
    horizon: float
    events: list[ReconfigEvent] = field(default_factory=list)
    order: int = 2
    dt: float = 0.01
    smsi: float = 0.1
    gains: dict = field(default_factory=lambda: {"auto": True})
    seed: int = 0
    init_offset: float = 0.5
    spawn_offset: float = 0.5
    t0_coeff: float = 1.0
    s0_coeff: float = 1.0
    initial_states: dict[int, np.ndarray] | None = None
    tol: Tolerances = DEFAULT_TOL


@dataclass
class JumpRecord:
    """Energy across one sampling boundary; action is add, remove, or carry."""

    time: float
    action: str
    node: int | None
    v_minus: float
    v_plus: float

    def to_dict(self) -> dict:
        return {
            "time": self.time,
            "action": self.action,
            "node": self.node,
            "v_minus": self.v_minus,
            "v_plus": self.v_plus,
        }


@dataclass
class EpochTrace:
    """Trajectory block with constant membership between two events."""

    index: int
    t_start: float
    t_end: float
    node_ids: list[int]
    follower_ids: list[int]
    q: dict[int, float]
    times: np.ndarray = field(repr=False)
    states: np.ndarray = field(repr=False)      # (K, N, order*dim) node order
    errors: np.ndarray = field(repr=False)      # (K, F, order*dim)
    err_norms: np.ndarray = field(repr=False)   # (K, F)
    controls: np.ndarray = field(repr=False)    # (K, F, dim)
    feasible: bool = True


@dataclass
class SimResult:
    dim: int
    order: int
    epochs: list[EpochTrace]
    lyap: np.ndarray                      # rows: t, tau, V, V1, V2, V3
    jumps: list[JumpRecord]
    event_jumps: list[JumpRecord]
    message_logs: list[tuple[float, MessageLog]]
    gain_reports: list[dict]
    rho: float
    warnings: list[str]

    @property
    def feasible(self) -> bool:
        return all(e.feasible for e in self.epochs) and not self.warnings


def true_wsre(fw: NominalFramework, states: dict[int, np.ndarray]) -> dict[int, np.ndarray]:
    """Weighted sums of relative states, one per follower, in table order."""
    out: dict[int, np.ndarray] = {}
    for i in fw.follower_ids:
        xi = np.asarray(states[i], dtype=float)
        acc = np.zeros_like(xi)
        for j, w in fw.in_entries(i):
            acc += w * (xi - np.asarray(states[j], dtype=float))
        out[i] = acc
    return out


def compute_errors(fw: NominalFramework, maneuver: ManeuverSchedule, t: float,
                   states: dict[int, np.ndarray], order: int) -> dict[int, np.ndarray]:
    """Follower tracking errors against the commanded affine image."""
    return {
        i: np.asarray(states[i], dtype=float)
        - maneuver.desired_state(fw.positions[i], t, order)
        for i in fw.follower_ids
    }


class _Epoch:
    """Cached per-epoch arrays for the inner loop."""

    def __init__(self, fw: NominalFramework, order: int, gains: GainSet,
                 tol: Tolerances):
        self.fw = fw
        report = verify_affine_localizability(fw, tol)
        if not report.passed:
            raise ScenarioError(
                "framework fails verification: " + "; ".join(report.notes)
            )
        self.layering = compute_layers(fw)
        blocks = build_laplacian(fw)
        self.followers = fw.follower_ids
        self.leaders = fw.leader_ids
        q_vec = find_diagonal_Q(blocks.ff, self.layering, self.followers)
        self.q = {i: float(q_vec[k]) for k, i in enumerate(self.followers)}
        self.q_arr = q_vec
        self.gain_report = check_gain_conditions(gains, blocks.ff, q_vec)
        nd = order * fw.dim
        self.omega_ff = np.kron(blocks.ff, np.eye(nd))
        self.omega_fl = np.kron(blocks.fl, np.eye(nd))
        self.chi_l = np.array([fw.positions[i] for i in self.leaders])

    def wsre_matrix(self, x_f: np.ndarray, x_l: np.ndarray) -> np.ndarray:
        """s for all followers, stacked (F, order*dim)."""
        flat = self.omega_ff @ x_f.reshape(-1) + self.omega_fl @ x_l.reshape(-1)
        return flat.reshape(x_f.shape)

    def leader_states(self, maneuver: ManeuverSchedule, t: float,
                      order: int) -> np.ndarray:
        return np.array([
            maneuver.desired_state(chi, t, order) for chi in self.chi_l
        ])

    def desired_followers(self, maneuver: ManeuverSchedule, t: float,
                          order: int) -> np.ndarray:
        return np.array([
            maneuver.desired_state(self.fw.positions[i], t, order)
            for i in self.followers
        ])


def _resolve_gains(scenario: Scenario, model, blocks_ff, layering,
                   followers, warnings: list[str]) -> GainSet:
    spec = dict(scenario.gains)
    overrides = {}
    for key in ("eps", "mu", "eta", "sigma", "l1", "l2", "hbar1", "hbar2"):
        if key in spec:
            overrides[key] = float(spec[key])
    overrides.setdefault("t_star", float(spec.get("t_star", scenario.smsi)))
    if spec.get("auto"):
        gains, report, _ = auto_tune(
            model, blocks_ff, layering, followers,
            xi0=float(spec.get("xi0", 1.0)), **overrides,
        )
        if not report.feasible:
            warnings.append(
                "auto-tuned gains remain outside the feasibility region; "
                "continuing with best-margin gains"
            )
        return gains
    try:
        xi = float(spec["xi"])
        beta = float(spec["beta"])
    except KeyError as exc:
        raise ScenarioError(f'gains need {exc.args[0]!r} (or "auto": true)') from exc
    return make_gains(model, xi, beta, **overrides)


class _TraceBuilder:
    """Accumulates one epoch's samples; frozen into an EpochTrace."""

    def __init__(self, index: int, t_start: float, epoch: _Epoch,
                 maneuver: ManeuverSchedule, order: int):
        self.index = index
        self.t_start = t_start
        self.epoch = epoch
        self.maneuver = maneuver
        self.order = order
        self.times: list[float] = []
        self.states: list[np.ndarray] = []
        self.errors: list[np.ndarray] = []
        self.controls: list[np.ndarray] = []

    def record(self, t: float, x_f: np.ndarray, u: np.ndarray) -> None:
        ep = self.epoch
        x_l = ep.leader_states(self.maneuver, t, self.order)
        self.times.append(t)
        self.states.append(np.vstack([x_l, x_f]))
        self.errors.append(x_f - ep.desired_followers(self.maneuver, t, self.order))
        self.controls.append(u.copy())

    def close(self, t_end: float) -> EpochTrace:
        errors = np.array(self.errors)
        return EpochTrace(
            index=self.index,
            t_start=self.t_start,
            t_end=t_end,
            node_ids=list(self.epoch.fw.node_ids),
            follower_ids=list(self.epoch.followers),
            q=dict(self.epoch.q),
            times=np.array(self.times),
            states=np.array(self.states),
            errors=errors,
            err_norms=np.linalg.norm(errors, axis=2) if errors.size else
            np.zeros((len(self.times), 0)),
            controls=np.array(self.controls),
            feasible=self.epoch.gain_report.feasible,
        )


def run(scenario: Scenario) -> SimResult:
    """Simulate the scenario; see the module docstring for the contract."""
    fw = scenario.framework
    dim = fw.dim
    dt, smsi, horizon = scenario.dt, scenario.smsi, scenario.horizon
    if dt <= 0 or smsi <= 0 or horizon < 0:
        raise ScenarioError("dt and smsi must be positive, horizon nonnegative")
    substeps = round(smsi / dt)
    if substeps < 1 or abs(substeps * dt - smsi) > 1e-9 * smsi:
        raise ScenarioError("smsi must be an integer multiple of dt")
    n_intervals = round(horizon / smsi)
    if abs(n_intervals * smsi - horizon) > 1e-9 * max(1.0, horizon):
        raise ScenarioError("horizon must be an integer multiple of smsi")
    if scenario.maneuver.dim != dim:
        raise ScenarioError("maneuver dimension disagrees with the framework")

    event_at: dict[int, ReconfigEvent] = {}
    for ev in sorted(scenario.events, key=lambda e: e.time):
        k = round(ev.time / smsi)
        if abs(k * smsi - ev.time) > 1e-9 * max(1.0, abs(ev.time)):
            raise ScenarioError(f"event at t={ev.time} is not on a sampling instant")
        if not 0 < k < n_intervals:
            raise ScenarioError(f"event at t={ev.time} outside the open horizon")
        if k in event_at:
            raise ScenarioError(f"two events share the instant t={ev.time}")
        event_at[k] = ev

    order = scenario.order
    model = build_integrator(order, dim)
    nd = order * dim
    warnings: list[str] = []

    gains = _resolve_gains(scenario, model, build_laplacian(fw).ff,
                           compute_layers(fw), fw.follower_ids, warnings)
    if smsi > gains.t_star * (1.0 + 1e-12):
        raise ScenarioError("sampling period exceeds the design bound t_star")
    rho = gains.rho
    gamma = gains.gamma
    beta = gains.beta

    epoch = _Epoch(fw, order, gains, scenario.tol)
    if not epoch.gain_report.feasible:
        warnings.append(
            "epoch 0 gain conditions infeasible: "
            + "; ".join(epoch.gain_report.notes)
        )
    gains.q = epoch.q

    if n_intervals == 0:
        return SimResult(
            dim=dim, order=order, epochs=[], lyap=np.zeros((0, 6)),
            jumps=[], event_jumps=[], message_logs=[],
            gain_reports=[{"time": 0.0, **epoch.gain_report.to_dict()}],
            rho=rho, warnings=warnings,
        )

    tables = tables_from_framework(fw)
    rng = np.random.default_rng(scenario.seed)

    # stage-offset propagators contracted with gamma: u(tau) needs only
    # gamma exp(C tau) applied to the interval-start predictor state
    geff_at = [gamma @ propagator(order, k * dt) for k in range(substeps + 1)]
    geff_half = [gamma @ propagator(order, (k + 0.5) * dt) for k in range(substeps)]
    e_at = [propagator(order, k * dt) for k in range(substeps + 1)]

    x_f = epoch.desired_followers(scenario.maneuver, 0.0, order)
    x_f[:, :dim] += scenario.init_offset * rng.standard_normal((x_f.shape[0], dim))
    if scenario.initial_states:
        for k, i in enumerate(epoch.followers):
            if i in scenario.initial_states:
                pinned = np.asarray(scenario.initial_states[i], dtype=float)
                if pinned.shape != (nd,):
                    raise ScenarioError(
                        f"initial state for node {i} must have {nd} entries"
                    )
                x_f[k] = pinned

    sched = initial_schedules(epoch.followers, scenario.t0_coeff, scenario.s0_coeff)
    x_l = epoch.leader_states(scenario.maneuver, 0.0, order)
    s_mat = epoch.wsre_matrix(x_f, x_l)
    s_hat0 = s_mat.copy()           # predictor state at the interval start

    lyap_rows: list[tuple] = []
    jumps: list[JumpRecord] = []
    event_jumps: list[JumpRecord] = []
    message_logs: list[tuple[float, MessageLog]] = []
    gain_reports: list[dict] = [{"time": 0.0, **epoch.gain_report.to_dict()}]

    def lyap_sample(t: float, tau: float, s_now: np.ndarray,
                    sh_now: np.ndarray) -> tuple:
        s_d = {i: s_now[k] for k, i in enumerate(epoch.followers)}
        sh_d = {i: sh_now[k] for k, i in enumerate(epoch.followers)}
        v, v1, v2, v3 = lyapunov_value(tau, gains, sched, s_d, sh_d, dim)
        return (t, tau, v, v1, v2, v3)

    lyap_rows.append(lyap_sample(0.0, 0.0, s_mat, s_hat0))

    q_arr = epoch.q_arr

    def control(geff: np.ndarray) -> np.ndarray:
        sh3 = s_hat0.reshape(-1, order, dim)
        return -beta * q_arr[:, None] * np.einsum("a,fad->fd", geff, sh3)

    epochs: list[EpochTrace] = []
    trace = _TraceBuilder(0, 0.0, epoch, scenario.maneuver, order)
    trace.record(0.0, x_f, control(geff_at[0]))

    for m in range(n_intervals):
        t_interval = m * smsi
        sh_now = s_hat0
        u_full = control(geff_at[0])
        for k_sub in range(substeps):
            u_now = control(geff_at[k_sub])
            u_half = control(geff_half[k_sub])
            u_full = control(geff_at[k_sub + 1])

            k1 = np.empty_like(x_f)
            k1[:, : nd - dim] = x_f[:, dim:]
            k1[:, nd - dim:] = u_now
            x2 = x_f + 0.5 * dt * k1
            k2 = np.empty_like(x_f)
            k2[:, : nd - dim] = x2[:, dim:]
            k2[:, nd - dim:] = u_half
            x3 = x_f + 0.5 * dt * k2
            k3 = np.empty_like(x_f)
            k3[:, : nd - dim] = x3[:, dim:]
            k3[:, nd - dim:] = u_half
            x4 = x_f + dt * k3
            k4 = np.empty_like(x_f)
            k4[:, : nd - dim] = x4[:, dim:]
            k4[:, nd - dim:] = u_full
            x_f = x_f + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

            t = t_interval + (k_sub + 1) * dt
            tau = (k_sub + 1) * dt
            x_l = epoch.leader_states(scenario.maneuver, t, order)
            s_mat = epoch.wsre_matrix(x_f, x_l)
            sh_now = np.einsum(
                "ab,fbd->fad", e_at[k_sub + 1], s_hat0.reshape(-1, order, dim)
            ).reshape(-1, nd)
            if k_sub < substeps - 1:
                trace.record(t, x_f, u_full)
                lyap_rows.append(lyap_sample(t, tau, s_mat, sh_now))

        boundary = (m + 1) * smsi
        row_minus = lyap_sample(boundary, smsi, s_mat, sh_now)
        lyap_rows.append(row_minus)
        v_minus = row_minus[2]
        trace.record(boundary, x_f, u_full)

        ev = event_at.get(m + 1)
        last = (m + 1 == n_intervals)
        if ev is None:
            if last:
                break
            sched = schedule_jump(sched, gains, smsi)
            s_hat0 = s_mat.copy()
            row_plus = lyap_sample(boundary, 0.0, s_mat, s_hat0)
            lyap_rows.append(row_plus)
            jumps.append(JumpRecord(boundary, "carry", None, v_minus, row_plus[2]))
            continue

        epochs.append(trace.close(boundary))

        old_followers = list(epoch.followers)
        if ev.action == "remove":
            new_fw = foa_remove(epoch.fw, ev.node, tol=scenario.tol)
            log = run_lcc(tables, RemoveEvent(ev.node))
        else:
            new_fw = fia_add(epoch.fw, ev.attachment, scenario.tol)
            log = run_lcc(tables, AddEvent(
                ev.node, tuple(new_fw.in_entries(ev.node))))
        message_logs.append((boundary, log))
        if not tables_match_framework(tables, new_fw):
            raise ScenarioError(
                f"local tables diverged from the framework after t={boundary}"
            )

        state_of = {i: x_f[k] for k, i in enumerate(old_followers)}
        epoch = _Epoch(new_fw, order, gains, scenario.tol)
        if not epoch.gain_report.feasible:
            warnings.append(
                f"gain conditions infeasible after t={boundary}: "
                + "; ".join(epoch.gain_report.notes)
            )
        gain_reports.append({"time": boundary, **epoch.gain_report.to_dict()})
        gains.q = epoch.q
        q_arr = epoch.q_arr
        fw = new_fw

        x_f = np.empty((len(epoch.followers), nd))
        for k, i in enumerate(epoch.followers):
            if i in state_of:
                x_f[k] = state_of[i]
            else:
                spawn = scenario.maneuver.desired_state(
                    new_fw.positions[i], boundary, order)
                spawn[:dim] += scenario.spawn_offset * rng.standard_normal(dim)
                x_f[k] = spawn

        x_l = epoch.leader_states(scenario.maneuver, boundary, order)
        s_mat = epoch.wsre_matrix(x_f, x_l)
        s_quads = {i: quad_form(gains.P, s_mat[k], dim)
                   for k, i in enumerate(epoch.followers)}
        if ev.action == "remove":
            sched = schedule_jump(sched, gains, smsi, removed=ev.node,
                                  s_quads=s_quads, q_new=epoch.q)
        else:
            sched = schedule_jump(sched, gains, smsi, added=ev.node,
                                  s_quads=s_quads, q_new=epoch.q)
        s_hat0 = s_mat.copy()

        row_plus = lyap_sample(boundary, 0.0, s_mat, s_hat0)
        lyap_rows.append(row_plus)
        rec = JumpRecord(boundary, ev.action, ev.node, v_minus, row_plus[2])
        jumps.append(rec)
        event_jumps.append(rec)

        trace = _TraceBuilder(len(epochs), boundary, epoch, scenario.maneuver, order)
        trace.record(boundary, x_f, control(geff_at[0]))

    epochs.append(trace.close(horizon))

    return SimResult(
        dim=dim,
        order=order,
        epochs=epochs,
        lyap=np.array(lyap_rows),
        jumps=jumps,
        event_jumps=event_jumps,
        message_logs=message_logs,
        gain_reports=gain_reports,
        rho=rho,
        warnings=warnings,
    )


def fit_log_decay(times: np.ndarray, values: np.ndarray, *,
                  floor: float = 1e-10, skip: float = 1.0) -> tuple[float, float, int]:
    """Least-squares slope and R^2 of ln(values) over time.

    Samples at or below the floor sit in rounding noise and are dropped,
    as is a short lead-in after the interval start where the jump
    transient aligns.  Returns (slope, r_squared, sample_count).
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = (values > floor) & (times >= times[0] + skip)
    count = int(mask.sum())
    if count < 8:
        return 0.0, 0.0, count
    x = times[mask]
    y = np.log(values[mask])
    slope, intercept = np.polyfit(x, y, 1)
    fit = slope * x + intercept
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return float(slope), float(r2), count


def flow_bound_fraction(result: SimResult, *, rel_tol: float = 1e-6) -> float:
    """Fraction of intra-interval sample pairs obeying the decay bound.

    Checks V(t+dt) <= V(t) exp(-rho dt) (1 + rel_tol) on consecutive
    energy samples within one sampling interval; pairs straddling a
    sampling instant belong to the jump condition instead.
    """
    rows = result.lyap
    rho = result.rho
    ok = 0
    total = 0
    for a, b in zip(rows[:-1], rows[1:]):
        if b[1] <= a[1]:
            continue
        total += 1
        if b[2] <= a[2] * math.exp(-rho * (b[1] - a[1])) * (1.0 + rel_tol):
            ok += 1
    return ok / total if total else 1.0


def max_error_series(epoch: EpochTrace) -> tuple[np.ndarray, np.ndarray]:
    """Worst follower error norm over time for one epoch."""
    return epoch.times, epoch.err_norms.max(axis=1)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_outputs(result: SimResult, outdir) -> dict[str, str]:
    """Write trajectories.csv, errors.csv, lyapunov.csv, epochs.json, and
    messages.log under outdir; returns the path map.

    Epoch boundaries appear twice in the state files, once with the old
    membership and once with the new, so a removed agent's final sample
    and an added agent's first sample are both present.
    """
    os.makedirs(outdir, exist_ok=True)
    paths = {}

    path = os.path.join(outdir, "trajectories.csv")
    with open(path, "w", encoding="utf-8") as fh:
        cols = ",".join(f"x{k+1}" for k in range(result.order * result.dim))
        fh.write(f"t,agent,{cols}\n")
        for ep in result.epochs:
            for row in range(len(ep.times)):
                t = ep.times[row]
                for k, agent in enumerate(ep.node_ids):
                    vals = ",".join(_fmt(v) for v in ep.states[row, k])
                    fh.write(f"{_fmt(t)},{agent},{vals}\n")
    paths["trajectories"] = path

    path = os.path.join(outdir, "errors.csv")
    with open(path, "w", encoding="utf-8") as fh:
        cols = ",".join(f"e{k+1}" for k in range(result.order * result.dim))
        fh.write(f"t,agent,norm,{cols}\n")
        for ep in result.epochs:
            for row in range(len(ep.times)):
                t = ep.times[row]
                for k, agent in enumerate(ep.follower_ids):
                    vals = ",".join(_fmt(v) for v in ep.errors[row, k])
                    fh.write(
                        f"{_fmt(t)},{agent},{_fmt(ep.err_norms[row, k])},{vals}\n"
                    )
    paths["errors"] = path

    path = os.path.join(outdir, "lyapunov.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,V,V1,V2,V3\n")
        for row in result.lyap:
            fh.write(",".join(_fmt(v) for v in (row[0], *row[2:])) + "\n")
    paths["lyapunov"] = path

    path = os.path.join(outdir, "epochs.json")
    payload = {
        "rho": result.rho,
        "feasible": result.feasible,
        "warnings": list(result.warnings),
        "epochs": [
            {
                "index": ep.index,
                "t_start": ep.t_start,
                "t_end": ep.t_end,
                "node_ids": ep.node_ids,
                "follower_ids": ep.follower_ids,
                "q": {str(i): ep.q[i] for i in ep.follower_ids},
                "feasible": ep.feasible,
            }
            for ep in result.epochs
        ],
        "event_jumps": [j.to_dict() for j in result.event_jumps],
        "gain_reports": result.gain_reports,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    paths["epochs"] = path

    path = os.path.join(outdir, "messages.log")
    with open(path, "w", encoding="utf-8") as fh:
        for t_event, log in result.message_logs:
            fh.write(f"# event t={_fmt(t_event)}\n")
            fh.write(log.to_jsonl())
    paths["messages"] = path

    return paths


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "framework": to_json_dict(sc.framework),
        "maneuver": {
            "keyframes": [
                {"time": t, "A": a.tolist(), "b": b.tolist()}
                for t, a, b in sc.maneuver.keyframes
            ]
        },
        "horizon": sc.horizon,
        "events": [event_to_dict(e) for e in sc.events],
        "order": sc.order,
        "dt": sc.dt,
        "smsi": sc.smsi,
        "gains": sc.gains,
        "seed": sc.seed,
        "init_offset": sc.init_offset,
        "spawn_offset": sc.spawn_offset,
        "t0_coeff": sc.t0_coeff,
        "s0_coeff": sc.s0_coeff,
        "initial_states": (
            {str(i): np.asarray(v, dtype=float).tolist()
             for i, v in sorted(sc.initial_states.items())}
            if sc.initial_states else None
        ),
    }


def scenario_from_dict(data: dict) -> Scenario:
    try:
        fw = from_json_dict(data["framework"])
        keyframes = [
            (float(k["time"]), np.asarray(k["A"], dtype=float),
             np.asarray(k["b"], dtype=float))
            for k in data["maneuver"]["keyframes"]
        ]
        maneuver = ManeuverSchedule(keyframes)
        events = [event_from_dict(e) for e in data.get("events", [])]
        raw_init = data.get("initial_states")
        initial_states = (
            {int(i): np.asarray(v, dtype=float) for i, v in raw_init.items()}
            if raw_init else None
        )
        return Scenario(
            framework=fw,
            maneuver=maneuver,
            horizon=float(data["horizon"]),
            events=events,
            order=int(data.get("order", 2)),
            dt=float(data.get("dt", 0.01)),
            smsi=float(data.get("smsi", 0.1)),
            gains=dict(data.get("gains", {"auto": True})),
            seed=int(data.get("seed", 0)),
            init_offset=float(data.get("init_offset", 0.5)),
            spawn_offset=float(data.get("spawn_offset", 0.5)),
            t0_coeff=float(data.get("t0_coeff", 1.0)),
            s0_coeff=float(data.get("s0_coeff", 1.0)),
            initial_states=initial_states,
        )
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed scenario: {exc}") from exc


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"invalid JSON: {exc}") from exc
    return scenario_from_dict(data)


def save_scenario(sc: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(sc), fh, indent=2)
        fh.write("\n")
