"""Command-line front end.

Subcommands: verify, construct, reconfigure, gains, simulate,
export-plots.  Exit codes follow one contract everywhere: 0 on success,
1 on a domain failure (verification fails, invalid reconfiguration,
warnings during a run), 2 on unreadable or malformed input.  The
AFFINEFORM_OUT environment variable supplies a default output directory
for commands that write result bundles.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .controller import (
    RiccatiError,
    ScalingError,
    auto_tune,
    build_integrator,
    check_gain_conditions,
    find_diagonal_Q,
    gain_vector,
    make_gains,
    solve_riccati,
)
from .framework import (
    FrameworkFormatError,
    build_laplacian,
    compute_layers,
    load_framework,
    save_framework,
    verify_affine_localizability,
)
from .geometry import DEFAULT_TOL, PointSet, Tolerances
from .lcc_protocol import (
    AddEvent,
    ProtocolError,
    RemoveEvent,
    run_lcc,
    tables_from_framework,
    tables_match_framework,
)
from .reconfig import (
    ReconfigError,
    attachment_from_dict,
    event_from_dict,
    euc_construct,
    fia_add,
    foa_remove,
)
from .simulator import (
    ScenarioError,
    fit_log_decay,
    flow_bound_fraction,
    load_scenario,
    max_error_series,
    run,
    write_outputs,
)

PARSE_ERROR = 2
DOMAIN_ERROR = 1


class CliError(Exception):
    """Carries the intended exit code alongside the message."""

    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _tolerances(args) -> Tolerances:
    kwargs = {}
    if getattr(args, "tol_rank", None) is not None:
        kwargs["tau_rank"] = args.tol_rank
    if getattr(args, "tol_res", None) is not None:
        kwargs["tau_res"] = args.tol_res
    if not kwargs:
        return DEFAULT_TOL
    return Tolerances(
        tau_rank=kwargs.get("tau_rank", DEFAULT_TOL.tau_rank),
        tau_res=kwargs.get("tau_res", DEFAULT_TOL.tau_res),
        tau_zero=DEFAULT_TOL.tau_zero,
    )


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", PARSE_ERROR) from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON: {exc}", PARSE_ERROR) from exc


def _load_framework(path):
    try:
        return load_framework(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", PARSE_ERROR) from exc
    except (json.JSONDecodeError, FrameworkFormatError) as exc:
        raise CliError(f"{path}: {exc}", PARSE_ERROR) from exc


def _outdir(args) -> str:
    out = getattr(args, "out", None) or os.environ.get("AFFINEFORM_OUT")
    return out or "affineform-out"


def cmd_verify(args) -> int:
    fw = _load_framework(args.framework)
    report = verify_affine_localizability(fw, _tolerances(args))
    payload = report.to_dict()
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        state = "PASS" if report.passed else "FAIL"
        print(f"verification: {state}")
        print(f"  leader span:        {report.leader_span}")
        print(f"  weights valid:      {report.weights_valid}")
        print(f"  Omega_ff invertible: {report.omega_ff_invertible} "
              f"(sigma_min {report.sigma_min_ff:.3e})")
        print(f"  equilibrium residual: {report.residual:.3e}")
        print(f"  layerable:          {report.layerable}")
        for note in report.notes:
            print(f"  note: {note}")
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    # the batch gate is stricter than the library predicate: downstream
    # scaling needs layers, so an unlayerable graph fails here
    return 0 if report.passed and report.layerable else DOMAIN_ERROR


def cmd_construct(args) -> int:
    data = _read_json(args.spec)
    try:
        leaders = PointSet(int(data["dim"]),
                           np.asarray(data["leaders"], dtype=float))
        attachments = [attachment_from_dict(a) for a in data["attachments"]]
        leader_ids = data.get("leader_ids")
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"{args.spec}: malformed construction spec: {exc}",
                       PARSE_ERROR) from exc
    fw = euc_construct(leaders, attachments, leader_ids, _tolerances(args))
    save_framework(fw, args.output)
    report = verify_affine_localizability(fw, _tolerances(args))
    print(f"constructed {len(fw.node_ids)} nodes "
          f"({fw.leader_count} leaders) -> {args.output}")
    return 0 if report.passed else DOMAIN_ERROR


def cmd_reconfigure(args) -> int:
    fw = _load_framework(args.framework)
    data = _read_json(args.event)
    try:
        event = event_from_dict(data)
    except ReconfigError as exc:
        raise CliError(f"{args.event}: {exc}", PARSE_ERROR) from exc

    tol = _tolerances(args)
    tables = tables_from_framework(fw)
    if event.action == "remove":
        new_fw = foa_remove(fw, event.node, tol=tol)
        log = run_lcc(tables, RemoveEvent(event.node))
    else:
        new_fw = fia_add(fw, event.attachment, tol)
        log = run_lcc(tables, AddEvent(event.node,
                                       tuple(new_fw.in_entries(event.node))))
    if not tables_match_framework(tables, new_fw):
        raise ProtocolError("local tables diverged from the framework")

    save_framework(new_fw, args.output)
    if args.messages:
        with open(args.messages, "w", encoding="utf-8") as fh:
            fh.write(log.to_jsonl())
    report = verify_affine_localizability(new_fw, tol)
    print(f"{event.action} node {event.node}: {len(fw.node_ids)} -> "
          f"{len(new_fw.node_ids)} nodes, {len(log)} messages, "
          f"verification {'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else DOMAIN_ERROR


def cmd_gains(args) -> int:
    fw = _load_framework(args.framework)
    tol = _tolerances(args)
    report = verify_affine_localizability(fw, tol)
    if not report.passed or not report.layerable:
        raise CliError("framework fails verification; no gains computed",
                       DOMAIN_ERROR)
    model = build_integrator(args.order, fw.dim)
    blocks = build_laplacian(fw)
    layering = compute_layers(fw)
    followers = fw.follower_ids
    if args.xi is not None:
        q = find_diagonal_Q(blocks.ff, layering, followers)
        p = solve_riccati(model, args.xi)
        gains = make_gains(model, args.xi,
                           args.beta if args.beta is not None else 1.0)
        cond = check_gain_conditions(gains, blocks.ff, q)
    else:
        gains, cond, q = auto_tune(model, blocks.ff, layering, followers)
        p = gains.P
    payload = {
        "xi": gains.xi,
        "beta": gains.beta,
        "P": p.tolist(),
        "gamma": gain_vector(model, p).tolist(),
        "q": {str(i): float(q[k]) for k, i in enumerate(followers)},
        "conditions": cond.to_dict(),
    }
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        print(f"xi = {gains.xi}, beta = {gains.beta}")
        print(f"gamma = {payload['gamma']}")
        print(f"q = {payload['q']}")
        print(f"feasible: {cond.feasible}")
        for note in cond.notes:
            print(f"  note: {note}")
    return 0 if cond.feasible else DOMAIN_ERROR


def cmd_simulate(args) -> int:
    try:
        if args.demo:
            from .demo import build_demo_scenario

            overrides = {}
            if args.horizon is not None:
                overrides["horizon"] = args.horizon
            if args.seed is not None:
                overrides["seed"] = args.seed
            if args.dt is not None:
                overrides["dt"] = args.dt
            if args.smsi is not None:
                overrides["smsi"] = args.smsi
            scenario = build_demo_scenario(**overrides)
        else:
            if args.scenario is None:
                raise CliError("either a scenario file or --demo is required",
                               PARSE_ERROR)
            try:
                scenario = load_scenario(args.scenario)
            except OSError as exc:
                raise CliError(f"cannot read {args.scenario}: {exc}",
                               PARSE_ERROR) from exc
            if args.horizon is not None:
                scenario.horizon = args.horizon
            if args.seed is not None:
                scenario.seed = args.seed
            if args.dt is not None:
                scenario.dt = args.dt
            if args.smsi is not None:
                scenario.smsi = args.smsi
        result = run(scenario)
    except ScenarioError as exc:
        raise CliError(f"invalid scenario: {exc}", PARSE_ERROR) from exc

    outdir = _outdir(args)
    paths = write_outputs(result, outdir)
    print(f"epochs: {len(result.epochs)}")
    for ep in result.epochs:
        times, worst = max_error_series(ep)
        slope, r2, count = fit_log_decay(times, worst)
        print(f"  epoch {ep.index} [{ep.t_start:g}, {ep.t_end:g}): "
              f"{len(ep.follower_ids)} followers, log-slope {slope:.3f} "
              f"(R^2 {r2:.3f}, {count} samples), "
              f"final max||e|| {worst[-1]:.3e}")
    for j in result.event_jumps:
        ratio = j.v_plus / j.v_minus if j.v_minus else float("nan")
        print(f"  jump t={j.time:g} ({j.action} {j.node}): "
              f"V {j.v_minus:.6e} -> {j.v_plus:.6e} (ratio {ratio:.4f})")
    if result.lyap.size:
        frac = flow_bound_fraction(result)
        print(f"flow bound held at {100.0 * frac:.2f}% of sampled pairs "
              f"(rho = {result.rho:g})")
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"outputs written to {outdir}")
    for name in sorted(paths):
        print(f"  {name}: {paths[name]}")
    return DOMAIN_ERROR if result.warnings else 0


def _read_csv_columns(path: str) -> tuple[list[str], list[list[str]]]:
    import csv

    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", PARSE_ERROR) from exc
    except StopIteration as exc:
        raise CliError(f"{path}: empty file", PARSE_ERROR) from exc
    return header, rows


def cmd_export_plots(args) -> int:
    try:
        import matplotlib
    except ImportError as exc:
        raise CliError(
            "matplotlib is not installed; install the 'plots' extra",
            DOMAIN_ERROR) from exc
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "affineform"

    datadir = args.datadir
    outdir = _outdir(args)
    os.makedirs(outdir, exist_ok=True)

    _, rows = _read_csv_columns(os.path.join(datadir, "trajectories.csv"))
    by_agent: dict[str, list[tuple[float, float, float]]] = {}
    for row in rows:
        by_agent.setdefault(row[1], []).append(
            (float(row[0]), float(row[2]), float(row[3])))

    fig, ax = plt.subplots(figsize=(7.0, 5.5))
    for agent in sorted(by_agent, key=int):
        pts = by_agent[agent]
        xs = [p[1] for p in pts]
        ys = [p[2] for p in pts]
        ax.plot(xs, ys, linewidth=0.8, label=f"agent {agent}")
        ax.plot(xs[-1], ys[-1], marker="o", markersize=3)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title("agent paths")
    ax.legend(fontsize=7, ncol=2)
    traj_path = os.path.join(outdir, "trajectories.svg")
    fig.savefig(traj_path, metadata={"Date": None})
    plt.close(fig)

    _, rows = _read_csv_columns(os.path.join(datadir, "errors.csv"))
    err_by_agent: dict[str, list[tuple[float, float]]] = {}
    for row in rows:
        err_by_agent.setdefault(row[1], []).append(
            (float(row[0]), float(row[2])))

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    floor = 1e-16
    for agent in sorted(err_by_agent, key=int):
        pts = err_by_agent[agent]
        ts = [p[0] for p in pts]
        ns = [max(p[1], floor) for p in pts]
        ax.semilogy(ts, ns, linewidth=0.8, label=f"agent {agent}")
    ax.set_xlabel("t")
    ax.set_ylabel("||e||")
    ax.set_title("tracking error norms")
    ax.legend(fontsize=7, ncol=2)
    err_path = os.path.join(outdir, "errors.svg")
    fig.savefig(err_path, metadata={"Date": None})
    plt.close(fig)

    print(f"wrote {traj_path}")
    print(f"wrote {err_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="affineform",
        description="formation frameworks: verify, reconfigure, simulate",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_tol_flags(p):
        p.add_argument("--tol-rank", type=float, default=None,
                       help="relative rank threshold override")
        p.add_argument("--tol-res", type=float, default=None,
                       help="equilibrium residual threshold override")

    p = sub.add_parser("verify", help="check affine localizability")
    p.add_argument("framework", help="framework JSON file")
    add_tol_flags(p)
    p.add_argument("--json", action="store_true", help="machine-readable report")
    p.add_argument("--report", default=None, help="also write the report here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("construct", help="build a framework from a spec")
    p.add_argument("spec", help="construction spec JSON file")
    p.add_argument("-o", "--output", required=True, help="framework output path")
    add_tol_flags(p)
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("reconfigure", help="apply one add/remove event")
    p.add_argument("framework", help="framework JSON file")
    p.add_argument("event", help="event JSON file")
    p.add_argument("-o", "--output", required=True, help="framework output path")
    p.add_argument("--messages", default=None, help="write the packet log here")
    add_tol_flags(p)
    p.set_defaults(func=cmd_reconfigure)

    p = sub.add_parser("gains", help="synthesize controller gains")
    p.add_argument("framework", help="framework JSON file")
    p.add_argument("--order", type=int, default=2, help="integrator order n")
    p.add_argument("--xi", type=float, default=None,
                   help="fix xi instead of auto-tuning")
    p.add_argument("--beta", type=float, default=None,
                   help="fix beta (with --xi)")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    add_tol_flags(p)
    p.set_defaults(func=cmd_gains)

    p = sub.add_parser("simulate", help="run a scenario and write result files")
    p.add_argument("scenario", nargs="?", default=None,
                   help="scenario JSON file")
    p.add_argument("--demo", action="store_true",
                   help="run the bundled nine-agent scenario")
    p.add_argument("--out", default=None,
                   help="output directory (default $AFFINEFORM_OUT)")
    p.add_argument("--dt", type=float, default=None, help="integrator step")
    p.add_argument("--smsi", type=float, default=None, help="sampling period")
    p.add_argument("--seed", type=int, default=None, help="random seed")
    p.add_argument("--horizon", type=float, default=None, help="end time")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("export-plots", help="render SVG plots from result CSVs")
    p.add_argument("datadir", help="directory holding simulate outputs")
    p.add_argument("--out", default=None,
                   help="output directory (default: same as datadir)")
    p.set_defaults(func=cmd_export_plots)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "export-plots" and args.out is None:
        args.out = args.datadir
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ReconfigError, ProtocolError, ScalingError, RiccatiError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DOMAIN_ERROR
    except FrameworkFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return PARSE_ERROR


if __name__ == "__main__":
    sys.exit(main())
