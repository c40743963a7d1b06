"""Command-line front end.

Subcommands: analyze, simulate, sweep, bandwidth, reproduce, geometry.
Output goes to --out (or DISHMAC_OUTPUT_DIR, or stdout).  CSV files carry
the resolved configuration as '#' comments so any figure can be rebuilt
from the file alone; identical invocations with identical seeds produce
byte-identical CSV.  Model errors exit 1 with a machine-readable JSON line
on stderr; usage errors exit 2.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import experiments
from .analytic import (
    MULTI_HOP,
    SINGLE_HOP,
    ModelParams,
    p_co,
    stability_check,
    timings_from_bytes,
)
from .bandwidth import SigmaSweep, optimize_sigma
from .errors import DishmacError, DomainError, NoConvergenceError, UnstableError
from .experiments import (
    FIGURE_IDS,
    control_send_gaps,
    poissonness_check,
    reproduce,
    write_dataset_csv,
)
from .geometry import neighbor_constants
from .sim.config import build_simulator, load_scenario, scenario_from_mapping
from .sim.metrics import METRICS_CSV_COLUMNS

_OUT_ENV = "DISHMAC_OUTPUT_DIR"


def _out_dir(args) -> Path:
    base = args.out or os.environ.get(_OUT_ENV) or "."
    path = Path(base)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _emit(args, name, lines):
    """Write lines to <out>/<name> or stdout when no output dir is set."""
    if args.out is None and _OUT_ENV not in os.environ:
        sys.stdout.write("\n".join(lines) + "\n")
        return None
    path = _out_dir(args) / name
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    print(path)
    return path


def _config_comments(pairs) -> list:
    return [f"# {k} = {v}" for k, v in pairs]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _add_model_args(p):
    p.add_argument("--single-hop", action="store_true", help="fully connected network")
    p.add_argument("--multi-hop", action="store_true", help="random multi-hop network (default)")
    p.add_argument("--n", type=float, required=True,
                   help="node density per R^2 (multi-hop) or node count (single-hop)")
    p.add_argument("--lambda", dest="lam", type=float, required=True,
                   help="packet rate per node incl. retransmissions (pkt/s)")
    p.add_argument("--L", type=float, default=1000.0, help="data packet size (bytes)")
    p.add_argument("--lc", type=float, default=34.0, help="control message size (bytes)")
    p.add_argument("--rate", type=float, default=1e6, help="data channel rate (bit/s)")
    p.add_argument("--ctrl-rate", type=float, default=None,
                   help="control channel rate (bit/s, default --rate)")


def _hop_mode(args) -> str:
    if args.single_hop and args.multi_hop:
        raise DomainError("choose one of --single-hop / --multi-hop")
    return SINGLE_HOP if args.single_hop else MULTI_HOP


def cmd_analyze(args) -> int:
    t_d, b = timings_from_bytes(args.L, args.lc, args.rate, args.ctrl_rate)
    params = ModelParams(n=args.n, lam=args.lam, T_d=t_d, b=b, hop_mode=_hop_mode(args))
    verdict = stability_check(params)
    if not verdict:
        raise UnstableError(f"scenario unstable: {verdict.reason}")
    report = p_co(params)
    st = report.state
    pairs = [
        ("hop_mode", params.hop_mode), ("n", params.n), ("lambda", params.lam),
        ("L_bytes", args.L), ("lc_bytes", args.lc),
        ("T_d_s", t_d), ("b_s", b),
    ]
    values = [
        ("p_ctrl", st.p_ctrl), ("p_oh", st.p_oh), ("p_succ", st.p_succ),
        ("lambda_c", st.lambda_c), ("lambda_rts", st.lambda_rts),
        ("lambda_cts", st.lambda_cts), ("p_ni_oh", st.p_ni_oh),
        ("p_ni_cts", st.p_ni_cts), ("p_ctrl_star", report.p_ctrl_star),
        ("weight", report.weight), ("lambda_w", report.lambda_w),
        ("p_co_xy_star", report.p_co_xy_star), ("p_co", report.p_co),
    ]
    if args.format == "csv":
        lines = _config_comments(pairs)
        lines.append(",".join(k for k, _ in values))
        lines.append(",".join(_fmt(v) for _, v in values))
        _emit(args, "analyze.csv", lines)
    else:
        lines = [f"{k} = {_fmt(v)}" for k, v in pairs + values]
        _emit(args, "analyze.txt", lines)
    return 0


def cmd_geometry(args) -> int:
    if args.what != "constants":
        raise DomainError(f"unknown geometry query {args.what!r}")
    nc = neighbor_constants(args.tol)
    lines = [
        f"excl_given_neighbor = {nc.excl_given_neighbor!r}",
        f"excl_given_common = {nc.excl_given_common!r}",
        f"common = {nc.common!r}",
    ]
    _emit(args, "geometry_constants.txt", lines)
    return 0


def cmd_bandwidth(args) -> int:
    if args.sweep:
        lo, hi, step = (float(x) for x in args.sweep.split(":"))
        sweep = SigmaSweep(lo, hi, step)
    else:
        sweep = SigmaSweep()
    result = optimize_sigma(
        args.W, args.m, args.L, args.lc, args.n, args.lam,
        sweep=sweep, hop_mode=_hop_mode(args),
    )
    pairs = [
        ("W_bits", args.W), ("m", args.m), ("L_bytes", args.L),
        ("lc_bytes", args.lc), ("n", args.n), ("lambda", args.lam),
        ("sweep", f"{sweep.sigma_min}:{sweep.sigma_max}:{sweep.step}"),
        ("hop_mode", _hop_mode(args)),
        ("sigma_star", result.sigma_star), ("p_co_max", result.p_co_max),
        ("flat", result.flat),
    ]
    lines = _config_comments(pairs)
    lines.append("sigma,p_co")
    for s, v in result.curve:
        lines.append(f"{_fmt(s)},{_fmt(v)}")
    path = _emit(args, f"bandwidth_m{args.m}.csv", lines)
    if args.plot and path is not None:
        from .plotting import render_sigma_curve

        png = path.with_suffix(".png")
        render_sigma_curve(result, png)
        print(png)
    return 0


def cmd_simulate(args) -> int:
    if args.config:
        cfg = load_scenario(args.config)
    else:
        mapping = {
            "topology": {"mode": _hop_mode(args), "n": args.n},
            "traffic": {"lambda": args.lam, "packet_bytes": args.L},
            "channels": {
                "data_channels": args.data_channels,
                "data_rate": args.rate,
                "control_rate": args.ctrl_rate,
                "control_bytes": args.lc,
            },
            "mode": args.mode,
            "seed": args.seed,
            "stop": {"packets": args.packets},
        }
        cfg = scenario_from_mapping(mapping)
    if args.seed is not None:
        cfg = type(cfg)(**{**cfg.__dict__, "seed": args.seed})
    if args.trace:
        cfg = type(cfg)(**{**cfg.__dict__, "trace": True})
    sim = build_simulator(cfg)
    metrics = sim.run()
    pairs = sorted(_flatten("cfg", cfg.as_dict()))
    lines = _config_comments(pairs)
    lines.append(",".join(METRICS_CSV_COLUMNS))
    lines.append(",".join(str(x) for x in metrics.to_csv_row()))
    _emit(args, "simulate.csv", lines)
    if args.trace:
        tlines = ["time,node,event,channel,detail"]
        for t, node, kind, ch, detail in sim.trace:
            tlines.append(f"{t!r},{node},{kind},{ch},{detail}")
        _emit(args, "trace.csv", tlines)
        gaps = control_send_gaps(sim.trace)
        try:
            ks = poissonness_check(gaps)
            print(
                f"# control-send gaps: n={ks.n_gaps} mean={ks.mean_gap:.6f}s "
                f"KS={ks.statistic:.4f} p={ks.p_value:.4f}",
                file=sys.stderr,
            )
        except DomainError:
            pass
    return 0


def _flatten(prefix, mapping):
    for k, v in mapping.items():
        key = f"{prefix}.{k}"
        if isinstance(v, dict):
            yield from _flatten(key, v)
        else:
            yield key, v


def cmd_sweep(args) -> int:
    grid = [float(x) for x in args.grid.split(",")]
    if grid != sorted(grid):
        raise DomainError("sweep grid must be sorted ascending")
    hop = _hop_mode(args)
    rows = []
    for x in grid:
        n = x if args.vary == "n" else args.n
        lam = x if args.vary == "lambda" else args.lam
        data_bytes = x if args.vary == "L" else args.L
        ana = experiments.analytic_pco(n, lam, data_bytes, hop)
        row = {"x": x, "p_co_analytic": ana}
        if args.with_sim:
            seeds = [experiments.derive_seed(args.seed, 0, len(rows), r)
                     for r in range(args.replications)]
            runs = experiments.run_replications(
                hop, n, lam, data_bytes, args.mode, args.packets, seeds,
                workers=args.workers,
            )
            row["p_co_sim"] = experiments._pco_hat_stats(runs)[0]
        rows.append(row)
    pairs = [
        ("vary", args.vary), ("grid", args.grid), ("n", args.n),
        ("lambda", args.lam), ("L_bytes", args.L), ("hop_mode", hop),
        ("mode", args.mode), ("seed", args.seed),
        ("with_sim", args.with_sim), ("packets", args.packets),
        ("replications", args.replications),
    ]
    lines = _config_comments(pairs)
    cols = list(rows[0]) if rows else []
    lines.append(",".join(cols))
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in cols))
    _emit(args, f"sweep_{args.vary}.csv", lines)
    return 0


def cmd_reproduce(args) -> int:
    dataset = reproduce(
        args.figure_id,
        scale=args.scale,
        seed=args.seed,
        workers=args.workers,
    )
    out = _out_dir(args)
    csv_path = out / f"{args.figure_id}_{args.scale}.csv"
    write_dataset_csv(dataset, csv_path)
    print(csv_path)
    if args.plot:
        from .plotting import render_dataset

        png_path = csv_path.with_suffix(".png")
        render_dataset(dataset, png_path)
        print(png_path)
    for key, val in sorted(dataset.summary.items()):
        print(f"# summary.{key} = {val}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# parser / dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dishmac",
        description="Cooperation availability analysis and simulation for "
        "multi-channel MAC networks with a shared control channel.",
    )
    parser.add_argument(
        "--out",
        default=None,
        help=f"output directory (default: ${_OUT_ENV} or stdout)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="closed-form / fixed-point cooperation availability")
    _add_model_args(p)
    p.add_argument("--format", choices=("report", "csv"), default="report")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("geometry", help="geometry diagnostics")
    p.add_argument("what", choices=("constants",))
    p.add_argument("--tol", type=float, default=1e-8, help="quadrature tolerance")
    p.set_defaults(func=cmd_geometry)

    p = sub.add_parser("bandwidth", help="optimal control/data bandwidth ratio")
    p.add_argument("--W", type=float, required=True, help="total bandwidth (bit/s)")
    p.add_argument("--m", type=int, required=True, help="number of data channels")
    p.add_argument("--L", type=float, required=True, help="data packet size (bytes)")
    p.add_argument("--lc", type=float, required=True, help="control message size (bytes)")
    p.add_argument("--n", type=float, required=True, help="node density per R^2")
    p.add_argument("--lambda", dest="lam", type=float, required=True,
                   help="packet rate per node (pkt/s)")
    p.add_argument("--sweep", default=None, metavar="LO:HI:STEP",
                   help="sigma grid (default 0.2:3.0:0.05)")
    p.add_argument("--single-hop", action="store_true")
    p.add_argument("--multi-hop", action="store_true")
    p.add_argument("--plot", action="store_true", help="render the curve as PNG")
    p.set_defaults(func=cmd_bandwidth)

    p = sub.add_parser("simulate", help="run one protocol simulation")
    p.add_argument("--config", default=None, help="YAML scenario file")
    p.add_argument("--single-hop", action="store_true")
    p.add_argument("--multi-hop", action="store_true")
    p.add_argument("--n", type=float, default=10.0)
    p.add_argument("--lambda", dest="lam", type=float, default=10.0)
    p.add_argument("--L", type=float, default=1000.0)
    p.add_argument("--lc", type=float, default=34.0)
    p.add_argument("--rate", type=float, default=1e6)
    p.add_argument("--ctrl-rate", type=float, default=None)
    p.add_argument("--data-channels", type=int, default=5)
    p.add_argument("--mode", choices=("noncoop", "ideal", "real"), default="noncoop")
    p.add_argument("--packets", type=int, default=20_000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trace", action="store_true", help="dump the event log")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="sweep one parameter (analytic, optional sim)")
    p.add_argument("--vary", choices=("lambda", "n", "L"), required=True)
    p.add_argument("--grid", required=True, help="comma-separated values")
    _add_model_args(p)
    p.add_argument("--with-sim", action="store_true")
    p.add_argument("--mode", choices=("noncoop", "ideal", "real"), default="noncoop")
    p.add_argument("--packets", type=int, default=20_000)
    p.add_argument("--replications", type=int, default=5)
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reproduce", help="regenerate a standard figure dataset")
    p.add_argument("figure_id", choices=FIGURE_IDS)
    p.add_argument("--scale", choices=("desk", "paper"), default="desk")
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--plot", dest="plot", action="store_true", default=True)
    p.add_argument("--no-plot", dest="plot", action="store_false")
    p.set_defaults(func=cmd_reproduce)

    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UnstableError, NoConvergenceError) as exc:
        code = "unstable" if isinstance(exc, UnstableError) else "no_convergence"
        print(json.dumps({"error": code, "detail": str(exc)}), file=sys.stderr)
        return 1
    except DishmacError as exc:
        print(json.dumps({"error": "model", "detail": str(exc)}), file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
