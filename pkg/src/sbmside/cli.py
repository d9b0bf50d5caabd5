"""Command-line front end.

Subcommands: ``gen``, ``detect``, ``experiment``, ``thresholds``, ``phase``,
``de``.  Every command is deterministic given its full flag set (including
--seed); --threads only parallelizes independent trials, whose per-trial
seeds are seed+i, so the output bytes do not depend on the thread count.
CSV output is UTF-8, comma-separated, '.' decimal, header row always present.
"""

import argparse
import concurrent.futures
import json
import math
import statistics
import sys

import numpy as np

from . import kernels
from .core import (
    divergences,
    generate_graph,
    lambda_side,
    lambda_snr,
    load_graph,
    load_side,
    mismatch,
    node_llrs,
    noisy_label_channel,
    partial_reveal_channel,
    replicated_channel,
    sample_side_info,
    save_graph,
    save_side,
)
from .detectors import BPConfig, VotingConfig, bp_run, ml_bruteforce, voting_cleanup
from .errors import GuardError, ParameterError
from .exponents import exact_recovery_check, phase_region, weak_recovery_check
from .tree_de import de_predict_error, de_run


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _emit_csv(out, header, rows):
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def parse_channel(spec, m=1):
    """Channel flag syntax: 'none', 'noisy:<alpha>' or 'reveal:<eps>';
    --m replicates the base feature."""
    if spec in (None, "", "none"):
        return None
    kind, _, arg = spec.partition(":")
    if not arg:
        raise ParameterError(f"channel spec {spec!r} needs a parameter")
    if kind in ("noisy", "noisy_label"):
        base = noisy_label_channel(float(arg))
    elif kind in ("reveal", "partial_reveal"):
        base = partial_reveal_channel(float(arg))
    else:
        raise ParameterError(f"unknown channel kind {kind!r}")
    return replicated_channel(base, m) if m > 1 else base


def _parse_range(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise ParameterError("range must be lo:hi:steps")
    lo, hi, steps = float(parts[0]), float(parts[1]), int(parts[2])
    if steps < 1:
        raise ParameterError("steps must be >= 1")
    return np.linspace(lo, hi, steps)


# ---------------------------------------------------------------------------
# experiment


def _run_detector(graph, side_obs, channel, args):
    if args.detector == "bp":
        config = BPConfig(iterations=args.iters, k=graph.k,
                          use_side=channel is not None)
        result, _ = bp_run(graph, side_obs, channel, config)
    elif args.detector == "ml":
        result = ml_bruteforce(graph, side_obs, channel, graph.k)
    elif args.detector == "bp+vote":
        config = VotingConfig(delta=args.delta, weak_estimator="bp",
                              iterations=args.iters,
                              use_side=channel is not None)
        result = voting_cleanup(graph, side_obs, channel, graph.k, config)
    else:
        raise ParameterError(f"unknown detector {args.detector!r}")
    return result


def _one_trial(args, channel, trial):
    seed_i = args.seed + trial
    graph = generate_graph(args.n, args.k, args.p, args.q, args.size_mode, seed_i)
    side_obs = sample_side_info(channel, graph, seed_i) if channel else None
    res_plain = _run_detector(graph, None, None, args)
    row = [trial, seed_i, res_plain.zeta, res_plain.sym_diff]
    if channel is not None:
        res_side = _run_detector(graph, side_obs, channel, args)
        row += [res_side.zeta, res_side.sym_diff]
    return row


def cmd_experiment(args):
    channel = parse_channel(args.channel, args.m)
    trials = range(args.trials)
    if args.threads > 1:
        with concurrent.futures.ThreadPoolExecutor(args.threads) as pool:
            rows = list(pool.map(lambda t: _one_trial(args, channel, t), trials))
    else:
        rows = [_one_trial(args, channel, t) for t in trials]
    header = ["trial", "seed", "zeta_no_side", "sym_diff_no_side"]
    if channel is not None:
        header += ["zeta_side", "sym_diff_side"]
    _emit_csv(args.out, header, rows)
    lam = lambda_snr(args.n, args.k, args.p, args.q) if args.q > 0 else 0.0
    summary = {"lambda": lam, "backend": kernels.BACKEND}
    if channel is not None:
        big = lambda_side(channel)
        summary["Lambda"] = big
        summary["lambda_Lambda_e"] = lam * big * math.e
    for col, name in ((2, "zeta_no_side"), (4, "zeta_side")):
        if col >= len(rows[0]):
            continue
        vals = [row[col] for row in rows]
        summary[name + "_mean"] = statistics.fmean(vals)
        summary[name + "_std"] = statistics.pstdev(vals)
    if args.json:
        print(json.dumps(summary, sort_keys=True))
    else:
        for key in sorted(summary):
            print(f"{key}={_fmt(summary[key])}")
    return 0


# ---------------------------------------------------------------------------
# thresholds


def cmd_thresholds(args):
    channel = parse_channel(args.channel, args.m)
    rows = []
    if args.sweep_m:
        lo, hi = (int(x) for x in args.sweep_m.split(":"))
        base = parse_channel(args.channel, 1)
        if base is None:
            raise ParameterError("--sweep-m needs a channel")
        header = ["m", "lhs1", "lhs2", "threshold2", "feasible"]
        for m in range(lo, hi + 1):
            rep = replicated_channel(base, m) if m else None
            wr = weak_recovery_check(args.n, args.k, args.p, args.q, rep,
                                     args.margin)
            rows.append([m, wr.lhs1, wr.lhs2, wr.threshold2, int(wr.feasible)])
        _emit_csv(args.out, header, rows)
        return 0
    wr = weak_recovery_check(args.n, args.k, args.p, args.q, channel, args.margin)
    er = exact_recovery_check(args.n, args.k, args.p, args.q, channel)
    lam = lambda_snr(args.n, args.k, args.p, args.q) if args.q > 0 else 0.0
    big = lambda_side(channel) if channel is not None else 1.0
    lle = lam * big * math.e
    nu = math.log((args.n - args.k) / args.k)
    rows = [
        ["weak_lhs1", wr.lhs1, wr.margin, "pass" if wr.lhs1 > wr.margin else "fail"],
        ["weak_lhs2", wr.lhs2, wr.threshold2,
         "pass" if wr.lhs2 > wr.threshold2 else "fail"],
        ["weak_recovery", float(wr.feasible), "",
         "feasible" if wr.feasible else "infeasible"],
        ["exact_exponent", er.exponent, er.threshold,
         "feasible" if er.feasible else "infeasible"],
        ["lambda", lam, "", ""],
        ["Lambda", big, "", ""],
        ["lambda_Lambda_e", lle, 1.0,
         "supercritical" if lle > 1 else "subcritical"],
        ["nu", nu, "", ""],
    ]
    _emit_csv(args.out, ["quantity", "value", "threshold", "verdict"], rows)
    if args.json:
        print(json.dumps({row[0]: row[1] for row in rows}, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# phase diagram


def cmd_phase(args):
    b_grid = _parse_range(args.b_range)
    c_grid = _parse_range(args.c_range)
    alphas = [args.alpha] + ([args.alpha2] if args.alpha2 is not None else [])
    rows = []
    if len(alphas) == 1:
        header = ["b", "c", "region"]
        for b in b_grid:
            for c in c_grid:
                rows.append([float(b), float(c), phase_region(b, c, alphas[0])])
    else:
        header = ["alpha", "b", "c", "region"]
        for alpha in alphas:
            for b in b_grid:
                for c in c_grid:
                    rows.append([alpha, float(b), float(c),
                                 phase_region(b, c, alpha)])
    _emit_csv(args.out, header, rows)
    return 0


# ---------------------------------------------------------------------------
# density evolution


def cmd_de(args):
    channel = parse_channel(args.channel, args.m)
    if channel is None:
        raise ParameterError("de needs a channel")
    nu = math.log((args.n - args.k) / args.k)
    trace = de_run(args.lam, nu, channel, args.t_max, args.quad_nodes)
    rows = [
        [t, float(trace.v[t]), de_predict_error(trace, args.n / args.k, t)]
        for t in range(args.t_max + 1)
    ]
    _emit_csv(args.out, ["t", "v_t", "pred_err"], rows)
    return 0


# ---------------------------------------------------------------------------
# gen / detect


def cmd_gen(args):
    graph = generate_graph(args.n, args.k, args.p, args.q, args.size_mode,
                           args.seed)
    save_graph(graph, args.out)
    channel = parse_channel(args.channel, args.m)
    if channel is not None and args.side_out:
        save_side(sample_side_info(channel, graph, args.seed), args.side_out)
    print(f"n={graph.n} k={graph.k} edges={graph.num_edges} "
          f"realized={graph.realized_size} seed={graph.seed}")
    return 0


def cmd_detect(args):
    if args.graph:
        graph = load_graph(args.graph)
    else:
        graph = generate_graph(args.n, args.k, args.p, args.q, args.size_mode,
                               args.seed)
    channel = parse_channel(args.channel, args.m)
    if channel is not None:
        if args.side:
            side_obs = load_side(args.side)
        else:
            side_obs = sample_side_info(channel, graph, args.seed)
    else:
        side_obs = None
    if args.detector == "bp":
        config = BPConfig(iterations=args.iters, k=graph.k,
                          use_side=channel is not None)
        result, state = bp_run(graph, side_obs, channel, config)
        beliefs = state.beliefs
    elif args.detector == "bp+vote":
        config = VotingConfig(delta=args.delta, weak_estimator="bp",
                              iterations=args.iters,
                              use_side=channel is not None)
        result, beliefs = voting_cleanup(graph, side_obs, channel, graph.k,
                                         config, return_scores=True)
    else:
        result = ml_bruteforce(graph, side_obs, channel, graph.k)
        beliefs = (node_llrs(channel, side_obs) if channel is not None
                   else np.zeros(graph.n))
    member = graph.member_mask
    rows = [
        [i, float(beliefs[i]), int(i in result.estimate), int(member[i])]
        for i in range(graph.n)
    ]
    _emit_csv(args.out, ["node_id", "belief", "in_estimate", "in_truth"], rows)
    print(f"zeta={_fmt(result.zeta)} sym_diff={result.sym_diff} seed={args.seed}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_model_flags(sub, need_pq=True):
    sub.add_argument("--n", type=int, required=True)
    sub.add_argument("--k", type=int, required=True)
    if need_pq:
        sub.add_argument("--p", type=float, required=True)
        sub.add_argument("--q", type=float, required=True)
    sub.add_argument("--channel", default="none",
                     help="none | noisy:<alpha> | reveal:<eps>")
    sub.add_argument("--m", type=int, default=1, help="feature replication")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--size-mode", default="deterministic",
                     choices=("deterministic", "binomial"), dest="size_mode")
    sub.add_argument("--out", default=None, help="CSV output path (default stdout)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sbmside",
        description="Hidden-community recovery with side information",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    sub = subparsers.add_parser("experiment", help="Monte Carlo detector runs")
    _add_model_flags(sub)
    sub.add_argument("--detector", default="bp", choices=("bp", "ml", "bp+vote"))
    sub.add_argument("--iters", type=int, default=10)
    sub.add_argument("--trials", type=int, default=20)
    sub.add_argument("--delta", type=float, default=0.1)
    sub.add_argument("--threads", type=int, default=1)
    sub.add_argument("--json", action="store_true")
    sub.add_argument("--config", default=None,
                     help="flat JSON file with flag defaults")
    sub.set_defaults(func=cmd_experiment)

    sub = subparsers.add_parser("thresholds", help="recovery threshold report")
    _add_model_flags(sub)
    sub.add_argument("--margin", type=float, default=10.0)
    sub.add_argument("--sweep-m", default=None, dest="sweep_m",
                     help="LO:HI replication sweep")
    sub.add_argument("--json", action="store_true")
    sub.set_defaults(func=cmd_thresholds)

    sub = subparsers.add_parser("phase", help="phase-diagram grid")
    sub.add_argument("--b-range", required=True, dest="b_range")
    sub.add_argument("--c-range", required=True, dest="c_range")
    sub.add_argument("--alpha", type=float, required=True)
    sub.add_argument("--alpha2", type=float, default=None)
    sub.add_argument("--out", default=None)
    sub.set_defaults(func=cmd_phase)

    sub = subparsers.add_parser("de", help="density-evolution trace")
    sub.add_argument("--lam", type=float, required=True)
    sub.add_argument("--n", type=int, required=True)
    sub.add_argument("--k", type=int, required=True)
    sub.add_argument("--channel", required=True)
    sub.add_argument("--m", type=int, default=1)
    sub.add_argument("--t-max", type=int, default=10, dest="t_max")
    sub.add_argument("--quad-nodes", type=int, default=61, dest="quad_nodes")
    sub.add_argument("--out", default=None)
    sub.set_defaults(func=cmd_de)

    sub = subparsers.add_parser("gen", help="generate and save an instance")
    _add_model_flags(sub)
    sub.add_argument("--side-out", default=None, dest="side_out")
    sub.set_defaults(func=cmd_gen)

    sub = subparsers.add_parser("detect", help="run one detector on one instance")
    _add_model_flags(sub)
    sub.add_argument("--graph", default=None, help="load instance from file")
    sub.add_argument("--side", default=None, help="load side CSV from file")
    sub.add_argument("--detector", default="bp", choices=("bp", "ml", "bp+vote"))
    sub.add_argument("--iters", type=int, default=10)
    sub.add_argument("--delta", type=float, default=0.1)
    sub.set_defaults(func=cmd_detect)
    return parser


def _apply_config(args, argv):
    """Config-file values fill in flags the user did not pass explicitly."""
    if not getattr(args, "config", None):
        return args
    with open(args.config) as fh:
        overrides = json.load(fh)
    passed = {a.split("=")[0].lstrip("-").replace("-", "_")
              for a in argv if a.startswith("--")}
    for key, value in overrides.items():
        attr = key.replace("-", "_")
        if attr not in passed and hasattr(args, attr):
            setattr(args, attr, value)
    return args


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args = _apply_config(args, argv)
    try:
        return args.func(args)
    except (ParameterError, GuardError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
