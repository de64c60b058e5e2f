"""Command-line entry point.

Exit codes: 0 success, 1 usage or input error, 2 solver failure (a
``diagnostics.json`` is written to the output directory), 3 when ``verify``
finds a deviation gap above ``--threshold``.

Every run writes ``manifest.json`` next to its outputs; ``robustmg
--from-manifest DIR/manifest.json --output-dir NEW`` repeats the run and
reproduces the outputs byte for byte.
"""

import argparse
import hashlib
import json
import os
import platform
import sys

import numpy as np

from . import __version__
from .errors import GameSpecError, PolicyError, RobustMGError
from .experiments import (
    DEFAULT_GAMMAS,
    StructuredEnvSpec,
    SweepResult,
    generate_structured_env,
    plot_sweep,
    run_figure1,
    run_figure2,
)
from .game import JointPolicy, is_irreducible, load_game, save_game
from .nash import (
    DEFAULT_NASH_TOL,
    DEFAULT_MAX_ROUNDS,
    discount_for_epsilon,
    robust_diameter_upper,
    robust_nash_iteration_avg,
    robust_nash_iteration_discounted,
    verify_ne,
    verify_ne_discounted,
)

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_NOT_NE = 0, 1, 2, 3
SUBCOMMANDS = ("solve-avg", "solve-discounted", "verify", "diameter", "figure1", "figure2",
               "gen-env")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text):
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list of numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list of integers, got {text!r}") from None


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def build_parser():
    p = _Parser(prog="robustmg", description="Robust average-reward Markov game solvers.")
    p.add_argument("--version", action="version", version=f"robustmg {__version__}")
    p.add_argument("--from-manifest", metavar="PATH",
                   help="repeat the run recorded in a manifest.json (no subcommand)")
    p.add_argument("--output-dir", default=None, help="where results are written (default: .)")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, game_input=True):
        if game_input:
            sp.add_argument("--input", required=True, help="game description (JSON)")
        sp.add_argument("--output-dir", default=argparse.SUPPRESS)
        sp.add_argument("--tol", type=_positive, default=DEFAULT_NASH_TOL)
        sp.add_argument("--max-rounds", type=int, default=DEFAULT_MAX_ROUNDS)
        sp.add_argument("--full-irreducibility-check", action="store_true",
                        help="enumerate every deterministic joint policy")

    sp = sub.add_parser("solve-avg", help="average-reward Robust Nash-Iteration")
    common(sp)
    sp.add_argument("--mode", default="auto", choices=("auto", "common", "zero_sum", "bimatrix"))

    sp = sub.add_parser("solve-discounted", help="discounted Robust Nash-Iteration")
    common(sp)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--gamma", type=float)
    g.add_argument("--epsilon", type=_positive, help="pick gamma from the robust diameter")
    sp.add_argument("--mode", default="auto", choices=("auto", "common", "zero_sum", "bimatrix"))

    sp = sub.add_parser("verify", help="deviation gaps of a joint policy")
    common(sp)
    sp.add_argument("--policy", required=True, help="policy JSON: agent -> state -> probabilities")
    sp.add_argument("--threshold", type=float, default=1e-4,
                    help="exit 0 iff the largest gap (normalized units) is at most this")
    sp.add_argument("--gamma", type=float, help="check a discounted equilibrium instead")

    sp = sub.add_parser("diameter", help="upper bound on the robust diameter")
    common(sp)
    sp.add_argument("--epsilon", type=_positive, help="also report gamma = 1 - epsilon / D")

    for name, hlp in (("figure1", "average vs discounted equilibria"),
                      ("figure2", "robust vs non-robust learner"),
                      ("gen-env", "write a structured random game")):
        sp = sub.add_parser(name, help=hlp)
        common(sp, game_input=False)
        sp.add_argument("--seed", type=int, default=7)
        sp.add_argument("--states", type=int, default=20)
        sp.add_argument("--actions", type=int, default=5, help="actions per agent")
        sp.add_argument("--theta", type=float, default=0.01)
        if name != "gen-env":
            sp.add_argument("--seeds", type=_ints, help="several seeds; tables are concatenated")
            sp.add_argument("--agent", type=int, default=0)
            sp.add_argument("--no-plot", action="store_true")
        if name == "figure1":
            sp.add_argument("--grid", type=_floats, default=list(DEFAULT_GAMMAS),
                            help="discount factors, e.g. '0.5,0.9,0.99'")
        if name == "figure2":
            sp.add_argument("--rounds", type=int, default=256)
    return p


# --------------------------------------------------------------------------- helpers


def _versions():
    import matplotlib
    import scipy
    return {"robustmg": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "matplotlib": matplotlib.__version__, "python": platform.python_version()}


def _sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _config(args):
    cfg = {k: v for k, v in vars(args).items() if k not in ("output_dir", "from_manifest")}
    if cfg.get("input"):
        cfg["input"] = os.path.abspath(cfg["input"])
    if cfg.get("policy"):
        cfg["policy"] = os.path.abspath(cfg["policy"])
    return cfg


def _manifest(args, outputs):
    cfg = _config(args)
    m = {"command": args.command, "config": cfg, "versions": _versions(),
         "seed": cfg.get("seed"), "outputs": sorted(outputs)}
    if cfg.get("input"):
        m["input_sha256"] = _sha256(cfg["input"])
    return m


def _load(args):
    game = load_game(args.input)
    ok = is_irreducible(game, full=True if args.full_irreducibility_check else None)
    if not ok:
        print("warning: nominal chain is reducible under some joint policy; "
              "average-reward results may be state dependent", file=sys.stderr)
    return game, ok


def _hist(counts):
    return ", ".join(f"{k}={v}" for k, v in sorted(counts.items())) or "-"


# --------------------------------------------------------------------------- commands


def _solve_avg(args, out):
    game, irreducible = _load(args)
    res = robust_nash_iteration_avg(game, args.tol, args.max_rounds, args.mode)
    ver = verify_ne(game, res.policy)
    sc = game.reward_scale
    _write_json(os.path.join(out, "policy.json"), res.policy.to_list())
    _write_json(os.path.join(out, "result.json"), {
        "gains": sc.gain_to_raw(res.gains).tolist(),
        "gains_normalized": res.gains.tolist(),
        "biases": sc.bias_to_raw(res.biases).tolist(),
        "rounds": res.rounds,
        "span": res.span,
        "oracle_counts": res.oracle_counts,
        "heuristic_oracle": res.heuristic,
        "epsilon": ver.epsilon,
        "epsilon_raw": ver.epsilon * sc.scale,
        "irreducible": irreducible,
    })
    print("solve-avg")
    print(f"  gains      {np.array2string(sc.gain_to_raw(res.gains), precision=6)}")
    print(f"  epsilon    {ver.epsilon:.3e} (normalized), {ver.epsilon * sc.scale:.3e} (raw)")
    print(f"  rounds     {res.rounds} (span {res.span:.2e})")
    print(f"  oracles    {_hist(res.oracle_counts)}" + ("  [heuristic]" if res.heuristic else ""))
    return EXIT_OK, ["policy.json", "result.json"]


def _solve_discounted(args, out):
    game, irreducible = _load(args)
    diameter = None
    if args.gamma is None:
        diameter = robust_diameter_upper(game)
        gamma = discount_for_epsilon(diameter, args.epsilon)
    else:
        gamma = args.gamma
        if not 0.0 <= gamma < 1.0:
            raise UsageError(f"--gamma must lie in [0, 1), got {gamma}")
    res = robust_nash_iteration_discounted(game, gamma, args.tol, args.max_rounds, args.mode)
    ver = verify_ne_discounted(game, res.policy, gamma)
    sc = game.reward_scale
    _write_json(os.path.join(out, "policy.json"), res.policy.to_list())
    _write_json(os.path.join(out, "result.json"), {
        "gamma": gamma,
        "diameter_upper": diameter,
        "values": sc.discounted_to_raw(res.values, gamma).tolist(),
        "rounds": res.rounds,
        "residual": res.residual,
        "oracle_counts": res.oracle_counts,
        "heuristic_oracle": res.heuristic,
        "epsilon": ver.epsilon,
        "irreducible": irreducible,
    })
    print("solve-discounted")
    if diameter is not None:
        print(f"  diameter   <= {diameter:.6g}")
    print(f"  gamma      {gamma:.6g}")
    print(f"  epsilon    {ver.epsilon:.3e} (normalized, discounted values)")
    print(f"  rounds     {res.rounds}")
    print(f"  oracles    {_hist(res.oracle_counts)}" + ("  [heuristic]" if res.heuristic else ""))
    return EXIT_OK, ["policy.json", "result.json"]


def _verify(args, out):
    game, _ = _load(args)
    with open(args.policy) as fh:
        policy = JointPolicy.from_list(json.load(fh)).check(game)
    if args.gamma is None:
        ver = verify_ne(game, policy)
    else:
        ver = verify_ne_discounted(game, policy, args.gamma)
    passed = ver.epsilon <= args.threshold
    _write_json(os.path.join(out, "verify.json"), {
        "gains": np.asarray(ver.gains).tolist(),
        "best_response_gains": np.asarray(ver.best_gains).tolist(),
        "gaps": ver.gaps.tolist(),
        "epsilon": ver.epsilon,
        "threshold": args.threshold,
        "passed": bool(passed),
    })
    print("verify")
    print(f"  gaps       {np.array2string(ver.gaps, precision=3)}")
    print(f"  epsilon    {ver.epsilon:.3e} ({'<=' if passed else '>'} threshold {args.threshold:g})")
    return (EXIT_OK if passed else EXIT_NOT_NE), ["verify.json"]


def _diameter(args, out):
    game, _ = _load(args)
    d = robust_diameter_upper(game)
    res = {"diameter_upper": d}
    print("diameter")
    print(f"  D          <= {d:.6g}")
    if args.epsilon is not None:
        res["epsilon"] = args.epsilon
        res["gamma"] = discount_for_epsilon(d, args.epsilon)
        print(f"  gamma      {res['gamma']:.6g} (epsilon {args.epsilon:g})")
    _write_json(os.path.join(out, "diameter.json"), res)
    return EXIT_OK, ["diameter.json"]


def _env_spec(args, seed):
    return StructuredEnvSpec.sized(args.states, seed=seed, actions_per_agent=args.actions,
                                   theta=args.theta)


def _figure(args, out):
    seeds = args.seeds or [args.seed]
    results = []
    for seed in seeds:
        spec = _env_spec(args, seed)
        if args.command == "figure1":
            results.append(run_figure1(spec, args.grid, args.tol, args.agent, args.max_rounds))
        else:
            results.append(run_figure2(spec, args.rounds, args.tol, args.agent))
    res = results[0] if len(results) == 1 else SweepResult.concat(results)
    name = args.command
    res.to_csv(os.path.join(out, f"{name}.csv"))
    files = [f"{name}.csv"]
    if not args.no_plot:
        plot_sweep(res, os.path.join(out, f"{name}.svg"))
        files.append(f"{name}.svg")
    failed = [r for r in res.rows if r.get("error")]
    print(name)
    print(f"  seeds      {seeds}")
    print(f"  baseline   {res.baseline:.6g} (worst-case average reward, agent {args.agent})")
    print(f"  rows       {len(res.rows)} ({len(failed)} failed)")
    print(f"  oracles    {_hist({r['oracle_class']: 1 for r in res.rows if r['oracle_class']})}")
    print(f"  wrote      {', '.join(files)}")
    return EXIT_OK, files


def _gen_env(args, out):
    game = generate_structured_env(_env_spec(args, args.seed))
    save_game(game, os.path.join(out, "game.json"))
    print("gen-env")
    print(f"  states {game.num_states}, actions {list(game.actions)}, theta {game.theta:g}")
    return EXIT_OK, ["game.json"]


HANDLERS = {
    "solve-avg": _solve_avg,
    "solve-discounted": _solve_discounted,
    "verify": _verify,
    "diameter": _diameter,
    "figure1": _figure,
    "figure2": _figure,
    "gen-env": _gen_env,
}


def _from_manifest(path, output_dir):
    with open(path) as fh:
        m = json.load(fh)
    ns = argparse.Namespace(**m["config"])
    ns.command = m["command"]
    ns.output_dir = output_dir if output_dir is not None else os.path.dirname(os.path.abspath(path))
    ns.from_manifest = None
    return ns


def _diagnostics(out, err):
    diag = {"error": type(err).__name__, "message": str(err)}
    trace = getattr(err, "span_trace", None)
    if trace:
        diag["rounds"] = len(trace)
        diag["span_trace_tail"] = [float(x) for x in trace[-50:]]
    for attr in ("residual", "iterations"):
        if getattr(err, attr, None) is not None:
            diag[attr] = getattr(err, attr)
    _write_json(os.path.join(out, "diagnostics.json"), diag)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.from_manifest:
            if args.command:
                raise UsageError("--from-manifest replaces the subcommand; give only one")
            args = _from_manifest(args.from_manifest, args.output_dir)
        elif not args.command:
            raise UsageError("a subcommand is required: " + ", ".join(SUBCOMMANDS))
        if getattr(args, "tol", 1.0) <= 0:
            raise UsageError("--tol must be positive")
    except UsageError as err:
        parser.print_usage(sys.stderr)
        print(err, file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError, KeyError) as err:
        print(f"robustmg: cannot read manifest: {err}", file=sys.stderr)
        return EXIT_USAGE

    out = args.output_dir or "."
    os.makedirs(out, exist_ok=True)
    try:
        code, files = HANDLERS[args.command](args, out)
    except UsageError as err:
        print(err, file=sys.stderr)
        return EXIT_USAGE
    except (GameSpecError, PolicyError, OSError, json.JSONDecodeError) as err:
        print(f"robustmg: input error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (RobustMGError, ValueError) as err:
        _diagnostics(out, err)
        print(f"robustmg: solver failure ({type(err).__name__}): {err}", file=sys.stderr)
        print(f"  diagnostics written to {os.path.join(out, 'diagnostics.json')}", file=sys.stderr)
        return EXIT_SOLVER
    _write_json(os.path.join(out, "manifest.json"), _manifest(args, files))
    return code


if __name__ == "__main__":
    sys.exit(main())
