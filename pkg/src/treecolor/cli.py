"""Command-line front end.

Five subcommands cover the package's workflows:

  certify    integrate the drift ODE and emit a subcriticality certificate
  integrate  integrate the drift ODE and emit the raw trajectory as CSV
  simulate   run the coloring process on a random graph end to end
  sweep      run an (epsilon x seed) grid in parallel and fit red scaling
  verify     re-validate a certificate file or a coloring dump

Exit codes: 0 success/certified, 1 certification or verification failure,
2 invalid configuration or malformed input, 3 internal error.

Flags may also be supplied via `--config FILE` holding `key=value` lines
(hyphens and underscores are interchangeable in keys); explicit flags win.
Every artifact embeds the resolved configuration and seeds, either as JSON
fields or as leading `#` comment lines.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .certify import (
    IntegrationControl,
    certify,
    integrate,
    find_stop_time,
    load_certificate,
    save_certificate,
    verify_certificate,
)
from .dynamics import (
    PaletteConfig,
    TuningParams,
    VertexType,
    default_tuning,
    type_space,
)
from .errors import (
    CertificateParseError,
    CertificateVerificationError,
    ConfigurationError,
    TreecolorError,
)
from .graphs import gen_regular_graph, gen_tree_ball, parse_fixture, write_fixture
from .process import (
    ColoringState,
    complete_remainder,
    read_coloring,
    run_phase1,
    tidy_to_proper,
    verify_proper,
    write_coloring,
)
from .stats import (
    collect_run_stats,
    component_stats,
    red_scaling,
    stats_csv,
    summary_json,
    trajectory_distance,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_INTERNAL = 3


# ---------------------------------------------------------------------------
# Argument plumbing
# ---------------------------------------------------------------------------

def _parse_weight(text: str) -> tuple[VertexType, float]:
    """Parse one `d,c=value` tuning override."""
    lhs, sep, rhs = text.partition("=")
    parts = lhs.split(",")
    if not sep or len(parts) != 2:
        raise ConfigurationError(f"weight override must look like d,c=value: {text!r}")
    try:
        return VertexType(int(parts[0]), int(parts[1])), float(rhs)
    except ValueError:
        raise ConfigurationError(f"weight override has bad numbers: {text!r}") from None


def _read_config_file(path: str) -> list[tuple[str, str]]:
    """Ordered key=value pairs; blank lines and #-comments skipped."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file: {exc}") from None
    pairs = []
    for lineno, line in enumerate(raw.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigurationError(
                f"{path}:{lineno}: expected key=value, got {line!r}"
            )
        pairs.append((key.strip().replace("_", "-"), value.strip()))
    return pairs


_BOOL_KEYS = {"modified"}


def _config_tokens(pairs: list[tuple[str, str]]) -> list[str]:
    tokens = []
    for key, value in pairs:
        if key in _BOOL_KEYS:
            if value.lower() in ("1", "true", "yes", "on"):
                tokens.append(f"--{key}")
            elif value.lower() in ("0", "false", "no", "off"):
                pass
            else:
                raise ConfigurationError(f"boolean key {key!r} has value {value!r}")
        else:
            tokens += [f"--{key}", value]
    return tokens


def _expand_config(argv: list[str]) -> list[str]:
    """If --config FILE appears, splice its tokens in right after the
    subcommand so explicit flags (parsed later) win."""
    if not argv or argv[0].startswith("-"):
        return argv
    path = None
    for i, tok in enumerate(argv):
        if tok == "--config":
            if i + 1 >= len(argv):
                raise ConfigurationError("--config needs a file path")
            path = argv[i + 1]
            break
        if tok.startswith("--config="):
            path = tok.split("=", 1)[1]
            break
    if path is None:
        return argv
    tokens = _config_tokens(_read_config_file(path))
    return [argv[0]] + tokens + argv[1:]


def _add_palette_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--r", type=int, required=True, help="graph degree")
    sub.add_argument("--p", type=int, required=True, help="palette size")
    sub.add_argument(
        "--weight", action="append", default=[], metavar="d,c=VALUE",
        help="override one activation weight (repeatable)",
    )


def _add_control_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--step", type=float, default=None, help="integration step")
    sub.add_argument("--max-time", type=float, default=None,
                     help="integration horizon")
    sub.add_argument("--halvings", type=int, default=None,
                     help="step-halving refinements for certification")
    sub.add_argument("--method", choices=("rk4", "euler"), default=None,
                     help="integration method")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treecolor",
        description="Greedy coloring process on random regular graphs: "
                    "ODE certification, simulation, and verification.",
    )
    parser.add_argument("--version", action="version", version=f"treecolor {__version__}")
    subs = parser.add_subparsers(dest="mode", required=True)

    cert = subs.add_parser("certify", help="emit a subcriticality certificate")
    _add_palette_flags(cert)
    _add_control_flags(cert)
    cert.add_argument("--threshold", type=float, default=0.99999)
    cert.add_argument("--out", default=None, help="certificate JSON path")
    cert.add_argument("--config", default=None, help="key=value config file")

    integ = subs.add_parser("integrate", help="emit the ODE trajectory as CSV")
    _add_palette_flags(integ)
    _add_control_flags(integ)
    integ.add_argument("--threshold", type=float, default=None,
                       help="stop when remainder growth falls below this")
    integ.add_argument("--out", default=None, help="trajectory CSV path")
    integ.add_argument("--config", default=None, help="key=value config file")

    sim = subs.add_parser("simulate", help="run the process end to end")
    _add_palette_flags(sim)
    sim.add_argument("--epsilon", type=float, required=True)
    sim.add_argument("--n", type=int, default=None, help="number of vertices")
    sim.add_argument("--steps", type=int, default=None,
                     help="number of greedy steps (overrides --cert)")
    sim.add_argument("--cert", default=None,
                     help="certificate; run ceil(R/epsilon) steps and report "
                          "the trajectory distance")
    sim.add_argument("--seed", type=int, default=0, help="process seed")
    sim.add_argument("--graph-seed", type=int, default=None,
                     help="graph seed (default: same as --seed)")
    sim.add_argument("--graph-kind", choices=("random-regular", "tree-ball"),
                     default="random-regular")
    sim.add_argument("--radius", type=int, default=None,
                     help="tree-ball radius (tree-ball graphs only)")
    sim.add_argument("--modified", action="store_true",
                     help="buffer rounds after every step")
    sim.add_argument("--out", default=None, help="per-step stats CSV path")
    sim.add_argument("--summary", default=None, help="summary JSON path")
    sim.add_argument("--dump", default=None,
                     help="final coloring dump path (writes PATH and PATH.graph)")
    sim.add_argument("--config", default=None, help="key=value config file")

    sweep = subs.add_parser("sweep", help="epsilon x seed grid, red scaling fit")
    _add_palette_flags(sweep)
    sweep.add_argument("--epsilons", required=True,
                       help="comma-separated epsilon grid")
    sweep.add_argument("--seeds", required=True, help="comma-separated seeds")
    sweep.add_argument("--n", type=int, required=True)
    sweep.add_argument("--steps", type=int, default=None,
                       help="fixed step count per cell (overrides --cert)")
    sweep.add_argument("--cert", default=None,
                       help="certificate; each cell runs ceil(R/epsilon) steps")
    sweep.add_argument("--graph-seed", type=int, default=None,
                       help="shared graph seed (default: per-cell seed)")
    sweep.add_argument("--modified", action="store_true")
    sweep.add_argument("--jobs", type=int, default=None,
                       help="parallel workers (default: cpu count)")
    sweep.add_argument("--out", default=None, help="per-cell CSV path")
    sweep.add_argument("--config", default=None, help="key=value config file")

    ver = subs.add_parser("verify", help="re-validate a certificate or a dump")
    ver.add_argument("--cert", default=None, help="certificate JSON to verify")
    ver.add_argument("--dump", default=None, help="coloring dump to verify")
    ver.add_argument("--graph", default=None,
                     help="graph fixture for --dump (default: DUMP.graph)")
    ver.add_argument("--bound", type=float, default=0.05,
                     help="maximum allowed extra-color fraction")
    ver.add_argument("--config", default=None, help="key=value config file")

    return parser


def _tuning_for(args, epsilon=None) -> TuningParams:
    cfg = PaletteConfig(args.r, args.p)
    tuning = default_tuning(cfg, epsilon)
    if args.weight:
        weights = dict(tuning.weights)
        for item in args.weight:
            t, w = _parse_weight(item)
            if t not in weights:
                raise ConfigurationError(f"weight override for unknown type {t}")
            weights[t] = w
        tuning = TuningParams(cfg, weights, epsilon)
    return tuning


def _control_for(args) -> IntegrationControl:
    base = IntegrationControl()
    return IntegrationControl(
        method=args.method if args.method is not None else base.method,
        step=args.step if args.step is not None else base.step,
        max_time=args.max_time if args.max_time is not None else base.max_time,
        sample_stride=base.sample_stride,
        halvings=args.halvings if args.halvings is not None else base.halvings,
    )


def _config_echo(args, keys: list[str]) -> dict:
    out = {}
    for key in keys:
        out[key] = getattr(args, key.replace("-", "_"))
    return out


def _comment_block(config: dict) -> str:
    lines = [f"# {k}={config[k]}" for k in config]
    lines.insert(0, f"# treecolor {__version__}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_certify(args) -> int:
    cfg = PaletteConfig(args.r, args.p)
    tuning = _tuning_for(args)
    control = _control_for(args)
    cert = certify(cfg, tuning, threshold=args.threshold, control=control)
    if args.out:
        save_certificate(cert, args.out)
        print(f"wrote {args.out}")
    if cert.certified:
        print(
            f"certified ({cfg.r},{cfg.p}): R={cert.r:.6f}  "
            f"max g on [0,R]={cert.max_g_on_0_r:.6f}  "
            f"remainder at R={cert.remainder_growth_at_r:.6f}  "
            f"margins g={cert.margin_g:.3e} remainder={cert.margin_remainder:.3e}"
        )
        return EXIT_OK
    print(f"certification failed ({cfg.r},{cfg.p}): "
          f"{cert.diagnostics.get('failure')}")
    for entry in cert.refinements:
        if entry.get("found"):
            print(f"  step {entry['step']:g}: crossing at {entry['r']:.6f}")
        else:
            extra = (f" (growth violation at t={entry['violation_time']:.6f})"
                     if "violation_time" in entry else "")
            print(f"  step {entry['step']:g}: {entry.get('reason')}{extra}")
    return EXIT_FAILURE


def cmd_integrate(args) -> int:
    cfg = PaletteConfig(args.r, args.p)
    tuning = _tuning_for(args)
    control = _control_for(args)
    traj = integrate(cfg, tuning, control, stop_at_remainder_below=args.threshold)
    space = type_space(cfg)
    config = _config_echo(args, ["r", "p", "threshold", "weight"])
    config.update(method=control.method, step=control.step,
                  max_time=control.max_time)
    lines = [_comment_block(config).rstrip("\n")]
    lines.append("time,g,remainder," + ",".join(f"z_{t.d}_{t.c}" for t in space.types))
    for i in range(len(traj.times)):
        row = [repr(float(traj.times[i])), repr(float(traj.g_values[i])),
               repr(float(traj.remainder_values[i]))]
        row += [repr(float(x)) for x in traj.states[i]]
        lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {args.out} ({len(traj.times)} samples)")
    else:
        sys.stdout.write(text)
    if traj.aborted:
        print(f"integration aborted: {traj.abort_reason}")
    if args.threshold is not None:
        result = find_stop_time(traj, args.threshold)
        if result.found:
            print(f"remainder crossed {args.threshold:g} at t={result.time:.6f}")
        else:
            print(f"no crossing: {result.reason}")
    return EXIT_OK


def _resolve_steps(args, epsilon: float):
    """Step count plus the certificate, when one was both given and needed."""
    cert = None
    if args.cert:
        cert = load_certificate(args.cert)
    if args.steps is not None:
        if args.steps < 0:
            raise ConfigurationError(f"steps must be >= 0, got {args.steps}")
        return args.steps, cert
    if cert is None:
        raise ConfigurationError("need --steps or --cert to fix the run length")
    if not cert.certified or cert.r is None:
        raise ConfigurationError(f"{args.cert} is not a certified certificate")
    if (cert.cfg.r, cert.cfg.p) != (args.r, args.p):
        raise ConfigurationError(
            f"certificate is for ({cert.cfg.r},{cert.cfg.p}), "
            f"run is ({args.r},{args.p})"
        )
    return math.ceil(cert.r / epsilon), cert


def _build_graph(args):
    if args.graph_kind == "tree-ball":
        if args.radius is None:
            raise ConfigurationError("tree-ball graphs need --radius")
        return gen_tree_ball(args.r, args.radius)
    if args.n is None:
        raise ConfigurationError("random-regular graphs need --n")
    graph_seed = args.graph_seed if args.graph_seed is not None else args.seed
    return gen_regular_graph(args.n, args.r, seed=graph_seed)


def cmd_simulate(args) -> int:
    if args.epsilon <= 0.0:
        raise ConfigurationError(f"epsilon must be positive, got {args.epsilon}")
    steps, cert = _resolve_steps(args, args.epsilon)
    tuning = _tuning_for(args, epsilon=args.epsilon)
    graph = _build_graph(args)
    state = ColoringState(graph, PaletteConfig(args.r, args.p), seed=args.seed)

    reports, dists = run_phase1(state, tuning, steps, modified=args.modified)
    stats = collect_run_stats(state, args.epsilon, reports, dists)
    comp = component_stats(state)
    completion = complete_remainder(state)
    tidy = tidy_to_proper(state)
    proper = verify_proper(state)

    stats.component_histogram = comp.histogram
    stats.violations = len(proper.violations) + len(proper.red_red)
    stats.failure_counts = {
        "completion": completion.failures,
        "tidy": tidy.failures,
    }
    counts = state.counts()
    extra_fields = {
        # the stats block describes phase 1; these reflect the finished state
        "final_uncolored_frac": counts["uncolored"] / graph.n,
        "final_red_frac": counts["red"] / graph.n,
        "final_extra_frac": counts["extra"] / graph.n,
        "red_before_tidy": tidy.red_before,
        "completion_components": completion.components,
        "completion_colored": completion.colored,
        "tidy_erased": tidy.erased,
        "uncolored_component_count": comp.count,
        "uncolored_component_mean": comp.mean_size,
        "uncolored_component_max": comp.max_size,
        "proper": proper.ok,
        "config": _config_echo(args, [
            "r", "p", "epsilon", "n", "steps", "seed", "graph-seed",
            "graph-kind", "radius", "modified", "weight", "cert",
        ]) | {"resolved_steps": steps},
    }
    if cert is not None and cert.certified:
        extra_fields["trajectory_distance"] = trajectory_distance(stats, cert)

    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(stats_csv(stats))
    text = summary_json(stats, extra_fields=extra_fields)
    if args.summary:
        with open(args.summary, "w", encoding="utf-8") as fh:
            fh.write(text)
    if args.dump:
        write_coloring(state, args.dump)
        with open(args.dump + ".graph", "w", encoding="utf-8") as fh:
            fh.write(write_fixture(graph))
    sys.stdout.write(text)
    if not proper.ok:
        bad = (proper.violations + proper.red_red)[:10]
        print(f"final coloring is NOT proper: {len(bad)}+ bad edges, e.g. {bad}")
        return EXIT_FAILURE
    return EXIT_OK


def _sweep_cell(params: dict) -> dict:
    """One (epsilon, seed) cell; runs in a worker process."""
    cfg = PaletteConfig(params["r"], params["p"])
    tuning = TuningParams(
        cfg,
        {VertexType(*k): v for k, v in params["weights"].items()},
        params["epsilon"],
    )
    graph = gen_regular_graph(params["n"], params["r"], seed=params["graph_seed"])
    state = ColoringState(graph, cfg, seed=params["seed"])
    run_phase1(state, tuning, params["steps"], modified=params["modified"])
    complete_remainder(state)
    counts = state.counts()
    return {
        "epsilon": params["epsilon"],
        "seed": params["seed"],
        "red_frac": counts["red"] / graph.n,
        "uncolored": counts["uncolored"],
        "steps": params["steps"],
    }


def cmd_sweep(args) -> int:
    try:
        epsilons = [float(x) for x in args.epsilons.split(",") if x.strip()]
        seeds = [int(x) for x in args.seeds.split(",") if x.strip()]
    except ValueError:
        raise ConfigurationError(
            "--epsilons and --seeds must be comma-separated numbers"
        ) from None
    if not epsilons or not seeds:
        raise ConfigurationError("need at least one epsilon and one seed")
    cells = []
    for eps in sorted(set(epsilons)):
        if eps <= 0.0:
            raise ConfigurationError(f"epsilon must be positive, got {eps}")
        base = argparse.Namespace(**vars(args), epsilon=eps)
        steps, _ = _resolve_steps(base, eps)
        tuning = _tuning_for(args, epsilon=eps)  # validates eps * max weight
        for seed in sorted(set(seeds)):
            cells.append({
                "r": args.r, "p": args.p, "epsilon": eps, "n": args.n,
                "seed": seed,
                "graph_seed": args.graph_seed if args.graph_seed is not None else seed,
                "steps": steps, "modified": args.modified,
                "weights": {(t.d, t.c): w for t, w in tuning.weights.items()},
            })
    jobs = args.jobs if args.jobs is not None else os.cpu_count() or 1
    jobs = max(1, min(jobs, len(cells)))
    if jobs == 1:
        results = [_sweep_cell(c) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_cell, cells))
    results.sort(key=lambda row: (row["epsilon"], row["seed"]))

    config = _config_echo(args, [
        "r", "p", "epsilons", "seeds", "n", "steps", "cert", "graph-seed",
        "modified", "weight",
    ])
    lines = [_comment_block(config).rstrip("\n"), "epsilon,seed,red_frac,steps"]
    for row in results:
        lines.append(f"{row['epsilon']!r},{row['seed']},{row['red_frac']!r},"
                     f"{row['steps']}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {args.out} ({len(results)} cells)")
    else:
        sys.stdout.write(text)

    by_eps: dict[float, list[float]] = {}
    for row in results:
        by_eps.setdefault(row["epsilon"], []).append(row["red_frac"])
    print("epsilon  mean red fraction")
    for eps in sorted(by_eps):
        print(f"{eps:<8g} {float(np.mean(by_eps[eps])):.6g}")
    means = {eps: float(np.mean(v)) for eps, v in by_eps.items()}
    grid = sorted(means)
    for small, big in zip(grid, grid[1:]):
        if abs(big / small - 2.0) < 1e-9 and means[big] > 0:
            print(f"ratio red({small:g})/red({big:g}) = "
                  f"{means[small] / means[big]:.4f}")
    if len(by_eps) >= 3 and all(len(v) >= 3 for v in by_eps.values()):
        fit = red_scaling([(row["epsilon"], row["red_frac"]) for row in results])
        if fit.degenerate:
            print("red scaling: degenerate (no reds observed)")
        else:
            print(f"red scaling: log-log slope {fit.slope:.4f}")
    return EXIT_OK


def _verify_dump(args) -> int:
    n, r, p, colors = read_coloring(args.dump)
    graph_path = args.graph if args.graph else args.dump + ".graph"
    try:
        with open(graph_path, "r", encoding="utf-8") as fh:
            graph, _ = parse_fixture(fh.read())
    except OSError as exc:
        raise ConfigurationError(f"cannot read graph fixture: {exc}") from None
    if graph.n != n:
        raise ConfigurationError(
            f"dump has {n} vertices but graph has {graph.n}"
        )
    cu = colors[graph.edges_u]
    cv = colors[graph.edges_v]
    clash = np.nonzero(cu == cv)[0]
    extra_frac = float((colors == p).sum()) / n if n else 0.0
    if len(clash):
        print(f"{args.dump}: {len(clash)} violating edges")
        for i in clash[:10]:
            u, v = int(graph.edges_u[i]), int(graph.edges_v[i])
            print(f"  edge ({u},{v}): both colored {int(colors[u])}")
        return EXIT_FAILURE
    print(f"{args.dump}: proper, extra-color fraction {extra_frac:.6g} "
          f"(bound {args.bound:g})")
    if extra_frac > args.bound:
        print(f"extra-color fraction exceeds the bound {args.bound:g}")
        return EXIT_FAILURE
    return EXIT_OK


def cmd_verify(args) -> int:
    if (args.cert is None) == (args.dump is None):
        raise ConfigurationError("verify needs exactly one of --cert or --dump")
    if args.cert:
        cert = load_certificate(args.cert)
        verify_certificate(cert)
        if not cert.certified:
            print(f"{args.cert}: consistent but status is {cert.status!r}")
            return EXIT_FAILURE
        print(
            f"{args.cert}: verified ({cert.cfg.r},{cert.cfg.p}) "
            f"R={cert.r:.6f} margins g={cert.margin_g:.3e} "
            f"remainder={cert.margin_remainder:.3e}"
        )
        return EXIT_OK
    return _verify_dump(args)


_COMMANDS = {
    "certify": cmd_certify,
    "integrate": cmd_integrate,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_expand_config(argv))
        return _COMMANDS[args.mode](args)
    except (ConfigurationError, CertificateParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CertificateVerificationError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except TreecolorError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
