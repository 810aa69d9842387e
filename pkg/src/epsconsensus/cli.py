"""Command-line entry point.

Exit codes: 0 success, 1 assertion failure (or "outside" for membership),
2 input error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import analysis as an
from .disturbance import Box
from .lp import LPError
from .polyhedra import (PolyhedronError, PolyhedronSpec, epsilon_bar, membership,
                        pairwise_maxima, tube_radius_L)
from .scenario_io import ScenarioDocument, ScenarioFileError, load_scenario, load_topology
from .simulator import IntegrationError, ScenarioError, Trajectory, integrate
from .topology import Topology, active_edgeset

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2, 3
EXAMPLES = ("example1", "example3", "example4")
RESULT_FIELDS = ["scenario", "agents", "mode", "step", "horizon", "epsilon", "achieved", "entry_time",
                 "final_spread", "in_PDE", "equilibrium_time", "runtime_s"]


class InputError(ValueError):
    pass


def bundled_scenario(name: str) -> Path:
    path = resources.files("epsconsensus") / "scenarios" / f"{name}.scenario"
    if not path.is_file():
        raise InputError(f"no bundled scenario named {name!r}")
    return Path(str(path))


def _overrides(args) -> dict:
    return {"step": args.step, "horizon": args.horizon, "mode": args.mode, "seed": args.seed,
            "stop_at_equilibrium": args.stop_at_equilibrium}


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _summary(doc: ScenarioDocument, traj: Trajectory, epsilon: Optional[float]) -> tuple[list[str], dict]:
    sc = doc.scenario
    topo = sc.topology
    if epsilon is None:
        epsilon = doc.epsilon
    source = "given"
    if epsilon is None:
        k_end = active_edgeset(sc.signal, sc.horizon)
        epsilon = epsilon_bar(topo, k_end, sc.xi) / 2
        source = f"epsilon_bar_E{k_end}"
    rep = an.consensus_report(traj, epsilon, topo, sc.xi)
    lines = [f"agents={topo.n}", f"mode={sc.mode}", f"step={_fmt(sc.step)}", f"horizon={_fmt(sc.horizon)}",
             f"xi={_fmt(sc.xi)}", f"epsilon_source={source}"] + rep.lines()
    if sc.disturbance.kind == "constant":
        d = sc.disturbance.values[0]
        for k in range(1, topo.num_edgesets + 1):
            inside = membership(PolyhedronSpec.constant(topo, k, sc.xi, d), traj.final).inside
            lines.append(f"in_Pd_E{k}={_fmt(inside)}")
    lines += [f"final_state={','.join(f'{v:.17g}' for v in traj.final)}",
              f"equilibrium_time={_fmt(traj.equilibrium_time)}"]
    row = {"agents": topo.n, "mode": sc.mode, "step": sc.step, "horizon": sc.horizon, "epsilon": rep.epsilon,
           "achieved": rep.achieved, "entry_time": rep.entry_time, "final_spread": rep.final_spread,
           "in_PDE": rep.in_pde, "equilibrium_time": traj.equilibrium_time}
    return lines, row


def _simulate_one(job: tuple) -> tuple[int, str, dict]:
    """Worker: returns (exit code, text, results row). Never raises."""
    path, out, overrides, epsilon = job
    try:
        doc = load_scenario(path, overrides)
    except (ScenarioFileError, ScenarioError) as exc:
        return EXIT_INPUT, f"error: {exc}\n", {}
    try:
        t0 = time.perf_counter()
        traj = integrate(doc.scenario)
        elapsed = time.perf_counter() - t0
        if out is not None:
            traj.write_csv(out)
        lines, row = _summary(doc, traj, epsilon)
    except IntegrationError as exc:
        return EXIT_RUNTIME, f"error: {path}: integration failed: {exc}\n", {}
    except (PolyhedronError, LPError) as exc:
        return EXIT_RUNTIME, f"error: {path}: {exc}\n", {}
    except OSError as exc:
        return EXIT_INPUT, f"error: cannot write {out}: {exc.strerror}\n", {}
    row.update(scenario=str(path), runtime_s=elapsed)
    text = "\n".join([f"scenario={path}"] + ([f"output={out}"] if out else []) + lines
                     + [f"runtime_s={elapsed:.6f}"]) + "\n"
    return EXIT_OK, text, row


def cmd_simulate(args) -> int:
    paths = [Path(p) for p in args.scenario]
    if args.output is None:
        outs = [None] * len(paths)
    elif len(paths) == 1 and not args.output.endswith("/"):
        outs = [Path(args.output)]
    else:
        outdir = Path(args.output)
        outdir.mkdir(parents=True, exist_ok=True)
        stems = [p.stem for p in paths]
        if len(set(stems)) != len(stems):
            raise InputError("scenario file names collide in the output directory")
        outs = [outdir / f"{s}.csv" for s in stems]
    jobs = [(p, o, _overrides(args), args.epsilon) for p, o in zip(paths, outs)]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_simulate_one, jobs))
    else:
        results = [_simulate_one(j) for j in jobs]
    for code, text, _ in results:
        (sys.stdout if code == EXIT_OK else sys.stderr).write(text)
    if args.results:
        with open(args.results, "w", newline="") as fh:
            w = csv.DictWriter(fh, RESULT_FIELDS, lineterminator="\n")
            w.writeheader()
            for code, _, row in results:
                if code == EXIT_OK:
                    w.writerow({k: _fmt(v) for k, v in row.items()})
    return max(code for code, _, _ in results)


def _topology_and_xi(args) -> tuple[Topology, float]:
    topo, xi = load_topology(args.path)
    if args.xi is not None:
        xi = args.xi
    if xi is None:
        xi = 1.0
    if not xi > 0:
        raise InputError("xi must be positive")
    if not 1 <= args.edgeset <= topo.num_edgesets:
        raise InputError(f"edgeset index {args.edgeset} out of range 1..{topo.num_edgesets}")
    return topo, xi


def cmd_epsilon_bound(args) -> int:
    topo, xi = _topology_and_xi(args)
    t0 = time.perf_counter()
    pairs = pairwise_maxima(PolyhedronSpec.full(topo, args.edgeset, xi))
    value = max(pairs.values())
    elapsed = time.perf_counter() - t0
    print(f"edgeset={args.edgeset}\nxi={_fmt(xi)}\nlp_solves={len(pairs)}")
    print(f"epsilon_bar_spread={value:.12g}\nepsilon_bar_radius={value / 2:.12g}")
    if args.verbose:
        for (i, j), v in sorted(pairs.items()):
            print(f"pair_{i}_{j}={v:.12g}")
    print(f"runtime_s={elapsed:.6f}")
    return EXIT_OK


def _spec(args, topo: Topology, xi: float) -> PolyhedronSpec:
    if args.kind == "full":
        return PolyhedronSpec.full(topo, args.edgeset, xi)
    if args.kind == "box":
        if args.box_lower is None or args.box_upper is None:
            raise InputError("box kind needs --box-lower and --box-upper")
        return PolyhedronSpec.from_box(topo, args.edgeset, Box.uniform(topo.n, args.box_lower, args.box_upper, xi))
    doc = load_scenario(args.path)
    if doc.scenario.disturbance.kind != "constant":
        raise InputError("constant kind needs a scenario with a constant disturbance")
    return PolyhedronSpec.constant(topo, args.edgeset, xi, doc.scenario.disturbance.values[0])


def cmd_tube_radius(args) -> int:
    topo, xi = _topology_and_xi(args)
    if args.kind == "constant":
        raise InputError("tube radius is defined for box and full kinds")
    spec = _spec(args, topo, xi)
    t0 = time.perf_counter()
    L = tube_radius_L(spec)
    print(f"edgeset={args.edgeset}\nkind={args.kind}\nxi={_fmt(xi)}")
    print(f"L_spread={L:.12g}\nL_radius={L / 2:.12g}")
    if args.nu is not None:
        print(f"tube_spread_bound={L + 2 * args.nu:.12g}")
    print(f"runtime_s={time.perf_counter() - t0:.6f}")
    return EXIT_OK


def cmd_membership(args) -> int:
    topo, xi = _topology_and_xi(args)
    try:
        x = np.array([float(v) for v in args.point.split(",")])
    except ValueError:
        raise InputError("--point must be comma-separated numbers") from None
    if x.size != topo.n or not np.all(np.isfinite(x)):
        raise InputError(f"--point must list {topo.n} finite numbers")
    m = membership(_spec(args, topo, xi), x, args.tol)
    print(f"edgeset={args.edgeset}\nkind={args.kind}\ninside={_fmt(m.inside)}")
    print(f"min_slack={float(m.slack.min()):.12g}")
    if args.verbose:
        for i, (g, s) in enumerate(zip(m.gaps, m.slack), start=1):
            print(f"gap_{i}={g:.12g} slack_{i}={s:.12g}")
    return EXIT_OK if m.inside else EXIT_FAIL


# -- example reproduction ---------------------------------------------------------

Check = tuple[str, bool, str]


def _run_bundled(name: str, args) -> Trajectory:
    doc = load_scenario(bundled_scenario(name), _overrides(args))
    return integrate(doc.scenario)


def check_example1(args) -> list[Check]:
    naive = _run_bundled("example1_naive", args)
    lazy = _run_bundled("example1_lazy", args)
    w = (naive.t >= 10) & (naive.t <= 50)
    floor = float(np.abs(naive.u[w]).max(axis=1).min()) if w.any() else float("nan")
    final_u = float(np.abs(lazy.u[-1]).max())
    return [("naive_control_bounded_away_from_zero", floor >= 0.1, f"min_inf_norm_u={floor:.6g}"),
            ("lazy_control_vanishes", final_u < 1e-6, f"final_inf_norm_u={final_u:.3g}")]


X_STAR = np.array([63.0, 61, 55, 45, 39, 37])


def check_example3(args) -> list[Check]:
    t0 = time.perf_counter()
    tr = _run_bundled("example3", args)
    elapsed = time.perf_counter() - t0
    err = float(np.abs(tr.final - X_STAR).max())
    early = tr.t <= 0.5 + 1e-12
    dev = float(np.abs(tr.spread[early] - 100.0).max())
    return [("final_state_near_x_star", err <= 0.5, f"max_abs_error={err:.6g}"),
            ("final_spread_26", abs(tr.spread[-1] - 26) <= 0.5, f"final_spread={tr.spread[-1]:.6g}"),
            ("spread_plateau_until_0.5s", dev <= 1e-3, f"max_deviation={dev:.6g}"),
            ("runtime_under_5s", elapsed < 5.0, f"runtime_s={elapsed:.3f}")]


def example4_checks(tr: Trajectory, topo: Topology, xi: float, segment: float = 10.0) -> list[Check]:
    tail = tr.t >= tr.t[-1] - 4 * segment - 1e-9
    x = tr.x[tail]
    fixed = float(max(np.abs(x[:, 0] - 2).max(), np.abs(x[:, 1]).max()))
    lo, hi = float(x[:, 2].min()), float(x[:, 2].max())
    rep = an.consensus_report(tr, 0.5, topo, xi)
    return [("agents_1_2_fixed", fixed <= 0.05, f"max_deviation={fixed:.3g}"),
            ("agent_3_oscillates", hi - lo >= 1.5 and lo >= -0.05 and hi <= 2.05, f"range=[{lo:.4g},{hi:.4g}]"),
            ("no_consensus_at_0.5", not rep.achieved, f"achieved={_fmt(rep.achieved)}")]


def check_example4(args) -> list[Check]:
    doc = load_scenario(bundled_scenario("example4"), _overrides(args))
    tr = integrate(doc.scenario)
    return example4_checks(tr, doc.scenario.topology, doc.scenario.xi)


CHECKS: dict[str, Callable] = {"example1": check_example1, "example3": check_example3, "example4": check_example4}


def cmd_reproduce(args) -> int:
    if args.example not in CHECKS:
        raise InputError(f"unknown example {args.example!r}; choose from {', '.join(EXAMPLES)}")
    checks = CHECKS[args.example](args)
    for name, ok, detail in checks:
        print(f"{args.example}.{name}={'pass' if ok else 'fail'} {detail}")
    passed = all(ok for _, ok, _ in checks)
    print(f"result={'pass' if passed else 'fail'}")
    return EXIT_OK if passed else EXIT_FAIL


# -- argument parsing -------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_INPUT)


def _positive(v: str) -> float:
    x = float(v)
    if not x > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return x


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="epscons", description="epsilon-consensus simulation and analysis")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def run_flags(sp):
        sp.add_argument("--step", type=_positive)
        sp.add_argument("--horizon", type=_positive)
        sp.add_argument("--mode", choices=["lazy", "naive"])
        sp.add_argument("--seed", type=int)
        sp.add_argument("--stop-at-equilibrium", action="store_true")
        sp.add_argument("--verbose", action="store_true")

    s = sub.add_parser("simulate", help="integrate scenario files and write trajectory CSVs")
    s.add_argument("scenario", nargs="+")
    s.add_argument("-o", "--output", help="CSV path (one scenario) or directory")
    s.add_argument("--results", help="write one results row per scenario to this CSV")
    s.add_argument("--epsilon", type=float, help="tube radius for the consensus report")
    s.add_argument("--jobs", type=int, default=1)
    run_flags(s)
    s.set_defaults(func=cmd_simulate)

    def poly_flags(sp, kinds):
        sp.add_argument("path", help="scenario or topology file")
        sp.add_argument("--edgeset", type=int, default=1)
        sp.add_argument("--xi", type=_positive)
        sp.add_argument("--kind", choices=kinds, default="full")
        sp.add_argument("--box-lower", type=float)
        sp.add_argument("--box-upper", type=float)
        sp.add_argument("--verbose", action="store_true")

    e = sub.add_parser("epsilon-bound", help="largest spread over the full equilibrium polyhedron")
    e.add_argument("path")
    e.add_argument("--edgeset", type=int, default=1)
    e.add_argument("--xi", type=_positive)
    e.add_argument("--verbose", action="store_true")
    e.set_defaults(func=cmd_epsilon_bound)

    t = sub.add_parser("tube-radius", help="largest spread over a box or full polyhedron")
    poly_flags(t, ["full", "box"])
    t.add_argument("--nu", type=_positive)
    t.set_defaults(func=cmd_tube_radius)

    m = sub.add_parser("membership", help="exit 0 if the point is an admissible equilibrium, else 1")
    poly_flags(m, ["full", "box", "constant"])
    m.add_argument("--point", required=True, help="comma-separated state vector")
    m.add_argument("--tol", type=float)
    m.set_defaults(func=cmd_membership)

    r = sub.add_parser("reproduce", help="rerun a bundled example and check its claims")
    r.add_argument("example")
    run_flags(r)
    r.set_defaults(func=cmd_reproduce)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        sys.stderr.write("error: --jobs must be at least 1\n")
        return EXIT_INPUT
    try:
        return args.func(args)
    except (InputError, ScenarioFileError, ScenarioError, IndexError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except (IntegrationError, PolyhedronError, LPError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
