"""Command-line entry point: ``osa-transfer <command> [options]``."""

from __future__ import annotations

import argparse
import sys
import time
from fractions import Fraction

import numpy as np

from . import analytic
from .config import ConfigError, load_scenario
from .learner import run_online
from .model import Scenario, ScenarioError, as_fraction
from .optimizer import POLICY_KINDS, build_ssp_graph, policy_for, solve_mip, solve_policy_iteration
from .plans import InfeasiblePlan
from .simulator import EPISODE_COLUMNS, SimConfig, run_offline_experiment, simulate_batch, spawn, write_csv

ONLINE_COLUMNS = ("replication", "episode", "F_mb", "policy_kind", "chosen_summary", "time_s",
                  "avg_ratio", "avg_throughput", "regret")
SWEEP_COLUMNS = ("scenario", "F_mb", "policy", "analytic_s", "mean_s", "stderr_s", "baseline_s", "cumulative_ratio")


class UsageError(Exception):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def parse_grid(text: str) -> list[Fraction]:
    """``a:step:b`` inclusive, exact decimal steps."""
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError("grid", f"expected a:step:b, got {text!r}")
    try:
        a, step, b = (as_fraction(Fraction(p)) for p in parts)
    except ValueError:
        raise UsageError("grid", f"non-numeric bound in {text!r}") from None
    if a <= 0 or step <= 0 or b < a:
        raise UsageError("grid", "need 0 < a <= b and step > 0")
    n = int((b - a) / step)
    return [a + i * step for i in range(n + 1)]


def _kind(text: str) -> str:
    if text in POLICY_KINDS or text.startswith("static:"):
        if text.startswith("static:") and not text[7:].isdigit():
            raise UsageError("policy", f"bad channel id in {text!r}")
        return text
    raise UsageError("policy", f"unknown policy {text!r}; choose static:<id> or one of {', '.join(POLICY_KINDS)}")


def _scenario(args) -> Scenario:
    scen = load_scenario(args.scenario)
    delay = getattr(args, "switching_delay_ms", None)
    if delay is not None:
        try:
            scen = scen.with_delay(as_fraction(delay) / 1000)
        except ScenarioError as exc:
            raise UsageError("switching-delay-ms", str(exc)) from None
    return scen


def _size(args, scen: Scenario) -> int:
    if args.file_mb is None:
        raise UsageError("file-mb", "a file size is required")
    try:
        return scen.to_quanta(args.file_mb)
    except ValueError as exc:
        raise UsageError("file-mb", str(exc)) from None


def _f(v) -> str:
    return format(float(v), ".6f")


def cmd_expected_time(args) -> None:
    scen = _scenario(args)
    out = []
    if args.threshold:
        out.append(("threshold_H_mb", _f(analytic.threshold_H(scen))))
    if args.file_mb is not None:
        size = _size(args, scen)
        size_mb = scen.to_mb(size)
        channels = [args.channel] if args.channel is not None else list(scen.ids)
        for cid in channels:
            try:
                ch = scen.channel(cid)
            except KeyError:
                raise UsageError("channel", f"no channel {cid} in scenario") from None
            out.append((f"static:{cid}", _f(analytic.channel_static_time(ch, size_mb, scen.slot_seconds))))
        best, t = analytic.static_optimal_channel(scen, size_mb)
        out.append(("static-opt", f"{best} {_f(t)}"))
        if not scen.is_markov:
            out.append(("max-tp_channel", str(analytic.max_throughput_channel(scen, strict=False))))
            out.append(("lower_bound", _f(analytic.dynamic_lower_bound(scen, size_mb))))
            try:
                out.append(("static_ratio_upper", _f(analytic.static_ratio_upper_bound(scen, size_mb))))
                rb = analytic.dynamic_ratio_bounds(scen, size_mb)
                out.append(("dynamic_ratio_bounds", f"{_f(rb.lower)} {_f(rb.upper)}"))
            except (ValueError, analytic.TieError) as exc:
                out.append(("ratio_bounds", f"n/a ({exc})"))
        if args.dynamic or args.policy:
            chosen = policy_for(_kind(args.policy or "dynamic-opt"), scen, size)
            out.append((chosen.kind, f"{_f(chosen.expected)} plan={chosen.plan.summary()}"))
    if not out:
        raise UsageError("file-mb", "give --file-mb and/or --threshold")
    for key, val in out:
        print(f"{key}\t{val}")


def cmd_policy(args) -> None:
    scen = _scenario(args)
    size = _size(args, scen)
    kinds = [_kind(k) for k in (args.policy or ["dynamic-opt"])]
    rows = []
    for kind in kinds:
        chosen = policy_for(kind, scen, size)
        rows.append((kind, float(scen.to_mb(size)), chosen.plan.summary(), float(chosen.expected),
                     chosen.plan.length, chosen.plan.switches))
    cols = ("policy", "F_mb", "plan", "expected_s", "transmissions", "switches")
    write_csv(args.out or sys.stdout, cols, rows)


def cmd_sweep(args) -> None:
    scen = _scenario(args)
    grid = parse_grid(args.grid)
    kinds = [_kind(k) for k in (args.policy or POLICY_KINDS)]
    mode = "simulate" if args.reps else "analytic"
    cfg = SimConfig(seed=args.seed, replications=args.reps or 1)
    rows = run_offline_experiment(scen, kinds, grid, cfg, mode=mode)
    write_csv(args.out or sys.stdout, SWEEP_COLUMNS,
              [(scen.name, r.size_mb, r.policy, r.analytic if r.analytic is not None else "",
                r.mean if r.mean is not None else "", r.stderr if r.stderr is not None else "",
                r.baseline, r.cumulative_ratio) for r in rows])


def cmd_simulate(args) -> None:
    scen = _scenario(args)
    size = _size(args, scen)
    kinds = [_kind(k) for k in (args.policy or ["dynamic-opt"])]
    rows = []
    for kind in kinds:
        chosen = policy_for(kind, scen, size)
        res = simulate_batch(scen, chosen.rule, size, args.reps, spawn(args.seed, 0))
        print(f"{kind}\tmean={res.mean:.6f}\tstderr={res.stderr:.6f}\tanalytic={_f(chosen.expected)}",
              file=sys.stderr)
        for r in range(args.reps):
            rows.append((scen.name, kind, float(scen.to_mb(size)), r, args.seed,
                         float(res.times[r]), int(res.slots[r]), int(res.switches[r])))
    write_csv(args.out or sys.stdout, EPISODE_COLUMNS, rows)


def cmd_online(args) -> None:
    scen = _scenario(args)
    kinds = [_kind(k) for k in (args.policy or ["dynamic-opt", "heuristic", "static-opt", "max-tp"])]
    if any(k.startswith("static:") for k in kinds):
        raise UsageError("policy", "online runs use learned policies, not a fixed channel")
    if args.episodes <= len(scen.channels):
        raise UsageError("episodes", f"need more episodes than channels ({len(scen.channels)})")
    runs = run_online(scen, kinds, args.episodes, args.reps, seed=args.seed, max_mb=args.max_mb)
    q = float(scen.quantum)
    rows = []
    for run in runs:
        ratio = run.result.ratio_curve()
        tput = run.result.throughput_curve(q)
        for n, rec in enumerate(run.result.records):
            rows.append((run.replication, rec.episode, rec.size * q, run.kind, rec.summary, rec.time,
                         float(ratio[n]), float(tput[n]), float(run.regret[n])))
    write_csv(args.out or sys.stdout, ONLINE_COLUMNS, rows)
    for kind in kinds:
        sel = [r for r in runs if r.kind == kind]
        print(f"{kind}\tavg_ratio={np.mean([r.result.ratio_curve()[-1] for r in sel]):.4f}"
              f"\tavg_throughput={np.mean([r.result.throughput_curve(q)[-1] for r in sel]):.4f}"
              f"\tregret={np.mean([r.regret[-1] for r in sel]):.4f}", file=sys.stderr)


def bench(scen: Scenario, sizes: list[int]) -> dict:
    """Wall-clock totals of graph build + policy iteration versus branch-and-bound."""
    graph_t = mip_t = 0.0
    nodes = []
    for size in sizes:
        t0 = time.perf_counter()
        graph = build_ssp_graph(scen, size)
        _, v_pi = solve_policy_iteration(scen, size, graph=graph)
        t1 = time.perf_counter()
        sol, _ = solve_mip(scen, size)
        t2 = time.perf_counter()
        if sol.objective != v_pi:
            raise AssertionError(f"solvers disagree at {size} quanta")
        graph_t += t1 - t0
        mip_t += t2 - t1
        nodes.append(len(graph.nodes))
    return {"graph_s": graph_t, "mip_s": mip_t, "nodes": nodes}


def cmd_bench(args) -> int:
    scen = _scenario(args)
    rng = spawn(args.seed, 0)
    sizes = [scen.to_quanta(Fraction(float(v)).limit_denominator(10**6)) for v in args.max_mb * (1 - rng.random(args.files))]
    res = bench(scen, sizes)
    big = max(sizes)
    n1 = len(build_ssp_graph(scen, big).nodes)
    n2 = len(build_ssp_graph(scen, 2 * big).nodes)
    print(f"files\t{len(sizes)}")
    print(f"graph+policy_iteration_s\t{res['graph_s']:.4f}")
    print(f"mip_s\t{res['mip_s']:.4f}")
    print(f"graph_nodes_F\t{n1}\t(F={float(scen.to_mb(big)):.3f} Mb)")
    print(f"graph_nodes_2F\t{n2}")
    tiny = min(float(ch.rate) for ch in scen.channels) * float(scen.slot_seconds)
    if all(float(scen.to_mb(s)) < tiny for s in sizes):
        print("ordering\tskipped (degenerate batch)")
        return 0
    ok = res["mip_s"] < res["graph_s"]
    print(f"ordering\t{'ok' if ok else 'violated'}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="osa-transfer", description="File transfer over opportunistic channels.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, size=True):
        sp.add_argument("--scenario", required=True, help="preset name (gradual, steep, lossy) or YAML path")
        sp.add_argument("--switching-delay-ms", type=float, default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None, help="CSV path (stdout when omitted)")
        if size:
            sp.add_argument("--file-mb", default=None)

    sp = sub.add_parser("expected-time", help="closed-form expected times and bounds")
    common(sp)
    sp.add_argument("--channel", type=int, default=None)
    sp.add_argument("--policy", default=None)
    sp.add_argument("--threshold", action="store_true")
    sp.add_argument("--dynamic", action="store_true", help="also solve for the dynamic optimum")
    sp.set_defaults(func=cmd_expected_time)

    sp = sub.add_parser("policy", help="plan for one file")
    common(sp)
    sp.add_argument("--policy", action="append")
    sp.set_defaults(func=cmd_policy)

    sp = sub.add_parser("sweep", help="expected and simulated times over a size grid")
    common(sp, size=False)
    sp.add_argument("--grid", required=True, help="a:step:b in Mb")
    sp.add_argument("--policy", action="append")
    sp.add_argument("--reps", type=int, default=0, help="0 gives analytic values only")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("simulate", help="Monte-Carlo transfers of one file")
    common(sp)
    sp.add_argument("--policy", action="append")
    sp.add_argument("--reps", type=int, default=1000)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("online", help="learning with unknown availabilities")
    common(sp, size=False)
    sp.add_argument("--policy", action="append")
    sp.add_argument("--episodes", type=int, default=2000)
    sp.add_argument("--reps", type=int, default=50)
    sp.add_argument("--max-mb", type=float, default=7.0)
    sp.set_defaults(func=cmd_online)

    sp = sub.add_parser("bench", help="solver timing comparison")
    common(sp, size=False)
    sp.add_argument("--files", type=int, default=10)
    sp.add_argument("--max-mb", type=float, default=7.0)
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for name in ("reps", "episodes", "files"):
        if getattr(args, name, 1) is not None and getattr(args, name, 1) < 0:
            print(f"error: {name}: must be non-negative", file=sys.stderr)
            return 2
    try:
        code = args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ScenarioError, InfeasiblePlan, analytic.TieError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
